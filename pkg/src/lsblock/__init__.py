"""Local Lie-Schwinger block diagonalization of lattice Hamiltonians."""

__version__ = "0.1.0"
