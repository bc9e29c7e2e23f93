"""On-site models and nearest-neighbour initial potentials."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .geometry import LatticeSpec, Rectangle
from .operators import (
    DENSE_LIMIT,
    LocalOperator,
    SiteBasis,
    embed_matrix,
    weighted_norm,
)
from .table import PotentialTable, reconstruct

PHI4 = "harmonic_phi4"
CUSTOM = "custom_diagonal_H_with_coupling"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str = PHI4
    n_s: int = 4
    oscillator_basis_size: int = 60
    coupling_normalization: float = 0.5
    # only used by the custom kind
    energies: Optional[tuple[float, ...]] = None
    coupling: Optional[tuple[tuple[float, ...], ...]] = None

    def __post_init__(self) -> None:
        if self.kind not in (PHI4, CUSTOM):
            raise ModelError(f"unknown model kind {self.kind!r}")
        if self.n_s < 2:
            raise ModelError("n_s must be >= 2")
        if self.kind == PHI4 and self.n_s > self.oscillator_basis_size:
            raise ModelError("oscillator_basis_size must be >= n_s")
        if not 0.0 < self.coupling_normalization <= 1.0:
            raise ModelError("coupling_normalization must lie in (0, 1]")
        if self.kind == CUSTOM:
            if self.energies is None or self.coupling is None:
                raise ModelError("custom model needs energies and coupling")
            if len(self.energies) != self.n_s or np.shape(self.coupling) != (self.n_s, self.n_s):
                raise ModelError("custom model arrays must match n_s")


@dataclass(frozen=True, eq=False)
class InitialData:
    basis: SiteBasis
    pair_potentials: dict[int, LocalOperator]
    normalization_report: dict = field(default_factory=dict)


def oscillator_matrices(size: int) -> tuple[np.ndarray, np.ndarray]:
    """Position ``x = (a + a^+)/sqrt 2`` and ``p^2`` in the first ``size`` oscillator states.

    Powers are formed in a padded basis before truncating, so the returned
    ``x^2``-type products carry exact matrix elements.
    """
    pad = size + 4
    off = np.sqrt(np.arange(1, pad) / 2.0)
    x = np.diag(off, 1) + np.diag(off, -1)
    # p = i (a^+ - a)/sqrt 2, so p^2 = -(a^+ - a)^2 / 2
    a_dag_minus_a = np.diag(off, -1) - np.diag(off, 1)
    p2 = -(a_dag_minus_a @ a_dag_minus_a)
    return x, p2


def anharmonic_levels(size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Eigenpairs of ``p^2 + x^2 + x^4`` in an oscillator basis of ``size`` states.

    Returns ``(energies, vectors, x)`` with ``x`` the truncated position matrix.
    """
    x, p2 = oscillator_matrices(size)
    x2 = x @ x
    h = (p2 + x2 + x2 @ x2)[:size, :size]
    vals, vecs = np.linalg.eigh(h)
    # deterministic sign: largest component positive
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(size)])
    vecs = vecs * signs[None, :]
    return vals, vecs, x[:size, :size]


def normalized_basis(raw_levels: np.ndarray) -> np.ndarray:
    """Shift the lowest level to 0 and scale so the first gap is 1."""
    raw = np.asarray(raw_levels, dtype=float)
    e = (raw - raw[0]) / (raw[1] - raw[0])
    e[0], e[1] = 0.0, 1.0
    return e


def build_phi4_site(spec: ModelSpec) -> SiteBasis:
    """Normalized anharmonic site with the position operator in the kept eigenbasis."""
    if spec.oscillator_basis_size < spec.n_s:
        raise ModelError("oscillator basis smaller than requested truncation")
    vals, vecs, x = anharmonic_levels(spec.oscillator_basis_size)
    kept = vecs[:, : spec.n_s]
    position = kept.T @ x @ kept
    position = (position + position.T) / 2
    return SiteBasis(normalized_basis(vals[: spec.n_s]), position)


def build_custom_site(spec: ModelSpec) -> SiteBasis:
    e = np.asarray(spec.energies, dtype=float)
    if np.any(np.diff(e) < 0):
        raise ModelError("custom energies must be ascending")
    c = np.asarray(spec.coupling, dtype=float)
    if not np.allclose(c, c.T, atol=1e-12):
        raise ModelError("custom coupling must be symmetric")
    return SiteBasis(e, c)


def bond(orientation: int, d: int, corner: Optional[tuple[int, ...]] = None) -> Rectangle:
    """The bond ``J_{1_j, q}`` along axis ``orientation`` (1-based)."""
    k = tuple(1 if j == orientation - 1 else 0 for j in range(d))
    return Rectangle(k, corner or (1,) * d)


def normalize_pair(w: np.ndarray, basis: SiteBasis, support: Rectangle, target: float) -> np.ndarray:
    """Rescale ``w`` so its weighted norm on ``support`` equals ``target``."""
    current = weighted_norm(LocalOperator(support, w), support, basis)
    if current == 0.0:
        raise ModelError("pair potential vanishes")
    return w * (target / current)


def build_pair_potential(basis: SiteBasis, orientation: int, d: int, target: float = 0.5) -> LocalOperator:
    """``x (x) x`` on a bond, rescaled to weighted norm ``target``."""
    if basis.position is None:
        raise ModelError("site basis carries no position operator")
    support = bond(orientation, d)
    w = np.kron(basis.position, basis.position)
    w = normalize_pair((w + w.T) / 2, basis, support, target)
    return LocalOperator(support, w, hermitian=True)


def build_initial_data(spec: ModelSpec, d: int) -> InitialData:
    basis = build_phi4_site(spec) if spec.kind == PHI4 else build_custom_site(spec)
    pairs = {
        j: build_pair_potential(basis, j, d, spec.coupling_normalization)
        for j in range(1, d + 1)
    }
    report = {
        "kind": spec.kind,
        "site_energies": [float(v) for v in basis.energies],
        "coupling_normalization": spec.coupling_normalization,
        "achieved_weighted_norm": {
            str(j): weighted_norm(op, op.support, basis) for j, op in pairs.items()
        },
        "vacuum_expectation": {str(j): float(op.matrix[0, 0]) for j, op in pairs.items()},
    }
    if spec.kind == PHI4:
        vals, _, _ = anharmonic_levels(spec.oscillator_basis_size)
        report["raw_ground_energy"] = float(vals[0])
        report["raw_gap"] = float(vals[1] - vals[0])
    return InitialData(basis, pairs, report)


def _bond_orientation(rect: Rectangle) -> int:
    return rect.k.index(1) + 1


def initial_table(lattice: LatticeSpec, data: InitialData, t: float) -> PotentialTable:
    """Single sites carry ``H_i``, bonds carry the pair potential, the rest is zero."""
    entries: dict[Rectangle, np.ndarray] = {}
    for site in lattice.sites():
        entries[Rectangle.site(site)] = data.basis.hamiltonian
    for b in lattice.bonds():
        entries[b] = data.pair_potentials[_bond_orientation(b)].matrix
    return PotentialTable(lattice, data.basis, float(t), entries=entries)


def assemble_hamiltonian(lattice: LatticeSpec, data: InitialData, t: float, sparse: Optional[bool] = None):
    """``K = sum_i H_i + t sum_bonds V_bond`` with open boundaries."""
    if abs(t) >= 1:
        raise ModelError("coupling must satisfy |t| < 1")
    n = data.basis.site_dim
    dim = n**lattice.n_sites
    if sparse is None:
        sparse = dim > DENSE_LIMIT
    sites = lattice.sites()
    k = sp.csr_matrix((dim, dim)) if sparse else np.zeros((dim, dim))
    h = data.basis.hamiltonian
    for s in sites:
        k = k + embed_matrix(h, [s], sites, n, sparse)
    for b in lattice.bonds():
        w = data.pair_potentials[_bond_orientation(b)].matrix
        k = k + t * embed_matrix(w, b.sites(), sites, n, sparse)
    return k


__all__ = [
    "ModelSpec",
    "InitialData",
    "build_phi4_site",
    "build_custom_site",
    "build_pair_potential",
    "build_initial_data",
    "initial_table",
    "assemble_hamiltonian",
    "reconstruct",
]
