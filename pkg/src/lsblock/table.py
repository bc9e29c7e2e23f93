"""The map from rectangles to effective potentials, and the Hamiltonian it encodes."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterator, Mapping, Optional

import numpy as np
import scipy.sparse as sp

from .geometry import INITIAL, LatticeSpec, Rectangle, StepIndex, order_cmp
from .operators import DENSE_LIMIT, SiteBasis, embed_matrix


@dataclass(frozen=True, eq=False)
class PotentialTable:
    """Effective potentials after a given step.

    Single-site keys hold the on-site Hamiltonians; every other key holds a
    potential that enters the Hamiltonian multiplied by ``t``. Absent keys
    are zero. Arrays are never modified in place, so tables from different
    steps may share them.
    """

    lattice: LatticeSpec
    basis: SiteBasis
    t: float
    step: StepIndex = INITIAL
    entries: Mapping[Rectangle, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = self.basis.site_dim
        for rect, m in self.entries.items():
            if not self.lattice.contains(rect):
                raise ValueError(f"{rect} lies outside the lattice")
            if m.shape != (n**rect.n_sites,) * 2:
                raise ValueError(f"entry for {rect} has shape {m.shape}")
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))

    def get(self, rect: Rectangle) -> Optional[np.ndarray]:
        return self.entries.get(rect)

    def keys(self) -> list[Rectangle]:
        return sorted(self.entries, key=functools.cmp_to_key(order_cmp))

    def interaction_items(self) -> Iterator[tuple[Rectangle, np.ndarray]]:
        for rect in self.keys():
            if rect.size >= 1:
                yield rect, self.entries[rect]

    def evolve(self, step: StepIndex, entries: Mapping[Rectangle, np.ndarray]) -> "PotentialTable":
        return PotentialTable(self.lattice, self.basis, self.t, step, entries)


def reconstruct(table: PotentialTable, sparse: Optional[bool] = None):
    """``sum_i H_i + t sum_{|k|>=1} V_J`` on the full lattice."""
    lat, n = table.lattice, table.basis.site_dim
    dim = n**lat.n_sites
    if sparse is None:
        sparse = dim > DENSE_LIMIT
    sites = lat.sites()
    total = sp.csr_matrix((dim, dim)) if sparse else np.zeros((dim, dim))
    for rect in table.keys():
        coeff = 1.0 if rect.size == 0 else table.t
        if coeff == 0.0:
            continue
        total = total + coeff * embed_matrix(table.entries[rect], rect.sites(), sites, n, sparse)
    return total
