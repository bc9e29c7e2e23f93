"""Tensor-product operator algebra on rectangles of a truncated lattice.

Every rectangle's Hilbert space is the tensor product of one ``n_s``
dimensional factor per site, sites taken in lexicographic coordinate
order. Basis index 0 of each factor is the site vacuum, so the product
vacuum is basis vector 0 of any region.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .geometry import LatticeSpec, Rectangle

DENSE_LIMIT = 4096
HERMITIAN_TOL = 1e-12

Coord = tuple[int, ...]


class OperatorError(ValueError):
    pass


class ContainmentError(OperatorError):
    pass


class NotAntiHermitianError(OperatorError):
    pass


@dataclass(frozen=True, eq=False)
class SiteBasis:
    """Truncated on-site Hamiltonian in its own eigenbasis.

    ``energies`` is the diagonal of ``H``: ``energies[0] == 0`` and every
    other entry is at least 1. ``position`` optionally holds the site
    position operator in the same basis.
    """

    energies: np.ndarray
    position: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        e = np.asarray(self.energies, dtype=float)
        object.__setattr__(self, "energies", e)
        if e.ndim != 1 or e.size < 2:
            raise OperatorError("site basis needs at least two levels")
        if e[0] != 0.0 or np.any(e[1:] < 1.0 - 1e-12):
            raise OperatorError(f"site energies must be 0 then >= 1, got {e}")

    @property
    def site_dim(self) -> int:
        return self.energies.size

    @property
    def hamiltonian(self) -> np.ndarray:
        return np.diag(self.energies)

    @property
    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.site_dim)
        v[0] = 1.0
        return v


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """Dense matrix acting on the tensor factor of ``support``."""

    support: Rectangle
    matrix: np.ndarray = field(repr=False)
    hermitian: bool = False

    def __post_init__(self) -> None:
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise OperatorError("operator matrix must be square")
        if self.hermitian:
            scale = max(np.linalg.norm(m), 1.0)
            if np.linalg.norm(m - m.conj().T) > HERMITIAN_TOL * scale:
                raise OperatorError("operator flagged Hermitian is not")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def region_sites(region: Union[Rectangle, LatticeSpec]) -> list[Coord]:
    return region.sites()


@functools.lru_cache(maxsize=4096)
def _embedding_index(
    sub_sites: tuple[Coord, ...], sites: tuple[Coord, ...], n: int
) -> np.ndarray:
    pos = {s: i for i, s in enumerate(sites)}
    missing = [s for s in sub_sites if s not in pos]
    if missing:
        raise ContainmentError(f"sites {missing} are outside the target region")
    sub = set(sub_sites)
    ordered = list(sub_sites) + [s for s in sites if s not in sub]
    where = {s: i for i, s in enumerate(ordered)}
    axes = [where[s] for s in sites]
    m = len(sites)
    idx = np.arange(n**m).reshape((n,) * m).transpose(axes).ravel()
    idx.setflags(write=False)
    return idx


def embed_matrix(
    matrix, sub_sites: Sequence[Coord], sites: Sequence[Coord], n: int, sparse: bool = False
):
    """Kronecker-embed ``matrix`` on ``sub_sites`` into the space of ``sites``."""
    sub_sites, sites = tuple(sub_sites), tuple(sites)
    if n ** len(sub_sites) != matrix.shape[0]:
        raise OperatorError("matrix dimension does not match its support")
    if sub_sites == sites:
        return sp.csr_matrix(matrix) if sparse else np.array(matrix)
    idx = _embedding_index(sub_sites, sites, n)
    rest = n ** (len(sites) - len(sub_sites))
    if sparse:
        big = sp.kron(sp.csr_matrix(matrix), sp.identity(rest, format="csr"), format="csr")
        return big[idx][:, idx]
    big = np.kron(matrix, np.eye(rest))
    return big[np.ix_(idx, idx)]


def embed(op: LocalOperator, into: Union[Rectangle, LatticeSpec], n: int, sparse: bool = False):
    """Embed a local operator into a larger rectangle or the whole lattice.

    Embedding into a rectangle returns a :class:`LocalOperator`; embedding
    into a lattice returns the bare (dense or sparse) global matrix.
    """
    if isinstance(into, LatticeSpec):
        return embed_matrix(op.matrix, op.support.sites(), into.sites(), n, sparse)
    if not into.contains(op.support):
        raise ContainmentError(f"{op.support} is not inside {into}")
    m = embed_matrix(op.matrix, op.support.sites(), into.sites(), n)
    return LocalOperator(into, m, op.hermitian)


def local_embed(matrix: np.ndarray, support: Rectangle, region: Rectangle, n: int) -> np.ndarray:
    """Array-level shortcut for :func:`embed` between rectangles."""
    if support == region:
        return matrix
    if not region.contains(support):
        raise ContainmentError(f"{support} is not inside {region}")
    return embed_matrix(matrix, support.sites(), region.sites(), n)


def kron_sum_diag(values: np.ndarray, m: int) -> np.ndarray:
    """Diagonal of ``sum_i values_i`` over ``m`` tensor factors."""
    out = np.zeros(1)
    for _ in range(m):
        out = np.add.outer(out, values).ravel()
    return out


def h0_diag(n_sites: int, basis: SiteBasis) -> np.ndarray:
    return kron_sum_diag(basis.energies, n_sites)


def h0(region: Rectangle, basis: SiteBasis) -> LocalOperator:
    """Sum of on-site Hamiltonians over ``region``."""
    return LocalOperator(region, np.diag(h0_diag(region.n_sites, basis)), True)


def excitation_count_diag(n_sites: int, n: int) -> np.ndarray:
    """Diagonal of ``pi = sum_j P_perp_j``: the number of non-vacuum sites."""
    one = np.ones(n)
    one[0] = 0.0
    return kron_sum_diag(one, n_sites)


def projector_minus(region: Rectangle, n: int) -> LocalOperator:
    """Projector onto the product vacuum of ``region``."""
    dim = n**region.n_sites
    p = np.zeros((dim, dim))
    p[0, 0] = 1.0
    return LocalOperator(region, p, True)


def projector_plus(region: Rectangle, n: int) -> LocalOperator:
    dim = n**region.n_sites
    p = np.eye(dim)
    p[0, 0] = 0.0
    return LocalOperator(region, p, True)


def off_diagonal(m: np.ndarray) -> np.ndarray:
    """``P+ M P- + P- M P+`` for the vacuum split at basis index 0."""
    out = np.zeros_like(m)
    out[1:, 0] = m[1:, 0]
    out[0, 1:] = m[0, 1:]
    return out


def diagonal_part(m: np.ndarray) -> np.ndarray:
    out = m.copy()
    out[1:, 0] = 0
    out[0, 1:] = 0
    return out


def off_diagonal_norm(m: np.ndarray) -> float:
    """``||P+ M P-||`` with the vacuum split at basis index 0."""
    return float(np.linalg.norm(m[1:, 0]))


def spectral_norm(m) -> float:
    if sp.issparse(m):
        m = m.toarray()
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def weight_diag(n_sites: int, basis: SiteBasis) -> np.ndarray:
    """Diagonal of ``(H0 + 1)^{-1/2}``."""
    return 1.0 / np.sqrt(h0_diag(n_sites, basis) + 1.0)


def weighted_norm_matrix(m: np.ndarray, n_sites: int, basis: SiteBasis) -> float:
    w = weight_diag(n_sites, basis)
    return spectral_norm(w[:, None] * m * w[None, :])


def weighted_norm(op: LocalOperator, region: Rectangle, basis: SiteBasis) -> float:
    """``||(H0_R + 1)^{-1/2} V (H0_R + 1)^{-1/2}||`` on region ``R``."""
    m = local_embed(op.matrix, op.support, region, basis.site_dim)
    return weighted_norm_matrix(m, region.n_sites, basis)


def _sector_mask(dim: int, sector: str) -> np.ndarray:
    mask = np.zeros(dim, dtype=bool)
    if sector == "-":
        mask[0] = True
    elif sector == "+":
        mask[1:] = True
    else:
        raise OperatorError(f"sector must be '+' or '-', got {sector!r}")
    return mask


def aux_weighted_norm(
    op: LocalOperator, region: Rectangle, basis: SiteBasis, left: str, right: str
) -> float:
    """Weighted norm of ``P^left V P^right`` with the extra ``(pi + 1)^{-1/2}`` weight."""
    n = basis.site_dim
    m = local_embed(op.matrix, op.support, region, n)
    w = weight_diag(region.n_sites, basis) / np.sqrt(excitation_count_diag(region.n_sites, n) + 1.0)
    lm = _sector_mask(m.shape[0], left)
    rm = _sector_mask(m.shape[0], right)
    block = m * (lm[:, None] & rm[None, :])
    return spectral_norm(w[:, None] * block * w[None, :])


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def check_anti_hermitian(s: np.ndarray, tol: float = 1e-10) -> None:
    scale = max(spectral_norm(s), 1.0)
    if np.linalg.norm(s + s.conj().T) > tol * scale:
        raise NotAntiHermitianError("generator is not anti-Hermitian")


def conjugate(k, s: np.ndarray) -> np.ndarray:
    """``e^S K e^{-S}`` for anti-Hermitian ``S``."""
    if sp.issparse(k):
        k = k.toarray()
    check_anti_hermitian(s)
    u = scipy.linalg.expm(s)
    return u @ k @ u.conj().T


@dataclass(frozen=True)
class SeriesResult:
    value: np.ndarray
    terms_used: int
    converged: bool
    tail_bound: float


def adjoint_series(
    s: np.ndarray, b: np.ndarray, n_max: int = 60, tail_tol: float = 1e-15
) -> SeriesResult:
    """``sum_{n>=1} ad_S^n(B) / n!`` truncated once a term drops below ``tail_tol``."""
    if n_max < 1:
        raise OperatorError("n_max must be >= 1")
    total = np.zeros(np.broadcast_shapes(s.shape, b.shape), dtype=np.result_type(s, b))
    # Frobenius norm: cheap upper bound on ||S|| for the tail estimate
    s_norm = float(np.linalg.norm(s))
    if s_norm == 0.0:
        return SeriesResult(total, 0, True, 0.0)
    term = b
    last = np.inf
    for n in range(1, n_max + 1):
        term = commutator(s, term) / n
        total = total + term
        # Frobenius norm dominates the spectral norm, so the stop is conservative
        norm = float(np.linalg.norm(term))
        if norm < tail_tol:
            return SeriesResult(total, n, True, norm * np.exp(2 * s_norm))
        last = norm
    return SeriesResult(total, n_max, False, last * np.exp(2 * s_norm))
