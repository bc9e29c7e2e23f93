"""Local Lie-Schwinger block diagonalization, one rectangle per step."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import (
    LatticeSpec,
    Rectangle,
    StepIndex,
    g_set,
    iter_rectangles,
    step_position,
    step_sequence,
)
from .models import InitialData, initial_table
from .operators import (
    adjoint_series,
    commutator,
    diagonal_part,
    local_embed,
    off_diagonal_norm,
    spectral_norm,
    weighted_norm_matrix,
)
from .table import PotentialTable

BLOCK_TOL = 1e-10


class AlgorithmError(RuntimeError):
    """Base error; ``partial`` holds the records completed before the failure."""

    def __init__(self, message: str, partial: Optional[list] = None):
        super().__init__(message)
        self.partial = partial or []


class GapCollapseError(AlgorithmError):
    pass


class DivergenceError(AlgorithmError):
    pass


class InvariantBreachError(AlgorithmError):
    pass


@dataclass(frozen=True)
class SeriesOptions:
    j_max: int = 24
    tail_tol: float = 1e-13
    gap_floor: float = 0.25
    divergence_window: int = 3
    adjoint_n_max: int = 60
    adjoint_tol: float = 1e-16
    drop_tol: float = 1e-14
    # gaps below 1/2 abort the run only for couplings up to this value
    gap_assert_t_max: float = 0.05

    def __post_init__(self) -> None:
        if self.j_max < 1:
            raise ValueError("j_max must be >= 1")
        if not self.tail_tol > 0:
            raise ValueError("tail_tol must be positive")
        if not 0 < self.gap_floor <= 1:
            raise ValueError("gap_floor must lie in (0, 1]")


@dataclass(eq=False)
class SeriesState:
    """Terms ``(V)_j``, ``(S)_j`` of the series and its summed generator."""

    V_terms: list[np.ndarray]
    S_terms: list[np.ndarray]
    S_total: np.ndarray
    converged: bool
    tail_estimate: float
    term_norms: list[float]

    @property
    def terms_used(self) -> int:
        return len(self.S_terms)

    def diagonal_sum(self, t: float) -> np.ndarray:
        """``sum_j t^{j-1} (V)_j^diag``."""
        out = np.zeros_like(self.V_terms[0])
        for j, v in enumerate(self.V_terms, start=1):
            out = out + t ** (j - 1) * diagonal_part(v)
        return out

    def summary(self) -> dict:
        return {
            "terms_used": self.terms_used,
            "converged": self.converged,
            "tail_estimate": self.tail_estimate,
            "term_norms": list(self.term_norms),
            "S_norm": spectral_norm(self.S_total),
        }


@dataclass(eq=False)
class StepRecord:
    step: Rectangle
    index: int
    E: float
    gap: float
    series: dict
    weighted_norm_table: dict[Rectangle, float]
    wall_time: float = 0.0

    def to_json(self) -> dict:
        """Serializable form without the wall time, which lives in the manifest."""
        return {
            "step": self.step.to_json(),
            "index": self.index,
            "E": self.E,
            "gap": self.gap,
            "series": self.series,
            "weighted_norms": [
                {"rect": r.to_json(), "circumference": r.size, "value": v}
                for r, v in self.weighted_norm_table.items()
            ],
        }


@dataclass(eq=False)
class StepData:
    """Local objects of one step, kept for verification."""

    G: np.ndarray
    E: float
    gap: float
    V_before: np.ndarray
    series: SeriesState


@dataclass(eq=False)
class RunResult:
    lattice: LatticeSpec
    data: InitialData
    t: float
    options: SeriesOptions
    tables: list[PotentialTable] = field(default_factory=list)
    records: list[StepRecord] = field(default_factory=list)
    step_data: dict[Rectangle, StepData] = field(default_factory=dict)

    @property
    def initial(self) -> PotentialTable:
        return self.tables[0]

    @property
    def final(self) -> PotentialTable:
        return self.tables[-1]

    @property
    def steps(self) -> list[Rectangle]:
        return [r.step for r in self.records]

    def table_before(self, step: Rectangle) -> PotentialTable:
        return self.tables[step_position(step, self.lattice)]

    def table_after(self, step: StepIndex) -> PotentialTable:
        return self.tables[step_position(step, self.lattice) + 1]

    def generator(self, step: Rectangle) -> np.ndarray:
        return self.step_data[step].series.S_total


def site_hamiltonian_sum(region: Rectangle, table: PotentialTable) -> np.ndarray:
    n = table.basis.site_dim
    out = np.zeros((n**region.n_sites,) * 2)
    for site in region.sites():
        rect = Rectangle.site(site)
        h = table.get(rect)
        if h is not None:
            out += local_embed(h, rect, region, n)
    return out


def build_G(step: Rectangle, table: PotentialTable) -> np.ndarray:
    """On-site terms plus ``t`` times every interaction strictly inside ``step``."""
    n = table.basis.site_dim
    g = site_hamiltonian_sum(step, table)
    for rect, v in table.interaction_items():
        if rect != step and step.contains(rect):
            g = g + table.t * local_embed(v, rect, step, n)
    breach = max(off_diagonal_norm(g), off_diagonal_norm(g.conj().T))
    if breach > BLOCK_TOL:
        raise InvariantBreachError(
            f"G at {step} is not block diagonal (off-diagonal norm {breach:.3e})"
        )
    return g


def ground_energy(g: np.ndarray) -> float:
    """Vacuum expectation of a block-diagonal ``G``."""
    e = float(np.real(g[0, 0]))
    residual = off_diagonal_norm(g)
    if residual > BLOCK_TOL:
        raise InvariantBreachError(f"vacuum is not an eigenvector of G (residual {residual:.3e})")
    return e


def excited_spectrum(g: np.ndarray, e: float) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of ``G - E`` on the range of ``P+``."""
    vals, vecs = np.linalg.eigh(g[1:, 1:] - e * np.eye(g.shape[0] - 1))
    return vals, vecs


def local_gap(g: np.ndarray, e: float) -> float:
    if g.shape[0] == 1:
        return math.inf
    return float(excited_spectrum(g, e)[0][0])


def reduced_resolvent(g: np.ndarray, e: float, gap_floor: float) -> tuple[np.ndarray, float]:
    """``(G - E)^{-1}`` restricted to the ``P+`` block, and the gap."""
    vals, vecs = excited_spectrum(g, e)
    gap = float(vals[0])
    if gap < gap_floor:
        raise GapCollapseError(f"gap {gap:.6f} is below the floor {gap_floor}")
    return (vecs / vals[None, :]) @ vecs.conj().T, gap


def _generator_term(resolvent: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``R P+ V P- - h.c.``; nonzero only in the vacuum row and column."""
    s = np.zeros_like(v, dtype=np.result_type(v, resolvent))
    col = resolvent @ v[1:, 0]
    s[1:, 0] = col
    s[0, 1:] = -col.conj()
    return s


def lie_schwinger_series(
    g: np.ndarray,
    e: float,
    v: np.ndarray,
    t: float,
    options: SeriesOptions = SeriesOptions(),
) -> SeriesState:
    """Terms of the Lie-Schwinger series for ``G + t V``.

    Nested commutators are memoized: ``W[p][m]`` is the sum over ordered
    ``(r_1..r_p)`` with ``r_1 + .. + r_p = m`` of
    ``ad S_{r_1} .. ad S_{r_p}(X)``, kept separately for ``X = G`` and
    ``X = V``. Then
    ``(V)_j = sum_{p>=2} WG[p][j]/p! + sum_{p>=1} WV[p][j-1]/p!``.
    """
    resolvent, _ = reduced_resolvent(g, e, options.gap_floor)
    zero = np.zeros_like(v)
    wg: dict[tuple[int, int], np.ndarray] = {(0, 0): g}
    wv: dict[tuple[int, int], np.ndarray] = {(0, 0): v}
    v_terms: list[np.ndarray] = []
    s_terms: list[np.ndarray] = []
    norms: list[float] = []
    rising = 0
    converged = False

    def level(w: dict, p: int, m: int) -> np.ndarray:
        # W[p][m] from W[p-1][m-r]; p > 0, m >= p
        acc = zero
        for r in range(1, m - p + 2):
            prev = w.get((p - 1, m - r))
            if prev is not None:
                acc = acc + commutator(s_terms[r - 1], prev)
        return acc

    for j in range(1, options.j_max + 1):
        if j == 1:
            vj = v
        else:
            vj = zero
            for p in range(2, j + 1):
                wg[(p, j)] = level(wg, p, j)
                vj = vj + wg[(p, j)] / math.factorial(p)
            for p in range(1, j):
                wv[(p, j - 1)] = level(wv, p, j - 1)
                vj = vj + wv[(p, j - 1)] / math.factorial(p)
        sj = _generator_term(resolvent, vj)
        v_terms.append(vj)
        s_terms.append(sj)
        wg[(1, j)] = commutator(sj, g)
        tau = abs(t) ** j * max(spectral_norm(sj), spectral_norm(vj))
        if norms and tau >= norms[-1] and tau > 0:
            rising += 1
            if rising >= options.divergence_window:
                raise DivergenceError(
                    f"series terms grew for {rising} consecutive orders at j={j}"
                )
        else:
            rising = 0
        norms.append(tau)
        if tau < options.tail_tol:
            converged = True
            break

    s_total = zero.astype(np.result_type(zero, *s_terms))
    for j, sj in enumerate(s_terms, start=1):
        s_total = s_total + t**j * sj
    return SeriesState(v_terms, s_terms, s_total, converged, norms[-1], norms)


def update_potentials(
    step: Rectangle,
    table: PotentialTable,
    series: SeriesState,
    options: SeriesOptions = SeriesOptions(),
) -> PotentialTable:
    """Apply the three update cases of one step."""
    n = table.basis.site_dim
    entries = dict(table.entries)

    new_own = series.diagonal_sum(table.t)
    if spectral_norm(new_own) < options.drop_tol:
        entries.pop(step, None)
    else:
        entries[step] = new_own

    s = series.S_total
    if spectral_norm(s) > 0.0:
        for target in iter_rectangles(table.lattice):
            if not target.strictly_contains(step):
                continue
            s_big = local_embed(s, step, target, n)
            gain = None
            for src in g_set(step, target):
                v = table.get(src)
                if v is None or src.size == 0 or not src.intersects(step):
                    continue
                term = adjoint_series(
                    s_big, local_embed(v, src, target, n), options.adjoint_n_max, options.adjoint_tol
                ).value
                gain = term if gain is None else gain + term
            if gain is None:
                continue
            old = table.get(target)
            updated = gain if old is None else old + gain
            if spectral_norm(updated) < options.drop_tol:
                entries.pop(target, None)
            else:
                entries[target] = updated
    return table.evolve(step, entries)


def weighted_norm_table(table: PotentialTable) -> dict[Rectangle, float]:
    return {
        rect: weighted_norm_matrix(v, rect.n_sites, table.basis)
        for rect, v in table.interaction_items()
    }


def run(
    lattice: LatticeSpec,
    data: InitialData,
    t: float,
    options: SeriesOptions = SeriesOptions(),
    on_step: Optional[Callable[[RunResult], None]] = None,
) -> RunResult:
    """Process every step from the first bond to the full lattice.

    ``on_step`` is called with the partial result after each step.
    """
    table = initial_table(lattice, data, t)
    result = RunResult(lattice, data, float(t), options, tables=[table])
    for index, step in enumerate(step_sequence(lattice)):
        start = time.perf_counter()
        try:
            g = build_G(step, table)
            e = ground_energy(g)
            gap = local_gap(g, e)
            if gap < 0.5 - BLOCK_TOL and 0 <= t <= options.gap_assert_t_max:
                raise GapCollapseError(f"gap {gap:.6f} below 1/2 at {step}")
            v = table.get(step)
            if v is None:
                v = np.zeros_like(g)
            series = lie_schwinger_series(g, e, v, t, options)
            table = update_potentials(step, table, series, options)
        except AlgorithmError as exc:
            exc.partial = list(result.records)
            raise
        result.tables.append(table)
        result.step_data[step] = StepData(g, e, gap, v, series)
        result.records.append(
            StepRecord(
                step=step,
                index=index,
                E=e,
                gap=gap,
                series=series.summary(),
                weighted_norm_table=weighted_norm_table(table),
                wall_time=time.perf_counter() - start,
            )
        )
        if on_step is not None:
            on_step(result)
    return result
