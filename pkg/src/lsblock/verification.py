"""Oracles and inequality checks over a completed run.

Every check is a :class:`BoundCheck` ``lhs <= rhs`` with a fixed slack of
``1e-10``. Lower bounds ``a >= b`` are stored as ``lhs=b, rhs=a`` and
positivity of a matrix as ``lhs=-min_eig, rhs=0``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .diagonalizer import AlgorithmError, RunResult, SeriesOptions, run
from .geometry import (
    LatticeSpec,
    Rectangle,
    iter_rectangles,
    shapes,
    step_position,
    step_sequence,
    sub_rectangles,
)
from .models import InitialData, assemble_hamiltonian
from .operators import (
    DENSE_LIMIT,
    LocalOperator,
    SiteBasis,
    aux_weighted_norm,
    excitation_count_diag,
    h0_diag,
    local_embed,
    off_diagonal_norm,
    spectral_norm,
    weighted_norm_matrix,
)
from .table import reconstruct
from . import trees

log = logging.getLogger(__name__)

SLACK = 1e-10
EQUIV_TOL = 1e-8
AUX_RATIO_CAP = 1e3

SUITES = ("main", "model", "block", "lemmas", "appendix", "gap_lemma", "norms", "trees", "paths")


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    anchor: str
    context: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.rhs + SLACK)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "passed": self.passed,
            "anchor": self.anchor,
            "context": self.context,
        }


def bound(name: str, lhs: float, rhs: float, anchor: str, context: Optional[dict] = None, **extra) -> BoundCheck:
    return BoundCheck(name, float(lhs), float(rhs), anchor, {**(context or {}), **extra})


def lower_bound(name: str, value: float, floor: float, anchor: str, **context) -> BoundCheck:
    return bound(name, floor, value, anchor, context)


def psd(name: str, min_eig: float, anchor: str, **context) -> BoundCheck:
    return bound(name, -min_eig, 0.0, anchor, context)


def _ctx_rect(r: Rectangle) -> list:
    return r.to_json()


# exact diagonalization


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    ground_vector: np.ndarray
    residual: float


def exact_diagonalize(k, how_many: Optional[int] = None, dense_limit: int = DENSE_LIMIT) -> Spectrum:
    """Sorted eigenvalues (all, or the lowest ``how_many``) and the ground vector."""
    dim = k.shape[0]
    if dim <= dense_limit:
        dense = k.toarray() if sp.issparse(k) else np.asarray(k)
        vals, vecs = np.linalg.eigh(dense)
        if how_many is not None:
            vals, vecs = vals[:how_many], vecs[:, :how_many]
        scale = spectral_norm(dense)
    else:
        m = how_many or 6
        vals, vecs = spla.eigsh(sp.csr_matrix(k), k=m, which="SA", tol=1e-12)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        scale = float(abs(spla.eigsh(sp.csr_matrix(k), k=1, which="LM", return_eigenvectors=False)[0]))
    residual = float(np.linalg.norm(k @ vecs - vecs * vals[None, :], axis=0).max())
    if residual > 1e-9 * max(scale, 1.0):
        raise OracleError(f"eigensolver residual {residual:.3e} too large")
    return Spectrum(vals, vecs[:, 0], residual)


@dataclass(frozen=True)
class OracleReport:
    spectrum_original: np.ndarray
    spectrum_final: np.ndarray
    max_abs_dev: float
    gap_original: float
    gap_final: float
    ground_vector_residual: float
    vacuum_energy: float
    k_norm: float

    def to_json(self) -> dict:
        return {
            "max_abs_dev": self.max_abs_dev,
            "gap_original": self.gap_original,
            "gap_final": self.gap_final,
            "ground_vector_residual": self.ground_vector_residual,
            "vacuum_energy": self.vacuum_energy,
            "ground_energy": float(self.spectrum_original[0]),
            "k_norm": self.k_norm,
            "lowest_levels": [float(v) for v in self.spectrum_original[:6]],
        }


def oracle(result: RunResult, how_many: Optional[int] = None) -> OracleReport:
    """Compare the final effective Hamiltonian with the original one."""
    k = assemble_hamiltonian(result.lattice, result.data, result.t)
    kf = reconstruct(result.final)
    dim = k.shape[0]
    if how_many is None and dim > DENSE_LIMIT:
        how_many = 6
    orig = exact_diagonalize(k, how_many)
    fin = exact_diagonalize(kf, how_many)
    vac = np.zeros(dim)
    vac[0] = 1.0
    kv = kf @ vac
    e_vac = float(kv[0])
    residual = float(np.linalg.norm(kv - e_vac * vac))
    k_norm = float(max(abs(orig.values[0]), abs(orig.values[-1]))) if how_many is None else spectral_norm(k)
    return OracleReport(
        spectrum_original=orig.values,
        spectrum_final=fin.values,
        max_abs_dev=float(np.abs(orig.values - fin.values).max()),
        gap_original=float(orig.values[1] - orig.values[0]),
        gap_final=float(fin.values[1] - fin.values[0]),
        ground_vector_residual=residual,
        vacuum_energy=e_vac,
        k_norm=k_norm,
    )


def check_theorem_main(result: RunResult, report: OracleReport) -> list[BoundCheck]:
    tol = EQUIV_TOL * (1.0 + report.k_norm)
    return [
        bound(
            "spectrum_equivalence",
            report.max_abs_dev,
            tol,
            "final effective Hamiltonian is unitarily equivalent to the original",
        ),
        lower_bound(
            "final_gap", report.gap_final, 0.5, "spectral gap of the final Hamiltonian is at least 1/2"
        ),
        lower_bound(
            "ground_state_gap",
            report.gap_original,
            0.5,
            "original ground state is unique with gap at least 1/2",
        ),
        bound(
            "vacuum_eigenvector",
            report.ground_vector_residual,
            EQUIV_TOL,
            "product vacuum is an eigenvector of the final Hamiltonian",
        ),
        bound(
            "vacuum_is_ground",
            abs(report.vacuum_energy - float(report.spectrum_final[0])),
            EQUIV_TOL * (1.0 + report.k_norm),
            "product vacuum carries the lowest eigenvalue",
        ),
    ]


def check_step_gaps(result: RunResult) -> list[BoundCheck]:
    return [
        lower_bound(
            "step_gap",
            rec.gap,
            0.5,
            "each local Hamiltonian G has gap at least 1/2 above E",
            step=_ctx_rect(rec.step),
        )
        for rec in result.records
    ]


# block structure


def check_block_diagonal(result: RunResult) -> list[BoundCheck]:
    """Processed keys stay block diagonal, also inside every larger rectangle,
    and keys not strictly containing a step are left bitwise untouched by it."""
    lat, n = result.lattice, result.data.basis.site_dim
    seq = step_sequence(lat)
    rects = list(iter_rectangles(lat))
    out: list[BoundCheck] = []
    for i, step in enumerate(seq):
        before, after = result.tables[i], result.tables[i + 1]
        worst = 0.0
        worst_inherit = 0.0
        for key, v in after.interaction_items():
            if step_position(key, lat) > i:
                continue
            worst = max(worst, off_diagonal_norm(v), off_diagonal_norm(v.conj().T))
            for big in rects:
                if big != key and big.contains(key):
                    m = local_embed(v, key, big, n)
                    worst_inherit = max(worst_inherit, off_diagonal_norm(m), off_diagonal_norm(m.T))
        out.append(
            bound(
                "processed_block_diagonal",
                worst,
                SLACK,
                "processed potentials satisfy P+ V P- = 0",
                step=_ctx_rect(step),
            )
        )
        out.append(
            bound(
                "inherited_block_diagonal",
                worst_inherit,
                SLACK,
                "processed potentials are block diagonal in every enclosing rectangle",
                step=_ctx_rect(step),
            )
        )
        changed = 0
        for key in set(before.entries) | set(after.entries):
            if key == step or key.strictly_contains(step):
                continue
            a, b = before.get(key), after.get(key)
            if a is None or b is None:
                changed += int(a is not b)
            elif not np.array_equal(a, b):
                changed += 1
        out.append(
            bound(
                "untouched_entries",
                float(changed),
                0.0,
                "entries not containing the step are copied unchanged",
                step=_ctx_rect(step),
            )
        )
    return out


# local lemmas


def _resolvent_parts(g: np.ndarray, e: float) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(g[1:, 1:] - e * np.eye(g.shape[0] - 1))
    return vals, vecs


def check_lemmas(result: RunResult, lemma_gap: Optional[float] = 0.5) -> tuple[list[BoundCheck], dict]:
    """Per-step explicit-constant inequalities for ``G``, ``S`` and ``V``.

    ``lemma_gap`` is the gap entering the constants; ``None`` uses each
    step's measured gap instead.
    """
    basis = result.data.basis
    n = basis.site_dim
    t = result.t
    out: list[BoundCheck] = []
    diag: dict = {"vsquare_ratio": [], "aux_ratio": []}
    for step in result.steps:
        sd = result.step_data[step]
        delta = sd.gap if lemma_gap is None else lemma_gap
        m = step.n_sites
        ctx = {"step": _ctx_rect(step)}
        h = h0_diag(m, basis)
        root = np.sqrt(h + 1.0)
        for j, (vj, sj) in enumerate(zip(sd.series.V_terms, sd.series.S_terms), start=1):
            vw = weighted_norm_matrix(vj, m, basis)
            out.append(
                bound(
                    "generator_term_norm",
                    spectral_norm(sj),
                    2 * math.sqrt(2) / delta * vw,
                    "||S_j|| <= (2 sqrt 2 / gap) ||V_j||_H0",
                    **ctx,
                    j=j,
                )
            )
            out.append(
                bound(
                    "generator_term_relative_norm",
                    spectral_norm(sj * root[None, :]),
                    (2 + math.sqrt(2)) / delta * vw,
                    "||S_j (H0+1)^{1/2}|| <= ((2 + sqrt 2) / gap) ||V_j||_H0",
                    **ctx,
                    j=j,
                )
            )
        v_old = weighted_norm_matrix(sd.V_before, m, basis)
        new = result.table_after(step).get(step)
        v_new = 0.0 if new is None else weighted_norm_matrix(new, m, basis)
        out.append(
            bound(
                "diagonalized_potential_growth",
                v_new,
                2 * v_old,
                "block-diagonalized potential at most doubles in weighted norm",
                **ctx,
            )
        )

        vals, vecs = _resolvent_parts(sd.G, sd.E)
        hp = h[1:]
        rp = root[1:]
        form = (vecs * vals[None, :]) @ vecs.T
        shifted = form - (delta / 2) * np.diag(hp + 1.0)
        out.append(
            psd(
                "relative_form_bound",
                float(np.linalg.eigvalsh(shifted)[0]),
                "P+ (G - E) P+ >= (gap/2) P+ (H0 + 1) P+",
                **ctx,
            )
        )
        half = (vecs * vals[None, :] ** -0.5) @ vecs.T
        full = (vecs / vals[None, :]) @ vecs.T
        out.append(
            bound(
                "half_resolvent_norm",
                spectral_norm(half * rp[None, :]),
                math.sqrt(2) / math.sqrt(delta),
                "||(G - E)^{-1/2} P+ (H0 + 1)^{1/2}|| <= sqrt 2 / sqrt gap",
                **ctx,
            )
        )
        out.append(
            bound(
                "resolvent_norm",
                spectral_norm(full * rp[None, :]),
                math.sqrt(2) / delta,
                "||(G - E)^{-1} P+ (H0 + 1)^{1/2}|| <= sqrt 2 / gap",
                **ctx,
            )
        )

        # ratios against constants that are only known to exist
        higher = sum(
            (t**j * s for j, s in enumerate(sd.series.S_terms, start=1) if j >= 2),
            np.zeros_like(sd.G),
        )
        denom = abs(t) * v_old**2
        diag["vsquare_ratio"].append(
            {"step": _ctx_rect(step), "ratio": spectral_norm(higher) / denom if denom > 0 else 0.0}
        )
        pi = excitation_count_diag(m, n)
        weight = root / np.sqrt(pi + 1.0)
        vpm = sd.V_before[1:, 0]
        num = float(np.linalg.norm(weight[1:] * (full @ vpm)))
        block = np.zeros_like(sd.V_before)
        block[1:, 0] = vpm
        den = aux_weighted_norm(LocalOperator(step, block), step, basis, "+", "-")
        ratio = num / den if den > 0 else 0.0
        diag["aux_ratio"].append({"step": _ctx_rect(step), "ratio": ratio})
        out.append(
            bound(
                "aux_resolvent_ratio",
                ratio,
                AUX_RATIO_CAP,
                "auxiliary-weighted resolvent ratio stays bounded",
                **ctx,
            )
        )
    return out, diag


# operator inequalities on product states (all operators involved are diagonal)


def _vacuum_indicators(m: int, n: int) -> np.ndarray:
    """Row ``s`` is the diagonal of ``P_Omega`` at the ``s``-th site of the region."""
    idx = np.indices((n,) * m).reshape(m, -1)
    return (idx == 0).astype(float)


def _plus_diag(sub: Rectangle, region: Rectangle, ind: np.ndarray) -> np.ndarray:
    sites = region.sites()
    rows = [sites.index(s) for s in sub.sites()]
    return 1.0 - np.prod(ind[rows], axis=0)


def check_appendix_a(lattice: LatticeSpec, basis: SiteBasis) -> list[BoundCheck]:
    n = basis.site_dim
    d = lattice.d
    out: list[BoundCheck] = []
    for rect in iter_rectangles(lattice):
        m = rect.n_sites
        ind = _vacuum_indicators(m, n)
        perp = (1.0 - ind).sum(axis=0)
        ctx = {"rect": _ctx_rect(rect)}
        out.append(
            psd(
                "excitation_dominates_plus",
                float((perp - _plus_diag(rect, rect, ind)).min()),
                "sum_j P_perp_j >= P+_J",
                **ctx,
            )
        )
        subs = sub_rectangles(rect)
        for size in range(0, rect.size + 1):
            for shape in shapes(d, size):
                if any(a > b for a, b in zip(shape, rect.k)):
                    continue
                total = np.zeros(n**m)
                for sub in subs:
                    if sub.k == shape:
                        total += _plus_diag(sub, rect, ind)
                out.append(
                    psd(
                        "plus_projector_count",
                        float(((size + 1) ** d * perp - total).min()),
                        "(l+1)^d sum_j P_perp_j >= sum of P+ over shape-l subrectangles",
                        **ctx,
                        shape=list(shape),
                    )
                )
            h_full = h0_diag(m, basis)
            total = np.zeros(n**m)
            sites = rect.sites()
            for sub in subs:
                if sub.size == size:
                    rows = [sites.index(s) for s in sub.sites()]
                    total += basis.energies[np.indices((n,) * m).reshape(m, -1)[rows]].sum(axis=0)
            out.append(
                psd(
                    "h0_subrectangle_sum",
                    float(((size + 1) ** (2 * d - 1) * h_full - total).min()),
                    "(l+1)^{2d-1} H0_J >= sum of H0 over circumference-l subrectangles",
                    **ctx,
                    size=size,
                )
            )
    return out


def check_form_bound(data: InitialData, samples: int = 200, seed: int = 0) -> list[BoundCheck]:
    """``|<phi, W phi>| <= a <phi, (H0 + 1) phi>`` on random unit bond vectors."""
    rng = np.random.default_rng(seed)
    basis = data.basis
    a = float(data.normalization_report.get("coupling_normalization", 1.0))
    weight = h0_diag(2, basis) + 1.0
    out = []
    for j, op in sorted(data.pair_potentials.items()):
        phi = rng.standard_normal((samples, op.dim)) + 1j * rng.standard_normal((samples, op.dim))
        phi /= np.linalg.norm(phi, axis=1)[:, None]
        lhs = np.abs(np.einsum("si,ij,sj->s", phi.conj(), op.matrix, phi))
        rhs = a * np.einsum("si,i,si->s", phi.conj(), weight, phi).real
        worst = int(np.argmax(lhs / rhs))
        out.append(
            bound(
                "pair_form_bound",
                lhs[worst],
                rhs[worst],
                "pair potential is form bounded by a (H0 + 1) on its bond",
                orientation=j,
                samples=samples,
            )
        )
    return out


# gap lemma


def gap_lemma_coefficient(t: float, d: int, tol: float = 1e-16, l_max: int = 100000) -> float:
    """``1 - 3t sum_{l>=1} t^{(l-1)/4} (l+1)^{2d-1}``, summed until terms are negligible."""
    if t == 0:
        return 1.0
    if not 0 < t < 1:
        raise ValueError("coefficient is defined for 0 <= t < 1")
    total = 0.0
    for l in range(1, l_max + 1):
        term = t ** ((l - 1) / 4) * (l + 1) ** (2 * d - 1)
        total += term
        if l > 2 * d and term < tol * total:
            break
    return 1.0 - 3 * t * total


def gap_lemma_min_eig(g: np.ndarray, e: float, h0: np.ndarray, coeff: float) -> float:
    """Lowest eigenvalue of ``P+ (G - E) P+ - coeff H0 P+`` on the ``P+`` range."""
    block = g[1:, 1:] - e * np.eye(g.shape[0] - 1) - coeff * np.diag(h0[1:])
    return float(np.linalg.eigvalsh(block)[0])


def check_gap_lemma(result: RunResult) -> tuple[list[BoundCheck], dict]:
    d = result.lattice.d
    coeff = gap_lemma_coefficient(abs(result.t), d)
    out = []
    for step in result.steps:
        sd = result.step_data[step]
        h = h0_diag(step.n_sites, result.data.basis)
        out.append(
            psd(
                "gap_lemma_form",
                gap_lemma_min_eig(sd.G, sd.E, h, coeff),
                "P+ (G - E) P+ >= (1 - 3t sum_l t^{(l-1)/4} (l+1)^{2d-1}) H0 P+",
                step=_ctx_rect(step),
            )
        )
    return out, {"gap_lemma_coefficient": coeff, "coefficient_positive": coeff > 0}


# weighted-norm decay


def regime(step_pos: int, step_rect: Optional[Rectangle], target: Rectangle, lattice: LatticeSpec) -> str:
    """Classify a step against a target: ``"1"``, ``"2"``, ``"3"`` or ``"3-after"``.

    ``step_pos == -1`` stands for the initial table.
    """
    r = target.size
    f = int(math.floor(r**0.25 + 1e-12))
    k = 0 if step_rect is None else step_rect.size
    if step_rect is not None and step_pos >= step_position(target, lattice):
        return "3-after"
    if k < f:
        return "1"
    if k < r - f:
        return "2"
    return "3"


def check_norm_decay(result: RunResult, x_d: Optional[float] = None) -> tuple[list[BoundCheck], dict]:
    """Theorem-style weighted-norm bounds for every recorded level and key."""
    lat, basis, t = result.lattice, result.data.basis, abs(result.t)
    d = lat.d
    x_d = 20 * d if x_d is None else x_d
    seq = step_sequence(lat)
    out: list[BoundCheck] = []
    counts: dict[str, int] = {"1": 0, "2": 0, "3": 0, "3-after": 0}
    for level, table in enumerate(result.tables):
        pos = level - 1
        step = seq[pos] if pos >= 0 else None
        label = step.to_json() if step is not None else "initial"
        for key, v in table.interaction_items():
            r = key.size
            m = key.n_sites
            ctx = {"level": label, "key": _ctx_rect(key)}
            w = weighted_norm_matrix(v, m, basis)
            scale = t ** ((r - 1) / 3)
            reg = regime(pos, step, key, lat)
            counts[reg] += 1
            ctx["regime"] = reg
            if reg == "1":
                out.append(
                    bound("norm_regime_1", w, scale / r ** (x_d + 2 * d), "small-step weighted norm bound", ctx)
                )
            elif reg == "2":
                out.append(
                    bound(
                        "norm_regime_2", w, 2 * scale / r ** (x_d + 2 * d), "intermediate-step weighted norm bound", ctx
                    )
                )
            elif reg == "3":
                op = LocalOperator(key, v)
                aux = max(
                    aux_weighted_norm(op, key, basis, a, b) for a in "+-" for b in "+-"
                )
                out.append(
                    bound(
                        "norm_regime_3_aux", aux, 3 * scale / r ** (x_d + 2 * d), "large-step auxiliary norm bound", ctx
                    )
                )
                out.append(
                    bound("norm_regime_3", w, 48 * scale / r**x_d, "large-step weighted norm bound", ctx)
                )
            else:
                out.append(
                    bound("norm_after_own_step", w, 96 * scale / r**x_d, "processed weighted norm bound", ctx)
                )
            out.append(
                bound(
                    "norm_working_hypothesis", w, t ** ((r - 1) / 4), "||V_J||_H0 <= t^{(l-1)/4}", ctx
                )
            )
    for b in lat.bonds():
        v = result.initial.get(b)
        w = 0.0 if v is None else weighted_norm_matrix(v, b.n_sites, basis)
        out.append(bound("bond_base_case", w, 1.0, "initial bond potentials have weighted norm <= 1", {"key": _ctx_rect(b)}))
    return out, {"x_d": x_d, "regime_counts": counts}


# expansion trees


def check_trees(
    result: RunResult,
    depth_cap: int = trees.DEFAULT_DEPTH_CAP,
    x_d: Optional[float] = None,
    c: Optional[float] = None,
    with_paths: bool = True,
) -> tuple[list[BoundCheck], list[BoundCheck], dict]:
    """Re-expansion equivalence and per-branch properties for every level and key.

    Returns ``(tree_checks, path_checks, diagnostics)``.
    """
    lat = result.lattice
    x_d = 20 * lat.d if x_d is None else x_d
    seq = step_sequence(lat)
    tree_checks: list[BoundCheck] = []
    path_checks: list[BoundCheck] = []
    audit: list[dict] = []
    skipped: list[dict] = []
    expansions = []
    bounds: dict[trees.Branch, tuple[float, float]] = {}
    for level in range(-1, len(seq)):
        table = result.tables[level + 1]
        for key, v in table.interaction_items():
            ex = trees.enumerate_branches(result, key, level, depth_cap)
            ctx = {"level": seq[level].to_json() if level >= 0 else "initial", "key": _ctx_rect(key)}
            if ex.truncated:
                skipped.append({**ctx, "reason": "branch cap exceeded"})
                continue
            expansions.append((ex, ctx))
            total = np.zeros_like(v)
            for b in ex.branches:
                op = trees.branch_operator(result, b)
                total = total + op
                bounds[b] = trees.branch_norm_bound(result, b, op)
            dev = float(np.abs(total - v).max())
            tree_checks.append(
                bound("branch_sum", dev, EQUIV_TOL, "sum of branch operators reproduces the potential", ctx)
            )
            seen = set()
            dup = 0
            for b in ex.branches:
                dup += int(b.rectangles in seen)
                seen.add(b.rectangles)
            tree_checks.append(
                bound("branch_distinct", float(dup), 0.0, "distinct branches carry distinct rectangle sequences", ctx)
            )
    all_branches = [b for ex, _ in expansions for b in ex.branches]
    t = result.t
    use_paths = with_paths and 0 < abs(t) < 1
    if c is None:
        norms = {b: lhs for b, (lhs, _) in bounds.items()}
        c = trees.measured_constant(result, all_branches, x_d, norms) if use_paths else 0.0
    for ex, ctx in expansions:
        for b in ex.branches:
            bctx = {**ctx, "rectangles": [r.to_json() for r in b.rectangles]}
            tree_checks.append(
                bound("branch_connected", 0.0 if trees.connectivity_holds(b) else 1.0, 0.0,
                      "rectangles below each vertex have connected union", bctx)
            )
            tree_checks.append(
                bound("branch_minimal", 0.0 if trees.minimality_holds(b) else 1.0, 0.0,
                      "each vertex rectangle is the hull of the rectangles below it", bctx)
            )
            lhs, rhs = bounds[b]
            tree_checks.append(
                bound("branch_norm_chain", lhs, rhs, "branch norm bounded by the product of measured edge factors", bctx)
            )
            entry = {
                "rectangles": [r.to_json() for r in b.rectangles],
                "leaf_step": seq[b.leaf_level].to_json() if b.leaf_level >= 0 else "initial",
                "norm": lhs,
                "bound": rhs,
                "path_length": None,
            }
            if use_paths:
                path = trees.traversal_path(b.rectangles)
                if path is None or path.length > trees.path_length_cap(b):
                    skipped.append({**bctx, "reason": "traversal exceeds the path length bound"})
                    log.info("path check skipped for %s", bctx)
                else:
                    entry["path_length"] = path.length
                    limit = abs(t) ** ((b.root.size - 1) / 3) * trees.path_weight(path, abs(t), x_d, c)
                    path_checks.append(
                        bound("path_weight", lhs, limit, "branch norm bounded by t^{(r-1)/3} times the path weight", bctx)
                    )
            audit.append(entry)
    return tree_checks, path_checks, {"branch_count": len(all_branches), "c": c, "skipped": skipped, "audit": audit}


# full suite and t scan


@dataclass
class VerificationReport:
    checks: list[BoundCheck]
    diagnostics: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> dict:
        by_name: dict[str, dict] = {}
        for c in self.checks:
            s = by_name.setdefault(c.name, {"total": 0, "passed": 0})
            s["total"] += 1
            s["passed"] += int(c.passed)
        return {
            "total": len(self.checks),
            "passed": sum(c.passed for c in self.checks),
            "all_passed": self.passed,
            "by_name": dict(sorted(by_name.items())),
        }

    def to_json(self) -> dict:
        return {
            "summary": self.summary(),
            "checks": [c.to_json() for c in self.checks],
            "diagnostics": self.diagnostics,
        }


def verify(
    result: RunResult,
    suites: Iterable[str] = SUITES,
    lemma_gap: Optional[float] = 0.5,
    depth_cap: int = trees.DEFAULT_DEPTH_CAP,
    x_d: Optional[float] = None,
    c: Optional[float] = None,
    seed: int = 0,
) -> VerificationReport:
    suites = list(suites)
    unknown = set(suites) - set(SUITES)
    if unknown:
        raise ValueError(f"unknown suites {sorted(unknown)}")
    checks: list[BoundCheck] = []
    diag: dict = {"suites": suites}
    if "main" in suites:
        report = oracle(result)
        checks += check_theorem_main(result, report)
        checks += check_step_gaps(result)
        diag["oracle"] = report.to_json()
    if "model" in suites:
        checks += check_form_bound(result.data, seed=seed)
        diag["model"] = result.data.normalization_report
    if "block" in suites:
        checks += check_block_diagonal(result)
    if "lemmas" in suites:
        found, extra = check_lemmas(result, lemma_gap)
        checks += found
        diag["lemmas"] = extra
    if "appendix" in suites:
        checks += check_appendix_a(result.lattice, result.data.basis)
    if "gap_lemma" in suites:
        found, extra = check_gap_lemma(result)
        checks += found
        diag["gap_lemma"] = extra
    if "norms" in suites:
        found, extra = check_norm_decay(result, x_d)
        checks += found
        diag["norms"] = extra
    if "trees" in suites or "paths" in suites:
        tree_checks, path_checks, extra = check_trees(
            result, depth_cap, x_d, c, with_paths="paths" in suites
        )
        if "trees" in suites:
            checks += tree_checks
        checks += path_checks
        diag["trees"] = extra
    return VerificationReport(checks, diag)


@dataclass
class ScanPoint:
    t: float
    passed: bool
    failed_checks: dict[str, int]
    error: Optional[str] = None
    report: Optional[VerificationReport] = None


@dataclass
class ScanReport:
    points: list[ScanPoint]

    @property
    def frontier(self) -> Optional[float]:
        """Largest grid value below which every point passes."""
        best = None
        for p in sorted(self.points, key=lambda p: p.t):
            if not p.passed:
                break
            best = p.t
        return best

    @property
    def monotone(self) -> bool:
        seen_fail = False
        for p in sorted(self.points, key=lambda p: p.t):
            if not p.passed:
                seen_fail = True
            elif seen_fail:
                return False
        return True

    def check_frontiers(self) -> dict[str, Optional[float]]:
        """Per check name, the smallest grid value at which it fails."""
        out: dict[str, Optional[float]] = {}
        for p in sorted(self.points, key=lambda p: p.t):
            names = set(p.failed_checks)
            if p.report is not None:
                names |= {c.name for c in p.report.checks}
            for name in names:
                out.setdefault(name, None)
                if name in p.failed_checks and out[name] is None:
                    out[name] = p.t
        return dict(sorted(out.items()))

    def to_json(self) -> dict:
        return {
            "frontier": self.frontier,
            "monotone": self.monotone,
            "first_failure": self.check_frontiers(),
            "points": [
                {"t": p.t, "passed": p.passed, "failed_checks": p.failed_checks, "error": p.error}
                for p in sorted(self.points, key=lambda p: p.t)
            ],
        }


def run_and_verify(
    lattice: LatticeSpec,
    data: InitialData,
    t: float,
    options: SeriesOptions = SeriesOptions(),
    suites: Sequence[str] = SUITES,
    **verify_kw,
) -> tuple[Optional[RunResult], ScanPoint]:
    try:
        result = run(lattice, data, t, options)
    except AlgorithmError as exc:
        return None, ScanPoint(float(t), False, {"algorithm_error": 1}, str(exc))
    report = verify(result, suites, **verify_kw)
    failed: dict[str, int] = {}
    for c in report.checks:
        if not c.passed:
            failed[c.name] = failed.get(c.name, 0) + 1
    return result, ScanPoint(float(t), report.passed, dict(sorted(failed.items())), None, report)


def _scan_point(args) -> ScanPoint:
    lattice, data, t, options, suites, verify_kw = args
    return run_and_verify(lattice, data, t, options, suites, **verify_kw)[1]


def t_scan(
    lattice: LatticeSpec,
    data: InitialData,
    t_grid: Sequence[float],
    options: SeriesOptions = SeriesOptions(),
    suites: Sequence[str] = SUITES,
    workers: int = 1,
    progress: Optional[Callable[[ScanPoint], None]] = None,
    **verify_kw,
) -> ScanReport:
    """Run and verify every grid value; ``workers > 1`` uses a process pool."""
    if not len(t_grid):
        raise ValueError("t grid is empty")
    grid = sorted(float(x) for x in t_grid)
    jobs = [(lattice, data, t, options, tuple(suites), verify_kw) for t in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_scan_point, jobs))
    else:
        points = [_scan_point(job) for job in jobs]
    if progress is not None:
        for point in points:
            progress(point)
    return ScanReport(points)
