"""Acceptance criteria; each test records one PASS/FAIL line in the terminal summary."""

import itertools

import numpy as np
import pytest

from conftest import REFERENCE_T, make_run
from lsblock.config import validate
from lsblock.geometry import (
    LatticeSpec,
    g_set,
    g_set_count_cap,
    iter_rectangles,
    minimal_rectangle,
    order_cmp,
    shape_count_cap,
    shapes,
    sub_rectangles,
    subrectangle_count_cap,
)
from lsblock.runner import run_experiment
from lsblock.trees import enumerate_branches, branch_sum
from lsblock.verification import (
    check_appendix_a,
    check_block_diagonal,
    check_lemmas,
    check_norm_decay,
    check_trees,
    oracle,
)
from test_geometry import sites, smallest_enclosing

NORM_GRID = (0.005, 0.01, 0.02)


def failing(checks):
    out = {}
    for c in checks:
        if not c.passed:
            out[c.name] = out.get(c.name, 0) + 1
    return out


def test_unitary_equivalence(reference_run, acceptance_line):
    rep = oracle(reference_run)
    tol = 1e-8 * (1 + rep.k_norm)
    ok = rep.max_abs_dev <= tol
    acceptance_line("unitary equivalence", ok, f"max deviation {rep.max_abs_dev:.2e} <= {tol:.2e}")
    assert ok


def test_gap_theorem(reference_run, control_run, acceptance_line):
    floor = 0.5 - 1e-10
    rep = oracle(reference_run)
    step_gaps = [r.gap for r in reference_run.records]
    control_gap = oracle(control_run).gap_original
    ok = (
        min(step_gaps) >= floor
        and rep.gap_final >= floor
        and rep.ground_vector_residual <= 1e-8
        and abs(control_gap - 1.0) <= 1e-10
    )
    acceptance_line(
        "gap theorem",
        ok,
        f"min step gap {min(step_gaps):.6f}, final gap {rep.gap_final:.6f}, "
        f"vacuum residual {rep.ground_vector_residual:.1e}, t=0 gap {control_gap:.12f}",
    )
    assert ok


def test_block_diagonality_and_immutability(reference_run, acceptance_line):
    checks = check_block_diagonal(reference_run)
    bad = failing(checks)
    acceptance_line("block-diagonality and immutability", not bad, f"{len(checks)} checks, failing {bad or 'none'}")
    assert not bad


def test_explicit_constant_lemma_suite(reference_run, acceptance_line):
    results = {}
    for name, result in (
        ("d=2 N=2 n_s=4", reference_run),
        ("d=1 N=3 n_s=3", make_run(1, 3, 3, REFERENCE_T)),
        ("d=2 N=2 n_s=2", make_run(2, 2, 2, REFERENCE_T)),
    ):
        checks = check_lemmas(result)[0] + check_appendix_a(result.lattice, result.data.basis)
        results[name] = (len(checks), failing(checks))
    ok = all(not bad for _, bad in results.values())
    detail = "; ".join(f"{k}: {n} checks, failing {bad or 'none'}" for k, (n, bad) in results.items())
    acceptance_line("explicit-constant lemma suite", ok, detail)
    assert ok


@pytest.mark.xfail(strict=True, reason="decay bounds on the 2x2 square fail at every grid coupling; see README")
def test_norm_decay_bounds(acceptance_line):
    per_t = {}
    for t in NORM_GRID:
        checks, _ = check_norm_decay(make_run(2, 2, 4, t))
        per_t[t] = (len(checks), failing(checks))
    ok = all(not bad for _, bad in per_t.values())
    detail = "; ".join(f"t={t}: {n} checks, failing {bad or 'none'}" for t, (n, bad) in per_t.items())
    acceptance_line("weighted-norm decay bounds", ok, detail)
    assert ok


def test_re_expansion_oracle(reference_run, acceptance_line):
    r = reference_run
    top = r.lattice.full
    # the top rectangle before its own step carries every labelled edge
    level = len(r.steps) - 2
    exp = enumerate_branches(r, top, level)
    top_dev = float(np.max(np.abs(branch_sum(r, exp) - r.tables[level + 1].get(top))))
    tree_checks, _, diag = check_trees(r, with_paths=False)
    bad = failing(tree_checks)
    ok = not exp.truncated and top_dev <= 1e-8 and not bad and not diag["skipped"]
    acceptance_line(
        "re-expansion oracle",
        ok,
        f"top rectangle deviation {top_dev:.1e} over {len(exp.branches)} branches, "
        f"{diag['branch_count']} branches in total, failing {bad or 'none'}",
    )
    assert ok


def geometry_failures(lattice):
    rects = list(iter_rectangles(lattice))
    errors = []
    for a, b in itertools.product(rects, repeat=2):
        c = order_cmp(a, b)
        if c != -order_cmp(b, a) or (c == 0) != (a == b):
            errors.append(("order", a, b))
        if sites(a) & sites(b) and minimal_rectangle(a, b) != smallest_enclosing(lattice, sites(a) | sites(b)):
            errors.append(("minimal", a, b))
        if sites(b) < sites(a):
            expected = {
                j for j in rects
                if sites(j) <= sites(a) and smallest_enclosing(lattice, sites(b) | sites(j)) == a
            }
            if set(g_set(b, a)) != expected or len(expected) > g_set_count_cap(lattice.d, a.size):
                errors.append(("g_set", b, a))
    for a, b, c in itertools.product(rects, repeat=3):
        if order_cmp(a, b) > 0 and order_cmp(b, c) > 0 and order_cmp(a, c) <= 0:
            errors.append(("transitivity", a, b, c))
    for target in rects:
        subs = sub_rectangles(target)
        for size in range(1, target.size + 1):
            if sum(s.size == size for s in subs) > subrectangle_count_cap(lattice.d, target.size, size):
                errors.append(("subrectangle cap", target, size))
            if len(shapes(lattice.d, size)) > shape_count_cap(lattice.d, size):
                errors.append(("shape cap", size))
    return errors


def test_geometry_brute_force(acceptance_line):
    lattices = [LatticeSpec(2, n) for n in (2, 3)] + [LatticeSpec(1, n) for n in (2, 3, 4, 5)]
    errors = [e for lat in lattices for e in geometry_failures(lat)]
    acceptance_line("geometry brute force", not errors, f"{len(lattices)} lattices, {len(errors)} disagreements")
    assert not errors


def test_determinism(tmp_path, acceptance_line):
    config = validate({"seed": 7})
    for name in ("first", "second"):
        run_experiment(config, str(tmp_path / name))
    same = {
        f: (tmp_path / "first" / f).read_bytes() == (tmp_path / "second" / f).read_bytes()
        for f in ("steps.jsonl", "verification.json")
    }
    ok = all(same.values())
    acceptance_line("determinism", ok, ", ".join(f"{f} {'identical' if v else 'differs'}" for f, v in same.items()))
    assert ok
