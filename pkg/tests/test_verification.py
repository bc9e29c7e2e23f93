import math

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import make_run
from lsblock.diagonalizer import RunResult, SeriesOptions
from lsblock.geometry import LatticeSpec, Rectangle, step_sequence
from lsblock.models import ModelSpec, build_initial_data
from lsblock.operators import h0_diag
from lsblock.verification import (
    SUITES,
    BoundCheck,
    ScanPoint,
    ScanReport,
    bound,
    check_appendix_a,
    check_block_diagonal,
    check_form_bound,
    check_gap_lemma,
    check_lemmas,
    check_norm_decay,
    check_step_gaps,
    check_theorem_main,
    exact_diagonalize,
    gap_lemma_coefficient,
    gap_lemma_min_eig,
    lower_bound,
    oracle,
    psd,
    regime,
    t_scan,
    verify,
)

R = Rectangle


def closed_form_coefficient(t, d):
    """``1 - 3t sum_{l>=1} x^{l-1} (l+1)^{2d-1}`` with ``x = t^{1/4}``, via power-sum identities."""
    x = t**0.25
    # sum_{m>=0} m x^m and sum_{m>=0} m^3 x^m in closed form
    power_sums = {1: x / (1 - x) ** 2, 3: x * (1 + 4 * x + x * x) / (1 - x) ** 4}
    # sum_{m>=2} m^p x^{m-2} = (S_p - x) / x^2
    tail = (power_sums[2 * d - 1] - x) / x**2
    return 1 - 3 * t * tail


def names(checks):
    return {c.name for c in checks}


# bound checks


def test_bound_check_tolerance():
    assert bound("a", 1.0 + 5e-11, 1.0, "x").passed
    assert not bound("a", 1.0 + 1e-9, 1.0, "x").passed
    assert lower_bound("a", 0.6, 0.5, "x").passed
    assert psd("a", -1e-11, "x").passed and not psd("a", -1e-9, "x").passed
    c = BoundCheck("n", 0.1, 0.2, "anchor", {"k": 1})
    assert c.to_json() == {"name": "n", "lhs": 0.1, "rhs": 0.2, "passed": True, "anchor": "anchor", "context": {"k": 1}}


# exact diagonalization


def test_exact_diagonalize_diagonal_input():
    spec = exact_diagonalize(np.diag([3.0, -1.0, 2.0]))
    assert list(spec.values) == [-1.0, 2.0, 3.0]
    assert abs(spec.ground_vector[1]) == 1.0


def test_exact_diagonalize_sparse_path():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(60, 60))
    k = (a + a.T) / 2
    dense = exact_diagonalize(k, how_many=3)
    sparse = exact_diagonalize(sp.csr_matrix(k), how_many=3, dense_limit=10)
    assert np.allclose(dense.values, sparse.values, atol=1e-9)


def test_oracle_at_zero_coupling(control_run):
    rep = oracle(control_run)
    assert rep.spectrum_original[0] == pytest.approx(0.0, abs=1e-12)
    assert rep.gap_original == pytest.approx(1.0, abs=1e-10)
    assert rep.max_abs_dev <= 1e-12


def test_oracle_on_reference_run(reference_run):
    rep = oracle(reference_run)
    assert rep.max_abs_dev <= 1e-8 * (1 + rep.k_norm)
    assert rep.ground_vector_residual <= 1e-8
    assert rep.vacuum_energy == pytest.approx(rep.spectrum_original[0], abs=1e-10)
    assert rep.gap_final >= 0.5
    checks = check_theorem_main(reference_run, rep)
    assert all(c.passed for c in checks)
    assert names(checks) == {"spectrum_equivalence", "final_gap", "ground_state_gap", "vacuum_eigenvector", "vacuum_is_ground"}


# step-level checks


def test_step_gaps_and_block_structure(reference_run):
    assert all(c.passed for c in check_step_gaps(reference_run))
    block = check_block_diagonal(reference_run)
    assert all(c.passed for c in block)
    assert {"processed_block_diagonal", "inherited_block_diagonal", "untouched_entries"} <= names(block)


def test_block_check_detects_tampering(reference_run):
    r = reference_run
    tables = list(r.tables)
    bond = step_sequence(r.lattice)[0]
    # perturb a processed bond entry at the last level
    last = tables[-1]
    entries = dict(last.entries)
    m = entries[bond].copy()
    m[1, 0] += 1e-3
    m[0, 1] += 1e-3
    entries[bond] = m
    tables[-1] = last.evolve(last.step, entries)
    forged = RunResult(r.lattice, r.data, r.t, r.options, tables, r.records, r.step_data)
    failed = {c.name for c in check_block_diagonal(forged) if not c.passed}
    assert {"processed_block_diagonal", "untouched_entries"} <= failed


@pytest.mark.parametrize("fixture", ["reference_run", "chain_run", "small_square_run"])
def test_lemma_suite(fixture, request):
    checks, diag = check_lemmas(request.getfixturevalue(fixture))
    assert all(c.passed for c in checks)
    assert {
        "generator_term_norm",
        "generator_term_relative_norm",
        "diagonalized_potential_growth",
        "relative_form_bound",
        "half_resolvent_norm",
        "resolvent_norm",
        "aux_resolvent_ratio",
    } == names(checks)
    assert "vsquare_ratio" in diag and "aux_ratio" in diag


@pytest.mark.parametrize(
    "lattice,n_s", [(LatticeSpec(2, 2), 3), (LatticeSpec(1, 4), 3), (LatticeSpec(2, 3), 2)], ids=str
)
def test_appendix_inequalities(lattice, n_s):
    basis = build_initial_data(ModelSpec(n_s=n_s), lattice.d).basis
    checks = check_appendix_a(lattice, basis)
    assert checks and all(c.passed for c in checks)


def test_form_bound_check():
    data = build_initial_data(ModelSpec(n_s=4), 2)
    checks = check_form_bound(data, samples=200, seed=3)
    assert len(checks) == 2 and all(c.passed for c in checks)
    assert check_form_bound(data, seed=3)[0].lhs == checks[0].lhs


# gap lemma


@pytest.mark.parametrize("t,d", [(0.02, 2), (0.005, 2), (0.001, 2), (0.02, 1), (0.3, 1)])
def test_gap_lemma_coefficient_matches_closed_form(t, d):
    assert gap_lemma_coefficient(t, d) == pytest.approx(closed_form_coefficient(t, d), abs=1e-12)


def test_gap_lemma_coefficient_values():
    assert gap_lemma_coefficient(0.0, 2) == 1.0
    assert gap_lemma_coefficient(0.02, 2) == pytest.approx(-1.62566, abs=1e-5)
    assert gap_lemma_coefficient(0.005, 2) == pytest.approx(0.64181, abs=1e-5)
    with pytest.raises(ValueError):
        gap_lemma_coefficient(1.0, 2)


def test_gap_lemma_at_zero_coupling_is_equality(control_run):
    checks, diag = check_gap_lemma(control_run)
    assert diag["coefficient_positive"]
    assert all(c.passed and abs(c.lhs) <= 1e-12 for c in checks)


def test_gap_lemma_mutation_flips_the_check():
    r = make_run(2, 2, 4, 0.005)
    coeff = gap_lemma_coefficient(0.005, 2)
    step = r.steps[-1]
    sd = r.step_data[step]
    h = h0_diag(step.n_sites, r.data.basis)
    assert gap_lemma_min_eig(sd.G, sd.E, h, coeff) >= 0
    # blow the interaction part of G up a hundredfold
    g = np.diag(h) + 100 * (sd.G - np.diag(h))
    assert gap_lemma_min_eig(g, g[0, 0].real, h, coeff) < -1e-10
    checks, _ = check_gap_lemma(r)
    assert all(c.passed for c in checks)


# norm decay


def test_regime_classification():
    lat = LatticeSpec(2, 2)
    seq = step_sequence(lat)
    bond, square = seq[0], seq[-1]
    assert regime(-1, None, bond, lat) == "1"
    assert regime(-1, None, square, lat) == "1"
    # floor(r^{1/4}) = 1 for r <= 15: steps of size 1 against r = 2 fall in the last regime
    assert regime(0, seq[0], square, lat) == "3"
    assert regime(4, square, square, lat) == "3-after"
    assert regime(0, bond, bond, lat) == "3-after"


def test_regime_boundaries_for_large_targets():
    lat = LatticeSpec(1, 40)
    target = R((16,), (1,))
    # floor(16^{1/4}) = 2
    assert regime(0, R((1,), (1,)), target, lat) == "1"
    assert regime(0, R((2,), (1,)), target, lat) == "2"
    assert regime(0, R((14,), (1,)), target, lat) == "3"


def test_norm_decay_at_zero_coupling(control_run):
    checks, diag = check_norm_decay(control_run)
    assert all(c.passed for c in checks)
    assert diag["x_d"] == 40
    base = [c for c in checks if c.name == "bond_base_case"]
    assert len(base) == 4 and all(c.lhs == pytest.approx(0.5, abs=1e-10) for c in base)


def test_norm_decay_reports_every_key(reference_run):
    checks, diag = check_norm_decay(reference_run)
    counts = diag["regime_counts"]
    assert counts == {"1": 4, "2": 0, "3": 10, "3-after": 15}
    hyp = [c for c in checks if c.name == "norm_working_hypothesis"]
    assert len(hyp) == sum(counts.values())


# full report and scans


def test_verify_rejects_unknown_suite(reference_run):
    with pytest.raises(ValueError):
        verify(reference_run, ["main", "bogus"])


def test_verify_report_summary(small_square_run):
    rep = verify(small_square_run, [s for s in SUITES if s != "norms"])
    s = rep.summary()
    assert s["total"] == len(rep.checks)
    assert s["passed"] == s["total"] and rep.passed
    assert set(rep.to_json()) == {"summary", "checks", "diagnostics"}


def test_scan_of_zero_grid_passes():
    lat = LatticeSpec(1, 3)
    data = build_initial_data(ModelSpec(n_s=2), 1)
    scan = t_scan(lat, data, [0.0])
    assert scan.points[0].passed
    assert scan.frontier == 0.0 and scan.monotone


def test_scan_frontier_and_monotonicity():
    pts = [ScanPoint(0.0, True, {}), ScanPoint(0.01, True, {}), ScanPoint(0.02, False, {"x": 1})]
    scan = ScanReport(pts)
    assert scan.frontier == 0.01 and scan.monotone
    assert scan.check_frontiers() == {"x": 0.02}
    broken = ScanReport(pts + [ScanPoint(0.03, True, {})])
    assert not broken.monotone
    assert ScanReport([ScanPoint(0.0, False, {"x": 1})]).frontier is None


def test_scan_reference_lattice_frontier():
    lat = LatticeSpec(2, 2)
    data = build_initial_data(ModelSpec(n_s=4), 2)
    suites = [s for s in SUITES if s not in ("norms", "trees", "paths")]
    scan = t_scan(lat, data, [0.0, 0.01, 0.02], suites=suites)
    assert scan.monotone
    assert scan.frontier is not None and scan.frontier >= 0.02


def test_scan_records_algorithm_errors():
    lat = LatticeSpec(1, 3)
    data = build_initial_data(ModelSpec(n_s=2), 1)
    scan = t_scan(lat, data, [0.01], options=SeriesOptions(gap_floor=1.0, gap_assert_t_max=0.0))
    assert not scan.points[0].passed
    assert scan.points[0].failed_checks == {"algorithm_error": 1}
    assert math.isfinite(scan.points[0].t)
