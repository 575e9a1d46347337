import math

import numpy as np
import pytest

from cantor_lp import checks
from cantor_lp.checks import (
    CheckResult,
    FamilyRejected,
    check_covering_sum,
    check_expectation_identity,
    check_ep_bound,
    check_fourier_oracle,
    check_layer_mass,
    check_mz,
    check_np_scaling,
    check_ooo_scaling,
    check_pplus,
    check_pre_selection,
    check_ras_increment,
    check_series_bound,
    combine,
    judge_slope,
    judge_trend,
)
from cantor_lp.oracles import bernoulli_sum_moment, density_difference_norm, eulerian_series, uniform_sum_fourth_moment
from cantor_lp.quadrature import QuadratureSpec, deviation_expectation
from cantor_lp.tree import BranchingSequence, build_tree

COARSE = QuadratureSpec(points_per_axis=64, refinement_levels=0)


def tree_of(M, K=None, p=4.0):
    K = len(M) if K is None else K
    return build_tree(BranchingSequence(d=1, p=p, p1=p + 2, M=tuple(M), K=K), exact=True)


# -- status rules ------------------------------------------------------------------


def test_status_rules():
    assert combine(["pass", "skip"]) == "pass"
    assert combine(["skip", "skip"]) == "skip"
    assert combine(["pass", "inconclusive"]) == "inconclusive"
    assert combine(["inconclusive", "fail"]) == "fail"
    assert combine(["fail", "error"]) == "error"
    assert judge_slope(-1.9, -2.0, 0.15) == "pass"
    assert judge_slope(-1.8, -2.0, 0.15) == "fail"
    assert judge_slope(-2.0, -2.0, 0.15, slope_se=0.2) == "inconclusive"
    assert judge_trend(0.3) == "fail" and judge_trend(-0.3, two_sided=False) == "pass"
    with pytest.raises(ValueError):
        CheckResult("x", "exact", {}, {}, "maybe")
    with pytest.raises(ValueError):
        CheckResult("x", "vague", {}, {}, "pass")


# -- combinatorial identities ---------------------------------------------------------


def test_covering_sum_examples():
    r = check_covering_sum(tree_of((3, 4, 4, 4)), n=(0, 1, 2))
    assert r.status == "pass"
    assert r.measured["sums"][0] == 1.0
    assert r.measured["sums"][1] == pytest.approx(1.0, abs=1e-12)
    assert r.measured["sums"][2] == pytest.approx(2**-0.5, abs=1e-12)
    assert r.measured["sums"][2] == pytest.approx(0.707107, abs=1e-6)


def test_covering_sum_skips_incomplete_layers():
    r = check_covering_sum(tree_of((3, 4), K=2), n=(2,))
    assert r.status == "skip"
    r = check_covering_sum(tree_of((3, 4), K=2), n=(1, 2))
    assert r.status == "pass"


def test_layer_mass_examples():
    r = check_layer_mass(tree_of((3, 4, 6)), n=(0, 1))
    assert r.status == "pass" and r.measured["max_abs_error"] == 0
    r = check_layer_mass(tree_of((3, 4, 4, 4)), n=(2,))
    assert r.status == "pass" and r.tables["layer_mass"][0]["sum_exact"] == "1"
    assert r.tables["layer_mass"][0]["cubes"] == 12


def test_series_bound_examples():
    r = check_series_bound(tree_of((3, 4, 4, 4)), layers=(0, 1, 2))
    assert r.status == "pass"
    assert r.measured["partial_sum"] == pytest.approx(4.0, abs=1e-10)
    assert r.details["N"] == 40
    assert all(row["strict"] for row in r.details["layers"] if row["layer"] > 0)
    with pytest.raises(ValueError, match="p > 2"):
        check_series_bound(tree_of((3,)), p=2.0)


def test_eulerian_series_closed_forms():
    assert eulerian_series(0.5, 1) == pytest.approx(4.0, abs=1e-15)
    for x, d in ((0.3, 2), (0.5, 3), (0.7, 1)):
        brute = math.fsum(x**n * (n + 1) ** d for n in range(2000))
        assert eulerian_series(x, d) == pytest.approx(brute, rel=1e-13)


# -- transform identities -----------------------------------------------------------------


def test_fourier_oracle_small():
    r = check_fourier_oracle(dims=(1,), measures={1: 2}, freqs=30, seed=3)
    assert r.status == "pass" and r.measured["max_rel_error"] < 1e-6
    assert all(row["atoms"] <= 8 for row in r.tables["fourier_oracle"])


def test_expectation_identity_small():
    r = check_expectation_identity(rho_grid=(0.1, 0.3), freqs=20, seed=4)
    assert r.status == "pass"
    assert r.measured["max_rel_error"] < 1e-8 and r.measured["max_M_spread"] <= 1e-12


def test_ep_bound_small():
    r = check_ep_bound(rho_grid=(0.05, 0.1, 0.3), spec=COARSE, samples=2000, seed=2)
    assert r.status == "pass"
    assert r.measured["envelope_violations"] == 0
    assert math.isfinite(r.measured["constant"])


# -- scaling checks, coarse -------------------------------------------------------------------


def test_np_replica_consistency():
    key = ("check_np_scaling",)
    a = deviation_expectation(32, 0.1, 4.0, 16, COARSE, seed=5, key=key)
    b = deviation_expectation(32, 0.1, 4.0, 64, COARSE, seed=5, key=key)
    assert np.array_equal(a.values, b.values[:16])  # same replica streams
    assert abs(a.mean - b.mean) <= 2 * math.hypot(a.stderr, b.stderr)


def test_np_scaling_coarse():
    r = check_np_scaling(M_grid=(16, 64, 256), replicas=16, spec=COARSE, rho_grid=(0.025, 0.05, 0.1), seed=1)
    assert r.status in ("pass", "inconclusive")
    assert abs(r.measured["slope_M"] + 2) < 0.3
    assert {"np_scaling_M", "np_scaling_rho"} == set(r.tables)
    assert list(r.tables["np_scaling_M"][0])[:9] == ["M", "rho", "p", "value", "stderr", "box_part", "tail_bound",
                                                      "convergence_estimate", "seed"]


def test_np_rho_slope_on_wide_grid_is_steeper():
    # on rho up to 0.4 the rho^-d law is not yet asymptotic: the exact second moment of the
    # deviation integrand (d=1, p=4) gives a log-log slope near -5/3 there
    from cantor_lp.oracles import deviation_fourth_moment

    x = np.linspace(-400, 400, 400_001)
    h = x[1] - x[0]
    rhos = [0.05, 0.1, 0.2, 0.4]
    vals = [float(np.sum(deviation_fourth_moment(64, r, x)) * h) for r in rhos]
    slope = np.polyfit(np.log(rhos), np.log(vals), 1)[0]
    assert -1.8 < slope < -1.5


def test_ooo_scaling_coarse():
    r = check_ooo_scaling(spec=COARSE)
    assert r.status == "pass"
    assert r.measured["slope"] == pytest.approx(0.75, abs=0.1)
    assert r.measured["direct_space_slope"] == pytest.approx(0.75, abs=0.1)


def test_density_difference_norm_against_quadrature():
    from scipy.integrate import quad

    from cantor_lp.measure import f_rho

    for rho in (0.05, 0.2):
        q = 4 / 3
        g = lambda t: abs(1 - float(f_rho(rho, t))) ** q  # noqa: E731
        ref = sum(quad(g, a, b)[0] for a, b in ((0, rho), (rho, 1 - rho), (1 - rho, 1)))
        assert density_difference_norm(rho, q) == pytest.approx(ref, rel=1e-9)


def test_ras_excludes_degenerate_rows():
    seq = BranchingSequence(d=1, p=4.0, p1=6.0, M=(8, 4), K=2)
    r = check_ras_increment(seq, M_k_grid=(1, 8, 16, 32), spec=COARSE, replicas=16, seed=1)
    rows = r.tables["ras_increment"]
    assert rows[0]["excluded"] and "degenerate" in rows[0]["reason"]
    assert not any(row["excluded"] for row in rows[1:])
    assert r.measured["second_term_decreasing"]
    with pytest.raises(ValueError):
        check_ras_increment(seq, M_k_grid=(1, 8), spec=COARSE, replicas=16)


def test_pre_selection_small():
    r = check_pre_selection(M=8, trials=30, pilot=16, spec=COARSE, seed=2)
    assert r.status == "pass"
    assert r.measured["acceptance_rate"] >= 1 / 3


# -- moments --------------------------------------------------------------------------


def test_bernoulli_moment_exact():
    for M in (1, 2, 3, 10, 64):
        assert bernoulli_sum_moment(M, 4) == 3 * M**2 - 2 * M


def test_uniform_fourth_moment_oracle():
    rng = np.random.default_rng(0)
    for M in (1, 3):
        s = rng.uniform(-1, 1, (400_000, M)).sum(axis=1)
        assert np.mean(s**4) == pytest.approx(uniform_sum_fourth_moment(M), rel=0.02)
    assert uniform_sum_fourth_moment(1) == pytest.approx(0.2)


def test_mz_bernoulli_exact():
    r = check_mz("bernoulli", M_grid=(1, 4, 16, 64, 256))
    assert r.status == "pass"
    assert r.measured["ratio_M1"] == 1.0
    assert r.measured["ratio_at_max_M"] == pytest.approx(3 - 2 / 256, abs=1e-12)
    assert r.measured["C_p"] <= 3


def test_mz_uniform_and_complex():
    r = check_mz(["uniform", "complex"], M_grid=(1, 4, 16, 64), replicas=4000, seed=3, tol=0.15)
    assert set(r.measured) == {"uniform", "complex"}
    assert r.measured["uniform"]["ratio_M1"] == pytest.approx(1.0, abs=1e-12)
    assert r.status in ("pass", "inconclusive")


def test_mz_rejects_heavy_tails():
    with pytest.raises(ValueError, match="no finite moment"):
        check_mz({"name": "student_t", "df": 3}, p=4.0)
    with pytest.raises(ValueError):
        check_mz("cauchy")


# -- p + p ---------------------------------------------------------------------------------


def test_pplus_disjoint_exact_value():
    r = check_pplus("disjoint")
    assert r.status == "pass"
    assert r.measured["value_at_max_j"] == pytest.approx(2.0, abs=1e-12)
    assert r.measured["value_at_max_j"] <= 2 + 1e-3


def test_pplus_zero_family_gives_equality():
    r = check_pplus("zero")
    assert r.status == "pass" and r.measured["value_at_max_j"] == 1.0


def test_pplus_overlap_approaches_bound():
    r = check_pplus("overlap")
    assert r.status == "pass" and r.measured["monotone_approach"]
    assert r.measured["excess_at_max_j"] < 1.0


def test_pplus_spike_rejected():
    with pytest.raises(FamilyRejected) as err:
        check_pplus("spike")
    g1 = [row["g_p1_norm"] for row in err.value.rows]
    assert g1[-1] > g1[0]  # the L_p1 norm grows, violating the family's own hypothesis
    assert all(row["g_p_power"] == pytest.approx(1.0) for row in err.value.rows)


def test_results_are_json_ready():
    from cantor_lp.io import dumps

    r = check_covering_sum(tree_of((3, 4, 4, 4)), n=(1, 2))
    doc = r.to_json()
    assert doc["pass"] and "tables" not in doc
    dumps(doc)
    assert checks.KINDS == ("exact", "bound", "slope", "statistical")
