import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cantor_lp.fourier import Spectrum, expected_mu_hat, lambda0_hat
from cantor_lp.measure import CubeMeasure
from cantor_lp.quadrature import (
    NonConvergenceError,
    QuadratureSpec,
    deviation_expectation,
    envelope_tail,
    fit_powerlaw,
    lp_power_integral,
    lp_power_integrals,
)
from cantor_lp.rng import substream


def plancherel_fourth_power(mu: CubeMeasure) -> float:
    """integral |mu_hat|^4 = integral (mu * mu)^2 for a d=1 cube measure, exactly.

    mu * mu is a sum of trapezoids, so it is piecewise linear; integrate its
    square piece by piece.
    """
    c, s, w = mu.corners[:, 0], mu.sides, mu.masses
    traps = []
    for i in range(len(w)):
        for j in range(len(w)):
            a = c[i] + c[j]
            lo, hi = sorted((s[i], s[j]))
            traps.append((a, a + lo, a + hi, a + lo + hi, w[i] * w[j] / hi))
    knots = np.unique(np.concatenate([t[:4] for t in traps]))

    def g(x):
        out = np.zeros_like(x)
        for a, b, cc, e, h in traps:
            out += h * np.interp(x, [a, b, cc, e], [0.0, 1.0, 1.0, 0.0], left=0.0, right=0.0)
        return out

    y = g(knots)
    dx = np.diff(knots)
    return float(np.sum(dx * (y[:-1] ** 2 + y[:-1] * y[1:] + y[1:] ** 2) / 3.0))


def _random_measure(rng, atoms):
    sides = rng.uniform(0.02, 0.4, atoms)
    corners = rng.uniform(0, 1, (atoms, 1)) * (1 - sides[:, None])
    w = rng.uniform(0.1, 1, atoms)
    return CubeMeasure(corners, sides, w / w.sum())


def test_lambda0_p4_on_fixed_box():
    rep = lp_power_integral(CubeMeasure.unit(1).spectrum(), 4.0, QuadratureSpec(half_width=64.0))
    # independent fine midpoint grid at 8x the resolution used
    h = rep.spacing / 8
    x = -64 + h * (np.arange(int(round(128 / h))) + 0.5)
    oracle = math.fsum(np.sinc(x) ** 4) * h
    assert rep.value == pytest.approx(oracle, rel=1e-12)
    # integral of sinc^4 over the line is 2/3; the certified tail covers the rest
    assert 0 <= 2 / 3 - rep.value <= rep.tail_bound
    assert rep.tail_bound < 1e-6


def test_zero_function():
    rep = lp_power_integral(Spectrum.zero(1), 4.0)
    assert rep.value == 0 and rep.tail_bound == 0


def test_degenerate_deviation_is_zero():
    e = Spectrum.expected(0.1, 1)
    assert lp_power_integral(e - e, 4.0).value < 1e-40  # exact cancellation up to rounding


def test_expected_transform_against_scipy():
    from scipy.integrate import quad

    rho, p = 0.1, 4.0
    rep = lp_power_integral(Spectrum.expected(rho, 1), p)
    f = lambda x: abs(expected_mu_hat(rho, x)) ** p  # noqa: E731
    edges = np.arange(0, 401, 1.0)
    ref = 2 * math.fsum(quad(f, a, b, epsabs=1e-15)[0] for a, b in zip(edges[:-1], edges[1:]))
    ref += 2 * 2 / (3 * (math.pi**2 * rho * (1 - rho)) ** 4 * 400**3)  # envelope tail beyond 400
    assert rep.value == pytest.approx(ref, rel=1e-3)
    assert rep.value <= ref + 1e-12


@pytest.mark.parametrize("atoms", [1, 3, 8])
def test_oracle_agreement_small_measures(atoms):
    mu = _random_measure(substream(12, "plancherel", atoms), atoms)
    rep = lp_power_integral(mu.spectrum(), 4.0)
    exact = plancherel_fourth_power(mu)
    assert abs(rep.value - exact) < 1e-3 * exact
    assert exact - rep.value <= rep.tail_bound * (1 + 1e-9) + 1e-14


def test_tail_shrinks_with_box():
    s = _random_measure(substream(13), 5).spectrum()
    tails = [lp_power_integral(s, 4.0, QuadratureSpec(half_width=X)).tail_bound for X in (10, 20, 40, 80)]
    assert all(a > b for a, b in zip(tails, tails[1:]))
    w, c = s.envelope_terms()
    for p in (2.5, 4.0, 6.0):
        assert envelope_tail(w, c, p, 50.0, 1) > envelope_tail(w, c, p, 60.0, 1) > 0


def test_total_consistent_across_refinement():
    s = _random_measure(substream(14), 4).spectrum()
    a = lp_power_integral(s, 3.0, QuadratureSpec(refinement_levels=0))
    b = lp_power_integral(s, 3.0, QuadratureSpec(refinement_levels=2))
    assert abs(a.value - b.value) <= max(a.tail_bound, 1e-9 * a.value)


def test_change_of_variables():
    spec = QuadratureSpec(half_width=40.0, points_per_axis=4096, tail_mode="none")
    f = lambda xi: lambda0_hat(xi)  # noqa: E731
    for c in (2.0, 0.5):
        scaled = lambda xi: lambda0_hat(c * xi)  # noqa: E731
        base = lp_power_integral(f, 4.0, spec, d=1).value
        got = lp_power_integral(scaled, 4.0, QuadratureSpec(half_width=40.0 / c, points_per_axis=4096,
                                                             tail_mode="none"), d=1).value
        assert got == pytest.approx(base / c, rel=1e-9)


def test_two_dimensional_product():
    # |lambda0_hat|^p on R^2 factors into the square of the 1-d integral
    one = lp_power_integral(CubeMeasure.unit(1).spectrum(), 4.0, QuadratureSpec(half_width=16.0)).value
    two = lp_power_integral(CubeMeasure.unit(2).spectrum(), 4.0, QuadratureSpec(half_width=16.0)).value
    assert two == pytest.approx(one**2, rel=1e-12)


def test_several_exponents_share_grid():
    s = _random_measure(substream(15), 3).spectrum()
    spec = QuadratureSpec(half_width=30.0, max_spacing=0.05)  # default spacing follows the largest p
    reps = lp_power_integrals(s, [3.0, 5.0], spec)
    assert reps[0].value == lp_power_integral(s, 3.0, spec).value
    assert reps[1].norm() == pytest.approx(reps[1].value ** 0.2)
    with pytest.raises(ValueError):
        lp_power_integrals(s, [1.0])


def test_non_convergence_reported():
    wild = lambda xi: np.exp(2j * np.pi * 37.3 * xi[:, 0]) * (1 + np.cos(2 * np.pi * 41.7 * xi[:, 0]))  # noqa: E731
    with pytest.raises(NonConvergenceError) as err:
        lp_power_integral(wild, 4.0, QuadratureSpec(half_width=3.0, points_per_axis=8, refinement_levels=1), d=1)
    assert err.value.reports and not err.value.reports[0].converged


def test_callable_needs_box():
    with pytest.raises(ValueError):
        lp_power_integral(lambda xi: lambda0_hat(xi), 4.0, d=1)


def test_monte_carlo_deterministic():
    spec = QuadratureSpec(points_per_axis=64, refinement_levels=0)
    a = deviation_expectation(8, 0.1, 4.0, 16, spec, seed=3)
    b = deviation_expectation(8, 0.1, 4.0, 16, spec, seed=3)
    assert np.array_equal(a.values, b.values) and a.mean == b.mean and a.stderr == b.stderr
    c = deviation_expectation(8, 0.1, 4.0, 16, spec, seed=4)
    assert a.mean != c.mean
    with pytest.raises(ValueError):
        deviation_expectation(8, 0.1, 4.0, 8, spec)


def test_deviation_decreases_with_M():
    spec = QuadratureSpec(points_per_axis=64, refinement_levels=0)
    small = deviation_expectation(16, 0.1, 4.0, 16, spec, seed=1)
    large = deviation_expectation(1024, 0.1, 4.0, 16, spec, seed=1)
    # slope -p/2 predicts a factor 64^2 = 4096; order of magnitude only
    assert 400 < small.mean / large.mean < 40000


def test_fit_powerlaw_examples():
    fit = fit_powerlaw([(x, 7 * x**-2.0) for x in (1, 2, 4, 8)])
    assert fit.slope == pytest.approx(-2.0, abs=1e-12) and fit.residual < 1e-12
    assert math.exp(fit.intercept) == pytest.approx(7)
    fit = fit_powerlaw([(x, x**0.75) for x in (1, 2, 3, 5, 8)])
    assert fit.slope == pytest.approx(0.75, abs=1e-12)
    for bad in ([(1, 1)], [(1, 1), (2, 2)], [(1, 1), (2, 0), (3, 1)], [(-1, 1), (2, 2), (3, 3)]):
        with pytest.raises(ValueError):
            fit_powerlaw(bad)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 10), st.lists(st.floats(0.1, 100), min_size=3, max_size=8, unique=True))
def test_fit_powerlaw_recovers_exact_laws(slope, a, xs):
    if max(xs) / min(xs) < 1.5:
        return
    fit = fit_powerlaw([(x, a * x**slope) for x in xs])
    assert fit.slope == pytest.approx(slope, abs=1e-8)
    assert np.allclose(fit.predict(xs), [a * x**slope for x in xs], rtol=1e-8)


def test_oversized_grid_refused():
    tiny = CubeMeasure(np.array([[0.0], [0.5]]), [1e-7, 1e-7], [0.5, 0.5]).spectrum()  # fine and wide
    with pytest.raises(NonConvergenceError, match="cells per axis"):
        lp_power_integral(tiny, 4.0)
