"""Executable checks: exact identities, envelope bounds, scaling laws, moment ratios.

Every check returns a CheckResult whose status is a pure function of the
measured values and the expected values/tolerances it carries.  Random
draws come from substreams keyed by the check's name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import oracles
from .fourier import Spectrum, expected_mu_hat, lambda0_hat
from .measure import sample_shifts, select_omega
from .quadrature import (
    QuadratureSpec,
    deviation_expectation,
    fit_powerlaw,
    lp_power_integral,
    lp_power_integrals,
    mean_stderr,
)
from .rng import substream
from .tree import (
    BranchingSequence,
    Tree,
    build_tree,
    child_side_formula,
    layer_vertices,
    layer_weight_sum,
)

KINDS = ("exact", "bound", "slope", "statistical")
STATUSES = ("pass", "fail", "inconclusive", "skip", "error")
EXACT_TOL = 1e-12
#: "no growth trend" means a fitted log-log slope at most this large
TREND_TOL = 0.25


@dataclass
class CheckResult:
    name: str
    kind: str
    measured: dict
    expected: dict
    status: str
    details: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # table name -> list of row dicts
    plots: list = field(default_factory=list)  # log-log series for slope figures

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown check kind {self.kind!r}")
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "status": self.status,
            "pass": self.passed,
            "measured": self.measured,
            "expected": self.expected,
            "details": self.details,
            "plots": self.plots,
        }


# -- status rules --------------------------------------------------------------------


def judge_max(values, limit: float) -> str:
    return "pass" if max(values, default=0.0) <= limit else "fail"


def judge_slope(slope: float, target: float, tol: float, slope_se: Optional[float] = None) -> str:
    """pass iff |slope - target| <= tol; inconclusive when the slope's own error bar exceeds tol."""
    if slope_se is not None and not slope_se <= tol:
        return "inconclusive"
    return "pass" if abs(slope - target) <= tol else "fail"


def judge_trend(slope: float, tol: float = TREND_TOL, two_sided: bool = True) -> str:
    ok = abs(slope) <= tol if two_sided else slope <= tol
    return "pass" if ok else "fail"


def combine(statuses: Sequence[str]) -> str:
    s = list(statuses)
    if "error" in s:
        return "error"
    if "fail" in s:
        return "fail"
    if "inconclusive" in s:
        return "inconclusive"
    if s and all(x == "skip" for x in s):
        return "skip"
    return "pass"


def slope_stderr(x, y, yerr) -> float:
    """Standard error of the least-squares log-log slope from per-point errors."""
    lx = np.log(np.asarray(x, dtype=float))
    sig = np.asarray(yerr, dtype=float) / np.asarray(y, dtype=float)
    c = lx - lx.mean()
    return float(math.sqrt(np.sum((c / np.sum(c**2)) ** 2 * sig**2)))


def _series(label, x, y, fit=None, yerr=None, xlabel="", ylabel="", target=None):
    out = {"label": label, "x": [float(v) for v in x], "y": [float(v) for v in y], "xlabel": xlabel, "ylabel": ylabel}
    if yerr is not None:
        out["yerr"] = [float(v) for v in yerr]
    if fit is not None:
        out["slope"], out["intercept"] = fit.slope, fit.intercept
    if target is not None:
        out["target_slope"] = float(target)
    return out


def _layers(n) -> list[int]:
    return [int(n)] if np.isscalar(n) else [int(v) for v in n]


def _mc_row(M, rho, p, est, seed) -> dict:
    reps = est.reports
    return {
        "M": M,
        "rho": rho,
        "p": p,
        "value": est.mean,
        "stderr": est.stderr,
        "box_part": mean_stderr([r.box_part for r in reps])[0],
        "tail_bound": max(r.tail_bound for r in reps),
        "convergence_estimate": max(r.convergence_estimate for r in reps),
        "seed": seed,
    }


def _rel_err(a, b, floor: float = 1e-3) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.abs(b), floor)


# -- tree identities -----------------------------------------------------------------


def check_covering_sum(tree: Tree, n=(0, 1, 2, 3), p: Optional[float] = None, d: Optional[int] = None) -> CheckResult:
    """sum over layer n of l(Q)^{2d/p} against n^{-2d/p}, per layer."""
    p = tree.seq.p if p is None else p
    d = tree.seq.d if d is None else d
    e = 2.0 * d / p
    rows, errors, statuses = [], [], []
    for m in _layers(n):
        idx, complete = layer_vertices(tree, m)
        row = {"layer": m, "cubes": len(idx), "complete": complete}
        if not complete:
            statuses.append("skip")
            rows.append(row)
            continue
        s = math.fsum(tree.side[idx] ** e)
        target = float(m) ** -e if m > 0 else 1.0
        err = abs(s - target) / target
        # n = 0 is outside the covering statement (n^{-2d/p} is undefined); report only
        informational = m == 0
        row.update(sum=s, expected=target, rel_error=err, diameter_sum=d ** (d / p) * s, informational=informational)
        rows.append(row)
        if not informational:
            errors.append(err)
            statuses.append("pass" if err <= EXACT_TOL else "fail")
    return CheckResult(
        "check_covering_sum",
        "exact",
        {"max_rel_error": max(errors, default=0.0), "sums": {r["layer"]: r.get("sum") for r in rows}},
        {"value": "n^(-2d/p)", "tol": EXACT_TOL},
        combine(statuses),
        {"exponent": e, "layers": rows},
        {"covering_sum": rows},
    )


def check_layer_mass(tree: Tree, n=(0, 1, 2, 3)) -> CheckResult:
    """Weights of each complete layer sum to 1 (exactly when Fractions are kept)."""
    exact = tree.exact_weight is not None
    rows, statuses, errors = [], [], []
    for m in _layers(n):
        idx, complete = layer_vertices(tree, m)
        row = {"layer": m, "cubes": len(idx), "complete": complete}
        if not complete:
            statuses.append("skip")
            rows.append(row)
            continue
        total = layer_weight_sum(tree, idx, exact)
        if isinstance(total, Fraction):
            err = float(abs(total - 1))
            ok = total == 1
            row["sum_exact"] = str(total)
        else:
            err = abs(total - 1.0)
            ok = err <= EXACT_TOL
        row.update(sum=float(total), abs_error=err, exact=exact)
        rows.append(row)
        errors.append(err)
        statuses.append("pass" if ok else "fail")
    return CheckResult(
        "check_layer_mass",
        "exact",
        {"max_abs_error": max(errors, default=0.0)},
        {"value": 1.0, "tol": 0.0 if exact else EXACT_TOL},
        combine(statuses),
        {"exact_arithmetic": exact, "layers": rows},
        {"layer_mass": rows},
    )


def check_series_bound(tree: Tree, p: Optional[float] = None, d: Optional[int] = None, N: Optional[int] = None,
                       layers: Optional[Sequence[int]] = None, tol: float = 1e-10) -> CheckResult:
    """Partial sums of sum_n 2^{-n(p/2-1)}(n+1)^d and layerwise domination of the tree sums."""
    p = tree.seq.p if p is None else p
    d = tree.seq.d if d is None else d
    if not p > 2:
        raise ValueError(f"series bound needs p > 2 (the series diverges for p={p!r})")
    x = 2.0 ** -(p / 2.0 - 1.0)
    limit = oracles.eulerian_series(x, d)
    if N is None:
        N = 40
        while N < 100_000 and abs(math.fsum(x**n * (n + 1) ** d for n in range(N + 1)) - limit) > tol:
            N *= 2
    partial = math.fsum(x**n * (n + 1) ** d for n in range(N + 1))
    err = abs(partial - limit)

    if layers is None:
        layers = range(int(tree.layer.max()) + 1)
    rows, dominated = [], []
    for m in layers:
        idx, complete = layer_vertices(tree, m)
        if not idx:
            continue
        s = math.fsum(tree.weight[idx] ** (p / 2.0)) * (m + 1) ** d
        bound = x**m * (m + 1) ** d
        ok = s <= bound * (1.0 + EXACT_TOL)
        dominated.append(ok)
        rows.append({"layer": m, "complete": complete, "tree_sum": s, "series_term": bound,
                     "dominated": ok, "strict": s < bound})
    status = combine(["pass" if err <= tol else "fail", "pass" if all(dominated) else "fail"])
    return CheckResult(
        "check_series_bound",
        "bound",
        {"partial_sum": partial, "abs_error": err, "layers_dominated": sum(dominated), "layers": len(dominated)},
        {"limit": limit, "tol": tol, "domination": "tree_sum <= 2^(-n(p/2-1)) (n+1)^d"},
        status,
        {"N": N, "ratio": x, "all_branching": tree.seq.all_branching, "layers": rows},
        {"series_bound": rows},
    )


# -- Fourier identities --------------------------------------------------------------


def check_fourier_oracle(dims: Sequence[int] = (1, 2), measures: Optional[dict] = None, freqs: int = 100,
                         seed: int = 0, tol: float = 1e-6, xi_max: float = 10.0) -> CheckResult:
    """Closed-form transform vs brute-force midpoint/Romberg integration for <= 8-atom measures."""
    measures = {1: 8, 2: 2} if measures is None else {int(k): int(v) for k, v in measures.items()}
    # oracle resolution per dimension: (cells per atom axis, Romberg levels)
    resolution = {1: (256, 3), 2: (24, 4)}
    rows, errs = [], []
    for d in dims:
        n, levels = resolution.get(d, (8, 4))
        for i in range(measures.get(d, 1)):
            rng = substream(seed, "check_fourier_oracle", d, i)
            atoms = int(rng.integers(1, 9))
            corners = rng.random((atoms, d))
            sides = rng.uniform(0.05, 0.5, atoms)
            masses = rng.dirichlet(np.ones(atoms))
            xi = rng.uniform(-xi_max, xi_max, (freqs, d))
            closed = Spectrum.from_atoms(corners, sides, masses)(xi)
            ref = oracles.midpoint_transform(corners, sides, masses, xi, n, levels)
            e = float(np.max(_rel_err(closed, ref)))
            errs.append(e)
            rows.append({"d": d, "measure": i, "atoms": atoms, "frequencies": freqs, "max_rel_error": e,
                         "min_abs_oracle": float(np.min(np.abs(ref)))})
    return CheckResult(
        "check_fourier_oracle",
        "exact",
        {"max_rel_error": max(errs)},
        {"tol": tol},
        judge_max(errs, tol),
        {"error": "|closed - oracle| / max(|oracle|, 1e-3)", "measures": rows},
        {"fourier_oracle": rows},
    )


def check_expectation_identity(rho_grid: Sequence[float] = (0.05, 0.1, 0.25, 0.4), freqs: int = 50, d: int = 1,
                               seed: int = 0, tol: float = 1e-8, M_grid: Sequence[int] = (1, 2, 3, 8, 64),
                               xi_max: float = 20.0, nodes: int = 400) -> CheckResult:
    """E mu_hat against the Gauss-Legendre transform of the density F_rho; M independence."""
    rows, errs, m_errs = [], [], []
    for rho in rho_grid:
        rng = substream(seed, "check_expectation_identity", f"rho={float(rho)!r}")
        xi = rng.uniform(-xi_max, xi_max, (freqs, d))
        closed = expected_mu_hat(rho, xi)
        ref = oracles.density_transform(rho, xi, nodes)
        product = lambda0_hat(rho * xi) * lambda0_hat((1.0 - rho) * xi)
        e = float(np.max(_rel_err(closed, ref)))
        e_prod = float(np.max(np.abs(closed - product)))
        # E nu_hat_{M,rho} as M equal-weight expected components
        base = Spectrum.expected(rho, d)(xi)
        m_err = 0.0
        for M in M_grid:
            spec = Spectrum.zero(d)
            for _ in range(M):
                spec = spec + Spectrum.expected(rho, d, weight=1.0 / M)
            m_err = max(m_err, float(np.max(np.abs(spec(xi) - base))))
        errs.append(max(e, e_prod))
        m_errs.append(m_err)
        rows.append({"rho": rho, "max_rel_error": e, "product_abs_error": e_prod, "M_spread": m_err})
    status = combine([judge_max(errs, tol), judge_max(m_errs, EXACT_TOL)])
    return CheckResult(
        "check_expectation_identity",
        "exact",
        {"max_rel_error": max(errs), "max_M_spread": max(m_errs)},
        {"tol": tol, "M_spread_tol": EXACT_TOL},
        status,
        {"d": d, "nodes_per_piece": nodes, "rho": rows},
        {"expectation_identity": rows},
    )


# -- envelope bound --------------------------------------------------------------------


def check_ep_bound(rho_grid: Sequence[float] = (0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.45), p: float = 4.0,
                   spec: QuadratureSpec = QuadratureSpec(), d: int = 1, samples: int = 10_000, seed: int = 0,
                   xi_max: float = 1e3) -> CheckResult:
    """integral |E mu_hat|^p bounded uniformly in rho; envelope dominates pointwise."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    rows, values = [], []
    for rho in rho_grid:
        rep = lp_power_integral(Spectrum.expected(rho, d), p, spec)
        values.append(rep.value)
        rows.append(rep.row(rho=rho, M="", stderr=0.0, seed=seed))
    fit = fit_powerlaw(list(zip(rho_grid, values)))
    constant = max(values)

    rng = substream(seed, "check_ep_bound", "envelope")
    rhos = rng.choice(np.asarray(rho_grid, dtype=float), samples)
    xi = rng.choice([-1.0, 1.0], (samples, d)) * 10.0 ** rng.uniform(-3.0, math.log10(xi_max), (samples, d))
    violations, worst = 0, 0.0
    for rho in np.unique(rhos):
        sel = rhos == rho
        val = np.abs(expected_mu_hat(rho, xi[sel]))
        with np.errstate(divide="ignore"):
            bound = np.prod(np.minimum(1.0, 1.0 / (math.pi * (1.0 - rho) * np.abs(xi[sel]))), axis=1)
        violations += int(np.sum(val > bound * (1.0 + EXACT_TOL)))
        worst = max(worst, float(np.max(val / bound)))
    at_zero = [float(abs(expected_mu_hat(rho, np.zeros(d)))) for rho in rho_grid]

    status = combine([
        "pass" if all(math.isfinite(v) for v in values) else "fail",
        judge_trend(fit.slope),
        "pass" if violations == 0 else "fail",
        "pass" if all(abs(v - 1.0) <= EXACT_TOL for v in at_zero) else "fail",
    ])
    return CheckResult(
        "check_ep_bound",
        "bound",
        {"constant": constant, "trend_slope": fit.slope, "envelope_violations": violations,
         "max_ratio_to_envelope": worst},
        {"trend_slope_abs_max": TREND_TOL, "envelope_violations": 0, "value_at_zero": 1.0},
        status,
        {"p": p, "d": d, "samples": samples, "values": dict(zip(map(str, rho_grid), values))},
        {"ep_bound": rows},
        [_series("integral |E mu_hat|^p", rho_grid, values, fit, xlabel="rho", ylabel="integral")],
    )


# -- Monte Carlo scaling laws --------------------------------------------------------


def check_np_scaling(M_grid: Sequence[int] = (16, 32, 64, 128, 256), rho: float = 0.1, p: float = 4.0,
                     replicas: int = 32, spec: QuadratureSpec = QuadratureSpec(), *,
                     rho_grid: Sequence[float] = (0.0125, 0.025, 0.05, 0.1), M_fixed: int = 64, d: int = 1,
                     seed: int = 0, M_tol: float = 0.15, rho_tol: float = 0.3) -> CheckResult:
    """Slopes of integral E|mu_hat - E mu_hat|^p in M (target -p/2) and in rho (target -d)."""
    key = ("check_np_scaling",)
    m_est = [deviation_expectation(M, rho, p, replicas, spec, d=d, seed=seed, key=key) for M in M_grid]
    r_est = [deviation_expectation(M_fixed, r, p, replicas, spec, d=d, seed=seed, key=key) for r in rho_grid]

    def fit(xs, ests):
        ys = [e.mean for e in ests]
        f = fit_powerlaw(list(zip(xs, ys)))
        return f, slope_stderr(xs, ys, [e.stderr for e in ests])

    fm, sem = fit(M_grid, m_est)
    fr, ser = fit(rho_grid, r_est)
    status = combine([judge_slope(fm.slope, -p / 2.0, M_tol, sem), judge_slope(fr.slope, -float(d), rho_tol, ser)])
    return CheckResult(
        "check_np_scaling",
        "slope",
        {"slope_M": fm.slope, "slope_M_stderr": sem, "slope_rho": fr.slope, "slope_rho_stderr": ser},
        {"slope_M": [-p / 2.0 - M_tol, -p / 2.0 + M_tol], "slope_rho": [-d - rho_tol, -d + rho_tol]},
        status,
        {"replicas": replicas, "rho": rho, "M_fixed": M_fixed, "max_rel_stderr": max(
            e.stderr / e.mean for e in m_est + r_est)},
        {"np_scaling_M": [_mc_row(M, rho, p, e, seed) for M, e in zip(M_grid, m_est)],
         "np_scaling_rho": [_mc_row(M_fixed, r, p, e, seed) for r, e in zip(rho_grid, r_est)]},
        [
            _series("deviation vs M", M_grid, [e.mean for e in m_est], fm, [e.stderr for e in m_est],
                    "M", "integral E|dev|^p", -p / 2.0),
            _series("deviation vs rho", rho_grid, [e.mean for e in r_est], fr, [e.stderr for e in r_est],
                    "rho", "integral E|dev|^p", -float(d)),
        ],
    )


def check_ooo_scaling(rho_grid: Sequence[float] = (0.02, 0.04, 0.08, 0.16), p: float = 4.0,
                      spec: QuadratureSpec = QuadratureSpec(), d: int = 1, tol: float = 0.1) -> CheckResult:
    """||lambda0_hat - E mu_hat||_{L_p} against rho (target slope 1/p'), plus the direct-space norm."""
    q = p / (p - 1.0)  # p'
    unit = Spectrum.from_atoms(np.zeros((1, d)), [1.0], [1.0])
    rows, norms = [], []
    for rho in rho_grid:
        rep = lp_power_integral(unit - Spectrum.expected(rho, d), p, spec)
        norms.append(rep.norm())
        rows.append(rep.row(rho=rho, M="", stderr=0.0, seed=""))
    fit = fit_powerlaw(list(zip(rho_grid, norms)))
    order = np.argsort(rho_grid)
    monotone = bool(np.all(np.diff(np.asarray(norms)[order]) > 0))
    statuses = [judge_slope(fit.slope, 1.0 / q, tol), "pass" if monotone else "fail"]
    measured = {"slope": fit.slope, "monotone_in_rho": monotone}
    plots = [_series("||lambda0_hat - E mu_hat||_p", rho_grid, norms, fit, xlabel="rho", ylabel="L_p norm",
                     target=1.0 / q)]
    if d == 1:
        direct = [oracles.density_difference_norm(rho, q) ** (1.0 / q) for rho in rho_grid]
        fd = fit_powerlaw(list(zip(rho_grid, direct)))
        statuses.append(judge_slope(fd.slope, 1.0 / q, tol))
        measured["direct_space_slope"] = fd.slope
        for row, v in zip(rows, direct):
            row["direct_space_norm"] = v
        plots.append(_series("||lambda0 - F_rho||_p'", rho_grid, direct, fd, xlabel="rho", ylabel="L_p' norm",
                             target=1.0 / q))
    return CheckResult(
        "check_ooo_scaling",
        "slope",
        measured,
        {"slope": [1.0 / q - tol, 1.0 / q + tol]},
        combine(statuses),
        {"p": p, "p_prime": q, "norms": dict(zip(map(str, rho_grid), norms))},
        {"ooo_scaling": rows},
        plots,
    )


def check_ras_increment(seq: BranchingSequence, k: int = 0, M_k_grid: Sequence[int] = (8, 16, 32, 64),
                        spec: QuadratureSpec = QuadratureSpec(), replicas: int = 16, seed: int = 0,
                        tol: float = TREND_TOL) -> CheckResult:
    """Growing M_k with a fixed prefix: normalized L_p increment bounded, L_p1 increment -> 0.

    mu_k - mu_{k-1} = b (nu_{Q_k} - lambda_{Q_k}); its L_q^q norm is
    b^q l^{-d} times the unit-cube value, so the unit cube is integrated.
    """
    d, p, p1 = seq.d, seq.p, seq.p1
    if k >= 1 + sum(seq.M[:k]):
        raise ValueError(f"Q_{k} does not exist for the prefix {seq.M[:k]}")
    prefix = build_tree(BranchingSequence(d, p, p1, tuple(seq.M[:k]), k))
    b, l, n = float(prefix.weight[k]), float(prefix.side[k]), int(prefix.layer[k])
    q = p / (p - 1.0)
    unit = Spectrum.from_atoms(np.zeros((1, d)), [1.0], [1.0])
    rows, fit_rows = [], []
    for M in M_k_grid:
        r = child_side_formula(M, b, n, p, d)
        rho = r / l
        row = {"M": M, "rho": rho, "p": p, "seed": seed}
        if M < 2 or not 0.0 < rho < 0.5:
            row.update(excluded=True, reason="degenerate M_k=1" if M < 2 else "rho outside (0, 1/2)")
            if M >= 1 and 0.0 < rho < 0.5:
                shifts = sample_shifts(M, rho, d, substream(seed, "check_ras_increment", k, M, 0))
                f = Spectrum.from_atoms(shifts, np.full(M, rho), np.full(M, 1.0 / M)) - unit
                row["value"] = b**p * l**-d * lp_power_integral(f, p, spec).value
            rows.append(row)
            continue
        vals = []
        for rep in range(replicas):
            shifts = sample_shifts(M, rho, d, substream(seed, "check_ras_increment", k, M, rep))
            f = Spectrum.from_atoms(shifts, np.full(M, rho), np.full(M, 1.0 / M)) - unit
            rp, rp1 = lp_power_integrals(f, [p, p1], spec)
            vals.append((b**p * l**-d * rp.value, b**p1 * l**-d * rp1.value))
        mp, sp = mean_stderr([v[0] for v in vals])
        mp1, sp1 = mean_stderr([v[1] for v in vals])
        ratio = mp / (b ** (p / 2.0) * (n + 1) ** d)
        second = b**p * l ** (-d - p / q) * r ** (p / q)
        row.update(excluded=False, value=mp, stderr=sp, ratio=ratio, lp1_norm=mp1 ** (1.0 / p1),
                   lp1_power=mp1, lp1_stderr=sp1, second_term=second)
        rows.append(row)
        fit_rows.append(row)
    if len(fit_rows) < 3:
        raise ValueError("Ras check needs at least 3 non-degenerate M_k values")
    Ms = [r["M"] for r in fit_rows]
    fr = fit_powerlaw([(r["M"], r["ratio"]) for r in fit_rows])
    f1 = fit_powerlaw([(r["M"], r["lp1_norm"]) for r in fit_rows])
    lp1 = np.array([r["lp1_norm"] for r in fit_rows])
    second = np.array([r["second_term"] for r in fit_rows])
    decreasing = bool(np.all(np.diff(lp1) < 0))
    second_dec = bool(np.all(np.diff(second) < 0))
    status = combine([
        judge_trend(fr.slope, tol, two_sided=False),
        "pass" if decreasing and f1.slope < 0 else "fail",
        "pass" if second_dec else "fail",
    ])
    return CheckResult(
        "check_ras_increment",
        "slope",
        {"ratio_max": max(r["ratio"] for r in fit_rows), "ratio_slope": fr.slope, "lp1_slope": f1.slope,
         "lp1_strictly_decreasing": decreasing, "second_term_decreasing": second_dec},
        {"ratio_slope_max": tol, "lp1_slope": "< 0", "lp1_strictly_decreasing": True},
        status,
        {"k": k, "b": b, "side": l, "layer": n, "replicas": replicas},
        {"ras_increment": rows},
        [
            _series("normalized L_p increment", Ms, [r["ratio"] for r in fit_rows], fr, xlabel="M_k",
                    ylabel="ratio", target=0.0),
            _series("L_p1 increment norm", Ms, lp1, f1, xlabel="M_k", ylabel="L_p1 norm"),
        ],
    )


def check_pre_selection(M: int = 16, rho: float = 0.1, *, d: int = 1, p: float = 4.0, p1: float = 6.0,
                        trials: int = 100, pilot: int = 32, tau_factor: float = 3.0, seed: int = 0,
                        spec: QuadratureSpec = QuadratureSpec(), min_rate: float = 0.2) -> CheckResult:
    """Acceptance rate of the threshold rule over independent trials (Markov predicts >= 1 - 2/tau)."""
    sel = select_omega(M, rho, d=d, p=p, p1=p1, seed=seed, key=("check_pre_selection",), trials=trials,
                       pilot=pilot, tau_factor=tau_factor, spec=spec, exhaustive=True)
    t0, t1 = sel.thresholds
    ok = [a < t0 and b < t1 for a, b in sel.history]
    rate = sum(ok) / len(ok)
    rows = [{"trial": i, "lp_power": a, "lp1_power": b, "accepted": acc}
            for i, ((a, b), acc) in enumerate(zip(sel.history, ok))]
    return CheckResult(
        "check_pre_selection",
        "statistical",
        {"acceptance_rate": rate, "accepted": sum(ok), "trials": len(ok),
         "rate_p": sum(a < t0 for a, _ in sel.history) / len(ok),
         "rate_p1": sum(b < t1 for _, b in sel.history) / len(ok)},
        {"acceptance_rate_min": min_rate, "markov_prediction_min": max(0.0, 1.0 - 2.0 / tau_factor)},
        "pass" if rate >= min_rate else "fail",
        {"M": M, "rho": rho, "pilot": pilot, "tau_factor": tau_factor, "thresholds": list(sel.thresholds),
         "pilot_means": list(sel.pilot_means), "first_accepted": sel.trial if sel.accepted else None},
        {"pre_selection": rows},
    )


# -- moment inequality -----------------------------------------------------------------

MZ_DISTS = ("bernoulli", "uniform", "complex", "student_t")


def _parse_dist(dist) -> dict:
    spec = {"name": dist} if isinstance(dist, str) else dict(dist)
    name = spec.get("name")
    if name not in MZ_DISTS:
        raise ValueError(f"unknown distribution {name!r}; choose from {', '.join(MZ_DISTS)}")
    return spec


def _mz_draw(spec: dict, rng: np.random.Generator, shape) -> np.ndarray:
    name = spec["name"]
    if name == "uniform":
        return rng.uniform(-1.0, 1.0, shape)
    if name == "student_t":
        return rng.standard_t(spec["df"], shape)
    if name == "bernoulli":
        return rng.choice([-1.0, 1.0], shape)
    x, rho = float(spec.get("x", 1.7)), float(spec.get("rho", 0.1))
    beta = rng.random(shape) * (1.0 - rho)
    return np.exp(-2j * math.pi * beta * x) - lambda0_hat((1.0 - rho) * x)


def gaussian_abs_moment(p: float) -> float:
    """E|Z|^p for a standard normal Z."""
    return 2.0 ** (p / 2.0) * math.gamma((p + 1.0) / 2.0) / math.sqrt(math.pi)


def check_mz(dist=("bernoulli", "uniform", "complex"), p: float = 4.0,
             M_grid: Sequence[int] = (1, 4, 8, 16, 32, 64, 128, 256), replicas: int = 20_000, seed: int = 0,
             tol: float = 0.1, limit_tol: float = 0.1) -> CheckResult:
    """E|sum X_j|^p / (M^{p/2} E|X_1|^p): bounded, flat in M (M = 1 excluded from the fit).

    ``dist`` is a name, a dict {"name": ..., params}, or a list of those;
    a list runs each and merges the results.
    """
    if isinstance(dist, (list, tuple)):
        parts = [check_mz(d, p, M_grid, replicas, seed, tol, limit_tol) for d in dist]
        names = [r.details["dist"]["name"] for r in parts]
        return CheckResult(
            "check_mz",
            "statistical",
            {n: r.measured for n, r in zip(names, parts)},
            {n: r.expected for n, r in zip(names, parts)},
            combine([r.status for r in parts]),
            {n: {**r.details, "status": r.status} for n, r in zip(names, parts)},
            {k: v for r in parts for k, v in r.tables.items()},
            [s for r in parts for s in r.plots],
        )
    spec = _parse_dist(dist)
    name = spec["name"]
    if name == "student_t" and not float(spec.get("df", 0)) > p:
        raise ValueError(f"student_t with df={spec.get('df')} has no finite moment of order {p}")
    rows = []
    for M in M_grid:
        if name == "bernoulli":
            num = oracles.bernoulli_sum_moment(M, p)
            ratio = num / Fraction(M) ** int(p / 2) if isinstance(num, Fraction) and p % 2 == 0 else None
            ratio = float(ratio) if ratio is not None else float(num) / M ** (p / 2.0)
            rows.append({"M": M, "ratio": ratio, "stderr": 0.0, "moment": float(num), "x1_moment": 1.0,
                         "exact": True})
            continue
        rng = substream(seed, "check_mz", name, M)
        chunk = max(1, min(replicas, (1 << 21) // M))
        sums, xs = [], []
        for lo in range(0, replicas, chunk):
            X = _mz_draw(spec, rng, (min(chunk, replicas - lo), M))
            sums.append(np.abs(X.sum(axis=1)) ** p)
            xs.append(np.abs(X) ** p)
        s = np.concatenate(sums)
        denom = float(np.mean(np.concatenate([x.reshape(-1) for x in xs])))
        mean, se = mean_stderr(s)
        ratio = mean / (M ** (p / 2.0) * denom)
        rows.append({"M": M, "ratio": ratio, "stderr": se / (M ** (p / 2.0) * denom), "moment": mean,
                     "x1_moment": denom, "exact": False})
    fit_rows = [r for r in rows if r["M"] >= 2]
    Ms, ratios = [r["M"] for r in fit_rows], [r["ratio"] for r in fit_rows]
    fit = fit_powerlaw(list(zip(Ms, ratios)))
    se = None if name == "bernoulli" else slope_stderr(Ms, ratios, [r["stderr"] for r in fit_rows])
    statuses = [judge_slope(fit.slope, 0.0, tol, se)]
    measured = {"C_p": max(r["ratio"] for r in rows), "slope": fit.slope, "slope_stderr": se,
                "ratio_at_max_M": fit_rows[-1]["ratio"]}
    expected = {"slope": [-tol, tol]}
    if name == "bernoulli":
        # ratio -> E|Z|^p for unit-variance summands with E|X|^p = 1
        lim = gaussian_abs_moment(p)
        statuses.append("pass" if abs(fit_rows[-1]["ratio"] - lim) <= limit_tol else "fail")
        expected["limit"] = [lim - limit_tol, lim + limit_tol]
    m1 = [r for r in rows if r["M"] == 1]
    if m1:
        statuses.append("pass" if abs(m1[0]["ratio"] - 1.0) <= EXACT_TOL else "fail")
        measured["ratio_M1"] = m1[0]["ratio"]
        expected["ratio_M1"] = 1.0
    return CheckResult(
        "check_mz",
        "statistical",
        measured,
        expected,
        combine(statuses),
        {"dist": spec, "p": p, "replicas": None if name == "bernoulli" else replicas},
        {f"mz_{name}": rows},
        [_series(f"MZ ratio ({name})", Ms, ratios, fit, None if name == "bernoulli" else
                 [r["stderr"] for r in fit_rows], "M", "ratio", 0.0)],
    )


# -- p + p -----------------------------------------------------------------------------

PPLUS_FAMILIES = ("disjoint", "overlap", "spike", "zero")


class FamilyRejected(ValueError):
    """A test family measured to violate its own stated limits."""

    def __init__(self, message: str, rows):
        super().__init__(message)
        self.rows = rows


def _cubes_power(cubes, q: float, d: int) -> float:
    """integral of |sum of height * 1_[lo, hi]^d|^q, exact for piecewise constants."""
    cubes = [c for c in cubes if c[2] != 0.0 and c[1] > c[0]]
    if not cubes:
        return 0.0
    edges = np.unique(np.array([[c[0], c[1]] for c in cubes]).reshape(-1))
    mids, widths = 0.5 * (edges[1:] + edges[:-1]), np.diff(edges)
    inside = [(mids >= lo) & (mids <= hi) for lo, hi, _ in cubes]  # per axis, all axes share bounds
    total = 0.0
    for cell in np.ndindex(*(len(mids),) * d):
        v = sum(h for (lo, hi, h), m in zip(cubes, inside) if all(m[i] for i in cell))
        if v:
            total += abs(v) ** q * float(np.prod(widths[list(cell)]))
    return total


def _family(name: str, j: float, A: float, p: float, d: int):
    if name == "zero":
        return []
    if name == "spike":  # tall and thin, inside supp f
        return [(0.5, 0.5 + 1.0 / j, A ** (1.0 / p) * j ** (d / p))]
    c = 2.0 if name == "disjoint" else 0.0
    return [(c, c + j, A * j ** (-d / p))]


def check_pplus(family: str = "disjoint", A: float = 1.0, p: float = 4.0, p1: float = 6.0,
                j_grid: Sequence[int] = tuple(2**i for i in range(11)), d: int = 1, tol: float = 1e-3) -> CheckResult:
    """limsup ||f + g_j||_p^p <= ||f||_p^p + A^p for f = 1_[0,1]^d and a family g_j."""
    if family not in PPLUS_FAMILIES:
        raise ValueError(f"unknown family {family!r}; choose from {', '.join(PPLUS_FAMILIES)}")
    f = [(0.0, 1.0, 1.0)]
    fp = _cubes_power(f, p, d)
    A_eff = 0.0 if family == "zero" else A
    rows = []
    for j in j_grid:
        g = _family(family, float(j), A, p, d)
        rows.append({"j": j, "g_p_power": _cubes_power(g, p, d), "g_p1_norm": _cubes_power(g, p1, d) ** (1.0 / p1),
                     "sum_p_power": _cubes_power(f + g, p, d)})
    gp = np.array([r["g_p_power"] for r in rows])
    g1 = np.array([r["g_p1_norm"] for r in rows])
    if gp[-1] > A_eff**p * (1.0 + 1e-9) + 1e-300:
        raise FamilyRejected(f"family {family!r}: ||g_j||_p^p = {gp[-1]:.6g} exceeds A^p = {A_eff**p:.6g}", rows)
    if np.any(np.diff(g1) > 0) or (g1[0] > 0 and not g1[-1] < g1[0]):
        raise FamilyRejected(f"family {family!r}: ||g_j||_p1 does not decrease toward 0 "
                             f"({g1[0]:.6g} -> {g1[-1]:.6g})", rows)
    bound = fp + A_eff**p
    excess = np.array([r["sum_p_power"] for r in rows]) - bound
    for r, e in zip(rows, excess):
        r["excess"] = float(e)
    if family == "overlap":
        # limsup statement: at finite j the value sits above the bound; require monotone approach
        status = "pass" if np.all(np.diff(excess) < 0) else "fail"
    else:
        status = "pass" if excess[-1] <= tol else "fail"
    if family == "zero":
        status = combine([status, "pass" if abs(rows[-1]["sum_p_power"] - fp) <= EXACT_TOL else "fail"])
    return CheckResult(
        "check_pplus",
        "bound",
        {"value_at_max_j": rows[-1]["sum_p_power"], "excess_at_max_j": float(excess[-1]),
         "monotone_approach": bool(np.all(np.diff(excess) <= 0))},
        {"bound": bound, "tol": tol},
        status,
        {"family": family, "A": A, "p": p, "p1": p1, "d": d, "f_p_power": fp, "max_j": j_grid[-1]},
        {"pplus": rows},
    )
