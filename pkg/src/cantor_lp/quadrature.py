"""L_p^p integrals of Fourier transforms over R^d, with certified tails.

The box [-X, X]^d is integrated with a tensor midpoint rule.  For an even
integer p and a transform of a signed measure supported in a set of width E
per axis, |f|^p is band limited to [-pE/2, pE/2] per axis, so the midpoint
rule with cell width h < 2/(pE) reproduces the integral over R^d up to the
part outside the box.  That part is bounded in closed form from the
product-of-min envelope.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .fourier import Spectrum
from .rng import substream

log = logging.getLogger(__name__)

TAIL_MODES = ("envelope-analytic", "none")
#: points of the first axis evaluated per batch
AXIS_CHUNK = 1 << 20
#: relative rounding level, against the envelope integral, below which changes are noise
ROUNDOFF = 1e-13


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, reports=None):
        super().__init__(message)
        self.reports = reports


@dataclass(frozen=True)
class QuadratureSpec:
    """Integration box and resolution.

    ``half_width`` None means adaptive: start at 2 / (smallest side) and double
    until the envelope tail is below ``tail_rtol`` of the box part.
    ``points_per_axis`` cells cover the initial box; doubling the box keeps
    the cell width, and each refinement level halves it.
    """

    half_width: Optional[float] = None
    points_per_axis: int = 256
    refinement_levels: int = 1
    tail_mode: str = "envelope-analytic"
    max_spacing: Optional[float] = None
    tail_rtol: float = 1e-3
    conv_rtol: float = 1e-6
    max_doublings: int = 24
    max_cells_per_axis: int = 1 << 25

    def __post_init__(self):
        if self.points_per_axis < 8:
            raise ValueError("points_per_axis must be at least 8")
        if self.refinement_levels < 0:
            raise ValueError("refinement_levels must be nonnegative")
        if self.tail_mode not in TAIL_MODES:
            raise ValueError(f"tail_mode must be one of {TAIL_MODES}, got {self.tail_mode!r}")
        if self.half_width is not None and not self.half_width > 0:
            raise ValueError("half_width must be positive")

    def with_overrides(self, **kw) -> "QuadratureSpec":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass
class NormReport:
    p: float
    value: float
    box_part: float
    tail_bound: float
    convergence_estimate: float
    half_width: float = 0.0
    spacing: float = 0.0
    converged: bool = True

    def norm(self) -> float:
        """The L_p norm itself, value ** (1/p)."""
        return self.value ** (1.0 / self.p)

    def row(self, **extra) -> dict:
        out = dict(extra)
        out.update(
            p=self.p,
            value=self.value,
            box_part=self.box_part,
            tail_bound=self.tail_bound,
            convergence_estimate=self.convergence_estimate,
        )
        return out


# -- envelope tails --------------------------------------------------------------


def _axis_integral(c: float, p: float, X: float) -> float:
    """integral over [-X, X] of min(1, c/|t|)^p."""
    if X <= c:
        return 2.0 * X
    return 2.0 * (c + c**p * (c ** (1.0 - p) - X ** (1.0 - p)) / (p - 1.0))


def _axis_tail(c: float, p: float, X: float) -> float:
    """integral over |t| > X of min(1, c/|t|)^p."""
    if X >= c:
        return 2.0 * c**p * X ** (1.0 - p) / (p - 1.0)
    return 2.0 * (c - X) + 2.0 * c / (p - 1.0)


def product_tail(c: float, p: float, X: float, d: int) -> float:
    """integral outside [-X, X]^d of prod_j min(1, c/|xi_j|)^p."""
    if not math.isfinite(c):
        return math.inf
    full = 2.0 * c * p / (p - 1.0)
    inside = _axis_integral(c, p, X)
    tail = _axis_tail(c, p, X)
    # full^d - inside^d without cancellation
    return tail * sum(full**k * inside ** (d - 1 - k) for k in range(d))


def envelope_tail(weights: np.ndarray, scales: np.ndarray, p: float, X: float, d: int) -> float:
    """Bound on the integral of (sum_t w_t prod_j min(1, c_t/|xi_j|))^p outside the box.

    Uses (sum w_t phi_t)^p <= W^{p-1} sum w_t phi_t^p with W = sum w_t.
    """
    w = np.asarray(weights, dtype=float)
    W = float(w.sum())
    if W == 0.0:
        return 0.0
    scales = np.asarray(scales, dtype=float)
    # components sharing a scale integrate identically
    uniq, inv = np.unique(scales, return_inverse=True)
    wsum = np.bincount(np.asarray(inv).reshape(-1), weights=w, minlength=len(uniq))
    total = math.fsum(float(ws) * product_tail(float(c), p, X, d) for c, ws in zip(uniq, wsum) if ws > 0)
    return W ** (p - 1.0) * total


def envelope_integral(weights: np.ndarray, scales: np.ndarray, p: float, d: int) -> float:
    """Bound on the integral over all of R^d of the envelope to the power p."""
    w = np.asarray(weights, dtype=float)
    W = float(w.sum())
    if W == 0.0:
        return 0.0
    full = [(2.0 * float(c) * p / (p - 1.0)) ** d for c in np.asarray(scales, dtype=float)]
    return W ** (p - 1.0) * math.fsum(float(wt) * f for wt, f in zip(w, full))


# -- the integrator --------------------------------------------------------------


@dataclass
class _Integrand:
    d: int
    grid: Callable[[Sequence[np.ndarray]], np.ndarray]
    even: bool
    env_weights: Optional[np.ndarray] = None
    env_scales: Optional[np.ndarray] = None
    band_extent: Optional[float] = None
    min_side: Optional[float] = None


def _wrap(f, d: Optional[int], even: Optional[bool], envelope) -> _Integrand:
    if isinstance(f, Spectrum):
        w, c = f.envelope_terms()
        ext = float(np.max(f.extent)) if len(f.weights) else 0.0
        return _Integrand(
            d=f.d,
            grid=f.grid,
            even=True if even is None else even,  # |f(-xi)| = |f(xi)| for real measures
            env_weights=w,
            env_scales=c,
            band_extent=ext,
            min_side=f.min_side,
        )
    if d is None:
        raise ValueError("dimension d is required for a plain callable integrand")

    def grid(axes):
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        return np.asarray(f(pts)).reshape(tuple(len(a) for a in axes))

    env_w = env_c = None
    if envelope is not None:
        env_w, env_c = (np.asarray(a, dtype=float) for a in envelope)
    return _Integrand(d=d, grid=grid, even=bool(even), env_weights=env_w, env_scales=env_c)


def _box_sums(fn: _Integrand, ps: Sequence[float], X: float, n_half: int) -> list[float]:
    """Midpoint sums of |f|^p over [-X, X]^d with 2*n_half cells per axis."""
    h = X / n_half
    full = (np.arange(2 * n_half) - n_half + 0.5) * h
    first = full[n_half:] if fn.even else full
    rest = [full] * (fn.d - 1)
    acc = [0.0] * len(ps)
    cell = h**fn.d * (2.0 if fn.even else 1.0)
    rows_per_chunk = max(1, AXIS_CHUNK // max(1, len(full) ** (fn.d - 1)))
    for lo in range(0, len(first), rows_per_chunk):
        vals = np.abs(fn.grid([first[lo : lo + rows_per_chunk]] + rest))
        for i, p in enumerate(ps):
            acc[i] += float(np.sum(vals**p))
    return [a * cell for a in acc]


def _tails(fn: _Integrand, spec: QuadratureSpec, ps, X: float) -> list[float]:
    if spec.tail_mode == "none" or fn.env_weights is None:
        return [math.inf] * len(ps)  # no certified bound available
    return [envelope_tail(fn.env_weights, fn.env_scales, p, X, fn.d) for p in ps]


def lp_power_integrals(
    f,
    ps: Iterable[float],
    spec: QuadratureSpec = QuadratureSpec(),
    *,
    d: Optional[int] = None,
    even: Optional[bool] = None,
    envelope=None,
) -> list[NormReport]:
    """integral of |f|^p over R^d for several p from one set of grid evaluations.

    ``f`` is a Spectrum (envelope, symmetry and band limit are taken from it)
    or a callable on (n, d) frequency arrays; for a callable pass ``d``,
    a fixed ``spec.half_width`` and optionally ``envelope=(weights, scales)``.
    """
    ps = [float(p) for p in ps]
    if any(not p > 1 for p in ps):
        raise ValueError("exponents must exceed 1")
    fn = _wrap(f, d, even, envelope)

    if spec.half_width is not None:
        X = float(spec.half_width)
    elif fn.min_side is not None and math.isfinite(fn.min_side):
        X = 2.0 / fn.min_side
    else:
        X = 1.0 if isinstance(f, Spectrum) else None
        if X is None:
            raise ValueError("a callable integrand needs spec.half_width")

    h = 2.0 * X / spec.points_per_axis
    if spec.max_spacing is not None:
        h = min(h, spec.max_spacing)
    elif fn.band_extent:
        h = min(h, 1.0 / (max(ps) * fn.band_extent))
    n_half = max(1, math.ceil(X / h))
    finest = 2 * n_half * 2**spec.refinement_levels
    if finest > spec.max_cells_per_axis:
        raise NonConvergenceError(
            f"the grid would need {finest:.3g} cells per axis (box half-width {X:.3g}, spacing {h:.3g}), "
            f"above max_cells_per_axis={spec.max_cells_per_axis}; set half_width or max_spacing explicitly"
        )

    adaptive = spec.half_width is None and spec.tail_mode != "none" and fn.env_weights is not None
    sums = _box_sums(fn, ps, X, n_half)
    tails = _tails(fn, spec, ps, X)
    doublings = 0
    while adaptive and doublings < spec.max_doublings:
        if all(t <= spec.tail_rtol * abs(s) or t == 0.0 for s, t in zip(sums, tails)):
            break
        if 4 * n_half > spec.max_cells_per_axis:
            log.warning("box growth stopped at X=%g by the cell cap", X)
            break
        X, n_half = 2.0 * X, 2 * n_half
        sums = _box_sums(fn, ps, X, n_half)
        tails = _tails(fn, spec, ps, X)
        doublings += 1

    history = [sums]
    for _ in range(spec.refinement_levels):
        n_half *= 2
        history.append(_box_sums(fn, ps, X, n_half))

    reports = []
    for i, p in enumerate(ps):
        last = history[-1][i]
        conv = abs(last - history[-2][i]) if len(history) > 1 else math.nan
        # a deviation that cancels to rounding level has no relative accuracy to check
        floor = 0.0
        if fn.env_weights is not None:
            floor = ROUNDOFF * envelope_integral(fn.env_weights, fn.env_scales, p, fn.d)
        ok = not (conv > spec.conv_rtol * abs(last) and conv > max(floor, 1e-300))
        reports.append(
            NormReport(
                p=p,
                value=last,
                box_part=last,
                tail_bound=tails[i],
                convergence_estimate=conv,
                half_width=X,
                spacing=X / n_half,
                converged=ok,
            )
        )
    bad = [r for r in reports if not r.converged]
    if bad:
        r = bad[0]
        raise NonConvergenceError(
            f"L_{r.p:g} box integral changed by {r.convergence_estimate:.3g} "
            f"(relative tolerance {spec.conv_rtol:g}) at the last refinement",
            reports,
        )
    return reports


def lp_power_integral(f, p: float, spec: QuadratureSpec = QuadratureSpec(), **kw) -> NormReport:
    """integral of |f|^p over R^d; see lp_power_integrals."""
    return lp_power_integrals(f, [p], spec, **kw)[0]


# -- Monte Carlo over realizations -------------------------------------------------


@dataclass
class MonteCarloEstimate:
    mean: float
    stderr: float
    values: np.ndarray = field(repr=False)
    reports: list = field(default_factory=list, repr=False)

    @property
    def replicas(self) -> int:
        return len(self.values)


def mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    mean = math.fsum(v) / len(v)
    if len(v) < 2:
        return mean, math.nan
    var = math.fsum((v - mean) ** 2) / (len(v) - 1)
    return mean, math.sqrt(var / len(v))


def deviation_spectrum(shifts: np.ndarray, rho: float) -> Spectrum:
    """nu_hat_{M,rho} - E mu_hat_{M,rho} for one realization of the shifts."""
    shifts = np.asarray(shifts, dtype=float)
    M, d = shifts.shape
    nu = Spectrum.from_atoms(shifts, np.full(M, rho), np.full(M, 1.0 / M))
    return nu - Spectrum.expected(rho, d)


def deviation_expectation(
    M: int,
    rho: float,
    p: float,
    replicas: int,
    spec: QuadratureSpec = QuadratureSpec(),
    *,
    d: int = 1,
    seed: int = 0,
    key: Sequence[int | str] = ("deviation",),
) -> MonteCarloEstimate:
    """Monte Carlo estimate of integral E|mu_hat_{M,rho} - E mu_hat_{M,rho}|^p.

    Replica r draws its shifts from substream (seed, *key, M, rho, r), so
    estimates are reproducible and independent of evaluation order.
    """
    from .measure import sample_shifts

    if replicas < 16:
        raise ValueError("deviation_expectation needs at least 16 replicas")
    tag = f"rho={float(rho)!r}"
    values, reports = [], []
    for r in range(replicas):
        shifts = sample_shifts(M, rho, d, substream(seed, *key, M, tag, r))
        rep = lp_power_integral(deviation_spectrum(shifts, rho), p, spec)
        values.append(rep.value)
        reports.append(rep)
    mean, se = mean_stderr(values)
    return MonteCarloEstimate(mean, se, np.asarray(values), reports)


# -- power laws ----------------------------------------------------------------------


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    residual: float

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope


def fit_powerlaw(points: Sequence[tuple[float, float]]) -> PowerLawFit:
    """Least-squares line through (log x, log y); residual is the max |log deviation|."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("fit_powerlaw needs at least 3 (x, y) pairs")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("fit_powerlaw needs positive finite data")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = float(np.max(np.abs(ly - (slope * lx + intercept))))
    return PowerLawFit(float(slope), float(intercept), resid)
