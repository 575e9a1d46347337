"""Closed-form Fourier transforms of cube measures.

Convention: mu_hat(xi) = integral of exp(-2 pi i <x, xi>) d mu(x).

The one-dimensional building block is the transform of the uniform
probability measure on [0, s],

    g(s t) = (1 - exp(-2 pi i s t)) / (2 pi i s t) = exp(-i pi s t) sinc(s t),

and everything evaluated here (atoms of mu_k, the expected measure F_rho dx,
their differences) is a finite linear combination of translated products
of such factors.  ``Spectrum`` holds that combination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
#: |2 pi t| below this uses the Taylor branch of g
SERIES_CUTOFF = 1e-4
#: complex entries per evaluation block (bounds temporary memory)
BLOCK_ENTRIES = 1 << 22


def _g(t: np.ndarray) -> np.ndarray:
    """(1 - e^{-2 pi i t}) / (2 pi i t), equal to 1 at t = 0."""
    t = np.asarray(t, dtype=float)
    out = np.exp(-1j * math.pi * t) * np.sinc(t)
    z = TWO_PI * t
    small = np.abs(z) < SERIES_CUTOFF
    if np.any(small):
        zs = z[small]
        out[small] = 1.0 - 0.5j * zs - zs**2 / 6.0 + 1j * zs**3 / 24.0
    return out


def _as_points(xi, d: int | None = None) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        xi = xi.reshape(1, 1)
    elif xi.ndim == 1:
        xi = xi.reshape(1, -1) if d is None or xi.shape[0] == d else xi.reshape(-1, 1)
    if d is not None and xi.shape[1] != d:
        raise ValueError(f"frequency dimension {xi.shape[1]} does not match measure dimension {d}")
    if not np.all(np.isfinite(xi)):
        raise ValueError("frequencies must be finite")
    return xi


def _squeeze(values: np.ndarray, xi) -> np.ndarray | complex:
    if np.ndim(xi) <= 1 and values.shape[0] == 1:
        return values[0]
    return values


def lambda0_hat(xi):
    """Transform of Lebesgue measure on [0,1]^d at xi (last axis = coordinates)."""
    pts = _as_points(xi)
    return _squeeze(np.prod(_g(pts), axis=1), xi)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """sum_c weight_c * exp(-2 pi i <corner_c, xi>) * prod_f prod_j g(side_{c,f} xi_j)

    A component with a single side factor is the transform of a weighted
    uniform cube measure; two factors (rho l, (1 - rho) l) give the expected
    measure of a randomized cube.  Zero sides are identity factors, so
    spectra with different factor counts are padded and concatenated.
    """

    weights: np.ndarray  # (C,)
    corners: np.ndarray  # (C, d)
    sides: np.ndarray  # (C, F)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        c = np.asarray(self.corners, dtype=float)
        s = np.asarray(self.sides, dtype=float)
        c = c.reshape(len(w), c.shape[-1] if c.ndim == 2 else -1)
        s = s.reshape(len(w), s.shape[-1] if s.ndim == 2 else -1)
        if np.any(s < 0):
            raise ValueError("side lengths must be nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "corners", c)
        object.__setattr__(self, "sides", s)

    @property
    def d(self) -> int:
        return self.corners.shape[1]

    @classmethod
    def from_atoms(cls, corners, sides, masses) -> "Spectrum":
        return cls(masses, corners, np.asarray(sides, dtype=float).reshape(-1, 1))

    @classmethod
    def from_measure(cls, mu) -> "Spectrum":
        return cls.from_atoms(mu.corners, mu.sides, mu.masses)

    @classmethod
    def expected(cls, rho: float, d: int, corner=None, side: float = 1.0, weight: float = 1.0) -> "Spectrum":
        """Transform of E nu_{M,rho} mapped into the cube (corner, side)."""
        _check_rho(rho)
        corner = np.zeros(d) if corner is None else np.asarray(corner, dtype=float)
        return cls([weight], corner.reshape(1, d), [[rho * side, (1.0 - rho) * side]])

    @classmethod
    def zero(cls, d: int) -> "Spectrum":
        return cls(np.zeros(0), np.zeros((0, d)), np.zeros((0, 1)))

    # -- algebra -----------------------------------------------------------
    def _padded(self, F: int) -> np.ndarray:
        if self.sides.shape[1] >= F:
            return self.sides
        pad = np.zeros((len(self.weights), F - self.sides.shape[1]))
        return np.hstack([self.sides, pad])

    def __add__(self, other: "Spectrum") -> "Spectrum":
        if other.d != self.d:
            raise ValueError("dimension mismatch")
        F = max(self.sides.shape[1], other.sides.shape[1])
        return Spectrum(
            np.concatenate([self.weights, other.weights]),
            np.vstack([self.corners, other.corners]),
            np.vstack([self._padded(F), other._padded(F)]),
        )

    def __mul__(self, a: float) -> "Spectrum":
        return Spectrum(a * self.weights, self.corners, self.sides)

    __rmul__ = __mul__

    def __neg__(self) -> "Spectrum":
        return self * -1.0

    def __sub__(self, other: "Spectrum") -> "Spectrum":
        return self + (-other)

    # -- geometry ------------------------------------------------------------
    @property
    def extent(self) -> np.ndarray:
        """Per-axis width of the spatial support of the underlying signed measure."""
        if len(self.weights) == 0:
            return np.zeros(self.d)
        lo = self.corners.min(axis=0)
        hi = (self.corners + self.sides.sum(axis=1, keepdims=True)).max(axis=0)
        return hi - lo

    @property
    def min_side(self) -> float:
        """Smallest decay-controlling side (the largest factor of each component)."""
        if len(self.weights) == 0:
            return math.inf
        return float(self.sides.max(axis=1).min())

    def envelope_terms(self) -> tuple[np.ndarray, np.ndarray]:
        """(weights, scales) with |self(xi)| <= sum_t w_t prod_j min(1, c_t / |xi_j|)."""
        big = self.sides.max(axis=1)
        with np.errstate(divide="ignore"):
            scales = 1.0 / (math.pi * big)
        return np.abs(self.weights), scales

    # -- evaluation ----------------------------------------------------------
    def __call__(self, xi):
        pts = _as_points(xi, self.d)
        out = np.zeros(len(pts), dtype=complex)
        C = len(self.weights)
        if C == 0:
            return _squeeze(out, xi)
        centers = self.corners + 0.5 * self.sides.sum(axis=1, keepdims=True)
        step = max(1, BLOCK_ENTRIES // max(C, 1))
        for lo in range(0, len(pts), step):
            x = pts[lo : lo + step]
            phase = np.exp(-1j * TWO_PI * (x @ centers.T))  # (n, C)
            amp = np.ones((len(x), C))
            for f in range(self.sides.shape[1]):
                s = self.sides[:, f]
                for j in range(self.d):
                    amp *= np.sinc(np.outer(x[:, j], s))
            out[lo : lo + step] = (phase * amp) @ self.weights
        return _squeeze(out, xi)

    def envelope(self, xi):
        pts = _as_points(xi, self.d)
        w, c = self.envelope_terms()
        out = np.zeros(len(pts))
        step = max(1, BLOCK_ENTRIES // max(len(w), 1))
        for lo in range(0, len(pts), step):
            x = np.abs(pts[lo : lo + step])
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                fac = np.ones((len(x), len(w)))
                for j in range(self.d):
                    fac *= np.minimum(1.0, c[None, :] / x[:, j : j + 1])
            out[lo : lo + step] = fac @ w
        return _squeeze(out, xi)

    def grid(self, axes: Sequence[np.ndarray]) -> np.ndarray:
        """Values on the tensor grid axes[0] x ... x axes[d-1]."""
        if len(axes) != self.d:
            raise ValueError(f"need {self.d} axes, got {len(axes)}")
        axes = [np.asarray(a, dtype=float) for a in axes]
        shape = tuple(len(a) for a in axes)
        C = len(self.weights)
        if C == 0:
            return np.zeros(shape, dtype=complex)
        if self.d == 1:
            return self._grid_1d(axes[0])
        centers = self.corners + 0.5 * self.sides.sum(axis=1, keepdims=True)
        tables = []
        for j, x in enumerate(axes):
            t = np.exp(-1j * TWO_PI * np.outer(centers[:, j], x))
            for f in range(self.sides.shape[1]):
                t *= np.sinc(np.outer(self.sides[:, f], x))
            tables.append(t)
        out = self.weights.astype(complex)[:, None] * tables[0]
        if self.d == 2:
            return out.T @ tables[1]
        letters = "bcdefghijk"[: self.d]
        expr = ",".join(f"a{l}" for l in letters) + "->" + letters
        return np.einsum(expr, out, *tables[1:], optimize=True)

    def _grid_1d(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(len(x), dtype=complex)
        sig, inverse = np.unique(self.sides, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        centers = self.corners[:, 0] + 0.5 * self.sides.sum(axis=1)
        uniform = _uniform_step(x)
        for gidx, sides in enumerate(sig):
            members = np.flatnonzero(inverse == gidx)
            amp = np.ones(len(x))
            for s in sides:
                amp *= np.sinc(s * x)
            if uniform is not None:
                ph = _phase_sum_uniform(self.weights[members], centers[members], x[0], uniform, len(x))
            else:
                ph = _phase_sum(self.weights[members], centers[members], x)
            out += amp * ph
        return out


def _uniform_step(x: np.ndarray) -> float | None:
    if len(x) < 3:
        return None
    h = (x[-1] - x[0]) / (len(x) - 1)
    if h <= 0:
        return None
    if np.max(np.abs(np.diff(x) - h)) > 1e-9 * max(abs(h), 1.0):
        return None
    return float(h)


def _phase_sum(w: np.ndarray, t: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.empty(len(x), dtype=complex)
    step = max(1, BLOCK_ENTRIES // max(len(w), 1))
    for lo in range(0, len(x), step):
        out[lo : lo + step] = np.exp(-1j * TWO_PI * np.outer(x[lo : lo + step], t)) @ w
    return out


def _phase_sum_uniform(w: np.ndarray, t: np.ndarray, x0: float, h: float, N: int) -> np.ndarray:
    """sum_a w_a exp(-2 pi i t_a (x0 + n h)) for n < N.

    Split n = alpha*B + beta so the phase table factors into an outer
    product; the sum becomes one (N/B x A) @ (A x B) matrix product.
    """
    A = len(w)
    if A * N <= 4096:
        return _phase_sum(w, t, x0 + h * np.arange(N))
    B = max(1, int(math.isqrt(N)))
    rows = -(-N // B)
    base = x0 + (np.arange(rows) * B) * h
    P = w[None, :] * np.exp(-1j * TWO_PI * np.outer(base, t))
    Q = np.exp(-1j * TWO_PI * np.outer(t, np.arange(B) * h))
    return (P @ Q).reshape(-1)[:N]


def _check_rho(rho: float) -> None:
    if not 0.0 < rho < 0.5:
        raise ValueError(f"relative side rho must lie in (0, 1/2), got {rho!r}")


def mu_hat(mu, xi):
    """Transform of a cube measure (anything with corners, sides, masses)."""
    return Spectrum.from_measure(mu)(xi)


def expected_mu_hat(rho: float, xi):
    """E mu_hat_{M,rho}(xi) = lambda0_hat(rho xi) * lambda0_hat((1 - rho) xi); no M dependence."""
    _check_rho(rho)
    pts = _as_points(xi)
    return _squeeze(np.prod(_g(rho * pts) * _g((1.0 - rho) * pts), axis=1), xi)


def envelope(mu, xi):
    """sum_atoms mass * prod_j min(1, 1 / (pi side |xi_j|)), an upper bound for |mu_hat|."""
    return Spectrum.from_measure(mu).envelope(xi)


def expected_envelope(rho: float, xi):
    """prod_j min(1, 1 / (pi (1 - rho) |xi_j|)), dominating |expected_mu_hat|."""
    _check_rho(rho)
    pts = np.abs(_as_points(xi))
    with np.errstate(divide="ignore", over="ignore"):
        val = np.prod(np.minimum(1.0, 1.0 / (math.pi * (1.0 - rho) * pts)), axis=1)
    return _squeeze(val, xi)
