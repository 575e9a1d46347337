"""Independent reference computations used to cross-check the closed forms.

Nothing here calls the closed-form transforms in ``fourier``; each routine
integrates or enumerates from the definitions.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * math.pi


def midpoint_transform(corners, sides, masses, xi, n: int = 256, levels: int = 2) -> np.ndarray:
    """integral of exp(-2 pi i <x, xi>) d mu by brute-force tensor midpoint sums.

    Each atom's cube gets an m^d midpoint grid for m = n, 2n, ..., and the
    results are Romberg-extrapolated (the midpoint error expands in h^2).
    """
    corners = np.atleast_2d(np.asarray(corners, dtype=float))
    sides = np.asarray(sides, dtype=float).reshape(-1)
    masses = np.asarray(masses, dtype=float).reshape(-1)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    d = corners.shape[1]

    def level(m):
        u = (np.arange(m) + 0.5) / m
        ref = np.array(list(itertools.product(u, repeat=d)))  # (m^d, d) in [0,1]^d
        out = np.zeros(len(xi), dtype=complex)
        for c, s, w in zip(corners, sides, masses):
            pts = c + s * ref
            out += w * np.exp(-1j * TWO_PI * (xi @ pts.T)).mean(axis=1)
        return out

    table = [level(n * 2**i) for i in range(levels)]
    for j in range(1, levels):
        f = 4.0**j
        table = [(f * table[i + 1] - table[i]) / (f - 1.0) for i in range(len(table) - 1)]
    return table[0]


@lru_cache(maxsize=8)
def _gauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _f_rho_pieces(rho: float):
    c = 1.0 / (rho * (1.0 - rho))
    return [
        (0.0, rho, lambda t: t * c),
        (rho, 1.0 - rho, lambda t: np.full_like(t, 1.0 / (1.0 - rho))),
        (1.0 - rho, 1.0, lambda t: (1.0 - t) * c),
    ]


def density_transform(rho: float, xi, nodes: int = 400) -> np.ndarray:
    """Fourier transform of F_rho(x) dx by Gauss-Legendre on each linear piece.

    For d > 1 the tensor product of the 3 pieces per axis is integrated
    with a tensor Gauss-Legendre rule (no factorization assumed).
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    d = xi.shape[1]
    x, w = _gauss(nodes)
    pieces = _f_rho_pieces(rho)
    out = np.zeros(len(xi), dtype=complex)
    for combo in itertools.product(pieces, repeat=d):
        axes_pts, axes_w = [], []
        for a, b, fn in combo:
            t = 0.5 * (b - a) * x + 0.5 * (a + b)
            axes_pts.append(t)
            axes_w.append(0.5 * (b - a) * w * fn(t))
        if d == 1:
            out += np.exp(-1j * TWO_PI * np.outer(xi[:, 0], axes_pts[0])) @ axes_w[0]
            continue
        mesh = np.meshgrid(*axes_pts, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        wts = np.ones(1)
        for aw in axes_w:
            wts = np.outer(wts, aw).reshape(-1)
        out += np.exp(-1j * TWO_PI * (xi @ pts.T)) @ wts
    return out


def density_difference_norm(rho: float, q: float) -> float:
    """||1_[0,1] - f_rho||_{L_q}^q in closed form (one dimension).

    On [0, rho] the difference is linear from 1 to -rho/(1-rho); on the
    middle it is the constant -rho/(1-rho); the right end mirrors the left.
    """
    a, b = 1.0, -rho / (1.0 - rho)

    def linear(a, b):  # integral over [0,1] of |a + (b - a) s|^q ds
        if a == b:
            return abs(a) ** q
        return (math.copysign(abs(b) ** (q + 1), b) - math.copysign(abs(a) ** (q + 1), a)) / ((q + 1) * (b - a))

    return 2.0 * rho * linear(a, b) + (1.0 - 2.0 * rho) * abs(b) ** q


def bernoulli_sum_moment(M: int, p: float) -> Fraction | float:
    """E|X_1 + ... + X_M|^p for i.i.d. +-1 signs, by enumerating the binomial law."""
    total = Fraction(0) if float(p).is_integer() else 0.0
    for k in range(M + 1):
        s = abs(2 * k - M)
        term = math.comb(M, k) * (s ** int(p) if float(p).is_integer() else s**p)
        total += term
    return total / 2**M if isinstance(total, Fraction) else total / 2.0**M


def uniform_sum_fourth_moment(M: int) -> float:
    """E(X_1 + ... + X_M)^4 for X uniform on [-1, 1]: M/5 + 3M(M-1)/9."""
    return M / 5.0 + 3.0 * M * (M - 1) / 9.0


def _g(t):
    # (1 - e^{-2 pi i t}) / (2 pi i t) written out from the definition
    t = np.asarray(t, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = TWO_PI * t
        val = (1.0 - np.exp(-1j * z)) / (1j * z)
    return np.where(np.abs(z) < 1e-8, 1.0 + 0j, val)


def deviation_fourth_moment(M: int, rho: float, x) -> np.ndarray:
    """E|nu_hat_{M,rho}(x) - E nu_hat_{M,rho}(x)|^4 exactly (d = 1).

    With Z_j = lam e_j - E[lam e_j], e_j = exp(-2 pi i beta_j x):
    E|sum Z|^4 = M E|Z|^4 + 2M(M-1)(E|Z|^2)^2 + M(M-1)|E Z^2|^2.
    """
    x = np.asarray(x, dtype=float)
    lam = _g(rho * x)
    h1 = _g((1.0 - rho) * x)
    h2 = _g(2.0 * (1.0 - rho) * x)
    a = 1.0 + np.abs(h1) ** 2
    e4 = a**2 - 4.0 * a * np.abs(h1) ** 2 + 2.0 * np.real(np.conj(h2) * h1**2) + 2.0 * np.abs(h1) ** 2
    ez2abs = np.abs(lam) ** 2 * (1.0 - np.abs(h1) ** 2)
    ez2 = lam**2 * (h2 - h1**2)
    ez4 = np.abs(lam) ** 4 * e4
    return (M * ez4 + 2.0 * M * (M - 1) * ez2abs**2 + M * (M - 1) * np.abs(ez2) ** 2) / float(M) ** 4


def eulerian_series(x: float, d: int) -> float:
    """sum_{n>=0} (n+1)^d x^n = A_d(x) / (1-x)^{d+1} with A_d the Eulerian polynomial."""
    if not 0 <= x < 1:
        raise ValueError("series converges only for 0 <= x < 1")
    # A_d(x) = sum_k A(d, k) x^k with A(d,k) = sum_j (-1)^j C(d+1, j) (k+1-j)^d
    coeffs = [sum((-1) ** j * math.comb(d + 1, j) * (k + 1 - j) ** d for j in range(k + 2)) for k in range(d)]
    if d == 0:
        coeffs = [1]
    return math.fsum(c * x**k for k, c in enumerate(coeffs)) / (1.0 - x) ** (d + 1)
