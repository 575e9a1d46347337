"""Random realization of the cube construction.

Each expanded vertex Q_k receives M_k shift vectors drawn uniformly from
[0, 1 - rho_k]^d (rho_k = r_k / l(Q_k)); the children are their images
under the homothety [0,1]^d -> Q_k.  The measures mu_k are stepped with

    mu_k = mu_{k-1} - b(Q_k) lambda_{Q_k} + b(Q_k) nu_{M_k, rho_k, Q_k}.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .fourier import Spectrum
from .quadrature import QuadratureSpec, deviation_spectrum, lp_power_integrals, mean_stderr
from .rng import substream, stream_id
from .tree import BranchingSequence, CubeNode, Tree, build_tree

log = logging.getLogger(__name__)

MASS_TOL = 1e-12
#: atom count above which the exact mass mirror is dropped
EXACT_ATOM_LIMIT = 10_000


class ConstructionError(RuntimeError):
    """The construction order or geometry was violated."""


@dataclass(frozen=True, eq=False)
class CubeMeasure:
    """Finite combination of uniform probability measures on axis-aligned cubes.

    ``vertices[i]`` is the tree index of atom i (-1 when unknown).
    """

    corners: np.ndarray  # (A, d)
    sides: np.ndarray  # (A,)
    masses: np.ndarray  # (A,)
    vertices: Optional[np.ndarray] = None
    exact_masses: Optional[tuple[Fraction, ...]] = field(default=None, repr=False)

    def __post_init__(self):
        corners = np.atleast_2d(np.asarray(self.corners, dtype=float))
        sides = np.asarray(self.sides, dtype=float).reshape(-1)
        masses = np.asarray(self.masses, dtype=float).reshape(-1)
        if not (len(corners) == len(sides) == len(masses)):
            raise ValueError("corners, sides and masses must have one entry per atom")
        verts = (
            np.full(len(masses), -1, dtype=np.int64)
            if self.vertices is None
            else np.asarray(self.vertices, dtype=np.int64).reshape(-1)
        )
        object.__setattr__(self, "corners", corners)
        object.__setattr__(self, "sides", sides)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "vertices", verts)

    @property
    def d(self) -> int:
        return self.corners.shape[1]

    def __len__(self) -> int:
        return len(self.masses)

    @property
    def total_mass(self) -> float:
        return math.fsum(self.masses)

    def validate(self) -> None:
        for i in range(len(self)):
            if not self.sides[i] > 0:
                raise ValueError(f"atom {i}: side must be positive, got {self.sides[i]!r}")
            if not self.masses[i] > 0:
                raise ValueError(f"atom {i}: mass must be positive, got {self.masses[i]!r}")
            lo, hi = self.corners[i], self.corners[i] + self.sides[i]
            if np.any(lo < -MASS_TOL) or np.any(hi > 1 + MASS_TOL):
                raise ValueError(f"atom {i}: cube is not contained in [0,1]^d")
        if abs(self.total_mass - 1.0) > MASS_TOL:
            raise ValueError(f"total mass {self.total_mass!r} differs from 1")

    def spectrum(self) -> Spectrum:
        return Spectrum.from_measure(self)

    @classmethod
    def unit(cls, d: int, exact: bool = True) -> "CubeMeasure":
        return cls(np.zeros((1, d)), [1.0], [1.0], [0], (Fraction(1),) if exact else None)

    def to_json(self) -> dict:
        return {
            "atoms": [
                {"corner": [float(c) for c in self.corners[i]], "side": float(self.sides[i]), "mass": float(self.masses[i])}
                for i in range(len(self))
            ]
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CubeMeasure":
        """Parse {atoms: [{corner, side, mass}]}; errors name the offending atom."""
        atoms = doc.get("atoms") if isinstance(doc, dict) else None
        if not isinstance(atoms, list) or not atoms:
            raise ValueError("measure document needs a nonempty 'atoms' list")
        corners, sides, masses = [], [], []
        d = None
        for i, a in enumerate(atoms):
            try:
                c = [float(x) for x in a["corner"]]
                s, m = float(a["side"]), float(a["mass"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"atom {i}: malformed entry ({exc})") from None
            if d is None:
                d = len(c)
            if len(c) != d or d == 0:
                raise ValueError(f"atom {i}: corner has dimension {len(c)}, expected {d}")
            if not (math.isfinite(s) and math.isfinite(m) and all(map(math.isfinite, c))):
                raise ValueError(f"atom {i}: non-finite value")
            if s <= 0 or m <= 0:
                raise ValueError(f"atom {i}: side and mass must be positive")
            corners.append(c)
            sides.append(s)
            masses.append(m)
        return cls(np.array(corners), sides, masses)


@dataclass
class ShiftSample:
    """One realization omega: the relative shift vectors of every expanded vertex."""

    seed: int
    shifts: dict[int, np.ndarray] = field(default_factory=dict)
    derivation: dict[int, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "seed": int(self.seed),
            "shifts": {str(k): self.shifts[k].tolist() for k in sorted(self.shifts)},
            "derivation": {str(k): self.derivation[k] for k in sorted(self.derivation)},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ShiftSample":
        shifts = {int(k): np.asarray(v, dtype=float) for k, v in doc["shifts"].items()}
        deriv = {int(k): str(v) for k, v in doc.get("derivation", {}).items()}
        return cls(int(doc["seed"]), shifts, deriv)


def _check_rho(rho: float) -> None:
    if not 0.0 < rho < 0.5:
        raise ValueError(f"rho must lie in (0, 1/2), got {rho!r}")


def sample_shifts(M: int, rho: float, d: int, stream: np.random.Generator) -> np.ndarray:
    """M i.i.d. vectors uniform on [0, 1 - rho]^d."""
    _check_rho(rho)
    if M < 1:
        raise ValueError("M must be positive")
    return stream.random((M, d)) * (1.0 - rho)


def place_children(parent: CubeNode, shifts: np.ndarray, r_abs: float) -> tuple[np.ndarray, np.ndarray]:
    """Corners and sides of the children: the homothety [0,1]^d -> parent applied to shifts."""
    if parent.corner is None:
        raise ConstructionError(f"vertex Q_{parent.index} has no placed corner")
    pc = np.asarray(parent.corner, dtype=float)
    l = parent.side
    shifts = np.atleast_2d(np.asarray(shifts, dtype=float))
    corners = pc + l * shifts
    # rounding of the absolute corner coordinates dominates for tiny cubes
    tol = 1e-12 * l + 4 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(pc))))
    if np.any(corners < pc - tol) or np.any(corners + r_abs > pc + l + tol):
        bad = int(np.flatnonzero(np.any((corners < pc - tol) | (corners + r_abs > pc + l + tol), axis=1))[0])
        raise ConstructionError(f"child {bad} of Q_{parent.index} leaves its parent; shift out of range")
    return corners, np.full(len(corners), float(r_abs))


def step_measure(mu_prev: CubeMeasure, k: int, children_corners: np.ndarray, child_side: float,
                 child_vertices: Sequence[int] | None = None) -> CubeMeasure:
    """Replace the atom of Q_k by M_k atoms of mass b(Q_k)/M_k on the children."""
    hit = np.flatnonzero(mu_prev.vertices == k)
    if len(hit) != 1:
        raise ConstructionError(f"measure has no atom for Q_{k}; expansion order violated")
    i = int(hit[0])
    M = len(children_corners)
    b = mu_prev.masses[i]
    keep = np.arange(len(mu_prev)) != i
    if child_vertices is None:
        child_vertices = [-1] * M
    exact = None
    if mu_prev.exact_masses is not None and len(mu_prev) - 1 + M <= EXACT_ATOM_LIMIT:
        eb = mu_prev.exact_masses[i]
        exact = tuple(m for j, m in enumerate(mu_prev.exact_masses) if j != i) + (eb / M,) * M
    return CubeMeasure(
        corners=np.vstack([mu_prev.corners[keep], np.asarray(children_corners, dtype=float).reshape(M, -1)]),
        sides=np.concatenate([mu_prev.sides[keep], np.full(M, float(child_side))]),
        masses=np.concatenate([mu_prev.masses[keep], np.full(M, b / M)]),
        vertices=np.concatenate([mu_prev.vertices[keep], np.asarray(child_vertices, dtype=np.int64)]),
        exact_masses=exact,
    )


def f_rho(rho: float, t) -> np.ndarray:
    """The piecewise linear density of E nu_{M,rho} in one coordinate."""
    _check_rho(rho)
    t = np.asarray(t, dtype=float)
    c = 1.0 / (rho * (1.0 - rho))
    out = np.where(t <= rho, t * c, np.where(t <= 1.0 - rho, 1.0 / (1.0 - rho), (1.0 - t) * c))
    return np.where((t <= 0.0) | (t >= 1.0), 0.0, out)


def expected_density(rho: float, x) -> np.ndarray:
    """F_rho(x) = prod_i f_rho(x_i); x has coordinates on the last axis."""
    x = np.asarray(x, dtype=float)
    return np.prod(f_rho(rho, x), axis=-1)


# -- choosing a good omega --------------------------------------------------------------


@dataclass
class Selection:
    """Outcome of select_omega.

    When ``accepted`` is False, ``shifts`` is the best candidate seen (the
    one minimizing the larger of norm/threshold) and ``trial`` its index.
    """

    accepted: bool
    shifts: np.ndarray
    trial: int
    norms: tuple[float, float]
    thresholds: tuple[float, float]
    rejections: int
    pilot_means: tuple[float, float]
    history: list[tuple[float, float]] = field(default_factory=list, repr=False)

    @property
    def derivation(self) -> str:
        return f"trial={self.trial}"


def deviation_norms(shifts: np.ndarray, rho: float, p: float, p1: float, spec: QuadratureSpec) -> tuple[float, float]:
    """(||nu_hat - E mu_hat||_p^p, ||nu_hat - E mu_hat||_p1^p1) for one realization."""
    reps = lp_power_integrals(deviation_spectrum(shifts, rho), [p, p1], spec)
    return reps[0].value, reps[1].value


def pilot_means(M: int, rho: float, *, d: int, p: float, p1: float, seed: int, key=(), pilot: int = 32,
                spec: QuadratureSpec = QuadratureSpec()) -> tuple[float, float]:
    vals = [
        deviation_norms(sample_shifts(M, rho, d, substream(seed, *key, "pilot", i)), rho, p, p1, spec)
        for i in range(pilot)
    ]
    return mean_stderr([v[0] for v in vals])[0], mean_stderr([v[1] for v in vals])[0]


def select_omega(
    M: int,
    rho: float,
    *,
    d: int,
    p: float,
    p1: float,
    seed: int,
    key: Sequence[int | str] = (),
    trials: int = 100,
    pilot: int = 32,
    tau_factor: float = 3.0,
    thresholds: Optional[tuple[float, float]] = None,
    spec: QuadratureSpec = QuadratureSpec(),
    exhaustive: bool = False,
) -> Selection:
    """First realization whose L_p and L_p1 deviation norms are both below threshold.

    Thresholds default to ``tau_factor`` times pilot-estimated means.  With
    ``exhaustive`` every trial is measured (history holds all norm pairs),
    which is how acceptance rates are measured.
    """
    _check_rho(rho)
    if thresholds is None:
        means = pilot_means(M, rho, d=d, p=p, p1=p1, seed=seed, key=key, pilot=pilot, spec=spec)
        thresholds = (tau_factor * means[0], tau_factor * means[1])
    else:
        means = (math.nan, math.nan)
    best = None
    history = []
    first_ok = None
    for t in range(trials):
        shifts = sample_shifts(M, rho, d, substream(seed, *key, "trial", t))
        norms = deviation_norms(shifts, rho, p, p1, spec)
        history.append(norms)
        score = max(norms[0] / thresholds[0], norms[1] / thresholds[1])
        if best is None or score < best[0]:
            best = (score, t, shifts, norms)
        if score < 1.0 and first_ok is None:
            first_ok = (t, shifts, norms)
            if not exhaustive:
                break
    if first_ok is not None:
        t, shifts, norms = first_ok
        return Selection(True, shifts, t, norms, thresholds, t, means, history)
    _, t, shifts, norms = best
    return Selection(False, shifts, t, norms, thresholds, trials, means, history)


# -- the whole construction ----------------------------------------------------------------


@dataclass
class Construction:
    tree: Tree
    corners: np.ndarray  # (n_vertices, d)
    sample: ShiftSample
    measure: CubeMeasure  # mu after all K expansions
    selections: dict[int, Selection] = field(default_factory=dict, repr=False)

    def measure_after(self, steps: int) -> CubeMeasure:
        """mu after the first ``steps`` expansions (atoms are the leaves at that stage)."""
        if not 0 <= steps <= self.tree.K:
            raise ValueError(f"steps must be in [0, {self.tree.K}]")
        hi = 1 + sum(self.tree.seq.M[:steps])
        idx = np.arange(steps, hi)
        return CubeMeasure(self.corners[idx], self.tree.side[idx], self.tree.weight[idx], idx)

    def node(self, i: int) -> CubeNode:
        base = self.tree.node(i)
        return CubeNode(**{**base.__dict__, "corner": tuple(float(c) for c in self.corners[i])})


def construct(
    seq: BranchingSequence,
    seed: int,
    *,
    select: bool = False,
    selection_kw: Optional[dict] = None,
    tree: Optional[Tree] = None,
) -> Construction:
    """Realize mu_K: sample (or select) shifts per vertex and step the measure.

    Vertex k draws from substream (seed, "vertex", k, ...), so the result
    does not depend on evaluation order.
    """
    tree = build_tree(seq) if tree is None else tree
    d = seq.d
    n = len(tree)
    corners = np.full((n, d), np.nan)
    corners[0] = 0.0
    sample = ShiftSample(seed=seed)
    selections = {}
    mu = CubeMeasure.unit(d)
    for k in range(seq.K):
        rho = tree.rho(k)
        r = float(tree.side[tree.children(k).start]) if seq.M[k] else 0.0
        key = ("vertex", k)
        if select:
            kw = dict(selection_kw or {})
            sel = select_omega(seq.M[k], rho, d=d, p=seq.p, p1=seq.p1, seed=seed, key=key, **kw)
            if not sel.accepted:
                raise ConstructionError(
                    f"no acceptable omega for Q_{k} in {kw.get('trials', 100)} trials "
                    f"(best norms {sel.norms}, thresholds {sel.thresholds})"
                )
            shifts, derivation = sel.shifts, stream_id(*key, "trial", sel.trial)
            selections[k] = sel
        else:
            shifts = sample_shifts(seq.M[k], rho, d, substream(seed, *key, "trial", 0))
            derivation = stream_id(*key, "trial", 0)
        node = CubeNode(k, float(tree.side[k]), int(tree.layer[k]), float(tree.weight[k]), None, (),
                        tuple(corners[k]))
        ch_corners, _ = place_children(node, shifts, r)
        kids = tree.children(k)
        corners[kids.start : kids.stop] = ch_corners
        mu = step_measure(mu, k, ch_corners, r, list(kids))
        sample.shifts[k] = shifts
        sample.derivation[k] = derivation
    return Construction(tree, corners, sample, mu, selections)
