"""Finite truncation of the branching tree: weights, layers and side lengths.

Vertices are numbered the way they are created: Q_0 is the root, and
expanding Q_k appends its M_k children at the end of the vertex list.
Expansion runs in strict index order Q_0, Q_1, ..., Q_{K-1}, which makes
the numbering breadth first and every layer a contiguous index range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

#: trees larger than this skip the exact rational weight mirror by default
EXACT_MIRROR_LIMIT = 10_000


class GeometryError(ValueError):
    """A child/parent side ratio is not in (0, 1/2)."""

    def __init__(self, k: int, rho: float, min_M: Optional[int]):
        self.k = k
        self.rho = rho
        self.min_M = min_M
        hint = f"; M_{k} >= {min_M} restores rho_{k} < 1/2" if min_M is not None else ""
        super().__init__(f"vertex Q_{k}: side ratio rho_{k} = {rho!r} is not in (0, 1/2){hint}")


@dataclass(frozen=True)
class BranchingSequence:
    """Branching factors M_0, M_1, ... with the exponents (d, p, p1) and depth K."""

    d: int
    p: float
    p1: float
    M: tuple[int, ...]
    K: int

    def __post_init__(self):
        object.__setattr__(self, "M", tuple(int(m) for m in self.M))
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")
        if not self.p > 2:
            raise ValueError(f"p must exceed 2, got {self.p!r}")
        if not self.p1 > self.p:
            raise ValueError(f"p1 must exceed p, got p1={self.p1!r}, p={self.p!r}")
        if self.K < 0:
            raise ValueError(f"K must be nonnegative, got {self.K}")
        if self.K > len(self.M):
            raise ValueError(f"K={self.K} expansions need {self.K} branching factors, got {len(self.M)}")
        bad = [k for k, m in enumerate(self.M) if m < 1]
        if bad:
            raise ValueError(f"branching factors must be positive, M_{bad[0]} = {self.M[bad[0]]}")

    @property
    def side_exponent(self) -> float:
        """p/(2d), the power applied to b/M in the child side formula."""
        return self.p / (2 * self.d)

    @property
    def all_branching(self) -> bool:
        """True when every used M_k >= 2, the regime of the layer bound b <= 2^-n."""
        return all(m >= 2 for m in self.M[: self.K])


def child_side_formula(M_k: int, b: float, n: int, p: float, d: int) -> float:
    """r_k = M_k^{-p/2d} b^{p/2d} / (n + 1)."""
    e = p / (2 * d)
    return (b / M_k) ** e / (n + 1)


def minimal_branching(b: float, n: int, parent_side: float, p: float, d: int) -> int:
    """Smallest M with r(M) / parent_side < 1/2."""
    e = p / (2 * d)
    guess = max(1, int(math.floor(b * (2.0 / ((n + 1) * parent_side)) ** (1.0 / e))))
    while guess > 1 and child_side_formula(guess - 1, b, n, p, d) / parent_side < 0.5:
        guess -= 1
    while child_side_formula(guess, b, n, p, d) / parent_side >= 0.5:
        guess += 1
    return guess


@dataclass(frozen=True)
class CubeNode:
    index: int
    side: float
    layer: int
    weight: float
    parent: Optional[int]
    children: tuple[int, ...]
    corner: Optional[tuple[float, ...]] = None


@dataclass(frozen=True, eq=False)
class Tree:
    """Immutable vertex table of the truncated tree.

    ``child_start[k]`` is the index of the first child of the expanded
    vertex Q_k; its children occupy ``child_start[k] .. child_start[k] + M_k - 1``.
    """

    seq: BranchingSequence
    parent: np.ndarray
    layer: np.ndarray
    weight: np.ndarray
    side: np.ndarray
    child_start: np.ndarray
    exact_weight: Optional[tuple[Fraction, ...]] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.parent)

    @property
    def K(self) -> int:
        return self.seq.K

    def children(self, k: int) -> range:
        if not 0 <= k < self.K:
            return range(0)
        start = int(self.child_start[k])
        return range(start, start + self.seq.M[k])

    def node(self, i: int) -> CubeNode:
        par = int(self.parent[i])
        return CubeNode(
            index=i,
            side=float(self.side[i]),
            layer=int(self.layer[i]),
            weight=float(self.weight[i]),
            parent=None if par < 0 else par,
            children=tuple(self.children(i)),
        )

    def rho(self, k: int) -> float:
        """Relative side ratio r_k / l(Q_k) of the expanded vertex Q_k."""
        return child_side(self, k) / float(self.side[k])

    @property
    def leaves(self) -> np.ndarray:
        """Indices of the unexpanded vertices, i.e. the atoms of mu_K."""
        return np.arange(self.K, len(self))

    def to_json(self) -> dict:
        s = self.seq
        return {
            "d": s.d,
            "p": s.p,
            "p1": s.p1,
            "M": list(s.M),
            "K": s.K,
            "vertices": [
                {
                    "index": i,
                    "parent": None if self.parent[i] < 0 else int(self.parent[i]),
                    "layer": int(self.layer[i]),
                    "weight": float(self.weight[i]),
                    "side": float(self.side[i]),
                }
                for i in range(len(self))
            ],
        }


def build_tree(seq: BranchingSequence, exact: Optional[bool] = None) -> Tree:
    """Expand Q_0, ..., Q_{K-1} in index order.

    Raises GeometryError for the first vertex whose children would have a
    relative side ratio of 1/2 or more.
    """
    K = seq.K
    n_vertices = 1 + sum(seq.M[:K])
    if exact is None:
        exact = n_vertices <= EXACT_MIRROR_LIMIT

    parent = np.full(n_vertices, -1, dtype=np.int64)
    layer = np.zeros(n_vertices, dtype=np.int64)
    weight = np.ones(n_vertices, dtype=float)
    side = np.ones(n_vertices, dtype=float)
    child_start = np.zeros(K, dtype=np.int64)
    exact_w = [Fraction(1)] if exact else None

    nxt = 1
    for k in range(K):
        m = seq.M[k]
        b, n, l = float(weight[k]), int(layer[k]), float(side[k])
        r = child_side_formula(m, b, n, seq.p, seq.d)
        rho = r / l
        if not 0 < rho < 0.5:
            raise GeometryError(k, rho, minimal_branching(b, n, l, seq.p, seq.d))
        child_start[k] = nxt
        sl = slice(nxt, nxt + m)
        parent[sl] = k
        layer[sl] = n + 1
        weight[sl] = b / m
        side[sl] = r
        if exact_w is not None:
            exact_w.extend([exact_w[k] / m] * m)
        nxt += m

    return Tree(
        seq=seq,
        parent=parent,
        layer=layer,
        weight=weight,
        side=side,
        child_start=child_start,
        exact_weight=tuple(exact_w) if exact_w is not None else None,
    )


def child_side(tree: Tree, k: int) -> float:
    """Side length r_k shared by all children of the expanded vertex Q_k."""
    if not 0 <= k < len(tree):
        raise IndexError(f"vertex index {k} out of range")
    if k >= len(tree.seq.M):
        raise IndexError(f"no branching factor for vertex {k}")
    return child_side_formula(tree.seq.M[k], float(tree.weight[k]), int(tree.layer[k]), tree.seq.p, tree.seq.d)


def layer_vertices(tree: Tree, n: int) -> tuple[list[int], bool]:
    """Vertices of layer n in index order, and whether the layer is complete.

    Layer n is complete when every layer n-1 vertex has been expanded.
    """
    idx = np.flatnonzero(tree.layer == n).tolist()
    if n == 0:
        return idx, True
    prev = np.flatnonzero(tree.layer == n - 1)
    complete = prev.size > 0 and bool(np.all(prev < tree.K))
    return idx, complete


def complete_through_layer(seq: BranchingSequence, n: int) -> BranchingSequence:
    """Extend ``seq`` (repeating its last factor) so that layers 0..n are complete."""
    if not seq.M:
        raise ValueError("cannot extend an empty branching sequence")

    def factor(k):
        return seq.M[k] if k < len(seq.M) else seq.M[-1]

    start, size = 0, 1  # index range of the current layer
    for _ in range(n):
        children = sum(factor(k) for k in range(start, start + size))
        start, size = start + size, children
    K = max(seq.K, start)  # every vertex of layers < n is expanded
    M = tuple(factor(k) for k in range(max(K, len(seq.M))))
    return BranchingSequence(d=seq.d, p=seq.p, p1=seq.p1, M=M, K=K)


def sequence_from_rule(base: int, ratio: float, count: int) -> tuple[int, ...]:
    """Geometric growth rule M_k = ceil(base * ratio^k)."""
    if base < 1 or ratio < 1 or count < 0:
        raise ValueError("geometric rule needs base >= 1, ratio >= 1, count >= 0")
    return tuple(int(math.ceil(base * ratio**k - 1e-9)) for k in range(count))


def layer_weight_sum(tree: Tree, indices: Sequence[int], exact: bool = False):
    if exact:
        if tree.exact_weight is None:
            raise ValueError("tree was built without the exact weight mirror")
        return sum((tree.exact_weight[i] for i in indices), Fraction(0))
    return math.fsum(float(tree.weight[i]) for i in indices)
