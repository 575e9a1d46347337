from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cantor_lp.tree import (
    BranchingSequence,
    GeometryError,
    build_tree,
    child_side,
    complete_through_layer,
    layer_vertices,
    layer_weight_sum,
    minimal_branching,
    sequence_from_rule,
)


def seq(M, K, d=1, p=4.0, p1=6.0):
    return BranchingSequence(d=d, p=p, p1=p1, M=M, K=K)


def test_children_follow_index_order():
    t = build_tree(seq((3, 4, 6), 3))
    assert list(t.children(0)) == [1, 2, 3]
    assert list(t.children(1)) == [4, 5, 6, 7]
    assert list(t.children(2)) == [8, 9, 10, 11, 12, 13]
    assert len(t) == 1 + 3 + 4 + 6


def test_weights_and_layers():
    t = build_tree(seq((3, 4, 6), 3))
    assert t.exact_weight[1] == Fraction(1, 3)
    assert t.exact_weight[4] == Fraction(1, 12)
    assert t.layer[4] == 2
    assert t.weight[4] == pytest.approx(1 / 12, rel=1e-15)


def test_empty_expansion():
    t = build_tree(seq((3,), 0))
    assert len(t) == 1 and t.weight[0] == 1.0 and t.layer[0] == 0 and t.side[0] == 1.0


def test_child_side_examples():
    t = build_tree(seq((3, 4, 6), 2))
    assert child_side(t, 0) == pytest.approx(1 / 9, rel=1e-15)
    assert child_side(t, 1) == pytest.approx(1 / 288, rel=1e-15)
    assert t.rho(1) == pytest.approx(1 / 32, rel=1e-14)
    assert all(t.side[c] == child_side(t, 1) for c in t.children(1))


def test_degenerate_root_rejected_with_hint():
    with pytest.raises(GeometryError) as err:
        build_tree(seq((1, 4), 1))
    assert err.value.k == 0
    assert err.value.min_M == 2
    assert "M_0 >= 2" in str(err.value)


def test_minimal_branching_restores_geometry():
    # root: r = M^-2, needs r < 1/2
    assert minimal_branching(1.0, 0, 1.0, 4.0, 1) == 2
    m = minimal_branching(1 / 3, 1, 1 / 9, 4.0, 1)
    assert build_tree(seq((3, m), 2)).rho(1) < 0.5


def test_rejects_bad_sequences():
    with pytest.raises(ValueError):
        seq((3, 4), 3)  # K beyond M
    with pytest.raises(ValueError):
        seq((3,), 1, p=2.0)
    with pytest.raises(ValueError):
        seq((3,), 1, p1=4.0)
    with pytest.raises(ValueError):
        seq((0,), 1)


def test_layer_vertices_examples():
    t = build_tree(seq((3, 4, 6), 3))
    assert layer_vertices(t, 1) == ([1, 2, 3], True)
    assert layer_vertices(t, 0) == ([0], True)
    t2 = build_tree(seq((3, 4, 6), 2))
    assert layer_vertices(t2, 2) == ([4, 5, 6, 7], False)
    assert layer_vertices(t2, 7) == ([], False)


def test_json_shape():
    doc = build_tree(seq((3, 4, 6), 2)).to_json()
    assert doc["M"] == [3, 4, 6] and doc["K"] == 2
    assert doc["vertices"][0] == {"index": 0, "parent": None, "layer": 0, "weight": 1.0, "side": 1.0}
    assert doc["vertices"][5]["parent"] == 1
    assert "corner" not in doc["vertices"][0]


def test_complete_through_layer():
    s = complete_through_layer(seq((3, 4), 1), 3)
    t = build_tree(s)
    for n in range(4):
        assert layer_vertices(t, n)[1]
    assert len(layer_vertices(t, 3)[0]) == 3 * 4 * 4


def test_sequence_from_rule():
    assert sequence_from_rule(3, 2.0, 4) == (3, 6, 12, 24)
    assert sequence_from_rule(5, 1.5, 3) == (5, 8, 12)
    with pytest.raises(ValueError):
        sequence_from_rule(0, 2.0, 3)


@st.composite
def sequences(draw):
    K = draw(st.integers(0, 6))
    M = tuple(draw(st.lists(st.integers(2, 6), min_size=K, max_size=K + 2)))
    p = draw(st.sampled_from([2.5, 3.0, 4.0, 6.0]))
    return BranchingSequence(d=1, p=p, p1=p + 1, M=M, K=K)


@settings(max_examples=60, deadline=None)
@given(sequences())
def test_tree_invariants(s):
    t = build_tree(s, exact=True)
    for k in range(s.K):
        kids = list(t.children(k))
        assert len(kids) == s.M[k]
        assert kids[0] == 1 + sum(s.M[:k])  # index law
        for c in kids:
            assert t.parent[c] == k
            assert t.layer[c] == t.layer[k] + 1
            assert t.exact_weight[c] == t.exact_weight[k] / s.M[k]
            assert t.side[c] < t.side[k] / 2
    # layer bound, exact
    for i in range(len(t)):
        assert t.exact_weight[i] <= Fraction(1, 2 ** int(t.layer[i]))
    # every complete layer carries mass exactly 1
    for n in range(int(t.layer.max()) + 1):
        idx, complete = layer_vertices(t, n)
        if complete:
            assert layer_weight_sum(t, idx, exact=True) == 1
            assert abs(layer_weight_sum(t, idx) - 1.0) <= 1e-12
    assert np.all(t.parent[1:] >= 0)
