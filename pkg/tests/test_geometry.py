import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowd_assign.geometry import (
    Box,
    as_boxes,
    box_area,
    box_centers,
    contains,
    giou,
    intersect,
    intersection_area,
    iou,
    pairwise_giou,
    pairwise_iou,
    points_in_boxes,
    validate_boxes,
)
from oracles import iou_exact, mc_overlap


def test_iou_identity_and_disjoint():
    assert iou([0, 0, 2, 2], [0, 0, 2, 2]) == 1.0
    assert iou([0, 0, 1, 1], [2, 2, 3, 3]) == 0.0


def test_iou_partial_overlap_is_one_seventh():
    assert iou([0, 0, 2, 2], [1, 1, 3, 3]) == pytest.approx(1 / 7, rel=1e-15)


def test_iou_partial_overlap_matches_monte_carlo():
    est, se, _, _ = mc_overlap((0, 0, 2, 2), (1, 1, 3, 3), 1_000_000, np.random.default_rng(0))
    assert abs(iou([0, 0, 2, 2], [1, 1, 3, 3]) - est) <= 3 * se


def test_giou_cases():
    assert giou([0, 0, 2, 2], [0, 0, 2, 2]) == 1.0
    assert giou([0, 0, 1, 1], [100, 100, 101, 101]) < 0
    # hull 3x3, union 7: 1/7 - 2/9
    assert giou([0, 0, 2, 2], [1, 1, 3, 3]) == pytest.approx(1 / 7 - 2 / 9, rel=1e-14)
    _, _, est, se = mc_overlap((0, 0, 2, 2), (1, 1, 3, 3), 1_000_000, np.random.default_rng(1))
    assert abs(giou([0, 0, 2, 2], [1, 1, 3, 3]) - est) <= 3 * se


def test_giou_far_apart_tends_to_minus_one():
    assert giou([0, 0, 1, 1], [1e6, 1e6, 1e6 + 1, 1e6 + 1]) == pytest.approx(-1.0, abs=1e-9)


def test_contains_closed_boundary():
    assert contains([0, 0, 4, 4], (2, 2))
    assert contains([0, 0, 4, 4], (4, 4))
    assert not contains([0, 0, 4, 4], (5, 2))


def test_box_type_helpers():
    b = Box(0, 0, 4, 2)
    assert b.area == 8 and b.center == (2, 1) and b.is_valid()
    assert not Box(1, 0, 0, 1).is_valid()


def test_invalid_boxes_rejected():
    with pytest.raises(ValueError):
        validate_boxes([[2, 0, 1, 1]])
    with pytest.raises(ValueError):
        validate_boxes([[0, 0, np.nan, 1]])
    with pytest.raises(ValueError):
        as_boxes([[0, 0, 1]])


def test_degenerate_box_has_zero_iou():
    assert iou([1, 1, 1, 1], [1, 1, 1, 1]) == 0.0
    assert math.isfinite(giou([1, 1, 1, 1], [1, 1, 1, 1]))


def test_pairwise_matches_scalar_oracle(rng):
    a = rng.uniform(0, 50, (6, 2))
    a = np.concatenate([a, a + rng.uniform(1, 20, (6, 2))], axis=1)
    b = rng.uniform(0, 50, (9, 2))
    b = np.concatenate([b, b + rng.uniform(1, 20, (9, 2))], axis=1)
    m = pairwise_iou(a, b)
    for i in range(6):
        for j in range(9):
            assert m[i, j] == pytest.approx(iou_exact(a[i], b[j]), abs=1e-15)


def test_intersect_and_areas():
    assert intersect([0, 0, 2, 2], [1, 1, 3, 3]).tolist() == [[1, 1, 2, 2]]
    assert box_area(intersect([0, 0, 1, 1], [2, 2, 3, 3])).tolist() == [0.0]
    assert intersection_area([[0, 0, 2, 2]], [[1, 1, 3, 3]]).tolist() == [1.0]
    assert box_area([[0, 0, 2, 3]]).tolist() == [6.0]
    assert box_centers([[0, 0, 2, 4]]).tolist() == [[1.0, 2.0]]


def test_points_in_boxes_edges():
    m = points_in_boxes([[0, 0], [4, 4], [4.0001, 2]], [[0, 0, 4, 4]])
    assert m.tolist() == [[True, True, False]]


coord = st.floats(-1e3, 1e3, allow_nan=False)
side = st.floats(1e-2, 1e3, allow_nan=False)


@st.composite
def boxes(draw):
    x, y, w, h = draw(coord), draw(coord), draw(side), draw(side)
    return (x, y, x + w, y + h)


@settings(max_examples=200, deadline=None)
@given(boxes(), boxes())
def test_iou_properties(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(iou(b, a), abs=1e-12)
    g = giou(a, b)
    assert -1.0 <= g <= v + 1e-12


@settings(max_examples=200, deadline=None)
@given(boxes(), boxes(), coord, coord, st.floats(0.1, 10))
def test_iou_invariant_to_translation_and_scale(a, b, dx, dy, s):
    t = lambda q: ((q[0] + dx) * s, (q[1] + dy) * s, (q[2] + dx) * s, (q[3] + dy) * s)  # noqa: E731
    assert iou(t(a), t(b)) == pytest.approx(iou(a, b), abs=1e-6)
    assert giou(t(a), t(b)) == pytest.approx(giou(a, b), abs=1e-6)


def test_pairwise_giou_shape_and_diagonal(rng):
    a = np.array([[0, 0, 1, 1], [2, 2, 5, 5.0]])
    g = pairwise_giou(a, a)
    assert g.shape == (2, 2) and np.allclose(np.diag(g), 1.0)
