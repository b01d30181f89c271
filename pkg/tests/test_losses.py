import math

import numpy as np
import pytest

from crowd_assign.losses import (
    EPS,
    FocalParams,
    bce_loss,
    focal_loss,
    focal_loss_grad,
    giou_loss,
    iou_loss,
    log_iou_loss,
    pairwise_reg_loss,
    positive_cls_loss,
    smooth_l1,
)


def test_focal_hand_value():
    # 0.25 * (1 - 0.5)^2 * ln 2
    assert focal_loss(0.5, 1) == pytest.approx(0.25 * 0.25 * math.log(2), rel=1e-12)
    assert focal_loss(0.5, 1) == pytest.approx(0.0433, abs=1e-4)


def test_focal_perfect_prediction_vanishes():
    assert focal_loss(1.0, 1) < 1e-12
    assert focal_loss(0.0, 0) < 1e-12


def test_focal_gamma_zero_is_half_bce():
    p = np.linspace(0.01, 0.99, 25)
    params = FocalParams(alpha=0.5, gamma=0.0)
    for y in (0, 1):
        assert np.allclose(focal_loss(p, y, params), 0.5 * bce_loss(p, y), rtol=1e-12)


def test_focal_gradient_matches_finite_differences():
    p = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    for gamma in (0.0, 0.5, 2.0):
        params = FocalParams(0.25, gamma)
        for y in (0, 1):
            fd = (focal_loss(p + h, y, params) - focal_loss(p - h, y, params)) / (2 * h)
            assert np.allclose(focal_loss_grad(p, y, params), fd, rtol=1e-5, atol=1e-8)


def test_focal_params_validated():
    with pytest.raises(ValueError):
        FocalParams(alpha=1.5)
    with pytest.raises(ValueError):
        FocalParams(gamma=-1)


def test_bce_closed_forms():
    assert bce_loss(0.5, 1) == pytest.approx(math.log(2))
    assert bce_loss(0.9, 0) == pytest.approx(math.log(10))
    assert bce_loss(1.0, 1) <= -math.log(1 - EPS) + 1e-15
    assert math.isfinite(bce_loss(0.0, 1))


def test_iou_loss_cases():
    assert iou_loss([0, 0, 2, 2], [0, 0, 2, 2]) == 0.0
    assert iou_loss([0, 0, 1, 1], [5, 5, 6, 6]) == 1.0
    assert iou_loss([0, 0, 2, 2], [1, 1, 3, 3]) == pytest.approx(1 - 1 / 7)
    assert iou_loss([0, 0, 2, 2], [1, 1, 3, 3]) == pytest.approx(0.8571, abs=1e-4)


def test_giou_loss_cases():
    assert giou_loss([0, 0, 2, 2], [0, 0, 2, 2]) == 0.0
    assert giou_loss([0, 0, 1, 1], [10, 10, 11, 11]) > 1
    outer, inner = [0, 0, 10, 10], [3, 3, 7, 7]
    assert giou_loss(inner, outer) == pytest.approx(iou_loss(inner, outer), rel=1e-12)


def test_log_iou_loss():
    assert log_iou_loss([0, 0, 2, 2], [1, 1, 3, 3]) == pytest.approx(math.log(7))
    assert log_iou_loss([0, 0, 1, 1], [5, 5, 6, 6]) == pytest.approx(-math.log(EPS))


def test_smooth_l1_branches():
    z = [0.0, 0.0, 1.0, 1.0]
    assert smooth_l1(z, z) == 0.0
    assert smooth_l1([0.5, 0, 1, 1], z, beta=0.5) == pytest.approx(0.25)
    assert smooth_l1([1.0, 0, 1, 1], z, beta=0.5) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        smooth_l1(z, z, beta=0)


def test_pairwise_forms_match_paired(rng):
    gt = np.array([[0, 0, 10, 10], [5, 5, 20, 30.0]])
    pred = np.array([[1, 1, 9, 12], [0, 0, 4, 4], [6, 4, 19, 33.0]])
    for kind, fn in (("iou", iou_loss), ("giou", giou_loss), ("log_iou", log_iou_loss)):
        m = pairwise_reg_loss(gt, pred, kind)
        for i in range(2):
            for j in range(3):
                assert m[i, j] == pytest.approx(fn(pred[j], gt[i]), rel=1e-12)
    with pytest.raises(ValueError):
        pairwise_reg_loss(gt, pred, "l2")


def test_positive_cls_loss_kinds():
    s = np.array([[0.2, 0.7]])
    assert np.allclose(positive_cls_loss(s, "focal"), focal_loss(s, 1))
    assert np.allclose(positive_cls_loss(s, "bce"), bce_loss(s, 1))
    with pytest.raises(ValueError):
        positive_cls_loss(s, "hinge")
