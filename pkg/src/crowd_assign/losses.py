"""Per-pair classification and regression losses.

All functions broadcast over numpy arrays. Probabilities are clamped to
``[EPS, 1 - EPS]`` before any logarithm so every loss stays finite.
"""
from dataclasses import dataclass

import numpy as np

from .geometry import as_boxes, pairwise_giou, pairwise_iou

EPS = 1e-6


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"focal alpha must lie in [0, 1], got {self.alpha}")
        if self.gamma < 0.0:
            raise ValueError(f"focal gamma must be >= 0, got {self.gamma}")


def _clamp(p):
    return np.clip(np.asarray(p, dtype=np.float64), EPS, 1.0 - EPS)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def focal_loss(p, y, params=FocalParams()):
    """Binary focal loss of score ``p`` against target ``y`` in {0, 1}."""
    p = _clamp(p)
    y = np.asarray(y)
    a, g = params.alpha, params.gamma
    pos = -a * (1.0 - p) ** g * np.log(p)
    neg = -(1.0 - a) * p**g * np.log1p(-p)
    return _out(np.where(y == 1, pos, neg))


def focal_loss_grad(p, y, params=FocalParams()):
    """Analytic d(focal_loss)/dp, valid inside the clamp range."""
    p = _clamp(p)
    y = np.asarray(y)
    a, g = params.alpha, params.gamma
    q = 1.0 - p
    # g * q**(g-1) is zero for g == 0; guard the power so it stays finite
    dq = g * q ** (g - 1.0) if g != 0 else np.zeros_like(p)
    dp = g * p ** (g - 1.0) if g != 0 else np.zeros_like(p)
    pos = a * (dq * np.log(p) - q**g / p)
    neg = -(1.0 - a) * (dp * np.log1p(-p) - p**g / q)
    return _out(np.where(y == 1, pos, neg))


def bce_loss(p, y):
    p = _clamp(p)
    y = np.asarray(y)
    return _out(np.where(y == 1, -np.log(p), -np.log1p(-p)))


def iou_loss(pred, gt):
    """1 - IoU for paired boxes; returns a scalar for single boxes."""
    pred, gt = as_boxes(pred), as_boxes(gt)
    vals = np.array([1.0 - pairwise_iou(pred[k], gt[k])[0, 0] for k in range(len(pred))])
    return float(vals[0]) if len(vals) == 1 else vals


def giou_loss(pred, gt):
    pred, gt = as_boxes(pred), as_boxes(gt)
    vals = np.array([1.0 - pairwise_giou(pred[k], gt[k])[0, 0] for k in range(len(pred))])
    return float(vals[0]) if len(vals) == 1 else vals


def log_iou_loss(pred, gt):
    """-ln(IoU) with IoU floored at EPS; the unbounded alternative to 1 - IoU."""
    pred, gt = as_boxes(pred), as_boxes(gt)
    vals = np.array([-np.log(max(pairwise_iou(pred[k], gt[k])[0, 0], EPS)) for k in range(len(pred))])
    return float(vals[0]) if len(vals) == 1 else vals


def smooth_l1(pred, gt, beta=1.0):
    """Smooth-L1 summed over the last axis: quadratic below ``beta``, linear above."""
    if beta <= 0:
        raise ValueError("smooth_l1 beta must be positive")
    d = np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64))
    per = np.where(d < beta, 0.5 * d * d / beta, d - 0.5 * beta)
    return _out(per.sum(axis=-1))


# -- all-pairs forms used by the cost matrix ---------------------------------

REG_LOSSES = ("iou", "giou", "log_iou")
CLS_LOSSES = ("focal", "bce")


def pairwise_reg_loss(gt_boxes, pred_boxes, kind="iou"):
    """(I, J) regression loss between every GT and every predicted box."""
    if kind == "iou":
        return 1.0 - pairwise_iou(gt_boxes, pred_boxes)
    if kind == "giou":
        return 1.0 - pairwise_giou(gt_boxes, pred_boxes)
    if kind == "log_iou":
        return -np.log(np.maximum(pairwise_iou(gt_boxes, pred_boxes), EPS))
    raise ValueError(f"unknown regression loss {kind!r}; expected one of {REG_LOSSES}")


def positive_cls_loss(scores, kind="focal", params=FocalParams()):
    """Loss of treating each score as a positive; same shape as ``scores``."""
    if kind == "focal":
        return focal_loss(scores, 1, params)
    if kind == "bce":
        return bce_loss(scores, 1)
    raise ValueError(f"unknown classification loss {kind!r}; expected one of {CLS_LOSSES}")
