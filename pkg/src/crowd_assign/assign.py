"""Label assignment: loss-aware top-K matching and the IoU / center baselines.

Labels are stored per anchor as an int array: ``>= 0`` is the index of the
GT the anchor is positive for, ``NEGATIVE`` and ``IGNORE`` are sentinels.
Every assigner also keeps its pre-resolution candidate relation (``I x J``
bool) so ambiguity can be measured afterwards.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import as_boxes, box_area, box_centers, pairwise_iou, points_in_boxes
from .losses import CLS_LOSSES, REG_LOSSES, FocalParams, pairwise_reg_loss, positive_cls_loss

NEGATIVE = -1
IGNORE = -2

# FCOS regression ranges per stage (P3..P7)
FCOS_SCALE_RANGES = ((0.0, 64.0), (64.0, 128.0), (128.0, 256.0), (256.0, 512.0), (512.0, np.inf))


@dataclass(frozen=True, eq=False)
class Predictions:
    scores: np.ndarray  # (J, N) probabilities
    boxes: np.ndarray  # (J, 4)

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim == 1:
            scores = scores[:, None]
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "boxes", as_boxes(self.boxes))
        if scores.shape[0] != self.boxes.shape[0]:
            raise ValueError(f"scores rows {scores.shape[0]} != boxes rows {self.boxes.shape[0]}")
        if scores.size and (scores.min() < 0.0 or scores.max() > 1.0):
            raise ValueError("prediction scores must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class GroundTruthSet:
    boxes: np.ndarray  # (I, 4)
    classes: np.ndarray = None  # (I,)
    ignore: np.ndarray = None  # (I,) bool

    def __post_init__(self):
        boxes = as_boxes(self.boxes)
        n = len(boxes)
        classes = np.zeros(n, dtype=np.int64) if self.classes is None else np.asarray(self.classes, dtype=np.int64)
        ignore = np.zeros(n, dtype=bool) if self.ignore is None else np.asarray(self.ignore, dtype=bool)
        if classes.shape != (n,) or ignore.shape != (n,):
            raise ValueError("GT classes/ignore must have one entry per box")
        if np.any(classes < 0):
            raise ValueError("GT classes must be non-negative")
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "ignore", ignore)

    def __len__(self):
        return len(self.boxes)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 4)))

    def equals(self, other):
        return (
            np.array_equal(self.boxes, other.boxes)
            and np.array_equal(self.classes, other.classes)
            and np.array_equal(self.ignore, other.ignore)
        )


@dataclass(frozen=True)
class LlaConfig:
    K: int = 10
    lam: float = 1.0
    inbox_penalty: float = 100.0
    cls_loss: str = "focal"
    reg_loss: str = "iou"
    focal: FocalParams = field(default_factory=FocalParams)

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be an integer >= 1, got {self.K}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if not self.inbox_penalty >= 0:
            raise ValueError(f"inbox_penalty must be >= 0, got {self.inbox_penalty}")
        if self.cls_loss not in CLS_LOSSES:
            raise ValueError(f"cls_loss must be one of {CLS_LOSSES}, got {self.cls_loss!r}")
        if self.reg_loss not in REG_LOSSES:
            raise ValueError(f"reg_loss must be one of {REG_LOSSES}, got {self.reg_loss!r}")

    @classmethod
    def anchor_free(cls, **kw):
        kw.setdefault("lam", 1.3)
        return cls(**kw)

    def check_dominance(self):
        """Raise unless the in-box penalty dominates any in-box joint cost."""
        if self.inbox_penalty <= 10:
            raise ValueError(f"inbox_penalty {self.inbox_penalty} is not >> the joint loss scale")


@dataclass(frozen=True, eq=False)
class CostMatrix:
    values: np.ndarray  # (I, J)
    cls: np.ndarray = None
    reg: np.ndarray = None
    inbox: np.ndarray = None

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class Assignment:
    labels: np.ndarray  # (J,) int: gt index, NEGATIVE or IGNORE
    candidates: np.ndarray  # (I, J) bool, matches before conflict resolution

    @property
    def num_gts(self):
        return self.candidates.shape[0]

    @property
    def num_anchors(self):
        return self.labels.shape[0]

    def pi(self):
        """Binary (I, J) assignment matrix."""
        out = np.zeros(self.candidates.shape, dtype=bool)
        pos = np.flatnonzero(self.labels >= 0)
        out[self.labels[pos], pos] = True
        return out

    def positives(self, gt=None):
        if gt is None:
            return np.flatnonzero(self.labels >= 0)
        return np.flatnonzero(self.labels == gt)

    def positives_per_gt(self):
        return np.bincount(self.labels[self.labels >= 0], minlength=self.num_gts)

    def counts(self):
        return {
            "positive": int(np.sum(self.labels >= 0)),
            "negative": int(np.sum(self.labels == NEGATIVE)),
            "ignore": int(np.sum(self.labels == IGNORE)),
        }

    def equals(self, other):
        return np.array_equal(self.labels, other.labels) and np.array_equal(self.candidates, other.candidates)


def _empty_assignment(num_gts, num_anchors):
    return Assignment(
        labels=np.full(num_anchors, NEGATIVE, dtype=np.int64),
        candidates=np.zeros((num_gts, num_anchors), dtype=bool),
    )


# -- loss-aware assignment ----------------------------------------------------

def cost_matrix(preds, gts, anchors=None, cfg=LlaConfig(), keep_components=False):
    """All-pairs joint loss: cls + lambda * reg, shape (I, J).

    The classification term for GT i at anchor j is the positive-target loss
    of anchor j's score at GT i's class.
    """
    j = preds.boxes.shape[0]
    if anchors is not None and len(anchors) != j:
        raise ValueError(f"predictions cover {j} anchors but the anchor set has {len(anchors)}")
    n = len(gts)
    if n == 0:
        empty = np.zeros((0, j))
        return CostMatrix(empty, empty.copy(), empty.copy()) if keep_components else CostMatrix(empty)
    if gts.classes.max() >= preds.scores.shape[1]:
        raise ValueError("GT class index exceeds the number of predicted classes")
    per_class = positive_cls_loss(preds.scores.T, cfg.cls_loss, cfg.focal)  # (N, J)
    c_cls = np.asarray(per_class)[gts.classes]
    c_reg = pairwise_reg_loss(gts.boxes, preds.boxes, cfg.reg_loss)
    values = c_cls + cfg.lam * c_reg
    if keep_components:
        return CostMatrix(values, c_cls, c_reg)
    return CostMatrix(values)


def inbox_mask(gts, anchors):
    """(I, J) bool: anchor center lies inside the GT box (closed)."""
    return points_in_boxes(anchors.centers, gts.boxes)


def restrict(c, gts, anchors, cfg=LlaConfig()):
    """Add ``inbox_penalty`` wherever the anchor center is outside the GT."""
    if c.values.shape != (len(gts), len(anchors)):
        raise ValueError(f"cost matrix {c.values.shape} does not match ({len(gts)}, {len(anchors)})")
    inbox = np.where(inbox_mask(gts, anchors), 0.0, float(cfg.inbox_penalty))
    return CostMatrix(c.values + inbox, c.cls, c.reg, inbox)


def topk_matches(values, k):
    """Stage 1: (I, J) bool of each row's ``k`` smallest entries.

    Ties go to the lower anchor index. Rows with fewer than ``k`` entries
    match every anchor.
    """
    values = np.asarray(values, dtype=np.float64)
    n, j = values.shape
    out = np.zeros((n, j), dtype=bool)
    if n == 0 or j == 0:
        return out
    idx = _kernels.topk_smallest(values, k)
    out[np.arange(n)[:, None], idx] = True
    return out


def resolve_min_cost(values, matches):
    """Stage 2: each multiply-matched anchor keeps its lowest-cost GT.

    Exact cost ties go to the lower GT index.
    """
    n, j = matches.shape
    labels = np.full(j, NEGATIVE, dtype=np.int64)
    if n == 0:
        return labels
    masked = np.where(matches, values, np.inf)
    best = np.argmin(masked, axis=0)  # first minimum -> lower GT index
    hit = matches.any(axis=0)
    labels[hit] = best[hit]
    return labels


def lla_assign(c_r, cfg=LlaConfig()):
    """Top-K per GT on the restricted cost matrix, then min-cost resolution.

    LLA never emits IGNORE: unmatched anchors are negative.
    """
    values = c_r.values if isinstance(c_r, CostMatrix) else np.asarray(c_r, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("cost matrix contains non-finite entries")
    matches = topk_matches(values, cfg.K)
    return Assignment(resolve_min_cost(values, matches), matches)


def lla(preds, gts, anchors, cfg=LlaConfig(), return_cost=False):
    """Full pipeline: cost matrix, in-box restriction, top-K assignment."""
    c = cost_matrix(preds, gts, anchors, cfg, keep_components=return_cost)
    c_r = restrict(c, gts, anchors, cfg)
    result = lla_assign(c_r, cfg)
    return (result, c_r) if return_cost else result


# -- baselines ----------------------------------------------------------------

def retinanet_assign(anchors, gts, pos_thr=0.5, neg_thr=0.4):
    """Max-IoU thresholding: > pos_thr positive, < neg_thr negative, else ignore."""
    if not 0.0 <= neg_thr <= pos_thr <= 1.0:
        raise ValueError("need 0 <= neg_thr <= pos_thr <= 1")
    n, j = len(gts), len(anchors)
    if n == 0:
        return _empty_assignment(0, j)
    ious = pairwise_iou(gts.boxes, anchors.boxes)
    ious[gts.ignore] = -1.0  # ignore-flagged GTs are never positive sources
    best_gt = np.argmax(ious, axis=0)
    best_iou = ious[best_gt, np.arange(j)]
    labels = np.full(j, IGNORE, dtype=np.int64)
    labels[best_iou < neg_thr] = NEGATIVE
    pos = best_iou > pos_thr
    labels[pos] = best_gt[pos]
    return Assignment(labels, ious > pos_thr)


def fcos_assign(anchors, gts, radius=1.5, scale_ranges=FCOS_SCALE_RANGES):
    """Center sampling plus per-level regression ranges; smaller GT wins conflicts."""
    n, j = len(gts), len(anchors)
    if n == 0:
        return _empty_assignment(0, j)
    pts = anchors.centers
    g = gts.boxes
    inside = points_in_boxes(pts, g)
    ctr = box_centers(g)
    reach = radius * anchors.strides[None, :]
    near = (np.abs(pts[None, :, 0] - ctr[:, 0, None]) <= reach) & (
        np.abs(pts[None, :, 1] - ctr[:, 1, None]) <= reach
    )
    ltrb = np.stack(
        [
            pts[None, :, 0] - g[:, 0, None],
            pts[None, :, 1] - g[:, 1, None],
            g[:, 2, None] - pts[None, :, 0],
            g[:, 3, None] - pts[None, :, 1],
        ],
        axis=-1,
    )
    max_reg = ltrb.max(axis=-1)
    ranges = np.asarray(scale_ranges, dtype=np.float64)
    if anchors.levels.max() >= len(ranges):
        raise ValueError("scale_ranges has fewer entries than anchor levels")
    lo = ranges[anchors.levels, 0][None, :]
    hi = ranges[anchors.levels, 1][None, :]
    cand = inside & near & (max_reg >= lo) & (max_reg <= hi)
    cand[gts.ignore] = False
    area = np.broadcast_to(box_area(g)[:, None], cand.shape)
    masked = np.where(cand, area, np.inf)
    best = np.argmin(masked, axis=0)
    labels = np.full(j, NEGATIVE, dtype=np.int64)
    hit = cand.any(axis=0)
    labels[hit] = best[hit]
    return Assignment(labels, cand)


def atss_candidates(anchors, gts, top_candidates=9):
    """Per GT, per level: the ``top_candidates`` anchors nearest the GT center.

    Returns an (I, J) bool mask. Distance ties go to the lower anchor index.
    """
    n, j = len(gts), len(anchors)
    cand = np.zeros((n, j), dtype=bool)
    if n == 0:
        return cand
    gc = box_centers(gts.boxes)
    d2 = (anchors.centers[None, :, 0] - gc[:, 0, None]) ** 2 + (anchors.centers[None, :, 1] - gc[:, 1, None]) ** 2
    for sl in anchors.level_slices().values():
        idx = _kernels.topk_smallest(d2[:, sl], top_candidates) + sl.start
        cand[np.arange(n)[:, None], idx] = True
    return cand


def atss_threshold(candidate_ious):
    """mean + std of the candidate IoUs (sample std, ddof=1)."""
    v = np.asarray(candidate_ious, dtype=np.float64)
    if v.size < 2:
        return float(v.mean()) if v.size else np.inf
    return float(v.mean() + v.std(ddof=1))


def atss_assign(anchors, gts, top_candidates=9):
    """Adaptive IoU threshold from nearest-center candidates; max-IoU GT wins conflicts."""
    n, j = len(gts), len(anchors)
    if n == 0:
        return _empty_assignment(0, j)
    ious = pairwise_iou(gts.boxes, anchors.boxes)
    cand = atss_candidates(anchors, gts, top_candidates)
    inside = inbox_mask(gts, anchors)
    pos = np.zeros_like(cand)
    for i in range(n):
        if gts.ignore[i]:
            continue
        thr = atss_threshold(ious[i, cand[i]])
        pos[i] = cand[i] & (ious[i] >= thr) & inside[i]
    masked = np.where(pos, ious, -np.inf)
    best = np.argmax(masked, axis=0)
    labels = np.full(j, NEGATIVE, dtype=np.int64)
    hit = pos.any(axis=0)
    labels[hit] = best[hit]
    return Assignment(labels, pos)


def ambiguous_count(candidates):
    """Anchors claimed by two or more GTs before conflict resolution."""
    c = np.asarray(candidates, dtype=bool)
    if c.size == 0:
        return 0
    return int(np.sum(c.sum(axis=0) >= 2))
