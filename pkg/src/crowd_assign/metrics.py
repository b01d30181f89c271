"""Evaluation: greedy NMS, Caltech-style matching, MR over FPPI, AP, recall,
plus assignment diagnostics (AAR, FPN-level allocation, visible fraction)."""
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .assign import GroundTruthSet, ambiguous_count
from .geometry import Box, as_boxes, box_area, pairwise_iou

FPPI_REFS = np.logspace(-2.0, 2.0, 9)
MISS_FLOOR = 1e-10


@dataclass(frozen=True)
class Detection:
    box: Box
    score: float
    image_id: object = 0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score must lie in [0, 1], got {self.score}")
        object.__setattr__(self, "box", Box(*map(float, self.box)))


def detections_to_arrays(dets):
    boxes = as_boxes([d.box for d in dets]) if dets else np.zeros((0, 4))
    scores = np.array([d.score for d in dets], dtype=np.float64)
    return boxes, scores


# -- NMS ----------------------------------------------------------------------

def nms(boxes, scores, iou_thr=0.5):
    """Greedy NMS. Returns kept indices in descending-score order (ties: lower index first)."""
    if not 0.0 < iou_thr < 1.0:
        raise ValueError("iou_thr must lie in (0, 1)")
    boxes = as_boxes(boxes)
    if len(boxes) == 0:
        return np.zeros(0, dtype=np.int64)
    return _kernels.greedy_nms(boxes, scores, iou_thr)


def nms_detections(dets, iou_thr=0.5):
    boxes, scores = detections_to_arrays(dets)
    return [dets[k] for k in nms(boxes, scores, iou_thr)]


# -- per-image matching -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ImageMatch:
    scores: np.ndarray  # (D,)
    tp: np.ndarray  # (D,) bool
    fp: np.ndarray  # (D,) bool
    ignored: np.ndarray  # (D,) bool: matched an ignore region, excluded from the curve
    gt_matched: np.ndarray  # (I,) bool
    n_gt: int  # non-ignore GTs

    @property
    def misses(self):
        return self.n_gt - int(self.tp.sum())


def match_detections(boxes, scores, gts, iou_thr=0.5):
    """Greedy score-descending matching of one image's detections.

    Each detection takes the highest-IoU unmatched non-ignore GT with
    IoU >= ``iou_thr`` (TP). Failing that, a detection overlapping an ignore
    GT at >= ``iou_thr`` is discarded; ignore GTs may absorb any number of
    detections. Everything else is a false positive.
    """
    boxes = as_boxes(boxes)
    scores = np.asarray(scores, dtype=np.float64).ravel()
    d, n = len(boxes), len(gts)
    tp = np.zeros(d, dtype=bool)
    fp = np.zeros(d, dtype=bool)
    ignored = np.zeros(d, dtype=bool)
    matched = np.zeros(n, dtype=bool)
    ious = pairwise_iou(boxes, gts.boxes) if n and d else np.zeros((d, n))
    for k in np.argsort(-scores, kind="stable"):
        best, best_iou = -1, iou_thr
        for g in range(n):
            if gts.ignore[g] or matched[g]:
                continue
            if ious[k, g] >= best_iou and (best < 0 or ious[k, g] > ious[k, best]):
                best, best_iou = g, ious[k, g]
        if best >= 0:
            tp[k] = True
            matched[best] = True
        elif n and np.any(gts.ignore & (ious[k] >= iou_thr)):
            ignored[k] = True
        else:
            fp[k] = True
    return ImageMatch(scores, tp, fp, ignored, matched, int(np.sum(~gts.ignore)))


def match_images(per_image, iou_thr=0.5):
    """``per_image`` is an iterable of (boxes, scores, GroundTruthSet)."""
    return [match_detections(b, s, g, iou_thr) for b, s, g in per_image]


# -- curves -------------------------------------------------------------------

def _cumulative(matches):
    """Cumulative (thresholds, tp, fp, n_gt) over distinct scores, descending."""
    n_gt = sum(m.n_gt for m in matches)
    keep = [~m.ignored for m in matches]
    scores = np.concatenate([m.scores[k] for m, k in zip(matches, keep)]) if matches else np.zeros(0)
    tp = np.concatenate([m.tp[k] for m, k in zip(matches, keep)]) if matches else np.zeros(0, bool)
    fp = np.concatenate([m.fp[k] for m, k in zip(matches, keep)]) if matches else np.zeros(0, bool)
    order = np.argsort(-scores, kind="stable")
    scores, tp, fp = scores[order], tp[order], fp[order]
    ctp, cfp = np.cumsum(tp), np.cumsum(fp)
    if len(scores) == 0:
        return scores, ctp, cfp, n_gt
    # last index of each run of equal scores
    last = np.flatnonzero(np.append(scores[1:] != scores[:-1], True))
    return scores[last], ctp[last], cfp[last], n_gt


def miss_rate_curve(matches):
    """(thresholds, fppi, miss_rate) arrays, one point per distinct score."""
    if not matches:
        raise ValueError("MR undefined: no images")
    thr, ctp, cfp, n_gt = _cumulative(matches)
    if n_gt == 0:
        raise ValueError("MR undefined: no non-ignore ground truth")
    return thr, cfp / len(matches), 1.0 - ctp / n_gt


def sample_miss_rates(fppi, miss, refs=FPPI_REFS):
    """Step-interpolate the curve at each reference FPPI.

    Each reference takes the miss rate of the last curve point whose FPPI
    does not exceed it; references left of the curve take its first point.
    An empty curve misses everything.
    """
    fppi, miss = np.asarray(fppi), np.asarray(miss)
    out = np.ones(len(refs))
    if len(fppi) == 0:
        return out
    for r, ref in enumerate(refs):
        idx = np.flatnonzero(fppi <= ref)
        out[r] = miss[idx[-1]] if idx.size else miss[0]
    return out


def log_average_miss_rate(matches, refs=FPPI_REFS):
    """Log-average miss rate over FPPI in [1e-2, 1e2], in percent."""
    _, fppi, miss = miss_rate_curve(matches)
    sampled = np.maximum(sample_miss_rates(fppi, miss, refs), MISS_FLOOR)
    return 100.0 * math.exp(float(np.mean(np.log(sampled))))


def average_precision(matches, points=101):
    """Interpolated AP (COCO-style, ``points`` recall samples) in percent."""
    if not matches:
        raise ValueError("AP undefined: no images")
    _, ctp, cfp, n_gt = _cumulative(matches)
    if n_gt == 0:
        raise ValueError("AP undefined: no non-ignore ground truth")
    if len(ctp) == 0:
        return 0.0
    recall = ctp / n_gt
    precision = ctp / np.maximum(ctp + cfp, 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    total = 0.0
    for r in np.linspace(0.0, 1.0, points):
        idx = np.searchsorted(recall, r, side="left")
        total += envelope[idx] if idx < len(recall) else 0.0
    return 100.0 * total / points


def recall(matches):
    n_gt = sum(m.n_gt for m in matches)
    if n_gt == 0:
        raise ValueError("recall undefined: no non-ignore ground truth")
    return 100.0 * sum(int(m.tp.sum()) for m in matches) / n_gt


@dataclass
class EvalResult:
    mr: float
    ap: float
    recall: float
    fppi_curve: list = field(default_factory=list)

    def as_dict(self):
        return {
            "mr": self.mr,
            "ap": self.ap,
            "recall": self.recall,
            "fppi_curve": [[f, m] for f, m in self.fppi_curve],
        }


def evaluate(per_image, iou_thr=0.5):
    matches = match_images(per_image, iou_thr)
    _, fppi, miss = miss_rate_curve(matches)
    return EvalResult(
        mr=log_average_miss_rate(matches),
        ap=average_precision(matches),
        recall=recall(matches),
        fppi_curve=list(zip(fppi.tolist(), miss.tolist())),
    )


def subset_ignore(gts, visible, min_height=50.0, visibility=(0.0, 1.0)):
    """Ignore flags for a visibility/height subset (e.g. Reasonable, Heavy).

    GTs shorter than ``min_height`` or with visible/full area outside
    ``visibility`` are flagged ignore in addition to existing flags.
    """
    boxes = gts.boxes
    full = box_area(boxes)
    vis = np.where(full > 0, box_area(visible) / np.where(full > 0, full, 1.0), 0.0)
    height = boxes[:, 3] - boxes[:, 1]
    lo, hi = visibility
    out = gts.ignore | (height < min_height) | (vis < lo) | (vis > hi)
    return GroundTruthSet(boxes, gts.classes, out)


# -- assignment diagnostics ---------------------------------------------------

def aar_counts(candidates, assignment):
    cand = np.asarray(candidates, dtype=bool)
    return {
        "ambiguous": ambiguous_count(cand),
        "positive": int(np.sum(assignment.labels >= 0)),
        "matched_pre_resolution": int(np.sum(cand.any(axis=0))) if cand.size else 0,
    }


def aar(candidates, assignment):
    """Ambiguous anchors over post-resolution positive anchors, in percent."""
    c = aar_counts(candidates, assignment)
    if c["positive"] == 0:
        raise ValueError("AAR undefined: assignment has no positive anchors")
    return 100.0 * c["ambiguous"] / c["positive"]


def fpn_allocation(assignment, anchors, gts):
    """Per GT: (area, stage holding most of its positives); ties go to the lower stage.

    GTs without positives get stage ``None``.
    """
    areas = box_area(gts.boxes)
    out = []
    nlev = int(anchors.levels.max()) + 1 if len(anchors) else 0
    for i in range(len(gts)):
        pos = assignment.positives(i)
        if pos.size == 0:
            out.append((float(areas[i]), None))
            continue
        counts = np.bincount(anchors.levels[pos], minlength=nlev)
        out.append((float(areas[i]), int(np.argmax(counts))))
    return out


def stage_histogram(allocation, num_stages=5):
    """Number of GTs per modal stage; the final slot counts unassigned GTs."""
    hist = np.zeros(num_stages + 1, dtype=np.int64)
    for _, stage in allocation:
        hist[num_stages if stage is None else stage] += 1
    return hist


def visible_fraction(assignment, anchors, scene, gt_indices=None):
    """Fraction of positives whose anchor center lies in their GT's visible box.

    Restricted to ``gt_indices`` when given; ``None`` when there are no positives.
    """
    labels = assignment.labels
    pos = np.flatnonzero(labels >= 0)
    if gt_indices is not None:
        pos = pos[np.isin(labels[pos], np.asarray(gt_indices))]
    if pos.size == 0:
        return None
    vis = scene.visible[labels[pos]]
    c = anchors.centers[pos]
    inside = (vis[:, 0] <= c[:, 0]) & (c[:, 0] <= vis[:, 2]) & (vis[:, 1] <= c[:, 1]) & (c[:, 1] <= vis[:, 3])
    return float(inside.mean())

