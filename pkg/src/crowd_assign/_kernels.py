"""Hot numeric kernels, each in two flavours.

The ``*_loop`` functions are written for numba (plain loops over float64
arrays) and are compiled by ``_accel.njit``. The ``*_numpy`` functions are
the vectorised fallback. Both follow the same arithmetic order so they agree
bit for bit; ``tests/test_kernels.py`` holds them to that.
"""
import numpy as np

from . import _accel


# -- pairwise IoU / GIoU ------------------------------------------------------

def _pairwise_overlap_loop(a, b, generalized):
    n, m = a.shape[0], b.shape[0]
    out = np.zeros((n, m), dtype=np.float64)
    for i in range(n):
        ax1, ay1, ax2, ay2 = a[i, 0], a[i, 1], a[i, 2], a[i, 3]
        area_a = (ax2 - ax1) * (ay2 - ay1)
        for j in range(m):
            bx1, by1, bx2, by2 = b[j, 0], b[j, 1], b[j, 2], b[j, 3]
            area_b = (bx2 - bx1) * (by2 - by1)
            iw = min(ax2, bx2) - max(ax1, bx1)
            ih = min(ay2, by2) - max(ay1, by1)
            if iw < 0.0:
                iw = 0.0
            if ih < 0.0:
                ih = 0.0
            inter = iw * ih
            union = area_a + area_b - inter
            iou = inter / union if union > 0.0 else 0.0
            if generalized:
                hull = (max(ax2, bx2) - min(ax1, bx1)) * (max(ay2, by2) - min(ay1, by1))
                if hull > 0.0:
                    iou = iou - (hull - union) / hull
            out[i, j] = iou
    return out


def _pairwise_overlap_numpy(a, b, generalized):
    ax1, ay1, ax2, ay2 = (a[:, k, None] for k in range(4))
    bx1, by1, bx2, by2 = (b[None, :, k] for k in range(4))
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    iw = np.maximum(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0.0)
    ih = np.maximum(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0.0)
    inter = iw * ih
    union = area_a + area_b - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0.0, inter / union, 0.0)
        if generalized:
            hull = (np.maximum(ax2, bx2) - np.minimum(ax1, bx1)) * (
                np.maximum(ay2, by2) - np.minimum(ay1, by1)
            )
            iou = np.where(hull > 0.0, iou - (hull - union) / hull, iou)
    return np.ascontiguousarray(iou, dtype=np.float64)


# -- point-in-box -------------------------------------------------------------

def _points_in_boxes_loop(points, boxes):
    n, m = boxes.shape[0], points.shape[0]
    out = np.zeros((n, m), dtype=np.bool_)
    for i in range(n):
        x1, y1, x2, y2 = boxes[i, 0], boxes[i, 1], boxes[i, 2], boxes[i, 3]
        for j in range(m):
            px, py = points[j, 0], points[j, 1]
            out[i, j] = x1 <= px and px <= x2 and y1 <= py and py <= y2
    return out


def _points_in_boxes_numpy(points, boxes):
    px, py = points[None, :, 0], points[None, :, 1]
    return (
        (boxes[:, 0, None] <= px) & (px <= boxes[:, 2, None])
        & (boxes[:, 1, None] <= py) & (py <= boxes[:, 3, None])
    )


# -- per-row top-K (smallest), ties to lower column ---------------------------

def _topk_smallest_loop(values, k):
    n, m = values.shape
    k = min(k, m)
    out = np.empty((n, k), dtype=np.int64)
    buf_v = np.empty(k, dtype=np.float64)
    buf_i = np.empty(k, dtype=np.int64)
    for i in range(n):
        filled = 0
        for j in range(m):
            v = values[i, j]
            if filled < k:
                p = filled
                filled += 1
            elif v < buf_v[k - 1]:
                p = k - 1
            else:
                continue
            # strict comparison keeps earlier columns ahead on ties
            while p > 0 and buf_v[p - 1] > v:
                buf_v[p] = buf_v[p - 1]
                buf_i[p] = buf_i[p - 1]
                p -= 1
            buf_v[p] = v
            buf_i[p] = j
        for t in range(k):
            out[i, t] = buf_i[t]
    return out


def _topk_smallest_numpy(values, k):
    k = min(k, values.shape[1])
    return np.argsort(values, axis=1, kind="stable")[:, :k].astype(np.int64)


# -- greedy NMS ---------------------------------------------------------------

def _greedy_nms_loop(boxes, order, thr):
    n = order.shape[0]
    suppressed = np.zeros(boxes.shape[0], dtype=np.bool_)
    keep = np.empty(n, dtype=np.int64)
    kept = 0
    for a in range(n):
        i = order[a]
        if suppressed[i]:
            continue
        keep[kept] = i
        kept += 1
        ix1, iy1, ix2, iy2 = boxes[i, 0], boxes[i, 1], boxes[i, 2], boxes[i, 3]
        area_i = (ix2 - ix1) * (iy2 - iy1)
        for b in range(a + 1, n):
            j = order[b]
            if suppressed[j]:
                continue
            jx1, jy1, jx2, jy2 = boxes[j, 0], boxes[j, 1], boxes[j, 2], boxes[j, 3]
            area_j = (jx2 - jx1) * (jy2 - jy1)
            iw = min(ix2, jx2) - max(ix1, jx1)
            ih = min(iy2, jy2) - max(iy1, jy1)
            if iw < 0.0:
                iw = 0.0
            if ih < 0.0:
                ih = 0.0
            inter = iw * ih
            union = area_i + area_j - inter
            iou = inter / union if union > 0.0 else 0.0
            if iou > thr:
                suppressed[j] = True
    return keep[:kept]


def _greedy_nms_numpy(boxes, order, thr):
    x1, y1, x2, y2 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    areas = (x2 - x1) * (y2 - y1)
    keep = []
    order = np.asarray(order, dtype=np.int64)
    while order.size > 0:
        i = order[0]
        keep.append(i)
        rest = order[1:]
        iw = np.maximum(np.minimum(x2[i], x2[rest]) - np.maximum(x1[i], x1[rest]), 0.0)
        ih = np.maximum(np.minimum(y2[i], y2[rest]) - np.maximum(y1[i], y1[rest]), 0.0)
        inter = iw * ih
        union = areas[i] + areas[rest] - inter
        with np.errstate(divide="ignore", invalid="ignore"):
            iou = np.where(union > 0.0, inter / union, 0.0)
        order = rest[iou <= thr]
    return np.asarray(keep, dtype=np.int64)


pairwise_overlap_nb = _accel.njit(_pairwise_overlap_loop)
points_in_boxes_nb = _accel.njit(_points_in_boxes_loop)
topk_smallest_nb = _accel.njit(_topk_smallest_loop)
greedy_nms_nb = _accel.njit(_greedy_nms_loop)


def _f64(x, cols):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    return arr.reshape(-1, cols)


def pairwise_overlap(a, b, generalized=False):
    a, b = _f64(a, 4), _f64(b, 4)
    if _accel.use_numba():
        return pairwise_overlap_nb(a, b, bool(generalized))
    return _pairwise_overlap_numpy(a, b, bool(generalized))


def points_in_boxes(points, boxes):
    points, boxes = _f64(points, 2), _f64(boxes, 4)
    if _accel.use_numba():
        return points_in_boxes_nb(points, boxes)
    return _points_in_boxes_numpy(points, boxes)


def topk_smallest(values, k):
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("topk_smallest expects a 2-D matrix")
    if _accel.use_numba():
        return topk_smallest_nb(values, int(k))
    return _topk_smallest_numpy(values, int(k))


def greedy_nms(boxes, scores, thr):
    boxes = _f64(boxes, 4)
    scores = np.asarray(scores, dtype=np.float64).ravel()
    # descending score, ties to lower index
    order = np.argsort(-scores, kind="stable").astype(np.int64)
    if _accel.use_numba():
        return greedy_nms_nb(boxes, order, float(thr))
    return _greedy_nms_numpy(boxes, order, float(thr))
