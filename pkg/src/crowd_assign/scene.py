"""Synthetic crowd scenes and a geometry-driven stand-in for a trained detector."""
import math
from dataclasses import dataclass, replace

import numpy as np

from .assign import GroundTruthSet, LlaConfig, Predictions, lla
from .geometry import as_boxes, box_area, intersection_area, pairwise_iou, points_in_boxes

PEDESTRIAN_ASPECT = 2.4  # h / w


@dataclass(frozen=True, eq=False)
class Scene:
    image_w: float
    image_h: float
    gts: GroundTruthSet
    visible: np.ndarray  # (I, 4) largest unoccluded rectangle of each GT
    occlusion: np.ndarray  # (I,) exact fraction of the GT covered by nearer GTs
    depth: np.ndarray  # (I,) rank, 0 = nearest to the camera
    visible_gap: np.ndarray = None  # (I,) unoccluded fraction minus visible-box fraction

    def __post_init__(self):
        n = len(self.gts)
        if self.visible_gap is None:
            object.__setattr__(self, "visible_gap", np.zeros(n))

    def __len__(self):
        return len(self.gts)

    @property
    def max_visible_gap(self):
        return float(self.visible_gap.max()) if len(self) else 0.0

    def equals(self, other):
        return (
            self.image_w == other.image_w
            and self.image_h == other.image_h
            and self.gts.equals(other.gts)
            and np.array_equal(self.visible, other.visible)
            and np.array_equal(self.occlusion, other.occlusion)
            and np.array_equal(self.depth, other.depth)
        )


@dataclass(frozen=True)
class MockPredictorConfig:
    """Knobs of the mock predictor.

    ``score_sharpness`` sets how fast scores fall off away from the centre
    of the visible region. ``maturity`` interpolates between an untrained network (flat scores,
    boxes equal to the anchors) and a converged one (scores track visible
    body coverage, boxes snap to the covering GT).
    """

    score_sharpness: float = 2.0
    noise_sigma: float = 0.0
    maturity: float = 1.0
    seed: int = 0
    base_score: float = 0.05
    floor_score: float = 0.01
    peak_score: float = 0.99

    def __post_init__(self):
        if not 0.0 <= self.maturity <= 1.0:
            raise ValueError(f"maturity must lie in [0, 1], got {self.maturity}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.score_sharpness <= 0:
            raise ValueError("score_sharpness must be positive")
        for name in ("base_score", "floor_score", "peak_score"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


# -- occlusion geometry -------------------------------------------------------

def _largest_free_rectangle(xs, ys, free):
    """Largest-area rectangle made of free cells on a non-uniform grid.

    ``free`` has shape (len(ys) - 1, len(xs) - 1). Returns (area, x1, y1, x2, y2)
    or None if no cell is free.
    """
    ny, nx = free.shape
    best = None
    for c0 in range(nx):
        col_ok = np.ones(ny, dtype=bool)
        for c1 in range(c0, nx):
            col_ok &= free[:, c1]
            if not col_ok.any():
                break
            w = xs[c1 + 1] - xs[c0]
            r = 0
            while r < ny:
                if not col_ok[r]:
                    r += 1
                    continue
                r0 = r
                while r < ny and col_ok[r]:
                    r += 1
                area = w * (ys[r] - ys[r0])
                if best is None or area > best[0]:
                    best = (area, xs[c0], ys[r0], xs[c1 + 1], ys[r])
    return best


def _occlusion_grid(boxes, depth, i):
    """Grid breakpoints and occluded-cell mask of box ``i``, or None if unoccluded."""
    x1, y1, x2, y2 = boxes[i]
    occ = []
    for k in range(len(boxes)):
        if depth[k] >= depth[i]:
            continue
        ox1, oy1 = max(boxes[k, 0], x1), max(boxes[k, 1], y1)
        ox2, oy2 = min(boxes[k, 2], x2), min(boxes[k, 3], y2)
        if ox2 > ox1 and oy2 > oy1:
            occ.append((ox1, oy1, ox2, oy2))
    if not occ:
        return None
    occ = np.asarray(occ)
    xs = np.unique(np.concatenate([[x1, x2], occ[:, 0], occ[:, 2]]))
    ys = np.unique(np.concatenate([[y1, y2], occ[:, 1], occ[:, 3]]))
    cx = 0.5 * (xs[:-1] + xs[1:])
    cy = 0.5 * (ys[:-1] + ys[1:])
    covered = np.zeros((len(cy), len(cx)), dtype=bool)
    for ox1, oy1, ox2, oy2 in occ:
        covered |= ((cy >= oy1) & (cy <= oy2))[:, None] & ((cx >= ox1) & (cx <= ox2))[None, :]
    return xs, ys, covered


def occlusion_fractions(boxes, depth):
    """Exact fraction of each box covered by the union of nearer boxes."""
    boxes = as_boxes(boxes)
    areas = box_area(boxes)
    out = np.zeros(len(boxes))
    for i in range(len(boxes)):
        if areas[i] <= 0:
            continue
        grid = _occlusion_grid(boxes, depth, i)
        if grid is None:
            continue
        xs, ys, covered = grid
        cell_area = np.outer(np.diff(ys), np.diff(xs))
        out[i] = cell_area[covered].sum() / areas[i]
    return np.clip(out, 0.0, 1.0)


def visible_regions(boxes, depth):
    """Visible rectangle, exact occlusion fraction and approximation gap per box.

    A box is occluded by every box with a smaller depth rank. The visible
    region is approximated by the largest axis-aligned rectangle inside the
    unoccluded part; ``gap`` is the unoccluded area fraction that rectangle
    misses.
    """
    boxes = as_boxes(boxes)
    depth = np.asarray(depth)
    n = len(boxes)
    visible = boxes.copy()
    occlusion = np.zeros(n)
    gap = np.zeros(n)
    areas = box_area(boxes)
    for i in range(n):
        if areas[i] <= 0:
            continue
        grid = _occlusion_grid(boxes, depth, i)
        if grid is None:
            continue
        xs, ys, covered = grid
        free = ~covered
        cell_area = np.outer(np.diff(ys), np.diff(xs))
        free_frac = float(cell_area[free].sum() / areas[i])
        occlusion[i] = 1.0 - free_frac
        best = _largest_free_rectangle(xs, ys, free)
        if best is None:
            x1, y1, x2, y2 = boxes[i]
            cxm, cym = 0.5 * (x1 + x2), 0.5 * (y1 + y2)
            visible[i] = (cxm, cym, cxm, cym)
            gap[i] = free_frac
        else:
            visible[i] = best[1:]
            gap[i] = free_frac - best[0] / areas[i]
    return visible, np.clip(occlusion, 0.0, 1.0), np.maximum(gap, 0.0)


def depth_from_feet(boxes):
    """Depth rank: lower feet (larger y2) are nearer. Ties go to the lower index."""
    boxes = as_boxes(boxes)
    order = np.lexsort((np.arange(len(boxes)), -boxes[:, 3]))
    rank = np.empty(len(boxes), dtype=np.int64)
    rank[order] = np.arange(len(boxes))
    return rank


def scene_from_boxes(boxes, image_w, image_h, classes=None, ignore=None, depth=None):
    boxes = as_boxes(boxes)
    depth = depth_from_feet(boxes) if depth is None else np.asarray(depth, dtype=np.int64)
    visible, occlusion, gap = visible_regions(boxes, depth)
    return Scene(
        image_w=float(image_w),
        image_h=float(image_h),
        gts=GroundTruthSet(boxes, classes, ignore),
        visible=visible,
        occlusion=occlusion,
        depth=depth,
        visible_gap=gap,
    )


# -- generation ---------------------------------------------------------------

def _iou1(a, b):
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def _offset_for_iou(nb, w, h, dy, target):
    """Horizontal center offset at which a (w, h) box overlaps ``nb`` with IoU ``target``."""
    ncx, ncy = 0.5 * (nb[0] + nb[2]), 0.5 * (nb[1] + nb[3])

    def box_at(dx):
        cx, cy = ncx + dx, ncy + dy
        return np.array([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2])

    if _iou1(box_at(0.0), nb) < target:
        return None
    lo, hi = 0.0, 0.5 * (w + (nb[2] - nb[0]))
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _iou1(box_at(mid), nb) >= target:
            lo = mid
        else:
            hi = mid
    return lo, box_at


def generate_scene(
    n_people,
    crowd_iou,
    rng_seed=0,
    image_w=640,
    image_h=640,
    height_range=(60.0, 320.0),
    aspect=PEDESTRIAN_ASPECT,
    tolerance=0.08,
    max_occlusion=0.9,
    max_retries=500,
):
    """Place ``n_people`` pedestrian boxes whose neighbours overlap at about ``crowd_iou``.

    Each new person is placed beside an existing one at the horizontal
    offset that gives IoU ``crowd_iou``, and is rejected if it overlaps
    anyone by more than ``crowd_iou + tolerance`` or if it leaves any person
    more than ``max_occlusion`` hidden (nobody annotates an invisible person).
    ``crowd_iou = 0`` yields pairwise-disjoint boxes. Raises ``ValueError`` when a person cannot be
    placed within ``max_retries`` attempts.
    """
    if n_people < 0:
        raise ValueError("n_people must be >= 0")
    if not 0.0 <= crowd_iou < 1.0:
        raise ValueError("crowd_iou must lie in [0, 1)")
    lo_h, hi_h = height_range
    if not 0 < lo_h <= hi_h:
        raise ValueError("height_range must be positive and ordered")
    rng = np.random.default_rng(rng_seed)
    boxes = np.zeros((0, 4))

    def sample_aspect():
        return aspect * math.exp(rng.normal(0.0, 0.08))

    def free_box(h):
        w = h / sample_aspect()
        if w > image_w or h > image_h:
            return None
        x1 = rng.uniform(0, image_w - w)
        y1 = rng.uniform(0, image_h - h)
        return np.array([x1, y1, x1 + w, y1 + h])

    for _ in range(n_people):
        placed = None
        for _attempt in range(max_retries):
            if len(boxes) == 0 or crowd_iou == 0.0:
                h = math.exp(rng.uniform(math.log(lo_h), math.log(hi_h)))
                cand = free_box(h)
            else:
                nb = boxes[rng.integers(len(boxes))]
                h = float(np.clip((nb[3] - nb[1]) * math.exp(rng.normal(0.0, 0.12)), lo_h, hi_h))
                w = h / sample_aspect()
                dy = rng.normal(0.0, 0.04 * h)
                found = _offset_for_iou(nb, w, h, dy, crowd_iou)
                if found is None:
                    continue
                dx, box_at = found
                cand = box_at(dx if rng.random() < 0.5 else -dx)
            if cand is None:
                continue
            if cand[0] < 0 or cand[1] < 0 or cand[2] > image_w or cand[3] > image_h:
                continue
            if len(boxes):
                ious = pairwise_iou(cand, boxes)[0]
                limit = 0.0 if crowd_iou == 0.0 else crowd_iou + tolerance
                if ious.max() > limit:
                    continue
                trial = np.vstack([boxes, cand])
                if occlusion_fractions(trial, depth_from_feet(trial)).max() > max_occlusion:
                    continue
            placed = cand
            break
        if placed is None:
            raise ValueError(
                f"infeasible scene density: could not place person {len(boxes) + 1} of {n_people} "
                f"after {max_retries} attempts"
            )
        boxes = np.vstack([boxes, placed])
    return scene_from_boxes(boxes, image_w, image_h)


def mean_max_neighbor_iou(boxes):
    """Mean over boxes of the IoU with their most-overlapping neighbour."""
    boxes = as_boxes(boxes)
    if len(boxes) < 2:
        return 0.0
    ious = pairwise_iou(boxes, boxes)
    np.fill_diagonal(ious, -np.inf)
    return float(ious.max(axis=1).mean())


# -- mock predictor -----------------------------------------------------------

def covering_gt(scene, anchors):
    """Nearest-by-depth GT whose full box contains each anchor center, or -1."""
    j = len(anchors)
    if len(scene) == 0:
        return np.full(j, -1, dtype=np.int64)
    inside = points_in_boxes(anchors.centers, scene.gts.boxes)
    rank = np.where(inside, scene.depth[:, None].astype(np.float64), np.inf)
    cover = np.argmin(rank, axis=0)
    return np.where(inside.any(axis=0), cover, -1)


def mock_predict(scene, anchors, cfg=MockPredictorConfig()):
    """Per-anchor score and box for one class.

    Score rises with the fraction of the anchor box covered by the visible
    region of the GT in front at the anchor center, damped by a Gaussian
    falloff from the centre of that visible region. The regressed box blends
    from the anchor box toward that GT's full box as maturity grows. Gaussian
    noise (``noise_sigma``) perturbs scores and box corners, scaled by box size.
    """
    rng = np.random.default_rng(cfg.seed)
    m = cfg.maturity
    cover = covering_gt(scene, anchors)
    has = cover >= 0
    abox = anchors.boxes
    shaped = np.zeros(len(anchors))
    if has.any():
        vis = scene.visible[cover[has]]
        a_area = box_area(abox[has])
        safe = np.where(a_area > 0, a_area, 1.0)
        coverage = np.where(a_area > 0, intersection_area(abox[has], vis) / safe, 0.0)
        # distance to the visible centre, 1.0 at the visible box edge
        half = np.maximum(0.5 * (vis[:, 2:] - vis[:, :2]), 1e-6)
        off = (anchors.centers[has] - 0.5 * (vis[:, :2] + vis[:, 2:])) / half
        falloff = np.exp(-0.5 * cfg.score_sharpness * np.sum(off * off, axis=1))
        shaped[has] = np.clip(coverage, 0.0, 1.0) * falloff
    trained = cfg.floor_score + (cfg.peak_score - cfg.floor_score) * shaped
    scores = (1.0 - m) * cfg.base_score + m * trained
    target = abox.copy()
    if has.any():
        target[has] = scene.gts.boxes[cover[has]]
    boxes = (1.0 - m) * abox + m * target
    if cfg.noise_sigma > 0:
        scores = scores + cfg.noise_sigma * rng.normal(size=scores.shape)
        wh = np.tile(boxes[:, 2:] - boxes[:, :2], 2)
        boxes = boxes + cfg.noise_sigma * wh * rng.normal(size=boxes.shape)
        boxes = np.concatenate(
            [np.minimum(boxes[:, :2], boxes[:, 2:]), np.maximum(boxes[:, :2], boxes[:, 2:])], axis=1
        )
    return Predictions(np.clip(scores, 0.0, 1.0)[:, None], boxes)


def evolution_snapshots(scene, anchors, cfg=MockPredictorConfig(), schedule=(), lla_cfg=LlaConfig()):
    """One LLA assignment per maturity step of ``schedule``."""
    schedule = [float(s) for s in schedule]
    if any(b < a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("maturity schedule must be nondecreasing")
    out = []
    for m in schedule:
        preds = mock_predict(scene, anchors, replace(cfg, maturity=m))
        out.append(lla(preds, scene.gts, anchors, lla_cfg))
    return out
