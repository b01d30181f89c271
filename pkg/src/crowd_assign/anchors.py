"""Multi-level anchor grids over an image (FPN P3-P7 by default)."""
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Box

DEFAULT_STRIDES = (8, 16, 32, 64, 128)


@dataclass(frozen=True)
class AnchorConfig:
    """Anchor layout.

    ``mode="box"`` places ``len(scales) * len(ratios)`` boxes per location
    with side ``base_scale * stride * scale`` and aspect ``ratio = h / w``.
    ``mode="point"`` places one point per location; each point still carries
    a nominal square box of side ``base_scale * stride``.
    """

    strides: tuple = DEFAULT_STRIDES
    base_scale: float = 8.0
    scales: tuple = (1.0,)
    ratios: tuple = (1.0,)
    mode: str = "box"

    def __post_init__(self):
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if not self.strides or any(s <= 0 for s in self.strides):
            raise ValueError("anchor strides must be positive")
        if list(self.strides) != sorted(set(self.strides)):
            raise ValueError("anchor strides must be strictly increasing")
        if self.base_scale <= 0:
            raise ValueError("anchor base_scale must be positive")
        if not self.scales or not self.ratios:
            raise ValueError("anchor scales and ratios must be non-empty")
        if any(s <= 0 for s in self.scales) or any(r <= 0 for r in self.ratios):
            raise ValueError("anchor scales and ratios must be positive")
        if self.mode not in ("box", "point"):
            raise ValueError(f"anchor mode must be 'box' or 'point', got {self.mode!r}")

    @property
    def per_location(self):
        return 1 if self.mode == "point" else len(self.scales) * len(self.ratios)

    @classmethod
    def retinanet9(cls, strides=DEFAULT_STRIDES):
        """The classic 3 scales x 3 ratios layout at 4 x stride."""
        return cls(
            strides=strides,
            base_scale=4.0,
            scales=(1.0, 2 ** (1 / 3), 2 ** (2 / 3)),
            ratios=(0.5, 1.0, 2.0),
        )

    @classmethod
    def points(cls, strides=DEFAULT_STRIDES):
        return cls(strides=strides, mode="point")


@dataclass(frozen=True, eq=False)
class AnchorSet:
    """Flattened anchors, ordered level, row, column, then anchor index."""

    boxes: np.ndarray  # (J, 4); nominal boxes in point mode
    centers: np.ndarray  # (J, 2)
    levels: np.ndarray  # (J,) stage index, 0 = finest
    strides: np.ndarray  # (J,)
    mode: str = "box"

    def __len__(self):
        return self.boxes.shape[0]

    @property
    def J(self):
        return self.boxes.shape[0]

    @property
    def num_levels(self):
        return int(self.levels.max()) + 1 if len(self) else 0

    def level_slices(self):
        """Contiguous index range of each stage, keyed by stage."""
        out = {}
        for lvl in np.unique(self.levels):
            idx = np.flatnonzero(self.levels == lvl)
            out[int(lvl)] = slice(int(idx[0]), int(idx[-1]) + 1)
        return out

    def equals(self, other):
        return (
            self.mode == other.mode
            and np.array_equal(self.boxes, other.boxes)
            and np.array_equal(self.centers, other.centers)
            and np.array_equal(self.levels, other.levels)
            and np.array_equal(self.strides, other.strides)
        )


def _shapes(cfg):
    """(w, h) of each anchor shape at unit stride."""
    if cfg.mode == "point":
        return [(cfg.base_scale, cfg.base_scale)]
    out = []
    for scale in cfg.scales:
        side = cfg.base_scale * scale
        for ratio in cfg.ratios:
            r = math.sqrt(ratio)
            out.append((side / r, side * r))
    return out


def single_anchor_box(level, center, cfg=AnchorConfig()):
    """The single-anchor box at ``center`` on stage ``level``.

    Square with side ``base_scale * stride``. In point mode the anchor is the
    point itself, returned as a zero-area box.
    """
    if not 0 <= level < len(cfg.strides):
        raise ValueError(f"level {level} outside 0..{len(cfg.strides) - 1}")
    cx, cy = center
    if cfg.mode == "point":
        return Box(float(cx), float(cy), float(cx), float(cy))
    half = 0.5 * cfg.base_scale * cfg.strides[level]
    return Box(cx - half, cy - half, cx + half, cy + half)


def build_anchor_grid(image_w, image_h, cfg=AnchorConfig()):
    if not (image_w > 0 and image_h > 0):
        raise ValueError(f"invalid image size {image_w}x{image_h}")
    shapes = np.asarray(_shapes(cfg), dtype=np.float64)  # (A, 2)
    a = len(shapes)
    boxes, centers, levels, strides = [], [], [], []
    for lvl, s in enumerate(cfg.strides):
        rows = math.ceil(image_h / s)
        cols = math.ceil(image_w / s)
        ys = s * (np.arange(rows, dtype=np.float64) + 0.5)
        xs = s * (np.arange(cols, dtype=np.float64) + 0.5)
        cy, cx = np.meshgrid(ys, xs, indexing="ij")  # row-major
        ctr = np.stack([cx.ravel(), cy.ravel()], axis=1)
        ctr = np.repeat(ctr, a, axis=0)
        wh = np.tile(shapes * s, (rows * cols, 1))
        boxes.append(np.concatenate([ctr - 0.5 * wh, ctr + 0.5 * wh], axis=1))
        centers.append(ctr)
        levels.append(np.full(len(ctr), lvl, dtype=np.int64))
        strides.append(np.full(len(ctr), float(s)))
    return AnchorSet(
        boxes=np.ascontiguousarray(np.concatenate(boxes)),
        centers=np.ascontiguousarray(np.concatenate(centers)),
        levels=np.concatenate(levels),
        strides=np.concatenate(strides),
        mode=cfg.mode,
    )
