"""Annotation parsing, harness configuration and report serialisation.

Formats are documented in ``docs/formats.md``.
"""
import csv
import io as _io
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .anchors import AnchorConfig
from .assign import IGNORE, NEGATIVE, GroundTruthSet, LlaConfig
from .geometry import Box, as_boxes
from .losses import FocalParams
from .scene import MockPredictorConfig, Scene, scene_from_boxes


class FormatError(ValueError):
    """Malformed annotation input; ``path`` locates the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class ConfigError(ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


# -- dataset records ----------------------------------------------------------

@dataclass(frozen=True)
class GtBox:
    cls: int
    box: Box
    visible: Box = None
    ignore: bool = False


@dataclass(frozen=True)
class DatasetRecord:
    image_id: str
    image_w: float = None
    image_h: float = None
    gtboxes: tuple = ()

    def ground_truth(self):
        if not self.gtboxes:
            return GroundTruthSet.empty()
        return GroundTruthSet(
            np.array([g.box for g in self.gtboxes], dtype=np.float64),
            np.array([g.cls for g in self.gtboxes]),
            np.array([g.ignore for g in self.gtboxes]),
        )

    def visible_boxes(self):
        """Visible boxes, falling back to the full box where absent."""
        return as_boxes([g.visible if g.visible is not None else g.box for g in self.gtboxes])

    def to_scene(self):
        """Scene whose occlusion comes from the annotated visible boxes."""
        if self.image_w is None or self.image_h is None:
            raise FormatError(self.image_id, "record has no image size")
        gts = self.ground_truth()
        scene = scene_from_boxes(gts.boxes, self.image_w, self.image_h, gts.classes, gts.ignore)
        vis = self.visible_boxes()
        full = (gts.boxes[:, 2] - gts.boxes[:, 0]) * (gts.boxes[:, 3] - gts.boxes[:, 1])
        va = (vis[:, 2] - vis[:, 0]) * (vis[:, 3] - vis[:, 1])
        occ = np.where(full > 0, 1.0 - va / np.where(full > 0, full, 1.0), 0.0)
        return replace(scene, visible=vis, occlusion=np.clip(occ, 0.0, 1.0), visible_gap=np.zeros(len(gts)))


def _xywh_to_box(v, path):
    if not isinstance(v, (list, tuple)) or len(v) != 4:
        raise FormatError(path, "expected [x, y, w, h]")
    try:
        x, y, w, h = (float(t) for t in v)
    except (TypeError, ValueError):
        raise FormatError(path, "box coordinates must be numbers") from None
    if w < 0 or h < 0 or not all(math.isfinite(t) for t in (x, y, w, h)):
        raise FormatError(path, "box width/height must be finite and non-negative")
    return Box(x, y, x + w, y + h)


def _box_to_xywh(b):
    return [b.x1, b.y1, b.x2 - b.x1, b.y2 - b.y1]


ODGT_CLASSES = {"person": 0}


def _looks_like_path(text):
    """A one-line string that is not JSON is taken as a file name."""
    s = text.strip()
    return bool(s) and "\n" not in s and s[0] not in "{["


def parse_odgt(stream):
    """Parse CrowdHuman-style JSON lines.

    Full-body ``fbox`` becomes the box; ``vbox`` the visible box; ``hbox`` is
    dropped. Tags other than ``person`` (e.g. ``mask``) and boxes with
    ``extra.ignore == 1`` are kept as ignore-flagged.
    """
    if isinstance(stream, Path) or (isinstance(stream, str) and _looks_like_path(stream)):
        with open(stream, encoding="utf-8") as fh:
            return parse_odgt(fh)
    if isinstance(stream, str):
        stream = _io.StringIO(stream)
    records = []
    seen = set()
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {lineno}", f"malformed JSON ({exc.msg})") from None
        if not isinstance(obj, dict) or "ID" not in obj:
            raise FormatError(f"line {lineno}", "missing 'ID'")
        image_id = str(obj["ID"])
        if image_id in seen:
            raise FormatError(f"line {lineno}", f"duplicate ID {image_id!r}")
        seen.add(image_id)
        boxes = []
        for k, g in enumerate(obj.get("gtboxes", [])):
            path = f"line {lineno}: gtboxes[{k}]"
            if "fbox" not in g:
                raise FormatError(path, "missing 'fbox'")
            tag = g.get("tag", "person")
            extra = g.get("extra") or {}
            ignore = bool(extra.get("ignore", 0)) or tag not in ODGT_CLASSES
            vis = _xywh_to_box(g["vbox"], path + ".vbox") if "vbox" in g else None
            boxes.append(GtBox(ODGT_CLASSES.get(tag, 0), _xywh_to_box(g["fbox"], path + ".fbox"), vis, ignore))
        w, h = obj.get("width"), obj.get("height")
        records.append(DatasetRecord(image_id, None if w is None else float(w), None if h is None else float(h), tuple(boxes)))
    return records


def serialize_odgt(records):
    lines = []
    for r in records:
        obj = {"ID": r.image_id, "gtboxes": []}
        if r.image_w is not None:
            obj["width"] = r.image_w
        if r.image_h is not None:
            obj["height"] = r.image_h
        for g in r.gtboxes:
            tag = next((t for t, c in ODGT_CLASSES.items() if c == g.cls), "person")
            entry = {"tag": tag, "fbox": _box_to_xywh(g.box), "extra": {"ignore": int(g.ignore)}}
            if g.visible is not None:
                entry["vbox"] = _box_to_xywh(g.visible)
            obj["gtboxes"].append(entry)
        lines.append(json.dumps(obj, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def _require(obj, key, path):
    if not isinstance(obj, dict) or key not in obj:
        raise FormatError(path, f"missing required key {key!r}")
    return obj[key]


def parse_coco(data):
    """Parse COCO-style detection JSON (dict, JSON text, or file path).

    ``iscrowd`` maps to ignore. Category ids are renumbered densely in
    ascending id order. An optional ``vis_bbox`` supplies the visible box.
    """
    if isinstance(data, Path) or (isinstance(data, str) and _looks_like_path(data)):
        with open(data, encoding="utf-8") as fh:
            data = json.load(fh)
    elif isinstance(data, str):
        data = json.loads(data)
    images = _require(data, "images", "$")
    anns = _require(data, "annotations", "$")
    cats = data.get("categories") or []
    cat_ids = sorted({_require(c, "id", f"categories[{k}]") for k, c in enumerate(cats)})
    cat_index = {cid: k for k, cid in enumerate(cat_ids)}
    per_image = {}
    order = []
    for k, im in enumerate(images):
        iid = _require(im, "id", f"images[{k}]")
        if iid in per_image:
            raise FormatError(f"images[{k}].id", f"duplicate image id {iid!r}")
        per_image[iid] = (im.get("width"), im.get("height"), [])
        order.append(iid)
    for k, a in enumerate(anns):
        path = f"annotations[{k}]"
        iid = _require(a, "image_id", path)
        if iid not in per_image:
            raise FormatError(path + ".image_id", f"unknown image id {iid!r}")
        box = _xywh_to_box(_require(a, "bbox", path), path + ".bbox")
        cid = a.get("category_id", cat_ids[0] if cat_ids else 1)
        if cat_index and cid not in cat_index:
            raise FormatError(path + ".category_id", f"unknown category {cid!r}")
        vis = _xywh_to_box(a["vis_bbox"], path + ".vis_bbox") if "vis_bbox" in a else None
        per_image[iid][2].append(GtBox(cat_index.get(cid, 0), box, vis, bool(a.get("iscrowd", 0))))
    return [
        DatasetRecord(
            str(iid),
            None if per_image[iid][0] is None else float(per_image[iid][0]),
            None if per_image[iid][1] is None else float(per_image[iid][1]),
            tuple(per_image[iid][2]),
        )
        for iid in order
    ]


def parse_detections(data):
    """COCO results format: list of {image_id, bbox [x,y,w,h], score}. Keyed by str(image_id)."""
    if isinstance(data, Path) or (isinstance(data, str) and _looks_like_path(data)):
        with open(data, encoding="utf-8") as fh:
            data = json.load(fh)
    elif isinstance(data, str):
        data = json.loads(data)
    if not isinstance(data, list):
        raise FormatError("$", "detections must be a JSON list")
    out = {}
    for k, d in enumerate(data):
        path = f"[{k}]"
        box = _xywh_to_box(_require(d, "bbox", path), path + ".bbox")
        score = float(_require(d, "score", path))
        if not 0.0 <= score <= 1.0:
            raise FormatError(path + ".score", "score must lie in [0, 1]")
        boxes, scores = out.setdefault(str(_require(d, "image_id", path)), ([], []))
        boxes.append(box)
        scores.append(score)
    return {k: (as_boxes(b), np.asarray(s, dtype=np.float64)) for k, (b, s) in out.items()}


def load_annotations(path, fmt=None):
    path = Path(path)
    fmt = fmt or ("odgt" if path.suffix == ".odgt" else "coco")
    if fmt == "odgt":
        return parse_odgt(path)
    if fmt == "coco":
        return parse_coco(path)
    raise ValueError(f"unknown annotation format {fmt!r}")


# -- scene / assignment serialisation ----------------------------------------

def scene_to_dict(scene):
    return {
        "image_w": scene.image_w,
        "image_h": scene.image_h,
        "boxes": scene.gts.boxes.tolist(),
        "classes": scene.gts.classes.tolist(),
        "ignore": scene.gts.ignore.tolist(),
        "visible": scene.visible.tolist(),
        "occlusion": scene.occlusion.tolist(),
        "depth": scene.depth.tolist(),
        "visible_gap": scene.visible_gap.tolist(),
    }


def scene_from_dict(d):
    try:
        n = len(d["boxes"])
        return Scene(
            image_w=float(d["image_w"]),
            image_h=float(d["image_h"]),
            gts=GroundTruthSet(as_boxes(d["boxes"]), d.get("classes"), d.get("ignore")),
            visible=as_boxes(d["visible"]),
            occlusion=np.asarray(d["occlusion"], dtype=np.float64).reshape(n),
            depth=np.asarray(d["depth"], dtype=np.int64).reshape(n),
            visible_gap=np.asarray(d.get("visible_gap", [0.0] * n), dtype=np.float64).reshape(n),
        )
    except KeyError as exc:
        raise FormatError("$", f"missing required key {exc.args[0]!r}") from None


def load_scene(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "boxes" in data:
        return scene_from_dict(data)
    raise FormatError(str(path), "not a scene file")


def label_name(label):
    if label == NEGATIVE:
        return "negative"
    if label == IGNORE:
        return "ignore"
    return "positive"


# -- harness configuration ----------------------------------------------------

ASSIGNERS = ("lla", "lla_free", "retinanet", "fcos", "atss")


@dataclass(frozen=True)
class SceneConfig:
    n_people: int = 12
    crowd_iou: float = 0.5
    image_w: int = 640
    image_h: int = 640
    height_range: tuple = (60.0, 320.0)
    max_occlusion: float = 0.9

    def __post_init__(self):
        if self.n_people < 0:
            raise ValueError("n_people must be >= 0")
        if not 0.0 <= self.crowd_iou < 1.0:
            raise ValueError("crowd_iou must lie in [0, 1)")
        if self.image_w <= 0 or self.image_h <= 0:
            raise ValueError("invalid image size")
        lo, hi = self.height_range
        if not 0 < lo <= hi:
            raise ValueError("height_range must be positive and ordered")
        if not 0.0 < self.max_occlusion <= 1.0:
            raise ValueError("max_occlusion must lie in (0, 1]")


@dataclass(frozen=True)
class ProxyConfig:
    """Stand-in detector used for proxy MR: negatives are damped, then NMS."""

    maturity: float = 0.8
    noise_sigma: float = 0.15
    negative_scale: float = 0.3
    ignore_scale: float = 0.5
    score_floor: float = 0.05
    max_detections: int = 300

    def __post_init__(self):
        if not 0.0 <= self.maturity <= 1.0:
            raise ValueError("maturity must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        for name in ("negative_scale", "ignore_scale", "score_floor"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.max_detections < 1:
            raise ValueError("max_detections must be >= 1")


@dataclass(frozen=True)
class MetricConfig:
    nms_thr: float = 0.5
    match_iou: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.nms_thr < 1.0:
            raise ValueError("nms_thr must lie in (0, 1)")
        if not 0.0 < self.match_iou <= 1.0:
            raise ValueError("match_iou must lie in (0, 1]")


def _default_anchors():
    return {
        "lla": AnchorConfig(),
        "lla_free": AnchorConfig.points(),
        "retinanet": AnchorConfig.retinanet9(),
        "fcos": AnchorConfig.points(),
        "atss": AnchorConfig(),
    }


@dataclass(frozen=True)
class HarnessConfig:
    assigner: str
    lla: LlaConfig = field(default_factory=LlaConfig)
    lla_free: LlaConfig = field(default_factory=LlaConfig.anchor_free)
    retinanet: dict = field(default_factory=lambda: {"pos_thr": 0.5, "neg_thr": 0.4})
    fcos: dict = field(default_factory=lambda: {"radius": 1.5})
    atss: dict = field(default_factory=lambda: {"top_candidates": 9})
    anchors: dict = field(default_factory=_default_anchors)
    scene: SceneConfig = field(default_factory=SceneConfig)
    predictor: MockPredictorConfig = field(default_factory=MockPredictorConfig)
    proxy: ProxyConfig = field(default_factory=ProxyConfig)
    metrics: MetricConfig = field(default_factory=MetricConfig)
    seed: int = 0
    num_scenes: int = 20

    def with_K(self, k):
        return replace(self, lla=replace(self.lla, K=k), lla_free=replace(self.lla_free, K=k))


def _section(raw, path, allowed):
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "unknown field")
    return dict(raw)


def _typed(value, kind, path):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "expected a boolean")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, "expected an integer")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, "expected a number")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(path, "expected a string")
        return value
    if kind == "floats":
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(path, "expected a list of numbers")
        return tuple(float(v) for v in value)
    raise AssertionError(kind)


def _build(cls, raw, path, schema, rename=None):
    """Validate ``raw`` against ``schema`` (field -> type) and construct ``cls``."""
    rename = rename or {}
    data = _section(raw, path, schema)
    kwargs = {rename.get(k, k): _typed(v, schema[k], f"{path}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


_ANCHOR_SPEC = {"strides": "floats", "base_scale": float, "scales": "floats", "ratios": "floats", "mode": str}
_LLA_SPEC = {
    "K": int,
    "lambda": float,
    "inbox_penalty": float,
    "cls_loss": str,
    "reg_loss": str,
    "focal_alpha": float,
    "focal_gamma": float,
    "anchors": dict,
}


def _build_anchor(raw, path, default):
    data = _section(raw, path, _ANCHOR_SPEC)
    if not data:
        return default
    kwargs = {f.name: getattr(default, f.name) for f in fields(AnchorConfig)}
    for k, v in data.items():
        kwargs[k] = _typed(v, _ANCHOR_SPEC[k], f"{path}.{k}")
    try:
        return AnchorConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


def _build_lla(raw, path, default):
    data = _section(raw, path, _LLA_SPEC)
    data.pop("anchors", None)
    kw = {}
    for k, v in data.items():
        kw[k] = _typed(v, _LLA_SPEC[k], f"{path}.{k}")
    try:
        focal = FocalParams(kw.pop("focal_alpha", default.focal.alpha), kw.pop("focal_gamma", default.focal.gamma))
        if "lambda" in kw:
            kw["lam"] = kw.pop("lambda")
        cfg = replace(default, focal=focal, **kw)
        cfg.check_dominance()
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None
    return cfg


def config_from_dict(raw):
    """Validate a parsed harness config; errors carry a dotted field path."""
    top = _section(
        raw,
        "$",
        ("assigner", "assigners", "scene", "predictor", "proxy", "metrics", "seed", "num_scenes"),
    )
    if "assigner" not in top:
        raise ConfigError("$.assigner", "missing required field")
    name = _typed(top["assigner"], str, "$.assigner")
    if name not in ASSIGNERS:
        raise ConfigError("$.assigner", f"unknown assigner {name!r}; expected one of {ASSIGNERS}")
    base = HarnessConfig(assigner=name)
    sections = _section(top.get("assigners"), "$.assigners", ASSIGNERS)
    anchors = dict(base.anchors)
    kw = {}
    for key in ASSIGNERS:
        sub = sections.get(key)
        path = f"$.assigners.{key}"
        if sub is None:
            continue
        if not isinstance(sub, dict):
            raise ConfigError(path, "expected an object")
        anchors[key] = _build_anchor(sub.get("anchors"), path + ".anchors", anchors[key])
        if key in ("lla", "lla_free"):
            kw[key] = _build_lla(sub, path, getattr(base, key))
        else:
            schema = {
                "retinanet": {"pos_thr": float, "neg_thr": float, "anchors": dict},
                "fcos": {"radius": float, "anchors": dict},
                "atss": {"top_candidates": int, "anchors": dict},
            }[key]
            data = _section(sub, path, schema)
            data.pop("anchors", None)
            params = dict(getattr(base, key))
            params.update({k: _typed(v, schema[k], f"{path}.{k}") for k, v in data.items()})
            if key == "retinanet" and not 0.0 <= params["neg_thr"] <= params["pos_thr"] <= 1.0:
                raise ConfigError(path, "need 0 <= neg_thr <= pos_thr <= 1")
            if key == "fcos" and params["radius"] <= 0:
                raise ConfigError(path + ".radius", "must be positive")
            if key == "atss" and params["top_candidates"] < 1:
                raise ConfigError(path + ".top_candidates", "must be >= 1")
            kw[key] = params
    kw["anchors"] = anchors
    kw["scene"] = _build(
        SceneConfig,
        top.get("scene"),
        "$.scene",
        {"n_people": int, "crowd_iou": float, "image_w": int, "image_h": int, "height_range": "floats", "max_occlusion": float},
    )
    kw["predictor"] = _build(
        MockPredictorConfig,
        top.get("predictor"),
        "$.predictor",
        {
            "score_sharpness": float,
            "noise_sigma": float,
            "maturity": float,
            "seed": int,
            "base_score": float,
            "floor_score": float,
            "peak_score": float,
        },
    )
    kw["proxy"] = _build(
        ProxyConfig,
        top.get("proxy"),
        "$.proxy",
        {
            "maturity": float,
            "noise_sigma": float,
            "negative_scale": float,
            "ignore_scale": float,
            "score_floor": float,
            "max_detections": int,
        },
    )
    kw["metrics"] = _build(MetricConfig, top.get("metrics"), "$.metrics", {"nms_thr": float, "match_iou": float})
    if "seed" in top:
        kw["seed"] = _typed(top["seed"], int, "$.seed")
    if "num_scenes" in top:
        kw["num_scenes"] = _typed(top["num_scenes"], int, "$.num_scenes")
        if kw["num_scenes"] < 1:
            raise ConfigError("$.num_scenes", "must be >= 1")
    return replace(base, **kw)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return config_from_dict(raw)


# -- reports ------------------------------------------------------------------

def fmt_float(x):
    return f"{x:.6g}"


def _canonical(obj):
    """JSON-ready copy with floats cut to 6 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _canonical(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(fmt_float(x))
    return obj


def json_bytes(results):
    return (json.dumps(_canonical(results), sort_keys=True, indent=2) + "\n").encode("utf-8")


def csv_bytes(rows, columns=None):
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if columns:
        writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(row.get(c)) for c in columns])
    return buf.getvalue().encode("utf-8")


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt_float(float(v))
    return str(v)


_PALETTE = ("#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6", "#9a6324")


def _svg(width, height, body):
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{fmt_float(width)}" height="{fmt_float(height)}" '
        f'viewBox="0 0 {fmt_float(width)} {fmt_float(height)}">\n'
    )
    return (head + "".join(body) + "</svg>\n").encode("utf-8")


def allocation_svg(series, num_stages=5):
    """Scatter of GT area (log x) against modal stage, one mark per GT.

    ``series`` maps a label to a list of (area, stage-or-None). Unassigned GTs
    sit on an extra row below the last stage.
    """
    w, h, pad = 640.0, 360.0, 40.0
    body = []
    pts = [(a, s) for vals in series.values() for a, s in vals if a > 0]
    if pts:
        lo = math.log10(min(a for a, _ in pts))
        hi = math.log10(max(a for a, _ in pts))
        span = hi - lo if hi > lo else 1.0
    rows = num_stages + 1
    for r in range(rows):
        y = pad + r * (h - 2 * pad) / (rows - 1)
        text = f"stage {r}" if r < num_stages else "none"
        body.append(f'<text x="2" y="{fmt_float(y + 4)}" font-size="10">{text}</text>\n')
    for k, (label, vals) in enumerate(series.items()):
        color = _PALETTE[k % len(_PALETTE)]
        body.append(f'<g class="series" data-label="{label}" fill="{color}">\n')
        for area, stage in vals:
            x = pad + ((math.log10(area) - lo) / span if area > 0 and pts else 0.0) * (w - 2 * pad)
            r = num_stages if stage is None else stage
            y = pad + r * (h - 2 * pad) / (rows - 1) + (k - 0.5 * (len(series) - 1)) * 4
            body.append(f'<circle class="gt" cx="{fmt_float(x)}" cy="{fmt_float(y)}" r="2"/>\n')
        body.append("</g>\n")
    return _svg(w, h, body)


def snapshot_svg(scene, anchors, assignment, title=""):
    """GT boxes, visible boxes and positive anchor centers coloured by GT."""
    body = []
    if title:
        body.append(f'<text x="4" y="14" font-size="12">{title}</text>\n')
    for i, b in enumerate(scene.gts.boxes):
        color = _PALETTE[i % len(_PALETTE)]
        x1, y1, x2, y2 = (fmt_float(float(v)) for v in b)
        body.append(
            f'<rect class="gt" x="{x1}" y="{y1}" width="{fmt_float(float(b[2] - b[0]))}" '
            f'height="{fmt_float(float(b[3] - b[1]))}" fill="none" stroke="{color}"/>\n'
        )
        v = scene.visible[i]
        body.append(
            f'<rect class="visible" x="{fmt_float(float(v[0]))}" y="{fmt_float(float(v[1]))}" '
            f'width="{fmt_float(float(v[2] - v[0]))}" height="{fmt_float(float(v[3] - v[1]))}" '
            f'fill="{color}" fill-opacity="0.15" stroke="none"/>\n'
        )
    for j in assignment.positives():
        color = _PALETTE[int(assignment.labels[j]) % len(_PALETTE)]
        cx, cy = anchors.centers[j]
        body.append(
            f'<circle class="positive" cx="{fmt_float(float(cx))}" cy="{fmt_float(float(cy))}" '
            f'r="{fmt_float(1.0 + anchors.levels[j])}" fill="{color}"/>\n'
        )
    return _svg(scene.image_w, scene.image_h, body)


def write_report(results, path, fmt="json"):
    """Write ``results`` deterministically.

    json: any nested dict/list. csv: ``{"rows": [...], "columns": [...]}``
    or a list of row dicts. svg: raw SVG bytes/str, or ``{}`` for an empty
    drawing.
    """
    if fmt == "json":
        data = json_bytes(results)
    elif fmt == "csv":
        if isinstance(results, dict):
            data = csv_bytes(results.get("rows", []), results.get("columns"))
        else:
            data = csv_bytes(results)
    elif fmt == "svg":
        if isinstance(results, (bytes, str)):
            data = results.encode("utf-8") if isinstance(results, str) else results
        elif not results:
            data = _svg(1, 1, [])
        else:
            raise ValueError("svg reports take pre-rendered SVG content")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror or exc}") from exc
    return path
