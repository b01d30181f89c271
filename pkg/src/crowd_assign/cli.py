"""``crowd-assign`` command line.

Every command is a deterministic function of (config, seed): reports are
written with sorted keys and fixed float formatting, and batch work is
collected in seed order whatever ``CROWD_ASSIGN_THREADS`` says.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""
import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import _accel, harness
from .io import (
    ASSIGNERS,
    ConfigError,
    FormatError,
    HarnessConfig,
    allocation_svg,
    load_annotations,
    load_config,
    load_scene,
    parse_detections,
    snapshot_svg,
    write_report,
)
from .metrics import evaluate, subset_ignore

DEFAULT_FORMAT = {"assign": "json", "sweep-k": "csv", "compare": "json", "evolve": "svg", "eval": "json"}
SUBSETS = {"all": (0.0, 0.0, 1.0), "reasonable": (50.0, 0.65, 1.0), "heavy": (50.0, 0.2, 0.65)}


class UsageError(Exception):
    pass


# -- argument helpers ---------------------------------------------------------

def _int_list(text, flag):
    """``"1-16"``, ``"1:16"`` or ``"5,7,10"``; ranges are inclusive."""
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        sep = "-" if "-" in part[1:] else (":" if ":" in part else None)
        try:
            if sep:
                lo, hi = (int(v) for v in part.split(sep, 1))
                if hi < lo:
                    raise UsageError(f"{flag}: empty range {part!r}")
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise UsageError(f"{flag}: cannot parse {part!r}") from None
    if not out:
        raise UsageError(f"{flag}: range is empty")
    return out


def _float_list(text, flag):
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from None


def _existing(path, flag):
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{flag}: no such file {path}")
    return p


def _config(args):
    path = _existing(args.config, "--config")
    cfg = load_config(path) if path else HarnessConfig(assigner="lla")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "num_scenes", None) is not None:
        if args.num_scenes < 1:
            raise UsageError("--num-scenes must be >= 1")
        cfg = replace(cfg, num_scenes=args.num_scenes)
    if getattr(args, "assigner", None):
        if args.assigner not in ASSIGNERS:
            raise UsageError(f"--assigner: unknown assigner {args.assigner!r}; expected one of {ASSIGNERS}")
        cfg = replace(cfg, assigner=args.assigner)
    return cfg


def _scene(args, cfg):
    """Scene from --scene, --dataset (first or --image-id record), or the seeded generator."""
    if args.scene and args.dataset:
        raise UsageError("--scene and --dataset are mutually exclusive")
    if args.scene:
        return load_scene(_existing(args.scene, "--scene"))
    if args.dataset:
        records = load_annotations(_existing(args.dataset, "--dataset"), args.ann_format)
        if not records:
            raise FormatError(args.dataset, "no images")
        if args.image_id is None:
            return records[0].to_scene()
        for r in records:
            if r.image_id == args.image_id:
                return r.to_scene()
        raise UsageError(f"--image-id: {args.image_id!r} not found in {args.dataset}")
    return harness.make_scene(cfg, cfg.seed)


# -- commands -----------------------------------------------------------------

def cmd_assign(args, cfg, fmt, out):
    scene = _scene(args, cfg)
    assignment, anchors = harness.run_assigner(cfg, cfg.assigner, scene)
    name = f"assign_{cfg.assigner}"
    if fmt == "svg":
        title = f"{cfg.assigner} seed {cfg.seed}"
        return [write_report(snapshot_svg(scene, anchors, assignment, title), out / f"{name}.svg", "svg")]
    report = harness.assignment_report(scene, anchors, assignment, cfg.assigner)
    if fmt == "json":
        report["seed"] = cfg.seed
        return [write_report(report, out / f"{name}.json", "json")]
    rows = [
        {
            "gt": i,
            "positives": report["positives_per_gt"][i],
            "stage": a["stage"],
            "area": a["area"],
            "occlusion": report["occlusion"][i],
            "visible_fraction": report["visible_fraction"][i],
        }
        for i, a in enumerate(report["allocation"])
    ]
    cols = ["gt", "positives", "stage", "area", "occlusion", "visible_fraction"]
    return [write_report({"rows": rows, "columns": cols}, out / f"{name}.csv", "csv")]


def cmd_sweep_k(args, cfg, fmt, out):
    ks = _int_list(args.k_range, "--k-range")
    for k in ks:
        try:
            cfg.with_K(k)
        except ValueError as exc:
            raise UsageError(f"--k-range: {exc}") from None
    rows = harness.sweep_k(cfg, ks)
    if fmt == "csv":
        return [write_report(rows, out / "sweep_k.csv", "csv")]
    if fmt == "svg":
        raise UsageError("sweep-k writes json or csv")
    report = {
        "metric_note": "proxy_* metrics come from the mock predictor pipeline, not a trained detector",
        "seeds": harness.seeds_of(cfg),
        "rows": rows,
        "proxy_mr_relative_spread": harness.k_sensitivity(rows),
    }
    return [write_report(report, out / "sweep_k.json", "json")]


def cmd_compare(args, cfg, fmt, out):
    names = [n.strip() for n in args.assigners.split(",") if n.strip()]
    unknown = [n for n in names if n not in ASSIGNERS]
    if unknown:
        raise UsageError(f"--assigners: unknown assigner {unknown[0]!r}; expected one of {ASSIGNERS}")
    if len(names) < 2:
        raise UsageError("--assigners: need at least two assigners")
    seeds = harness.seeds_of(cfg)
    report = harness.compare(cfg, names, seeds)
    if fmt == "json":
        return [write_report(report, out / "compare.json", "json")]
    if fmt == "csv":
        cols = ["seed", "heavy_gts"] + [f"{n}_aar" for n in names]
        return [write_report({"rows": report["per_seed"], "columns": cols}, out / "compare.csv", "csv")]
    batch = harness.scene_batch(cfg, dict.fromkeys(names), seeds)
    series = {n: [a for s in batch for a in s["per"][n]["allocation"]] for n in dict.fromkeys(names)}
    return [write_report(allocation_svg(series), out / "compare.svg", "svg")]


def cmd_evolve(args, cfg, fmt, out):
    schedule = _float_list(args.schedule, "--schedule")
    if any(not 0.0 <= m <= 1.0 for m in schedule):
        raise UsageError("--schedule: maturities must lie in [0, 1]")
    if any(b < a for a, b in zip(schedule, schedule[1:])):
        raise UsageError("--schedule: maturities must be nondecreasing")
    scene = _scene(args, cfg)
    steps, name = harness.evolve(cfg, scene, schedule)
    if fmt == "svg":
        return [
            write_report(snapshot_svg(scene, anchors, a, f"{name} maturity {m:.3g}"), out / f"evolve_{k:02d}.svg", "svg")
            for k, (m, a, anchors) in enumerate(steps)
        ]
    rows = [
        {
            "step": k,
            "maturity": m,
            "positives": int(np.sum(a.labels >= 0)),
            "visible_fraction": harness.overall_visible_fraction(a, anchors, scene),
        }
        for k, (m, a, anchors) in enumerate(steps)
    ]
    if fmt == "csv":
        return [write_report(rows, out / "evolve.csv", "csv")]
    return [write_report({"assigner": name, "seed": cfg.seed, "steps": rows}, out / "evolve.json", "json")]


def cmd_eval(args, cfg, fmt, out):
    if not args.detections or not args.annotations:
        raise UsageError("eval needs --detections and --annotations")
    records = load_annotations(_existing(args.annotations, "--annotations"), args.ann_format)
    dets = parse_detections(_existing(args.detections, "--detections"))
    known = {r.image_id for r in records}
    stray = sorted(set(dets) - known)
    if stray:
        raise FormatError(args.detections, f"detections for unknown image id {stray[0]!r}")
    min_h, lo, hi = SUBSETS[args.subset]
    empty = (np.zeros((0, 4)), np.zeros(0))
    per_image = []
    for r in records:
        gts = r.ground_truth()
        if args.subset != "all":
            gts = subset_ignore(gts, r.visible_boxes(), min_h, (lo, hi))
        boxes, scores = dets.get(r.image_id, empty)
        per_image.append((boxes, scores, gts))
    result = evaluate(per_image, cfg.metrics.match_iou).as_dict()
    if fmt == "csv":
        rows = [{"fppi": f, "miss_rate": m} for f, m in result["fppi_curve"]]
        return [write_report(rows, out / "eval_curve.csv", "csv")]
    if fmt == "svg":
        raise UsageError("eval writes json or csv")
    result.update(subset=args.subset, images=len(records))
    return [write_report(result, out / "eval.json", "json")]


COMMANDS = {
    "assign": cmd_assign,
    "sweep-k": cmd_sweep_k,
    "compare": cmd_compare,
    "evolve": cmd_evolve,
    "eval": cmd_eval,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="harness config JSON (defaults: LLA, built-in benchmark)")
    common.add_argument("--seed", type=int, metavar="N", help="override the config seed")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: current)")
    common.add_argument("--format", choices=("json", "csv", "svg"), help="report format")

    scene_src = argparse.ArgumentParser(add_help=False)
    scene_src.add_argument("--scene", metavar="PATH", help="scene JSON instead of the seeded generator")
    scene_src.add_argument("--dataset", metavar="PATH", help="odgt or COCO annotations; one image becomes the scene")
    scene_src.add_argument("--image-id", help="image to take from --dataset (default: first)")
    scene_src.add_argument("--ann-format", choices=("odgt", "coco"), help="annotation format (default: by suffix)")

    p = argparse.ArgumentParser(prog="crowd-assign", description="Loss-aware label assignment experiments.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    a = sub.add_parser("assign", parents=[common, scene_src], help="assign one scene and report per-GT results")
    a.add_argument("--assigner", help=f"one of {', '.join(ASSIGNERS)} (overrides the config)")

    s = sub.add_parser("sweep-k", parents=[common], help="proxy metrics across top-K values")
    s.add_argument("--k-range", default="1-16", help="inclusive range or list, e.g. 1-16 or 5,10 (default 1-16)")
    s.add_argument("--assigner", help="lla or lla_free")
    s.add_argument("--num-scenes", type=int, help="scenes per K (overrides the config)")

    c = sub.add_parser("compare", parents=[common], help="AAR, visible fraction and allocation side by side")
    c.add_argument("--assigners", default="lla,retinanet,fcos", help="comma-separated, first is the reference")
    c.add_argument("--num-scenes", type=int, help="scene batch size (overrides the config)")

    e = sub.add_parser("evolve", parents=[common, scene_src], help="positive anchors across predictor maturity")
    e.add_argument("--schedule", default="0,0.25,0.5,0.75,1", help="comma-separated maturities in [0, 1]")
    e.add_argument("--assigner", help="lla or lla_free")

    v = sub.add_parser("eval", parents=[common], help="MR/AP/recall of a detection file against annotations")
    v.add_argument("--detections", metavar="PATH", help="COCO results JSON")
    v.add_argument("--annotations", metavar="PATH", help="odgt or COCO annotations")
    v.add_argument("--ann-format", choices=("odgt", "coco"))
    v.add_argument("--subset", choices=tuple(SUBSETS), default="all", help="height/visibility subset")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return exc.code
    fmt = args.format or DEFAULT_FORMAT[args.command]
    try:
        try:
            _accel.max_threads()
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if args.command in ("sweep-k", "evolve") and args.assigner not in (None, "lla", "lla_free"):
            raise UsageError(f"--assigner: {args.command} runs lla or lla_free, not {args.assigner!r}")
        cfg = _config(args)
        written = COMMANDS[args.command](args, cfg, fmt, Path(args.out))
    except (UsageError, ConfigError, FormatError, json.JSONDecodeError) as exc:
        print(f"crowd-assign {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"crowd-assign {args.command}: failed: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
