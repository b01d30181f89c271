"""Experiment drivers shared by the CLI and the acceptance tests.

Every driver is a pure function of (config, seeds). Multi-scene batches fan
out over a thread pool capped by ``CROWD_ASSIGN_THREADS``; results are
collected in seed order so output never depends on scheduling.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from functools import lru_cache

import numpy as np

from . import _accel
from .anchors import build_anchor_grid
from .assign import IGNORE, NEGATIVE, atss_assign, fcos_assign, lla, retinanet_assign
from .io import ASSIGNERS
from .metrics import aar, aar_counts, evaluate, fpn_allocation, nms, stage_histogram, visible_fraction
from .scene import MockPredictorConfig, evolution_snapshots, generate_scene, mock_predict

HEAVY_OCCLUSION = 0.5


def parallel_map(fn, items):
    items = list(items)
    workers = min(_accel.max_threads(), max(len(items), 1))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def seeds_of(cfg, count=None):
    return [cfg.seed + k for k in range(cfg.num_scenes if count is None else count)]


def make_scene(cfg, seed):
    return _scene_cached(cfg.scene, seed)


@lru_cache(maxsize=512)
def _scene_cached(s, seed):
    return generate_scene(
        s.n_people,
        s.crowd_iou,
        rng_seed=seed,
        image_w=s.image_w,
        image_h=s.image_h,
        height_range=s.height_range,
        max_occlusion=s.max_occlusion,
    )


def anchors_for(cfg, name, scene):
    if name not in ASSIGNERS:
        raise ValueError(f"unknown assigner {name!r}; expected one of {ASSIGNERS}")
    return build_anchor_grid(scene.image_w, scene.image_h, cfg.anchors[name])


def run_assigner(cfg, name, scene, anchors=None, predictor=None, preds=None):
    """Assignment of ``scene`` by assigner ``name``; returns (assignment, anchors)."""
    anchors = anchors_for(cfg, name, scene) if anchors is None else anchors
    gts = scene.gts
    if name in ("lla", "lla_free"):
        if preds is None:
            preds = mock_predict(scene, anchors, predictor or cfg.predictor)
        return lla(preds, gts, anchors, getattr(cfg, name)), anchors
    if name == "retinanet":
        return retinanet_assign(anchors, gts, **cfg.retinanet), anchors
    if name == "fcos":
        return fcos_assign(anchors, gts, **cfg.fcos), anchors
    if name == "atss":
        return atss_assign(anchors, gts, **cfg.atss), anchors
    raise ValueError(f"unknown assigner {name!r}")


def heavy_gts(scene, thr=HEAVY_OCCLUSION):
    return np.flatnonzero(scene.occlusion >= thr)


def per_gt_visible_fraction(assignment, anchors, scene, gts):
    return {int(g): visible_fraction(assignment, anchors, scene, [g]) for g in gts}


def assignment_report(scene, anchors, assignment, name):
    counts = aar_counts(assignment.candidates, assignment)
    alloc = fpn_allocation(assignment, anchors, scene.gts)
    vis = per_gt_visible_fraction(assignment, anchors, scene, range(len(scene)))
    return {
        "assigner": name,
        "num_gts": len(scene),
        "num_anchors": len(anchors),
        "labels": assignment.counts(),
        "positives_per_gt": assignment.positives_per_gt().tolist(),
        "aar_inputs": counts,
        "aar": aar(assignment.candidates, assignment) if counts["positive"] else None,
        "allocation": [{"gt": i, "area": a, "stage": s} for i, (a, s) in enumerate(alloc)],
        "stage_histogram": stage_histogram(alloc).tolist(),
        "occlusion": scene.occlusion.tolist(),
        "visible_fraction": [vis[i] for i in range(len(scene))],
    }


# -- comparisons --------------------------------------------------------------

def _scene_stats(cfg, names, seed):
    scene = make_scene(cfg, seed)
    heavy = heavy_gts(scene)
    out = {"seed": seed, "heavy_gts": len(heavy), "per": {}}
    for name in names:
        assignment, anchors = run_assigner(cfg, name, scene)
        c = aar_counts(assignment.candidates, assignment)
        alloc = fpn_allocation(assignment, anchors, scene.gts)
        out["per"][name] = {
            "aar": 100.0 * c["ambiguous"] / c["positive"] if c["positive"] else None,
            "ambiguous": c["ambiguous"],
            "positive": c["positive"],
            "heavy_visible": per_gt_visible_fraction(assignment, anchors, scene, heavy),
            "stage_histogram": stage_histogram(alloc),
            "allocation": alloc,
        }
    return out


def paired_heavy_fraction(stats, a, b):
    """Mean heavy-GT visible fraction of ``a`` and ``b`` over GTs both assign, or None."""
    va, vb = stats["per"][a]["heavy_visible"], stats["per"][b]["heavy_visible"]
    common = [g for g in va if va[g] is not None and vb.get(g) is not None]
    if not common:
        return None
    return float(np.mean([va[g] for g in common])), float(np.mean([vb[g] for g in common]))


def scene_batch(cfg, names, seeds):
    return parallel_map(lambda s: _scene_stats(cfg, names, s), seeds)


def compare(cfg, names, seeds=None):
    """Side-by-side AAR, heavy-occlusion visible fraction and stage allocation."""
    names = list(names)
    if len(names) < 2:
        raise ValueError("compare needs at least two assigners")
    for n in names:
        if n not in ASSIGNERS:
            raise ValueError(f"unknown assigner {n!r}; expected one of {ASSIGNERS}")
    seeds = seeds_of(cfg) if seeds is None else list(seeds)
    batch = scene_batch(cfg, dict.fromkeys(names), seeds)
    summary = {}
    for n in names:
        aars = [s["per"][n]["aar"] for s in batch if s["per"][n]["aar"] is not None]
        vis = [v for s in batch for v in s["per"][n]["heavy_visible"].values() if v is not None]
        hist = sum((s["per"][n]["stage_histogram"] for s in batch), np.zeros(6, dtype=np.int64))
        summary[n] = {
            "aar_mean": float(np.mean(aars)) if aars else None,
            "heavy_visible_fraction_mean": float(np.mean(vis)) if vis else None,
            "stage_histogram": hist.tolist(),
            "fine_stage_gts": int(hist[0] + hist[1]),
        }
    rows = []
    for s in batch:
        row = {"seed": s["seed"], "heavy_gts": s["heavy_gts"]}
        for n in names:
            row[f"{n}_aar"] = s["per"][n]["aar"]
        rows.append(row)
    checks = {}
    ref = names[0]
    for other in names[1:]:
        if other == ref:
            continue
        ra, ob = summary[ref]["aar_mean"], summary[other]["aar_mean"]
        checks[f"aar_{ref}_le_{other}"] = None if ra is None or ob is None else bool(ra <= ob)
        pairs = [p for s in batch if (p := paired_heavy_fraction(s, ref, other)) is not None]
        if pairs:
            checks[f"visible_{ref}_gt_{other}_seed_share"] = float(np.mean([x > y for x, y in pairs]))
    return {"assigners": names, "seeds": seeds, "summary": summary, "per_seed": rows, "directional": checks}


# -- proxy detection quality --------------------------------------------------

def proxy_detections(preds, assignment, gts, proxy, seed=0):
    """Detections of a stand-in detector trained on ``assignment``.

    Positive anchors regress onto their assigned GT up to Gaussian residuals
    of ``noise_sigma`` times the GT size and keep their predicted score;
    negatives and ignores keep their raw box and get damped scores. Low
    scores are dropped and the top ``max_detections`` kept (NMS is separate).
    """
    rng = np.random.default_rng(seed)
    scores = preds.scores[:, 0].copy()
    boxes = preds.boxes.copy()
    labels = assignment.labels
    pos = np.flatnonzero(labels >= 0)
    if pos.size:
        target = gts.boxes[labels[pos]]
        wh = np.tile(target[:, 2:] - target[:, :2], 2)
        fitted = target + proxy.noise_sigma * wh * rng.normal(size=target.shape)
        boxes[pos] = np.concatenate(
            [np.minimum(fitted[:, :2], fitted[:, 2:]), np.maximum(fitted[:, :2], fitted[:, 2:])], axis=1
        )
    scores[labels == NEGATIVE] *= proxy.negative_scale
    scores[labels == IGNORE] *= proxy.ignore_scale
    keep = np.flatnonzero(scores >= proxy.score_floor)
    keep = keep[np.argsort(-scores[keep], kind="stable")[: proxy.max_detections]]
    return boxes[keep], scores[keep]


def _proxy_image(cfg, name, seed):
    scene = make_scene(cfg, seed)
    anchors = anchors_for(cfg, name, scene)
    predictor = MockPredictorConfig(
        score_sharpness=cfg.predictor.score_sharpness,
        noise_sigma=cfg.proxy.noise_sigma,
        maturity=cfg.proxy.maturity,
        seed=seed,
        base_score=cfg.predictor.base_score,
        floor_score=cfg.predictor.floor_score,
        peak_score=cfg.predictor.peak_score,
    )
    preds = mock_predict(scene, anchors, predictor)
    assignment, _ = run_assigner(cfg, name, scene, anchors, preds=preds)
    boxes, scores = proxy_detections(preds, assignment, scene.gts, cfg.proxy, seed)
    kept = nms(boxes, scores, cfg.metrics.nms_thr)
    c = aar_counts(assignment.candidates, assignment)
    alloc = fpn_allocation(assignment, anchors, scene.gts)
    return (boxes[kept], scores[kept], scene.gts), c, stage_histogram(alloc)


def proxy_eval(cfg, name, seeds):
    """Proxy MR/AP/recall plus AAR and allocation over a seeded scene batch."""
    parts = parallel_map(lambda s: _proxy_image(cfg, name, s), seeds)
    result = evaluate([p[0] for p in parts], cfg.metrics.match_iou)
    amb = sum(p[1]["ambiguous"] for p in parts)
    pos = sum(p[1]["positive"] for p in parts)
    hist = sum((p[2] for p in parts), np.zeros(6, dtype=np.int64))
    return result, (100.0 * amb / pos if pos else None), hist


def sweep_k(cfg, ks, seeds=None):
    ks = list(ks)
    if not ks:
        raise ValueError("k range must be non-empty")
    seeds = seeds_of(cfg) if seeds is None else list(seeds)
    name = cfg.assigner if cfg.assigner in ("lla", "lla_free") else "lla"
    rows = []
    for k in ks:
        kcfg = cfg.with_K(k)  # validates K
        result, aar_pct, hist = proxy_eval(kcfg, name, seeds)
        assigned = hist[:5].sum()
        mean_stage = float(np.dot(np.arange(5), hist[:5]) / assigned) if assigned else None
        rows.append(
            {
                "K": k,
                "proxy_mr": result.mr,
                "proxy_ap": result.ap,
                "proxy_recall": result.recall,
                "aar": aar_pct,
                "mean_modal_stage": mean_stage,
                "unassigned_gts": int(hist[5]),
            }
        )
    return rows


def k_sensitivity(rows):
    """Relative spread (max - min) / min of proxy MR across the sweep."""
    mrs = [r["proxy_mr"] for r in rows]
    lo = min(mrs)
    return (max(mrs) - lo) / lo if lo > 0 else float("inf")


# -- evolution ----------------------------------------------------------------

def evolve(cfg, scene, schedule):
    """(maturity, assignment, anchors) per schedule step, for the configured LLA flavour."""
    name = cfg.assigner if cfg.assigner in ("lla", "lla_free") else "lla"
    anchors = anchors_for(cfg, name, scene)
    snaps = evolution_snapshots(scene, anchors, cfg.predictor, schedule, getattr(cfg, name))
    return [(float(m), a, anchors) for m, a in zip(schedule, snaps)], name


def overall_visible_fraction(assignment, anchors, scene):
    return visible_fraction(assignment, anchors, scene)


def replace_predictor(cfg, **kw):
    return replace(cfg, predictor=replace(cfg.predictor, **kw))

