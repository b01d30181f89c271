"""Wall-clock comparison of the numba and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel is run once per backend to warm up (numba compiles on first
call), then timed as the best of ``--repeat`` runs. A full LLA assignment
on a synthetic crowd scene is timed the same way.
"""
import argparse
import timeit

import numpy as np

from crowd_assign import _accel, _kernels, harness
from crowd_assign.io import HarnessConfig


def _boxes(rng, n, size=800.0):
    xy = rng.uniform(0, size, (n, 2))
    wh = rng.uniform(4, 120, (n, 2))
    return np.concatenate([xy, xy + wh], axis=1)


def cases(rng):
    a, b = _boxes(rng, 60), _boxes(rng, 20000)
    pts = rng.uniform(0, 800, (20000, 2))
    vals = rng.random((60, 20000))
    det = _boxes(rng, 3000)
    scores = rng.random(3000)
    cfg = HarnessConfig("lla")
    scene = harness.make_scene(cfg, 0)
    anchors = harness.anchors_for(cfg, "lla", scene)
    return {
        "pairwise_iou 60x20000": lambda: _kernels.pairwise_overlap(a, b),
        "pairwise_giou 60x20000": lambda: _kernels.pairwise_overlap(a, b, True),
        "points_in_boxes 20000x60": lambda: _kernels.points_in_boxes(pts, a),
        "topk_smallest 60x20000 k=10": lambda: _kernels.topk_smallest(vals, 10),
        "greedy_nms 3000": lambda: _kernels.greedy_nms(det, scores, 0.5),
        f"lla scene ({len(scene)} GTs, {len(anchors)} anchors)": lambda: harness.run_assigner(cfg, "lla", scene, anchors),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    table = cases(np.random.default_rng(0))
    times = {}
    for backend in backends:
        _accel.BACKEND = backend
        for name, fn in table.items():
            fn()
            times[name, backend] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
    width = max(map(len, table))
    print(f"{'kernel':<{width}}  " + "  ".join(f"{b:>10}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name in table:
        row = "  ".join(f"{times[name, b] * 1e3:8.2f}ms" for b in backends)
        if len(backends) > 1:
            row += f"  {times[name, 'numpy'] / times[name, 'numba']:9.1f}x"
        print(f"{name:<{width}}  {row}")
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; only the numpy backend was timed")


if __name__ == "__main__":
    main()
