#!/usr/bin/env python3
"""End-to-end synthetic benchmark, recorded as the golden run.

Renders 120 scenes from one seed, trains the default model on the first
100, evaluates the pooled recall/accuracy curve on the 20 held-out
scenes and writes the artifacts (curve CSV, SVG plot, summary JSON)
under golden/. The gate reported at the end is accuracy >= 0.85 at the
highest threshold whose recall stays >= 0.7.

Usage:
    python3 scripts/run_e2e.py [--out golden] [--seed 7]
"""

import argparse
import json
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from occlusia.evaluation import aor_curve, curve_to_csv, curves_to_svg, merge_curves
from occlusia.inference import predict
from occlusia.raster import atomic_write_bytes
from occlusia.synth import make_scenes
from occlusia.tinynet import TrainConfig, train

RECALL_FLOOR = 0.7
ACCURACY_GATE = 0.85


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=os.path.join(
        os.path.dirname(__file__), "..", "golden"))
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--train-scenes", type=int, default=100)
    ap.add_argument("--held-out", type=int, default=20)
    args = ap.parse_args()

    t0 = time.time()
    scenes = make_scenes(args.train_scenes + args.held_out, seed=args.seed)
    t_synth = time.time() - t0
    print(f"rendered {len(scenes)} scenes in {t_synth:.0f}s")

    cfg = TrainConfig(seed=args.seed)
    t0 = time.time()
    params, history = train(cfg, [(s.image, s.gt) for s in scenes[: args.train_scenes]])
    t_train = time.time() - t0
    print(f"trained {cfg.epochs} epochs in {t_train:.0f}s "
          f"(loss {history[0]:.1f} -> {history[-1]:.1f})")

    t0 = time.time()
    curves = []
    for s in scenes[args.train_scenes:]:
        scored, _, _ = predict(params, s.image)
        curves.append(aor_curve(scored, s.gt))
    curve = merge_curves(curves)
    t_eval = time.time() - t0
    print(f"evaluated {len(curves)} held-out scenes in {t_eval:.0f}s")

    reached = np.nonzero(curve.recall >= RECALL_FLOOR)[0]
    if reached.size == 0:
        print(f"FAIL: recall never reaches {RECALL_FLOOR}")
        return 1
    k = int(reached.max())
    t_star = float(curve.thresholds[k])
    recall = float(curve.recall[k])
    accuracy = float(curve.accuracy[k])
    passed = accuracy >= ACCURACY_GATE

    os.makedirs(args.out, exist_ok=True)
    atomic_write_bytes(os.path.join(args.out, "e2e_curve.csv"),
                       curve_to_csv(curve).encode("utf-8"))
    svg = curves_to_svg([("held-out", curve.thresholds, curve.recall,
                          curve.accuracy)])
    atomic_write_bytes(os.path.join(args.out, "e2e_curve.svg"),
                       svg.encode("utf-8"))
    summary = {
        "seed": args.seed,
        "train_scenes": args.train_scenes,
        "held_out": args.held_out,
        "epochs": cfg.epochs,
        "lr": cfg.lr,
        "loss_history": [round(h, 6) for h in history],
        "train_seconds": round(t_train, 1),
        "threshold": t_star,
        "recall": round(recall, 6),
        "accuracy": round(accuracy, 6),
        "recall_floor": RECALL_FLOOR,
        "accuracy_gate": ACCURACY_GATE,
        "passed": passed,
    }
    atomic_write_bytes(os.path.join(args.out, "e2e_summary.json"),
                       (json.dumps(summary, indent=2) + "\n").encode("utf-8"))
    print(f"t*={t_star:.4f} recall={recall:.3f} accuracy={accuracy:.3f} "
          f"-> {'PASS' if passed else 'FAIL'}")
    print(f"wrote {args.out}/e2e_curve.csv, e2e_curve.svg, e2e_summary.json")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
