#!/usr/bin/env python3
"""Record the small golden training run used by the test suite.

Trains the default configuration on 20 two-disk scenes (seed 7) and
stores the per-epoch loss history under golden/, so regressions in the
training loop show up as a drift diff rather than a silent change.

Usage:
    python3 scripts/record_golden.py [--out golden]
"""

import argparse
import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from occlusia.raster import atomic_write_bytes
from occlusia.synth import SceneSpec, ShapeSpec, render
from occlusia.tinynet import TrainConfig, train


def two_disk_scene(seed, size=32):
    rng = np.random.default_rng(seed)
    spec = SceneSpec(
        width=size, height=size, seed=seed,
        shapes=[
            ShapeSpec("disk", {"cx": int(rng.integers(10, 14)),
                               "cy": int(rng.integers(10, 16)),
                               "r": int(rng.integers(6, 9))}, "a"),
            ShapeSpec("disk", {"cx": int(rng.integers(18, 23)),
                               "cy": int(rng.integers(16, 22)),
                               "r": int(rng.integers(7, 10))}, "b"),
        ],
    )
    sc = render(spec)
    return sc.image, sc.gt


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=os.path.join(
        os.path.dirname(__file__), "..", "golden"))
    args = ap.parse_args()

    dataset = [two_disk_scene(s) for s in range(20)]
    cfg = TrainConfig(seed=7)
    params, history = train(cfg, dataset)
    record = {
        "scenes": 20,
        "seed": cfg.seed,
        "lr": cfg.lr,
        "epochs": cfg.epochs,
        "loss_history": [round(h, 6) for h in history],
        "decreasing": history[9] < history[0],
    }
    os.makedirs(args.out, exist_ok=True)
    atomic_write_bytes(
        os.path.join(args.out, "train_two_disk_seed7.json"),
        (json.dumps(record, indent=2) + "\n").encode("utf-8"),
    )
    print(f"epoch 1 loss {history[0]:.3f}, epoch 10 loss {history[9]:.3f}")
    print(f"wrote {args.out}/train_two_disk_seed7.json")
    return 0 if record["decreasing"] else 1


if __name__ == "__main__":
    sys.exit(main())
