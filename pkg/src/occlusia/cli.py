"""Command line front end.

Subcommands: synth, train, infer, eval, match, stats, aor-plot. Exit
codes: 0 success, 2 validation problems (bad arguments, missing or
malformed files), 1 runtime failures. All outputs are written through
temp-file renames, and OCCLUSIA_THREADS caps worker threads for batch
evaluation (default 1: bit-reproducible output order is kept either
way).
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np


class ValidationError(Exception):
    pass


def _threads():
    raw = os.environ.get("OCCLUSIA_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"OCCLUSIA_THREADS must be an integer, got {raw!r}")
    return max(n, 1)


def _load_config(path):
    from .losses import load_config_file

    if not os.path.exists(path):
        raise ValidationError(f"config file not found: {path}")
    try:
        return load_config_file(path)
    except Exception as exc:
        raise ValidationError(f"bad config file {path}: {exc}")


def _scene_prefixes(data_dir):
    if not os.path.isdir(data_dir):
        raise ValidationError(f"not a directory: {data_dir}")
    prefixes = sorted(
        os.path.join(data_dir, f[: -len(".edge.fmap")])
        for f in os.listdir(data_dir)
        if f.endswith(".edge.fmap")
    )
    if not prefixes:
        raise ValidationError(f"no scenes (*.edge.fmap) under {data_dir}")
    return prefixes


def cmd_synth(args):
    from .synth import make_scenes, save_scene

    scenes = make_scenes(
        args.n,
        seed=args.seed,
        width=args.width,
        height=args.height,
        difficulty=args.difficulty,
    )
    os.makedirs(args.out, exist_ok=True)
    names = []
    for i, scene in enumerate(scenes):
        prefix = os.path.join(args.out, f"scene_{i:04d}")
        save_scene(prefix, scene, image_name=f"scene_{i:04d}.png")
        names.append(f"scene_{i:04d}")
        for msg in scene.warnings:
            print(f"scene_{i:04d}: {msg}", file=sys.stderr)
    manifest = {
        "count": len(names),
        "seed": args.seed,
        "width": args.width,
        "height": args.height,
        "difficulty": args.difficulty,
        "scenes": names,
    }
    from .raster import atomic_write_bytes

    atomic_write_bytes(
        os.path.join(args.out, "dataset.json"),
        (json.dumps(manifest, indent=2) + "\n").encode("utf-8"),
    )
    print(f"wrote {len(names)} scenes to {args.out}")
    return 0


def _load_dataset(data_dir):
    from .orientmap import load_map
    from .raster import load_image_gray

    pairs = []
    for prefix in _scene_prefixes(data_dir):
        img_path = f"{prefix}.png"
        if not os.path.exists(img_path):
            raise ValidationError(f"missing image {img_path}")
        pairs.append((load_image_gray(img_path), load_map(prefix)))
    return pairs


def cmd_train(args):
    from .losses import configs_from_dict
    from .tinynet import TrainConfig, save_model, train

    raw = dict(_load_config(args.config)) if args.config else {}
    loss_keys = {k: raw.pop(k) for k in ("alpha", "delta", "variant",
                                         "beta_mode", "beta", "include_log_z")
                 if k in raw}
    known = {"lr", "momentum", "epochs", "batch_size", "seed", "widths",
             "orient_width"}
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"unknown train config keys: {sorted(unknown)}")
    if args.loss_variant is not None:
        loss_keys["variant"] = args.loss_variant
    bcfg, ocfg = configs_from_dict(loss_keys)
    fields = {key: raw[key] for key in known if key in raw}
    # command line wins over the config file
    for key in ("lr", "momentum", "epochs", "batch_size", "seed"):
        val = getattr(args, key)
        if val is not None:
            fields[key] = val
    if isinstance(fields.get("widths"), list):
        fields["widths"] = tuple(int(v) for v in fields["widths"])
    cfg = TrainConfig(boundary=bcfg, orientation=ocfg, **fields)
    dataset = _load_dataset(args.data)
    params, history = train(cfg, dataset)
    save_model(args.out, params)
    from .raster import atomic_write_bytes

    rows = ["epoch,mean_loss"] + [
        f"{e + 1},{loss:.6f}" for e, loss in enumerate(history)
    ]
    atomic_write_bytes(
        f"{args.out}.loss.csv", ("\n".join(rows) + "\n").encode("utf-8")
    )
    for e, loss in enumerate(history):
        print(f"epoch {e + 1}: mean loss {loss:.6f}")
    print(f"saved model to {args.out}")
    return 0


def _read_image(path):
    from .raster import load_fmap, load_image_gray

    if not os.path.exists(path):
        raise ValidationError(f"image not found: {path}")
    if path.endswith(".fmap"):
        return load_fmap(path)
    return load_image_gray(path)


def _parse_scales(args):
    if args.scales:
        try:
            scales = tuple(float(s) for s in args.scales.split(","))
        except ValueError:
            raise ValidationError(f"bad --scales value: {args.scales!r}")
        if not scales or any(s <= 0 for s in scales):
            raise ValidationError("scales must be positive numbers")
        return scales
    return (0.5, 1.0, 1.5) if args.multiscale else (1.0,)


def cmd_infer(args):
    from .inference import predict, save_scored
    from .tinynet import load_model

    if not os.path.exists(args.model):
        raise ValidationError(f"model not found: {args.model}")
    params = load_model(args.model)
    image = _read_image(args.image)
    scored, edge, orient = predict(params, image, scales=_parse_scales(args))
    save_scored(args.out, scored)
    _write_overlay(args.overlay or f"{args.out}.overlay.png", image, scored)
    n = int(np.count_nonzero(scored.support()))
    print(f"{n} boundary pixels after suppression; wrote {args.out}.*.fmap")
    return 0


ARROW_STEP = 6  # draw one direction arrow per this many boundary pixels


def _write_overlay(path, image, scored):
    """Edges tinted by total score; every sixth boundary pixel in scan
    order gets a short arrow along its direction field."""
    from PIL import Image, ImageDraw

    from .raster import atomic_write_bytes, _png_bytes

    gray = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if gray.ndim == 3:
        gray = gray.mean(axis=2)
    rgb = np.stack([gray, gray, gray], axis=2)
    sup = scored.support()
    total = np.asarray(scored.total, dtype=np.float64)
    peak = float(total[sup].max()) if np.any(sup) else 1.0
    norm = total / max(peak, 1e-12)
    rgb[sup, 0] = 0.25 + 0.75 * norm[sup]
    rgb[sup, 1] = 0.1
    rgb[sup, 2] = 0.1
    img = Image.fromarray(np.round(rgb * 255).astype(np.uint8), mode="RGB")
    draw = ImageDraw.Draw(img)
    orient = np.asarray(scored.orient, dtype=np.float64)
    for r, c in np.argwhere(sup)[::ARROW_STEP]:
        th = orient[r, c]
        # direction step is (-sin, cos) in (row, col); PIL wants (x, y)
        x1 = c + 4.0 * np.cos(th)
        y1 = r - 4.0 * np.sin(th)
        draw.line([(int(c), int(r)), (int(round(x1)), int(round(y1)))],
                  fill=(255, 214, 64))
        draw.point((int(round(x1)), int(round(y1))), fill=(96, 255, 128))
    atomic_write_bytes(path, _png_bytes(img))


def _eval_one(prefix, params, scales):
    from .evaluation import aor_curve
    from .inference import predict
    from .orientmap import load_map
    from .raster import load_image_gray

    image = load_image_gray(f"{prefix}.png")
    gt = load_map(prefix)
    scored, _, _ = predict(params, image, scales=scales)
    return aor_curve(scored, gt)


def cmd_eval(args):
    from .evaluation import curve_to_csv, merge_curves
    from .raster import atomic_write_bytes
    from .tinynet import load_model

    if args.pred and args.gt:
        from .evaluation import aor_curve, boundary_pr, pr_to_csv
        from .inference import load_scored, scored_from_map
        from .orientmap import load_map

        if os.path.exists(f"{args.pred}.edge_conf.fmap"):
            scored = load_scored(args.pred)
        elif os.path.exists(f"{args.pred}.edge.fmap"):
            # a plain oriented map (e.g. ground truth) as the prediction
            scored = scored_from_map(load_map(args.pred))
        else:
            raise ValidationError(f"no scored or oriented map at {args.pred}")
        gt = load_map(args.gt)
        curve = aor_curve(scored, gt)
        if args.pr_out:
            table = boundary_pr(scored, gt.edge)
            atomic_write_bytes(args.pr_out, pr_to_csv(table).encode("utf-8"))
    elif args.data and args.model:
        if args.pr_out:
            raise ValidationError("--pr-out needs --pred and --gt")
        if not os.path.exists(args.model):
            raise ValidationError(f"model not found: {args.model}")
        params = load_model(args.model)
        scales = _parse_scales(args)
        prefixes = _scene_prefixes(args.data)
        workers = _threads()
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                curves = list(
                    pool.map(lambda p: _eval_one(p, params, scales), prefixes)
                )
        else:
            curves = [_eval_one(p, params, scales) for p in prefixes]
        curve = merge_curves(curves)
    else:
        raise ValidationError("eval needs either --pred and --gt, or --data and --model")
    csv = curve_to_csv(curve)
    atomic_write_bytes(args.out, csv.encode("utf-8"))
    defined = np.isfinite(curve.accuracy)
    if np.any(defined):
        k = int(np.argmax(curve.accuracy[defined]))
        print(
            f"wrote {args.out}; best accuracy "
            f"{curve.accuracy[defined][k]:.4f} among defined thresholds"
        )
    else:
        print(f"wrote {args.out}; no threshold produced matches")
    return 0


def cmd_match(args):
    from .annotate import InstanceMap, build_ground_truth, load_segments
    from .orientmap import save_map
    from .raster import (
        atomic_write_bytes,
        load_class_table,
        load_instance_png,
    )

    for path in (args.ids, args.classes, args.segments):
        if not os.path.exists(path):
            raise ValidationError(f"input not found: {path}")
    instmap = InstanceMap(
        ids=load_instance_png(args.ids), classes=load_class_table(args.classes)
    )
    _, segments = load_segments(args.segments)
    gt, matrix, report = build_ground_truth(instmap, segments, rho=args.rho)
    save_map(args.out, gt)
    atomic_write_bytes(
        f"{args.out}.matrix.json",
        (json.dumps(matrix.to_json(), indent=2) + "\n").encode("utf-8"),
    )
    atomic_write_bytes(
        f"{args.out}.report.json",
        (json.dumps(report, indent=2) + "\n").encode("utf-8"),
    )
    for msg in report["warnings"]:
        print(msg, file=sys.stderr)
    print(
        f"wrote {args.out}.edge.fmap / .orient.fmap; "
        f"{len(report['unlabelled'])} unlabelled stretches"
    )
    return 0


def cmd_stats(args):
    from .annotate import OcclusionMatrix, matrix_to_csv, merge_matrices
    from .raster import atomic_write_bytes

    paths = []
    for entry in args.inputs:
        if os.path.isdir(entry):
            paths.extend(
                sorted(
                    os.path.join(entry, f)
                    for f in os.listdir(entry)
                    if f.endswith(".matrix.json")
                )
            )
        else:
            paths.append(entry)
    if not paths:
        raise ValidationError("stats: no matrix files found")
    matrices = []
    for p in paths:
        if not os.path.exists(p):
            raise ValidationError(f"matrix file not found: {p}")
        with open(p, "r", encoding="utf-8") as fh:
            matrices.append(OcclusionMatrix.from_json(json.load(fh)))
    merged = merge_matrices(matrices)
    payload = matrix_to_csv(merged)
    if args.out:
        atomic_write_bytes(args.out, payload.encode("utf-8"))
        print(f"wrote {args.out}")
    else:
        print(payload, end="")
    return 0


def cmd_aor_plot(args):
    from .evaluation import curve_from_csv, curves_to_svg
    from .raster import atomic_write_bytes

    labels = args.labels.split(",") if args.labels else []
    named = []
    for i, path in enumerate(args.csv):
        if not os.path.exists(path):
            raise ValidationError(f"csv not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            ts, rec, acc = curve_from_csv(fh.read())
        label = labels[i] if i < len(labels) else os.path.basename(path)
        named.append((label, ts, rec, acc))
    svg = curves_to_svg(named)
    atomic_write_bytes(args.out, svg.encode("utf-8"))
    print(f"wrote {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="occlusia",
        description="occlusion boundaries with border ownership",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate synthetic scenes")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--width", type=int, default=96)
    s.add_argument("--height", type=int, default=96)
    s.add_argument("--difficulty", type=float, default=0.25)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train the toy net on a scene directory")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="TOML or JSON with train/loss settings")
    s.add_argument("--lr", type=float)
    s.add_argument("--momentum", type=float)
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch", dest="batch_size", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--loss-variant", dest="loss_variant",
                   choices=("as-written", "symmetric"))
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", help="run a model on one image")
    s.add_argument("--model", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--out", required=True, help="output fmap prefix")
    s.add_argument("--multiscale", action="store_true")
    s.add_argument("--scales", help="comma-separated scale list")
    s.add_argument("--overlay", help="overlay png path (default <out>.overlay.png)")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="recall/accuracy curve as csv")
    s.add_argument("--pred", help="scored fmap prefix")
    s.add_argument("--gt", help="ground-truth map prefix")
    s.add_argument("--data", help="scene directory (with --model)")
    s.add_argument("--model")
    s.add_argument("--multiscale", action="store_true")
    s.add_argument("--scales")
    s.add_argument("--out", required=True)
    s.add_argument("--pr-out", dest="pr_out",
                   help="also write a precision/recall csv (--pred/--gt mode)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("match", help="segments + instance map -> ground truth")
    s.add_argument("--ids", required=True, help="16-bit instance png")
    s.add_argument("--classes", required=True, help="id -> class json")
    s.add_argument("--segments", required=True)
    s.add_argument("--out", required=True, help="output map prefix")
    s.add_argument("--rho", type=float, default=10.0)
    s.set_defaults(func=cmd_match)

    s = sub.add_parser("stats", help="merge occlusion matrices")
    s.add_argument("inputs", nargs="+", help="matrix json files or scene dirs")
    s.add_argument("--out")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("aor-plot", help="plot csv curves as svg")
    s.add_argument("--csv", action="append", required=True)
    s.add_argument("--labels")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_aor_plot)
    return p


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # runtime failures
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
