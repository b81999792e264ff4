"""Command-line interface.

Subcommands: train, estimate, segment, evaluate, magnify, demo. Every run
echoes the resolved config and seed; artifacts are written atomically. Exit
codes: 0 success, 1 numeric/convergence failure, 2 usage or input error.
"""

import argparse
import csv
import io
import os
import sys
import time

import numpy as np

from .apps import accuracy, magnify_blur, pr_curve, segment, threshold_value
from .config import Config, apply_overrides, config_text, load_config
from .datagen import manifest_rows
from .descriptor import save_dataset
from .edges import save_edge_map
from .errors import InputError, NumericError
from .image import (Image, atomic_write, load_image, load_map, render_map,
                    save_image, save_map)
from .nn.network import load_model, save_model
from .nn.training import full_encodings
from .pipeline import FEATURE_ROWS, estimate_maps, train_full
from .rng import Rng
from . import synth

IMAGE_EXTS = (".png", ".ppm", ".pgm")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write(path, buf.getvalue().encode("utf-8"))


def _resolve_config(args):
    cfg = Config()
    if getattr(args, "config", None):
        cfg = load_config(args.config, base=cfg)
    if getattr(args, "set", None):
        cfg = apply_overrides(cfg, args.set)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    cfg.validate()
    print("resolved config:")
    for line in config_text(cfg).strip().splitlines():
        print(f"  {line}")
    return cfg


def _list_images(directory):
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise InputError(f"cannot list {directory}: {exc}") from exc
    return [os.path.join(directory, n) for n in names
            if os.path.splitext(n)[1].lower() in IMAGE_EXTS]


def _save_curve(path, curve):
    _write_csv(path, ("epoch", "loss", "train_acc"),
               [(e, f"{l:.6f}", f"{a:.4f}") for e, l, a in curve])


# ---------------------------------------------------------------------------
# subcommands

def cmd_train(args):
    cfg = _resolve_config(args)
    paths = _list_images(args.images)
    if not paths:
        raise InputError(f"no images (.png/.ppm/.pgm) in {args.images}")
    images = [load_image(p) for p in paths]
    rng = Rng(cfg.seed)
    result = train_full(images, cfg, rng, feature_table=False)
    save_model(result.model, args.out)
    stage1 = result.curves["stage1"]
    stage2 = [(e + len(stage1), l, a) for e, l, a in result.curves["stage2"]]
    _save_curve(args.loss_csv or args.out + ".loss.csv", stage1 + stage2)
    if args.manifest:
        _write_csv(args.manifest, ("image", "center_x", "center_y", "scale", "label"),
                   manifest_rows(result.test_records))
    if args.dump_descriptors:
        enc = full_encodings(result.model, result.test_data)
        save_dataset(args.dump_descriptors, enc, result.test_data.labels0 + 1)
    acc = result.accuracies["combined"]
    print(f"trained on {result.n_train} records, held out {result.n_test}")
    print(f"held-out within-tolerance accuracy: {acc:.4f}")
    print(f"model written to {args.out}")
    return 0


def _dump_sigma_map(values, prefix, name, cfg):
    save_map(values, f"{prefix}{name}.dfkmap")
    render_map(values, f"{prefix}{name}.pgm", cfg.sigma_min, cfg.sigma_max())


def cmd_estimate(args):
    cfg = _resolve_config(args)
    model = load_model(args.model)
    img = load_image(args.image)
    rng = Rng(cfg.seed)
    result = estimate_maps(img, model, cfg, rng=rng,
                           seed_homogeneous=args.seed_homogeneous,
                           threads=args.threads)
    prefix = args.out_prefix
    _dump_sigma_map(result.sparse.sigma, prefix, "sparse", cfg)
    _dump_sigma_map(result.filtered.sigma, prefix, "filtered", cfg)
    _dump_sigma_map(result.dense, prefix, "dense", cfg)
    save_map(result.sparse.conf, f"{prefix}confidence.dfkmap")
    render_map(result.sparse.conf, f"{prefix}confidence.pgm", 0.0, 1.0)
    save_image(Image(result.guidance), f"{prefix}guidance.ppm")
    for i, channel in enumerate("rgb"):
        save_map(result.guidance[:, :, i], f"{prefix}guidance_{channel}.dfkmap")
    if args.dump_edges:
        save_edge_map(result.edges, args.dump_edges)
    if args.dump_features:
        from .sparse_map import encode_samples
        from .descriptor import decode_scale
        encoded = encode_samples(model, result.samples, threads=args.threads)
        rows = []
        for sample, enc in zip(result.samples, encoded):
            block, scale = decode_scale(enc, model.layout)
            rows.append((sample.x, sample.y, scale)
                        + tuple(f"{v:.8g}" for v in block))
        _write_csv(args.dump_features, ("center_x", "center_y", "scale"), rows)
    print(f"samples: {len(result.samples)}  support: {result.sparse.count}")
    print(f"dense map range: [{result.dense.min():.3f}, {result.dense.max():.3f}]")
    print(f"artifacts written with prefix {prefix}")
    return 0


def cmd_segment(args):
    cfg = _resolve_config(args)
    dense = load_map(args.map)
    alpha = cfg.alpha if args.alpha is None else args.alpha
    mask = segment(dense, alpha)
    save_image(Image(mask.astype(np.float64)), args.out)
    tau = threshold_value(dense, alpha)
    print(f"tau = {tau:.4f}; blurry fraction = {mask.mean():.4f}")
    print(f"mask written to {args.out}")
    return 0


def _load_mask(path):
    img = load_image(path)
    data = img.data if img.channels == 1 else img.data.max(axis=2)
    return data >= 0.5


def cmd_evaluate(args):
    cfg = _resolve_config(args)
    alpha = cfg.alpha if args.alpha is None else args.alpha
    if os.path.isdir(args.maps):
        map_paths = sorted(os.path.join(args.maps, n) for n in os.listdir(args.maps)
                           if n.endswith(".dfkmap"))
    else:
        map_paths = [args.maps]
    if not map_paths:
        raise InputError(f"no .dfkmap files under {args.maps}")

    gt_index = {}
    if os.path.isdir(args.gt):
        for name in os.listdir(args.gt):
            stem, ext = os.path.splitext(name)
            if ext.lower() in IMAGE_EXTS:
                gt_index[stem] = os.path.join(args.gt, name)
    rows = []
    skipped = []
    totals = None
    for map_path in map_paths:
        stem = os.path.splitext(os.path.basename(map_path))[0]
        if os.path.isdir(args.gt):
            gt_path = gt_index.get(stem)
            if gt_path is None:
                skipped.append(stem)
                continue
        else:
            gt_path = args.gt
        dense = load_map(map_path)
        gt = _load_mask(gt_path)
        acc = accuracy(segment(dense, alpha), gt)
        rows.append((stem, f"{acc:.6f}"))
        curve = pr_curve(dense, gt, steps=args.pr_steps,
                         tau_lo=cfg.sigma_min, tau_hi=cfg.sigma_max())
        if totals is None:
            totals = [(t, p, r, 1) for t, p, r in curve]
        else:
            totals = [(t, p0 + p, r0 + r, c + 1)
                      for (t, p0, r0, c), (_, p, r) in zip(totals, curve)]
    for stem in skipped:
        print(f"skipped {stem}: no matching ground truth")
    if not rows:
        raise InputError("no map/ground-truth pairs matched")
    aggregate = float(np.mean([float(a) for _, a in rows]))
    rows.append(("aggregate", f"{aggregate:.6f}"))
    _write_csv(args.out_csv, ("image", "accuracy"), rows)
    if args.pr_csv:
        _write_csv(args.pr_csv, ("tau", "precision", "recall"),
                   [(f"{t:.6f}", f"{p / c:.6f}", f"{r / c:.6f}")
                    for t, p, r, c in totals])
    print(f"aggregate segmentation accuracy: {aggregate:.4f}")
    return 0


def cmd_magnify(args):
    cfg = _resolve_config(args)
    img = load_image(args.image)
    dense = load_map(args.map)
    alpha = cfg.alpha if args.alpha is None else args.alpha
    out = magnify_blur(img, dense, args.factor, alpha)
    save_image(out, args.out)
    print(f"magnified image written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# demo

def cmd_demo(args):
    cfg = _resolve_config(args)
    out = args.out
    os.makedirs(out, exist_ok=True)
    rng = Rng(cfg.seed)
    t0 = time.time()

    print("generating corpus...")
    images = synth.corpus(rng.child("corpus").generator,
                          cfg.demo_images, cfg.demo_image_size)
    for i, img in enumerate(images[:3]):
        save_image(img, os.path.join(out, f"corpus_{i}.ppm"))

    print("training (two stages + per-feature classifiers)...")
    result = train_full(images, cfg, rng, feature_table=True)
    t_train = time.time() - t0
    save_model(result.model, os.path.join(out, "model.dfkt"))
    for stage, curve in result.curves.items():
        _save_curve(os.path.join(out, f"loss_{stage}.csv"), curve)
    _write_csv(os.path.join(out, "manifest.csv"),
               ("image", "center_x", "center_y", "scale", "label"),
               manifest_rows(result.test_records))
    enc = full_encodings(result.model, result.test_data)
    save_dataset(os.path.join(out, "descriptors.dfkds"),
                 enc, result.test_data.labels0 + 1)

    print("estimating on held-out scenes...")
    model = result.model
    sigma_hi = cfg.sigma_max()
    scene_accs = []
    pr_rows = []
    recall_monotone = True
    for i in range(5):
        gen = rng.child(f"scene-{i}").generator
        scene, gt = synth.half_blur_scene(gen, cfg.demo_image_size,
                                          cfg.demo_image_size, sigma_hi)
        est = estimate_maps(scene, model, cfg, threads=args.threads)
        mask = segment(est.dense, cfg.alpha)
        scene_accs.append(accuracy(mask, gt))
        save_image(scene, os.path.join(out, f"scene_{i}.ppm"))
        save_map(est.dense, os.path.join(out, f"scene_{i}_dense.dfkmap"))
        render_map(est.dense, os.path.join(out, f"scene_{i}_dense.pgm"),
                   cfg.sigma_min, sigma_hi)
        curve = pr_curve(est.dense, gt, steps=21,
                         tau_lo=cfg.sigma_min, tau_hi=sigma_hi)
        recalls = [r for _, _, r in curve]
        if any(b > a + 1e-12 for a, b in zip(recalls, recalls[1:])):
            recall_monotone = False
        pr_rows.extend((i, f"{t:.6f}", f"{p:.6f}", f"{r:.6f}") for t, p, r in curve)
    _write_csv(os.path.join(out, "pr_curve.csv"),
               ("scene", "tau", "precision", "recall"), pr_rows)

    print("homogeneous-region seeding experiment...")
    gen = rng.child("flat-scene").generator
    size = max(cfg.demo_image_size, 208)
    flat_img, region = synth.flat_region_scene(gen, size, size, sigma_hi,
                                               region_frac=0.6)
    save_image(flat_img, os.path.join(out, "flat_scene.ppm"))
    # score the interior whose patch context lies fully inside the region
    interior = np.zeros_like(region)
    margin = cfg.patch_large // 2
    ys, xs = np.nonzero(region)
    y0, y1, x0, x1 = ys.min(), ys.max(), xs.min(), xs.max()
    interior[y0 + margin:y1 - margin + 1, x0 + margin:x1 - margin + 1] = True
    errors = {}
    for label, seeded in (("no_seeds", False), ("with_seeds", True)):
        est = estimate_maps(flat_img, model, cfg, rng=rng.child("estimate"),
                            seed_homogeneous=seeded, threads=args.threads)
        errors[label] = float(np.abs(est.dense[interior] - sigma_hi).mean())
        save_map(est.dense, os.path.join(out, f"flat_{label}.dfkmap"))
        render_map(est.dense, os.path.join(out, f"flat_{label}.pgm"),
                   cfg.sigma_min, sigma_hi)
    t_total = time.time() - t0

    mean_acc = float(np.mean(scene_accs))
    summary = [
        ("seed", cfg.seed),
        ("n_train_records", result.n_train),
        ("n_test_records", result.n_test),
    ]
    summary += [(f"acc_{row}", f"{result.accuracies[row]:.6f}") for row in FEATURE_ROWS]
    summary += [(f"scene_{i}_accuracy", f"{a:.6f}") for i, a in enumerate(scene_accs)]
    summary += [
        ("mean_scene_accuracy", f"{mean_acc:.6f}"),
        ("recall_monotone", int(recall_monotone)),
        ("flat_error_no_seeds", f"{errors['no_seeds']:.6f}"),
        ("flat_error_with_seeds", f"{errors['with_seeds']:.6f}"),
    ]
    _write_csv(os.path.join(out, "summary.csv"), ("key", "value"), summary)

    report = io.StringIO()
    report.write("defocuskit demo report\n")
    report.write("======================\n\n")
    report.write(f"seed: {cfg.seed}\n")
    report.write(f"corpus: {cfg.demo_images} images of {cfg.demo_image_size}px, "
                 f"{result.n_train} train / {result.n_test} held-out records\n\n")
    report.write("within-tolerance accuracy per feature (held-out, tolerance "
                 f"{cfg.sigma_inter}; random baseline {1.0 / cfg.n_labels:.4f}):\n")
    for row in FEATURE_ROWS:
        report.write(f"  {row:<13} {result.accuracies[row]:.4f}\n")
    report.write("\nhalf-blur scene segmentation (alpha = "
                 f"{cfg.alpha}, sigma = {sigma_hi}):\n")
    for i, a in enumerate(scene_accs):
        report.write(f"  scene {i}: accuracy {a:.4f}\n")
    report.write(f"  mean: {mean_acc:.4f}\n")
    report.write(f"  recall monotone over tau sweep: {recall_monotone}\n")
    report.write("\nhomogeneous-region seeding (mean |dense - truth| in the "
                 "flat region):\n")
    report.write(f"  without seeds: {errors['no_seeds']:.4f}\n")
    report.write(f"  with seeds:    {errors['with_seeds']:.4f}\n")
    report.write("\nresolved config:\n")
    for line in config_text(cfg).strip().splitlines():
        report.write(f"  {line}\n")
    atomic_write(os.path.join(out, "report.txt"), report.getvalue().encode("utf-8"))

    print(f"training took {t_train:.1f}s, demo total {t_total:.1f}s")
    print(f"per-feature accuracy: " +
          ", ".join(f"{row}={result.accuracies[row]:.3f}" for row in FEATURE_ROWS))
    print(f"mean scene segmentation accuracy: {mean_acc:.4f}")
    print(f"flat-region error without/with seeds: "
          f"{errors['no_seeds']:.3f} / {errors['with_seeds']:.3f}")
    print(f"report written to {os.path.join(out, 'report.txt')}")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="defocuskit",
        description="Per-pixel defocus map estimation from a single image.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="config file (key = value lines)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for per-patch stages (1 = exact "
                            "reproducibility)")

    p = sub.add_parser("train", help="train a model on a directory of images")
    common(p)
    p.add_argument("--images", required=True, help="directory of source images")
    p.add_argument("--out", required=True, help="output model path (.dfkt)")
    p.add_argument("--loss-csv", help="loss curve CSV (default <out>.loss.csv)")
    p.add_argument("--manifest", help="write the held-out patch manifest CSV")
    p.add_argument("--dump-descriptors",
                   help="write held-out encoded descriptors (.dfkds)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("estimate", help="estimate defocus maps for one image")
    common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out-prefix", required=True,
                   help="prefix for the sparse/filtered/guidance/dense artifacts")
    p.add_argument("--seed-homogeneous", action="store_true",
                   help="add classification seeds in edge-free regions")
    p.add_argument("--dump-edges", help="write the edge map as PGM")
    p.add_argument("--dump-features",
                   help="write per-patch descriptors as CSV rows "
                        "(center_x, center_y, scale, values...)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("segment", help="threshold a dense map into a binary mask")
    common(p)
    p.add_argument("--map", required=True, help="dense map (.dfkmap)")
    p.add_argument("--out", required=True, help="output mask (.pgm/.png)")
    p.add_argument("--alpha", type=float, help="threshold weight (default from config)")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", help="score maps against ground-truth masks")
    common(p)
    p.add_argument("--maps", required=True, help=".dfkmap file or directory")
    p.add_argument("--gt", required=True, help="mask file or directory (stem-matched)")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--pr-csv", help="write the aggregate precision-recall curve")
    p.add_argument("--pr-steps", type=int, default=21)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("magnify", help="amplify background blur")
    common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--factor", type=float, default=2.0)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_magnify)

    p = sub.add_parser("demo", help="self-contained synthetic end-to-end run")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
