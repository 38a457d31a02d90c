"""Command-line entry point: ``partcrf <subcommand> ...``.

Dataset directories hold one item per stem ``NAME``: ``NAME.png`` (image),
``NAME.unary`` (unary tensor), ``NAME.gt.png`` (ground-truth label map) and
optionally ``NAME.sp`` (superpixel map). Tabular results go to stdout as
tab-separated text; ``--plot`` writes a matching figure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .evaluation import evaluate_iou
from .grid import FormatError, InvalidParameterError, LabelSet
from .inference import InferenceConfig, run_inference
from .relations import DEFAULT_PROPORTION_THRESHOLD, learn_relations, load_relations, save_relations
from .superpixels import generate_superpixels, load_superpixels

log = logging.getLogger("partcrf")


class CommandError(Exception):
    pass


def _labels(path, n_labels: int | None = None) -> LabelSet:
    """Label names from ``path``, or the ids themselves when no file is given."""
    if path is not None:
        labels = io.load_labelset(path)
        if n_labels is not None and labels.count != n_labels:
            raise CommandError(f"{path} names {labels.count} labels, the data has {n_labels}")
        return labels
    if n_labels is None:
        raise CommandError("--labels is required here")
    return LabelSet(tuple(str(k) for k in range(n_labels)))


def _stems(directory, suffix: str) -> list[str]:
    d = Path(directory)
    if not d.is_dir():
        raise CommandError(f"{d} is not a directory")
    stems = sorted(p.name[: -len(suffix)] for p in d.glob("*" + suffix))
    if not stems:
        raise CommandError(f"no *{suffix} files in {d}")
    return stems


def _superpixels_for(directory: Path, stem: str, image, cfg: InferenceConfig):
    sp_path = directory / f"{stem}.sp"
    if sp_path.exists():
        return load_superpixels(sp_path)
    if image is None:
        return None
    return generate_superpixels(image, cfg.superpixel_count, cfg.superpixel_compactness)


# --- subcommands ----------------------------------------------------------------

def cmd_infer(args) -> int:
    unary, h, w = io.load_unary(args.unary)
    image = io.load_image(args.image)
    if (image.height, image.width) != (h, w):
        raise CommandError(f"image is {image.height}x{image.width}, unary is {h}x{w}")
    cfg = io.load_config(args.config) if args.config else InferenceConfig()
    labels = _labels(args.labels, unary.shape[1])
    table = load_relations(args.relations, labels) if args.relations else None
    sp = load_superpixels(args.superpixels) if args.superpixels else None
    _, pred, trace = run_inference(unary, image, sp, table, cfg)
    io.save_labelmap(pred, args.out, (h, w))
    if args.trace:
        Path(args.trace).write_text(trace.to_text())
    if args.plot:
        from .plotting import plot_trace
        plot_trace(trace, args.plot)
    last = trace.records[-1]
    print(f"iterations\t{last.iteration}\nmax_delta\t{last.max_delta!r}\nenergy\t{last.energy!r}")
    return 0


def cmd_learn_relations(args) -> int:
    labels = io.load_labelset(args.labels)
    gt_dir = Path(args.gt_dir)
    cfg = io.load_config(args.config) if args.config else InferenceConfig()
    dataset = []
    for stem in _stems(gt_dir, ".gt.png"):
        gt = io.load_labelmap(gt_dir / f"{stem}.gt.png", labels.count)
        img_path = gt_dir / f"{stem}.png"
        image = io.load_image(img_path) if img_path.exists() else None
        sp = _superpixels_for(gt_dir, stem, image, cfg)
        if sp is None:
            raise CommandError(f"{stem}: need {stem}.sp or {stem}.png to build superpixels")
        if (sp.height, sp.width) != gt.shape:
            raise CommandError(f"{stem}: superpixels and ground truth differ in size")
        dataset.append((gt.ravel(), sp))
    table = learn_relations(dataset, labels, args.threshold, d=args.d, w_high=args.w_high)
    save_relations(table, labels, args.out)
    names = labels.names
    for a, b in sorted(table.containment):
        print(f"containment\t{names[a]}\t{names[b]}")
    for a, b in sorted(table.attachment):
        print(f"attachment\t{names[a]}\t{names[b]}")
    return 0


def cmd_eval(args) -> int:
    pred = io.load_labelmap(args.pred)
    gt = io.load_labelmap(args.gt)
    if pred.shape != gt.shape:
        raise CommandError(f"prediction is {pred.shape[0]}x{pred.shape[1]}, ground truth is {gt.shape[0]}x{gt.shape[1]}")
    labels = io.load_labelset(args.labels)
    report = evaluate_iou(pred, gt, labels)
    sys.stdout.write(report.to_text())
    if args.plot:
        from .plotting import plot_iou
        plot_iou(report, args.plot)
    return 0


def _validation_set(directory, cfg: InferenceConfig):
    from .sweep import ValidationItem

    d = Path(directory)
    items = []
    for stem in _stems(d, ".gt.png"):
        unary, h, w = io.load_unary(d / f"{stem}.unary")
        image = io.load_image(d / f"{stem}.png")
        gt = io.load_labelmap(d / f"{stem}.gt.png", unary.shape[1])
        if gt.shape != (h, w) or (image.height, image.width) != (h, w):
            raise CommandError(f"{stem}: image, unary and ground truth sizes differ")
        needs_sp = any(cfg.term_weights[t] > 0 for t in ("superpixel", "containment", "attachment"))
        sp = _superpixels_for(d, stem, image, cfg) if needs_sp or (d / f"{stem}.sp").exists() else None
        items.append(ValidationItem(stem, unary, image, gt.ravel(), sp))
    return items


def cmd_sweep(args) -> int:
    from .sweep import sweep

    cfg = io.load_config(args.config) if args.config else InferenceConfig()
    grid = io.load_grid(args.grid)
    # superpixels are needed whenever any grid point enables a superpixel-based term
    probe = cfg
    for point in grid:
        probe = InferenceConfig.from_flat({k: v for k, v in point.items() if k.startswith("weight_")}, probe)
    items = _validation_set(args.val_dir, probe)
    labels = _labels(args.labels, items[0].unary.shape[1])
    table = load_relations(args.relations, labels) if args.relations else None
    result = sweep(grid, items, labels, cfg, table, workers=args.workers)
    sys.stdout.write(result.to_text())
    if args.out:
        io.save_config(result.best.config, args.out)
    if args.plot:
        from .plotting import plot_sweep
        plot_sweep(result, args.plot)
    return 0


def cmd_verify(args) -> int:
    from .oracle import random_equivalence_check

    ok = True
    for r in random_equivalence_check(n_cliques=args.count, seed=args.seed):
        passed = r.passed(args.tol)
        ok &= passed
        print(f"{r.kind}\t{r.n_cliques}\t{r.n_checks}\t{r.max_abs_error:.3e}\t{'PASS' if passed else 'FAIL'}")
    return 0 if ok else 1


def cmd_visualize(args) -> int:
    labels = io.load_labelmap(args.labels)
    palette = io.load_palette(args.palette) if args.palette else io.default_palette(int(labels.max()) + 1)
    io.visualize(labels, palette, args.out)
    return 0


def cmd_demo(args) -> int:
    """Write a small synthetic dataset plus matching label, relation, config and palette files."""
    from .synthetic import SUITE_CONTAINMENT_WEIGHT, eye_in_head_scene, suite_config

    out = Path(args.out)
    data = out / "data"
    data.mkdir(parents=True, exist_ok=True)
    scene = None
    for seed in range(args.count):
        scene = eye_in_head_scene(seed)
        h, w = scene.shape
        stem = f"eye{seed:02d}"
        io.save_image(scene.image, data / f"{stem}.png")
        io.save_unary(scene.unary, h, w, data / f"{stem}.unary")
        io.save_labelmap(scene.gt, data / f"{stem}.gt.png", (h, w))
    io.save_labelset(scene.labels, out / "labels.txt")
    save_relations(scene.table, scene.labels, out / "relations.txt")
    io.save_config(suite_config(containment=SUITE_CONTAINMENT_WEIGHT), out / "config.txt")
    pal = io.default_palette(scene.labels.count)
    (out / "palette.txt").write_text("".join(f"{k} {r} {g} {b}\n" for k, (r, g, b) in pal.items()))
    (out / "grid.txt").write_text(f"weight_containment = 0.0, {SUITE_CONTAINMENT_WEIGHT!r}\n")
    print(f"wrote {args.count} scenes to {data}")
    return 0


# --- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="partcrf", description="Dense CRF part segmentation with relational potentials.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr (-vv for debug)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("infer", help="run mean-field inference on one image")
    s.add_argument("--unary", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--relations", help="relation table; omit to run without containment/attachment")
    s.add_argument("--config", help="key = value settings file")
    s.add_argument("--out", required=True, help="output label map (PNG)")
    s.add_argument("--trace", help="per-iteration trace (TSV)")
    s.add_argument("--superpixels", help="superpixel map; generated from the image when omitted")
    s.add_argument("--labels", help="label names, one per line; defaults to numeric ids")
    s.add_argument("--plot", help="write a convergence figure")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("learn-relations", help="learn containment/attachment pairs from ground truth")
    s.add_argument("--gt-dir", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--threshold", type=float, default=DEFAULT_PROPORTION_THRESHOLD)
    s.add_argument("--out", required=True)
    s.add_argument("--d", type=float, default=None, help="neighbour distance (default: mean superpixel width)")
    s.add_argument("--w-high", type=float, default=1.0)
    s.add_argument("--config", help="superpixel settings used when no NAME.sp file exists")
    s.set_defaults(func=cmd_learn_relations)

    s = sub.add_parser("eval", help="per-label IoU of a prediction")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--plot", help="write a per-label IoU bar chart")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="grid-search term weights on a validation directory")
    s.add_argument("--grid", required=True)
    s.add_argument("--val-dir", required=True)
    s.add_argument("--config", help="base settings the grid overrides")
    s.add_argument("--relations")
    s.add_argument("--labels")
    s.add_argument("--out", help="write the selected configuration")
    s.add_argument("--plot", help="write a score-per-grid-point figure")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", help="check closed-form messages against enumeration")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=1000, help="random cliques per potential")
    s.add_argument("--tol", type=float, default=1e-10)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("visualize", help="colour a label map")
    s.add_argument("--labels", required=True, help="label map (PNG)")
    s.add_argument("--palette", help="'id r g b' lines; defaults to a fixed palette")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_visualize)

    s = sub.add_parser("demo", help="write a synthetic example dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, default=3)
    s.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CommandError, FormatError, InvalidParameterError, OSError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"partcrf {args.command}: error: {msg}".replace("\n", " "), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
