"""Command-line entry point: ``removal-synth <command> ...``.

Exit codes: 0 success, 1 I/O problem (missing or unreadable path), 2 domain
failure (exhausted corpus, unpaired eval files, failed validation, bad config).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .annotations import load_annotations, load_instances
from .config import ENHANCEMENT_TYPES, EnhancementParams, load_config
from .enhance import EnhancementSpec, enhance_mask
from .exceptions import RemovalSynthError
from .filtering import InstanceFilter
from .metrics import evaluate_directory
from .pipeline import CopyPasteSynthesizer, build_dataset, build_val_split, load_corpora, validate_dataset
from .raster import read_png, write_png
from .toy import make_toy_corpus

EXIT_OK, EXIT_IO, EXIT_DOMAIN = 0, 1, 2

log = logging.getLogger("removal_synth")


def _require(*paths):
    for p in paths:
        if not os.path.exists(p):
            raise FileNotFoundError(f"no such file or directory: {p}")


def _config(args):
    if args.config is not None:
        _require(args.config)
    overrides = {
        "global_seed": args.seed,
        "iou_threshold": args.iou_threshold,
        "iou_mode": args.iou_mode,
        "trimap_band_px": args.band,
    }
    return load_config(args.config, overrides)


def _synth(args, cfg):
    _require(args.instances, args.backgrounds)
    insts, bgs, iset, bset = load_corpora(args.instances, args.backgrounds)
    dropped = iset.n_dropped + bset.n_dropped
    if dropped:
        log.warning("dropped %d malformed annotations", dropped)
    synth = CopyPasteSynthesizer(cfg).fit(insts, bgs)
    paths = {"instances": os.path.abspath(args.instances), "backgrounds": os.path.abspath(args.backgrounds)}
    return synth, paths


def _summary(manifest, elapsed):
    n = len(manifest.records)
    rate = n / elapsed if elapsed > 0 else float("inf")
    print(f"emitted {n}, skipped {len(manifest.skips)} in {elapsed:.2f}s ({rate:.1f} triplets/s)")


def cmd_build(args):
    cfg = _config(args)
    synth, paths = _synth(args, cfg)
    t0 = time.perf_counter()
    manifest = build_dataset(synth, args.count, args.out, workers=args.workers, corpus_paths=paths)
    _summary(manifest, time.perf_counter() - t0)
    return EXIT_OK


def cmd_build_val(args):
    cfg = _config(args)
    synth, paths = _synth(args, cfg)
    t0 = time.perf_counter()
    manifest = build_val_split(
        synth, args.count, args.out, dilate_px=args.dilate_px, workers=args.workers, corpus_paths=paths
    )
    _summary(manifest, time.perf_counter() - t0)
    return EXIT_OK


def cmd_enhance(args):
    _require(args.input)
    mask = read_png(args.input, mask=True)
    params = EnhancementParams()
    spec = EnhancementSpec.from_params(args.type, params, radius_px=args.dilate_px)
    if args.frac is not None:
        field = "erode_frac" if args.type == "eroded" else "dilate_frac"
        spec = EnhancementSpec(**{**spec.to_dict(), field: args.frac})
    out = enhance_mask(mask, spec, np.random.default_rng(args.seed))
    write_png(args.output, out)
    print(f"{args.type}: {int(mask.sum())} -> {int(out.sum())} pixels")
    return EXIT_OK


def cmd_eval(args):
    dirs = [args.results, args.gts] + ([args.masks] if args.masks else [])
    _require(*dirs)
    report = evaluate_directory(args.results, args.gts, args.masks)
    text = report.to_csv() if args.format == "csv" else report.to_jsonl()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args):
    _require(args.manifest)
    report = validate_dataset(args.manifest)
    for check, c in report.counts.items():
        print(f"{check:18s} passed {c['passed']:6d}  failed {c['failed']:6d}  skipped {c['skipped']:6d}")
    for f in report.failures:
        print(f"FAIL sample {f['sample_index']:08d} {f['check']}: {f['detail']}")
    return EXIT_OK if report.ok else EXIT_DOMAIN


def cmd_stats(args):
    _require(args.instances)
    cfg = load_config(args.config) if args.config else load_config()
    insts = load_instances(load_annotations(args.instances))
    filt = InstanceFilter.from_config(cfg).fit(insts)
    rows = []
    for label in sorted(filt.class_stats_):
        st = filt.class_stats_[label]
        rows.append(
            {"class": label, "count": st.count, "mu": st.mu, "sigma2": st.sigma2, "threshold": st.score_threshold}
        )
    lines = ["class\tcount\tmu\tsigma2\tthreshold"]
    lines += [f"{r['class']}\t{r['count']}\t{r['mu']:.6f}\t{r['sigma2']:.6g}\t{r['threshold']:.6f}" for r in rows]
    print("\n".join(lines))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"classes": rows, "rejected": len(filt.rejected_)}, fh, indent=2)
    return EXIT_OK


def cmd_make_toy(args):
    inst, bg = make_toy_corpus(args.out, seed=args.seed)
    print(f"instances: {inst}\nbackgrounds: {bg}")
    return EXIT_OK


def _build_args(p):
    p.add_argument("--config", help="TOML config (default: $REMOVAL_SYNTH_CONFIG)")
    p.add_argument("--instances", required=True, help="instance annotation JSON")
    p.add_argument("--backgrounds", required=True, help="background annotation JSON")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, help="global seed (overrides the config)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--iou-threshold", type=float)
    p.add_argument("--iou-mode", choices=("bbox", "mask"))
    p.add_argument("--band", type=int, help="trimap band half-width in pixels")


def make_parser():
    parser = argparse.ArgumentParser(prog="removal-synth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="synthesize a training set")
    _build_args(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("build-val", help="synthesize an evaluation split with exact masks")
    _build_args(p)
    p.add_argument("--dilate-px", type=int, help="dilation applied to evaluation masks")
    p.set_defaults(func=cmd_build_val)

    p = sub.add_parser("enhance", help="deform a mask PNG")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--type", choices=ENHANCEMENT_TYPES, default="dilated")
    p.add_argument("--frac", type=float, help="radius as a fraction of the shorter bbox side")
    p.add_argument("--dilate-px", type=int, help="fixed erode/dilate radius in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("eval", help="PSNR/SSIM of results against ground truths")
    p.add_argument("--results", required=True)
    p.add_argument("--gts", required=True)
    p.add_argument("--masks")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("validate", help="re-check a built dataset")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="per-class size statistics and score thresholds")
    p.add_argument("--instances", required=True)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("make-toy", help="write the synthetic demo corpus")
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_toy)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RemovalSynthError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
