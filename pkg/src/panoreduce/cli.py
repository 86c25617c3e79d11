"""Command line entry point.

Exit codes: 0 ok, 2 config error, 3 stage failure, 4 detector protocol failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import formats
from .config import FIXTURES, read_config
from .errors import DetectorError, FormatError, PanoReduceError, SchemaError, StageError
from .mask import MaskParams, static_baseline_mask

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_DETECTOR = 4

log = logging.getLogger("panoreduce")


def _cmd_run(args) -> int:
    from .pipeline import run

    try:
        cfg = read_config(args.config)
    except (SchemaError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run(cfg, seed=args.seed, out_dir=args.out)
    except DetectorError as exc:
        print(f"detector failure: {exc}", file=sys.stderr)
        return EXIT_DETECTOR
    except StageError as exc:
        if isinstance(exc.cause, DetectorError):
            print(f"detector failure in stage '{exc.stage}': {exc.cause}", file=sys.stderr)
            return EXIT_DETECTOR
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    m = result.metrics
    print(json.dumps({"coverage_fraction": m.coverage_fraction, "patch_count": m.patch_count,
                      "detections": m.detections_post_merge,
                      "out": os.path.abspath(args.out or cfg.outputs.dir)}))
    return EXIT_OK


def _cmd_render_fixture(args) -> int:
    from .scene import render_fixture

    if args.width != 2 * args.height:
        print("error: --width must equal 2 * --height", file=sys.stderr)
        return EXIT_CONFIG
    scene = render_fixture(args.name, args.width, args.height,
                           noise_sigma=args.noise_sigma, noise_seed=args.noise_seed)
    os.makedirs(args.out, exist_ok=True)
    formats.write_panorama(scene.panorama, os.path.join(args.out, "rgb.ppm"),
                           os.path.join(args.out, "depth.pfm"))
    scene.write_truth(os.path.join(args.out, "truth.json"))
    from .records import write_scene
    write_scene(scene.spec, os.path.join(args.out, "scene.json"))
    print(os.path.abspath(args.out))
    return EXIT_OK


def _cmd_compare(args) -> int:
    from .pipeline import compare_baseline

    try:
        a = formats.read_mask(args.a)
        b = formats.read_mask(args.b)
        report, diff = compare_baseline(a, b)
    except (FormatError, OSError, PanoReduceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        formats.write_pgm(diff, os.path.join(args.out, "diff.pgm"))
        from .report import baseline_figure
        baseline_figure(a, b, report, os.path.join(args.out, "compare.png"))
        with open(os.path.join(args.out, "compare.json"), "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2)
            f.write("\n")
    print(json.dumps(report))
    return EXIT_OK


def _cmd_baseline_mask(args) -> int:
    if args.width != 2 * args.height:
        print("error: --width must equal 2 * --height", file=sys.stderr)
        return EXIT_CONFIG
    mask = static_baseline_mask((args.width, args.height), args.fraction, args.ego_cutoff_deg)
    formats.write_mask(mask, args.out)
    print(os.path.abspath(args.out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="panoreduce",
                                     description="LiDAR-guided detection search-space reduction")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override ransac.seed")
    p.add_argument("--out", default=None, help="override outputs.dir")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("render-fixture", help="render a synthetic RGB-D fixture to disk")
    p.add_argument("--name", required=True, choices=FIXTURES)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=4096)
    p.add_argument("--height", type=int, default=2048)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--noise-seed", type=int, default=0)
    p.set_defaults(func=_cmd_render_fixture)

    p = sub.add_parser("compare-baseline", help="compare the coverage of two masks")
    p.add_argument("--a", required=True, help="baseline mask (P5)")
    p.add_argument("--b", required=True, help="mask to compare (P5)")
    p.add_argument("--out", default=None, help="directory for diff.pgm, compare.json, compare.png")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("baseline-mask", help="write the static band mask used as a baseline")
    p.add_argument("--width", type=int, default=4096)
    p.add_argument("--height", type=int, default=2048)
    p.add_argument("--fraction", type=float, default=0.66)
    p.add_argument("--ego-cutoff-deg", type=float, default=MaskParams.ego_cutoff_deg)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline_mask)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
