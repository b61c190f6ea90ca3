"""Command-line surface: augment, eval, preview, gen-phantom, validate.

Exit code 0 on success; on failure the typed error name is printed to
stderr and the exit code is nonzero. OCTAUG_LOG=debug turns on verbose
logging; no other behavior is environment-dependent.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import OctaugError
from .pipeline import (PipelineConfig, render_eval_text, run_augment, run_eval,
                       run_gen_phantom, run_preview)
from .storage import validate_dataset

log = logging.getLogger("octaug")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="octaug", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", help="run a config-driven augmentation pass")
    p.add_argument("--config", required=True, help="pipeline config JSON")

    p = sub.add_parser("eval", help="MAD table between two datasets")
    p.add_argument("--pred", required=True, help="prediction dataset directory")
    p.add_argument("--gt", required=True, help="ground-truth dataset directory")
    p.add_argument("--resolution", required=True, type=float, help="axial um per pixel")
    p.add_argument("--out", default=None, help="also write the report as JSON here")

    p = sub.add_parser("preview", help="before/after overlays for one augmentation")
    p.add_argument("--input", required=True, help="dataset directory")
    p.add_argument("--slice", required=True, type=int, help="0-based slice index")
    p.add_argument("--aug", required=True,
                   help="augment spec, e.g. 'fdda:a0=0,a1=1,a2=0', 'prlc', 'none'")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, help="output directory for the PNGs")
    p.add_argument("--subject", default=None, help="subject id (default: first in manifest)")

    p = sub.add_parser("gen-phantom", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True, help="phantom spec JSON")
    p.add_argument("--out", required=True, help="output dataset directory")

    p = sub.add_parser("validate", help="check a dataset against manifest and invariants")
    p.add_argument("dataset", help="dataset directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.DEBUG if os.environ.get("OCTAUG_LOG") == "debug" else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "augment":
            summary = run_augment(PipelineConfig.from_file(args.config))
            print(f"augmented {summary['samples']} samples x {summary['epochs']} epochs; "
                  f"log at {summary['log']}")
        elif args.command == "eval":
            report = run_eval(args.pred, args.gt, args.resolution, out_file=args.out)
            print(render_eval_text(report))
        elif args.command == "preview":
            before, after = run_preview(args.input, args.slice, args.aug, args.seed,
                                        args.out, subject=args.subject)
            print(f"wrote {before} and {after}")
        elif args.command == "gen-phantom":
            summary = run_gen_phantom(args.spec, args.out)
            print(f"wrote {summary['subjects']} subjects to {summary['out']}")
        elif args.command == "validate":
            problems = validate_dataset(args.dataset)
            for line in problems:
                print(line)
            if problems:
                print(f"{len(problems)} problem(s) found", file=sys.stderr)
                return 1
            print("dataset is consistent")
    except OctaugError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
