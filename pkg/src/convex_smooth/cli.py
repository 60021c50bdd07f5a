"""Command line driver.

Usage::

    convex-smooth run spec.json [--grid-scale K] [--seed N] [--out DIR] [--strict]

Exit status: 0 when every certificate passes, 1 when some certificate fails,
2 for a malformed run document, 3 when a pipeline raises, 4 for I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from .dsl import load_json
from .errors import ConvexSmoothError, SpecParse
from .runner import parse_run_spec, run_spec

EXIT_OK, EXIT_FAILED, EXIT_SPEC, EXIT_PIPELINE, EXIT_IO = 0, 1, 2, 3, 4


def _fmt(v):
    return format(float(v), ".17g")


def write_samples(path, columns):
    names = list(columns)
    n = len(columns[names[0]])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(n):
            w.writerow([_fmt(columns[c][i]) for c in names])


def build_parser():
    p = argparse.ArgumentParser(prog="convex-smooth",
                                description="Smooth convex approximation pipelines with certificates.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the pipeline described by a JSON run document")
    r.add_argument("spec", help="path to the run document")
    r.add_argument("--grid-scale", type=float, default=1.0,
                   help="multiply the sample grid resolution by this factor")
    r.add_argument("--seed", type=int, default=None, help="override the document seed")
    r.add_argument("--out", default=None, help="output directory (default: document 'out' or '.')")
    r.add_argument("--strict", action="store_true", help="treat tolerance warnings as failures")
    return p


def run(args, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        with open(args.spec) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read {args.spec}: {exc}", file=stderr)
        return EXIT_IO
    try:
        doc = load_json(text)
        spec = parse_run_spec(doc, grid_scale=args.grid_scale, seed=args.seed)
    except SpecParse as exc:
        print(f"SpecParse: {exc}", file=stderr)
        return EXIT_SPEC
    try:
        result = run_spec(spec, strict=args.strict)
    except SpecParse as exc:
        print(f"SpecParse: {exc}", file=stderr)
        return EXIT_SPEC
    except ConvexSmoothError as exc:
        stage = getattr(exc, "stage", None)
        where = f" (stage {stage})" if stage is not None else ""
        print(f"{type(exc).__name__}{where}: {exc}", file=stderr)
        return EXIT_PIPELINE
    out = args.out or spec.out or "."
    try:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "report.json"), "w") as fh:
            fh.write(result.report.to_json() + "\n")
        write_samples(os.path.join(out, "samples.csv"), result.columns)
    except OSError as exc:
        print(f"error: cannot write outputs to {out}: {exc}", file=stderr)
        return EXIT_IO
    failed = [c for c in result.report.certificates if not c.passed]
    status = "passed" if result.passed else "FAILED"
    print(f"{spec.pipeline}: {status} ({len(result.report.certificates) - len(failed)}/"
          f"{len(result.report.certificates)} certificates) -> {out}", file=stdout)
    for c in failed:
        print(f"  failed: {c.region}: measured {c.measured:.6g} > bound {c.bound:.6g}", file=stdout)
    return EXIT_OK if result.passed else EXIT_FAILED


def main(argv=None):
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
