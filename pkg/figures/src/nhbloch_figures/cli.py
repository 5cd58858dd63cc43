"""Entry points: one script per figure kind plus make-figures, which
renders every spec shipped under specs/."""

import argparse
import json
import os
import sys

from .render import render
from .schemas import SchemaError

PACKAGE_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(
    os.path.abspath(__file__))))
DEFAULT_SPEC_DIR = os.path.join(PACKAGE_ROOT, "specs")


def _run_one(kind: str, argv=None) -> int:
    parser = argparse.ArgumentParser(prog=f"nhbloch-fig-{kind}")
    parser.add_argument("--spec", required=True)
    args = parser.parse_args(argv)
    try:
        with open(args.spec) as fh:
            spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot load spec: {exc}", file=sys.stderr)
        return 2
    if spec.get("kind") != kind:
        print(f"spec kind {spec.get('kind')!r} does not match this script "
              f"({kind})", file=sys.stderr)
        return 2
    try:
        out = render(spec, base_dir=os.path.dirname(
            os.path.abspath(args.spec)))
    except SchemaError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


def surface3d_entry():
    sys.exit(_run_one("surface3d"))


def complex_plane_entry():
    sys.exit(_run_one("complex_plane"))


def sweep_curve_entry():
    sys.exit(_run_one("sweep_curve"))


def make_figures(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nhbloch-make-figures")
    parser.add_argument("--specs", default=DEFAULT_SPEC_DIR)
    parser.add_argument("--out", default=None,
                        help="override output directory for all figures")
    args = parser.parse_args(argv)
    spec_paths = sorted(
        os.path.join(args.specs, name)
        for name in os.listdir(args.specs) if name.endswith(".json"))
    if not spec_paths:
        print(f"no specs found in {args.specs}", file=sys.stderr)
        return 2
    failures = 0
    for path in spec_paths:
        try:
            with open(path) as fh:
                spec = json.load(fh)
            if args.out is not None:
                spec["out"] = os.path.join(
                    args.out, os.path.basename(spec["out"]))
            out = render(spec, base_dir=os.path.dirname(
                os.path.abspath(path)))
            print(f"{os.path.basename(path)} -> {out}")
        except (OSError, json.JSONDecodeError, SchemaError) as exc:
            print(f"{os.path.basename(path)}: {exc}", file=sys.stderr)
            failures += 1
    return 1 if failures else 0


def make_figures_entry():
    sys.exit(make_figures())
