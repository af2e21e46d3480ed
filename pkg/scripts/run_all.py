"""Run every config in scripts/configs (image experiments only when their data is present).

    python3 scripts/run_all.py [--jobs N] [--only sine invariance ...]
"""
import argparse
import json
import os
import sys
from pathlib import Path

from depth_ntk.cli import run

HERE = Path(__file__).resolve().parent


def data_available(doc):
    data = doc.get("data", {})
    paths = [data[k] for k in ("images", "labels") if k in data] + list(data.get("batches", []))
    root = Path(os.environ.get("DEPTH_NTK_DATA", "."))
    return all((root / p).exists() for p in paths)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--only", nargs="*", default=None, help="config stems to run")
    args = parser.parse_args()
    failures = 0
    for cfg in sorted((HERE / "configs").glob("*.json")):
        if args.only and cfg.stem not in args.only:
            continue
        doc = json.loads(cfg.read_text())
        if not data_available(doc):
            print(f"skip {cfg.stem}: dataset files not found (set DEPTH_NTK_DATA)")
            continue
        print(f"== {cfg.stem}")
        code = run(str(cfg), jobs=args.jobs)
        failures += code != 0
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
