"""Regenerate every figure and table data set into one directory.

Usage: python scripts/reproduce_all.py [--out results] [--only fig3 fig5] [--threads N]
"""
import argparse
import sys
import time
from pathlib import Path

from qkoopman.reproduce import TARGETS, reproduce


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results")
    parser.add_argument("--only", nargs="*", choices=sorted(TARGETS))
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)
    status = 0
    for target in args.only or list(TARGETS):
        tick = time.perf_counter()
        records, failures = reproduce(target, Path(args.out) / target, args.threads)
        ok = sum(r.ok for r in records)
        print(f"{target}: {ok}/{len(records)} runs ok, "
              f"{len(failures)} unexpected failures, {time.perf_counter() - tick:.0f} s")
        for rec in failures:
            print(f"  {rec.config['name']}: {rec.error}")
        status = status or (1 if failures else 0)
    return status


if __name__ == "__main__":
    sys.exit(main())
