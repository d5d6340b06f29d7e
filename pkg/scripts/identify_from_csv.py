"""Fit mHAVOK to measured quadratures and print the identified mode spectrum.

The CSV needs a header ``t,<channel>,...`` on a uniform time grid.

Usage: python scripts/identify_from_csv.py data.csv [--m 100] [--tau 0.95] [--r auto|N]
"""
import argparse
import sys

from qkoopman import mhavok, spectral
from qkoopman.quantum_sim import MultichannelSeries


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv")
    parser.add_argument("--m", type=int, default=100)
    parser.add_argument("--tau", type=float, default=0.95)
    parser.add_argument("--r", default="auto")
    parser.add_argument("--r-max", type=int, default=30)
    args = parser.parse_args(argv)
    series = MultichannelSeries.from_csv(args.csv)
    prepared = mhavok._prepare(series, args.m)
    if args.r == "auto":
        r, _ = mhavok.select_optimal_rank(series, args.m, args.tau, args.r_max, _prepared=prepared)
    else:
        r = int(args.r)
    model, _ = mhavok.fit_mhavok(series, args.m, args.tau, r, _prepared=prepared)
    print(f"r={r}, linear modes={len(model.linear)}, forcing modes={len(model.forcing)}")
    print(f"{'frequency':>12} {'decay':>12} {'amplitude':>12}")
    for mode in sorted(spectral.model_spectrum(model).modes, key=lambda m: -m.amplitude):
        print(f"{mode.frequency:12.6f} {mode.decay:12.6f} {mode.amplitude:12.4g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
