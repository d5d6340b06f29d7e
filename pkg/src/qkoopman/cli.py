"""Command-line entry point.

Exit codes: 0 success, 1 some runs failed, 2 configuration or usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, mhavok, spectral
from .errors import ConfigError, QKoopmanError
from .quantum_sim import MultichannelSeries
from .reproduce import TARGETS, reproduce

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


def _rank(value: str):
    if value == "auto":
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"rank must be an integer or 'auto', got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkoopman", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a config and write the observable channels")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="fit mHAVOK to a CSV of channels (header t,<names>)")
    p.add_argument("csv")
    p.add_argument("--out", required=True)
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--tau", type=float, default=0.95)
    p.add_argument("--r", type=_rank, default="auto")
    p.add_argument("--r-max", type=int, default=30)

    p = sub.add_parser("identify", help="full pipeline for one config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    p.add_argument("--config", required=True,
                   help="base config JSON, or a JSON object with 'base' and 'sweep' keys")
    p.add_argument("--sweep", help="sweep spec JSON (parameter, values | start/stop/num)")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("reproduce", help="regenerate a figure or table data set")
    p.add_argument("target", choices=sorted(TARGETS))
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    return parser


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _report(records, failures) -> int:
    for rec in records:
        name = rec.config.get("name") or rec.config["system"]
        print(f"{name}: {rec.status}" + (f" ({rec.error})" if rec.error else ""))
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_simulate(args) -> int:
    config = harness.ExperimentConfig.from_json(args.config)
    series, _ = harness.simulate(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    series.to_csv(out / "series.csv")
    print(out / "series.csv")
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        series = MultichannelSeries.from_csv(args.csv)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.csv}: {exc}") from exc
    prepared = mhavok._prepare(series, args.m)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    r = args.r
    if r == "auto":
        r, table = mhavok.select_optimal_rank(series, args.m, args.tau, args.r_max,
                                              _prepared=prepared)
        harness.write_csv(table, out / "rank_sweep.csv",
                          ["r", "n_linear", "n_forcing", "condition_number"])
    model, recon = mhavok.fit_mhavok(series, args.m, args.tau, r, _prepared=prepared)
    model.to_json(out / "model.json")
    recon.to_series(series.names, series.dt, series.t0).to_csv(out / "reconstruction.csv")
    spectrum = spectral.model_spectrum(model)
    rows = [{"frequency": m.frequency, "decay": m.decay, "amplitude": m.amplitude,
             "paired": m.paired} for m in spectrum.modes]
    harness.write_csv(rows, out / "modes.csv", ["frequency", "decay", "amplitude", "paired"])
    print(f"r={r} linear={len(model.linear)} forcing={len(model.forcing)}")
    return EXIT_OK


def cmd_identify(args) -> int:
    config = harness.ExperimentConfig.from_json(args.config)
    record = harness.run_experiment(config, args.out)
    return _report([record], [] if record.ok else [record])


def cmd_sweep(args) -> int:
    data = _load_json(args.config)
    if args.sweep:
        base, sweep_data = data, _load_json(args.sweep)
    elif {"base", "sweep"} <= set(data):
        base, sweep_data = data["base"], data["sweep"]
    else:
        raise ConfigError("give --sweep or a config with 'base' and 'sweep' keys")
    base_cfg = harness.ExperimentConfig.from_dict(base)
    sweep = harness.SweepSpec.from_dict(sweep_data)
    records, _ = harness.run_sweep(base_cfg, sweep, args.out, args.threads)
    return _report(records, [r for r in records if not r.ok])


def cmd_reproduce(args) -> int:
    records, failures = reproduce(args.target, args.out, args.threads)
    return _report(records, failures)


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "identify": cmd_identify,
            "sweep": cmd_sweep, "reproduce": cmd_reproduce}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QKoopmanError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
