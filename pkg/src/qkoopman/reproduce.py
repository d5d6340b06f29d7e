"""Canned experiment sets that regenerate the figure and table data as CSV.

Every target writes plot-ready CSVs plus one record directory per run into
the output directory. Targets return the records and the names of runs whose
failure is the documented outcome (so they do not count as failures).
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Callable

import numpy as np

from .harness import (ExperimentConfig, ResultRecord, SweepSpec, run_experiment, run_many,
                      summary_rows, write_csv)

KAPPA_GRID = [round(0.1 * k, 10) for k in range(1, 16)]
KERR_GRID = [(round(2 + 0.3 * n, 10), round(3 + 0.2 * n, 10)) for n in range(11)]
CROSS_KERR_VALUES = [0.05, 0.10, 0.15, 0.20, 0.25]
JC_CASES = [(0.15, 2 * math.pi), (0.15, math.pi / math.e), (0.25, 2 * math.pi), (0.5, 2 * math.pi)]
MODULATION_DELTAS = [4.0, 10.0]
OMEGA_F = math.pi / math.e


def _with_reconstruction(config: ExperimentConfig, out: Path, stem: str) -> ResultRecord:
    """Run one config and write its input and reconstructed channels side by side."""
    art: dict = {}
    record = run_experiment(config, out, artifacts=art)
    if "reconstruction" in art:
        series, recon = art["series"], art["reconstruction"]
        cols = recon.observables.shape[1]
        rows = []
        times = series.times[:cols]
        for k in range(cols):
            row = {"t": times[k]}
            for i, name in enumerate(series.names):
                row[name] = series.channels[name][k]
                row[f"{name}_hat"] = recon.observables[i, k]
            rows.append(row)
        write_csv(rows, out / f"{stem}.csv")
    return record


def fig2(out: Path, threads: int = 1):
    """Open two-mode oscillator at weak damping: input vs reconstruction."""
    return [_with_reconstruction(ExperimentConfig(system="qho", name="fig2_qho"), out, "fig2")], []


def fig3(out: Path, threads: int = 1):
    """Frequency error against damping for mHAVOK, FFT and matrix pencil."""
    sweep = SweepSpec("kappa", KAPPA_GRID)
    records = run_many(sweep.configs(ExperimentConfig(system="qho", name="fig3")), out, threads)
    rows = []
    for kappa, rec in zip(KAPPA_GRID, records):
        errs = rec.percent_errors()
        base = rec.baselines
        rows.append({"kappa": kappa,
                     "err_mhavok": errs.get("omega_x"),
                     "err_fft": base.get("fft", {}).get("percent_error"),
                     "err_pencil": base.get("pencil", {}).get("percent_error")})
    write_csv(rows, out / "fig3.csv", ["kappa", "err_mhavok", "err_fft", "err_pencil"])
    write_csv(summary_rows(records, sweep), out / "fig3_summary.csv")
    return records, []


def _kerr_row(rec: ResultRecord, **extra) -> dict:
    row = dict(extra)
    row.update({"status": rec.status, "r_used": rec.r_used, "r_opt": rec.r_opt,
                "n_linear": rec.n_linear, "n_forcing": rec.n_forcing})
    for key in ("omega_x", "omega_y", "chi_x", "chi_y"):
        row[f"hat_{key}"] = rec.retrieved().get(key)
        row[f"err_{key}"] = rec.percent_errors().get(key)
    row["error"] = rec.error or ""
    return row


def fig4(out: Path, threads: int = 1):
    """Open Kerr oscillators, chi = (2, 3) and (5, 5)."""
    records, rows = [], []
    for chi_x, chi_y in ((2.0, 3.0), (5.0, 5.0)):
        stem = f"fig4_chi{chi_x:g}_{chi_y:g}"
        cfg = ExperimentConfig(system="kerr", name=stem, chi_x=chi_x, chi_y=chi_y)
        rec = _with_reconstruction(cfg, out, stem)
        records.append(rec)
        rows.append(_kerr_row(rec, chi_x=chi_x, chi_y=chi_y))
    write_csv(rows, out / "fig4.csv")
    return records, []


def fig5(out: Path, threads: int = 1):
    """Kerr grid chi_x = 2 + 0.3 n, chi_y = 3 + 0.2 n with per-point rank selection."""
    sweep = SweepSpec(("chi_x", "chi_y"), KERR_GRID)
    records = run_many(sweep.configs(ExperimentConfig(system="kerr", name="fig5")), out, threads)
    rows = [_kerr_row(rec, n=n, chi_x=cx, chi_y=cy)
            for n, ((cx, cy), rec) in enumerate(zip(KERR_GRID, records))]
    write_csv(rows, out / "fig5.csv")
    return records, []


def fig6(out: Path, threads: int = 1, near_offset: int = -2):
    """Closed Kerr oscillator chi = (5, 5) at the selected rank and a nearby one."""
    base = ExperimentConfig(system="kerr_closed", name="fig6_opt", kappa=0.0, chi_x=5.0,
                            chi_y=5.0)
    first = _with_reconstruction(base, out, "fig6_opt")
    records = [first]
    if first.r_used is not None:
        near = max(1, first.r_used + near_offset)
        cfg = base.replace(name="fig6_near", r=near)
        records.append(_with_reconstruction(cfg, out, "fig6_near"))
    rows = []
    for rec in records:
        row = _kerr_row(rec, case=rec.config["name"])
        for name, err in sorted(rec.reconstruction.items()):
            row[f"recon_rel_rms_{name}"] = err
        rows.append(row)
    write_csv(rows, out / "fig6.csv")
    return records, []


def fig7(out: Path, threads: int = 1):
    """Jaynes-Cummings coupling retrieval; the first case also writes its reconstruction."""
    records, rows = [], []
    for i, (g, omega_q) in enumerate(JC_CASES):
        name = f"fig7_g{g:g}_wq{omega_q:.4f}"
        cfg = ExperimentConfig(system="jaynes_cummings", name=name, g=g, omega_q=omega_q,
                               baseline_channel="x")
        rec = _with_reconstruction(cfg, out, "fig7") if i == 0 else run_experiment(cfg, out)
        records.append(rec)
        rows.append({"g": g, "omega_q": omega_q, "status": rec.status, "r_used": rec.r_used,
                     "r_opt": rec.r_opt, "n_forcing": rec.n_forcing,
                     "g_hat": rec.retrieved().get("g"), "err_g": rec.percent_errors().get("g"),
                     "error": rec.error or ""})
    write_csv(rows, out / "fig7_summary.csv")
    return records, []


def fig8(out: Path, threads: int = 1):
    """Parametric modulation: spectrum of A and the sideband-comb fit."""
    records, rows, spec_rows = [], [], []
    expected = []
    for delta in MODULATION_DELTAS:
        name = f"fig8_delta{delta:g}"
        cfg = ExperimentConfig(system="modulated", name=name, delta=delta, omega_f=OMEGA_F)
        art: dict = {}
        rec = run_experiment(cfg, out, artifacts=art)
        records.append(rec)
        if delta >= 10:
            expected.append(name)
        spectrum = art.get("spectrum")
        if spectrum is not None:
            ev = spectrum.eigenvalues
            for i in np.lexsort((ev.real, ev.imag)):
                spec_rows.append({"delta": delta, "r_used": rec.r_used, "re": ev[i].real,
                                  "im": ev[i].imag})
        rows.append({"delta": delta, "omega_f": OMEGA_F, "status": rec.status,
                     "r_used": rec.r_used, "r_opt": rec.r_opt,
                     "omega_f_hat": rec.retrieved().get("omega_f"),
                     "err_omega_f": rec.percent_errors().get("omega_f"),
                     "error": rec.error or ""})
    write_csv(spec_rows, out / "fig8.csv", ["delta", "r_used", "re", "im"])
    write_csv(rows, out / "fig8_summary.csv")
    return records, expected


def table2(out: Path, threads: int = 1):
    """Cross-Kerr coupling: predicted against actual."""
    sweep = SweepSpec("chi_xy", CROSS_KERR_VALUES)
    records = run_many(sweep.configs(ExperimentConfig(system="cross_kerr", name="table2")),
                       out, threads)
    rows = []
    for chi, rec in zip(CROSS_KERR_VALUES, records):
        hat = rec.retrieved().get("chi_xy")
        rows.append({"chi_xy": chi, "chi_xy_hat": hat,
                     "abs_error": None if hat is None else abs(hat - chi),
                     "status": rec.status, "r_used": rec.r_used, "error": rec.error or ""})
    write_csv(rows, out / "table2.csv")
    return records, []


TARGETS: dict[str, Callable] = {
    "fig2": fig2, "fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6, "fig7": fig7,
    "fig8": fig8, "table2": table2,
}


def reproduce(target: str, out_dir, threads: int = 1):
    """Run one canned target; returns (records, unexpected_failures)."""
    if target not in TARGETS:
        raise KeyError(target)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, expected = TARGETS[target](out, threads)
    failures = [r for r in records if not r.ok and r.config.get("name") not in expected]
    return records, failures
