"""Experiment configuration, single runs, sweeps and their persisted outputs.

A run goes simulate -> observable channels -> (rank sweep) -> mHAVOK fit ->
spectral retrieval -> baselines. Everything is deterministic; wall-clock
timings are kept out of the record body so records compare bit-identically.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import baselines, mhavok, quantum_sim as qs, spectral
from .errors import ConfigError, QKoopmanError

SYSTEMS = ("qho", "kerr", "cross_kerr", "jaynes_cummings", "modulated", "kerr_closed")

# channel order as fed to mHAVOK
OSCILLATOR_CHANNELS = ("x", "y", "p_x", "p_y")
JC_CHANNELS = ("x", "p_x", "y", "p_y", "re_sigma_plus", "im_sigma_plus")

TWO_PI = 2 * math.pi


@dataclass
class ExperimentConfig:
    """One pipeline run. Defaults reproduce the base simulation parameters.

    ``r`` is a cutoff rank or ``"auto"`` for the condition-number sweep up to
    ``r_max``. ``bath_model`` and ``ordering`` select the jump-operator model
    and operator ordering of the Hamiltonian (see ``quantum_sim``).
    """

    system: str = "qho"
    name: str = ""
    # physics
    omega_x: float = TWO_PI
    omega_y: float = math.pi
    kappa: float = 0.1
    temperature: float = 2.0
    phi: float = 0.0
    chi_x: float = 0.0
    chi_y: float = 0.0
    chi_xy: float = 0.0
    g: float = 0.15
    omega_q: float = TWO_PI
    gamma: float = 0.1
    gamma_phi: float = 0.01
    delta: float | None = None
    omega_f: float | None = None
    alpha: float = 1.0
    n_x: int = 10
    n_y: int = 10
    bath_model: str = "independent"
    ordering: str = "as_printed"
    # grid
    t_f: float = 50.0
    dt: float = 0.01
    substeps: int = 5
    # mHAVOK
    m: int = 100
    tau: float = 0.95
    r: int | str = "auto"
    r_max: int = 30
    # baselines
    baselines: bool = True
    baseline_channel: str = "x"
    pencil_order: int = 4
    fft_peaks: int = 1
    output_dir: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.system not in SYSTEMS:
            raise ConfigError(f"unknown system {self.system!r}; choose from {SYSTEMS}")
        if self.system == "modulated" and (self.delta is None or self.omega_f is None):
            raise ConfigError("modulated system needs both delta and omega_f")
        if self.system == "kerr_closed" and self.kappa != 0:
            raise ConfigError("kerr_closed is the closed system; kappa must be 0")
        if self.bath_model not in qs.BATH_MODELS:
            raise ConfigError(f"unknown bath_model {self.bath_model!r}")
        if self.ordering not in qs.ORDERINGS:
            raise ConfigError(f"unknown ordering {self.ordering!r}")
        if self.r != "auto" and not (isinstance(self.r, int) and self.r >= 1):
            raise ConfigError(f"r must be a positive integer or 'auto', got {self.r!r}")
        if self.dt <= 0 or self.t_f <= 0:
            raise ConfigError("t_f and dt must be positive")
        if not 0 < self.tau < 1:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if self.m < 2 or self.r_max < 1:
            raise ConfigError("need m >= 2 and r_max >= 1")
        if self.baseline_channel not in self.channels:
            raise ConfigError(f"baseline channel {self.baseline_channel!r} not among {self.channels}")

    @property
    def channels(self) -> tuple[str, ...]:
        return JC_CHANNELS if self.system == "jaynes_cummings" else OSCILLATOR_CHANNELS

    @property
    def label(self) -> str:
        return self.name or self.system

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "system" not in data:
            raise ConfigError("config must name a system")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class SweepSpec:
    """Values for one parameter, or a tuple of parameters varied together.

    ``overrides`` optionally holds one dict of extra config changes per point.
    """

    parameter: str | tuple[str, ...]
    values: list
    overrides: list[dict] | None = None

    def __post_init__(self):
        if isinstance(self.parameter, list):
            self.parameter = tuple(self.parameter)
        self.values = [tuple(v) if isinstance(v, list) else v for v in self.values]
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if self.overrides is not None and len(self.overrides) != len(self.values):
            raise ConfigError("overrides must match the number of sweep values")

    @classmethod
    def linspace(cls, parameter: str, start: float, stop: float, num: int) -> "SweepSpec":
        return cls(parameter, [float(v) for v in np.round(np.linspace(start, stop, num), 12)])

    def configs(self, base: ExperimentConfig) -> list[ExperimentConfig]:
        names = self.parameter if isinstance(self.parameter, tuple) else (self.parameter,)
        out = []
        for i, value in enumerate(self.values):
            vals = value if isinstance(value, tuple) else (value,)
            if len(vals) != len(names):
                raise ConfigError(f"sweep value {value!r} does not match parameters {names}")
            changes = dict(zip(names, vals))
            if self.overrides is not None:
                changes.update(self.overrides[i])
            tag = "_".join(f"{k}={_fmt(v)}" for k, v in zip(names, vals))
            changes.setdefault("name", f"{base.label}_{tag}")
            out.append(base.replace(**changes))
        return out

    def to_dict(self) -> dict:
        return {"parameter": self.parameter, "values": self.values, "overrides": self.overrides}

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        if "values" not in data and {"start", "stop", "num"} <= set(data):
            return cls.linspace(data["parameter"], data["start"], data["stop"], data["num"])
        try:
            return cls(data["parameter"], list(data["values"]), data.get("overrides"))
        except KeyError as exc:
            raise ConfigError(f"sweep spec is missing {exc}") from exc


def _fmt(v) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


@dataclass
class ResultRecord:
    config: dict
    status: str = "ok"
    error: str | None = None
    r_used: int | None = None
    r_opt: int | None = None
    rank_table: list[dict] = field(default_factory=list)
    n_linear: int | None = None
    n_forcing: int | None = None
    report: dict | None = None
    baselines: dict = field(default_factory=dict)
    reconstruction: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def percent_errors(self) -> dict[str, float]:
        return dict((self.report or {}).get("percent_errors", {}))

    def retrieved(self) -> dict[str, float]:
        return dict((self.report or {}).get("retrieved", {}))

    def to_dict(self, timings: bool = False) -> dict:
        data = dataclasses.asdict(self)
        if not timings:
            data.pop("timings")
        return data

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(_jsonable(self.to_dict()), indent=1, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path) -> "ResultRecord":
        return cls(**json.loads(Path(path).read_text()))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


# -- simulation ---------------------------------------------------------------

def build_model(config: ExperimentConfig) -> tuple[qs.LindbladModel, np.ndarray]:
    """Lindblad model and initial state for a config."""
    c = config
    spec = qs.HilbertSpec(c.n_x, c.n_y, qubit=c.system == "jaynes_cummings")
    h = qs.build_qho_hamiltonian(c.omega_x, c.omega_y, spec, c.ordering)
    if c.system in ("kerr", "cross_kerr", "kerr_closed") or c.chi_x or c.chi_y or c.chi_xy:
        h = h + qs.build_kerr_hamiltonian(c.chi_x, c.chi_y, c.chi_xy, spec, c.ordering)
    qubit_rates = None
    if c.system == "jaynes_cummings":
        h = h + qs.build_jc_hamiltonian(c.omega_q, c.g, spec)
        qubit_rates = (c.gamma, c.gamma_phi)
    drive = None
    if c.system == "modulated":
        drive = qs.build_modulation_drive(c.delta, c.omega_f, spec)
    bath = qs.BathSpec(c.temperature, c.kappa, c.phi)
    jumps = qs.build_jump_operators(bath, c.omega_x, c.omega_y, spec, qubit_rates, c.bath_model)
    model = qs.LindbladModel(h, jumps, drive, spec)
    rho0 = qs.coherent_state(c.alpha, spec)
    return model, rho0


def simulate(config: ExperimentConfig) -> tuple[qs.MultichannelSeries, qs.Trajectory]:
    """Integrate the master equation and return the mHAVOK input channels."""
    model, rho0 = build_model(config)
    ops = qs.operators(model.spec)
    names = ["x", "y", "p_x", "p_y", "n_x", "n_y", "a_x"]
    if model.spec.qubit:
        names.append("sigma_plus")
    traj = qs.evolve_lindblad(model, rho0, config.t_f, config.dt, substeps=config.substeps,
                              e_ops={k: ops[k] for k in names})
    return channels_from(traj, config.channels, config.dt), traj


def channels_from(traj: qs.Trajectory, names: Sequence[str], dt: float) -> qs.MultichannelSeries:
    data = {}
    for name in names:
        if name == "re_sigma_plus":
            data[name] = np.real(traj.expect["sigma_plus"])
        elif name == "im_sigma_plus":
            data[name] = np.imag(traj.expect["sigma_plus"])
        else:
            data[name] = np.real(traj.expect[name])
    return qs.MultichannelSeries(dt, data, float(traj.times[0]))


# -- retrieval ----------------------------------------------------------------

def truth_for(config: ExperimentConfig) -> dict[str, float]:
    c = config
    if c.system == "qho":
        return {"omega_x": c.omega_x, "omega_y": c.omega_y, "kappa": c.kappa}
    if c.system in ("kerr", "kerr_closed"):
        return {"omega_x": c.omega_x, "omega_y": c.omega_y, "chi_x": c.chi_x, "chi_y": c.chi_y}
    if c.system == "cross_kerr":
        return {"chi_xy": c.chi_xy}
    if c.system == "jaynes_cummings":
        return {"g": c.g}
    return {"omega_f": c.omega_f}


def retrieve(config: ExperimentConfig, spectrum: spectral.EigenSpectrum,
             traj: qs.Trajectory | None = None) -> spectral.ParameterReport:
    c = config
    if c.system == "qho":
        report = spectral.retrieve_qho_params(spectrum)
    elif c.system in ("kerr", "kerr_closed"):
        report = spectral.retrieve_kerr_ladder(spectrum)
    elif c.system == "cross_kerr":
        if traj is None:
            raise ConfigError("cross-Kerr retrieval needs the simulated occupations")
        n_ss = (qs.steady_state_occupation(traj, "y", ordering=c.ordering),
                qs.steady_state_occupation(traj, "x", ordering=c.ordering))
        report = spectral.retrieve_cross_kerr(spectrum, (c.omega_x, c.omega_y), n_ss)
    elif c.system == "jaynes_cummings":
        report = spectral.retrieve_jc_coupling(spectrum, c.omega_q, c.omega_x)
    else:
        report = spectral.retrieve_modulation_frequency(spectrum, c.omega_x, c.omega_y)
    return report.with_truth(truth_for(c))


def baseline_estimates(config: ExperimentConfig, series: qs.MultichannelSeries) -> dict:
    """Dominant angular frequency of one channel by FFT and by matrix pencil.

    Errors are measured against omega_x for x-mode channels and omega_y for
    y-mode channels.
    """
    channel = config.baseline_channel
    signal = series.channels[channel]
    truth = config.omega_y if channel.endswith("y") else config.omega_x
    out = {"channel": channel, "truth": truth}
    fft = baselines.fft_peak_frequencies(signal, series.dt, config.fft_peaks)
    if len(fft.omegas):
        out["fft"] = {"omega": float(fft.omegas[0]),
                      "percent_error": baselines.percent_error(truth, fft.omegas[0]),
                      "incomplete": bool(fft.incomplete)}
    else:
        out["fft"] = {"omega": None, "percent_error": None, "incomplete": True}
    est = baselines.matrix_pencil(signal, series.dt, config.pencil_order, amplitudes=True)
    if len(est.poles) and est.amplitudes is not None:
        amps = np.abs(est.amplitudes[0])
        upper = np.flatnonzero(est.poles.imag > 0)
        if len(upper):
            k = upper[np.argmax(amps[upper])]
            omega = float(est.poles[k].imag)
            out["pencil"] = {"omega": omega, "decay": float(est.poles[k].real),
                             "percent_error": baselines.percent_error(truth, omega),
                             "flags": est.flags}
    out.setdefault("pencil", {"omega": None, "percent_error": None, "flags": est.flags})
    return out


def run_experiment(config: ExperimentConfig, out_dir=None,
                   series: qs.MultichannelSeries | None = None,
                   artifacts: dict | None = None) -> ResultRecord:
    """Full pipeline for one config; stage errors land in the record.

    A precomputed ``series`` skips the simulation (cross-Kerr retrieval then
    has no occupations and fails). When ``artifacts`` is a dict it receives
    the intermediate objects: series, trajectory, model, reconstruction and
    spectrum.
    """
    artifacts = {} if artifacts is None else artifacts
    record = ResultRecord(config=config.to_dict())
    stage = "simulate"
    tick = time.perf_counter()
    try:
        traj = None
        if series is None:
            series, traj = simulate(config)
        artifacts["series"], artifacts["trajectory"] = series, traj
        record.timings["simulate"] = time.perf_counter() - tick

        stage = "embed"
        tick = time.perf_counter()
        prepared = mhavok._prepare(series, config.m)
        record.timings["svd"] = time.perf_counter() - tick

        stage = "rank"
        tick = time.perf_counter()
        if config.r == "auto":
            r_opt, table = mhavok.select_optimal_rank(series, config.m, config.tau,
                                                      config.r_max, _prepared=prepared)
            record.r_opt, record.rank_table = r_opt, table
            r = r_opt
        else:
            r = int(config.r)
        record.r_used = r
        record.timings["rank"] = time.perf_counter() - tick

        stage = "fit"
        tick = time.perf_counter()
        model, recon = mhavok.fit_mhavok(series, config.m, config.tau, r, _prepared=prepared)
        artifacts["model"], artifacts["reconstruction"] = model, recon
        record.n_linear, record.n_forcing = len(model.linear), len(model.forcing)
        record.reconstruction = reconstruction_metrics(series, recon)
        record.timings["fit"] = time.perf_counter() - tick

        if config.baselines:
            stage = "baselines"
            tick = time.perf_counter()
            record.baselines = baseline_estimates(config, series)
            record.timings["baselines"] = time.perf_counter() - tick

        stage = "retrieve"
        spectrum = spectral.model_spectrum(model)
        artifacts["spectrum"] = spectrum
        record.report = {"eigenvalues": [[float(z.real), float(z.imag)]
                                         for z in spectrum.eigenvalues]}
        report = retrieve(config, spectrum, traj)
        record.report = report.to_dict()
    except (QKoopmanError, ValueError, np.linalg.LinAlgError) as exc:
        record.status = "failed"
        record.error = f"{stage}: {type(exc).__name__}: {exc}"
    if out_dir is not None:
        persist(record, out_dir, series)
    return record


def reconstruction_metrics(series: qs.MultichannelSeries, recon: mhavok.Reconstruction) -> dict:
    """Relative RMS error of each reconstructed channel over the embedding window."""
    z = series.values()[:, :recon.observables.shape[1]]
    out = {}
    for name, truth, est in zip(series.names, z, recon.observables):
        scale = float(np.sqrt(np.mean(truth ** 2)))
        err = float(np.sqrt(np.mean((truth - est) ** 2)))
        out[name] = err / scale if scale > 0 else err
    return out


def persist(record: ResultRecord, out_dir, series: qs.MultichannelSeries | None = None) -> Path:
    path = Path(out_dir) / _safe(record.config.get("name") or record.config["system"])
    path.mkdir(parents=True, exist_ok=True)
    record.to_json(path / "record.json")
    (path / "timings.json").write_text(json.dumps(_jsonable(record.timings), indent=1) + "\n")
    if series is not None:
        series.to_csv(path / "series.csv")
    return path


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_.=" else "_" for ch in name)


# -- sweeps -------------------------------------------------------------------

SUMMARY_PREFIX = ("name", "system", "status", "r_used", "r_opt", "n_linear", "n_forcing")


def summary_rows(records: Sequence[ResultRecord], sweep: SweepSpec | None = None) -> list[dict]:
    names = () if sweep is None else (
        sweep.parameter if isinstance(sweep.parameter, tuple) else (sweep.parameter,))
    rows = []
    for rec in records:
        row = {"name": rec.config.get("name"), "system": rec.config["system"],
               "status": rec.status, "r_used": rec.r_used, "r_opt": rec.r_opt,
               "n_linear": rec.n_linear, "n_forcing": rec.n_forcing}
        for p in names:
            row[p] = rec.config.get(p)
        if rec.report:
            for k, v in rec.report.get("retrieved", {}).items():
                row[f"hat_{k}"] = v
            for k, v in rec.report.get("percent_errors", {}).items():
                row[f"err_{k}"] = v
        for method in ("fft", "pencil"):
            if method in rec.baselines:
                row[f"err_{method}"] = rec.baselines[method]["percent_error"]
        row["error"] = rec.error or ""
        rows.append(row)
    return rows


def write_csv(rows: Sequence[dict], path, columns: Sequence[str] | None = None) -> None:
    """Comma-separated, header row, floats as %.17g, missing cells empty."""
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(col)) for col in columns])


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def _run_one(args):
    config, out_dir = args
    return run_experiment(config, out_dir)


def run_many(configs: Sequence[ExperimentConfig], out_dir=None, threads: int = 1) -> list[ResultRecord]:
    """Independent runs, optionally in worker processes; order is preserved."""
    jobs = [(c, out_dir) for c in configs]
    if threads <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_one, jobs))


def run_sweep(base: ExperimentConfig, sweep: SweepSpec, out_dir=None,
              threads: int = 1) -> tuple[list[ResultRecord], list[dict]]:
    """Run every sweep point; failures are recorded and the sweep continues.

    Writes ``summary.csv`` under ``out_dir`` when given.
    """
    records = run_many(sweep.configs(base), out_dir, threads)
    rows = summary_rows(records, sweep)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_csv(rows, Path(out_dir) / "summary.csv")
    return records, rows
