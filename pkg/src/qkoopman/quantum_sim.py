"""Truncated Fock-space model zoo and a fixed-step Lindblad integrator.

Units are hbar = k_B = 1. Tensor ordering is (x-mode, y-mode[, qubit]).
Qubit basis is (|g>, |e>) so that sigma_z = diag(-1, +1).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from types import MappingProxyType
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    ConfigError,
    DomainError,
    IntegrationDivergedError,
    SizeError,
    TruncationError,
)

ORDERINGS = ("as_printed", "normal")
BATH_MODELS = ("independent", "common")

TRACE_TOL = 1e-8
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-7
TOP_LEVEL_POPULATION_TOL = 1e-4


@dataclass(frozen=True)
class HilbertSpec:
    n_x: int = 10
    n_y: int = 10
    qubit: bool = False

    def __post_init__(self):
        if int(self.n_x) < 2 or int(self.n_y) < 2:
            raise ConfigError(f"Fock truncations must be >= 2, got ({self.n_x}, {self.n_y})")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.n_x, self.n_y, 2) if self.qubit else (self.n_x, self.n_y)

    @property
    def dim(self) -> int:
        return self.n_x * self.n_y * (2 if self.qubit else 1)


def destroy(d: int) -> np.ndarray:
    """Annihilation operator on a d-level mode, a|n> = sqrt(n)|n-1>."""
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1).astype(complex)


def _embed(op: np.ndarray, slot: int, spec: HilbertSpec) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for i, d in enumerate(spec.dims):
        out = np.kron(out, op if i == slot else np.eye(d, dtype=complex))
    return out


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@lru_cache(maxsize=16)
def operators(spec: HilbertSpec) -> Mapping[str, np.ndarray]:
    """Dense ladder, number, quadrature and qubit operators for ``spec``.

    The returned arrays are shared and read-only. Quadratures follow
    x = (a + a^dag)/sqrt(2), p = i(a^dag - a)/sqrt(2).
    """
    ops = {}
    for slot, mode, d in ((0, "x", spec.n_x), (1, "y", spec.n_y)):
        a = _embed(destroy(d), slot, spec)
        ad = a.conj().T
        ops[f"a_{mode}"] = a
        ops[f"n_{mode}"] = ad @ a
        ops[mode] = (a + ad) / math.sqrt(2)
        ops[f"p_{mode}"] = 1j * (ad - a) / math.sqrt(2)
    if spec.qubit:
        sm = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e|
        ops["sigma_minus"] = _embed(sm, 2, spec)
        ops["sigma_plus"] = _embed(sm.conj().T, 2, spec)
        ops["sigma_z"] = _embed(np.diag([-1.0, 1.0]).astype(complex), 2, spec)
    ops["identity"] = np.eye(spec.dim, dtype=complex)
    return MappingProxyType({k: _frozen(v) for k, v in ops.items()})


def number_operator(spec: HilbertSpec, mode: str, ordering: str = "normal") -> np.ndarray:
    """Number operator of ``mode``; ``as_printed`` means a a^dag = a^dag a + 1.

    The +1 is added algebraically rather than by multiplying truncated
    matrices, whose product would zero the top Fock level.
    """
    if ordering not in ORDERINGS:
        raise ConfigError(f"unknown operator ordering {ordering!r}")
    ops = operators(spec)
    n = ops[f"n_{mode}"].copy()
    if ordering == "as_printed":
        n += ops["identity"]
    return n


def bose_einstein_occupation(omega: float, temperature: float) -> float:
    if omega <= 0 or temperature <= 0:
        raise DomainError(f"need omega > 0 and T > 0, got omega={omega}, T={temperature}")
    return 1.0 / math.expm1(omega / temperature)


def build_qho_hamiltonian(wx: float, wy: float, spec: HilbertSpec,
                          ordering: str = "as_printed") -> np.ndarray:
    return (wx * number_operator(spec, "x", ordering)
            + wy * number_operator(spec, "y", ordering))


def build_kerr_hamiltonian(chi_x: float, chi_y: float, chi_xy: float, spec: HilbertSpec,
                           ordering: str = "as_printed") -> np.ndarray:
    """Self-Kerr (chi/2) a^dag^2 a^2 per mode plus cross-Kerr chi_xy n_x n_y.

    Only the cross term depends on ``ordering``; the self terms are
    normal-ordered as written.
    """
    ops = operators(spec)
    nx, ny = ops["n_x"], ops["n_y"]
    eye = ops["identity"]
    h = 0.5 * chi_x * nx @ (nx - eye) + 0.5 * chi_y * ny @ (ny - eye)
    if chi_xy:
        h = h + chi_xy * number_operator(spec, "x", ordering) @ number_operator(spec, "y", ordering)
    return h


def build_jc_hamiltonian(omega_q: float, g: float, spec: HilbertSpec) -> np.ndarray:
    """(Omega/2) sigma_z + g (a_x sigma_+ + a_x^dag sigma_-)."""
    if not spec.qubit:
        raise ConfigError("Jaynes-Cummings Hamiltonian needs a qubit factor in the Hilbert space")
    ops = operators(spec)
    coupling = ops["a_x"] @ ops["sigma_plus"]
    return 0.5 * omega_q * ops["sigma_z"] + g * (coupling + coupling.conj().T)


@dataclass(frozen=True)
class CosineDrive:
    """Scalar drive coefficient c(t) = amplitude * cos(frequency * t)."""

    amplitude: float
    frequency: float

    def __call__(self, t: float) -> float:
        return self.amplitude * math.cos(self.frequency * t)


def build_modulation_drive(delta: float, wf: float, spec: HilbertSpec):
    """Return ``(c, n_x)`` with H_f(t) = c(t) n_x and c(t) = delta cos(wf t)."""
    if wf <= 0:
        raise DomainError(f"modulation frequency must be positive, got {wf}")
    return CosineDrive(float(delta), float(wf)), operators(spec)["n_x"].copy()


@dataclass(frozen=True)
class BathSpec:
    temperature: float = 2.0
    kappa: float = 0.1
    phi: float = 0.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise DomainError(f"bath temperature must be positive, got {self.temperature}")
        if self.kappa < 0:
            raise DomainError(f"damping rate must be nonnegative, got {self.kappa}")


def build_jump_operators(bath: BathSpec, wx: float, wy: float, spec: HilbertSpec,
                         qubit_rates: tuple[float, float] | None = None,
                         model: str = "independent") -> list[np.ndarray]:
    """Thermal-bath jump operators, plus qubit relaxation/dephasing if requested.

    ``model="common"`` couples both modes to L_c = a_x + e^{i phi} a_y with one
    decay and one excitation jump per mode index (weights from each mode's
    Bose-Einstein occupation). ``model="independent"`` gives each mode its own
    a_i / a_i^dag pair, for which the first moments obey the decoupled
    -kappa/2 rotation generator. Zero-rate jumps are omitted.
    """
    if model not in BATH_MODELS:
        raise ConfigError(f"unknown bath model {model!r}")
    ops = operators(spec)
    occupations = {"x": bose_einstein_occupation(wx, bath.temperature),
                   "y": bose_einstein_occupation(wy, bath.temperature)}
    jumps = []
    if bath.kappa > 0:
        lc = ops["a_x"] + np.exp(1j * bath.phi) * ops["a_y"]
        for mode, nbar in occupations.items():
            lower = lc if model == "common" else ops[f"a_{mode}"]
            jumps.append(math.sqrt(bath.kappa * (nbar + 1)) * lower)
            jumps.append(math.sqrt(bath.kappa * nbar) * lower.conj().T)
    if qubit_rates is not None:
        if not spec.qubit:
            raise ConfigError("qubit rates given but the Hilbert space has no qubit")
        gamma, gamma_phi = qubit_rates
        if gamma < 0 or gamma_phi < 0:
            raise DomainError(f"qubit rates must be nonnegative, got {qubit_rates}")
        if gamma > 0:
            jumps.append(math.sqrt(gamma) * ops["sigma_minus"])
        if gamma_phi > 0:
            jumps.append(math.sqrt(gamma_phi) * ops["sigma_z"])
    return jumps


def _is_hermitian(op: np.ndarray, rtol: float = 1e-12) -> bool:
    scale = max(np.linalg.norm(op), 1.0)
    return np.linalg.norm(op - op.conj().T) <= rtol * scale


@dataclass(frozen=True, eq=False)
class LindbladModel:
    H0: np.ndarray
    jumps: Sequence[np.ndarray] = ()
    drive: tuple[Callable[[float], float], np.ndarray] | None = None
    spec: HilbertSpec | None = None

    def __post_init__(self):
        h = np.asarray(self.H0)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ConfigError(f"H0 must be square, got shape {h.shape}")
        if not _is_hermitian(h):
            raise ConfigError("H0 is not Hermitian")
        for j in self.jumps:
            if np.shape(j) != h.shape:
                raise ConfigError(f"jump operator shape {np.shape(j)} != H0 shape {h.shape}")
        if self.drive is not None:
            if np.shape(self.drive[1]) != h.shape:
                raise ConfigError("drive operator shape does not match H0")
            if not _is_hermitian(np.asarray(self.drive[1])):
                raise ConfigError("drive operator is not Hermitian")
        if self.spec is not None and self.spec.dim != h.shape[0]:
            raise ConfigError(f"H0 dimension {h.shape[0]} != Hilbert dimension {self.spec.dim}")
        object.__setattr__(self, "jumps", tuple(self.jumps))

    @property
    def dim(self) -> int:
        return self.H0.shape[0]

    @cached_property
    def superoperators(self) -> tuple[sp.csr_matrix, sp.csr_matrix | None]:
        """Static and drive Liouvillians acting on row-major vec(rho).

        Uses vec(A X B) = kron(A, B^T) vec(X).
        """
        eye = sp.identity(self.dim, dtype=complex, format="csr")

        def commutator(op):
            op = sp.csr_matrix(op)
            return -1j * (sp.kron(op, eye) - sp.kron(eye, op.T))

        lv = commutator(self.H0)
        for j in self.jumps:
            js = sp.csr_matrix(j)
            jdj = (js.conj().T @ js).tocsr()
            lv = lv + sp.kron(js, js.conj()) - 0.5 * sp.kron(jdj, eye) - 0.5 * sp.kron(eye, jdj.T)
        lv = sp.csr_matrix(lv)
        lv.eliminate_zeros()
        ld = None
        if self.drive is not None:
            ld = sp.csr_matrix(commutator(self.drive[1]))
            ld.eliminate_zeros()
        return lv, ld


def coherent_amplitudes(alpha: complex, d: int) -> np.ndarray:
    n = np.arange(d)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    if alpha == 0:
        amps = np.zeros(d, dtype=complex)
        amps[0] = 1.0
        return amps
    return np.exp(-abs(alpha) ** 2 / 2 + n * np.log(complex(alpha)) - 0.5 * log_fact)


def coherent_state(alpha: complex, spec: HilbertSpec, qubit_state: str = "ground",
                   max_discarded: float = 1e-6) -> np.ndarray:
    """Density matrix of |alpha>_x |alpha>_y (|g> or |e> when the Hilbert space has a qubit)."""
    factors = []
    for d in (spec.n_x, spec.n_y):
        c = coherent_amplitudes(alpha, d)
        discarded = 1.0 - float(np.sum(np.abs(c) ** 2))
        if discarded > max_discarded:
            raise TruncationError(
                f"truncation {d} discards population {discarded:.3g} of |alpha={alpha}>")
        factors.append(c / np.linalg.norm(c))
    if spec.qubit:
        if qubit_state not in ("ground", "excited"):
            raise ConfigError(f"qubit state must be 'ground' or 'excited', got {qubit_state!r}")
        factors.append(np.array([1, 0] if qubit_state == "ground" else [0, 1], dtype=complex))
    psi = factors[0]
    for f in factors[1:]:
        psi = np.kron(psi, f)
    return np.outer(psi, psi.conj())


def check_density_matrix(rho: np.ndarray, *, trace_tol: float = 1e-9,
                         hermitian_tol: float = HERMITIAN_TOL,
                         positivity_tol: float = POSITIVITY_TOL) -> None:
    if not np.all(np.isfinite(rho)):
        raise DomainError("density matrix has non-finite entries")
    if abs(np.trace(rho) - 1) > trace_tol:
        raise DomainError(f"trace {np.trace(rho).real:.12g} differs from 1")
    if np.max(np.abs(rho - rho.conj().T)) > hermitian_tol:
        raise DomainError("density matrix is not Hermitian")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -positivity_tol:
        raise DomainError("density matrix has a negative eigenvalue")


def top_level_populations(rho: np.ndarray, spec: HilbertSpec) -> dict[str, float]:
    """Population of the two highest Fock levels of each mode."""
    p = np.real(np.diagonal(rho)).reshape(spec.dims)
    px = p.sum(axis=tuple(range(1, p.ndim)))
    py = p.sum(axis=(0,) + tuple(range(2, p.ndim)))
    return {"x": float(px[-2:].sum()), "y": float(py[-2:].sum())}


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray | None
    expect: dict[str, np.ndarray] = field(default_factory=dict)
    spec: HilbertSpec | None = None
    substeps: int = 5

    def __len__(self) -> int:
        return len(self.times)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0


def evolve_lindblad(model: LindbladModel, rho0: np.ndarray, t_f: float, dt: float, *,
                    substeps: int = 5, e_ops: Mapping[str, np.ndarray] | None = None,
                    store_states: bool | None = None, check_every: int = 250,
                    max_halvings: int = 3) -> Trajectory:
    """Integrate the Lindblad equation with fixed-step RK4.

    Closed autonomous models (no jumps, no drive) are instead stepped with the
    exact unitary propagator. Otherwise each output step ``dt`` is split into
    ``substeps`` RK4 steps; the drive
    coefficient is evaluated at the RK4 stage times. If the state stops being
    a valid density matrix the run is repeated with the internal step halved,
    up to ``max_halvings`` times.

    Parameters
    ----------
    e_ops
        Operators whose expectation values are recorded at every output
        step (complex). With ``e_ops`` given, states are not stored unless
        ``store_states=True``: 5001 frames at dim 200 would need 3 GB.
    check_every
        Frame interval of the positivity and truncation checks; trace and
        Hermiticity are checked at every frame.
    """
    if dt <= 0 or t_f <= 0:
        raise DomainError(f"need t_f > 0 and dt > 0, got t_f={t_f}, dt={dt}")
    n_steps = int(round(t_f / dt))
    if n_steps < 1 or abs(n_steps * dt - t_f) > 1e-9 * max(t_f, 1.0):
        raise DomainError(f"dt={dt} does not divide t_f={t_f}")
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (model.dim, model.dim):
        raise SizeError(f"initial state shape {rho0.shape} != ({model.dim}, {model.dim})")
    check_density_matrix(rho0)
    if store_states is None:
        store_states = e_ops is None

    for attempt in range(max_halvings + 1):
        try:
            return _integrate(model, rho0, n_steps, dt, substeps * 2 ** attempt,
                              e_ops or {}, store_states, check_every)
        except IntegrationDivergedError:
            if attempt == max_halvings:
                raise
    raise AssertionError("unreachable")


def _integrate(model, rho0, n_steps, dt, substeps, e_ops, store_states, check_every):
    d = model.dim
    lv, ld = model.superoperators
    coef = model.drive[0] if model.drive is not None else None
    h = dt / substeps

    if coef is None:
        def rhs(t, v):
            return lv @ v
    else:
        def rhs(t, v):
            return lv @ v + coef(t) * (ld @ v)

    names = list(e_ops)
    # tr(rho O) = sum_ij rho_ij O_ji = vec(rho) . vec(O^T)
    e_mat = np.array([np.asarray(e_ops[k]).T.ravel() for k in names]) if names else None
    expect = np.empty((len(names), n_steps + 1), dtype=complex)
    states = np.empty((n_steps + 1, d, d), dtype=complex) if store_states else None
    diag_idx = np.arange(d) * (d + 1)

    def record(k, v, t):
        rho = v.reshape(d, d)
        if not np.all(np.isfinite(v)):
            raise IntegrationDivergedError(f"non-finite state at t={t:.6g}", t)
        tr = v[diag_idx].sum()
        if abs(tr - 1) > TRACE_TOL:
            raise IntegrationDivergedError(f"trace drift {abs(tr - 1):.3g} at t={t:.6g}", t)
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise IntegrationDivergedError(f"Hermiticity lost at t={t:.6g}", t)
        if k % check_every == 0 or k == n_steps:
            if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -POSITIVITY_TOL:
                raise IntegrationDivergedError(f"negative eigenvalue at t={t:.6g}", t)
            if model.spec is not None:
                tops = top_level_populations(rho, model.spec)
                worst = max(tops, key=tops.get)
                if tops[worst] > TOP_LEVEL_POPULATION_TOL:
                    raise TruncationError(
                        f"top Fock levels of mode {worst} hold population {tops[worst]:.3g} "
                        f"at t={t:.6g}; increase the truncation")
        if e_mat is not None:
            expect[:, k] = e_mat @ v
        if states is not None:
            states[k] = rho

    v = rho0.ravel().copy()
    record(0, v, 0.0)
    if not model.jumps and coef is None:
        # closed and autonomous: the exact propagator avoids RK4's damping of
        # fast coherences, which slowly breaks positivity over long runs
        energies, basis = np.linalg.eigh(np.asarray(model.H0))
        u = (basis * np.exp(-1j * energies * dt)) @ basis.conj().T
        ud = u.conj().T
        rho = rho0.copy()
        for k in range(n_steps):
            rho = u @ rho @ ud
            rho = 0.5 * (rho + rho.conj().T)
            record(k + 1, rho.ravel(), (k + 1) * dt)
    else:
        for k in range(n_steps):
            t = k * dt
            for s in range(substeps):
                ts = t + s * h
                k1 = rhs(ts, v)
                k2 = rhs(ts + 0.5 * h, v + (0.5 * h) * k1)
                k3 = rhs(ts + 0.5 * h, v + (0.5 * h) * k2)
                k4 = rhs(ts + h, v + h * k3)
                v = v + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
            record(k + 1, v, (k + 1) * dt)

    times = np.arange(n_steps + 1) * dt
    return Trajectory(times=times, states=states,
                      expect={name: expect[i] for i, name in enumerate(names)},
                      spec=model.spec, substeps=substeps)


def expectation_series(trajectory: Trajectory, op: np.ndarray) -> np.ndarray:
    """<O>(t_k) = tr(rho(t_k) O); real-valued when O is Hermitian."""
    if trajectory.states is None:
        raise ConfigError("trajectory was integrated without storing states; pass e_ops instead")
    op = np.asarray(op)
    if op.shape != trajectory.states.shape[1:]:
        raise SizeError(f"operator shape {op.shape} != state shape {trajectory.states.shape[1:]}")
    values = np.einsum("kij,ji->k", trajectory.states, op)
    return values.real if _is_hermitian(op) else values


def steady_state_occupation(trajectory: Trajectory, mode: str, tail_fraction: float = 0.1,
                            ordering: str = "normal") -> float:
    """Mean of <n_mode> over the last ``tail_fraction`` of the trajectory.

    ``ordering="normal"`` gives the photon number <a^dag a>; ``as_printed``
    gives <a a^dag> = <a^dag a> + 1.
    """
    if not 0 < tail_fraction <= 1:
        raise DomainError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    if ordering not in ORDERINGS:
        raise ConfigError(f"unknown operator ordering {ordering!r}")
    if len(trajectory) == 0:
        raise SizeError("empty trajectory")
    key = f"n_{mode}"
    if key in trajectory.expect:
        series = np.real(trajectory.expect[key])
    elif trajectory.spec is not None and trajectory.states is not None:
        series = expectation_series(trajectory, operators(trajectory.spec)[key])
    else:
        raise ConfigError(f"trajectory carries neither {key!r} expectations nor states")
    start = len(series) - max(1, int(math.ceil(tail_fraction * len(series))))
    occ = float(np.mean(series[start:]))
    return occ + 1.0 if ordering == "as_printed" else occ


@dataclass
class MultichannelSeries:
    """q named real channels on the uniform grid t_k = t0 + k*dt."""

    dt: float
    channels: dict[str, np.ndarray]
    t0: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError(f"sampling period must be positive, got {self.dt}")
        if not self.channels:
            raise SizeError("series needs at least one channel")
        chans = {str(k): np.asarray(v, dtype=float) for k, v in self.channels.items()}
        lengths = {v.shape for v in chans.values()}
        if len(lengths) != 1 or len(next(iter(lengths))) != 1:
            raise SizeError(f"channels must be 1-D and of equal length, got shapes {lengths}")
        for name, v in chans.items():
            if not np.all(np.isfinite(v)):
                raise DomainError(f"channel {name!r} has non-finite values")
        self.channels = chans

    @property
    def names(self) -> list[str]:
        return list(self.channels)

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.channels.values())))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_samples)

    def values(self) -> np.ndarray:
        """Channel-major array of shape (q, N)."""
        return np.vstack(list(self.channels.values()))

    def select(self, names: Sequence[str]) -> "MultichannelSeries":
        return MultichannelSeries(self.dt, {n: self.channels[n] for n in names}, self.t0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(["t"] + self.names) + "\n")
            for row in np.column_stack([self.times, self.values().T]):
                fh.write(",".join("%.17g" % x for x in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "MultichannelSeries":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.array([[float(x) for x in row] for row in reader if row])
        if header[0] != "t":
            raise ConfigError(f"first CSV column must be 't', got {header[0]!r}")
        if rows.shape[0] < 2:
            raise SizeError("CSV needs at least two samples")
        t = rows[:, 0]
        steps = np.diff(t)
        dt = float(np.mean(steps))
        if np.max(np.abs(steps - dt)) > 1e-9 * max(abs(dt), 1.0) + 1e-12 * np.max(np.abs(t)):
            raise ConfigError("time column is not uniformly sampled")
        return cls(dt, {name: rows[:, i + 1] for i, name in enumerate(header[1:])}, float(t[0]))

    def to_records(self) -> list[dict[str, float]]:
        return [dict(zip(["t"] + self.names, map(float, row)))
                for row in np.column_stack([self.times, self.values().T])]

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_records(), fh)

    @classmethod
    def from_json(cls, path) -> "MultichannelSeries":
        with open(path) as fh:
            records = json.load(fh)
        if len(records) < 2:
            raise SizeError("JSON trajectory needs at least two records")
        names = [k for k in records[0] if k != "t"]
        t = np.array([r["t"] for r in records])
        return cls(float(t[1] - t[0]), {n: np.array([r[n] for r in records]) for n in names},
                   float(t[0]))
