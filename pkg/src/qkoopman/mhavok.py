"""Multichannel HAVOK: forced linear models from block Hankel SVD coordinates.

Pipeline: delay embedding -> thin SVD -> truncation to rank r -> derivative of
the right singular vectors -> first regression V' ~ V C^T -> per-mode R^2
split into linear (I_c) and forcing (I_f) coordinates -> second regression
V_c' ~ V_c A^T + V_f B^T -> forced simulation x' = A x + B u -> Hankel
reconstruction. Mode indices are 0-based throughout.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .embedding import BlockHankel, delay_embed
from .errors import ClassificationError, IntegrationDivergedError, SizeError
from .quantum_sim import MultichannelSeries

LSTSQ_RCOND = 1e-12
TIE_RTOL = 1e-9
TRIM = 2


@dataclass(frozen=True, eq=False)
class SvdBundle:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray  # right singular vectors as columns, shape (cols, l)

    @property
    def rank_limit(self) -> int:
        return len(self.S)


def thin_svd(hankel: BlockHankel | np.ndarray) -> SvdBundle:
    h = hankel.matrix if isinstance(hankel, BlockHankel) else np.asarray(hankel, dtype=float)
    if h.size == 0:
        raise SizeError("cannot factor an empty Hankel matrix")
    if not np.all(np.isfinite(h)):
        raise np.linalg.LinAlgError("Hankel matrix has non-finite entries")
    u, s, vt = np.linalg.svd(h, full_matrices=False)
    return SvdBundle(u, s, vt.T)


def differentiate(v: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order central difference of each column.

    Returns the derivative on rows 2..n-3 only; callers must trim the same
    two rows from each end of ``v``.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] < 5:
        raise SizeError(f"need at least 5 rows to differentiate, got {v.shape[0]}")
    return (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * dt)


def _lstsq(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, int]:
    """Minimum-norm least squares via SVD (gelsd) with relative cutoff 1e-12."""
    coef, _, rank, _ = sla.lstsq(x, y, cond=LSTSQ_RCOND, lapack_driver="gelsd")
    return coef, int(rank)


def fit_linear_map(v: np.ndarray, vdot: np.ndarray) -> np.ndarray:
    """C minimising ||V' - V C^T||_F."""
    v, vdot = np.asarray(v, dtype=float), np.asarray(vdot, dtype=float)
    if v.shape != vdot.shape:
        raise SizeError(f"V {v.shape} and V' {vdot.shape} differ in shape")
    if v.shape[0] <= v.shape[1]:
        raise SizeError("regression needs more rows than columns")
    coef, _ = _lstsq(v, vdot)
    return coef.T


def determination_coefficients(v: np.ndarray, vdot: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Per-column R^2 of the fit V C^T against V'; NaN for zero-variance columns."""
    pred = v @ c.T
    ss_res = np.sum((vdot - pred) ** 2, axis=0)
    centered = vdot - vdot.mean(axis=0)
    ss_tot = np.sum(centered ** 2, axis=0)
    r2 = np.full(v.shape[1], np.nan)
    ok = ss_tot > 0
    r2[ok] = 1.0 - ss_res[ok] / ss_tot[ok]
    return r2


def classify_modes(v: np.ndarray, vdot: np.ndarray, c: np.ndarray, tau: float):
    """Split mode indices into linear (R^2 >= tau) and forcing sets.

    Zero-variance derivative columns get R^2 = NaN and land in the forcing set.

    Returns
    -------
    linear, forcing : ndarray of int
    r2 : ndarray of float
    """
    if not 0 < tau < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {tau}")
    r2 = determination_coefficients(v, vdot, c)
    is_linear = np.nan_to_num(r2, nan=-np.inf) >= tau
    idx = np.arange(v.shape[1])
    return idx[is_linear], idx[~is_linear], r2


def fit_forced_model(vc: np.ndarray, vf: np.ndarray, vdot_c: np.ndarray):
    """Joint least squares V_c' ~ V_c A^T + V_f B^T; B has shape (|I_c|, |I_f|)."""
    nc = vc.shape[1]
    vf = np.asarray(vf, dtype=float).reshape(vc.shape[0], -1)
    x = np.hstack([vc, vf])
    if x.shape[0] <= x.shape[1]:
        raise SizeError("regression needs more rows than columns")
    coef, _ = _lstsq(x, vdot_c)
    return coef[:nc].T.copy(), coef[nc:].T.copy()


def simulate_forced(a: np.ndarray, b: np.ndarray, u: np.ndarray, x0: np.ndarray,
                    dt: float) -> np.ndarray:
    """RK4 solution of x' = A x + B u(t) on the sample grid of ``u``.

    Forcing is linearly interpolated between samples, so the half-step stages
    use the midpoint average. Returns an array of shape (len(u), len(x0)).
    """
    a = np.asarray(a, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    n = u.shape[0] if np.ndim(u) == 2 else None
    if n is None:
        raise SizeError("forcing must be a 2-D (samples, modes) array")
    if b.size:
        fu = u @ b.T
    else:
        fu = np.zeros((n, len(x0)))
    mid = 0.5 * (fu[:-1] + fu[1:])
    x = np.empty((n, len(x0)))
    x[0] = x0
    at = a.T
    h = dt
    xk = x0.copy()
    for k in range(n - 1):
        k1 = xk @ at + fu[k]
        k2 = (xk + 0.5 * h * k1) @ at + mid[k]
        k3 = (xk + 0.5 * h * k2) @ at + mid[k]
        k4 = (xk + h * k3) @ at + fu[k + 1]
        xk = xk + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        x[k + 1] = xk
    if not np.all(np.isfinite(x)):
        bad = int(np.argmax(~np.all(np.isfinite(x), axis=1)))
        raise IntegrationDivergedError(f"forced linear model diverged at sample {bad}", bad * dt)
    return x


@dataclass(frozen=True, eq=False)
class Reconstruction:
    x: np.ndarray
    hankel: np.ndarray
    observables: np.ndarray  # (q, cols): first block of the reconstructed Hankel

    def to_series(self, names, dt: float, t0: float = 0.0) -> MultichannelSeries:
        return MultichannelSeries(dt, dict(zip(names, self.observables)), t0)


def reconstruct(u_c: np.ndarray, s_c: np.ndarray, x: np.ndarray, q: int) -> Reconstruction:
    if u_c.shape[1] != len(s_c) or x.shape[1] != len(s_c):
        raise SizeError(f"shape mismatch: U_c {u_c.shape}, S_c {np.shape(s_c)}, x {x.shape}")
    h = (u_c * s_c) @ x.T
    return Reconstruction(x, h, h[:q])


def condition_number(b: np.ndarray) -> float | None:
    """sigma_max / sigma_min of B; None for an empty B (no forcing)."""
    b = np.asarray(b, dtype=float)
    if b.size == 0:
        return None
    s = np.linalg.svd(b, compute_uv=False)
    if s[-1] < 1e-300:
        return math.inf
    return float(s[0] / s[-1])


@dataclass(eq=False)
class HavokModel:
    r: int
    tau: float
    linear: np.ndarray
    forcing: np.ndarray
    C: np.ndarray
    A: np.ndarray
    B: np.ndarray
    U_c: np.ndarray
    S_c: np.ndarray
    dt: float
    r2: np.ndarray
    singular_values: np.ndarray
    q: int
    m: int
    x0: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def condition_number(self) -> float | None:
        return condition_number(self.B)

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "tau": self.tau,
            "q": self.q,
            "m": self.m,
            "dt": self.dt,
            "I_c": self.linear.tolist(),
            "I_f": self.forcing.tolist(),
            "R2": [None if math.isnan(v) else float(v) for v in self.r2],
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "singular_values": self.singular_values.tolist(),
            "x0": None if self.x0 is None else self.x0.tolist(),
            "diagnostics": self.diagnostics,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


@dataclass(frozen=True)
class _Regression:
    r: int
    linear: np.ndarray
    forcing: np.ndarray
    r2: np.ndarray
    C: np.ndarray
    A: np.ndarray
    B: np.ndarray
    ranks: tuple[int, int]


def _regress(v_full: np.ndarray, vdot_full: np.ndarray, r: int, tau: float) -> _Regression:
    v = v_full[TRIM:-TRIM, :r]
    vdot = vdot_full[:, :r]
    coef, rank1 = _lstsq(v, vdot)
    c = coef.T
    linear, forcing, r2 = classify_modes(v, vdot, c, tau)
    if len(linear) == 0:
        empty = np.zeros((0, 0))
        return _Regression(r, linear, forcing, r2, c, empty, np.zeros((0, len(forcing))),
                           (rank1, 0))
    x = np.hstack([v[:, linear], v[:, forcing]])
    coef2, rank2 = _lstsq(x, vdot[:, linear])
    nc = len(linear)
    return _Regression(r, linear, forcing, r2, c, coef2[:nc].T.copy(), coef2[nc:].T.copy(),
                       (rank1, rank2))


def _prepare(series, m: int, stride: int = 1):
    if isinstance(series, MultichannelSeries):
        values = series.values()
        if np.all(np.ptp(values, axis=1) == 0):
            raise ClassificationError("all channels are constant; no dynamical modes to classify")
    hankel = delay_embed(series, m, stride)
    svd = thin_svd(hankel)
    vdot = differentiate(svd.V, hankel.dt * hankel.stride)
    return hankel, svd, vdot


def fit_mhavok(series: MultichannelSeries, m: int = 100, tau: float = 0.95, r: int = 4,
               stride: int = 1, *, _prepared=None) -> tuple[HavokModel, Reconstruction]:
    """Fit the forced linear model at cutoff rank ``r`` and reconstruct the series."""
    hankel, svd, vdot = _prepared or _prepare(series, m, stride)
    if not 1 <= r <= svd.rank_limit:
        raise SizeError(f"cutoff rank {r} outside [1, {svd.rank_limit}]")
    reg = _regress(svd.V, vdot, r, tau)
    if len(reg.linear) == 0:
        raise ClassificationError(f"no linear modes at r={r}, tau={tau}")
    v = svd.V[:, :r]
    x = simulate_forced(reg.A, reg.B, v[:, reg.forcing], v[0, reg.linear], hankel.dt * hankel.stride)
    recon = reconstruct(svd.U[:, reg.linear], svd.S[reg.linear], x, hankel.q)
    model = HavokModel(
        r=r, tau=tau, linear=reg.linear, forcing=reg.forcing, C=reg.C, A=reg.A, B=reg.B,
        U_c=svd.U[:, reg.linear], S_c=svd.S[reg.linear], dt=hankel.dt * hankel.stride,
        r2=reg.r2, singular_values=svd.S.copy(), q=hankel.q, m=hankel.m,
        x0=v[0, reg.linear].copy(),
        diagnostics={"lstsq_rank_first": reg.ranks[0], "lstsq_rank_second": reg.ranks[1],
                     "degenerate_modes": np.flatnonzero(np.isnan(reg.r2)).tolist(),
                     "rank_deficient": reg.ranks[0] < r or reg.ranks[1] < r},
    )
    return model, recon


def select_optimal_rank(series: MultichannelSeries, m: int = 100, tau: float = 0.95,
                        r_max: int = 30, stride: int = 1, *, _prepared=None):
    """Sweep the cutoff rank and keep the one whose B has the largest condition number.

    Ranks whose B is empty (no forcing modes) rank below every finite
    condition number; ties within a relative 1e-9 go to the smaller rank.

    Returns
    -------
    r_opt : int
    table : list of dict
        One row per rank from r_min to r_max with the linear/forcing counts
        and condition number (None when B is empty).
    """
    hankel, svd, vdot = _prepared or _prepare(series, m, stride)
    if r_max > hankel.q * hankel.m:
        raise SizeError(f"r_max={r_max} exceeds q*m={hankel.q * hankel.m}")
    r_max = min(r_max, svd.rank_limit)
    table = []
    started = False
    for r in range(1, r_max + 1):
        reg = _regress(svd.V, vdot, r, tau)
        if not started and len(reg.linear) == 0:
            continue
        started = True
        table.append({"r": r, "n_linear": int(len(reg.linear)),
                      "n_forcing": int(len(reg.forcing)),
                      "condition_number": condition_number(reg.B) if len(reg.linear) else None})
    if not table:
        raise ClassificationError(f"no rank up to {r_max} yields a linear mode at tau={tau}")
    best = table[0]
    for row in table[1:]:
        if _better(row["condition_number"], best["condition_number"]):
            best = row
    return best["r"], table


def _better(candidate, incumbent) -> bool:
    if candidate is None:
        return False
    if incumbent is None:
        return True
    if math.isinf(candidate) or math.isinf(incumbent):
        return candidate > incumbent
    return candidate > incumbent * (1 + TIE_RTOL)
