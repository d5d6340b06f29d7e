"""Eigen-analysis of the mHAVOK dynamics matrix and per-system parameter recipes.

All eigenvalues are continuous-time (rad per time unit): a mode is a
conjugate pair -decay +/- i*frequency, or a real eigenvalue with frequency 0.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import jv

from .baselines import percent_error
from .errors import DomainError, LadderAmbiguityError, UnresolvedSidebandsError


@dataclass(frozen=True)
class Mode:
    decay: float  # Re(lambda)
    frequency: float  # |Im(lambda)|
    indices: tuple[int, ...]  # positions in EigenSpectrum.eigenvalues
    paired: bool = True
    amplitude: float = math.nan  # weight of the mode in the observables, if known


@dataclass
class EigenSpectrum:
    eigenvalues: np.ndarray
    modes: list[Mode]
    residual_unpaired: list[int] = field(default_factory=list)

    @property
    def pairs(self) -> list[Mode]:
        return [m for m in self.modes if m.paired]

    @property
    def has_amplitudes(self) -> bool:
        return bool(self.modes) and not any(math.isnan(m.amplitude) for m in self.modes)

    def frequencies(self) -> np.ndarray:
        return np.array([m.frequency for m in self.pairs])

    def dominant_pairs(self, k: int) -> list[Mode]:
        """The ``k`` pairs of largest amplitude, ascending in frequency."""
        if not self.has_amplitudes:
            raise DomainError("spectrum carries no mode amplitudes")
        ranked = sorted(self.pairs, key=lambda m: -m.amplitude)[:k]
        return sorted(ranked, key=lambda m: m.frequency)


def eigen_spectrum(a: np.ndarray, dt: float | None = None, *, x0: np.ndarray | None = None,
                   lift: np.ndarray | None = None, pair_rtol: float = 1e-8) -> EigenSpectrum:
    """Eigenvalues of a real square matrix grouped into conjugate-pair modes.

    Parameters
    ----------
    a : ndarray
        Continuous-time dynamics matrix.
    dt : float, optional
        Sampling period of the data behind ``a``; informational only, since
        the eigenvalues are already continuous-time.
    x0, lift : ndarray, optional
        Initial state and the linear map from state to observables. When
        ``x0`` is given, each mode's amplitude is |c_i| * ||lift w_i||, with
        x0 = sum_i c_i w_i over the eigenvectors w_i (the pair sums both
        members).
    pair_rtol : float
        Conjugate pairing tolerance relative to max(||a||_F, 1).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"need a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    if a.size == 0:
        return EigenSpectrum(np.zeros(0, dtype=complex), [])
    ev, w = np.linalg.eig(a)
    amp = np.full(len(ev), math.nan)
    if x0 is not None:
        coef = np.linalg.lstsq(w, np.asarray(x0, dtype=complex), rcond=None)[0]
        lifted = w if lift is None else np.asarray(lift) @ w
        amp = np.abs(coef) * np.linalg.norm(lifted, axis=0)
    tol = pair_rtol * max(np.linalg.norm(a), 1.0)
    used = np.zeros(len(ev), dtype=bool)
    modes, unpaired = [], []
    for i in np.argsort(-ev.imag, kind="stable"):
        if used[i]:
            continue
        used[i] = True
        if abs(ev[i].imag) <= tol:
            modes.append(Mode(float(ev[i].real), 0.0, (int(i),), False, float(amp[i])))
            continue
        free = np.flatnonzero(~used)
        if free.size:
            dist = np.abs(ev[free] - np.conj(ev[i]))
            j = free[np.argmin(dist)]
            if dist.min() <= tol:
                used[j] = True
                modes.append(Mode(float(0.5 * (ev[i].real + ev[j].real)), float(abs(ev[i].imag)),
                                  (int(i), int(j)), True, float(amp[i] + amp[j])))
                continue
        unpaired.append(int(i))
    modes.sort(key=lambda m: (m.frequency, m.decay))
    return EigenSpectrum(ev, modes, unpaired)


def model_spectrum(model) -> EigenSpectrum:
    """Spectrum of a fitted HavokModel with amplitudes in the first delay block."""
    lift = model.U_c[:model.q] * model.S_c
    return eigen_spectrum(model.A, model.dt, x0=model.x0, lift=lift)


@dataclass
class ParameterReport:
    system: str
    retrieved: dict[str, float]
    truth: dict[str, float] = field(default_factory=dict)
    percent_errors: dict[str, float] = field(default_factory=dict)
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    provenance: dict[str, list[int]] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def with_truth(self, truth: dict[str, float]) -> "ParameterReport":
        """Attach ground truth and fill percent errors for every shared key."""
        self.truth = {k: float(v) for k, v in truth.items()}
        for key, value in self.truth.items():
            if key not in self.retrieved:
                continue
            if value == 0:
                self.percent_errors[key] = abs(self.retrieved[key])
                self.flags.append(f"absolute_error:{key}")
            else:
                self.percent_errors[key] = percent_error(value, self.retrieved[key])
        return self

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "retrieved": self.retrieved,
            "truth": self.truth,
            "percent_errors": self.percent_errors,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "provenance": self.provenance,
            "flags": self.flags,
            "extras": self.extras,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def retrieve_qho_params(spectrum: EigenSpectrum) -> ParameterReport:
    """omega_y = lowest, omega_x = highest of the two oscillator modes.

    With more than two pairs the two of largest amplitude are used when the
    spectrum carries amplitudes, else the extreme frequencies. kappa is
    -2 times the mean real part of the two selected pairs.
    """
    pairs = spectrum.pairs
    if len(pairs) < 2:
        raise DomainError(f"need at least two oscillatory modes, found {len(pairs)}")
    if len(pairs) > 2 and spectrum.has_amplitudes:
        low, high = spectrum.dominant_pairs(2)
    else:
        low, high = pairs[0], pairs[-1]
    report = ParameterReport(
        "qho",
        {"omega_x": high.frequency, "omega_y": low.frequency,
         "kappa": -(low.decay + high.decay)},
        eigenvalues=spectrum.eigenvalues,
        provenance={"omega_x": list(high.indices), "omega_y": list(low.indices),
                    "kappa": list(low.indices + high.indices)},
    )
    if len(pairs) > 2:
        report.flags.append(f"extra_modes:{len(pairs) - 2}")
    return report


def _ladder_fit(freqs: np.ndarray, bases, spacings, n_rungs: int, tol: float):
    """Score two ladders base + n*spacing against the frequencies.

    A ladder counts its rungs n = 0, 1, ... up to the first rung (or
    ``n_rungs``) with no frequency within ``tol * min(spacings)``. Returns the
    total count over both ladders and the RMS distance of the matched
    frequencies relative to min(spacings).
    """
    scale = min(spacings)
    count, dists = 0, []
    for b, s in zip(bases, spacings):
        for n in range(n_rungs):
            d = np.min(np.abs(freqs - (b + n * s))) / scale
            if d > tol:
                break
            count += 1
            dists.append(d)
    return count, float(np.sqrt(np.mean(np.square(dists)))) if dists else 0.0


def _seed_options(pairs: list[Mode], freqs: np.ndarray, spectrum: EigenSpectrum):
    """Candidate (y0, y1, x0, x1) pair indices into ``pairs``."""
    if spectrum.has_amplitudes and len(pairs) >= 4:
        # rungs 0 and 1 of both ladders carry the largest weights
        strong = spectrum.dominant_pairs(4)
        idx = [pairs.index(m) for m in strong]
        y0, a, b, c = idx
        return [(y0, a, b, c), (y0, b, a, c), (y0, c, a, b)]
    rest = range(1, len(freqs))
    return [(0, iy1, ix0, ix1) for iy1 in rest for ix0 in rest
            for ix1 in range(ix0 + 1, len(freqs)) if len({iy1, ix0, ix1}) == 3]


def retrieve_kerr_ladder(spectrum: EigenSpectrum, n_expected_rungs: int | None = None,
                         tol: float = 0.05) -> ParameterReport:
    """Split the mode frequencies into the y- and x-mode Kerr ladders.

    Each ladder is omega_i + n chi_i with omega_y < omega_x. When the
    spectrum carries amplitudes, the four strongest pairs are the two lowest
    rungs of each ladder and only their three consistent groupings are
    tried; otherwise the lowest frequency is the y base and every choice of
    the other three seeds is tried. A grouping scores the number of rungs,
    counted upward from each base until the first miss (at most
    ``n_expected_rungs`` per ladder, unlimited when None), that have a mode
    within ``tol * min(chi)``; ties go to the smaller RMS mismatch. A
    runner-up with the same score, comparable mismatch and different
    parameters makes the grouping ambiguous.
    """
    pairs = spectrum.pairs
    freqs = np.array([m.frequency for m in pairs])
    if len(freqs) < 4:
        raise LadderAmbiguityError(f"need at least four oscillatory modes, found {len(freqs)}",
                                   freqs)
    rungs = len(freqs) if n_expected_rungs is None else max(2, int(n_expected_rungs))
    candidates = []
    for iy0, iy1, ix0, ix1 in _seed_options(pairs, freqs, spectrum):
        chi_y, chi_x = freqs[iy1] - freqs[iy0], freqs[ix1] - freqs[ix0]
        if min(chi_x, chi_y) <= tol * freqs[iy0]:
            continue
        score, rms = _ladder_fit(freqs, (freqs[iy0], freqs[ix0]), (chi_y, chi_x), rungs, tol)
        candidates.append((score, rms, (iy0, iy1, ix0, ix1),
                           np.array([freqs[ix0], chi_y, chi_x])))
    if not candidates:
        raise LadderAmbiguityError("no two-ladder split of the spectrum", freqs)
    candidates.sort(key=lambda c: (-c[0], c[1]))
    best = candidates[0]
    for other in candidates[1:]:
        if other[0] < best[0]:
            break
        different = np.any(np.abs(other[3] - best[3]) > tol * best[3])
        if different and other[1] <= 2 * best[1] + 1e-3:
            raise LadderAmbiguityError(
                "two ladder groupings explain the spectrum equally well", freqs)
    iy0, iy1, ix0, ix1 = best[2]
    m_y0, m_y1, m_x0, m_x1 = pairs[iy0], pairs[iy1], pairs[ix0], pairs[ix1]
    report = ParameterReport(
        "kerr",
        {"omega_y": m_y0.frequency, "omega_x": m_x0.frequency,
         "chi_y": m_y1.frequency - m_y0.frequency, "chi_x": m_x1.frequency - m_x0.frequency},
        eigenvalues=spectrum.eigenvalues,
        provenance={"omega_y": list(m_y0.indices), "omega_x": list(m_x0.indices),
                    "chi_y": list(m_y0.indices + m_y1.indices),
                    "chi_x": list(m_x0.indices + m_x1.indices)},
        extras={"ladder_score": best[0], "ladder_residual": best[1],
                "frequencies": freqs.tolist()},
    )
    if sorted(best[2]) != list(best[2]):
        report.flags.append("ladders_interleaved")
    return report


def retrieve_cross_kerr(spectrum: EigenSpectrum, omega_known: tuple[float, float],
                        n_ss: tuple[float, float]) -> ParameterReport:
    """chi_xy from the shifts Omega_i - omega_i = chi_xy <n_j>_ss.

    ``omega_known`` is (omega_x, omega_y); ``n_ss`` is (<n_y>_ss, <n_x>_ss),
    the partner occupation for each shift. Omega_i is the pair frequency
    nearest omega_i.
    """
    wx, wy = omega_known
    ny, nx = n_ss
    if ny <= 0 or nx <= 0:
        raise DomainError(f"steady-state occupations must be positive, got {n_ss}")
    pairs = spectrum.pairs
    if not pairs:
        raise DomainError("spectrum has no oscillatory modes")
    freqs = np.array([m.frequency for m in pairs])
    mx = pairs[int(np.argmin(np.abs(freqs - wx)))]
    my = pairs[int(np.argmin(np.abs(freqs - wy)))]
    est_x = (mx.frequency - wx) / ny
    est_y = (my.frequency - wy) / nx
    return ParameterReport(
        "cross_kerr",
        {"chi_xy": 0.5 * (est_x + est_y), "Omega_x": mx.frequency, "Omega_y": my.frequency,
         "chi_xy_from_x": est_x, "chi_xy_from_y": est_y},
        eigenvalues=spectrum.eigenvalues,
        provenance={"chi_xy": list(mx.indices + my.indices), "Omega_x": list(mx.indices),
                    "Omega_y": list(my.indices)},
        extras={"n_ss": [ny, nx]},
    )


def dressed_frequencies(omega_q: float, omega_x: float, g: float) -> tuple[float, float]:
    split = math.sqrt(4 * g * g + (omega_q - omega_x) ** 2)
    centre = omega_q + omega_x
    return 0.5 * (centre - split), 0.5 * (centre + split)


def retrieve_jc_coupling(spectrum: EigenSpectrum, omega_q: float,
                         omega_x: float) -> ParameterReport:
    """Invert the dressed-frequency splitting for the coupling g.

    Candidate pairs (w_minus, w_plus) must bracket (omega_q + omega_x)/2; the
    pair whose sum is closest to omega_q + omega_x (the dressed-pair sum
    rule) is used, ties going to the narrower pair. Returns g = 0 with a
    ``below_detuning`` flag when the splitting is smaller than |Delta|.
    """
    centre = 0.5 * (omega_q + omega_x)
    detuning = omega_q - omega_x
    pairs = spectrum.pairs
    below = [m for m in pairs if m.frequency <= centre]
    above = [m for m in pairs if m.frequency > centre]
    if not below or not above:
        raise DomainError("no pair of modes brackets the dressed-frequency centre")
    lo, hi = min(itertools.product(below, above),
                 key=lambda p: (abs(p[0].frequency + p[1].frequency - 2 * centre),
                                p[1].frequency - p[0].frequency))
    split_sq = (hi.frequency - lo.frequency) ** 2 - detuning ** 2
    report = ParameterReport(
        "jaynes_cummings",
        {"g": 0.5 * math.sqrt(max(0.0, split_sq)), "omega_minus": lo.frequency,
         "omega_plus": hi.frequency},
        eigenvalues=spectrum.eigenvalues,
        provenance={"g": list(lo.indices + hi.indices), "omega_minus": list(lo.indices),
                    "omega_plus": list(hi.indices)},
    )
    if split_sq < 0:
        report.flags.append("below_detuning")
    return report


def _comb_fit(freqs: np.ndarray, orders: np.ndarray):
    design = np.column_stack([np.ones_like(freqs), orders])
    (wx, wf), *_ = np.linalg.lstsq(design, freqs, rcond=None)
    resid = freqs - design @ np.array([wx, wf])
    return wx, wf, float(np.sqrt(np.mean(resid ** 2)))


def retrieve_modulation_frequency(spectrum: EigenSpectrum, omega_x_hint: float,
                                  omega_y_hint: float, window: int = 5,
                                  rel_tol: float = 0.03) -> ParameterReport:
    """Fit the sideband comb omega_x + m omega_f to the spectrum.

    The mode nearest ``omega_y_hint`` is set aside and the one nearest
    ``omega_x_hint`` anchors the comb. Candidate spacings come from every
    (frequency, |m| <= window) combination; each assigns integer orders to all
    remaining modes and is refit by linear least squares over (omega_x,
    omega_f). The accepted fit is the largest spacing whose RMS residual is
    below ``rel_tol * omega_f`` with every mode on the comb; otherwise the
    sidebands are unresolved.
    """
    pairs = spectrum.pairs
    freqs = np.array([m.frequency for m in pairs])
    if len(freqs) < 3:
        raise UnresolvedSidebandsError(f"only {len(freqs)} oscillatory modes", freqs)
    iy = int(np.argmin(np.abs(freqs - omega_y_hint)))
    keep = np.array([i for i in range(len(freqs)) if i != iy])
    comb = freqs[keep]
    anchor = comb[int(np.argmin(np.abs(comb - omega_x_hint)))]
    spacings = sorted({abs(f - anchor) / m for f in comb if f != anchor
                       for m in range(1, window + 1)}, reverse=True)
    best = None
    for s in spacings:
        if s <= 0:
            continue
        orders = np.rint((comb - anchor) / s)
        if np.any(np.abs(orders) > window) or len(np.unique(orders)) < min(3, len(comb)):
            continue
        wx, wf, rms = _comb_fit(comb, orders)
        if wf <= 0:
            continue
        if rms <= rel_tol * wf:
            best = (wx, wf, rms, orders)
            break
        if best is None or rms / wf < best[2] / best[1]:
            best = (wx, wf, rms, orders)  # closest miss, reported in the error
    if best is None or best[2] > rel_tol * best[1]:
        raise UnresolvedSidebandsError(
            "sideband frequencies do not form a comb around omega_x", freqs,
            None if best is None else best[2])
    wx, wf, rms, orders = best
    report = ParameterReport(
        "modulated",
        {"omega_f": float(wf), "omega_x": float(wx), "omega_y": float(freqs[iy])},
        eigenvalues=spectrum.eigenvalues,
        provenance={"omega_f": [i for k in keep for i in pairs[k].indices],
                    "omega_y": list(pairs[iy].indices)},
        extras={"comb_residual": rms, "orders": orders.astype(int).tolist()},
    )
    return report


def modulation_oracle(alpha0: complex, kappa: float, omega_x: float, delta: float,
                      omega_f: float, t, n_bessel: int = 20) -> np.ndarray:
    """Bessel-sideband expansion of <a_x(t)> under delta cos(omega_f t) a^dag a."""
    if n_bessel < 1 or omega_f <= 0:
        raise DomainError("need n_bessel >= 1 and omega_f > 0")
    t = np.asarray(t, dtype=float)
    orders = np.arange(-n_bessel, n_bessel + 1)
    weights = jv(orders, delta / omega_f)
    phases = np.exp(-1j * np.multiply.outer(t, omega_x + orders * omega_f))
    return alpha0 * np.exp(-0.5 * kappa * t) * (phases @ weights)
