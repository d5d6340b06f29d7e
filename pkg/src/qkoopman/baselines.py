"""Reference frequency estimators: windowed FFT peaks and the matrix pencil."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError, SizeError


def percent_error(truth: float, estimate: float) -> float:
    """100 |truth - estimate| / |truth|.

    For zero ``truth`` the absolute error is returned instead, with a warning.
    """
    diff = abs(truth - estimate)
    if truth == 0:
        warnings.warn("zero ground truth; reporting absolute error", RuntimeWarning, stacklevel=2)
        return float(diff)
    return float(100.0 * diff / abs(truth))


class FftPeaks(NamedTuple):
    omegas: np.ndarray
    magnitudes: np.ndarray
    incomplete: bool


def fft_peak_frequencies(signal: np.ndarray, dt: float, k: int) -> FftPeaks:
    """Angular frequencies of the ``k`` strongest spectral peaks.

    The signal is mean-removed and Hann-windowed; each peak is refined by a
    parabola through the log-magnitudes of its three bins. ``incomplete`` is
    set when fewer than ``k`` local maxima exist. Peaks are returned in
    descending magnitude.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1 or len(x) < 16:
        raise SizeError("FFT baseline needs a single channel of at least 16 samples")
    if dt <= 0:
        raise DomainError(f"sampling period must be positive, got {dt}")
    n = len(x)
    spectrum = np.abs(np.fft.rfft((x - x.mean()) * np.hanning(n)))
    floor = 1e-12 * max(spectrum.max(), np.finfo(float).tiny)
    interior = np.arange(1, len(spectrum) - 1)
    is_peak = ((spectrum[interior] > spectrum[interior - 1])
               & (spectrum[interior] >= spectrum[interior + 1])
               & (spectrum[interior] > floor))
    peaks = interior[is_peak]
    peaks = peaks[np.argsort(spectrum[peaks])[::-1]][:k]
    logmag = np.log(np.maximum(spectrum, np.finfo(float).tiny))
    omegas, mags = [], []
    for i in peaks:
        a, b, c = logmag[i - 1], logmag[i], logmag[i + 1]
        denom = a - 2 * b + c
        offset = 0.5 * (a - c) / denom if denom != 0 else 0.0
        omegas.append(2 * math.pi * (i + offset) / (n * dt))
        mags.append(math.exp(b - 0.25 * (a - c) * offset))
    return FftPeaks(np.array(omegas), np.array(mags), len(peaks) < k)


@dataclass
class PoleEstimate:
    poles: np.ndarray  # continuous-time s = sigma + i omega, sorted by |Im s|
    z: np.ndarray
    amplitudes: np.ndarray | None = None
    flags: list[str] = field(default_factory=list)

    def frequencies(self) -> np.ndarray:
        """Distinct nonnegative angular frequencies, ascending."""
        w = np.abs(self.poles.imag)
        keep = self.poles.imag >= 0
        return np.sort(w[keep])


def _pencil_hankel(x: np.ndarray, pencil: int) -> np.ndarray:
    n = len(x)
    rows = n - pencil
    idx = np.arange(rows)[:, None] + np.arange(pencil + 1)[None, :]
    return x[idx]


def matrix_pencil(signal: np.ndarray, dt: float, order: int, pencil: int | None = None,
                  amplitudes: bool = False) -> PoleEstimate:
    """Generalised pencil-of-function pole estimate.

    ``signal`` is one channel of length N or a (q, N) stack; stacked channels
    share poles and their data matrices are concatenated row-wise. The pencil
    parameter defaults to N // 3.
    """
    x = np.atleast_2d(np.asarray(signal))
    q, n = x.shape
    pencil = n // 3 if pencil is None else int(pencil)
    if not n > pencil > order >= 1:
        raise SizeError(f"need N > L > p >= 1, got N={n}, L={pencil}, p={order}")
    y = np.vstack([_pencil_hankel(row, pencil) for row in x])
    _, s, vh = np.linalg.svd(y, full_matrices=False)
    flags = []
    if s[0] == 0:
        flags.append("zero_signal")
        return PoleEstimate(np.zeros(0, dtype=complex), np.zeros(0, dtype=complex), None,
                            flags + ["unstable"])
    numerical_rank = int(np.sum(s > s[0] * max(y.shape) * np.finfo(float).eps))
    if numerical_rank < order:
        flags.append("order_exceeds_rank")
    v = vh[:order].T  # (L+1, p); rows of vh span the signal row space
    v1, v2 = v[:-1], v[1:]
    z = np.linalg.eigvals(np.linalg.pinv(v1) @ v2)
    with np.errstate(divide="ignore"):
        poles = np.log(z.astype(complex)) / dt
    if not np.all(np.isfinite(poles)) or np.any(np.abs(z) > 1 + 1e-6) or "order_exceeds_rank" in flags:
        flags.append("unstable")
    order_idx = np.lexsort((poles.imag, np.abs(poles.imag)))
    poles, z = poles[order_idx], z[order_idx]
    amps = None
    if amplitudes and np.all(np.isfinite(poles)):
        vander = z[None, :] ** np.arange(n)[:, None]
        amps = np.linalg.lstsq(vander, x.T.astype(complex), rcond=None)[0].T
    return PoleEstimate(poles, z, amps, flags)
