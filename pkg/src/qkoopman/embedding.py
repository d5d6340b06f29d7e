"""Block Hankel delay embedding of multichannel series."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SizeError
from .quantum_sim import MultichannelSeries


@dataclass(frozen=True, eq=False)
class BlockHankel:
    """(q*m) x cols matrix whose column k stacks z_k, z_{k+s}, ..., z_{k+(m-1)s}."""

    matrix: np.ndarray
    q: int
    m: int
    dt: float
    stride: int = 1

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def block(self, b: int) -> np.ndarray:
        return self.matrix[b * self.q:(b + 1) * self.q]


def delay_embed(series: MultichannelSeries | np.ndarray, m: int, stride: int = 1,
                dt: float | None = None) -> BlockHankel:
    """Stack ``m`` delayed copies of the q-channel signal.

    Within each time block the channels keep their input order. The result
    has N - (m-1)*stride columns.

    ``series`` may also be a raw (q, N) array, in which case ``dt`` must be
    given.
    """
    if isinstance(series, MultichannelSeries):
        z = series.values()
        dt = series.dt
    else:
        z = np.atleast_2d(np.asarray(series, dtype=float))
        if dt is None:
            raise SizeError("dt is required when embedding a raw array")
    if m < 2:
        raise SizeError(f"embedding dimension must be >= 2, got {m}")
    if stride < 1:
        raise SizeError(f"delay stride must be >= 1, got {stride}")
    q, n = z.shape
    if n < m * stride + 1:
        raise SizeError(f"series of length {n} too short for m={m}, stride={stride}")
    cols = n - (m - 1) * stride
    # slicing only, so every entry is a bit-exact copy of the input
    h = np.empty((q * m, cols), dtype=z.dtype)
    for b in range(m):
        h[b * q:(b + 1) * q] = z[:, b * stride:b * stride + cols]
    return BlockHankel(h, q, m, float(dt), stride)
