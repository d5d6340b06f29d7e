import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from qkoopman.embedding import delay_embed
from qkoopman.errors import SizeError
from qkoopman.quantum_sim import MultichannelSeries

signals = st.integers(1, 4).flatmap(
    lambda q: st.integers(12, 60).flatmap(
        lambda n: arrays(np.float64, (q, n), elements=st.floats(-1e3, 1e3, allow_nan=False))))


@given(signals, st.integers(2, 5), st.integers(1, 3))
@settings(max_examples=60, deadline=None)
def test_hankel_shift_identity(z, m, stride):
    q, n = z.shape
    if n < m * stride + 1:
        return
    h = delay_embed(z, m, stride, dt=0.1)
    assert h.matrix.shape == (q * m, n - (m - 1) * stride)
    # every block is the previous one shifted by one stride, bit for bit
    for b in range(m - 1):
        assert np.array_equal(h.block(b + 1)[:, :-stride], h.block(b)[:, stride:])
    assert np.array_equal(h.block(0), z[:, :h.cols])


def test_channel_order_within_block():
    s = MultichannelSeries(0.5, {"a": np.arange(10.0), "b": -np.arange(10.0)})
    h = delay_embed(s, 3)
    assert h.q == 2 and h.m == 3 and h.dt == 0.5
    assert np.array_equal(h.matrix[:, 0], [0, 0, 1, -1, 2, -2])


def test_errors():
    with pytest.raises(SizeError):
        delay_embed(np.zeros((1, 5)), 1, dt=0.1)
    with pytest.raises(SizeError):
        delay_embed(np.zeros((1, 5)), 5, dt=0.1)
    with pytest.raises(SizeError):
        delay_embed(np.zeros((1, 50)), 3)
