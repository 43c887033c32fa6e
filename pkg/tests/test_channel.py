import numpy as np
import pytest

from conftest import FIRST_SLOT_FLOWS, FIRST_SLOT_SINR_NO_TRANSFER, FIRST_SLOT_SINR_TRANSFER
from ehwsn.channel import (
    ChannelState,
    PowerVector,
    capacity_approx,
    capacity_exact,
    interference,
    interference_weights,
    link_delay,
    sample_gains,
    sinr,
    total_delay,
)
from ehwsn.errors import CapacityViolationError, DimensionError


@pytest.fixture
def channel():
    return ChannelState([[1., 0.01, 0.], [0.02, 2., 0.03], [0., 0.04, 1.]], [1e-5, 2e-5, 1e-5])


def test_channel_state_invalid():
    with pytest.raises(DimensionError):
        ChannelState(np.ones((2, 3)), 1e-5)
    with pytest.raises(ValueError):
        ChannelState([[1., -0.1], [0.1, 1.]], 1e-5)
    with pytest.raises(ValueError):
        ChannelState([[0., 0.1], [0.1, 1.]], 1e-5)
    with pytest.raises(ValueError):
        ChannelState(np.eye(2), 0.)


def test_channel_orthogonal_subset(channel):
    oc = channel.orthogonal()
    np.testing.assert_array_equal(oc.G, np.diag([1., 2., 1.]))
    sub = channel.subset([2, 0])
    np.testing.assert_array_equal(sub.G, [[1., 0.], [0., 1.]])
    np.testing.assert_array_equal(sub.sigma, [1e-5, 1e-5])


def test_interference(channel):
    p = np.array([1., 2., 3.])
    # column l collects what the receiver of link l hears
    np.testing.assert_allclose(interference(channel, p), [1e-5 + 0.04, 2e-5 + 0.01 + 0.12, 1e-5 + 0.06])
    np.testing.assert_allclose(sinr(channel, p), np.diag(channel.G) * p / interference(channel, p))
    assert sinr(channel, PowerVector(p), l=1) == pytest.approx(4. / (2e-5 + 0.13))
    with pytest.raises(DimensionError):
        interference(channel, np.ones(2))


def test_sinr_zero_interference():
    ch = ChannelState(np.eye(2), 1e-5)
    np.testing.assert_allclose(sinr(ch, [1., 2.]), [1e5, 2e5])


def test_power_vector():
    pv = PowerVector([1., np.e])
    np.testing.assert_allclose(pv.ptilde, [0., 1.])
    np.testing.assert_allclose(PowerVector.from_log([0., 1.]).p, [1., np.e])
    with pytest.raises(ValueError):
        PowerVector([1., 0.])


def test_approximation_law(rng):
    # 1/2.ln(SINR) underestimates 1/2.ln(1 + SINR) by exactly 1/2.ln(1 + 1/SINR)
    for _ in range(1000):
        L = rng.integers(1, 6)
        ch = sample_gains(rng, L, gain_max=rng.uniform(1e-3, 0.5), noise=10 ** rng.uniform(-6, -2))
        p = 10 ** rng.uniform(-3, 1.5, size=L)
        exact = capacity_exact(ch, p)
        approx = capacity_approx(ch, np.log(p))
        gap = exact - approx
        assert np.all(gap >= 0.)
        np.testing.assert_allclose(gap, 0.5 * np.log1p(1. / sinr(ch, p)), rtol=0., atol=1e-12)


def test_capacity_single_link(channel):
    p = np.array([1., 2., 3.])
    assert capacity_exact(channel, p, l=0) == pytest.approx(0.5 * np.log1p(sinr(channel, p, l=0)))
    assert capacity_approx(channel, PowerVector(p), l=2) == pytest.approx(0.5 * np.log(sinr(channel, p, l=2)))


def test_interference_weights(channel):
    y = np.log([1., 2., 3.])
    W = interference_weights(channel, y)
    np.testing.assert_array_equal(np.diag(W), 0.)
    # interference shares plus the noise share add up to one at every receiver
    noise_share = channel.sigma / interference(channel, np.exp(y))
    np.testing.assert_allclose(W.sum(axis=0) + noise_share, 1.)


def test_link_delay():
    assert link_delay(0.5, 1.5) == pytest.approx(0.5)
    assert link_delay(0., 0.1) == 0.
    with pytest.raises(CapacityViolationError) as e:
        link_delay(0.5, 0.5, link="l3")
    assert e.value.link == "l3"
    assert e.value.category == "capacity"


def test_total_delay():
    assert total_delay([0.5, 0.25], [1.5, 0.5]) == pytest.approx(1.5)
    with pytest.raises(CapacityViolationError, match="l2"):
        total_delay([0.5, 0.5], [1., 0.2], labels=["l1", "l2"])
    with pytest.raises(DimensionError):
        total_delay([0.5], [1., 2.])


def test_first_slot_delay_from_sinr():
    # total delay recomputed from the reported SINRs of the first slot with the high-SINR capacity
    for sinr_values, expected in ((FIRST_SLOT_SINR_NO_TRANSFER, 1.8858), (FIRST_SLOT_SINR_TRANSFER, 1.8857)):
        delay = total_delay(FIRST_SLOT_FLOWS, 0.5 * np.log(sinr_values))
        assert delay == pytest.approx(expected, abs=0.01)


def test_sample_gains(rng):
    ch = sample_gains(rng, 5)
    np.testing.assert_array_equal(ch.direct, 1.)
    off = ch.G[~np.eye(5, dtype=bool)]
    assert np.all((off > 0.) & (off <= 0.01))
    np.testing.assert_array_equal(ch.sigma, 1e-5)
    same = sample_gains(np.random.default_rng(1234), 5)
    np.testing.assert_array_equal(ch.G, same.G)


def test_sinr_scale_invariant(rng):
    # scaling all powers and noise powers by the same factor leaves the SINRs unchanged
    for _ in range(200):
        L = rng.integers(1, 6)
        ch = sample_gains(rng, L, gain_max=rng.uniform(1e-3, 0.5), noise=10 ** rng.uniform(-6, -2))
        p = 10 ** rng.uniform(-3, 1.5, size=L)
        k = 10 ** rng.uniform(-3, 3)
        scaled = ChannelState(ch.G, k * ch.sigma)
        np.testing.assert_allclose(sinr(scaled, k * p), sinr(ch, p), rtol=1e-12)


def test_link_delay_monotone(rng):
    for _ in range(1000):
        d = rng.uniform(0., 2.)
        c = d + rng.uniform(1e-3, 2.)
        step = rng.uniform(1e-3, 1.)
        # more capacity, less delay
        assert link_delay(d, c + step) < link_delay(d, c)
        # more flow on the same capacity, more delay
        more = min(d + step, 0.5 * (d + c))
        assert link_delay(more, c) > link_delay(d, c)


def test_capacity_approx_concave(rng):
    # 1/2.ln(SINR) is concave in the log-powers: midpoints never fall below the chord
    for _ in range(1000):
        L = rng.integers(1, 6)
        ch = sample_gains(rng, L, gain_max=rng.uniform(1e-3, 0.5), noise=10 ** rng.uniform(-6, -2))
        a = rng.uniform(-8., 3., size=L)
        b = rng.uniform(-8., 3., size=L)
        mid = capacity_approx(ch, 0.5 * (a + b))
        chord = 0.5 * (capacity_approx(ch, a) + capacity_approx(ch, b))
        assert np.all(mid >= chord - 1e-12)
