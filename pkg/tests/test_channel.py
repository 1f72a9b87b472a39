import math

import numpy as np
import pytest

from faao.channel import (
    ChannelRealization,
    SmallScaleFactor,
    distance,
    draw_small_scale,
    rician_weights,
)
from faao.scenario import default_scenario


def test_distance_examples():
    assert distance([300, 300], [300, 300], 100) == pytest.approx(100)
    assert distance([0, 0], [0, 0], 100) == pytest.approx(100)
    assert distance([300, 400], [0, 0], 1e-9) == pytest.approx(500)


def test_distance_never_below_altitude(rng):
    pts = rng.uniform(-1000, 1000, size=(200, 2))
    assert np.all(distance(pts, [10.0, -5.0], 100.0) >= 100.0)


def test_rician_weights():
    assert rician_weights(3.0) == pytest.approx((math.sqrt(3 / 4), math.sqrt(1 / 4)))
    assert rician_weights(math.inf) == (1.0, 0.0)
    assert rician_weights(0.0) == (0.0, 1.0)


def test_pure_los_and_pure_nlos_limits():
    los = draw_small_scale(default_scenario().replace(rician_K=math.inf))
    assert np.array_equal(los.hop1, np.ones_like(los.hop1))
    nlos = draw_small_scale(default_scenario().replace(rician_K=0.0))
    rng = np.random.default_rng(default_scenario().seed)
    n = default_scenario().n_slots
    expect = (rng.standard_normal((n, 2, 2)) + 1j * rng.standard_normal((n, 2, 2))) / math.sqrt(2)
    assert np.array_equal(nlos.hop1, expect)


def test_full_channel_example():
    s = default_scenario()
    eye = np.repeat(np.eye(2, dtype=complex)[None], s.n_slots, axis=0)
    real = ChannelRealization(SmallScaleFactor(eye, eye), np.full(s.n_slots, 100.0), np.full(s.n_slots, 100.0), 1e-5)
    assert np.allclose(real.full_channel(0, 1), math.sqrt(1e-5 * 1e-4) * np.eye(2), rtol=1e-12, atol=0)
    assert math.sqrt(1e-9) == pytest.approx(3.1623e-5, rel=1e-4)


def test_zero_small_scale_gives_zero_channel():
    z = np.zeros((3, 2, 2), dtype=complex)
    real = ChannelRealization(SmallScaleFactor(z, z), np.full(3, 150.0), np.full(3, 150.0), 1e-5)
    assert not np.any(real.full_channels(1))


def test_doubling_distance_halves_channel():
    s = default_scenario()
    ss = draw_small_scale(s)
    pos = np.zeros((s.n_slots, 2))
    a = ChannelRealization(ss, np.full(s.n_slots, 120.0), np.full(s.n_slots, 120.0), s.rho0)
    b = ChannelRealization(ss, np.full(s.n_slots, 240.0), np.full(s.n_slots, 240.0), s.rho0)
    assert np.allclose(b.full_channels(2), a.full_channels(2) / 2, rtol=1e-14, atol=0)
    assert ChannelRealization.for_positions(ss, pos, s).n_slots == s.n_slots


def test_factorization_identity(rng):
    s = default_scenario()
    ss = draw_small_scale(s)
    pos = rng.uniform(-500, 500, size=(s.n_slots, 2))
    real = ChannelRealization.for_positions(ss, pos, s)
    for hop in (1, 2):
        lhs = np.sum(np.abs(real.full_channels(hop)) ** 2, axis=(1, 2))
        rhs = s.rho0 / real.distances(hop) ** 2 * np.sum(np.abs(ss.hop(hop)) ** 2, axis=(1, 2))
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=0)


def test_nlos_second_moment():
    s = default_scenario().replace(rician_K=0.0, horizon_T=2600.0, v_max=1000.0)
    ss = draw_small_scale(s)
    assert ss.hop1.size >= 1e4
    pooled = np.concatenate([ss.hop1.ravel(), ss.hop2.ravel()])
    assert pooled.size >= 2e4
    # 10^5 entries from repeated seeds
    more = [draw_small_scale(s.replace(seed=k)).hop1.ravel() for k in range(10)]
    sample = np.concatenate(more)
    assert sample.size >= 1e5
    assert abs(np.mean(np.abs(sample) ** 2) - 1.0) < 0.02


def test_seed_determinism():
    s = default_scenario()
    a, b = draw_small_scale(s), draw_small_scale(s)
    assert np.array_equal(a.hop1, b.hop1) and np.array_equal(a.hop2, b.hop2)
    c = draw_small_scale(s.replace(seed=s.seed + 1))
    assert a.hop1[0, 0, 0] != c.hop1[0, 0, 0]


def test_small_scale_is_read_only():
    ss = draw_small_scale(default_scenario())
    with pytest.raises(ValueError):
        ss.hop1[0, 0, 0] = 0


def test_slot_out_of_range():
    s = default_scenario()
    real = ChannelRealization.for_positions(draw_small_scale(s), np.zeros((s.n_slots, 2)), s)
    with pytest.raises(IndexError):
        real.full_channel(s.n_slots, 1)


def test_ula_mode_unit_modulus():
    s = default_scenario().replace(los_mode="ula", rician_K=math.inf)
    ss = draw_small_scale(s)
    assert np.allclose(np.abs(ss.hop1), 1.0)
    assert np.linalg.matrix_rank(ss.hop1[0]) == 1
