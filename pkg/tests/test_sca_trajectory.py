import math

import numpy as np
import pytest

from conftest import central_difference, rel_err
from faao.channel import ChannelRealization, SmallScaleFactor, draw_small_scale
from faao.kinematics import check_feasibility, straight_line_init
from faao.sca_precoder import PrecoderSchedule, hop_differences
from faao.sca_trajectory import (
    TrajectorySurrogate,
    _Param,
    _surrogate_objective,
    build_surrogate,
    exponents,
    exponents_lb,
    sca_trace_csv,
    slot_sum,
    solve_trajectory_step,
    surrogate_exponent_lb,
)
from faao.scenario import default_scenario


def siso_scenario(**kw):
    base = dict(n_tx=1, n_relay=1, n_rx=1, horizon_T=1.0, uav_end=(0.0, 300.0), noise_power_dbm_hop1=30.0, noise_power_dbm_hop2=30.0)
    base.update(kw)
    return default_scenario().replace(**base)


def hand_surrogate(A, expansion):
    n = len(expansion)
    coeff = np.zeros((n, 4))
    coeff[:, 1] = A
    mask = ~np.eye(2, dtype=bool).ravel()
    return TrajectorySurrogate(
        expansion=np.asarray(expansion, float), coeff_hop1=coeff, coeff_hop2=coeff.copy(),
        offdiag_hop1=mask, offdiag_hop2=mask, offset_hop1=0.0, offset_hop2=0.0, const_hop1=0.0, const_hop2=0.0,
        rho0=1e-5, altitude=100.0, ground_hop1=np.zeros(2), ground_hop2=np.zeros(2))


def test_hand_lower_bound_example():
    sur = hand_surrogate(1e9, [[0.0, 0.0]])
    lb = surrogate_exponent_lb(sur, [30.0, 40.0], slot=0, hop=1, pair=1)
    exact = exponents(sur, 1, np.array([[30.0, 40.0]]), active_only=False)[0, 1]
    assert exact == pytest.approx(0.8, abs=1e-12)
    assert lb == pytest.approx(0.75, abs=1e-12)
    assert lb <= exact


def test_lower_bound_zero_coefficient():
    sur = hand_surrogate(0.0, [[10.0, 0.0]])
    assert surrogate_exponent_lb(sur, [-50.0, 80.0], 0, 1, 1) == 0.0


def test_surrogate_coefficients_siso_hand_value():
    s = siso_scenario()
    ones = np.ones((s.n_slots, 1, 1), dtype=complex)
    real = ChannelRealization.for_positions(SmallScaleFactor(ones, ones), straight_line_init(s).w, s)
    prec = PrecoderSchedule(ones.copy(), ones.copy())
    sur = build_surrogate(real, prec, straight_line_init(s), s)
    # u = +-2: A = 4 / 4 = 1; diagonal pairs vanish
    assert np.allclose(sur.coeff(1)[:, [1, 2]], 1.0)
    assert np.all(sur.coeff(1)[:, [0, 3]] == 0.0)


def test_zero_precoders_zero_coefficients(low_snr):
    real = ChannelRealization.for_positions(draw_small_scale(low_snr), straight_line_init(low_snr).w, low_snr)
    zero = PrecoderSchedule(np.zeros((low_snr.n_slots, 2, 2), complex), np.zeros((low_snr.n_slots, 2, 2), complex))
    sur = build_surrogate(real, zero, straight_line_init(low_snr), low_snr)
    assert not np.any(sur.coeff(1)) and not np.any(sur.coeff(2))


def unsaturated_surrogate(s):
    traj = straight_line_init(s)
    real = ChannelRealization.for_positions(draw_small_scale(s), traj.w, s)
    return build_surrogate(real, PrecoderSchedule.isotropic(s), traj, s), traj


def test_coefficients_nonnegative_and_diagonal_zero(low_snr):
    sur, _ = unsaturated_surrogate(low_snr)
    for hop in (1, 2):
        A = sur.coeff(hop)
        assert np.all(A >= 0)
        assert np.all(A[:, ~sur.offdiag_hop1] == 0)


def test_tangency_at_expansion(low_snr):
    sur, traj = unsaturated_surrogate(low_snr)
    for hop in (1, 2):
        F, gF = slot_sum(sur, hop, traj.w)
        Fl, gFl = slot_sum(sur, hop, traj.w, lower_bound=True)
        assert np.max(np.abs(F - Fl)) < 1e-9
        assert rel_err(gFl, gF) < 1e-9


def test_majorization_random_points(low_snr, rng):
    sur, traj = unsaturated_surrogate(low_snr)
    for _ in range(100):
        w = traj.w + rng.normal(scale=80.0, size=traj.w.shape)
        for hop in (1, 2):
            assert np.all(exponents_lb(sur, hop, w) <= exponents(sur, hop, w) + 1e-12)
            F, _ = slot_sum(sur, hop, w)
            Fl, _ = slot_sum(sur, hop, w, lower_bound=True)
            assert np.all(Fl >= F - 1e-12)


@pytest.mark.parametrize("lower", [False, True])
def test_slot_sum_gradient(low_snr, rng, lower):
    sur, traj = unsaturated_surrogate(low_snr)
    sur = sur.with_expansion(traj.w + rng.normal(scale=20.0, size=traj.w.shape))
    for _ in range(10):
        w = traj.w + rng.normal(scale=30.0, size=traj.w.shape)
        for hop in (1, 2):
            _, g = slot_sum(sur, hop, w, lower_bound=lower)
            num = central_difference(lambda x: slot_sum(sur, hop, x.reshape(-1, 2), lower_bound=lower)[0].sum(),
                                     w.ravel(), h=1e-4)
            assert rel_err(g.ravel(), num) < 1e-4


def test_kernel_objective_gradient(low_snr, rng):
    sur, traj = unsaturated_surrogate(low_snr)
    n = low_snr.n_slots
    par = _Param(n, low_snr.slot_dt, np.asarray(low_snr.uav_start), np.asarray(low_snr.uav_end),
                 low_snr.v_max, low_snr.a_max)
    free = np.zeros(n, bool)
    free[1:-1] = True
    f = _surrogate_objective(sur, par, temperature=0.5, free=free)
    for _ in range(10):
        z = par.encode(traj) + rng.normal(scale=0.2, size=par.n_core)
        _, g = f(z)
        num = central_difference(lambda x: f(x)[0], z, h=1e-6)
        assert rel_err(g, num) < 1e-4


def test_zero_precoders_leave_trajectory_unchanged(low_snr):
    traj = straight_line_init(low_snr)
    real = ChannelRealization.for_positions(draw_small_scale(low_snr), traj.w, low_snr)
    zero = PrecoderSchedule(np.zeros((low_snr.n_slots, 2, 2), complex), np.zeros((low_snr.n_slots, 2, 2), complex))
    res = solve_trajectory_step(real, zero, traj, low_snr)
    assert res.trajectory is traj


def test_step_descends_and_stays_feasible(low_snr):
    traj = straight_line_init(low_snr)
    real = ChannelRealization.for_positions(draw_small_scale(low_snr), traj.w, low_snr)
    res = solve_trajectory_step(real, PrecoderSchedule.isotropic(low_snr), traj, low_snr)
    vals = [t[3] for t in res.trace]
    assert len(vals) >= 2
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))
    assert check_feasibility(res.trajectory, low_snr).feasible
    assert sca_trace_csv(res.trace).splitlines()[0] == "sca_iter,true_objective_B,true_objective_U,max_objective"


def test_param_map_matches_propagation(low_snr, rng):
    from faao.kinematics import propagate
    n = low_snr.n_slots
    par = _Param(n, low_snr.slot_dt, np.asarray(low_snr.uav_start), np.asarray(low_snr.uav_end),
                 low_snr.v_max, low_snr.a_max)
    z = rng.uniform(-0.5, 0.5, par.n_core)
    v = par.velocities(z)
    t = propagate(low_snr.uav_start, v[0], np.vstack([par.accel(z), np.zeros((1, 2))]), low_snr.slot_dt)
    assert np.allclose(par.positions(z), t.w, atol=1e-10)
    assert np.allclose(v, t.v, atol=1e-12)
    assert np.allclose(t.w[-1], low_snr.uav_end, atol=1e-10)
    assert np.allclose(par.encode(t), z)


def test_log_values_handle_saturation():
    s = default_scenario().replace(horizon_T=6.0)
    sur, traj = unsaturated_surrogate(s)
    from faao.sca_trajectory import true_objective
    assert math.isfinite(true_objective(sur, traj.w))
    assert np.all(np.exp(-exponents(sur, 1, traj.w)) == 0.0)  # linear domain underflows here
