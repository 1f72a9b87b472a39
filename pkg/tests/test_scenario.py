import math

import pytest

from faao.scenario import (
    ConfigError,
    SolverParams,
    dbm_to_watt,
    default_scenario,
    dump_scenario,
    load_scenario,
)


def test_default_slot_count():
    assert default_scenario().n_slots == 250


def test_short_horizon_slot_count():
    assert default_scenario().replace(horizon_T=10.0).n_slots == 50


def test_reachability_rejected():
    with pytest.raises(ConfigError, match="reachability"):
        default_scenario().replace(v_max=1.0, horizon_T=10.0)
    assert math.dist((0, 350), (350, 0)) == pytest.approx(494.9747, abs=1e-4)


def test_linear_conversions():
    s = default_scenario()
    assert s.rho0 == pytest.approx(1e-5, rel=1e-12)
    assert s.power_bs == pytest.approx(0.1, rel=1e-12)
    assert s.power_uav == pytest.approx(0.1, rel=1e-12)
    assert s.noise_hop1 == pytest.approx(1e-15, rel=1e-12)
    assert s.noise_hop2 == pytest.approx(1e-15, rel=1e-12)


def test_default_geometry():
    s = default_scenario()
    assert (s.n_tx, s.n_relay, s.n_rx) == (2, 2, 2)
    assert s.slot_dt == 0.2 and s.altitude_H == 100.0 and s.rician_K == 3.0
    assert s.uav_start == (0.0, 350.0) and s.uav_end == (350.0, 0.0)
    assert s.bs_pos == (0.0, 0.0) and s.gu_pos == (300.0, 300.0)
    assert s.v_max == 100.0 and s.a_max == 5.0 and s.modulation == "bpsk"


def test_round_trip_identity():
    s = default_scenario().replace(horizon_T=12.0, seed=7, solver_params=SolverParams(sca_max_iters=5))
    again = load_scenario(dump_scenario(s))
    assert again == s
    assert dump_scenario(again) == dump_scenario(s)
    assert again.digest() == s.digest()


def test_partial_config_overlays_defaults():
    s = load_scenario('{"horizon_T": 10.0, "solver_params": {"sca_tol": 1e-3}}')
    assert s.n_slots == 50
    assert s.solver_params.sca_tol == 1e-3
    assert s.solver_params.inner_max_iters == SolverParams().inner_max_iters


@pytest.mark.parametrize("text, match", [
    ('{"horizon_T": 10', "line 1"),
    ('{"nope": 1}', "unknown configuration key"),
    ('{"solver_params": {"x": 1}}', "unknown solver_params key"),
    ('{"slot_dt": 0}', "slot_dt"),
    ('{"a_max": -1}', "a_max"),
    ('{"n_tx": 0}', "n_tx"),
    ('{"modulation": "64qam"}', "modulation"),
    ('{"bs_pos": [1, 2, 3]}', "bs_pos"),
    ('{"power_bs_dbm": Infinity}', "power_bs_dbm"),
    ('{"horizon_T": 0.1}', "n_slots"),
    ('[]', "object"),
])
def test_invalid_configs(text, match):
    with pytest.raises(ConfigError, match=match):
        load_scenario(text)


def test_switched_off_transmitter_allowed():
    s = load_scenario('{"power_bs_dbm": -Infinity}')
    assert s.power_bs == 0.0


def test_dbm_examples():
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert dbm_to_watt(-math.inf) == 0.0
