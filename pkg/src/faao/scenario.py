"""Experiment description, configuration loading and validation.

Configuration files are JSON objects whose keys are exactly the
:class:`Scenario` field names (``solver_params`` is a nested object keyed by
:class:`SolverParams` field names).  Omitted keys fall back to the defaults
of :func:`default_scenario`; unknown keys are rejected.  Positions are in
meters, powers in dBm and ``rho0_db`` in dB.  ``Infinity`` / ``-Infinity``
are accepted (e.g. ``"power_bs_dbm": -Infinity`` switches the BS off,
``"rician_K": Infinity`` gives a pure line-of-sight channel).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

MODULATIONS = ("bpsk", "qpsk", "8psk", "16qam")
LOS_MODES = ("ones", "ula")


class ConfigError(ValueError):
    """Raised when configuration text cannot be parsed or validated."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class SolverParams:
    """Numerical knobs for the convex subproblem solver and the SCA/AO loops."""

    inner_max_iters: int = 3000
    inner_grad_tol: float = 1e-7
    sca_max_iters: int = 30
    sca_tol: float = 1e-4
    penalty_init: float = 1.0
    penalty_growth: float = 2.0
    feas_tol_equality: float = 1e-6
    mc_samples: int = 2000
    max_outer_iters: int = 30

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"solver_params.{f.name} must be positive and finite, got {value!r}")
        for name in ("inner_max_iters", "sca_max_iters", "mc_samples", "max_outer_iters"):
            if int(getattr(self, name)) != getattr(self, name):
                raise ConfigError(f"solver_params.{name} must be an integer")
        if self.penalty_growth <= 1:
            raise ConfigError("solver_params.penalty_growth must be > 1")


@dataclass(frozen=True)
class Scenario:
    horizon_T: float = 50.0
    slot_dt: float = 0.2
    altitude_H: float = 100.0
    bs_pos: tuple[float, float] = (0.0, 0.0)
    gu_pos: tuple[float, float] = (300.0, 300.0)
    uav_start: tuple[float, float] = (0.0, 350.0)
    uav_end: tuple[float, float] = (350.0, 0.0)
    v_max: float = 100.0
    a_max: float = 5.0
    rho0_db: float = -50.0
    rician_K: float = 3.0
    noise_power_dbm_hop1: float = -120.0
    noise_power_dbm_hop2: float = -120.0
    power_bs_dbm: float = 20.0
    power_uav_dbm: float = 20.0
    n_tx: int = 2
    n_relay: int = 2
    n_rx: int = 2
    modulation: str = "bpsk"
    los_mode: str = "ones"
    seed: int = 2025
    outer_tol: float = 1e-3
    solver_params: SolverParams = field(default_factory=SolverParams)

    def __post_init__(self) -> None:
        for name in ("bs_pos", "gu_pos", "uav_start", "uav_end"):
            value = getattr(self, name)
            try:
                vec = tuple(float(v) for v in value)
            except TypeError as exc:
                raise ConfigError(f"{name} must be a 2-vector") from exc
            if len(vec) != 2:
                raise ConfigError(f"{name} must be a 2-vector, got {len(vec)} entries")
            object.__setattr__(self, name, vec)
        self.validate()

    # -- derived quantities -------------------------------------------------

    @property
    def n_slots(self) -> int:
        return int(round(self.horizon_T / self.slot_dt))

    @property
    def rho0(self) -> float:
        return db_to_linear(self.rho0_db)

    @property
    def noise_hop1(self) -> float:
        return dbm_to_watt(self.noise_power_dbm_hop1)

    @property
    def noise_hop2(self) -> float:
        return dbm_to_watt(self.noise_power_dbm_hop2)

    @property
    def power_bs(self) -> float:
        return dbm_to_watt(self.power_bs_dbm)

    @property
    def power_uav(self) -> float:
        return dbm_to_watt(self.power_uav_dbm)

    def noise_var(self, hop: int) -> float:
        return self.noise_hop1 if hop == 1 else self.noise_hop2

    def power(self, hop: int) -> float:
        return self.power_bs if hop == 1 else self.power_uav

    def stream_dim(self, hop: int) -> int:
        return self.n_tx if hop == 1 else self.n_relay

    def ground_pos(self, hop: int) -> np.ndarray:
        return np.asarray(self.bs_pos if hop == 1 else self.gu_pos, dtype=float)

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        if not (self.slot_dt > 0 and math.isfinite(self.slot_dt)):
            raise ConfigError("slot_dt must be > 0")
        if not (self.horizon_T > 0 and math.isfinite(self.horizon_T)):
            raise ConfigError("horizon_T must be > 0")
        if self.n_slots < 2:
            raise ConfigError(f"n_slots = round(horizon_T/slot_dt) must be >= 2, got {self.n_slots}")
        for name in ("v_max", "a_max", "altitude_H"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be > 0 and finite, got {value!r}")
        for name in ("bs_pos", "gu_pos", "uav_start", "uav_end"):
            if not all(math.isfinite(v) for v in getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        # -inf dBm is allowed for transmit powers (switched-off transmitter)
        for name in ("power_bs_dbm", "power_uav_dbm"):
            value = getattr(self, name)
            if math.isnan(value) or value == math.inf:
                raise ConfigError(f"{name} must be finite or -Infinity, got {value!r}")
        for name in ("noise_power_dbm_hop1", "noise_power_dbm_hop2", "rho0_db"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if not (self.rician_K >= 0):
            raise ConfigError(f"rician_K must be >= 0, got {self.rician_K!r}")
        for name in ("n_tx", "n_relay", "n_rx"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        if self.modulation not in MODULATIONS:
            raise ConfigError(f"modulation must be one of {MODULATIONS}, got {self.modulation!r}")
        if self.los_mode not in LOS_MODES:
            raise ConfigError(f"los_mode must be one of {LOS_MODES}, got {self.los_mode!r}")
        if int(self.seed) != self.seed or not (0 <= self.seed < 2**64):
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if not (self.outer_tol > 0):
            raise ConfigError("outer_tol must be > 0")
        if not isinstance(self.solver_params, SolverParams):
            raise ConfigError("solver_params must be a SolverParams")
        self.solver_params.validate()
        dist = math.dist(self.uav_start, self.uav_end)
        reach = self.v_max * (self.n_slots - 1) * self.slot_dt
        if dist > reach:
            raise ConfigError(
                f"reachability violated: |uav_end - uav_start| = {dist:.6g} m exceeds "
                f"v_max * flight time = {reach:.6g} m"
            )

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, SolverParams):
                value = dataclasses.asdict(value)
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    def digest(self) -> str:
        return hashlib.sha256(dump_scenario(self).encode("utf-8")).hexdigest()


_SCENARIO_KEYS = {f.name for f in dataclasses.fields(Scenario)}
_SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverParams)}


def default_scenario() -> Scenario:
    """The simulation setup used for the reported trajectories and rate curves."""
    return Scenario()


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(data) - _SCENARIO_KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
    kwargs = dict(data)
    if "solver_params" in kwargs:
        sp = kwargs["solver_params"]
        if not isinstance(sp, dict):
            raise ConfigError("solver_params must be an object")
        bad = sorted(set(sp) - _SOLVER_KEYS)
        if bad:
            raise ConfigError(f"unknown solver_params key(s): {', '.join(bad)}")
        try:
            kwargs["solver_params"] = SolverParams(**sp)
        except TypeError as exc:
            raise ConfigError(f"solver_params: {exc}") from exc
    try:
        return Scenario(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(config_text: str) -> Scenario:
    """Parse JSON configuration text into a validated :class:`Scenario`."""
    try:
        data = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(data)


def dump_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario.to_dict(), indent=2, sort_keys=True) + "\n"
