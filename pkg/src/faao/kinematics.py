"""Discretized UAV flight: piecewise-constant acceleration per slot.

Consecutive slots are linked by

    w(n+1) = w(n) + v(n) dt + a(n) dt^2 / 2
    v(n+1) = v(n) + a(n) dt

so a trajectory is fully determined by its start position, its initial
velocity and the acceleration sequence.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    """Per-slot position ``w``, velocity ``v`` and acceleration ``a``, each ``(n_slots, 2)``."""

    w: np.ndarray
    v: np.ndarray
    a: np.ndarray
    dt: float

    def __post_init__(self) -> None:
        n = self.w.shape[0]
        for name in ("w", "v", "a"):
            arr = getattr(self, name)
            if arr.shape != (n, 2):
                raise ValueError(f"{name} must have shape ({n}, 2), got {arr.shape}")
            arr.setflags(write=False)

    @property
    def n_slots(self) -> int:
        return self.w.shape[0]


def propagate(w0, v0, accel, dt: float) -> Trajectory:
    """Integrate positions and velocities forward from ``(w0, v0)``.

    ``accel`` holds one acceleration per slot; the output has as many slots
    as ``accel`` has rows.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    accel = np.array(accel, dtype=float).reshape(-1, 2)
    n = accel.shape[0]
    w = np.empty((n, 2))
    v = np.empty((n, 2))
    w[0] = w0
    v[0] = v0
    for k in range(n - 1):
        w[k + 1] = w[k] + v[k] * dt + 0.5 * accel[k] * dt * dt
        v[k + 1] = v[k] + accel[k] * dt
    return Trajectory(w, v, accel, dt)


def straight_line_init(scenario: Scenario) -> Trajectory:
    """Constant-velocity flight from ``uav_start`` to ``uav_end``."""
    n = scenario.n_slots
    dt = scenario.slot_dt
    start = np.asarray(scenario.uav_start, dtype=float)
    end = np.asarray(scenario.uav_end, dtype=float)
    vel = (end - start) / ((n - 1) * dt)
    if np.linalg.norm(vel) > scenario.v_max:
        raise InfeasibleError(f"straight-line speed {np.linalg.norm(vel):.6g} m/s exceeds v_max")
    frac = np.arange(n)[:, None] / (n - 1)
    w = start + frac * (end - start)
    w[-1] = end
    v = np.repeat(vel[None, :], n, axis=0)
    return Trajectory(w, v, np.zeros((n, 2)), dt)


@dataclass(frozen=True)
class FeasibilityReport:
    position_residual: float
    velocity_residual: float
    start_residual: float
    end_residual: float
    speed_excess: float
    accel_excess: float
    feasible: bool


def check_feasibility(traj: Trajectory, scenario: Scenario, eq_tol: float | None = None,
                      limit_tol: float = 1e-9) -> FeasibilityReport:
    """Residuals of the kinematic equalities, boundary conditions and flight limits."""
    if eq_tol is None:
        eq_tol = scenario.solver_params.feas_tol_equality
    dt = traj.dt
    w, v, a = traj.w, traj.v, traj.a
    pos_res = w[1:] - (w[:-1] + v[:-1] * dt + 0.5 * a[:-1] * dt * dt)
    vel_res = v[1:] - (v[:-1] + a[:-1] * dt)
    pos_r = float(np.max(np.linalg.norm(pos_res, axis=1), initial=0.0))
    vel_r = float(np.max(np.linalg.norm(vel_res, axis=1), initial=0.0))
    start_r = float(np.linalg.norm(w[0] - np.asarray(scenario.uav_start)))
    end_r = float(np.linalg.norm(w[-1] - np.asarray(scenario.uav_end)))
    speed_x = max(0.0, float(np.max(np.linalg.norm(v, axis=1))) - scenario.v_max)
    accel_x = max(0.0, float(np.max(np.linalg.norm(a, axis=1))) - scenario.a_max)
    ok = (max(pos_r, start_r, end_r) <= eq_tol and vel_r * dt <= eq_tol
          and speed_x <= limit_tol and accel_x <= limit_tol)
    return FeasibilityReport(pos_r, vel_r, start_r, end_r, speed_x, accel_x, ok)


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["slot", "t_seconds", "x", "y", "vx", "vy", "ax", "ay"])
    for n in range(traj.n_slots):
        row = [n, repr(float(n * traj.dt))]
        row += [repr(float(x)) for x in (*traj.w[n], *traj.v[n], *traj.a[n])]
        writer.writerow(row)
    return buf.getvalue()


def read_trajectory_csv(text: str, dt: float) -> Trajectory:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty trajectory file")
    w = np.array([[float(r["x"]), float(r["y"])] for r in rows])
    v = np.array([[float(r["vx"]), float(r["vy"])] for r in rows])
    a = np.array([[float(r["ax"]), float(r["ay"])] for r in rows])
    return Trajectory(w, v, a, dt)
