"""Trajectory design for fixed precoders.

With the precoders frozen, every pairwise exponent of hop ``j`` at slot ``n``
depends on the UAV position only through the path loss,

    D(n) = rho0 A(n) / (y(n) + H^2),      y(n) = ||w(n) - p_j||^2,

where ``A = ||Hr P u||^2 / (4 s2)`` collects the small-scale channel and the
precoder.  ``D`` is convex in ``y``, so its tangent at the previous iterate

    D_lb(n) = D_i(n) - rho0 A(n) / (y_i(n) + H^2)^2 * (y(n) - y_i(n))

is a lower bound that is concave in ``w(n)``; ``exp(-D_lb)`` therefore
majorizes ``exp(-D)`` and touches it (value and gradient) at ``w_i``.

The decision variables are the per-slot accelerations; the initial velocity
is whatever makes the recursion end at the terminal position, so positions
are affine in the accelerations and both boundary conditions hold exactly.
Speed limits become affine equalities on auxiliary velocity copies and are
only added when a solution without them would violate a limit.
Both link sums are compared in the log domain (their common constant
removed), which is an increasing transform of the epigraph objective and is
itself convex.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from .channel import ChannelRealization
from .fa_info import DifferenceSet, link_offset, pair_exponents
from .kinematics import InfeasibleError, Trajectory, check_feasibility, propagate
from .scenario import Scenario
from .sca_precoder import PrecoderSchedule, hop_differences
from .solver import AffineEquality, ConvexProblem, SolveReport, ball_projection, solve

DESCENT_SLACK = 1e-9
# keeps the speed and initial-velocity balls strictly inside v_max so the
# exact terminal correction cannot push a speed over the limit
SPEED_MARGIN = 1e-7


@dataclass(frozen=True)
class TrajectorySurrogate:
    """Precoder-dependent coefficients of both hops plus the expansion point.

    ``coeff_hop1`` / ``coeff_hop2`` hold ``A`` for every ordered symbol pair,
    shape ``(n_slots, M*M)``; the ``m == k`` columns are zero.
    """

    expansion: np.ndarray
    coeff_hop1: np.ndarray
    coeff_hop2: np.ndarray
    offdiag_hop1: np.ndarray
    offdiag_hop2: np.ndarray
    offset_hop1: float
    offset_hop2: float
    const_hop1: float
    const_hop2: float
    rho0: float
    altitude: float
    ground_hop1: np.ndarray
    ground_hop2: np.ndarray

    def coeff(self, hop: int) -> np.ndarray:
        return self.coeff_hop1 if hop == 1 else self.coeff_hop2

    def active_coeff(self, hop: int) -> np.ndarray:
        """``A`` restricted to the ``m != k`` pairs."""
        mask = self.offdiag_hop1 if hop == 1 else self.offdiag_hop2
        return self.coeff(hop)[:, mask]

    def ground(self, hop: int) -> np.ndarray:
        return self.ground_hop1 if hop == 1 else self.ground_hop2

    def offset(self, hop: int) -> float:
        return self.offset_hop1 if hop == 1 else self.offset_hop2

    def const(self, hop: int) -> float:
        """``n_slots * M - O``: the part of ``sum exp(-D) - O`` that never varies."""
        return self.const_hop1 if hop == 1 else self.const_hop2

    def with_expansion(self, w: np.ndarray) -> "TrajectorySurrogate":
        from dataclasses import replace
        return replace(self, expansion=np.array(w, dtype=float))


def build_surrogate(realization: ChannelRealization, precoders: PrecoderSchedule, traj_prev: Trajectory,
                    scenario: Scenario, diffs=None) -> TrajectorySurrogate:
    if diffs is None:
        diffs = hop_differences(scenario)
    coeffs = {}
    masks = {}
    for hop in (1, 2):
        d: DifferenceSet = diffs[hop - 1]
        hr = realization.small_scale.hop(hop)
        p = precoders.hop(hop)
        if hr.shape[0] != p.shape[0] or hr.shape[-1] != p.shape[-2] or p.shape[-1] != d.dim:
            raise ValueError(f"hop {hop}: channel {hr.shape} / precoder {p.shape} / dim {d.dim} mismatch")
        coeffs[hop] = pair_exponents(hr, p, d.vectors, scenario.noise_var(hop))
        masks[hop] = ~np.eye(d.n_symbols, dtype=bool).ravel()
    n = scenario.n_slots
    offsets = {hop: link_offset(n, diffs[hop - 1]) for hop in (1, 2)}
    consts = {hop: n * diffs[hop - 1].n_symbols - offsets[hop] for hop in (1, 2)}
    return TrajectorySurrogate(
        expansion=np.array(traj_prev.w, dtype=float),
        coeff_hop1=coeffs[1], coeff_hop2=coeffs[2],
        offdiag_hop1=masks[1], offdiag_hop2=masks[2],
        offset_hop1=offsets[1], offset_hop2=offsets[2],
        const_hop1=consts[1], const_hop2=consts[2],
        rho0=scenario.rho0, altitude=scenario.altitude_H,
        ground_hop1=scenario.ground_pos(1), ground_hop2=scenario.ground_pos(2),
    )


# -- exponents ------------------------------------------------------------------

def _sqdist(w: np.ndarray, ground: np.ndarray) -> np.ndarray:
    return np.sum((np.asarray(w, dtype=float) - ground) ** 2, axis=-1)


def exponents(sur: TrajectorySurrogate, hop: int, w, active_only: bool = True) -> np.ndarray:
    """True exponents ``D`` for every slot, shape ``(n_slots, pairs)``."""
    A = sur.active_coeff(hop) if active_only else sur.coeff(hop)
    y = _sqdist(w, sur.ground(hop))
    return sur.rho0 * A / (y + sur.altitude**2)[:, None]


def exponents_lb(sur: TrajectorySurrogate, hop: int, w, active_only: bool = True) -> np.ndarray:
    """Tangent lower bounds ``D_lb`` around ``sur.expansion``."""
    A = sur.active_coeff(hop) if active_only else sur.coeff(hop)
    y = _sqdist(w, sur.ground(hop))
    yi = _sqdist(sur.expansion, sur.ground(hop))
    base = 1.0 / (yi + sur.altitude**2)
    return sur.rho0 * A * (base - base**2 * (y - yi))[:, None]


def surrogate_exponent_lb(sur: TrajectorySurrogate, w_candidate, slot: int, hop: int, pair: int) -> float:
    """``D_lb`` of one slot, hop and ordered symbol pair at candidate position ``w_candidate``."""
    A = sur.coeff(hop)[slot, pair]
    p = sur.ground(hop)
    y = float(np.sum((np.asarray(w_candidate, dtype=float) - p) ** 2))
    yi = float(np.sum((sur.expansion[slot] - p) ** 2))
    base = 1.0 / (yi + sur.altitude**2)
    return sur.rho0 * A * base - sur.rho0 * A * base**2 * (y - yi)


def slot_sum(sur: TrajectorySurrogate, hop: int, w, lower_bound: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot ``F(n) = sum_mk exp(-D)`` (or ``F_lb``) and its gradient in ``w(n)``.

    Evaluated in the linear domain; meant for moderate exponents.
    """
    w = np.asarray(w, dtype=float)
    A = sur.coeff(hop)
    p = sur.ground(hop)
    y = _sqdist(w, p)
    if lower_bound:
        yi = _sqdist(sur.expansion, p)
        k = sur.rho0 * A / ((yi + sur.altitude**2) ** 2)[:, None]
        e = np.exp(-exponents_lb(sur, hop, w, active_only=False))
    else:
        k = sur.rho0 * A / ((y + sur.altitude**2) ** 2)[:, None]
        e = np.exp(-exponents(sur, hop, w, active_only=False))
    F = e.sum(axis=1)
    grad = (2.0 * np.sum(k * e, axis=1))[:, None] * (w - p)
    return F, grad


def hop_log_values(sur: TrajectorySurrogate, w, lower_bound: bool = False) -> tuple[float, float]:
    """Log-domain value of ``sum_n sum_mk exp(-D) - O`` for both hops, common constant removed."""
    c_min = min(sur.const(1), sur.const(2))
    out = []
    for hop in (1, 2):
        D = exponents_lb(sur, hop, w) if lower_bound else exponents(sur, hop, w)
        val = logsumexp(-D) if D.size else -math.inf
        extra = sur.const(hop) - c_min
        if extra > 0:
            val = float(np.logaddexp(val, math.log(extra)))
        out.append(float(val))
    return out[0], out[1]


def true_objective(sur: TrajectorySurrogate, w) -> float:
    """Increasing transform of the fixed-precoder epigraph objective ``max_j (S_j - O_j)``."""
    return max(hop_log_values(sur, w))


# -- parametrization -------------------------------------------------------------

@dataclass
class _Param:
    """Affine map from the scaled accelerations ``a(0..n-2) / a_max`` to positions.

    The initial velocity is fixed by the terminal condition,
    ``v0 = (w_end - w0 - sum_k pos_a[-1, k] a(k)) / ((n-1) dt)``, so positions
    are the straight start-to-end line plus a linear function of ``a``.
    """

    n: int
    dt: float
    w0: np.ndarray
    w_end: np.ndarray
    v_scale: float
    a_scale: float
    pos_a: np.ndarray = field(init=False)
    vel_a: np.ndarray = field(init=False)
    steps: np.ndarray = field(init=False)
    v_line: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        n, dt = self.n, self.dt
        idx = np.arange(n)[:, None] - np.arange(n - 1)[None, :]
        span = (n - 1) * dt
        self.steps = np.arange(n) * dt
        raw_pos = np.where(idx > 0, dt * dt * (idx - 0.5), 0.0)
        v0_a = -raw_pos[-1] / span                                   # d v0 / d a(k)
        self.pos_a = raw_pos + self.steps[:, None] * v0_a[None, :]
        self.vel_a = np.where(idx > 0, dt, 0.0) + v0_a[None, :]
        self.v_line = (self.w_end - self.w0) / span

    @property
    def n_core(self) -> int:
        return 2 * (self.n - 1)

    def accel(self, z) -> np.ndarray:
        return np.asarray(z[:self.n_core]).reshape(self.n - 1, 2) * self.a_scale

    def positions(self, z) -> np.ndarray:
        return self.w0 + self.steps[:, None] * self.v_line + self.pos_a @ self.accel(z)

    def velocities(self, z) -> np.ndarray:
        return self.v_line + self.vel_a @ self.accel(z)

    def pullback_positions(self, g_w: np.ndarray) -> np.ndarray:
        return ((self.pos_a.T @ g_w) * self.a_scale).ravel()

    def pullback_velocities(self, g_v: np.ndarray) -> np.ndarray:
        return ((self.vel_a.T @ g_v) * self.a_scale).ravel()

    def encode(self, traj: Trajectory) -> np.ndarray:
        return (traj.a[:-1] / self.a_scale).ravel()


def _surrogate_objective(sur: TrajectorySurrogate, par: _Param, temperature: float, free: np.ndarray):
    """Smoothed max of the two log-domain link sums of the surrogate, in the scaled variables."""
    c_min = min(sur.const(1), sur.const(2))
    hops = []
    for hop in (1, 2):
        A = sur.active_coeff(hop)[free]
        p = sur.ground(hop)
        yi = _sqdist(sur.expansion[free], p)
        base = 1.0 / (yi + sur.altitude**2)
        c0 = sur.rho0 * A * base[:, None]
        c1 = sur.rho0 * A * (base**2)[:, None]
        extra = sur.const(hop) - c_min
        hops.append((c0, c1, yi, p, math.log(extra) if extra > 0 else None))
    n_core = par.n_core

    def objective(z):
        w = par.positions(z)[free]
        ell = np.empty(2)
        grads = []
        for j, (c0, c1, yi, p, log_extra) in enumerate(hops):
            diff = w - p
            y = np.sum(diff**2, axis=1)
            neg = -(c0 - c1 * (y - yi)[:, None])               # -D_lb
            if neg.size == 0:
                ell[j] = -math.inf if log_extra is None else log_extra
                grads.append(np.zeros_like(w))
                continue
            L = logsumexp(neg)
            q = np.exp(neg - L)
            gw = (2.0 * np.sum(q * c1, axis=1))[:, None] * diff
            if log_extra is not None:
                total = float(np.logaddexp(L, log_extra))
                gw = gw * math.exp(L - total)
                L = total
            ell[j] = L
            grads.append(gw)
        if np.all(np.isinf(ell)):
            return 0.0, np.zeros(z.size)
        val = temperature * logsumexp(ell / temperature)
        pi = softmax(ell / temperature)
        g_free = pi[0] * grads[0] + pi[1] * grads[1]
        g_w = np.zeros((par.n, 2))
        g_w[free] = g_free
        return float(val), par.pullback_positions(g_w)

    return objective


@dataclass
class TrajectoryStepResult:
    trajectory: Trajectory
    reports: list[SolveReport]
    trace: list[tuple[int, float, float, float]]


def _decode(par: _Param, z: np.ndarray) -> Trajectory:
    accel = np.vstack([par.accel(z), np.zeros((1, 2))])
    traj = propagate(par.w0, par.velocities(z)[0], accel, par.dt)
    # remove the rounding left in the terminal position through v0
    miss = traj.w[-1] - par.w_end
    return propagate(par.w0, traj.v[0] - miss / ((par.n - 1) * par.dt), accel, par.dt)


def _solve_convexified(sur: TrajectorySurrogate, par: _Param, z0: np.ndarray, scenario: Scenario,
                       temperature: float, with_speed: bool) -> tuple[np.ndarray, SolveReport]:
    n = par.n
    free = np.zeros(n, dtype=bool)
    free[1:-1] = True   # w(0) and w(end) are pinned on the feasible set
    base = _surrogate_objective(sur, par, temperature, free)
    n_core = par.n_core
    dim = n_core + (2 * n if with_speed else 0)
    projections = [ball_projection(slice(0, n_core), 1.0)]
    equalities = []
    start = np.zeros(dim)
    start[:n_core] = z0
    if with_speed:
        # auxiliary copies of every velocity live in the speed balls and are
        # tied to the kinematic velocities by an affine equality
        projections.append(ball_projection(slice(n_core, dim), 1.0 - SPEED_MARGIN))
        dt = par.dt

        def speed_res(z):
            s = z[n_core:].reshape(n, 2) * par.v_scale
            return (dt * (s - par.velocities(z[:n_core]))).ravel()

        def speed_adj(r):
            r = r.reshape(n, 2) * dt
            out = np.zeros(dim)
            out[:n_core] = par.pullback_velocities(-r)
            out[n_core:] = (r * par.v_scale).ravel()
            return out

        equalities.append(AffineEquality(speed_res, speed_adj))
        start[n_core:] = (par.velocities(z0) / par.v_scale).ravel()

    f0, _ = base(start[:n_core])

    def objective(z):
        f, g = base(z[:n_core])
        full = np.zeros(dim)
        full[:n_core] = g
        return f - f0, full

    problem = ConvexProblem(objective, dim, projections, equalities)
    report = solve(problem, start, scenario.solver_params)
    return report.x[:n_core], report


def solve_trajectory_step(realization: ChannelRealization, precoders: PrecoderSchedule, traj_prev: Trajectory,
                          scenario: Scenario, diffs=None) -> TrajectoryStepResult:
    """SCA over the convexified trajectory problem with precoders held fixed.

    Each iterate is accepted only if it is kinematically feasible and does not
    increase the true objective, so the returned trajectory is never worse
    than ``traj_prev``.
    """
    feas = check_feasibility(traj_prev, scenario)
    if not feas.feasible:
        raise InfeasibleError(f"input trajectory is infeasible: {feas}")
    params = scenario.solver_params
    sur = build_surrogate(realization, precoders, traj_prev, scenario, diffs)
    par = _Param(scenario.n_slots, scenario.slot_dt, np.asarray(scenario.uav_start, dtype=float),
                 np.asarray(scenario.uav_end, dtype=float), scenario.v_max, scenario.a_max)
    current = traj_prev
    cur_obj = true_objective(sur, current.w)
    b, u = hop_log_values(sur, current.w)
    trace = [(0, b, u, cur_obj)]
    reports: list[SolveReport] = []
    if not math.isfinite(cur_obj):
        return TrajectoryStepResult(current, reports, trace)
    t0 = (abs(sur.offset(1)) + abs(sur.offset(2))) / 100.0
    t_floor = 1e-6 * (abs(sur.offset(1)) + abs(sur.offset(2)))
    for it in range(params.sca_max_iters):
        sur = sur.with_expansion(current.w)
        temperature = max(t0 / 2.0**it, t_floor, 1e-12)
        z0 = par.encode(current)
        z, report = _solve_convexified(sur, par, z0, scenario, temperature, with_speed=False)
        reports.append(report)
        cand = _decode(par, z)
        if check_feasibility(cand, scenario).speed_excess > 0.0:
            z, report = _solve_convexified(sur, par, z0, scenario, temperature, with_speed=True)
            reports.append(report)
            cand = _decode(par, z)
        new_obj = true_objective(sur, cand.w)
        if not (check_feasibility(cand, scenario).feasible and new_obj < cur_obj):
            # the smoothed max can miss a descent direction of the hard max;
            # retry from the same point at the next, lower temperature
            if temperature > t_floor:
                continue
            break
        gain = cur_obj - new_obj
        current, cur_obj = cand, new_obj
        b, u = hop_log_values(sur, current.w)
        trace.append((it + 1, b, u, cur_obj))
        # relative change of the linear-domain objective is 1 - exp(-gain)
        if -math.expm1(-gain) < params.sca_tol:
            break
    return TrajectoryStepResult(current, reports, trace)


def sca_trace_csv(trace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sca_iter", "true_objective_B", "true_objective_U", "max_objective"])
    for it, b, u, m in trace:
        writer.writerow([it, repr(float(b)), repr(float(u)), repr(float(m))])
    return buf.getvalue()
