"""Alternating trajectory / precoder optimization (FAAO) and rate evaluation."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization, SmallScaleFactor, draw_small_scale
from .fa_info import link_exponents, mi_from_exponents
from .kinematics import Trajectory, straight_line_init
from .scenario import Scenario
from .sca_precoder import PrecoderSchedule, hop_differences, solve_precoder_step
from .sca_trajectory import solve_trajectory_step

log = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-12


@dataclass(frozen=True)
class Rates:
    per_slot_hop1: np.ndarray
    per_slot_hop2: np.ndarray
    R_U: float
    R_G: float

    @property
    def R_avg(self) -> float:
        return min(self.R_U, self.R_G)


def slot_rates(realization: ChannelRealization, precoders: PrecoderSchedule, scenario: Scenario,
               diffs=None) -> tuple[np.ndarray, np.ndarray]:
    if diffs is None:
        diffs = hop_differences(scenario)
    out = []
    for hop in (1, 2):
        expo = link_exponents(realization.full_channels(hop), precoders.hop(hop), diffs[hop - 1],
                              scenario.noise_var(hop))
        out.append(mi_from_exponents(expo, diffs[hop - 1]))
    return out[0], out[1]


def evaluate_rates(realization: ChannelRealization, traj: Trajectory, precoders: PrecoderSchedule,
                   scenario: Scenario, diffs=None) -> Rates:
    """Per-hop time-averaged closed-form rates and the decode-and-forward minimum."""
    if traj.n_slots != realization.n_slots or precoders.p_bs.shape[0] != realization.n_slots:
        raise ValueError("trajectory, precoders and channel cover different numbers of slots")
    real = ChannelRealization.for_positions(realization.small_scale, traj.w, scenario)
    i1, i2 = slot_rates(real, precoders, scenario, diffs)
    weight = scenario.slot_dt / scenario.horizon_T
    return Rates(i1, i2, float(weight * np.sum(i1)), float(weight * np.sum(i2)))


@dataclass
class IterationRecord:
    iteration: int
    R_U: float
    R_G: float
    R_avg: float
    tau: float
    seconds: float


@dataclass
class ConvergenceTrace:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False

    @property
    def r_avg(self) -> list[float]:
        return [r.R_avg for r in self.records]


@dataclass
class FaaoResult:
    trajectory: Trajectory
    precoders: PrecoderSchedule
    trace: ConvergenceTrace
    small_scale: SmallScaleFactor
    rates: Rates
    sca_traces: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.trace.converged


def run_faao(scenario: Scenario, small_scale: SmallScaleFactor | None = None,
             optimize_trajectory: bool = True, optimize_precoders: bool = True) -> FaaoResult:
    """Alternate trajectory and precoder updates until ``R_avg`` settles.

    Starts from the straight path and full-power scaled-identity precoders.
    A block update that would lower ``R_avg`` is discarded, which keeps the
    recorded rate sequence non-decreasing.
    """
    if small_scale is None:
        small_scale = draw_small_scale(scenario)
    diffs = hop_differences(scenario)
    traj = straight_line_init(scenario)
    prec = PrecoderSchedule.isotropic(scenario)
    real = ChannelRealization.for_positions(small_scale, traj.w, scenario)
    rates = evaluate_rates(real, traj, prec, scenario, diffs)
    trace = ConvergenceTrace()
    start = time.perf_counter()
    trace.records.append(IterationRecord(0, rates.R_U, rates.R_G, rates.R_avg, float("nan"), 0.0))
    sca_traces = []
    for it in range(1, scenario.solver_params.max_outer_iters + 1):
        prev_avg = rates.R_avg
        if optimize_trajectory:
            step = solve_trajectory_step(real, prec, traj, scenario, diffs)
            sca_traces.append(step.trace)
            cand_real = ChannelRealization.for_positions(small_scale, step.trajectory.w, scenario)
            cand_rates = evaluate_rates(cand_real, step.trajectory, prec, scenario, diffs)
            if cand_rates.R_avg >= rates.R_avg - MONOTONE_SLACK:
                traj, real, rates = step.trajectory, cand_real, cand_rates
            else:
                log.info("outer %d: trajectory update lowered R_avg (%.6g -> %.6g); kept previous path",
                         it, rates.R_avg, cand_rates.R_avg)
        if optimize_precoders:
            cand_prec, _ = solve_precoder_step(real, traj, prec, scenario, diffs)
            cand_rates = evaluate_rates(real, traj, cand_prec, scenario, diffs)
            if cand_rates.R_avg >= rates.R_avg - MONOTONE_SLACK:
                prec, rates = cand_prec, cand_rates
        tau = abs(rates.R_avg - prev_avg)
        trace.records.append(IterationRecord(it, rates.R_U, rates.R_G, rates.R_avg, tau,
                                             time.perf_counter() - start))
        log.info("outer %d: R_U=%.6f R_G=%.6f R_avg=%.6f tau=%.3g", it, rates.R_U, rates.R_G, rates.R_avg, tau)
        if tau < scenario.outer_tol:
            trace.converged = True
            break
    return FaaoResult(traj, prec, trace, small_scale, rates, sca_traces)


def convergence_csv(trace: ConvergenceTrace, with_timing: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["iter", "R_U", "R_G", "R_avg", "tau"] + (["seconds"] if with_timing else [])
    writer.writerow(header)
    for r in trace.records:
        row = [r.iteration, repr(r.R_U), repr(r.R_G), repr(r.R_avg), repr(r.tau)]
        if with_timing:
            row.append(repr(r.seconds))
        writer.writerow(row)
    return buf.getvalue()


def rates_csv(rates: Rates) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["slot", "I_U", "I_G"])
    for n, (a, b) in enumerate(zip(rates.per_slot_hop1, rates.per_slot_hop2)):
        writer.writerow([n, repr(float(a)), repr(float(b))])
    return buf.getvalue()
