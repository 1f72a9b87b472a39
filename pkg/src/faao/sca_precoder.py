"""Precoder design for a fixed trajectory.

For every slot ``n`` and hop the pairwise exponent

    C(P) = Tr(u u^H P^H H^H H P) = ||H P u||^2

is convex in ``P``, so its tangent plane at the previous iterate ``P_i``

    C_ap(P) = 2 Re Tr(u u^H P_i^H H^H H P) - C(P_i)

lower-bounds it and ``sum exp(-C_ap / 4 s2)`` is a tangent majorizer of the
pairwise sum.  Each (slot, hop) problem is independent: the BS precoder only
enters the first-hop sum, the UAV precoder only the second, and slots are
coupled solely through the sum.  All slots of a hop are solved in one batched
call because the objective is separable across slots.

Objectives are handled in the log domain with the constant ``m == k`` terms
dropped; this keeps the minimizer and removes underflow.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .channel import ChannelRealization
from .fa_info import DifferenceSet, constellation, enumerate_differences, pair_exponents
from .kinematics import Trajectory
from .scenario import Scenario, SolverParams
from .solver import ConvexProblem, SolveReport, ball_projection, solve


@dataclass(frozen=True)
class PrecoderSchedule:
    """Per-slot precoders: ``p_bs`` is ``(n, N_t, N_t)``, ``p_uav`` is ``(n, N_u, N_u)``."""

    p_bs: np.ndarray
    p_uav: np.ndarray

    def __post_init__(self) -> None:
        for arr in (self.p_bs, self.p_uav):
            arr.setflags(write=False)

    def hop(self, hop: int) -> np.ndarray:
        return self.p_bs if hop == 1 else self.p_uav

    def with_hop(self, hop: int, value: np.ndarray) -> "PrecoderSchedule":
        if hop == 1:
            return PrecoderSchedule(np.array(value), self.p_uav)
        return PrecoderSchedule(self.p_bs, np.array(value))

    def powers(self, hop: int) -> np.ndarray:
        p = self.hop(hop)
        return np.sum(np.abs(p) ** 2, axis=(1, 2))

    @classmethod
    def isotropic(cls, scenario: Scenario) -> "PrecoderSchedule":
        """Full-power scaled identity ``sqrt(W / dim) I`` in every slot."""
        n = scenario.n_slots
        mats = []
        for hop in (1, 2):
            dim = scenario.stream_dim(hop)
            eye = np.sqrt(scenario.power(hop) / dim) * np.eye(dim, dtype=complex)
            mats.append(np.repeat(eye[None], n, axis=0))
        return cls(mats[0], mats[1])


def hop_differences(scenario: Scenario) -> tuple[DifferenceSet, DifferenceSet]:
    const = constellation(scenario.modulation)
    return enumerate_differences(const, scenario.n_tx), enumerate_differences(const, scenario.n_relay)


def power_feasible(schedule: PrecoderSchedule, scenario: Scenario, rel_tol: float = 1e-6) -> bool:
    return all(np.all(schedule.powers(hop) <= scenario.power(hop) * (1.0 + rel_tol)) for hop in (1, 2))


def project_power(precoder: np.ndarray, power: float) -> np.ndarray:
    """Scale ``precoder`` (or a stack of them) back into ``Tr(P^H P) <= power``."""
    p = np.asarray(precoder, dtype=complex)
    fro2 = np.sum(np.abs(p) ** 2, axis=(-2, -1), keepdims=True)
    scale = np.where(fro2 > power, np.sqrt(power / np.maximum(fro2, 1e-300)), 1.0)
    return p * scale


# -- exponents ----------------------------------------------------------------

def exact_exponent(channel, precoder, u, noise_var: float) -> float:
    """``Tr(u u^H P^H H^H H P) / (4 s2)`` evaluated in trace form."""
    H = np.atleast_2d(np.asarray(channel, dtype=complex))
    P = np.atleast_2d(np.asarray(precoder, dtype=complex))
    u = np.asarray(u, dtype=complex).reshape(-1, 1)
    if H.shape[1] != P.shape[0] or P.shape[1] != u.shape[0]:
        raise ValueError("channel, precoder and difference vector are not conformable")
    val = np.trace(u @ u.conj().T @ P.conj().T @ H.conj().T @ H @ P)
    return float(val.real) / (4.0 * noise_var)


@dataclass(frozen=True)
class PrecoderSurrogate:
    """Tangent-plane data for one hop: expansion precoders and channel Grams.

    ``coeff[n, p] = G(n) P_i(n) u_p u_p^H`` so ``C_ap = 2 Re<coeff, P> - C(P_i)``.
    """

    expansion: np.ndarray
    grams: np.ndarray
    vectors: np.ndarray
    noise_var: float
    coeff: np.ndarray
    c_expansion: np.ndarray

    @classmethod
    def build(cls, channels: np.ndarray, expansion: np.ndarray, vectors: np.ndarray,
              noise_var: float) -> "PrecoderSurrogate":
        grams = np.conj(np.swapaxes(channels, -1, -2)) @ channels
        outer = vectors[:, :, None] * vectors[:, None, :].conj()          # (p, d, d)
        gp = grams @ expansion                                             # (n, d, d)
        coeff = np.einsum("nij,pjk->npik", gp, outer)
        c_exp = pair_exponents(channels, expansion, vectors, 1.0) * 4.0    # ||H P_i u||^2
        return cls(expansion, grams, vectors, noise_var, coeff, c_exp)

    def linear_exponents(self, precoders: np.ndarray, slots=slice(None)) -> np.ndarray:
        """``C_ap / (4 s2)`` for every pair, shape ``(n, n_pairs)``."""
        inner = np.einsum("npij,nij->np", self.coeff[slots].conj(), precoders)
        return (2.0 * inner.real - self.c_expansion[slots]) / (4.0 * self.noise_var)


def linearized_exponent(surrogate: PrecoderSurrogate, precoder, slot: int, pair: int) -> float:
    """``C_ap / (4 s2)`` for one slot and one difference vector."""
    P = np.asarray(precoder, dtype=complex)[None]
    return float(surrogate.linear_exponents(P, slots=slice(slot, slot + 1))[0, pair])


def exact_exponents(channels, precoders, vectors, noise_var) -> np.ndarray:
    return pair_exponents(channels, precoders, vectors, noise_var)


def slot_log_objective(exponents: np.ndarray) -> np.ndarray:
    """Per-slot ``log sum_p exp(-x_p)``; the ``m == k`` constant is excluded."""
    return logsumexp(-exponents, axis=-1)


# -- per-hop SCA ----------------------------------------------------------------

def _to_real(p: np.ndarray, scale: float) -> np.ndarray:
    return np.stack([p.real, p.imag], axis=-1).ravel() / scale


def _to_complex(z: np.ndarray, shape, scale: float) -> np.ndarray:
    arr = z.reshape(*shape, 2) * scale
    return arr[..., 0] + 1j * arr[..., 1]


def linearized_objective(sur: PrecoderSurrogate, scale: float):
    """Summed per-slot ``log sum exp(-C_ap / 4 s2)`` over real/imag parts scaled by ``1/scale``."""
    n_act, _, dim, _ = sur.coeff.shape
    coeff = sur.coeff
    c_exp = sur.c_expansion
    denom = 4.0 * sur.noise_var

    def objective(z):
        P = _to_complex(z, (n_act, dim, dim), scale)
        inner = np.einsum("npij,nij->np", coeff.conj(), P).real
        neg = -(2.0 * inner - c_exp) / denom
        val = logsumexp(neg, axis=1)
        q = softmax(neg, axis=1)
        gc = -2.0 / denom * np.einsum("np,npij->nij", q, coeff)
        grad = np.stack([gc.real, gc.imag], axis=-1).ravel() * scale
        return float(np.sum(val)), grad

    return objective


def _solve_linearized(sur: PrecoderSurrogate, start: np.ndarray, power: float,
                      params: SolverParams) -> tuple[np.ndarray, SolveReport]:
    n_act, dim, _ = start.shape
    scale = math.sqrt(power)
    objective = linearized_objective(sur, scale)
    projections = [ball_projection(slice(None), 1.0, block=2 * dim * dim)]
    z0 = _to_real(start, scale)
    f0, _ = objective(z0)
    shifted = ConvexProblem(lambda z: _shift(objective, z, f0), n_act * dim * dim * 2, projections)
    report = solve(shifted, z0, params)
    return _to_complex(report.x, (n_act, dim, dim), scale), report


def _shift(objective, z, f0):
    f, g = objective(z)
    return f - f0, g


def solve_precoder_hop(channels: np.ndarray, prev: np.ndarray, diffs: DifferenceSet, noise_var: float,
                       power: float, params: SolverParams) -> tuple[np.ndarray, list[SolveReport]]:
    """SCA over all slots of one hop; each slot keeps its last non-worse iterate."""
    n, dim, _ = prev.shape
    vectors = diffs.nonzero
    reports: list[SolveReport] = []
    if power <= 0.0:
        return np.zeros_like(prev), reports
    current = project_power(prev, power)
    # zero expansion points make the tangent plane identically zero
    dead = np.sum(np.abs(current) ** 2, axis=(1, 2)) == 0.0
    if np.any(dead):
        current = current.copy()
        current[dead] = math.sqrt(power / dim) * np.eye(dim)
    if vectors.shape[0] == 0:
        return current, reports
    cur_obj = slot_log_objective(exact_exponents(channels, current, vectors, noise_var))
    active = np.arange(n)
    for _ in range(params.sca_max_iters):
        if active.size == 0:
            break
        sur = PrecoderSurrogate.build(channels[active], current[active], vectors, noise_var)
        cand, report = _solve_linearized(sur, current[active], power, params)
        reports.append(report)
        cand = project_power(cand, power)
        new_obj = slot_log_objective(exact_exponents(channels[active], cand, vectors, noise_var))
        gain = cur_obj[active] - new_obj
        accept = gain > 0.0
        idx = active[accept]
        current[idx] = cand[accept]
        cur_obj[idx] = new_obj[accept]
        # relative change of the linear-domain sum is 1 - exp(-gain)
        still = accept & (-np.expm1(-np.where(accept, gain, 0.0)) >= params.sca_tol)
        active = active[still]
    return current, reports


def solve_precoder_step(realization: ChannelRealization, traj: Trajectory, precoders_prev: PrecoderSchedule,
                        scenario: Scenario, diffs=None) -> tuple[PrecoderSchedule, dict]:
    """Update both hops' precoders for the trajectory ``traj``."""
    if diffs is None:
        diffs = hop_differences(scenario)
    real = ChannelRealization.for_positions(realization.small_scale, traj.w, scenario)
    out = {}
    reports = {}
    for hop in (1, 2):
        out[hop], reports[hop] = solve_precoder_hop(
            real.full_channels(hop), np.array(precoders_prev.hop(hop), dtype=complex), diffs[hop - 1],
            scenario.noise_var(hop), scenario.power(hop), scenario.solver_params)
    return PrecoderSchedule(out[1], out[2]), reports


def hop_log_objective(channels, precoders, diffs: DifferenceSet, noise_var: float) -> float:
    """``log`` of the slot-summed pairwise exponentials with the constant part removed."""
    expo = exact_exponents(channels, precoders, diffs.nonzero, noise_var)
    return float(logsumexp(-expo))


def precoder_csv(schedule: PrecoderSchedule) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["slot", "hop", "row", "col", "re", "im", "trace_power"])
    for hop in (1, 2):
        mats = schedule.hop(hop)
        powers = schedule.powers(hop)
        for n in range(mats.shape[0]):
            for i in range(mats.shape[1]):
                for j in range(mats.shape[2]):
                    writer.writerow([n, hop, i, j, repr(float(mats[n, i, j].real)),
                                     repr(float(mats[n, i, j].imag)), repr(float(powers[n]))])
    return buf.getvalue()
