"""Linear baseline precoders (MRT, ZF, MMSE) scored with the finite-alphabet rate."""

from __future__ import annotations

import enum

import numpy as np

from .ao import Rates, evaluate_rates
from .channel import ChannelRealization, SmallScaleFactor, draw_small_scale
from .kinematics import Trajectory
from .scenario import Scenario
from .sca_precoder import PrecoderSchedule, hop_differences

COND_LIMIT = 1e12


class BaselineKind(enum.Enum):
    MMSE = "mmse"
    ZF = "zf"
    MRT = "mrt"


class SingularChannelError(np.linalg.LinAlgError):
    def __init__(self, message: str, slot: int | None = None, hop: int | None = None):
        super().__init__(message)
        self.slot = slot
        self.hop = hop


def baseline_precoder(kind: BaselineKind, channel, noise_var: float, power: float) -> np.ndarray:
    """Unscaled textbook precoder, then normalized so ``Tr(P^H P) == power``.

    The precoder multiplies a symbol vector of the channel's input dimension,
    so only square channels are supported.
    """
    H = np.atleast_2d(np.asarray(channel, dtype=complex))
    rows, cols = H.shape
    if rows != cols:
        raise ValueError(f"baseline precoders need a square channel, got {H.shape}")
    if not np.any(H):
        raise ValueError("channel is identically zero")
    if power < 0:
        raise ValueError("power must be non-negative")
    kind = BaselineKind(kind)
    Hh = H.conj().T
    if kind is BaselineKind.MRT:
        P = Hh
    elif kind is BaselineKind.ZF:
        gram = H @ Hh
        if np.linalg.cond(gram) > COND_LIMIT:
            raise SingularChannelError("channel Gram matrix is singular; zero forcing is undefined")
        P = Hh @ np.linalg.inv(gram)
    else:
        if power == 0.0:
            return np.zeros((cols, rows), dtype=complex)
        reg = cols * noise_var / power
        P = np.linalg.solve(Hh @ H + reg * np.eye(cols), Hh)
    fro2 = float(np.sum(np.abs(P) ** 2))
    return P * np.sqrt(power / fro2)


def baseline_schedule(kind: BaselineKind, realization: ChannelRealization, scenario: Scenario) -> PrecoderSchedule:
    mats = {}
    for hop in (1, 2):
        chans = realization.full_channels(hop)
        out = []
        for n, H in enumerate(chans):
            try:
                out.append(baseline_precoder(kind, H, scenario.noise_var(hop), scenario.power(hop)))
            except SingularChannelError as exc:
                raise SingularChannelError(f"hop {hop}, slot {n}: {exc}", slot=n, hop=hop) from exc
        mats[hop] = np.stack(out)
    return PrecoderSchedule(mats[1], mats[2])


def run_baseline(scenario: Scenario, kind: BaselineKind, trajectory: Trajectory,
                 small_scale: SmallScaleFactor | None = None) -> tuple[PrecoderSchedule, Rates]:
    """Per-slot baseline precoders on a fixed trajectory, both hops."""
    if small_scale is None:
        small_scale = draw_small_scale(scenario)
    real = ChannelRealization.for_positions(small_scale, trajectory.w, scenario)
    schedule = baseline_schedule(kind, real, scenario)
    return schedule, evaluate_rates(real, trajectory, schedule, scenario, hop_differences(scenario))
