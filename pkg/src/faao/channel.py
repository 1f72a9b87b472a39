"""Rician block-fading channels for the BS-UAV and UAV-GU hops.

Each hop's channel at slot ``n`` factorizes as

    H(n) = sqrt(rho0) / d(n) * Hr(n),
    Hr(n) = sqrt(K/(K+1)) * H_los(n) + sqrt(1/(K+1)) * H_nlos(n),

so the small-scale factor ``Hr`` is drawn once per run (it does not depend
on where the UAV flies) while the distance term follows the trajectory.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario


def distance(pos_uav, pos_ground, altitude: float) -> np.ndarray:
    """3-D distance between a UAV at ``altitude`` and a ground node.

    ``pos_uav`` may be a single 2-vector or an ``(n, 2)`` array of positions.
    """
    diff = np.asarray(pos_uav, dtype=float) - np.asarray(pos_ground, dtype=float)
    return np.sqrt(np.sum(diff**2, axis=-1) + altitude**2)


def rician_weights(K: float) -> tuple[float, float]:
    if math.isinf(K):
        return 1.0, 0.0
    return math.sqrt(K / (K + 1.0)), math.sqrt(1.0 / (K + 1.0))


def ula_steering(n_ant: int, sin_angle) -> np.ndarray:
    """Half-wavelength ULA response, shape ``(..., n_ant)``."""
    k = np.arange(n_ant)
    return np.exp(1j * np.pi * np.multiply.outer(np.asarray(sin_angle), k))


def _los_components(scenario: Scenario, n_rows: int, n_cols: int, hop: int) -> np.ndarray:
    n = scenario.n_slots
    if scenario.los_mode == "ones":
        return np.ones((n, n_rows, n_cols), dtype=complex)
    # Geometry of the straight start-to-end path fixes the LoS angles, so the
    # small-scale factor stays trajectory independent.
    frac = np.arange(n)[:, None] / (n - 1)
    start = np.asarray(scenario.uav_start)
    path = start + frac * (np.asarray(scenario.uav_end) - start)
    ground = scenario.ground_pos(hop)
    horiz = np.linalg.norm(path - ground, axis=1)
    d3 = np.sqrt(horiz**2 + scenario.altitude_H**2)
    # elevation-dependent spatial frequency, same at both ends of the link
    sin_angle = horiz / d3
    a_rx = ula_steering(n_rows, sin_angle)
    a_tx = ula_steering(n_cols, sin_angle)
    return a_rx[:, :, None] * a_tx[:, None, :].conj()


@dataclass(frozen=True)
class SmallScaleFactor:
    """Trajectory-independent channel factors, one matrix per slot.

    ``hop1`` has shape ``(n_slots, n_relay, n_tx)`` and ``hop2`` has shape
    ``(n_slots, n_rx, n_relay)``.
    """

    hop1: np.ndarray
    hop2: np.ndarray

    def __post_init__(self) -> None:
        for arr in (self.hop1, self.hop2):
            arr.setflags(write=False)
        if self.hop1.shape[0] != self.hop2.shape[0]:
            raise ValueError("hop1 and hop2 must cover the same number of slots")

    @property
    def n_slots(self) -> int:
        return self.hop1.shape[0]

    def hop(self, hop: int) -> np.ndarray:
        return self.hop1 if hop == 1 else self.hop2


def draw_small_scale(scenario: Scenario) -> SmallScaleFactor:
    """Draw the Rician small-scale factors for every slot from the scenario seed.

    NLoS entries are i.i.d. CN(0, 1), one independent block per slot.  Hop 1
    is drawn before hop 2 so the stream of draws is fixed by the seed.
    """
    rng = np.random.default_rng(scenario.seed)
    w_los, w_nlos = rician_weights(scenario.rician_K)
    n = scenario.n_slots
    shapes = {1: (scenario.n_relay, scenario.n_tx), 2: (scenario.n_rx, scenario.n_relay)}
    out = {}
    for hop, (rows, cols) in shapes.items():
        nlos = (rng.standard_normal((n, rows, cols)) + 1j * rng.standard_normal((n, rows, cols))) / np.sqrt(2.0)
        los = _los_components(scenario, rows, cols, hop)
        if w_nlos == 0.0:
            out[hop] = los
        elif w_los == 0.0:
            out[hop] = nlos
        else:
            out[hop] = w_los * los + w_nlos * nlos
    return SmallScaleFactor(hop1=out[1], hop2=out[2])


@dataclass(frozen=True)
class ChannelRealization:
    """Small-scale factors paired with per-slot link distances."""

    small_scale: SmallScaleFactor
    distances_hop1: np.ndarray
    distances_hop2: np.ndarray
    rho0: float

    def __post_init__(self) -> None:
        n = self.small_scale.n_slots
        for arr in (self.distances_hop1, self.distances_hop2):
            if arr.shape != (n,):
                raise ValueError(f"distance arrays must have shape ({n},), got {arr.shape}")
            arr.setflags(write=False)

    @classmethod
    def for_positions(cls, small_scale: SmallScaleFactor, positions, scenario: Scenario) -> "ChannelRealization":
        positions = np.asarray(positions, dtype=float)
        d1 = distance(positions, scenario.bs_pos, scenario.altitude_H)
        d2 = distance(positions, scenario.gu_pos, scenario.altitude_H)
        return cls(small_scale, d1, d2, scenario.rho0)

    @property
    def n_slots(self) -> int:
        return self.small_scale.n_slots

    def distances(self, hop: int) -> np.ndarray:
        return self.distances_hop1 if hop == 1 else self.distances_hop2

    def full_channel(self, slot: int, hop: int) -> np.ndarray:
        if not 0 <= slot < self.n_slots:
            raise IndexError(f"slot {slot} out of range [0, {self.n_slots})")
        if hop not in (1, 2):
            raise ValueError(f"hop must be 1 or 2, got {hop}")
        return math.sqrt(self.rho0) / self.distances(hop)[slot] * self.small_scale.hop(hop)[slot]

    def full_channels(self, hop: int) -> np.ndarray:
        """All slots at once, shape ``(n_slots, rows, cols)``."""
        scale = np.sqrt(self.rho0) / self.distances(hop)
        return scale[:, None, None] * self.small_scale.hop(hop)


def channel_csv(realization: ChannelRealization) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["slot", "d_B", "d_U", "fro_B", "fro_U"])
    fro1 = np.linalg.norm(realization.full_channels(1), axis=(1, 2))
    fro2 = np.linalg.norm(realization.full_channels(2), axis=(1, 2))
    for n in range(realization.n_slots):
        writer.writerow([n, repr(float(realization.distances_hop1[n])), repr(float(realization.distances_hop2[n])),
                         repr(float(fro1[n])), repr(float(fro2[n]))])
    return buf.getvalue()
