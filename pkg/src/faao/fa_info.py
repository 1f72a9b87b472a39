"""Mutual information of MIMO links driven by finite-alphabet inputs.

Two evaluations are provided.  :func:`mi_closed_form` is the pairwise
exponential expression used by every optimization step,

    I = 2 N log2(M) - log2 sum_m sum_k exp(-||H P (x_m - x_k)||^2 / (4 s2)),

and :func:`mi_monte_carlo` estimates the exact information rate by averaging
over noise realizations; it serves as an independent check of the closed form.
All exponential sums are evaluated in the log domain because at realistic link
budgets the exponents reach 1e4 and plain ``exp`` underflows.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

MAX_PAIRS = 2**20
LN2 = math.log(2.0)


@dataclass(frozen=True)
class Constellation:
    name: str
    points: np.ndarray

    @property
    def order(self) -> int:
        return len(self.points)


def _normalized(points) -> np.ndarray:
    pts = np.asarray(points, dtype=complex)
    pts = pts - pts.mean()
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


def constellation(name: str) -> Constellation:
    """Unit-energy, zero-mean, equiprobable constellation by name."""
    key = name.lower()
    if key == "bpsk":
        pts = np.array([1.0, -1.0], dtype=complex)
    elif key == "qpsk":
        pts = _normalized([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j])
    elif key == "8psk":
        pts = np.exp(2j * np.pi * np.arange(8) / 8)
    elif key == "16qam":
        levels = np.array([-3, -1, 1, 3], dtype=float)
        pts = _normalized([re + 1j * im for re in levels for im in levels])
    else:
        raise ValueError(f"unknown modulation {name!r}")
    return Constellation(key, pts)


@dataclass(frozen=True)
class DifferenceSet:
    """All ordered pairs of symbol vectors and their differences.

    ``vectors[m * M + k] = symbols[m] - symbols[k]`` with ``M = order**dim``.
    """

    order: int
    dim: int
    symbols: np.ndarray
    vectors: np.ndarray

    @property
    def n_symbols(self) -> int:
        return self.symbols.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.vectors.shape[0]

    @property
    def nonzero(self) -> np.ndarray:
        """Difference vectors with ``m != k`` (the zero diagonal removed)."""
        m = self.n_symbols
        mask = ~np.eye(m, dtype=bool).ravel()
        return self.vectors[mask]

    @property
    def max_rate(self) -> float:
        """Saturation value ``dim * log2(order)`` in bits."""
        return self.dim * math.log2(self.order)


def enumerate_differences(const: Constellation, dim: int) -> DifferenceSet:
    n_sym = const.order**dim
    if n_sym * n_sym > MAX_PAIRS:
        raise ValueError(f"{n_sym**2} symbol pairs exceed the enumeration guard of {MAX_PAIRS}")
    symbols = np.array(list(itertools.product(const.points, repeat=dim)), dtype=complex).reshape(n_sym, dim)
    vectors = (symbols[:, None, :] - symbols[None, :, :]).reshape(n_sym * n_sym, dim)
    return DifferenceSet(const.order, dim, symbols, vectors)


def _check_dims(channel: np.ndarray, precoder: np.ndarray, diffs: DifferenceSet) -> None:
    if channel.shape[-1] != precoder.shape[-2]:
        raise ValueError(f"channel {channel.shape} and precoder {precoder.shape} are not conformable")
    if precoder.shape[-1] != diffs.dim:
        raise ValueError(f"precoder has {precoder.shape[-1]} columns, difference set has dim {diffs.dim}")


def pair_exponents(channel, precoder, vectors: np.ndarray, noise_var: float) -> np.ndarray:
    """``||H P u||^2 / (4 s2)`` for each row ``u`` of ``vectors``.

    ``channel`` and ``precoder`` may carry a leading slot axis; the result
    then has shape ``(n_slots, n_vectors)``.
    """
    hp = np.asarray(channel) @ np.asarray(precoder)
    y = hp @ vectors.T
    return np.sum(y.real**2 + y.imag**2, axis=-2) / (4.0 * noise_var)


def log_offdiag_sum(exponents_nz: np.ndarray, axis=-1) -> np.ndarray:
    """``log sum exp(-e)`` over the non-zero-difference exponents."""
    return logsumexp(-exponents_nz, axis=axis)


def mi_from_exponents(exponents_nz: np.ndarray, diffs: DifferenceSet) -> np.ndarray:
    """Closed-form MI from the non-zero-difference exponents (last axis)."""
    # sum over all pairs = M + sum_offdiag  =>  I = N log2 q - log2(1 + offdiag / M)
    log_m = diffs.dim * math.log(diffs.order)
    rel = log_offdiag_sum(exponents_nz) - log_m
    mi = diffs.max_rate - np.logaddexp(0.0, rel) / LN2
    return np.clip(mi, 0.0, diffs.max_rate)


def mi_closed_form(channel, precoder, diffs: DifferenceSet, noise_var: float) -> float:
    channel = np.atleast_2d(np.asarray(channel, dtype=complex))
    precoder = np.atleast_2d(np.asarray(precoder, dtype=complex))
    _check_dims(channel, precoder, diffs)
    if not noise_var > 0:
        raise ValueError("noise_var must be positive")
    expo = pair_exponents(channel, precoder, diffs.nonzero, noise_var)
    return float(mi_from_exponents(expo, diffs))


def link_exponents(channels, precoders, diffs: DifferenceSet, noise_var: float) -> np.ndarray:
    """Per-slot non-zero-pair exponents, shape ``(n_slots, M*M - M)``."""
    channels = np.asarray(channels)
    precoders = np.asarray(precoders)
    if channels.shape[0] != precoders.shape[0]:
        raise ValueError(f"slot count mismatch: {channels.shape[0]} channels vs {precoders.shape[0]} precoders")
    _check_dims(channels, precoders, diffs)
    return pair_exponents(channels, precoders, diffs.nonzero, noise_var)


def link_sum_exp(channels, precoders, diffs: DifferenceSet, noise_var: float) -> float:
    """``sum_n sum_m sum_k exp(-||H(n) P(n) u_mk||^2 / 4 s2)`` over all slots of one hop."""
    expo = link_exponents(channels, precoders, diffs, noise_var)
    n_slots = expo.shape[0]
    return float(n_slots * diffs.n_symbols + np.exp(logsumexp(-expo)))


def link_offset(n_slots: int, diffs: DifferenceSet) -> float:
    """``2 * n_slots * dim * log2(order)``, the constant paired with :func:`link_sum_exp`."""
    return 2.0 * n_slots * diffs.max_rate


def mi_monte_carlo(channel, precoder, const: Constellation, dim: int, noise_var: float,
                   samples: int, seed: int, batch: int = 4096) -> tuple[float, float]:
    """Monte-Carlo estimate of the exact finite-alphabet information rate.

    Returns ``(estimate, standard_error)`` in bits per channel use.  Each noise
    draw is shared by all transmitted symbols ``m`` so one sample is the full
    ``m``-average of the log-sum term.
    """
    if samples < 100:
        raise ValueError("at least 100 samples are required")
    channel = np.atleast_2d(np.asarray(channel, dtype=complex))
    precoder = np.atleast_2d(np.asarray(precoder, dtype=complex))
    diffs = enumerate_differences(const, dim)
    _check_dims(channel, precoder, diffs)
    n_sym = diffs.n_symbols
    n_rx = channel.shape[0]
    d = (channel @ precoder @ diffs.vectors.T).T.reshape(n_sym, n_sym, n_rx)
    d_energy = np.sum(np.abs(d) ** 2, axis=-1)
    log_m = dim * math.log(const.order)
    rng = np.random.default_rng(seed)
    values = np.empty(samples)
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        noise = np.sqrt(noise_var / 2.0) * (rng.standard_normal((b, n_rx)) + 1j * rng.standard_normal((b, n_rx)))
        # ||d + n||^2 - ||n||^2 = ||d||^2 + 2 Re(d^H n)
        cross = np.einsum("mkr,br->bmk", d.conj(), noise).real
        z = (d_energy[None] + 2.0 * cross) / noise_var
        inner = logsumexp(-z, axis=2) - log_m
        values[done:done + b] = -np.mean(inner, axis=1) / LN2
        done += b
    est = float(np.mean(values))
    err = float(np.std(values, ddof=1) / math.sqrt(samples))
    return est, err
