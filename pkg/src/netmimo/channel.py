"""Rayleigh fading under SNR-coupled pathloss, and per-transmitter quantized
channel estimates.

The pathloss of link (k, i) is tied to the nominal SNR P through the
interference level Gamma_ki: the link variance is sigma_ki^2 = P^(Gamma_ki - 1),
so cross links fade as P grows and the direct links keep unit variance.

Randomness is organized as substreams keyed by (master seed, trial index,
purpose tag), so Monte-Carlo results do not depend on worker scheduling and
trials can be re-drawn individually.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import InterferenceLevelMatrix

__all__ = [
    "PURPOSE_CHANNEL",
    "PURPOSE_ESTIMATE",
    "PURPOSE_LAYOUT",
    "trial_rng",
    "complex_gaussian",
    "PathlossModel",
    "ChannelRealization",
    "EstimateSet",
    "pathloss_matrix",
    "draw_channel",
    "draw_estimate",
    "apply_estimate_noise",
    "estimate_set",
]

# Substream purpose tags. Channel and estimate noise use disjoint streams so
# the same channel can be re-dressed with different estimation errors.
PURPOSE_CHANNEL = 0
PURPOSE_ESTIMATE = 1
PURPOSE_LAYOUT = 2


def trial_rng(seed: int, trial: int, purpose: int) -> np.random.Generator:
    """Independent generator for one (trial, purpose) cell of a master seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(trial), int(purpose))))


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric complex Gaussian, unit total variance per entry."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@dataclass(frozen=True)
class PathlossModel:
    """Link variances sigma_ki^2 = P^(Gamma_ki - 1) at nominal SNR P > 1."""

    gamma: float
    p: float
    sigma_sq: np.ndarray

    def __post_init__(self) -> None:
        s = np.array(self.sigma_sq, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "sigma_sq", s)

    @property
    def K(self) -> int:
        return int(self.sigma_sq.shape[0])

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.sigma_sq)


@dataclass(frozen=True)
class ChannelRealization:
    """One fading draw: H = sigma * H_unit entrywise."""

    H: np.ndarray        # faded channel, rows are receivers
    H_unit: np.ndarray   # unit-variance fading factors


@dataclass(frozen=True)
class EstimateSet:
    """Per-transmitter channel estimates, per_tx[j] is TX j's K x K estimate."""

    per_tx: np.ndarray


def pathloss_matrix(levels: InterferenceLevelMatrix, p: float) -> PathlossModel:
    """Link variances at nominal SNR p.

    p must exceed 1: the allocation formulas scale with log2(p) and the
    parameterization degenerates at log p <= 0.
    """
    if p <= 1.0:
        raise ValueError(f"nominal SNR must exceed 1 (0 dB), got {p}")
    return PathlossModel(gamma=levels.gamma, p=float(p), sigma_sq=float(p) ** (levels.entries - 1.0))


def draw_channel(model: PathlossModel, rng: np.random.Generator) -> ChannelRealization:
    """One Rayleigh draw: entries H_ki = sigma_ki * CN(0, 1), independent."""
    h_unit = complex_gaussian(rng, (model.K, model.K))
    return ChannelRealization(H=model.sigma * h_unit, H_unit=h_unit)


def _check_bits(bits: np.ndarray, k: int, ndim: int) -> np.ndarray:
    b = np.asarray(bits, dtype=float)
    if b.shape != (k,) * ndim:
        raise ValueError(f"bits must have shape {(k,) * ndim}, got {b.shape}")
    if np.any(np.isnan(b)) or np.any(b < 0):
        raise ValueError("bit counts must be >= 0 (np.inf means perfect knowledge)")
    return b


def apply_estimate_noise(
    chan: ChannelRealization, model: PathlossModel, bits: np.ndarray, noise: np.ndarray
) -> np.ndarray:
    """Dress a channel with quantization-grade noise for the given bit counts.

    Entry (k, i) of the result is H_ki + sigma_ki * 2^(-B_ki / 2) * noise_ki,
    so the estimation error keeps the link's own scale and shrinks by half a
    bit of standard deviation per allocated bit. bits may carry leading axes
    (one noise matrix per transmitter); np.inf yields an exact copy.
    """
    b = np.asarray(bits, dtype=float)
    return chan.H + model.sigma * np.exp2(-0.5 * b) * noise


def draw_estimate(
    chan: ChannelRealization, model: PathlossModel, bits: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """One transmitter's estimate of the whole channel under a K x K bit table.

    The estimation noise is a fresh unit-variance complex Gaussian draw,
    independent of the channel and of any other transmitter's estimate.
    """
    k = model.K
    b = _check_bits(bits, k, 2)
    return apply_estimate_noise(chan, model, b, complex_gaussian(rng, (k, k)))


def estimate_set(
    chan: ChannelRealization, model: PathlossModel, bits: np.ndarray, rng: np.random.Generator
) -> EstimateSet:
    """All K transmitters' estimates from a (K, K, K) bit tensor indexed [j, k, i]."""
    k = model.K
    b = _check_bits(bits, k, 3)
    return EstimateSet(per_tx=apply_estimate_noise(chan, model, b, complex_gaussian(rng, (k, k, k))))
