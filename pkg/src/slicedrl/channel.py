"""Downlink link model: log-distance path loss, Rayleigh block fading, array gain."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .traffic import ConfigError


@dataclass(frozen=True)
class LinkConfig:
    antenna_count: int = 32
    reference_snr_db: float = 20.0
    reference_distance: float = 40.0
    path_loss_exponent: float = 3.5
    slot_duration: float = 0.0005

    def __post_init__(self):
        if self.antenna_count <= 0:
            raise ConfigError(f"antenna_count must be positive, got {self.antenna_count}")
        if not self.slot_duration > 0:
            raise ConfigError("slot_duration must be positive")
        if self.path_loss_exponent < 2:
            raise ConfigError("path_loss_exponent must be >= 2")
        if not self.reference_distance > 0:
            raise ConfigError("reference_distance must be positive")


@dataclass(frozen=True)
class UserLink:
    user_id: int
    distance: float
    mean_snr: float


def mean_snr(distance, cfg: LinkConfig):
    """Linear mean SNR at ``distance`` (scalar or array)."""
    ref = 10.0 ** (cfg.reference_snr_db / 10.0)
    return ref * (np.asarray(distance, dtype=float) / cfg.reference_distance) ** (-cfg.path_loss_exponent)


def make_links(distances, cfg: LinkConfig) -> list[UserLink]:
    snr = mean_snr(distances, cfg)
    return [UserLink(i, float(d), float(s)) for i, (d, s) in enumerate(zip(distances, snr))]


def fading_gain(rng: np.random.Generator, size=None):
    """Unit-mean exponential power gain (squared Rayleigh amplitude)."""
    return rng.standard_exponential(size)


def achievable_rate(bandwidth: float, link: UserLink, fading: float, cfg: LinkConfig) -> float:
    """Shannon rate in bit/s with the array gain applied inside the log."""
    if bandwidth < 0:
        raise ValueError(f"negative bandwidth {bandwidth}")
    if bandwidth == 0:
        return 0.0
    return bandwidth * math.log2(1.0 + cfg.antenna_count * fading * link.mean_snr)
