"""Comparison schemes: demand-prediction allocation, hard slicing, and the
minimum-waiting-time SFC scheduler.

Proportional allocations are snapped to the bandwidth grid with
largest-remainder rounding so they always sum to the total exactly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .radio_env import BandwidthAllocation, grid_units
from .sfc_env import SfcSystem
from .traffic import ConfigError

DEFAULT_GRANULARITY = 1e5  # 0.1 MHz


@dataclass(frozen=True)
class RequiredRates:
    per_slice: tuple[float, ...] = (51e3, 5e6, 10e6)

    def __post_init__(self):
        if any(not r > 0 for r in self.per_slice):
            raise ConfigError(f"required rates must be positive, got {self.per_slice}")


@dataclass
class DemandPredictor:
    """Per-slice arrival-count forecaster.

    ``exponential_smoothing`` keeps ``p <- factor * latest + (1 - factor) * p``;
    ``sliding_window`` averages the last ``width`` epochs. The first update
    returns the latest counts.
    """

    method: str = "exponential_smoothing"
    factor: float = 0.5
    width: int = 5
    _pred: np.ndarray | None = field(default=None, repr=False)
    _window: deque = field(default_factory=deque, repr=False)

    def __post_init__(self):
        if self.method == "exponential_smoothing":
            if not 0.0 < self.factor <= 1.0:
                raise ConfigError(f"smoothing factor must lie in (0, 1], got {self.factor}")
        elif self.method == "sliding_window":
            if self.width < 1:
                raise ConfigError("window width must be >= 1")
        else:
            raise ConfigError(f"unknown predictor method {self.method!r}")

    def update(self, latest) -> np.ndarray:
        x = np.asarray(latest, dtype=float)
        if np.any(x < 0):
            raise ValueError("counts must be nonnegative")
        if self.method == "exponential_smoothing":
            if self._pred is None:
                self._pred = x.copy()
            else:
                self._pred = self.factor * x + (1.0 - self.factor) * self._pred
            return self._pred.copy()
        self._window.append(x)
        while len(self._window) > self.width:
            self._window.popleft()
        return np.mean(self._window, axis=0)

    def reset(self):
        self._pred = None
        self._window.clear()


def predict_demand(predictor: DemandPredictor, latest_counts) -> np.ndarray:
    return predictor.update(latest_counts)


def largest_remainder(shares, units: int) -> list[int]:
    """Integer apportionment of ``units`` proportional to nonnegative ``shares``.

    Floors each quota and hands leftover units to the largest fractional
    parts, lower index first on ties.
    """
    s = np.asarray(shares, dtype=float)
    if s.ndim != 1 or s.size == 0 or np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError(f"invalid shares {shares}")
    total = s.sum()
    if total <= 0:
        s = np.ones_like(s)
        total = s.size
    quota = units * s / total
    base = np.floor(quota).astype(np.int64)
    # guard against quota like 2.9999999 from rounding noise
    base = np.minimum(base, units)
    left = units - int(base.sum())
    frac = quota - base
    order = sorted(range(s.size), key=lambda i: (-frac[i], i))
    for i in order[:left]:
        base[i] += 1
    return [int(b) for b in base]


def _snap(shares, total: float, granularity: float) -> BandwidthAllocation:
    units = largest_remainder(shares, grid_units(total, granularity))
    return BandwidthAllocation(tuple(u * granularity for u in units))


def dp_shares(predicted, total: float, rates: RequiredRates | None = None) -> np.ndarray:
    """Unrounded proportional split ``W * N_i R_i / sum_j N_j R_j`` (R = 1 without rates).

    Falls back to an equal split when every weight is zero.
    """
    n = np.asarray(predicted, dtype=float)
    if np.any(n < 0):
        raise ValueError("predicted counts must be nonnegative")
    w = n if rates is None else n * np.asarray(rates.per_slice, dtype=float)
    if w.sum() <= 0:
        return np.full(n.size, total / n.size)
    return total * w / w.sum()


def dp_no_allocation(predicted, total: float = 10e6,
                     granularity: float = DEFAULT_GRANULARITY) -> BandwidthAllocation:
    return _snap(dp_shares(predicted, total), total, granularity)


def dp_bw_allocation(predicted, rates: RequiredRates | None = None, total: float = 10e6,
                     granularity: float = DEFAULT_GRANULARITY) -> BandwidthAllocation:
    rates = rates or RequiredRates()
    if len(rates.per_slice) != len(predicted):
        raise ValueError("need one required rate per slice")
    return _snap(dp_shares(predicted, total, rates), total, granularity)


def hard_slicing(total: float = 10e6, slice_count: int = 3,
                 granularity: float = DEFAULT_GRANULARITY) -> BandwidthAllocation:
    if slice_count < 1:
        raise ConfigError("need at least one slice")
    return _snap(np.ones(slice_count), total, granularity)


def no_priority_assign(system: SfcSystem, category: int, now: float) -> int:
    """SFC with the least projected sojourn for a new flow; cheaper CPU wins ties."""
    proj = system.projected_sojourns(category, now)
    best = min(proj)
    tied = [i for i, p in enumerate(proj) if p - best <= 1e-12 * max(1.0, abs(best))]
    return min(tied, key=lambda i: (system.specs[i].cpu_cost, i))
