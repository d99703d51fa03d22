"""Traffic models and trace generation for the radio and SFC scenarios.

Inter-arrival and packet-size laws cover the per-slice models of the radio
scenario (uniform, truncated Pareto, exponential, constant, truncated
lognormal) and the lognormal flow arrivals of the SFC scenario. Truncated
laws are re-parameterised so that the mean *after* truncation equals the
configured mean.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import optimize, special


class ConfigError(ValueError):
    """Invalid model or experiment parameters."""


class SliceId(IntEnum):
    VOLTE = 0
    VIDEO = 1
    URLLC = 2

    @property
    def label(self) -> str:
        return ("VoLTE", "Video", "URLLC")[self.value]


class Category(IntEnum):
    A = 0
    B = 1
    C = 2


# ---------------------------------------------------------------------------
# distributions


def _ncdf(x):
    return special.ndtr(x)


@dataclass(frozen=True)
class Uniform:
    min: float
    max: float

    def __post_init__(self):
        if self.min < 0 or not self.max > self.min:
            raise ConfigError(f"uniform needs 0 <= min < max, got [{self.min}, {self.max}]")

    @property
    def mean(self) -> float:
        return 0.5 * (self.min + self.max)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.min, self.max, n)


@dataclass(frozen=True)
class Exponential:
    mean: float

    def __post_init__(self):
        if not self.mean > 0:
            raise ConfigError(f"exponential mean must be positive, got {self.mean}")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mean * rng.standard_exponential(n)


@dataclass(frozen=True)
class Lognormal:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError(f"lognormal sigma must be positive, got {self.sigma}")

    @property
    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.sigma**2)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.exp(self.mu + self.sigma * rng.standard_normal(n))


@dataclass(frozen=True)
class Constant:
    size: float

    def __post_init__(self):
        if not self.size > 0:
            raise ConfigError(f"constant size must be positive, got {self.size}")

    @property
    def mean(self) -> float:
        return self.size

    @property
    def max(self) -> float:
        return self.size

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.full(n, float(self.size))


def pareto_truncated_mean(shape: float, scale: float, upper: float) -> float:
    """Mean of a Pareto(shape, scale) law conditioned on X <= upper."""
    a, xm, b = shape, scale, upper
    tail = (xm / b) ** a
    if a == 1.0:
        body = xm * math.log(b / xm)
    else:
        body = a * xm**a * (xm ** (1 - a) - b ** (1 - a)) / (a - 1)
    return body / (1.0 - tail)


@dataclass(frozen=True)
class TruncatedPareto:
    """Pareto law truncated at ``max`` whose truncated mean equals ``mean``.

    The scale (minimum value) is solved numerically from (shape, mean, max).
    """

    shape: float
    mean: float
    max: float

    def __post_init__(self):
        if not self.shape > 1:
            raise ConfigError(f"Pareto shape must exceed 1, got {self.shape}")
        if not 0 < self.mean < self.max:
            raise ConfigError(f"need 0 < mean < max, got mean={self.mean}, max={self.max}")

    @cached_property
    def scale(self) -> float:
        f = lambda xm: pareto_truncated_mean(self.shape, xm, self.max) - self.mean
        # truncated mean rises monotonically from 0 (scale -> 0) to max (scale -> max)
        return optimize.brentq(f, self.mean * 1e-9, self.mean, xtol=1e-15, rtol=1e-14)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        a, xm = self.shape, self.scale
        keep = 1.0 - (xm / self.max) ** a
        u = rng.random(n)
        x = xm * (1.0 - u * keep) ** (-1.0 / a)
        return np.minimum(x, self.max)


def lognormal_truncated_moments(mu: float, sigma: float, upper: float) -> tuple[float, float]:
    """(mean, stddev) of a lognormal(mu, sigma) conditioned on X <= upper."""
    z = (math.log(upper) - mu) / sigma
    p = _ncdf(z)
    m1 = math.exp(mu + sigma**2 / 2) * _ncdf(z - sigma) / p
    m2 = math.exp(2 * mu + 2 * sigma**2) * _ncdf(z - 2 * sigma) / p
    return m1, math.sqrt(max(m2 - m1 * m1, 0.0))


@dataclass(frozen=True)
class TruncatedLognormal:
    """Lognormal law truncated at ``max`` with the given post-truncation mean/stddev."""

    mean: float
    stddev: float
    max: float

    def __post_init__(self):
        if not self.mean > 0 or not self.stddev > 0:
            raise ConfigError("truncated lognormal needs positive mean and stddev")
        if not self.max > self.mean:
            raise ConfigError(f"max ({self.max}) must exceed mean ({self.mean})")

    @cached_property
    def params(self) -> tuple[float, float]:
        s2 = math.log1p((self.stddev / self.mean) ** 2)
        x0 = np.array([math.log(self.mean) - s2 / 2, math.sqrt(s2)])

        def resid(x):
            mu, sigma = x[0], abs(x[1])
            m, s = lognormal_truncated_moments(mu, sigma, self.max)
            return [m / self.mean - 1.0, s / self.stddev - 1.0]

        sol, info, ier, msg = optimize.fsolve(resid, x0, xtol=1e-13, full_output=True)
        if ier != 1 or max(abs(r) for r in resid(sol)) > 1e-9:
            raise ConfigError(f"cannot match truncated lognormal moments: {msg}")
        return float(sol[0]), float(abs(sol[1]))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        mu, sigma = self.params
        out = np.empty(n)
        filled = 0
        while filled < n:
            draw = np.exp(mu + sigma * rng.standard_normal(n - filled))
            draw = draw[draw <= self.max]
            out[filled:filled + draw.size] = draw
            filled += draw.size
        return out


InterArrivalModel = Uniform | TruncatedPareto | Exponential | Lognormal
PacketSizeModel = Constant | TruncatedPareto | TruncatedLognormal


def sample_inter_arrival(model: InterArrivalModel, rng: np.random.Generator) -> float:
    if not isinstance(model, (Uniform, TruncatedPareto, Exponential, Lognormal)):
        raise ConfigError(f"not an inter-arrival model: {model!r}")
    return float(model.sample(rng, 1)[0])


def sample_packet_size(model: PacketSizeModel, rng: np.random.Generator) -> float:
    if not isinstance(model, (Constant, TruncatedPareto, TruncatedLognormal)):
        raise ConfigError(f"not a packet-size model: {model!r}")
    return float(model.sample(rng, 1)[0])


# ---------------------------------------------------------------------------
# slice configuration


@dataclass(frozen=True)
class SlaSpec:
    min_rate: float  # bit/s
    max_latency: float  # s

    def __post_init__(self):
        if not self.min_rate > 0 or not self.max_latency > 0:
            raise ConfigError(f"SLA rate and latency must be positive: {self}")


@dataclass(frozen=True)
class SliceConfig:
    slice_id: SliceId
    user_count: int
    inter_arrival: InterArrivalModel
    packet_size: PacketSizeModel
    sla: SlaSpec

    def __post_init__(self):
        if self.user_count < 0:
            raise ConfigError(f"negative user count for {self.slice_id.label}")


MB = 1e6


def default_slices(user_counts=(46, 46, 8), urllc_size_scale: float = 1.0) -> list[SliceConfig]:
    """The three radio slices with their standard traffic models and SLAs.

    ``urllc_size_scale`` divides the URLLC file-size law (mean, stddev, max).
    """
    k = float(urllc_size_scale)
    if not k > 0:
        raise ConfigError("urllc_size_scale must be positive")
    return [
        SliceConfig(SliceId.VOLTE, user_counts[0], Uniform(0.0, 0.160), Constant(40.0),
                    SlaSpec(51e3, 0.010)),
        SliceConfig(SliceId.VIDEO, user_counts[1], TruncatedPareto(1.2, 0.006, 0.0125),
                    TruncatedPareto(1.2, 100.0, 250.0), SlaSpec(5e6, 0.010)),
        SliceConfig(SliceId.URLLC, user_counts[2], Exponential(0.180),
                    TruncatedLognormal(2 * MB / k, 0.722 * MB / k, 5 * MB / k),
                    SlaSpec(10e6, 0.005)),
    ]


# ---------------------------------------------------------------------------
# packet traces


@dataclass
class PacketTrace:
    time: np.ndarray
    user: np.ndarray
    slice: np.ndarray
    size: np.ndarray

    def __len__(self):
        return self.time.size

    @classmethod
    def empty(cls) -> PacketTrace:
        return cls(np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))

    @classmethod
    def concat(cls, parts) -> PacketTrace:
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("time", "user", "slice", "size")))

    def digest(self, h=None):
        h = h or hashlib.sha256()
        for arr in (self.time, self.user, self.slice, self.size):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["arrival_time_s", "user_id", "slice", "size_bytes"])
            for t, u, s, z in zip(self.time.tolist(), self.user.tolist(),
                                  self.slice.tolist(), self.size.tolist()):
                w.writerow([repr(t), u, SliceId(s).label, repr(z)])

    @classmethod
    def from_csv(cls, path) -> PacketTrace:
        labels = {s.label: int(s) for s in SliceId}
        rows = list(csv.DictReader(open(path, newline="")))
        return cls(np.array([float(r["arrival_time_s"]) for r in rows]),
                   np.array([int(r["user_id"]) for r in rows], dtype=np.int64),
                   np.array([labels[r["slice"]] for r in rows], dtype=np.int64),
                   np.array([float(r["size_bytes"]) for r in rows]))


_BLOCK = 256


class _UserStream:
    """Renewal arrivals of one user, drawn in fixed-size blocks.

    Fixed blocks make the realised sequence independent of how the caller
    windows the timeline.
    """

    def __init__(self, cfg: SliceConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.clock = 0.0
        self._times = np.empty(0)
        self._sizes = np.empty(0)

    def _refill(self):
        gaps = self.cfg.inter_arrival.sample(self.rng, _BLOCK)
        sizes = self.cfg.packet_size.sample(self.rng, _BLOCK)
        times = self.clock + np.cumsum(gaps)
        self.clock = float(times[-1])
        self._times = np.concatenate([self._times, times])
        self._sizes = np.concatenate([self._sizes, sizes])

    def take_until(self, t_end: float):
        while self.clock < t_end:
            self._refill()
        k = int(np.searchsorted(self._times, t_end, side="left"))
        times, sizes = self._times[:k], self._sizes[:k]
        self._times, self._sizes = self._times[k:], self._sizes[k:]
        return times, sizes


class PacketSource:
    """Incremental packet-trace generator over consecutive time windows.

    Users are numbered consecutively in slice order. Every user owns an
    independent child stream spawned from ``rng``.
    """

    def __init__(self, slices: list[SliceConfig], rng: np.random.Generator):
        self.slices = list(slices)
        self.user_slice = np.array([int(c.slice_id) for c in self.slices
                                    for _ in range(c.user_count)], dtype=np.int64)
        cfg_of = [c for c in self.slices for _ in range(c.user_count)]
        children = rng.spawn(len(cfg_of)) if cfg_of else []
        self._streams = [_UserStream(c, g) for c, g in zip(cfg_of, children)]
        self.now = 0.0

    @property
    def n_users(self) -> int:
        return len(self._streams)

    def advance(self, t_end: float) -> PacketTrace:
        """Events with arrival time in [now, t_end), sorted by time."""
        if t_end < self.now:
            raise ValueError("windows must move forward in time")
        times, users, sizes = [], [], []
        for uid, stream in enumerate(self._streams):
            t, z = stream.take_until(t_end)
            times.append(t)
            sizes.append(z)
            users.append(np.full(t.size, uid, dtype=np.int64))
        self.now = t_end
        if not times:
            return PacketTrace.empty()
        time = np.concatenate(times)
        order = np.lexsort((np.concatenate(users), time))
        user = np.concatenate(users)[order]
        return PacketTrace(time[order], user, self.user_slice[user], np.concatenate(sizes)[order])


def generate_packet_trace(slices: list[SliceConfig], horizon: float,
                          rng: np.random.Generator) -> PacketTrace:
    if not horizon > 0:
        raise ConfigError(f"horizon must be positive, got {horizon}")
    return PacketSource(slices, rng).advance(horizon)


# ---------------------------------------------------------------------------
# SFC flow traces


@dataclass
class FlowTrace:
    time: np.ndarray
    category: np.ndarray

    def __len__(self):
        return self.time.size

    def digest(self, h=None):
        h = h or hashlib.sha256()
        h.update(np.ascontiguousarray(self.time).tobytes())
        h.update(np.ascontiguousarray(self.category).tobytes())
        return h

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["arrival_time_s", "category"])
            for t, c in zip(self.time.tolist(), self.category.tolist()):
                w.writerow([repr(t), Category(c).name])

    @classmethod
    def from_csv(cls, path) -> FlowTrace:
        rows = list(csv.DictReader(open(path, newline="")))
        return cls(np.array([float(r["arrival_time_s"]) for r in rows]),
                   np.array([Category[r["category"]] for r in rows], dtype=np.int64))


def default_flow_models(mean_gap: float = 0.02, sigma: float = 0.5) -> list[Lognormal]:
    return [Lognormal(math.log(mean_gap), sigma) for _ in Category]


def generate_flow_trace(rates: list[Lognormal], count: int,
                        rng: np.random.Generator) -> FlowTrace:
    """First ``count`` arrivals of the superposed per-category renewal streams."""
    if count <= 0:
        raise ConfigError(f"flow count must be positive, got {count}")
    if len(rates) != len(Category):
        raise ConfigError(f"need one inter-arrival model per category, got {len(rates)}")
    streams = rng.spawn(len(rates))
    # each stream's first `count` arrivals always cover the merged first `count`
    times = [np.cumsum(m.sample(g, count)) for m, g in zip(rates, streams)]
    cats = [np.full(count, c, dtype=np.int64) for c in range(len(rates))]
    t, c = np.concatenate(times), np.concatenate(cats)
    order = np.lexsort((c, t))[:count]
    return FlowTrace(t[order], c[order])


@dataclass
class UserPlacement:
    distance: np.ndarray
    angle: np.ndarray = field(repr=False)


def place_users(n: int, rng: np.random.Generator, radius: float = 40.0,
                min_distance: float = 1.0) -> UserPlacement:
    """Uniform positions over a disc around the base station."""
    u = rng.random(n)
    angle = rng.uniform(0.0, 2 * math.pi, n)
    d = radius * np.sqrt(u)
    return UserPlacement(np.maximum(d, min_distance), angle)
