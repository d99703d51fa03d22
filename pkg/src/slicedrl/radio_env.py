"""Radio bandwidth-slicing environment.

One base station serves users of three slices on the downlink. A bandwidth
allocation is held for one epoch (1 s = 2000 slots of 0.5 ms); inside each
slice the whole slice bandwidth goes to one backlogged user per slot in
round-robin order. In no-slicing mode all users share one ring over the full
bandwidth.
"""

from __future__ import annotations

import hashlib
import math
from bisect import bisect_left, insort
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .channel import LinkConfig, mean_snr
from .traffic import ConfigError, PacketSource, SlaSpec, SliceConfig, default_slices, place_users


@dataclass(frozen=True)
class RewardConfig:
    se_weight: float = 0.1
    qoe_weight: float = 5000.0
    # "pooled": satisfied / arrived over all slices; "slice_mean": mean of per-slice ratios
    aggregate: str = "pooled"
    # "delivered": bits actually sent; "granted_capacity": Shannon capacity of every
    # slot granted to a backlogged user, used or not
    se_measure: str = "delivered"

    def __post_init__(self):
        if self.se_weight < 0 or self.qoe_weight < 0:
            raise ConfigError("reward weights must be nonnegative")
        if self.se_weight == 0 and self.qoe_weight == 0:
            raise ConfigError("reward weights cannot both be zero")
        if self.aggregate not in ("pooled", "slice_mean"):
            raise ConfigError(f"unknown QoE aggregate {self.aggregate!r}")
        if self.se_measure not in ("delivered", "granted_capacity"):
            raise ConfigError(f"unknown SE measure {self.se_measure!r}")


@dataclass(frozen=True)
class BandwidthAllocation:
    per_slice: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "per_slice", tuple(float(w) for w in self.per_slice))

    def check(self, total: float, slice_count: int | None = None):
        if slice_count is not None and len(self.per_slice) != slice_count:
            raise ValueError(f"allocation has {len(self.per_slice)} entries, expected {slice_count}")
        if any(w < 0 for w in self.per_slice):
            raise ValueError(f"negative bandwidth in {self.per_slice}")
        if abs(sum(self.per_slice) - total) > 1e-9 * total:
            raise ValueError(f"allocation {self.per_slice} does not sum to {total}")


def grid_units(total: float, granularity: float) -> int:
    if not granularity > 0:
        raise ConfigError("granularity must be positive")
    units = total / granularity
    if abs(units - round(units)) > 1e-9 * max(1.0, units):
        raise ConfigError(f"granularity {granularity} does not divide {total}")
    return int(round(units))


def action_space(total_bandwidth: float, granularity: float,
                 slice_count: int) -> list[BandwidthAllocation]:
    """Every split of the total into ``slice_count`` multiples of ``granularity``."""
    if slice_count < 1:
        raise ConfigError("need at least one slice")
    n = grid_units(total_bandwidth, granularity)
    out = []
    # stars and bars: bar positions among n + k - 1 cells
    for bars in combinations(range(n + slice_count - 1), slice_count - 1):
        edges = (-1,) + bars + (n + slice_count - 1,)
        units = [edges[i + 1] - edges[i] - 1 for i in range(slice_count)]
        out.append(BandwidthAllocation(tuple(u * granularity for u in units)))
    return out


def packet_satisfied(arrival: float, finish: float, size_bytes: float, sla: SlaSpec) -> bool:
    delay = finish - arrival
    if delay > sla.max_latency:
        return False
    return delay <= 0 or size_bytes * 8.0 / delay >= sla.min_rate


def schedule_slot(backlogged, slice_bandwidth: float, cursor: int):
    """Round-robin grant for one slot.

    ``backlogged`` flags ring positions whose queue is nonempty. Returns
    ``({position: bandwidth}, new_cursor)``; the cursor only moves on a grant.
    """
    n = len(backlogged)
    if slice_bandwidth < 0:
        raise ValueError("negative slice bandwidth")
    for j in range(n):
        pos = (cursor + j) % n
        if backlogged[pos]:
            return {pos: slice_bandwidth}, (pos + 1) % n
    return {}, cursor


@dataclass
class EpochLog:
    delivered_bits: float
    arrivals: np.ndarray
    satisfied: np.ndarray
    dropped: np.ndarray
    completed: np.ndarray
    granted_hz_slots: np.ndarray  # per slice, sum over slots of granted Hz
    capacity_bits: float = 0.0  # sum over grants of rate * slot duration


@dataclass
class EpochMetrics:
    se: float
    qoe_per_slice: tuple[float, ...]
    qoe_aggregate: float
    reward: float
    allocated: BandwidthAllocation | None
    arrivals: tuple[int, ...] = ()
    granted_mean: tuple[float, ...] = ()


def compute_epoch_metrics(log: EpochLog, allocation: BandwidthAllocation | None,
                          cfg: RewardConfig, total_bandwidth: float,
                          epoch_duration: float = 1.0) -> EpochMetrics:
    bits = log.capacity_bits if cfg.se_measure == "granted_capacity" else log.delivered_bits
    se = bits / (epoch_duration * total_bandwidth)
    arr = np.asarray(log.arrivals)
    sat = np.asarray(log.satisfied)
    per = tuple(float(s / a) if a > 0 else 1.0 for s, a in zip(sat, arr))
    if cfg.aggregate == "pooled":
        agg = float(sat.sum() / arr.sum()) if arr.sum() > 0 else 1.0
    else:
        active = [q for q, a in zip(per, arr) if a > 0]
        agg = float(np.mean(active)) if active else 1.0
    reward = cfg.se_weight * se + cfg.qoe_weight * agg
    return EpochMetrics(se, per, agg, reward, allocation, tuple(int(a) for a in arr))


@dataclass
class RadioEnvConfig:
    slices: list[SliceConfig] = field(default_factory=default_slices)
    link: LinkConfig = field(default_factory=LinkConfig)
    total_bandwidth: float = 10e6
    granularity: float = 1e6
    epoch_duration: float = 1.0
    reward: RewardConfig = field(default_factory=RewardConfig)
    drop_expired: bool = True
    slicing: bool = True
    radius: float = 40.0
    min_distance: float = 1.0

    @property
    def slots_per_epoch(self) -> int:
        n = self.epoch_duration / self.link.slot_duration
        if abs(n - round(n)) > 1e-9:
            raise ConfigError("slot duration must divide the epoch")
        return int(round(n))


@dataclass
class Grant:
    slot: int
    ring: int
    user: int
    bandwidth: float
    rate: float
    backlog_bits: float
    served_bits: float


# packet record fields (lists for cheap in-place updates)
_ARR, _REM, _SIZE, _DROP, _SLICE, _COHORT = range(6)


class RadioEnv:
    """Stateful downlink simulator; queues persist across epochs."""

    def __init__(self, cfg: RadioEnvConfig, rng: np.random.Generator, record_grants=False):
        self.cfg = cfg
        place_rng, traffic_rng, self.fading_rng = rng.spawn(3)
        self.source = PacketSource(cfg.slices, traffic_rng)
        n = self.source.n_users
        placement = place_users(n, place_rng, cfg.radius, cfg.min_distance)
        self.distance = placement.distance
        self.mean_snr = mean_snr(self.distance, cfg.link)
        self.user_slice = self.source.user_slice
        self.n_slices = len(cfg.slices)
        self.sla = [c.sla for c in cfg.slices]
        self.queues = [deque() for _ in range(n)]
        if cfg.slicing:
            self.rings = [[u for u in range(n) if self.user_slice[u] == s]
                          for s in range(self.n_slices)]
        else:
            self.rings = [list(range(n))]
        self.ring_of = np.zeros(n, dtype=np.int64)
        self.pos_of = np.zeros(n, dtype=np.int64)
        for r, ring in enumerate(self.rings):
            for p, u in enumerate(ring):
                self.ring_of[u], self.pos_of[u] = r, p
        self.cursor = [0] * len(self.rings)
        self.backlog = [[] for _ in self.rings]  # sorted ring positions with queued packets
        self._carry = []
        self.epoch = 0
        self.record_grants = record_grants
        self.grants: list[Grant] = []
        self.completions: list[tuple] = []  # (user, slice, arrival, finish, size_bytes, satisfied)
        self.record_completions = False
        self.trace_hash = hashlib.sha256()  # running checksum of the exogenous packet trace

    @property
    def n_users(self) -> int:
        return len(self.queues)

    def _ring_bandwidth(self, allocation: BandwidthAllocation | None) -> list[float]:
        W = self.cfg.total_bandwidth
        if not self.cfg.slicing:
            return [W]
        if allocation is None:
            raise ValueError("sliced mode needs an allocation")
        allocation.check(W, self.n_slices)
        return list(allocation.per_slice)

    def step(self, allocation: BandwidthAllocation | None):
        """Simulate one epoch; returns (arrival counts per slice, EpochMetrics)."""
        bw = self._ring_bandwidth(allocation)
        log = self._simulate_epoch(bw)
        metrics = compute_epoch_metrics(log, allocation, self.cfg.reward,
                                        self.cfg.total_bandwidth, self.cfg.epoch_duration)
        n_slots = self.cfg.slots_per_epoch
        metrics.granted_mean = tuple(float(g / n_slots) for g in log.granted_hz_slots)
        self.last_log = log
        return log.arrivals.copy(), metrics

    def _enqueue(self, u, pkt):
        q = self.queues[u]
        if not q:
            insort(self.backlog[int(self.ring_of[u])], int(self.pos_of[u]))
        q.append(pkt)

    def _simulate_epoch(self, ring_bw: list[float]) -> EpochLog:
        cfg = self.cfg
        dt = cfg.link.slot_duration
        n_slots = cfg.slots_per_epoch
        T = cfg.epoch_duration
        t0 = self.epoch * T
        ep = self.epoch
        ns = self.n_slices
        trace = self.source.advance(t0 + T)
        trace.digest(self.trace_hash)
        fading = self.fading_rng.standard_exponential((n_slots, self.n_users))
        snr_eff = (cfg.link.antenna_count * self.mean_snr).tolist()

        arrivals = np.bincount(trace.slice, minlength=ns)[:ns].astype(np.int64)
        satisfied = np.zeros(ns, dtype=np.int64)
        dropped = np.zeros(ns, dtype=np.int64)
        completed = np.zeros(ns, dtype=np.int64)
        granted = np.zeros(ns)
        delivered = 0.0
        capacity = 0.0

        # a packet arriving during slot k is schedulable from slot k + 1
        adm = (np.floor((trace.time - t0) / dt).astype(np.int64) + 1).tolist()
        times = trace.time.tolist()
        users = trace.user.tolist()
        slices = trace.slice.tolist()
        bits = (trace.size * 8.0).tolist()
        lat = [s.max_latency for s in self.sla]
        drop = cfg.drop_expired

        for pkt, u in self._carry:
            self._enqueue(u, pkt)
        self._carry = []

        queues, backlog, rings, cursor = self.queues, self.backlog, self.rings, self.cursor
        user_slice = self.user_slice.tolist()
        pos_of = self.pos_of.tolist()
        sla = self.sla
        rec = self.record_grants
        rec_c = self.record_completions
        log2 = math.log2
        active = [r for r, b in enumerate(ring_bw) if b > 0]
        n_ev = len(times)
        p = 0
        k = 0
        while k < n_slots:
            while p < n_ev and adm[p] <= k:
                s = slices[p]
                self._enqueue(users[p], [times[p], bits[p], bits[p], times[p] + lat[s], s, ep])
                p += 1
            if not any(backlog[r] for r in active):
                if p >= n_ev or adm[p] >= n_slots:
                    break
                k = adm[p]
                continue
            ts = t0 + k * dt
            for r in active:
                bl = backlog[r]
                if not bl:
                    continue
                ring = rings[r]
                u = -1
                while bl:
                    i = bisect_left(bl, cursor[r])
                    if i == len(bl):
                        i = 0
                    pos = bl[i]
                    cand = ring[pos]
                    q = queues[cand]
                    if drop:
                        while q and q[0][_DROP] <= ts:
                            dropped[q[0][_SLICE]] += 1
                            q.popleft()
                    if q:
                        u = cand
                        break
                    del bl[i]
                if u < 0:
                    continue
                cursor[r] = (pos + 1) % len(ring)
                b = ring_bw[r]
                rate = b * log2(1.0 + snr_eff[u] * fading[k, u])
                granted[user_slice[u]] += b
                cap = rate * dt
                capacity += cap
                if rec:
                    self.grants.append(Grant(k, r, u, b, rate, sum(x[_REM] for x in q), 0.0))
                t = ts
                served = 0.0
                while q and cap > 0.0:
                    pkt = q[0]
                    rem = pkt[_REM]
                    if rem <= cap:
                        cap -= rem
                        served += rem
                        t += rem / rate
                        q.popleft()
                        s = pkt[_SLICE]
                        completed[s] += 1
                        ok = packet_satisfied(pkt[_ARR], t, pkt[_SIZE] / 8.0, sla[s])
                        if ok and pkt[_COHORT] == ep:
                            satisfied[s] += 1
                        if rec_c:
                            self.completions.append((u, s, pkt[_ARR], t, pkt[_SIZE] / 8.0, ok))
                    else:
                        pkt[_REM] = rem - cap
                        served += cap
                        cap = 0.0
                delivered += served
                if rec:
                    self.grants[-1].served_bits = served
                if not q:
                    bl.remove(pos_of[u])
            k += 1

        # arrivals in the final slot are admitted at the next epoch's first slot
        for j in range(p, n_ev):
            s = slices[j]
            self._carry.append(([times[j], bits[j], bits[j], times[j] + lat[s], s, ep], users[j]))
        self.epoch += 1
        return EpochLog(delivered, arrivals, satisfied, dropped, completed, granted, capacity)


def expected_arrivals(slices: list[SliceConfig], epoch_duration: float = 1.0) -> np.ndarray:
    """Mean packet count per slice per epoch."""
    return np.array([c.user_count * epoch_duration / c.inter_arrival.mean for c in slices])


class RadioSlicingTask:
    """Agent-facing view of :class:`RadioEnv` over a discrete action grid.

    Observations are last-epoch arrival counts per slice divided by their
    expected values.
    """

    def __init__(self, env: RadioEnv, actions: list[BandwidthAllocation] | None = None):
        self.env = env
        cfg = env.cfg
        self.actions = actions or action_space(cfg.total_bandwidth, cfg.granularity, env.n_slices)
        self.scale = np.maximum(expected_arrivals(cfg.slices, cfg.epoch_duration), 1.0)
        self.counts = self.scale.copy()
        self.history: list[EpochMetrics] = []

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def state_dim(self) -> int:
        return self.env.n_slices

    def observe(self) -> np.ndarray:
        return self.counts / self.scale

    def step(self, action: int):
        counts, metrics = self.env.step(self.actions[action])
        self.history.append(metrics)
        self.counts = np.asarray(counts, dtype=float)
        return self.observe(), metrics.reward, False
