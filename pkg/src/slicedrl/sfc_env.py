"""Priority scheduling of flows onto three service function chains.

Each SFC is a single non-preemptive server with a fixed processing latency
and CPU cost. Its queue is ordered by priority class, then arrival time.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .traffic import Category, ConfigError, FlowTrace


@dataclass(frozen=True)
class SfcSpec:
    name: str
    cpu_cost: float
    processing_latency: float
    priority: tuple[int, int, int]  # class per category A, B, C; lower is served first

    def __post_init__(self):
        if not self.cpu_cost > 0 or not self.processing_latency > 0:
            raise ConfigError(f"SFC {self.name}: cost and latency must be positive")
        if len(self.priority) != len(Category):
            raise ConfigError(f"SFC {self.name}: need a priority class per category")


def default_sfcs() -> list[SfcSpec]:
    return [
        SfcSpec("I", 2.0, 0.010, (0, 1, 1)),
        SfcSpec("II", 1.5, 0.015, (0, 0, 1)),
        SfcSpec("III", 1.0, 0.020, (0, 0, 0)),
    ]


@dataclass(frozen=True)
class SfcRewardConfig:
    category_weights: tuple[float, float, float] = (3.0, 2.0, 1.0)

    def __post_init__(self):
        a, b, c = self.category_weights
        if not a >= b >= c > 0:
            raise ConfigError(f"weights must satisfy A >= B >= C > 0, got {self.category_weights}")


@dataclass
class FlowRecord:
    index: int
    category: int
    arrival_time: float
    assigned_sfc: int = -1
    start_time: float | None = None
    processing_time: float = 0.0

    @property
    def queue_time(self) -> float:
        return self.start_time - self.arrival_time

    @property
    def sojourn(self) -> float:
        return self.queue_time + self.processing_time

    @property
    def completion_time(self) -> float:
        return self.start_time + self.processing_time


def flow_reward(flow: FlowRecord, cfg: SfcRewardConfig) -> float:
    if flow.start_time is None:
        raise ValueError(f"flow {flow.index} has not been served")
    return -cfg.category_weights[flow.category] * (flow.queue_time + flow.processing_time)


class SfcServer:
    def __init__(self, spec: SfcSpec):
        self.spec = spec
        self.queue: list[tuple] = []  # (class, arrival, seq, flow)
        self.current: FlowRecord | None = None
        self.busy_until = 0.0
        self.busy_log: list[tuple[float, float]] = []

    def push(self, flow: FlowRecord):
        cls = self.spec.priority[flow.category]
        heapq.heappush(self.queue, (cls, flow.arrival_time, flow.index, flow))

    def remaining(self, now: float) -> float:
        return max(0.0, self.busy_until - now) if self.current is not None else 0.0

    def projected_sojourn(self, category: int, now: float) -> float:
        """Residual service + queued work ahead of a new flow + its own service."""
        cls = self.spec.priority[category]
        ahead = sum(1 for c, *_ in self.queue if c <= cls)
        lat = self.spec.processing_latency
        return self.remaining(now) + ahead * lat + lat


class SfcSystem:
    """Event-driven state of all SFC servers.

    ``cpu_budget`` (off by default) blocks a free server from starting
    service while the busy servers' CPU costs plus its own would exceed it.
    """

    def __init__(self, specs: list[SfcSpec] | None = None, cpu_budget: float | None = None,
                 on_start=None):
        self.specs = specs or default_sfcs()
        self.servers = [SfcServer(s) for s in self.specs]
        if cpu_budget is not None and cpu_budget < max(s.cpu_cost for s in self.specs):
            raise ConfigError(f"CPU budget {cpu_budget} cannot host every SFC")
        self.cpu_budget = cpu_budget
        self.on_start = on_start
        self.flows: list[FlowRecord] = []
        self.clock = 0.0

    def _cpu_in_use(self) -> float:
        return sum(s.spec.cpu_cost for s in self.servers if s.current is not None)

    def _dispatch(self, now: float):
        free = [s for s in self.servers if s.current is None and s.queue]
        free.sort(key=lambda s: (s.queue[0][1], s.queue[0][2]))
        used = self._cpu_in_use()
        for s in free:
            if self.cpu_budget is not None and used + s.spec.cpu_cost > self.cpu_budget + 1e-12:
                continue
            *_, flow = heapq.heappop(s.queue)
            flow.start_time = now
            flow.processing_time = s.spec.processing_latency
            s.current = flow
            s.busy_until = now + s.spec.processing_latency
            s.busy_log.append((now, s.busy_until))
            used += s.spec.cpu_cost
            if self.on_start is not None:
                self.on_start(flow)

    def advance(self, t: float, inclusive: bool = False):
        """Process service completions before ``t`` (or at ``t`` if inclusive)."""
        while True:
            busy = [s for s in self.servers if s.current is not None]
            if not busy:
                break
            tau = min(s.busy_until for s in busy)
            if tau < t or (inclusive and tau == t):
                for s in busy:
                    if s.busy_until == tau:
                        s.current = None
                self._dispatch(tau)
            else:
                break
        if inclusive and t != math.inf:
            self._dispatch(t)
        self.clock = max(self.clock, t) if t != math.inf else self.clock

    def assign_flow(self, flow: FlowRecord, sfc_id: int, now: float | None = None) -> FlowRecord:
        """Queue ``flow`` at SFC ``sfc_id`` at time ``now`` (default: its arrival)."""
        if not 0 <= sfc_id < len(self.servers):
            raise ValueError(f"unknown SFC {sfc_id}")
        now = flow.arrival_time if now is None else now
        if flow.arrival_time > now:
            raise ValueError("flow cannot be assigned before it arrives")
        self.advance(now)
        flow.assigned_sfc = sfc_id
        self.flows.append(flow)
        self.servers[sfc_id].push(flow)
        self.advance(now, inclusive=True)
        return flow

    def finish(self):
        self.advance(math.inf)

    def projected_sojourns(self, category: int, now: float) -> list[float]:
        self.advance(now)
        self.advance(now, inclusive=True)
        return [s.projected_sojourn(category, now) for s in self.servers]

    def busy_logs(self) -> list[list[tuple[float, float]]]:
        return [s.busy_log for s in self.servers]


def cpu_utilization(busy_logs, costs, start: float, end: float) -> float:
    """Time-averaged CPUs in use over [start, end)."""
    window = end - start
    if not window > 0:
        raise ValueError("window must have positive length")
    total = 0.0
    for log, cost in zip(busy_logs, costs):
        busy = sum(max(0.0, min(b, end) - max(a, start)) for a, b in log)
        total += cost * busy
    return total / window


# ---------------------------------------------------------------------------
# state encoding


@dataclass
class SfcState:
    history: list[list[tuple[int, float]]]  # per SFC, most recent first: (category, arrival)
    current: int
    now: float


HISTORY_LEN = 5


def observe_state(history, incoming: int, now: float, time_scale: float = 0.1,
                  history_len: int = HISTORY_LEN) -> np.ndarray:
    """Fixed-length vector from the last flows of every SFC and the incoming category.

    Each remembered flow contributes a category one-hot and its age
    ``(now - arrival) / time_scale`` clipped to [0, 1]. Missing entries are
    padded with a zero one-hot and age 1.
    """
    parts = []
    for recent in history:
        for j in range(history_len):
            if j < len(recent):
                cat, t = recent[j]
                onehot = [0.0, 0.0, 0.0]
                onehot[cat] = 1.0
                parts.extend(onehot)
                parts.append(min(1.0, max(0.0, (now - t) / time_scale)))
            else:
                parts.extend((0.0, 0.0, 0.0, 1.0))
    cur = [0.0, 0.0, 0.0]
    cur[incoming] = 1.0
    parts.extend(cur)
    return np.array(parts)


def state_dim(n_sfcs: int = 3, history_len: int = HISTORY_LEN) -> int:
    return n_sfcs * history_len * 4 + 3


@dataclass
class SfcEnvConfig:
    specs: list[SfcSpec] = field(default_factory=default_sfcs)
    reward: SfcRewardConfig = field(default_factory=SfcRewardConfig)
    cpu_budget: float | None = None
    time_scale: float = 0.1
    history_len: int = HISTORY_LEN


class SfcTask:
    """Agent-facing SFC scheduling over a fixed flow trace.

    One decision per arriving flow. The reward of a decision is known only
    once the flow enters service, so ``step`` returns ``None`` and settled
    rewards are collected through :meth:`resolved_rewards`.
    """

    def __init__(self, trace: FlowTrace, cfg: SfcEnvConfig | None = None):
        self.cfg = cfg or SfcEnvConfig()
        self.trace = trace
        self.times = trace.time.tolist()
        self.cats = trace.category.tolist()
        self._resolved: list[tuple[int, float]] = []
        self.system = SfcSystem(self.cfg.specs, self.cfg.cpu_budget, on_start=self._started)
        self.history = [[] for _ in self.cfg.specs]
        self.i = 0

    def _started(self, flow: FlowRecord):
        self._resolved.append((flow.index, flow_reward(flow, self.cfg.reward)))

    @property
    def n_actions(self) -> int:
        return len(self.cfg.specs)

    @property
    def state_dim(self) -> int:
        return state_dim(len(self.cfg.specs), self.cfg.history_len)

    @property
    def done(self) -> bool:
        return self.i >= len(self.times)

    def observe(self) -> np.ndarray:
        if self.done:
            return np.zeros(self.state_dim)
        return observe_state(self.history, self.cats[self.i], self.times[self.i],
                             self.cfg.time_scale, self.cfg.history_len)

    def current_flow(self) -> tuple[int, float]:
        return self.cats[self.i], self.times[self.i]

    def step(self, action: int):
        i = self.i
        flow = FlowRecord(i, self.cats[i], self.times[i])
        self.system.assign_flow(flow, action)
        recent = self.history[action]
        recent.insert(0, (flow.category, flow.arrival_time))
        del recent[self.cfg.history_len:]
        self.i += 1
        if self.done:
            self.system.finish()
        return self.observe(), None, self.done

    def resolved_rewards(self) -> list[tuple[int, float]]:
        out, self._resolved = self._resolved, []
        return out
