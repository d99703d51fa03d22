"""Deep Q-learning: MLP Q-function, replay memory, epsilon-greedy, target cloning.

The gradient step descends the squared TD error. With ``optimizer="sgd"``
one update is ``theta <- theta + lr * (target - Q(s, a; theta)) * dQ/dtheta``;
the default uses Adam moments on the same gradient.
"""

from __future__ import annotations

import copy
import json
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


class TrainingDivergence(RuntimeError):
    pass


class NotReady(Exception):
    """Replay memory holds fewer experiences than the requested batch."""


@dataclass
class AgentConfig:
    gamma: float = 0.9
    learning_rate: float = 1e-3
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 1000
    batch_size: int = 32
    clone_period: int = 100
    replay_capacity: int = 10_000
    hidden: tuple[int, ...] = (64, 64)
    optimizer: str = "adam"  # or "sgd"
    reward_scale: float = 1.0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.batch_size > self.replay_capacity:
            raise ValueError("need 1 <= batch_size <= replay_capacity")
        if self.clone_period < 1:
            raise ValueError("clone_period must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def epsilon(self, step: int) -> float:
        if self.epsilon_decay_steps <= 0:
            return self.epsilon_end
        frac = min(1.0, step / self.epsilon_decay_steps)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


# ---------------------------------------------------------------------------
# network

ACTIVATIONS = ("relu", "identity")


@dataclass
class QNetwork:
    weights: list[np.ndarray]  # (out, in)
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)) or not self.weights:
            raise ValueError("need matching, nonempty weight/bias/activation lists")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i} has inconsistent shapes {w.shape}, {b.shape}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} input {w.shape[1]} != previous output")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if self.activations[-1] != "identity":
            raise ValueError("output layer must be linear")

    @classmethod
    def init(cls, input_dim: int, output_dim: int, hidden=(64, 64), rng=None) -> QNetwork:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
        rng = rng if rng is not None else np.random.default_rng()
        dims = [input_dim, *hidden, output_dim]
        ws, bs = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            lim = 1.0 / np.sqrt(fan_in)
            ws.append(rng.uniform(-lim, lim, (fan_out, fan_in)))
            bs.append(rng.uniform(-lim, lim, fan_out))
        acts = ["relu"] * len(hidden) + ["identity"]
        return cls(ws, bs, acts)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    def params(self) -> list[np.ndarray]:
        return [p for wb in zip(self.weights, self.biases) for p in wb]

    def copy(self) -> QNetwork:
        return copy.deepcopy(self)


def _forward_cache(net: QNetwork, x: np.ndarray):
    acts = [x]
    pre = []
    h = x
    for w, b, a in zip(net.weights, net.biases, net.activations):
        z = h @ w.T + b
        pre.append(z)
        h = np.maximum(z, 0.0) if a == "relu" else z
        acts.append(h)
    return acts, pre


def forward(net: QNetwork, state) -> np.ndarray:
    """Q-values for one state (1-D) or a batch of states (2-D)."""
    x = np.asarray(state, dtype=float)
    if x.shape[-1] != net.input_dim:
        raise ValueError(f"state dimension {x.shape[-1]} != network input {net.input_dim}")
    acts, _ = _forward_cache(net, x)
    return acts[-1]


def loss_and_grads(net: QNetwork, states, actions, targets):
    """Mean 0.5 * (target - Q(s, a))^2 and its gradient, ordered like ``net.params()``."""
    x = np.asarray(states, dtype=float)
    a = np.asarray(actions, dtype=np.int64)
    y = np.asarray(targets, dtype=float)
    n = x.shape[0]
    acts, pre = _forward_cache(net, x)
    q = acts[-1]
    rows = np.arange(n)
    err = q[rows, a] - y
    loss = 0.5 * float(np.mean(err**2))
    delta = np.zeros_like(q)
    delta[rows, a] = err / n
    grads = []
    for i in range(len(net.weights) - 1, -1, -1):
        if net.activations[i] == "relu":
            delta = delta * (pre[i] > 0)
        grads.append(delta.sum(axis=0))
        grads.append(delta.T @ acts[i])
        if i:
            delta = delta @ net.weights[i]
    grads.reverse()
    return loss, grads


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def update(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train_step(net: QNetwork, states, actions, targets, lr: float, optimizer: Adam | None = None) -> float:
    """One gradient step on the batch; returns the loss before the update."""
    if len(targets) == 0 or len(targets) != len(actions):
        raise ValueError("need a nonempty batch with one target per experience")
    with np.errstate(over="ignore", invalid="ignore"):
        loss, grads = loss_and_grads(net, states, actions, targets)
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
        raise TrainingDivergence(f"non-finite loss or gradient (loss={loss})")
    params = net.params()
    if optimizer is None:
        for p, g in zip(params, grads):
            p -= lr * g
    else:
        optimizer.update(params, grads)
    return loss


def select_action(q_values, epsilon: float, rng: np.random.Generator) -> int:
    """Greedy (lowest index on ties) w.p. 1 - epsilon, else uniform over all actions."""
    q = np.asarray(q_values)
    if q.size == 0:
        raise ValueError("empty Q-value vector")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(q.size))
    return int(np.argmax(q))


def td_target(reward: float, next_state, target_net: QNetwork, gamma: float, terminal: bool) -> float:
    if terminal:
        return float(reward)
    return float(reward + gamma * np.max(forward(target_net, next_state)))


def clone_target(eval_net: QNetwork) -> QNetwork:
    return eval_net.copy()


# ---------------------------------------------------------------------------
# replay memory


@dataclass
class Experience:
    state: np.ndarray
    action: int
    next_state: np.ndarray
    reward: float
    terminal: bool = False


class ReplayMemory:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.buffer: deque[Experience] = deque(maxlen=capacity)

    def __len__(self):
        return len(self.buffer)

    def push(self, e: Experience):
        self.buffer.append(e)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Experience]:
        if len(self.buffer) < batch_size:
            raise NotReady(f"{len(self.buffer)} experiences < batch of {batch_size}")
        idx = rng.choice(len(self.buffer), size=batch_size, replace=False)
        return [self.buffer[i] for i in idx]


# ---------------------------------------------------------------------------
# agent and training loop


class DQNAgent:
    def __init__(self, state_dim: int, n_actions: int, cfg: AgentConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.net = QNetwork.init(state_dim, n_actions, cfg.hidden, rng)
        self.target = clone_target(self.net)
        self.memory = ReplayMemory(cfg.replay_capacity)
        self.optimizer = Adam(self.net.params(), cfg.learning_rate) if cfg.optimizer == "adam" else None
        self.updates = 0

    def act(self, state, epsilon: float) -> int:
        return select_action(forward(self.net, state), epsilon, self.rng)

    def greedy(self, state) -> int:
        return int(np.argmax(forward(self.net, state)))

    def learn(self) -> float | None:
        try:
            batch = self.memory.sample(self.cfg.batch_size, self.rng)
        except NotReady:
            return None
        s = np.array([e.state for e in batch])
        a = np.array([e.action for e in batch])
        s2 = np.array([e.next_state for e in batch])
        r = np.array([e.reward for e in batch])
        done = np.array([e.terminal for e in batch])
        q_next = forward(self.target, s2).max(axis=1)
        y = r + self.cfg.gamma * q_next * (~done)
        loss = train_step(self.net, s, a, y, self.cfg.learning_rate, self.optimizer)
        self.updates += 1
        return loss


@dataclass
class EpisodeRecord:
    episode: int
    action: int
    reward: float
    epsilon: float
    loss: float | None
    cloned: bool


def run_training(env, cfg: AgentConfig, episodes: int, rng: np.random.Generator,
                 agent: DQNAgent | None = None, callback=None):
    """Train on a continuing task where each decision step is one episode.

    ``env`` provides ``state_dim``, ``n_actions``, ``observe()`` and
    ``step(a) -> (next_state, reward, terminal)``. A ``None`` reward means
    the environment settles it later through ``resolved_rewards()``,
    which yields ``(episode_index, reward)`` pairs.
    Returns ``(agent, log)``.
    """
    agent = agent or DQNAgent(env.state_dim, env.n_actions, cfg, rng)
    log: list[EpisodeRecord] = []
    pending: dict[int, tuple] = {}
    deferred = hasattr(env, "resolved_rewards")
    for t in range(episodes):
        s = env.observe()
        eps = cfg.epsilon(t)
        a = agent.act(s, eps)
        s2, r, terminal = env.step(a)
        if r is None:
            pending[t] = (s, a, s2, terminal)
        else:
            agent.memory.push(Experience(s, a, s2, r * cfg.reward_scale, terminal))
        if deferred:
            for idx, rew in env.resolved_rewards():
                ps, pa, ps2, pterm = pending.pop(idx)
                agent.memory.push(Experience(ps, pa, ps2, rew * cfg.reward_scale, pterm))
        loss = agent.learn()
        cloned = (t + 1) % cfg.clone_period == 0
        if cloned:
            agent.target = clone_target(agent.net)
        rec = EpisodeRecord(t, a, r, eps, loss, cloned)
        log.append(rec)
        if callback is not None:
            callback(rec)
        if terminal:
            break
    return agent, log


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(net: QNetwork, path, agent_cfg: AgentConfig | None = None):
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "layers": [
            {"in": int(w.shape[1]), "out": int(w.shape[0]), "activation": a,
             "weights": w.astype(np.float64).ravel(order="C").tolist(),
             "bias": b.astype(np.float64).tolist()}
            for w, b, a in zip(net.weights, net.biases, net.activations)
        ],
        "agent_config": asdict(agent_cfg) if agent_cfg is not None else None,
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_checkpoint(path) -> tuple[QNetwork, AgentConfig | None]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('format_version')}")
    ws, bs, acts = [], [], []
    for layer in doc["layers"]:
        ws.append(np.array(layer["weights"], dtype=np.float64).reshape(layer["out"], layer["in"]))
        bs.append(np.array(layer["bias"], dtype=np.float64))
        acts.append(layer["activation"])
    net = QNetwork(ws, bs, acts)
    if net.input_dim != doc["input_dim"] or net.output_dim != doc["output_dim"]:
        raise ValueError("checkpoint dimensions disagree with its layers")
    cfg = AgentConfig(**doc["agent_config"]) if doc.get("agent_config") else None
    return net, cfg
