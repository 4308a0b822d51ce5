"""Value-based and actor-critic learners over the offloading MDP.

The discrete agents (plain, double, dueling) share one implementation
with switches, since they differ only in how bootstrap targets are
formed and in the network head. The continuous agent is a standard
deterministic actor-critic whose actions are projected onto the
feasible allocation set; the projection Jacobian is written out
explicitly so the actor gradient stays exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hybridmec.nn import MLP, Adam, soft_update
from hybridmec.replay import PrioritizedReplay, ReplayBuffer


def linear_anneal(start: float, end: float, steps: int, t: int) -> float:
    if steps <= 0:
        return end
    frac = min(1.0, max(0.0, t / steps))
    return start + (end - start) * frac


def masked_argmax_rows(q: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise argmax of a (B, A) array restricted to mask's true columns."""
    filled = np.where(mask[None, :], q, -np.inf)
    return filled.argmax(axis=1)


# ---------------------------------------------------------------------------
# Q-value network heads
# ---------------------------------------------------------------------------

class QNetwork:
    """Plain action-value net: one MLP, one output per action."""

    def __init__(self, in_dim: int, hidden, n_actions: int, rng):
        self.in_dim = in_dim
        self.n_actions = n_actions
        self.hidden = tuple(hidden)
        self.net = MLP([in_dim, *hidden, n_actions], rng=rng)

    def q_cached(self, x):
        return self.net.forward_cached(np.atleast_2d(x))

    def q(self, x):
        return self.net.forward(np.atleast_2d(x))

    def backward(self, cache, dq):
        grads, _ = self.net.backward(cache, dq)
        return grads

    def parameters(self):
        return self.net.parameters()

    def clone(self) -> "QNetwork":
        dup = QNetwork(self.in_dim, self.hidden, self.n_actions,
                       np.random.default_rng(0))
        dup.set_from(self)
        return dup

    def set_from(self, other) -> None:
        for mine, theirs in zip(self.parameters(), other.parameters()):
            mine[...] = theirs


class DuelingQNetwork:
    """Shared trunk with separate state-value and advantage heads.

    Q(s, a) = V(s) + A(s, a) - mean_a A(s, a). Subtracting the mean
    pins down the otherwise unidentifiable split between V and A.
    """

    def __init__(self, in_dim: int, hidden, n_actions: int, rng):
        if len(hidden) < 2:
            raise ValueError("dueling head needs at least two hidden sizes")
        self.in_dim = in_dim
        self.n_actions = n_actions
        self.hidden = tuple(hidden)
        self.trunk = MLP([in_dim, hidden[0]], rng=rng)
        self.v_head = MLP([hidden[0], *hidden[1:], 1], rng=rng)
        self.a_head = MLP([hidden[0], *hidden[1:], n_actions], rng=rng)

    def q_cached(self, x):
        x = np.atleast_2d(x)
        t_out, t_cache = self.trunk.forward_cached(x)
        h = np.maximum(t_out, 0.0)
        v, v_cache = self.v_head.forward_cached(h)
        a, a_cache = self.a_head.forward_cached(h)
        q = v + a - a.mean(axis=1, keepdims=True)
        return q, (t_cache, t_out, v_cache, a_cache)

    def q(self, x):
        return self.q_cached(x)[0]

    def backward(self, cache, dq):
        t_cache, t_out, v_cache, a_cache = cache
        dv = dq.sum(axis=1, keepdims=True)
        da = dq - dq.sum(axis=1, keepdims=True) / self.n_actions
        v_grads, gh_v = self.v_head.backward(v_cache, dv)
        a_grads, gh_a = self.a_head.backward(a_cache, da)
        gt = (gh_v + gh_a) * (t_out > 0.0)
        t_grads, _ = self.trunk.backward(t_cache, gt)
        return t_grads + v_grads + a_grads

    def parameters(self):
        return (self.trunk.parameters() + self.v_head.parameters()
                + self.a_head.parameters())

    def clone(self) -> "DuelingQNetwork":
        dup = DuelingQNetwork(self.in_dim, self.hidden, self.n_actions,
                              np.random.default_rng(0))
        dup.set_from(self)
        return dup

    def set_from(self, other) -> None:
        for mine, theirs in zip(self.parameters(), other.parameters()):
            mine[...] = theirs


# ---------------------------------------------------------------------------
# discrete-action agent
# ---------------------------------------------------------------------------

@dataclass
class DQNConfig:
    feature_dim: int
    n_actions: int = 4
    mask: tuple = (True, True, True, True)
    hidden: tuple = (64, 64)
    gamma: float = 0.95
    lr: float = 1e-3
    batch_size: int = 32
    buffer_capacity: int = 50_000
    warmup: int = 500
    train_every: int = 2
    target_sync: int = 500            # hard copies, counted in train steps
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 30_000     # counted in observed transitions
    double: bool = False
    dueling: bool = False
    per: bool = False
    per_alpha: float = 0.6
    per_beta0: float = 0.4
    per_beta_steps: int = 20_000
    per_eps: float = 1e-3

    def __post_init__(self):
        if len(self.mask) != self.n_actions:
            raise ValueError("mask length must equal n_actions")
        if not any(self.mask):
            raise ValueError("mask allows no actions")


class DQNAgent:
    """Epsilon-greedy temporal-difference learner with a target network."""

    def __init__(self, cfg: DQNConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        net_cls = DuelingQNetwork if cfg.dueling else QNetwork
        self.online = net_cls(cfg.feature_dim, cfg.hidden, cfg.n_actions, rng)
        self.target = self.online.clone()
        self.opt = Adam(self.online, lr=cfg.lr)
        if cfg.per:
            self.buffer = PrioritizedReplay(cfg.buffer_capacity,
                                            alpha=cfg.per_alpha,
                                            beta=cfg.per_beta0,
                                            eps=cfg.per_eps)
        else:
            self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.mask = np.asarray(cfg.mask, dtype=bool)
        self._allowed = np.flatnonzero(self.mask)
        self.observed = 0
        self.train_steps = 0

    @property
    def epsilon(self) -> float:
        return linear_anneal(self.cfg.eps_start, self.cfg.eps_end,
                             self.cfg.eps_decay_steps, self.observed)

    def q_values(self, features: np.ndarray) -> np.ndarray:
        return self.online.q(features)[0]

    def act(self, features: np.ndarray, explore: bool = True) -> int:
        if explore and self.rng.random() < self.epsilon:
            return int(self._allowed[self.rng.integers(0, len(self._allowed))])
        q = self.q_values(features)
        return int(masked_argmax_rows(q[None, :], self.mask)[0])

    def observe(self, s, a, r, s2, done) -> None:
        self.buffer.push((np.asarray(s, dtype=float), int(a), float(r),
                          np.asarray(s2, dtype=float), bool(done)))
        self.observed += 1
        if (len(self.buffer) >= max(self.cfg.warmup, self.cfg.batch_size)
                and self.observed % self.cfg.train_every == 0):
            self.train_once()

    def compute_targets(self, r, s2, done) -> np.ndarray:
        """Bootstrap targets for a batch; the double switch decides who
        picks the next action (online net) and who prices it (target)."""
        q_target = self.target.q(s2)
        if self.cfg.double:
            next_a = masked_argmax_rows(self.online.q(s2), self.mask)
            q_next = q_target[np.arange(len(s2)), next_a]
        else:
            q_next = np.where(self.mask[None, :], q_target, -np.inf).max(axis=1)
        return r + self.cfg.gamma * q_next * (1.0 - done)

    def train_once(self) -> float:
        """One gradient step on a sampled batch; returns mean |TD error|."""
        B = self.cfg.batch_size
        if self.cfg.per:
            self.buffer.beta = linear_anneal(self.cfg.per_beta0, 1.0,
                                             self.cfg.per_beta_steps,
                                             self.train_steps)
            items, idx, w = self.buffer.sample(B, self.rng)
        else:
            items = self.buffer.sample(B, self.rng)
            idx, w = None, np.ones(B)
        s = np.stack([it[0] for it in items])
        a = np.array([it[1] for it in items])
        r = np.array([it[2] for it in items])
        s2 = np.stack([it[3] for it in items])
        done = np.array([it[4] for it in items], dtype=float)

        y = self.compute_targets(r, s2, done)
        q, cache = self.online.q_cached(s)
        rows = np.arange(B)
        td = y - q[rows, a]
        dq = np.zeros_like(q)
        dq[rows, a] = -2.0 * w * td / B
        self.opt.step(self.online.backward(cache, dq))

        if self.cfg.per:
            self.buffer.update_priorities(idx, td)
        self.train_steps += 1
        if self.train_steps % self.cfg.target_sync == 0:
            self.target.set_from(self.online)
        return float(np.mean(np.abs(td)))


# ---------------------------------------------------------------------------
# continuous-action agent
# ---------------------------------------------------------------------------

def feasible_from_unit(u: np.ndarray) -> np.ndarray:
    """Map unit-box coordinates to a feasible allocation.

    The first three entries are the radio time shares; when their sum
    exceeds one they shrink proportionally. The last entry, the local
    CPU share, is independent.
    """
    u = np.asarray(u, dtype=float)
    a = u.copy()
    s = u[..., :3].sum(axis=-1, keepdims=True)
    scale = np.where(s > 1.0, 1.0 / np.maximum(s, 1e-12), 1.0)
    a[..., :3] = u[..., :3] * scale
    return a


def project_allocation(z: np.ndarray) -> np.ndarray:
    """Raw actor outputs -> feasible allocation (sigmoid, then rescale)."""
    return feasible_from_unit(1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float))))


def project_with_jacobian(z: np.ndarray):
    """Batch projection plus exact Jacobians d a / d z, shape (B, 4, 4)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    u = 1.0 / (1.0 + np.exp(-z))
    du = u * (1.0 - u)
    B = len(z)
    a = feasible_from_unit(u)
    s = u[:, :3].sum(axis=1)
    s_safe = np.maximum(s, 1e-12)
    eye = np.eye(3)[None, :, :]
    plain = eye * du[:, None, :3]
    scaled = (eye / s_safe[:, None, None]
              - u[:, :3, None] / (s_safe ** 2)[:, None, None]) * du[:, None, :3]
    J = np.zeros((B, 4, 4))
    J[:, :3, :3] = np.where((s > 1.0)[:, None, None], scaled, plain)
    J[:, 3, 3] = du[:, 3]
    return a, J


@dataclass
class DDPGConfig:
    feature_dim: int
    hidden: tuple = (64, 64)
    gamma: float = 0.95
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    tau: float = 0.005
    batch_size: int = 32
    buffer_capacity: int = 50_000
    warmup: int = 500
    train_every: int = 1
    noise_start: float = 0.2
    noise_end: float = 0.02
    noise_decay_steps: int = 10_000   # counted in observed transitions
    updates_per_step: int = 1


class DDPGAgent:
    """Deterministic actor-critic over the continuous allocation space."""

    def __init__(self, cfg: DDPGConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.actor = MLP([cfg.feature_dim, *cfg.hidden, 4], rng=rng)
        self.critic = MLP([cfg.feature_dim + 4, *cfg.hidden, 1], rng=rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor, lr=cfg.actor_lr)
        self.critic_opt = Adam(self.critic, lr=cfg.critic_lr)
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.observed = 0
        self.train_steps = 0

    @property
    def noise_std(self) -> float:
        return linear_anneal(self.cfg.noise_start, self.cfg.noise_end,
                             self.cfg.noise_decay_steps, self.observed)

    def act(self, features: np.ndarray, explore: bool = True) -> np.ndarray:
        z = self.actor.forward(np.asarray(features, dtype=float))
        u = 1.0 / (1.0 + np.exp(-z))
        if explore:
            u = np.clip(u + self.noise_std * self.rng.normal(size=4), 0.0, 1.0)
        return feasible_from_unit(u)

    def observe(self, s, a, r, s2, done) -> None:
        self.buffer.push((np.asarray(s, dtype=float), np.asarray(a, dtype=float),
                          float(r), np.asarray(s2, dtype=float), bool(done)))
        self.observed += 1
        if (len(self.buffer) >= max(self.cfg.warmup, self.cfg.batch_size)
                and self.observed % self.cfg.train_every == 0):
            for _ in range(self.cfg.updates_per_step):
                self.train_once()

    def critic_targets(self, r, s2, done) -> np.ndarray:
        z2 = self.actor_target.forward(s2)
        a2 = project_allocation(z2)
        q2 = self.critic_target.forward(np.hstack([s2, a2]))[:, 0]
        return r + self.cfg.gamma * q2 * (1.0 - done)

    def actor_loss_and_grads(self, s):
        """Loss -mean Q(s, project(actor(s))) and its exact actor gradient."""
        B = len(s)
        z, a_cache = self.actor.forward_cached(s)
        a_proj, J = project_with_jacobian(z)
        q, c_cache = self.critic.forward_cached(np.hstack([s, a_proj]))
        loss = -float(q[:, 0].mean())
        _, g_in = self.critic.backward(c_cache, np.full((B, 1), -1.0 / B))
        da = g_in[:, -4:]
        dz = np.einsum("bi,bij->bj", da, J)
        grads, _ = self.actor.backward(a_cache, dz)
        return loss, grads

    def train_once(self) -> float:
        B = self.cfg.batch_size
        items = self.buffer.sample(B, self.rng)
        s = np.stack([it[0] for it in items])
        a = np.stack([it[1] for it in items])
        r = np.array([it[2] for it in items])
        s2 = np.stack([it[3] for it in items])
        done = np.array([it[4] for it in items], dtype=float)

        # critic: squared TD error against frozen targets
        y = self.critic_targets(r, s2, done)
        q, c_cache = self.critic.forward_cached(np.hstack([s, a]))
        td = y - q[:, 0]
        dq = (-2.0 * td / B)[:, None]
        c_grads, _ = self.critic.backward(c_cache, dq)
        self.critic_opt.step(c_grads)

        # actor: ascend Q(s, project(actor(s))) through the projection
        _, a_grads = self.actor_loss_and_grads(s)
        self.actor_opt.step(a_grads)

        soft_update(self.actor_target, self.actor, self.cfg.tau)
        soft_update(self.critic_target, self.critic, self.cfg.tau)
        self.train_steps += 1
        return float(np.mean(np.abs(td)))
