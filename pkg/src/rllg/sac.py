"""Entropy-regularized actor-critic with twin critics and a replay buffer.

The critic target is built from whatever action a ``TargetHook`` returns for
the next state, which is how guide-aware strategies change the evaluated
policy without touching this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .approximator import (
    AdamState,
    MlpSpec,
    Network,
    adam_step,
    gaussian_join,
    gaussian_split,
    linear,
    load_network,
    save_network,
    soft_update,
    squashed_gaussian,
    squashed_sample,
    squashed_sample_grads,
)

AGENT_HEADER = "RLLG-AGENT v1"


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float  # raw environment reward
    s2: np.ndarray
    done: bool


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    done: np.ndarray
    weight: Optional[np.ndarray] = None  # per-sample loss weights (None = uniform)

    def __len__(self):
        return len(self.r)


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s2, done):
        i = self._next
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s2[i] = s2
        self.done[i] = float(done)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add_transition(self, t: Transition):
        self.add(t.s, t.a, t.r, t.s2, t.done)

    def get(self, idx) -> Batch:
        idx = np.asarray(idx)
        return Batch(self.s[idx], self.a[idx], self.r[idx].copy(), self.s2[idx], self.done[idx])

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self.get(rng.integers(0, self.size, size=batch_size))


@dataclass
class SacConfig:
    hidden: tuple[int, ...] = (64, 64)
    policy_activation: str = "relu"
    q_activation: str = "relu"
    lr: float = 3e-4
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    init_alpha: float = 1.0
    learn_alpha: bool = True


# (next_states, epoch) -> (actions, log-prob term added to the target)
TargetHook = Callable[[np.ndarray, int], tuple]


class SacAgent:
    def __init__(self, obs_dim: int, action_dim: int, config: SacConfig = None,
                 rng: np.random.Generator = None):
        self.config = config or SacConfig()
        cfg = self.config
        self.obs_dim, self.action_dim = obs_dim, action_dim
        self.rng = rng if rng is not None else np.random.default_rng()
        self.gamma, self.tau = cfg.gamma, cfg.tau
        pi_spec = MlpSpec((obs_dim, *cfg.hidden, 2 * action_dim), cfg.policy_activation,
                          squashed_gaussian(action_dim))
        q_spec = MlpSpec((obs_dim + action_dim, *cfg.hidden, 1), cfg.q_activation, linear())
        self.policy = Network(pi_spec, self.rng)
        self.q1 = Network(q_spec, self.rng)
        self.q2 = Network(q_spec, self.rng)
        self.q1_target = self.q1.clone()
        self.q2_target = self.q2.clone()
        self.policy_opt = AdamState.for_network(self.policy, lr=cfg.lr)
        self.q1_opt = AdamState.for_network(self.q1, lr=cfg.lr)
        self.q2_opt = AdamState.for_network(self.q2, lr=cfg.lr)
        self.log_alpha = np.array([math.log(cfg.init_alpha)])
        self.log_alpha_grad = np.zeros(1)
        self.alpha_opt = AdamState(n=1, lr=cfg.lr)
        self.target_entropy = -float(action_dim)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    def networks(self) -> dict:
        return {"policy": self.policy, "q1": self.q1, "q2": self.q2,
                "q1_target": self.q1_target, "q2_target": self.q2_target}

    def policy_dist(self, s):
        raw = self.policy.forward(s)
        return gaussian_split(raw, self.action_dim)

    def sample(self, s, noise=None):
        """Reparameterized policy sample for a batch of states.

        Returns (action, log_prob, mean, log_std, in_range, noise).
        """
        mean, log_std, in_range = self.policy_dist(s)
        if noise is None:
            noise = self.rng.standard_normal(mean.shape)
        action, logp, _ = squashed_sample(mean, log_std, noise)
        return action, logp, mean, log_std, in_range, noise

    def q_values(self, s, a, target: bool = False):
        sa = np.concatenate([s, a], axis=-1)
        n1, n2 = (self.q1_target, self.q2_target) if target else (self.q1, self.q2)
        return n1.forward(sa)[..., 0], n2.forward(sa)[..., 0]


def select_action(agent: SacAgent, s, mode: str = "explore") -> np.ndarray:
    """Squashed-Gaussian sample (explore) or tanh(mean) (evaluate)."""
    mean, log_std, _ = agent.policy_dist(np.asarray(s, dtype=np.float64))
    if mode == "evaluate":
        return np.tanh(mean)
    if mode != "explore":
        raise ValueError(f"unknown mode {mode!r}")
    noise = agent.rng.standard_normal(mean.shape)
    return np.tanh(mean + np.exp(log_std) * noise)


def policy_target_hook(agent: SacAgent) -> TargetHook:
    """Standard SAC bootstrap: a' ~ pi_theta(.|s') with its log-density."""

    def hook(s2, k):
        a2, logp, *_ = agent.sample(s2)
        return a2, logp

    return hook


def critic_targets(agent: SacAgent, batch: Batch, next_actions, next_logp) -> np.ndarray:
    q1t, q2t = agent.q_values(batch.s2, next_actions, target=True)
    soft = np.minimum(q1t, q2t) - agent.alpha * next_logp
    return batch.r + agent.gamma * (1.0 - batch.done) * soft


def critic_loss(agent: SacAgent, batch: Batch, y: np.ndarray) -> float:
    """Weighted squared error of both critics against fixed targets ``y``.

    Accumulates gradients into q1.grad and q2.grad.
    """
    w = batch.weight
    sa = np.concatenate([batch.s, batch.a], axis=-1)
    total = 0.0
    for net in (agent.q1, agent.q2):
        err = net.forward(sa)[:, 0] - y
        if w is None:
            scale = 1.0 / len(y)
            total += float(np.mean(err * err))
            d = 2.0 * scale * err
        else:
            wsum = float(np.sum(w))
            total += float(np.sum(w * err * err) / wsum)
            d = 2.0 * w * err / wsum
        net.backward(d[:, None])
    return total


def ape_update(agent: SacAgent, batch: Batch, hook: TargetHook = None, k: int = 0) -> float:
    """One critic step toward r + gamma (min target-Q(s', a') - alpha logp-term)."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    hook = hook or policy_target_hook(agent)
    a2, logp2 = hook(batch.s2, k)
    y = critic_targets(agent, batch, a2, logp2)
    loss = critic_loss(agent, batch, y)
    adam_step(agent.q1, agent.q1_opt)
    adam_step(agent.q2, agent.q2_opt)
    soft_update(agent.q1_target, agent.q1, agent.tau)
    soft_update(agent.q2_target, agent.q2, agent.tau)
    return loss


# A penalty maps (states, mean, log_std) to (loss contribution, d/d mean,
# d/d log_std); it is added to the actor loss. It must not run the policy
# network, whose cached intermediates the actor backward pass still needs.
Penalty = Callable[[np.ndarray, np.ndarray, np.ndarray], tuple]


def actor_loss(agent: SacAgent, batch: Batch, noise=None, penalty: Penalty = None):
    """mean(alpha logpi(a|s) - min Q(s, a)) with a reparameterized.

    Accumulates the policy gradient and returns ``(loss, logp)``. Critic
    gradients are not touched.
    """
    s = batch.s
    n = len(s)
    action, logp, mean, log_std, in_range, noise = agent.sample(s, noise)
    sa = np.concatenate([s, action], axis=-1)
    q1 = agent.q1.forward(sa)[:, 0]
    dq1 = agent.q1.backward(np.ones((n, 1)), accumulate=False)[:, -agent.action_dim:]
    q2 = agent.q2.forward(sa)[:, 0]
    dq2 = agent.q2.backward(np.ones((n, 1)), accumulate=False)[:, -agent.action_dim:]
    use1 = (q1 <= q2)[:, None]
    q_min = np.minimum(q1, q2)
    dq = np.where(use1, dq1, dq2)
    alpha = agent.alpha
    loss = float(np.mean(alpha * logp - q_min))
    d_mean, d_log_std = squashed_sample_grads(log_std, noise, action, -dq / n,
                                              np.full(n, alpha / n))
    if penalty is not None:
        p_val, p_mean, p_ls = penalty(s, mean, log_std)
        loss += p_val
        d_mean = d_mean + p_mean
        d_log_std = d_log_std + p_ls
    agent.policy.backward(gaussian_join(d_mean, d_log_std, in_range))
    return loss, logp


def api_update(agent: SacAgent, batch: Batch, penalty: Penalty = None, noise=None):
    """One actor step; returns ``(loss, logp)`` with logp reused by alpha."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    loss, logp = actor_loss(agent, batch, noise, penalty)
    adam_step(agent.policy, agent.policy_opt)
    return loss, logp


def alpha_loss(agent: SacAgent, logp) -> float:
    """-mean(log_alpha * (logp + target_entropy)); gradient goes to log_alpha_grad."""
    drive = float(np.mean(logp)) + agent.target_entropy
    agent.log_alpha_grad[0] += -drive
    return float(-agent.log_alpha[0] * drive)


def alpha_update(agent: SacAgent, batch: Batch = None, logp=None) -> float:
    """Temperature step toward the target entropy (-action_dim)."""
    if logp is None:
        _, logp, *_ = agent.sample(batch.s)
    loss = alpha_loss(agent, logp)
    if agent.config.learn_alpha:
        agent.alpha_opt.apply(agent.log_alpha, agent.log_alpha_grad)
    else:
        agent.log_alpha_grad[:] = 0.0
    return loss


def save_agent(agent: SacAgent, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [AGENT_HEADER, f"alpha {agent.alpha!r}"]
    for name, net in agent.networks().items():
        save_network(net, directory / f"{name}.net")
        lines.append(f"{name} {name}.net")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n")
    return directory


def load_agent(directory, config: SacConfig = None, rng=None) -> SacAgent:
    directory = Path(directory)
    lines = (directory / "manifest.txt").read_text().splitlines()
    if not lines or lines[0] != AGENT_HEADER:
        raise ValueError(f"{directory}: bad agent manifest header")
    entries = dict(line.split(maxsplit=1) for line in lines[1:] if line.strip())
    nets = {name: load_network(directory / entries[name])
            for name in ("policy", "q1", "q2", "q1_target", "q2_target")}
    pi = nets["policy"]
    action_dim = pi.spec.head.action_dim
    obs_dim = pi.spec.input_dim
    cfg = config or SacConfig(hidden=pi.spec.layer_widths[1:-1],
                              policy_activation=pi.spec.hidden_activation,
                              q_activation=nets["q1"].spec.hidden_activation)
    agent = SacAgent(obs_dim, action_dim, cfg, rng)
    for name, net in nets.items():
        getattr(agent, name).copy_from(net)
    agent.log_alpha[0] = math.log(float(entries["alpha"]))
    return agent
