"""Ways of folding a local guide into the actor-critic agent.

``sac``        ignore the guide
``sag``        execute the guide action where it is active; critic target
               evaluates that switched policy
``naive-sag``  same behaviour policy, but the target bootstraps with pi_theta
``rg``         add beta * lambda(s) * M(s) to the reward
``pig``        add beta * mean(lambda(s) M(s)) to the actor objective
``pag``        execute a_g + beta * xi_phi(s, a_g) with |xi| <= phi, and train
               xi to maximize the critic
``discrete-pag`` take the guide action with probability 1 - beta
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .approximator import (
    AdamState,
    MlpSpec,
    Network,
    adam_step,
    bounded_tanh,
    squashed_log_density,
    squashed_log_density_grads,
)
from .sac import (
    Batch,
    SacAgent,
    alpha_update,
    api_update,
    ape_update,
    select_action,
)

KINDS = ("sac", "sag", "naive-sag", "rg", "pig", "pag", "discrete-pag")
SWITCHING = ("sag", "naive-sag", "pag")
METRICS = ("neg-sq-dist", "guide-log-density")


@dataclass(frozen=True)
class Scheduler:
    """Epoch-indexed weight, piecewise constant over ``period`` epochs.

    const: beta0; decay: beta0 * delta**kappa; rise: beta0 * (1 - delta**kappa)
    with kappa = k // period.
    """

    kind: str = "const"
    beta0: float = 1.0
    delta: float = 0.8
    period: int = 50

    def __post_init__(self):
        if self.kind not in ("const", "decay", "rise"):
            raise ValueError(f"unknown schedule {self.kind!r}")
        if self.kind != "const" and not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.period < 1:
            raise ValueError("period must be positive")
        if self.beta0 < 0:
            raise ValueError("beta0 must be non-negative")

    def __call__(self, k: int) -> float:
        if self.kind == "const":
            return self.beta0
        kappa = k // self.period
        if self.kind == "decay":
            return self.beta0 * self.delta ** kappa
        return self.beta0 * (1.0 - self.delta ** kappa)


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "sac"
    scheduler: Scheduler = field(default_factory=Scheduler)
    phi: float = 0.2
    bc_metric: str = "guide-log-density"
    lambda_threshold: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; choose from {KINDS}")
        if self.phi < 0:
            raise ValueError("phi must be non-negative")
        if not 0.0 <= self.lambda_threshold <= 1.0:
            raise ValueError("lambda threshold must lie in [0, 1]")
        if self.bc_metric not in METRICS:
            raise ValueError(f"unknown bc metric {self.bc_metric!r}")


class Perturbation:
    """xi_phi(s, a_g) in [-phi, phi]^d: an MLP over the concatenation (s, a_g)."""

    def __init__(self, obs_dim: int, action_dim: int, phi: float, hidden=(64, 64),
                 activation: str = "relu", rng=None, lr: float = 3e-4):
        spec = MlpSpec((obs_dim + action_dim, *hidden, action_dim), activation, bounded_tanh(phi))
        self.net = Network(spec, rng if rng is not None else np.random.default_rng())
        self.opt = AdamState.for_network(self.net, lr=lr)
        self.phi = phi

    def __call__(self, s, a_g):
        return self.net.forward(np.concatenate([s, a_g], axis=-1))


class Strategy:
    """Mutable per-run strategy state: config plus the perturbation for PAG."""

    def __init__(self, config: StrategyConfig, obs_dim: int = 0, action_dim: int = 0,
                 hidden=(64, 64), rng=None, lr: float = 3e-4):
        self.config = config
        self.perturbation = None
        if config.kind == "pag":
            self.perturbation = Perturbation(obs_dim, action_dim, config.phi, hidden,
                                             rng=rng, lr=lr)

    @property
    def kind(self) -> str:
        return self.config.kind

    def beta(self, k: int) -> float:
        return self.config.scheduler(k)

    def guide_branch(self, guide, s, k):
        """Action of the switched policy where the guide is active."""
        a_g = guide.action(s)
        if self.kind != "pag":
            return a_g
        return np.clip(a_g + self.beta(k) * self.perturbation(s, a_g), -1.0, 1.0)

    def active(self, guide, s):
        return np.asarray(guide.confidence(s)) >= self.config.lambda_threshold


def compose_action(strategy: Strategy, agent: SacAgent, guide, s, k: int,
                   mode: str = "explore") -> np.ndarray:
    """Action executed in state ``s`` at epoch ``k``."""
    if strategy.kind in SWITCHING and bool(strategy.active(guide, s)):
        return strategy.guide_branch(guide, s, k)
    return select_action(agent, s, mode)


def target_action_hook(strategy: Strategy, agent: SacAgent, guide):
    """Hook building the critic target for the policy the strategy executes.

    pi_theta is sampled for every row (so the random stream does not depend
    on lambda); rows where a switching strategy hands control to the guide
    are replaced by the guide-branch action with a zero log-density term.
    """

    def hook(s2, k):
        a2, logp, *_ = agent.sample(s2)
        if strategy.kind in ("sag", "pag"):
            mask = strategy.active(guide, s2)
            if mask.any():
                a2 = a2.copy()
                logp = logp.copy()
                a2[mask] = strategy.guide_branch(guide, s2[mask], k)
                logp[mask] = 0.0
        return a2, logp

    return hook


def bc_metric(agent: SacAgent, s, a_g, kind: str = "guide-log-density", with_grad: bool = False):
    """Closeness of pi_theta(.|s) to the guide action (higher is closer).

    ``neg-sq-dist``: -||tanh(mean) - a_g||^2. ``guide-log-density``: log-density
    of a_g under the squashed Gaussian. With ``with_grad`` also returns
    (d M / d mean, d M / d log_std) for each row.
    """
    mean, log_std, _ = agent.policy_dist(s)
    return _metric_from_dist(mean, log_std, a_g, kind, with_grad)


def _metric_from_dist(mean, log_std, a_g, kind, with_grad):
    if kind == "neg-sq-dist":
        t = np.tanh(mean)
        diff = t - a_g
        m = -np.sum(diff * diff, axis=-1)
        if not with_grad:
            return m
        return m, -2.0 * diff * (1.0 - t * t), np.zeros_like(log_std)
    if kind == "guide-log-density":
        m, z = squashed_log_density(mean, log_std, a_g)
        if not with_grad:
            return m
        d_mean, d_ls = squashed_log_density_grads(log_std, z, np.ones(m.shape))
        return m, d_mean, d_ls
    raise ValueError(f"unknown bc metric {kind!r}")


def rg_shaped_reward(r, lam, metric, k: int, scheduler: Scheduler):
    """r + beta_k * lambda(s) * M(s)."""
    return r + scheduler(k) * lam * metric


def pig_penalty(guide, k: int, scheduler: Scheduler, metric: str):
    """Actor-loss term -beta_k * mean(lambda(s) M(s)) and its gradients."""

    def penalty(s, mean, log_std):
        n = len(s)
        lam = np.asarray(guide.confidence(s), dtype=np.float64)
        a_g = guide.action(s)
        m, d_mean, d_ls = _metric_from_dist(mean, log_std, a_g, metric, True)
        beta = scheduler(k)
        coef = (-beta / n * lam)[:, None]
        return float(-beta * np.mean(lam * m)), coef * d_mean, coef * d_ls

    return penalty


def pig_policy_loss(agent: SacAgent, batch: Batch, guide, k: int, scheduler: Scheduler,
                    metric: str = "guide-log-density", noise=None):
    """Actor step on the Lagrangian-relaxed objective; returns (loss, logp)."""
    return api_update(agent, batch, pig_penalty(guide, k, scheduler, metric), noise)


def pag_objective(agent: SacAgent, perturbation: Perturbation, batch: Batch, guide, k: int,
                  beta: float, lambda_threshold: float = 0.5, backward: bool = True) -> float:
    """-mean(lambda(s) min Q(s, clip(a_g + beta xi))) over the batch.

    Rows with lambda < threshold contribute zero. With ``backward`` the
    gradient is accumulated into the perturbation network (critics untouched).
    """
    s = batch.s
    n = len(s)
    lam = np.asarray(guide.confidence(s), dtype=np.float64)
    mask = lam >= lambda_threshold
    if not mask.any():
        return 0.0
    s_act = s[mask]
    lam_act = lam[mask]
    a_g = guide.action(s_act)
    xi = perturbation(s_act, a_g)
    raw = a_g + beta * xi
    a = np.clip(raw, -1.0, 1.0)
    sa = np.concatenate([s_act, a], axis=-1)
    d = agent.action_dim
    q1 = agent.q1.forward(sa)[:, 0]
    dq1 = agent.q1.backward(np.ones((len(sa), 1)), accumulate=False)[:, -d:]
    q2 = agent.q2.forward(sa)[:, 0]
    dq2 = agent.q2.backward(np.ones((len(sa), 1)), accumulate=False)[:, -d:]
    q_min = np.minimum(q1, q2)
    loss = -float(np.sum(lam_act * q_min)) / n
    if backward:
        dq = np.where((q1 <= q2)[:, None], dq1, dq2)
        inside = (raw > -1.0) & (raw < 1.0)
        d_xi = -(lam_act / n)[:, None] * dq * beta * inside
        perturbation.net.backward(d_xi)
    return loss


def pag_perturbation_update(agent: SacAgent, perturbation: Perturbation, batch: Batch, guide,
                            k: int, scheduler: Scheduler, lambda_threshold: float = 0.5) -> float:
    """One ascent step on the perturbation objective; only phi changes."""
    beta = scheduler(k)
    trainable = beta != 0.0 and perturbation.phi != 0.0
    loss = pag_objective(agent, perturbation, batch, guide, k, beta, lambda_threshold,
                         backward=trainable)
    if trainable:
        adam_step(perturbation.net, perturbation.opt)
    return loss


@dataclass
class UpdateInfo:
    critic_loss: float
    actor_loss: float
    alpha_loss: float
    perturbation_loss: float = 0.0


def update_step(strategy: Strategy, agent: SacAgent, guide, batch: Batch, k: int) -> UpdateInfo:
    """One gradient iteration: critic, actor (or PIG actor), perturbation, alpha."""
    cfg = strategy.config
    kind = cfg.kind
    if kind == "rg":
        lam = np.asarray(guide.confidence(batch.s), dtype=np.float64)
        metric = bc_metric(agent, batch.s, guide.action(batch.s), cfg.bc_metric)
        batch.r = rg_shaped_reward(batch.r, lam, metric, k, cfg.scheduler)
    q_loss = ape_update(agent, batch, target_action_hook(strategy, agent, guide), k)
    if kind == "pig":
        pi_loss, logp = pig_policy_loss(agent, batch, guide, k, cfg.scheduler, cfg.bc_metric)
    else:
        pi_loss, logp = api_update(agent, batch)
    xi_loss = 0.0
    if kind == "pag":
        xi_loss = pag_perturbation_update(agent, strategy.perturbation, batch, guide, k,
                                          cfg.scheduler, cfg.lambda_threshold)
    a_loss = alpha_update(agent, batch, logp)
    return UpdateInfo(q_loss, pi_loss, a_loss, xi_loss)


# Discrete actions

class CategoricalPolicy:
    """Softmax policy over a finite action set."""

    def __init__(self, obs_dim: int, n_actions: int, hidden=(), rng=None):
        spec = MlpSpec((obs_dim, *hidden, n_actions))
        self.net = Network(spec, rng)
        self.n_actions = n_actions

    def probs(self, s) -> np.ndarray:
        logits = self.net.forward(s)
        z = np.exp(logits - logits.max(axis=-1, keepdims=True))
        return z / z.sum(axis=-1, keepdims=True)


def discrete_compose(beta: float, guide_action: int, lam: float, policy_probs,
                     rng: np.random.Generator, lambda_threshold: float = 0.5) -> int:
    """Guide action with probability 1 - beta where the guide is active,
    otherwise a draw from the categorical policy."""
    u = rng.random()
    if lam >= lambda_threshold and u < 1.0 - beta:
        return int(guide_action)
    p = np.asarray(policy_probs, dtype=np.float64)
    return int(rng.choice(len(p), p=p))
