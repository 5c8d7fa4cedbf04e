"""Shared fixtures for the test suite: tiny agents, guides and finite differences."""

from itertools import product

import numpy as np

from rllg.guides import LocalGuide
from rllg.sac import Batch, SacAgent, SacConfig, ape_update


def central_difference(f, params, h=1e-6):
    """Numerical gradient of scalar ``f()`` w.r.t. the array ``params`` (edited in place)."""
    grad = np.zeros_like(params)
    flat = params.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        grad.reshape(-1)[i] = (up - down) / (2.0 * h)
    return grad


def rel_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / scale)


def tiny_agent(seed, obs_dim=3, action_dim=2, hidden=(5,), activation="tanh", alpha=0.7):
    cfg = SacConfig(hidden=hidden, policy_activation=activation, q_activation=activation,
                    init_alpha=alpha)
    return SacAgent(obs_dim, action_dim, cfg, rng=np.random.default_rng(seed))


def random_batch(rng, n, obs_dim, action_dim):
    return Batch(
        s=rng.normal(size=(n, obs_dim)),
        a=rng.uniform(-1, 1, size=(n, action_dim)),
        r=rng.normal(size=n),
        s2=rng.normal(size=(n, obs_dim)),
        done=(rng.random(n) < 0.2).astype(float),
    )


class HalfSpaceGuide(LocalGuide):
    """Active where the first observation coordinate is positive; fixed action."""

    name = "half-space"

    def __init__(self, action, soft=False):
        super().__init__()
        self.fixed = np.asarray(action, dtype=float)
        self.soft = soft

    def _actions(self, obs):
        return np.tile(self.fixed, (obs.shape[0], 1))

    def _confidences(self, obs):
        if self.soft:
            return 1.0 / (1.0 + np.exp(-3.0 * obs[:, 0]))
        return (obs[:, 0] > 0).astype(float)


class AnalyticQ:
    """Stand-in critic Q(s, a) = -||a - centre||^2 (or a constant), duck-typed
    as a Network so the actor and perturbation objectives can run against it."""

    def __init__(self, obs_dim, centre, constant=False):
        self.obs_dim = obs_dim
        self.centre = np.asarray(centre, dtype=float)
        self.constant = constant
        self.grad = np.zeros(1)

    def forward(self, sa):
        self._a = sa[:, self.obs_dim:]
        if self.constant:
            return np.full((len(sa), 1), 2.0)
        return -np.sum((self._a - self.centre) ** 2, axis=1, keepdims=True)

    def backward(self, upstream, accumulate=True):
        if self.constant:
            d_a = np.zeros_like(self._a)
        else:
            d_a = upstream * (-2.0 * (self._a - self.centre))
        return np.concatenate([np.zeros((len(d_a), self.obs_dim)), d_a], axis=1)


# Exhaustive tabular pipeline: the critic is trained on every (s, a, s')
# triple of a finite MDP, each weighted by its transition probability.

def exhaustive_batch(mdp):
    n_s, n_a = mdp.n_states, mdp.n_actions
    triples = np.array(list(product(range(n_s), range(n_a), range(n_s))))
    s, a, s2 = triples.T
    return Batch(np.eye(n_s)[s], np.eye(n_a)[a], mdp.r[s, a], np.eye(n_s)[s2],
                 np.zeros(len(s)), weight=mdp.P[s, a, s2])


def q_table(agent, n_states, n_actions, target=False):
    s = np.repeat(np.eye(n_states), n_actions, axis=0)
    a = np.tile(np.eye(n_actions), (n_states, 1))
    q1, q2 = agent.q_values(s, a, target)
    return np.minimum(q1, q2).reshape(n_states, n_actions)


def fit_tabular_q(mdp, steps=10_000, policy=None, seed=0):
    """Run ape_update on the exhaustive batch; greedy bootstrap unless ``policy`` is given."""
    n_s, n_a = mdp.n_states, mdp.n_actions
    cfg = SacConfig(hidden=(64,), q_activation="tanh", lr=1e-3, tau=0.05, gamma=mdp.gamma)
    agent = SacAgent(n_s, n_a, cfg, rng=np.random.default_rng(seed))
    batch = exhaustive_batch(mdp)
    eye_a = np.eye(n_a)

    def hook(s2, k):
        idx = s2.argmax(axis=1)
        if policy is None:
            actions = q_table(agent, n_s, n_a, target=True).argmax(axis=1)[idx]
        else:
            actions = np.asarray(policy)[idx]
        return eye_a[actions], np.zeros(len(s2))

    for _ in range(steps):
        ape_update(agent, batch, hook)
    return q_table(agent, n_s, n_a)
