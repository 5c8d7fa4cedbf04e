"""Analytic continuous-control environments and a small discrete MDP oracle.

All continuous environments integrate with semi-implicit Euler (velocity
first, then position) and accept actions in [-1, 1]^d. Entering a forbidden
region replaces the step reward with ``VIOLATION_PENALTY`` and ends the
episode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

VIOLATION_PENALTY = -1000.0
_ACTION_TOL = 1e-6


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    action_dim: int
    reward_bounds: tuple[float, float]
    max_episode_steps: int = 1000
    gamma: float = 0.99

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.gamma}")
        if self.obs_dim < 1 or self.action_dim < 1 or self.max_episode_steps < 1:
            raise ValueError("dimensions and episode length must be positive")


@dataclass
class StepResult:
    next_obs: np.ndarray
    reward: float
    terminal: bool
    violation: bool = False
    truncated: bool = False  # terminal only because the step limit was hit


class EpisodeOver(RuntimeError):
    pass


class ContinuousEnv:
    """Shared episode bookkeeping; subclasses implement the physics."""

    env_id = ""
    obs_dim = 0
    action_dim = 0

    def __post_init__(self):
        self._rng = np.random.default_rng()
        self._t = 0
        self._done = True
        self.state = None

    @property
    def spec(self) -> EnvSpec:
        return EnvSpec(
            obs_dim=self.obs_dim,
            action_dim=self.action_dim,
            reward_bounds=self.reward_bounds(),
            max_episode_steps=self.max_episode_steps,
            gamma=self.gamma,
        )

    def reward_bounds(self) -> tuple[float, float]:
        raise NotImplementedError

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._t = 0
        self._done = False
        self._reset_state(self._rng)
        return self.observe()

    def _check_action(self, action) -> np.ndarray:
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape[0] != self.action_dim:
            raise ValueError(f"expected action of size {self.action_dim}, got {a.shape[0]}")
        if np.any(np.abs(a) > 1.0 + _ACTION_TOL) or not np.all(np.isfinite(a)):
            raise ValueError(f"action {a} outside [-1, 1]")
        return np.clip(a, -1.0, 1.0)

    def step(self, action) -> StepResult:
        if self._done:
            raise EpisodeOver("step called on a finished episode; call reset first")
        a = self._check_action(action)
        reward = self._advance(a)
        self._t += 1
        obs = self.observe()
        violation = self.violation(obs)
        if violation:
            reward = VIOLATION_PENALTY
        truncated = not violation and self._t >= self.max_episode_steps
        self._done = violation or truncated
        return StepResult(obs, float(reward), self._done, violation, truncated)

    def violation(self, obs) -> bool:
        return False

    # subclass hooks
    def _reset_state(self, rng):
        raise NotImplementedError

    def _advance(self, a) -> float:
        raise NotImplementedError

    def observe(self) -> np.ndarray:
        raise NotImplementedError


@dataclass
class SafeCartpoleSwingup(ContinuousEnv):
    """Cart-pole swing-up on a rail restricted to |x| < x_max.

    Observation: (x, x_dot, cos theta, sin theta, theta_dot) with theta = 0
    upright. The pole is a uniform rod of half-length ``pole_half_length``.
    """

    env_id = "safe-cartpole-swingup"
    obs_dim = 5
    action_dim = 1

    x_max: float = 1.9
    force_mag: float = 10.0
    cart_friction: float = 1.0
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_half_length: float = 0.5
    gravity: float = 9.81
    dt: float = 0.02
    init_noise: float = 0.05
    max_episode_steps: int = 1000
    gamma: float = 0.99

    def reward_bounds(self):
        return (VIOLATION_PENALTY, 1.0)

    def _reset_state(self, rng):
        n = self.init_noise
        self.state = [0.0, n * rng.standard_normal(), math.pi + n * rng.standard_normal(),
                      n * rng.standard_normal()]

    def accelerations(self, x_dot, theta, theta_dot, force):
        mp, l = self.pole_mass, self.pole_half_length
        total = self.cart_mass + mp
        s, c = math.sin(theta), math.cos(theta)
        tmp = (force - self.cart_friction * x_dot + mp * l * theta_dot * theta_dot * s) / total
        theta_acc = (self.gravity * s - c * tmp) / (l * (4.0 / 3.0 - mp * c * c / total))
        x_acc = tmp - mp * l * theta_acc * c / total
        return x_acc, theta_acc

    def _advance(self, a):
        x, x_dot, theta, theta_dot = self.state
        x_acc, theta_acc = self.accelerations(x_dot, theta, theta_dot, self.force_mag * a[0])
        x_dot += self.dt * x_acc
        theta_dot += self.dt * theta_acc
        x += self.dt * x_dot
        theta += self.dt * theta_dot
        self.state = [x, x_dot, theta, theta_dot]
        centered = max(0.0, 1.0 - abs(x) / self.x_max)
        return 0.5 * (1.0 + math.cos(theta)) * centered

    def energy(self) -> float:
        """Mechanical energy, potential measured from the pivot height."""
        x, x_dot, theta, theta_dot = self.state
        mp, l = self.pole_mass, self.pole_half_length
        vx = x_dot + l * math.cos(theta) * theta_dot
        vy = -l * math.sin(theta) * theta_dot
        kinetic = (0.5 * self.cart_mass * x_dot ** 2 + 0.5 * mp * (vx * vx + vy * vy)
                   + 0.5 * mp * l * l / 3.0 * theta_dot ** 2)
        return kinetic + mp * self.gravity * l * math.cos(theta)

    def observe(self):
        x, x_dot, theta, theta_dot = self.state
        return np.array([x, x_dot, math.cos(theta), math.sin(theta), theta_dot])

    def violation(self, obs):
        return abs(obs[0]) >= self.x_max


@dataclass
class _PointBody(ContinuousEnv):
    """Damped planar double integrator; subclasses add reward and geometry."""

    mass: float = 1.0
    damping: float = 0.1
    force_mag: float = 1.0
    max_speed: float = math.inf
    dt: float = 0.05
    max_episode_steps: int = 1000
    gamma: float = 0.99

    def _move(self, a):
        p, v = self.pos, self.vel
        v += self.dt * (self.force_mag * a - self.damping * v) / self.mass
        speed = math.hypot(v[0], v[1])
        if speed > self.max_speed:
            v *= self.max_speed / speed
        p += self.dt * v
        lo, hi = self.arena
        for i in range(2):
            if p[i] < lo or p[i] > hi:
                p[i] = min(max(p[i], lo), hi)
                v[i] = 0.0

    def observe(self):
        return np.concatenate([self.pos, self.vel])


@dataclass
class PointMass(_PointBody):
    """Sparse-reward reaching: reward 1 inside the target ball, 0 elsewhere."""

    env_id = "point-mass"
    obs_dim = 4
    action_dim = 2

    arena: tuple[float, float] = (-0.3, 0.3)
    target: tuple[float, float] = (0.0, 0.0)
    target_radius: float = 0.015

    def reward_bounds(self):
        return (0.0, 1.0)

    def _reset_state(self, rng):
        lo, hi = self.arena
        self.pos = rng.uniform(lo, hi, size=2)
        self.vel = np.zeros(2)

    def distance_to_target(self, obs=None) -> float:
        p = self.pos if obs is None else obs[:2]
        return math.hypot(p[0] - self.target[0], p[1] - self.target[1])

    def _advance(self, a):
        self._move(a)
        return 1.0 if self.distance_to_target() <= self.target_radius else 0.0


@dataclass
class PointCircle(_PointBody):
    """Run clockwise along a circle of radius ``circle_radius``.

    Vertical barriers at |x| = ``x_limit`` are forbidden.
    """

    env_id = "point-circle"
    obs_dim = 4
    action_dim = 2

    circle_radius: float = 6.0
    x_limit: float = 6.0
    max_speed: float = 2.0
    init_noise: float = 0.1
    arena: tuple[float, float] = (-20.0, 20.0)

    def reward_bounds(self):
        # |v . (y, -x)| <= |v| r and r / (1 + |r - R|) <= R
        return (VIOLATION_PENALTY, self.max_speed * self.circle_radius)

    def _reset_state(self, rng):
        self.pos = self.init_noise * rng.standard_normal(2)
        self.vel = np.zeros(2)

    def _advance(self, a):
        self._move(a)
        (x, y), (vx, vy) = self.pos, self.vel
        r = math.hypot(x, y)
        return (vx * y - vy * x) / (1.0 + abs(r - self.circle_radius))

    def violation(self, obs):
        return abs(obs[0]) >= self.x_limit


DEFAULT_OBSTACLES = ((2.0, 5.0), (5.0, 2.0), (5.5, 9.0), (9.0, 5.5), (1.0, 9.5))


@dataclass
class PointReach(_PointBody):
    """Reach a goal while avoiding five disc obstacles.

    Reward is the negative distance to the goal, plus a one-off bonus the
    first time the goal ball is entered in an episode. Observation:
    (x, y, vx, vy, goal_x, goal_y, obstacle centres...).
    """

    env_id = "point-reach"
    obs_dim = 16
    action_dim = 2

    goal: tuple[float, float] = (8.0, 8.0)
    goal_radius: float = 0.5
    goal_bonus: float = 100.0
    obstacles: tuple[tuple[float, float], ...] = DEFAULT_OBSTACLES
    obstacle_radius: float = 0.5
    max_speed: float = 2.0
    init_noise: float = 0.1
    arena: tuple[float, float] = (-3.0, 13.0)

    def __post_init__(self):
        super().__post_init__()
        if len(self.obstacles) != 5:
            raise ValueError("point-reach uses exactly 5 obstacles")
        self._layout = np.concatenate([np.asarray(self.goal, float),
                                       np.asarray(self.obstacles, float).reshape(-1)])
        self._reached = False

    def reward_bounds(self):
        return (VIOLATION_PENALTY, self.goal_bonus)

    def _reset_state(self, rng):
        self.pos = self.init_noise * rng.standard_normal(2)
        self.vel = np.zeros(2)
        self._reached = False

    def _advance(self, a):
        self._move(a)
        d = math.hypot(self.pos[0] - self.goal[0], self.pos[1] - self.goal[1])
        reward = -d
        if d <= self.goal_radius and not self._reached:
            self._reached = True
            reward += self.goal_bonus
        return reward

    def observe(self):
        return np.concatenate([self.pos, self.vel, self._layout])

    def violation(self, obs):
        p = obs[:2]
        centres = np.asarray(obs[6:16]).reshape(5, 2)
        return bool(np.any(np.hypot(*(centres - p).T) <= self.obstacle_radius))


# Discrete oracle

@dataclass
class DiscreteMdp:
    """Finite MDP with transition tensor P[s, a, s'] and reward table r[s, a]."""

    P: np.ndarray
    r: np.ndarray
    gamma: float = 0.9

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.r = np.asarray(self.r, dtype=np.float64)
        if self.P.ndim != 3 or self.P.shape[:2] != self.r.shape or self.P.shape[0] != self.P.shape[2]:
            raise ValueError("P must be (S, A, S) and r must be (S, A)")
        if np.any(self.P < 0) or np.max(np.abs(self.P.sum(axis=2) - 1.0)) > 1e-12:
            raise ValueError("transition rows must be probability distributions")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("discount must lie in [0, 1)")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]


def make_chain_mdp(n_states: int = 5, n_actions: int = 3, seed: int = 0,
                   gamma: float = 0.9, slip: float = 0.2) -> DiscreteMdp:
    """Chain where action 0 moves left, the last action moves right and any
    others stay; with probability ``slip`` the next state is uniform."""
    rng = np.random.default_rng(seed)
    P = np.full((n_states, n_actions, n_states), slip / n_states)
    for s in range(n_states):
        for a in range(n_actions):
            if a == 0:
                nxt = max(s - 1, 0)
            elif a == n_actions - 1:
                nxt = min(s + 1, n_states - 1)
            else:
                nxt = s
            P[s, a, nxt] += 1.0 - slip
    r = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    r[-1, :] += 1.0
    return DiscreteMdp(P, r, gamma)


def policy_matrix(mdp: DiscreteMdp, policy) -> np.ndarray:
    """Normalize a policy to an (S, A) matrix of action probabilities.

    Accepts a matrix, a vector of deterministic actions, or a callable
    state -> distribution.
    """
    S, A = mdp.n_states, mdp.n_actions
    if callable(policy):
        pi = np.array([np.asarray(policy(s), float) for s in range(S)])
    else:
        pi = np.asarray(policy)
        if pi.ndim == 1:
            pi = np.eye(A)[pi.astype(int)]
    if pi.shape != (S, A):
        raise ValueError(f"policy must be ({S}, {A})")
    return pi


def exact_q(mdp: DiscreteMdp, policy) -> np.ndarray:
    """Solve Q = r + gamma P Pi Q as one linear system."""
    pi = policy_matrix(mdp, policy)
    S, A = mdp.n_states, mdp.n_actions
    # (P Pi)[(s,a), (s',a')] = P[s,a,s'] pi[s',a']
    P_pi = (mdp.P[:, :, :, None] * pi[None, None, :, :]).reshape(S * A, S * A)
    q = np.linalg.solve(np.eye(S * A) - mdp.gamma * P_pi, mdp.r.reshape(-1))
    return q.reshape(S, A)


def bellman_evaluation(mdp: DiscreteMdp, q: np.ndarray, policy) -> np.ndarray:
    pi = policy_matrix(mdp, policy)
    v = (pi * q).sum(axis=1)
    return mdp.r + mdp.gamma * mdp.P @ v


def bellman_optimality(mdp: DiscreteMdp, q: np.ndarray) -> np.ndarray:
    return mdp.r + mdp.gamma * mdp.P @ q.max(axis=1)


def value_iteration(mdp: DiscreteMdp, sweeps: int = 10_000, tol: float = 0.0) -> np.ndarray:
    q = np.zeros_like(mdp.r)
    for _ in range(sweeps):
        new = bellman_optimality(mdp, q)
        if np.max(np.abs(new - q)) <= tol:
            return new
        q = new
    return q


def policy_evaluation_iterative(mdp: DiscreteMdp, policy, sweeps: int = 10_000) -> np.ndarray:
    q = np.zeros_like(mdp.r)
    for _ in range(sweeps):
        q = bellman_evaluation(mdp, q, policy)
    return q


@dataclass
class ChainEnv:
    """Episodic sampler over a :class:`DiscreteMdp`; observations are one-hot."""

    mdp: DiscreteMdp = field(default_factory=make_chain_mdp)
    max_episode_steps: int = 100
    env_id = "chain-mdp"

    def __post_init__(self):
        self._rng = np.random.default_rng()
        self._t = 0
        self._done = True
        self.s = 0

    @property
    def spec(self) -> EnvSpec:
        return EnvSpec(self.mdp.n_states, self.mdp.n_actions,
                       (float(self.mdp.r.min()), float(self.mdp.r.max())),
                       self.max_episode_steps, self.mdp.gamma)

    def observe(self):
        return np.eye(self.mdp.n_states)[self.s]

    def reset(self, seed=None):
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.s = 0
        self._t = 0
        self._done = False
        return self.observe()

    def step(self, action: int) -> StepResult:
        if self._done:
            raise EpisodeOver("step called on a finished episode; call reset first")
        a = int(action)
        if not 0 <= a < self.mdp.n_actions:
            raise ValueError(f"action {a} out of range")
        reward = float(self.mdp.r[self.s, a])
        self.s = int(self._rng.choice(self.mdp.n_states, p=self.mdp.P[self.s, a]))
        self._t += 1
        self._done = self._t >= self.max_episode_steps
        return StepResult(self.observe(), reward, self._done, False, self._done)

    def violation(self, obs) -> bool:
        return False


ENVIRONMENTS = {
    "point-mass": PointMass,
    "safe-cartpole-swingup": SafeCartpoleSwingup,
    "point-circle": PointCircle,
    "point-reach": PointReach,
    "chain-mdp": ChainEnv,
}

CONTINUOUS_ENVS = ("point-mass", "safe-cartpole-swingup", "point-circle", "point-reach")


def make_env(env_id: str, **overrides):
    """Build an environment by id; keyword overrides set geometric constants."""
    try:
        cls = ENVIRONMENTS[env_id]
    except KeyError:
        raise ValueError(f"unknown environment {env_id!r}; choose from {sorted(ENVIRONMENTS)}") from None
    known = {f.name for f in fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"{env_id} has no parameter(s) {sorted(unknown)}")
    return cls(**overrides)
