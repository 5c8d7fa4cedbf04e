"""Deterministic local guides and their confidence functions.

A guide maps observations to one action in [-1, 1]^d and reports a
confidence in [0, 1]. Every method accepts a single observation or a batch
(one observation per row) and answers in kind.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .approximator import CheckpointError, gaussian_split, load_network
from .environments import make_env

DEFAULT_THRESHOLD = 0.5


def _batch(obs):
    obs = np.asarray(obs, dtype=np.float64)
    return (obs[None, :], True) if obs.ndim == 1 else (obs, False)


def _unbatch(x, single):
    return x[0] if single else x


class LocalGuide:
    """Base class; subclasses implement ``_actions`` and ``_confidences``."""

    name = "guide"

    def __init__(self, threshold: float = DEFAULT_THRESHOLD):
        if not 0.0 <= threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
        self.threshold = threshold

    def action(self, obs) -> np.ndarray:
        batch, single = _batch(obs)
        return _unbatch(np.clip(self._actions(batch), -1.0, 1.0), single)

    def confidence(self, obs):
        batch, single = _batch(obs)
        lam = np.clip(self._confidences(batch), 0.0, 1.0)
        return float(lam[0]) if single else lam

    def active(self, obs):
        """Boolean mask of observations where the guide takes over."""
        return np.asarray(self.confidence(obs)) >= self.threshold

    def _actions(self, obs):
        raise NotImplementedError

    def _confidences(self, obs):
        raise NotImplementedError


def _toward_centre(x):
    return np.where(x >= 0.0, -1.0, 1.0)


class CartpoleGuide(LocalGuide):
    """Full force toward the rail centre once |x| >= ``x_switch``."""

    name = "safe-cartpole-swingup"

    def __init__(self, x_switch: float = 0.2, threshold: float = DEFAULT_THRESHOLD):
        super().__init__(threshold)
        self.x_switch = x_switch

    def _actions(self, obs):
        return _toward_centre(obs[:, 0])[:, None]

    def _confidences(self, obs):
        return (np.abs(obs[:, 0]) >= self.x_switch).astype(np.float64)


class PointCircleGuide(LocalGuide):
    """Push horizontally back to the middle once |x| >= ``x_switch``."""

    name = "point-circle"

    def __init__(self, x_switch: float = 2.0, threshold: float = DEFAULT_THRESHOLD):
        super().__init__(threshold)
        self.x_switch = x_switch

    def _actions(self, obs):
        out = np.zeros((obs.shape[0], 2))
        out[:, 0] = _toward_centre(obs[:, 0])
        return out

    def _confidences(self, obs):
        return (np.abs(obs[:, 0]) >= self.x_switch).astype(np.float64)


class PointReachGuide(LocalGuide):
    """Diagonal escape from the nearest obstacle within ``activation_radius``.

    The action is the diagonal of the agent's quadrant relative to that
    obstacle, e.g. [1, 1] when the agent is up and to the right of it.
    Ties between equidistant obstacles go to the lowest index.
    """

    name = "point-reach"

    def __init__(self, activation_radius: float = 3.0, threshold: float = DEFAULT_THRESHOLD):
        super().__init__(threshold)
        self.activation_radius = activation_radius

    def _offsets(self, obs):
        pos = obs[:, None, 0:2]
        centres = obs[:, 6:16].reshape(-1, 5, 2)
        offsets = pos - centres
        dist = np.hypot(offsets[..., 0], offsets[..., 1])
        return offsets, dist

    def _actions(self, obs):
        offsets, dist = self._offsets(obs)
        nearest = np.argmin(dist, axis=1)
        rel = offsets[np.arange(obs.shape[0]), nearest]
        return np.where(rel >= 0.0, 1.0, -1.0)

    def _confidences(self, obs):
        _, dist = self._offsets(obs)
        return (dist.min(axis=1) <= self.activation_radius).astype(np.float64)


class LearnedGuide(LocalGuide):
    """Deterministic mean action tanh(mean) of a checkpointed Gaussian policy.

    The confidence rule is environment specific and supplied by the caller.
    """

    name = "learned"

    def __init__(self, network, confidence_fn, threshold: float = DEFAULT_THRESHOLD):
        super().__init__(threshold)
        if network.spec.head.kind != "squashed_gaussian":
            raise CheckpointError("learned guides need a squashed_gaussian policy head")
        self.network = network
        self.confidence_fn = confidence_fn

    def _actions(self, obs):
        raw = self.network.forward(obs)
        mean, _, _ = gaussian_split(raw, self.network.spec.head.action_dim)
        return np.tanh(mean)

    def _confidences(self, obs):
        return np.asarray(self.confidence_fn(obs), dtype=np.float64)


class CompositeGuide(LocalGuide):
    """Concatenation of guides with (assumed) non-overlapping regions.

    When ``probe_obs`` is given, construction fails if any probe observation
    activates more than one guide. At run time the first active guide wins.
    """

    name = "composite"

    def __init__(self, guides, threshold: float = DEFAULT_THRESHOLD, probe_obs=None):
        super().__init__(threshold)
        if not guides:
            raise ValueError("CompositeGuide needs at least one guide")
        self.guides = list(guides)
        if probe_obs is not None:
            active = np.stack([np.atleast_1d(g.active(probe_obs)) for g in self.guides])
            if np.any(active.sum(axis=0) > 1):
                raise ValueError("guide regions overlap on the probe observations")

    def _first_active(self, obs):
        active = np.stack([np.atleast_1d(g.active(obs)) for g in self.guides])
        idx = np.argmax(active, axis=0)
        return idx, active.any(axis=0)

    def _actions(self, obs):
        idx, _ = self._first_active(obs)
        acts = np.stack([np.atleast_2d(g.action(obs)) for g in self.guides])
        return acts[idx, np.arange(obs.shape[0])]

    def _confidences(self, obs):
        idx, _ = self._first_active(obs)
        lams = np.stack([np.atleast_1d(g.confidence(obs)) for g in self.guides])
        return lams[idx, np.arange(obs.shape[0])]


class NullGuide(LocalGuide):
    """Never active. Wraps another guide's action map with lambda == 0."""

    name = "null"

    def __init__(self, base: LocalGuide):
        super().__init__(base.threshold)
        self.base = base

    def _actions(self, obs):
        return self.base._actions(obs)

    def _confidences(self, obs):
        return np.zeros(obs.shape[0])


def point_mass_confidence(big_goal_radius: float = 0.1, target=(0.0, 0.0)):
    """lambda = 1 while the agent is outside the big goal ball."""
    tx, ty = target

    def confidence(obs):
        obs = np.atleast_2d(obs)
        return (np.hypot(obs[:, 0] - tx, obs[:, 1] - ty) > big_goal_radius).astype(np.float64)

    return confidence


def load_learned_guide(path, confidence_fn, threshold: float = DEFAULT_THRESHOLD) -> LearnedGuide:
    return LearnedGuide(load_network(path), confidence_fn, threshold)


def default_point_mass_checkpoint() -> Path:
    return Path(str(resources.files("rllg") / "data" / "point_mass_guide.net"))


def make_guide(env_id: str, checkpoint=None, threshold: float = DEFAULT_THRESHOLD,
               **env_overrides) -> LocalGuide:
    """Guide matched to an environment id."""
    if env_id == "safe-cartpole-swingup":
        return CartpoleGuide(threshold=threshold)
    if env_id == "point-circle":
        return PointCircleGuide(threshold=threshold)
    if env_id == "point-reach":
        return PointReachGuide(threshold=threshold)
    if env_id == "point-mass":
        path = Path(checkpoint) if checkpoint else default_point_mass_checkpoint()
        env = make_env(env_id, **env_overrides)
        return load_learned_guide(path, point_mass_confidence(target=env.target), threshold)
    raise ValueError(f"no guide registered for environment {env_id!r}")


__all__ = [
    "CartpoleGuide", "CompositeGuide", "LearnedGuide", "LocalGuide",
    "NullGuide", "PointCircleGuide", "PointReachGuide", "load_learned_guide", "make_guide",
    "point_mass_confidence",
]
