"""Dense networks with hand-written reverse-mode gradients.

Every learnable object in the package (policy, critics, target critics,
perturbation) is a :class:`Network`: a stack of affine layers whose weights
live in one flat float64 vector. Layer weights and biases are views into that
vector, so optimizers and Polyak averaging operate on a single array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HEADER = "RLLG-NET v1"

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG2 = math.log(2.0)


class CheckpointError(ValueError):
    """Raised when a network checkpoint cannot be parsed."""


@dataclass(frozen=True)
class Head:
    """Output head of an MLP.

    kind is one of ``linear``, ``squashed_gaussian`` or ``bounded_tanh``.
    ``action_dim`` is only meaningful for the Gaussian head and ``scale`` only
    for the bounded head.
    """

    kind: str = "linear"
    action_dim: int = 0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "squashed_gaussian", "bounded_tanh"):
            raise ValueError(f"unknown head kind {self.kind!r}")
        if self.kind == "squashed_gaussian" and self.action_dim < 1:
            raise ValueError("squashed_gaussian head needs action_dim >= 1")
        if self.kind == "bounded_tanh" and self.scale < 0:
            raise ValueError("bounded_tanh scale must be non-negative")


def linear() -> Head:
    return Head("linear")


def squashed_gaussian(action_dim: int) -> Head:
    return Head("squashed_gaussian", action_dim=action_dim)


def bounded_tanh(scale: float) -> Head:
    return Head("bounded_tanh", scale=float(scale))


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple[int, ...]
    hidden_activation: str = "relu"
    head: Head = field(default_factory=linear)

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("an MLP needs at least an input and an output layer")
        if any(w < 1 for w in widths):
            raise ValueError(f"all layer widths must be >= 1, got {widths}")
        if self.hidden_activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.hidden_activation!r}")
        if self.head.kind == "squashed_gaussian" and widths[-1] != 2 * self.head.action_dim:
            raise ValueError(
                "squashed_gaussian head needs output width 2 * action_dim "
                f"({2 * self.head.action_dim}), got {widths[-1]}"
            )

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]

    def n_params(self) -> int:
        w = self.layer_widths
        return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))


class Network:
    """Feed-forward network with a flat parameter vector.

    ``forward`` accepts a single input vector or a batch (rows are samples)
    and caches the intermediates needed by ``backward``.
    """

    def __init__(self, spec: MlpSpec, rng: np.random.Generator | None = None):
        self.spec = spec
        n = spec.n_params()
        self.params = np.zeros(n)
        self.grad = np.zeros(n)
        self._layers_p = self._views(self.params)
        self._layers_g = self._views(self.grad)
        self._cache = None
        if rng is not None:
            for (w, b) in self._layers_p:
                bound = 1.0 / math.sqrt(w.shape[0])
                w[...] = rng.uniform(-bound, bound, size=w.shape)
                b[...] = rng.uniform(-bound, bound, size=b.shape)

    def _views(self, flat):
        views = []
        offset = 0
        widths = self.spec.layer_widths
        for i in range(len(widths) - 1):
            n_in, n_out = widths[i], widths[i + 1]
            w = flat[offset:offset + n_in * n_out].reshape(n_in, n_out)
            offset += n_in * n_out
            b = flat[offset:offset + n_out]
            offset += n_out
            views.append((w, b))
        return views

    @property
    def layers(self):
        """List of (weight, bias) views; weights are shaped (fan_in, fan_out)."""
        return self._layers_p

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.spec.input_dim:
            raise ValueError(
                f"input width {h.shape[1]} does not match network input {self.spec.input_dim}"
            )
        tanh_hidden = self.spec.hidden_activation == "tanh"
        inputs = []
        acts = []
        last = len(self._layers_p) - 1
        for i, (w, b) in enumerate(self._layers_p):
            inputs.append(h)
            z = h @ w
            z += b
            if i < last:
                h = np.tanh(z) if tanh_hidden else np.maximum(z, 0.0)
                acts.append(h)
            else:
                h = z
        head = self.spec.head
        if head.kind == "bounded_tanh":
            t = np.tanh(h)
            acts.append(t)
            out = head.scale * t
        else:
            out = h
        self._cache = (inputs, acts, single)
        return out[0] if single else out

    def backward(self, upstream, accumulate: bool = True) -> np.ndarray:
        """Backpropagate ``upstream`` (d loss / d output).

        Adds d(upstream . output)/d params into ``grad`` when ``accumulate`` is
        true and always returns the gradient with respect to the input.
        """
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        inputs, acts, single = self._cache
        g = np.asarray(upstream, dtype=np.float64)
        if single:
            g = g[None, :]
        head = self.spec.head
        if head.kind == "bounded_tanh":
            t = acts[-1]
            g = g * (head.scale * (1.0 - t * t))
        tanh_hidden = self.spec.hidden_activation == "tanh"
        n_layers = len(self._layers_p)
        for i in range(n_layers - 1, -1, -1):
            w, _ = self._layers_p[i]
            if accumulate:
                gw, gb = self._layers_g[i]
                gw += inputs[i].T @ g
                gb += g.sum(axis=0)
            g = g @ w.T
            if i > 0:
                a = acts[i - 1]
                if tanh_hidden:
                    g *= 1.0 - a * a
                else:
                    g *= a > 0.0
        return g[0] if single else g

    def zero_grad(self):
        self.grad[...] = 0.0

    def copy_from(self, other: "Network"):
        if other.spec != self.spec:
            raise ValueError("network specs differ")
        self.params[...] = other.params

    def clone(self) -> "Network":
        net = Network(self.spec)
        net.params[...] = self.params
        return net


@dataclass
class AdamState:
    """Adaptive-moment optimizer state for one flat parameter vector."""

    n: int
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = None
    v: np.ndarray = None

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.n)
        if self.v is None:
            self.v = np.zeros(self.n)

    @classmethod
    def for_network(cls, net: Network, **kwargs) -> "AdamState":
        return cls(n=net.params.size, **kwargs)

    def apply(self, params: np.ndarray, grad: np.ndarray):
        """In-place descent step on ``params``; zeroes ``grad`` afterwards."""
        self.step += 1
        b1, b2 = self.beta1, self.beta2
        self.m *= b1
        self.m += (1.0 - b1) * grad
        self.v *= b2
        self.v += (1.0 - b2) * (grad * grad)
        m_hat_scale = 1.0 / (1.0 - b1 ** self.step)
        v_hat_scale = 1.0 / (1.0 - b2 ** self.step)
        denom = np.sqrt(self.v * v_hat_scale)
        denom += self.eps
        params -= self.lr * m_hat_scale * self.m / denom
        grad[...] = 0.0


def adam_step(net: Network, opt: AdamState):
    opt.apply(net.params, net.grad)


def soft_update(target: Network, online: Network, tau: float):
    """Polyak averaging: target <- (1 - tau) * target + tau * online."""
    if target.spec != online.spec:
        raise ValueError("soft_update needs networks with identical specs")
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if tau == 1.0:
        target.params[...] = online.params
        return
    target.params *= 1.0 - tau
    target.params += tau * online.params


# Squashed Gaussian head helpers. The raw network output holds the mean in
# its first action_dim columns and the unclamped log-std in the rest.

def gaussian_split(raw: np.ndarray, action_dim: int):
    """Return (mean, log_std, in_range) from a raw Gaussian-head output."""
    mean = raw[..., :action_dim]
    raw_ls = raw[..., action_dim:]
    log_std = np.clip(raw_ls, LOG_STD_MIN, LOG_STD_MAX)
    in_range = (raw_ls >= LOG_STD_MIN) & (raw_ls <= LOG_STD_MAX)
    return mean, log_std, in_range


def gaussian_join(d_mean, d_log_std, in_range):
    """Upstream gradient for the raw head output given mean/log-std gradients."""
    return np.concatenate([d_mean, d_log_std * in_range], axis=-1)


def _log1m_tanh2(u):
    # log(1 - tanh(u)^2) evaluated without cancellation
    return 2.0 * (_LOG2 - u - np.logaddexp(0.0, -2.0 * u))


def squashed_sample(mean, log_std, noise):
    """Reparameterized squashed-Gaussian sample.

    Returns ``(action, log_prob, pre_tanh)`` where ``log_prob`` is summed over
    the last axis.
    """
    std = np.exp(log_std)
    u = mean + std * noise
    action = np.tanh(u)
    logp = (-0.5 * noise * noise - log_std - _HALF_LOG_2PI - _log1m_tanh2(u)).sum(axis=-1)
    return action, logp, u


def squashed_sample_grads(log_std, noise, action, d_action, d_logp):
    """Chain rule through :func:`squashed_sample` with the noise held fixed.

    ``d_action`` is d loss / d action (same shape as action), ``d_logp`` is
    d loss / d log_prob (one value per sample). Returns gradients for the mean
    and the clamped log-std.
    """
    std = np.exp(log_std)
    d_logp = np.asarray(d_logp)[..., None]
    # d logp / du = 2 tanh(u); d action / du = 1 - tanh(u)^2
    d_u = d_action * (1.0 - action * action) + d_logp * (2.0 * action)
    d_mean = d_u
    d_log_std = d_u * std * noise - d_logp
    return d_mean, d_log_std


def squashed_log_density(mean, log_std, action, clip_eps: float = 1e-6):
    """Log-density of a given action under the squashed Gaussian.

    Actions are clipped into (-1 + clip_eps, 1 - clip_eps) before the inverse
    tanh. Returns ``(log_prob, z)`` with ``z`` the standardized pre-tanh value.
    """
    a = np.clip(action, -1.0 + clip_eps, 1.0 - clip_eps)
    u = np.arctanh(a)
    z = (u - mean) * np.exp(-log_std)
    logp = (-0.5 * z * z - log_std - _HALF_LOG_2PI - np.log1p(-a * a)).sum(axis=-1)
    return logp, z


def squashed_log_density_grads(log_std, z, d_logp):
    """Gradients of :func:`squashed_log_density` w.r.t. mean and log-std."""
    d_logp = np.asarray(d_logp)[..., None]
    d_mean = d_logp * z * np.exp(-log_std)
    d_log_std = d_logp * (z * z - 1.0)
    return d_mean, d_log_std


# Checkpoints

def _head_line(head: Head) -> str:
    if head.kind == "squashed_gaussian":
        return f"head squashed_gaussian {head.action_dim}"
    if head.kind == "bounded_tanh":
        return f"head bounded_tanh {head.scale!r}"
    return "head linear"


def save_network(net: Network, path) -> Path:
    path = Path(path)
    spec = net.spec
    lines = [
        HEADER,
        "widths " + " ".join(str(w) for w in spec.layer_widths),
        f"activation {spec.hidden_activation}",
        _head_line(spec.head),
        f"params {net.params.size}",
    ]
    lines.extend(repr(float(p)) for p in net.params)
    path.write_text("\n".join(lines) + "\n")
    return path


def _field(lines, idx, name):
    if idx >= len(lines):
        raise CheckpointError(f"missing field {name!r}")
    parts = lines[idx].split()
    if not parts or parts[0] != name:
        raise CheckpointError(f"expected field {name!r} on line {idx + 1}, got {lines[idx]!r}")
    return parts[1:]


def load_network(path) -> Network:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise CheckpointError(f"{path}: bad header, expected {HEADER!r}")
    try:
        widths = tuple(int(w) for w in _field(lines, 1, "widths"))
    except ValueError as exc:
        raise CheckpointError(f"{path}: malformed field 'widths'") from exc
    act = _field(lines, 2, "activation")
    head_parts = _field(lines, 3, "head")
    if not head_parts:
        raise CheckpointError(f"{path}: malformed field 'head'")
    try:
        if head_parts[0] == "squashed_gaussian":
            head = squashed_gaussian(int(head_parts[1]))
        elif head_parts[0] == "bounded_tanh":
            head = bounded_tanh(float(head_parts[1]))
        else:
            head = Head(head_parts[0])
        spec = MlpSpec(widths, act[0] if act else "", head)
    except (ValueError, IndexError) as exc:
        raise CheckpointError(f"{path}: malformed field 'head'/'activation': {exc}") from exc
    try:
        n = int(_field(lines, 4, "params")[0])
    except (ValueError, IndexError) as exc:
        raise CheckpointError(f"{path}: malformed field 'params'") from exc
    if n != spec.n_params():
        raise CheckpointError(
            f"{path}: field 'params' says {n} values but the spec needs {spec.n_params()}"
        )
    values = lines[5:5 + n]
    if len(values) != n:
        raise CheckpointError(f"{path}: field 'params' truncated ({len(values)} of {n} values)")
    net = Network(spec)
    try:
        net.params[...] = [float(v) for v in values]
    except ValueError as exc:
        raise CheckpointError(f"{path}: non-numeric value in field 'params'") from exc
    return net
