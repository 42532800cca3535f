"""Fully-connected score network eps(x_t, t; theta) with exact reverse-mode gradients.

Parameters live in one flat float64 vector; per-layer weights and biases are
views into it, so the optimizer and the checkpoint writer see a single array.

Inference (:func:`forward`) runs through a row-wise kernel with a fixed
accumulation order, which makes each output row depend only on its own input
row: evaluating a batch gives bit-identical results to evaluating its
elements one at a time. Training (:func:`loss_and_grad`) uses BLAS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigError, ShapeError

ACTIVATIONS = ("silu", "relu")
SIGMA_FLOOR = 1e-4
MAX_FREQUENCY = 200.0


@numba.njit(cache=True)
def _affine_rowwise(x, W, b):
    n, k = x.shape
    m = W.shape[1]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = b[j]
        for p in range(k):
            xp = x[i, p]
            for j in range(m):
                out[i, j] += xp * W[p, j]
    return out


def _sigmoid(z):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z * _sigmoid(z)


def _act_grad(z, kind):
    if kind == "relu":
        return (z > 0).astype(np.float64)
    s = _sigmoid(z)
    return s * (1.0 + z * (1.0 - s))


@dataclass
class Network:
    """MLP over the concatenation [x, cond, time embedding]."""

    data_dim: int
    hidden: tuple[int, ...]
    time_embed_dim: int
    cond_dim: int = 0
    activation: str = "silu"
    params: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.params is None:
            self.params = np.zeros(self.n_params)
        if self.params.shape != (self.n_params,):
            raise ShapeError(f"expected {self.n_params} parameters, got {self.params.shape}")

    @property
    def layer_dims(self) -> list[int]:
        return [self.data_dim + self.cond_dim + self.time_embed_dim, *self.hidden, self.data_dim]

    @property
    def n_params(self) -> int:
        dims = self.layer_dims
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in zip(dims[:-1], dims[1:]))

    def layers(self, flat: np.ndarray | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views into ``flat`` (default: this network's parameters); W is (fan_in, fan_out)."""
        flat = self.params if flat is None else flat
        out, pos = [], 0
        dims = self.layer_dims
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            W = flat[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out)
            pos += fan_in * fan_out
            b = flat[pos : pos + fan_out]
            pos += fan_out
            out.append((W, b))
        return out

    def architecture(self) -> dict:
        return {
            "data_dim": self.data_dim,
            "hidden": list(self.hidden),
            "time_embed_dim": self.time_embed_dim,
            "cond_dim": self.cond_dim,
            "activation": self.activation,
        }

    def copy(self) -> "Network":
        return Network(self.data_dim, self.hidden, self.time_embed_dim, self.cond_dim, self.activation, self.params.copy())


@dataclass
class GradientBuffer:
    """Gradients laid out exactly like ``Network.params``."""

    flat: np.ndarray
    net: Network = field(repr=False)

    def layers(self):
        return self.net.layers(self.flat)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.flat, self.flat)))


def init_network(
    data_dim: int,
    hidden,
    *,
    time_embed_dim: int = 32,
    cond_dim: int = 0,
    activation: str = "silu",
    seed: int = 0,
) -> Network:
    """Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    hidden = tuple(hidden)
    if len(hidden) < 1:
        raise ConfigError("network needs at least one hidden layer")
    if data_dim < 1 or cond_dim < 0 or any(h < 1 for h in hidden):
        raise ConfigError(f"invalid layer sizes: data_dim={data_dim}, hidden={hidden}, cond_dim={cond_dim}")
    if time_embed_dim < 2 or time_embed_dim % 2:
        raise ConfigError(f"time_embed_dim must be a positive even integer, got {time_embed_dim}")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {activation!r}")
    net = Network(data_dim, hidden, time_embed_dim, cond_dim, activation)
    rng = np.random.default_rng(seed)
    for W, b in net.layers():
        bound = 1.0 / np.sqrt(W.shape[0])
        W[...] = rng.uniform(-bound, bound, size=W.shape)
        b[...] = 0.0
    return net


def time_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal features with geometrically spaced frequencies in [1, MAX_FREQUENCY]."""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = MAX_FREQUENCY ** (np.arange(half) / max(half - 1, 1))
    arg = t * freqs
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


def _inputs(net: Network, x, t, cond) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.data_dim:
        raise ShapeError(f"x must have shape (batch, {net.data_dim}), got {x.shape}")
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
    parts = [x]
    if net.cond_dim:
        if cond is None:
            raise ShapeError("conditional network called without cond")
        cond = np.asarray(cond, dtype=np.float64)
        if cond.shape != (x.shape[0], net.cond_dim):
            raise ShapeError(f"cond must have shape ({x.shape[0]}, {net.cond_dim}), got {cond.shape}")
        parts.append(cond)
    elif cond is not None:
        raise ShapeError("unconditional network called with cond")
    parts.append(time_embedding(t, net.time_embed_dim))
    return np.ascontiguousarray(np.concatenate(parts, axis=1))


def forward(net: Network, x, t, cond=None) -> np.ndarray:
    """Evaluate eps(x, t) for a batch; each row is computed independently of the others."""
    h = _inputs(net, x, t, cond)
    layers = net.layers()
    for i, (W, b) in enumerate(layers):
        h = _affine_rowwise(h, np.ascontiguousarray(W), np.ascontiguousarray(b))
        if i < len(layers) - 1:
            h = _act(h, net.activation)
    return h


def loss_and_grad(net: Network, x_t, target, t, cond=None) -> tuple[float, GradientBuffer]:
    """Mean squared error between eps(x_t, t) and ``target`` and its exact gradient.

    The mean runs over both batch and data dimensions.
    """
    target = np.asarray(target, dtype=np.float64)
    h = _inputs(net, x_t, t, cond)
    if target.shape != (h.shape[0], net.data_dim):
        raise ShapeError(f"target must have shape {(h.shape[0], net.data_dim)}, got {target.shape}")
    layers = net.layers()
    acts, pre = [h], []
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        if i < len(layers) - 1:
            pre.append(z)
            h = _act(z, net.activation)
            acts.append(h)
        else:
            h = z
    resid = h - target
    loss = float(np.mean(resid * resid))

    grad = np.empty_like(net.params)
    grad_layers = net.layers(grad)
    delta = 2.0 * resid / resid.size
    for i in range(len(layers) - 1, -1, -1):
        gW, gb = grad_layers[i]
        gW[...] = acts[i].T @ delta
        gb[...] = delta.sum(axis=0)
        if i:
            delta = (delta @ layers[i][0].T) * _act_grad(pre[i - 1], net.activation)
    return loss, GradientBuffer(grad, net)


def predict_x0(x_t, eps_pred, sigma_fwd):
    """Invert the regression target (x_t - x0) / sigma: x0 = x_t - sigma * eps."""
    s = np.asarray(sigma_fwd, dtype=np.float64)
    s = s if s.ndim == 0 else s.reshape(-1, 1)
    return np.asarray(x_t, dtype=np.float64) - s * np.asarray(eps_pred, dtype=np.float64)


def eps_scale(sigma2_fwd):
    """Floored sigma used in the regression target, keeping it bounded near t = 0."""
    return np.maximum(np.sqrt(np.asarray(sigma2_fwd, dtype=np.float64)), SIGMA_FLOOR)


def precondition_forward(net: Network, coeffs, x_t, t, cond=None) -> np.ndarray:
    """x0 prediction under input/skip/output scaling: c_skip x_t - c_out eps(c_in x_t, t)."""
    col = lambda v: np.asarray(v, dtype=np.float64) if np.ndim(v) == 0 else np.asarray(v, dtype=np.float64).reshape(-1, 1)
    x_t = np.asarray(x_t, dtype=np.float64)
    out = forward(net, col(coeffs.c_in) * x_t, t, cond)
    return col(coeffs.c_skip) * x_t - col(coeffs.c_out) * out
