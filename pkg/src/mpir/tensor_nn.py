"""Fixed-architecture MLP with a hand-written reverse pass, plus Adam.

Everything runs in float64. The forward and backward passes broadcast over
leading axes, so the same code evaluates a single example ``(in,)``, a batch
``(B, in)`` or a stack of independent models ``(G, B, in)`` whose weights have
shape ``(G, in, out)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, TrainingError

LEAKY_SLOPE = 0.3
DEFAULT_HIDDEN = (8, 8)


def leaky_relu(z):
    # max(0.3 z, z)
    return np.maximum(z, LEAKY_SLOPE * z)


def leaky_relu_slope(z):
    return LEAKY_SLOPE + (1.0 - LEAKY_SLOPE) * (z > 0)


@dataclass
class MlpParams:
    """Weights and biases of a dense network.

    ``weights[i]`` has shape ``(..., fan_in, fan_out)`` and ``biases[i]`` has
    shape ``(..., fan_out)``. Hidden layers use the leaky rectifier, the output
    layer is linear.
    """

    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[-1] != b.shape[-1]:
                raise ShapeError(f"layer {i}: weight out-dim {w.shape[-1]} != bias dim {b.shape[-1]}")
            if i and w.shape[-2] != self.weights[i - 1].shape[-1]:
                raise ShapeError(f"layer {i}: fan-in {w.shape[-2]} does not chain")

    @property
    def widths(self):
        return [self.weights[0].shape[-2]] + [w.shape[-1] for w in self.weights]

    @property
    def input_dim(self):
        return self.weights[0].shape[-2]

    @property
    def output_dim(self):
        return self.weights[-1].shape[-1]

    def arrays(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def ravel(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_vector(self, vec):
        """Return a copy whose parameters are read from the flat ``vec``."""
        vec = np.asarray(vec, dtype=np.float64)
        need = sum(a.size for a in self.arrays())
        if vec.shape != (need,):
            raise ShapeError(f"vector has shape {vec.shape}, parameters need ({need},)")
        pos = 0
        arrays = []
        for a in self.arrays():
            arrays.append(vec[pos:pos + a.size].reshape(a.shape).copy())
            pos += a.size
        return MlpParams(arrays[0::2], arrays[1::2])

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_mlp(input_dim, output_dim, rng, hidden=DEFAULT_HIDDEN):
    """Glorot-uniform weights, zero biases."""
    widths = [int(input_dim), *map(int, hidden), int(output_dim)]
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _check_input(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.input_dim:
        raise ShapeError(f"input has {x.shape[-1]} features, network expects {params.input_dim}")
    return x


def _forward_cache(params, x):
    pre, post = [], [x]
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + np.expand_dims(b, -2)
        pre.append(z)
        h = z if i == last else leaky_relu(z)
        post.append(h)
    return pre, post


def mlp_forward(params, x):
    """Evaluate the network on ``x`` of shape ``(in,)`` or ``(..., B, in)``."""
    x = _check_input(params, x)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    _, post = _forward_cache(params, x)
    out = post[-1]
    return out[0] if single else out


def mlp_backward(params, x, upstream):
    """Gradients of ``<upstream, mlp_forward(params, x)>``.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` is an
    :class:`MlpParams` holding the gradient of every weight and bias and
    ``input_grad`` has the shape of ``x``. Batched inputs sum their
    contributions into the parameter gradients.
    """
    x = _check_input(params, x)
    upstream = np.asarray(upstream, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x, upstream = x[None, :], upstream[None, :]
    if upstream.shape[-1] != params.output_dim or upstream.shape[:-1] != x.shape[:-1]:
        raise ShapeError(f"upstream gradient shape {upstream.shape} does not match output")
    pre, post = _forward_cache(params, x)
    n_layers = len(params.weights)
    gw, gb = [None] * n_layers, [None] * n_layers
    delta = upstream
    for i in range(n_layers - 1, -1, -1):
        if i != n_layers - 1:
            delta = delta * leaky_relu_slope(pre[i])
        gw[i] = np.swapaxes(post[i], -1, -2) @ delta
        gb[i] = delta.sum(axis=-2)
        delta = delta @ np.swapaxes(params.weights[i], -1, -2)
    input_grad = delta[0] if single else delta
    return MlpParams(gw, gb), input_grad


@dataclass
class AdamState:
    """Moment estimates for Adam; ``m`` and ``v`` mirror the parameter arrays."""

    m: list
    v: list
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kwargs):
        arrays = _as_list(params)
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], **kwargs)


def _as_list(params):
    if isinstance(params, np.ndarray):
        return [params]
    if isinstance(params, MlpParams):
        return params.arrays()
    return list(params)


def _check_finite(grads):
    offset = 0
    for g in grads:
        if not math.isfinite(float(np.sum(g))):
            bad = np.flatnonzero(~np.isfinite(g))
            if bad.size:
                raise TrainingError(f"non-finite gradient at parameter index {offset + int(bad[0])}")
        offset += g.size


def adam_step(state, params, grads):
    """One bias-corrected Adam update, applied in place.

    ``params`` and ``grads`` may be a single array, a list of arrays or an
    :class:`MlpParams`. Returns ``(params, state)``; both are the objects that
    were passed in, updated.
    """
    p_list, g_list = _as_list(params), _as_list(grads)
    if len(p_list) != len(g_list) or len(p_list) != len(state.m):
        raise ShapeError("params, grads and Adam state disagree on array count")
    for p, g in zip(p_list, g_list):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
    _check_finite(g_list)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    # lr * m_hat / (sqrt(v_hat) + eps), rearranged so no array is rescaled
    corr2 = math.sqrt(1.0 - b2 ** state.t)
    step = state.lr * corr2 / (1.0 - b1 ** state.t)
    eps_hat = state.eps * corr2
    for p, g, m, v in zip(p_list, g_list, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= step * m / (np.sqrt(v) + eps_hat)
    return params, state
