"""Synthetic systems with known directional structure.

The benchmark generator draws a causal tensor ``A`` (each ``A[j, i]`` block
is zero with probability 1/2, otherwise log-normal magnitudes with random
signs) and a mixing tensor ``B ~ U[-1, 1]``, then rolls out

    x_t[i] = softplus( sum_j sum_k A[j, i, k] * tanh(B[j, k] * X_{t-1}[j, k]) ) + u_t

over many short independent trajectories. Small probe systems with a single
planted relation are provided for tests and demos.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericalError


@dataclass
class GroundTruthGraph:
    """Causal tensor ``A`` (N, N, K, M), mixing tensor ``B`` (N, K, M) and the
    0-1 indicator ``indicator[j, i] = any(A[j, i] != 0)``."""

    A: np.ndarray
    B: np.ndarray | None
    indicator: np.ndarray

    @classmethod
    def from_tensor(cls, A, B=None):
        A = np.asarray(A, dtype=np.float64)
        indicator = np.abs(A).reshape(A.shape[0], A.shape[1], -1).max(axis=-1) > 0
        return cls(A, None if B is None else np.asarray(B, dtype=np.float64), indicator)

    @property
    def n_series(self):
        return self.A.shape[0]


@dataclass
class TimeSeriesBundle:
    """``N`` observed series split into one or more independent segments.

    Every segment is an array of shape ``(T_r, N, M)``. Windows never cross
    segment boundaries.
    """

    segments: list
    names: list
    graph: GroundTruthGraph | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.segments = [np.asarray(s, dtype=np.float64) for s in self.segments]
        if not self.segments:
            raise DataError("bundle has no segments")
        n, m = self.segments[0].shape[1:]
        for r, seg in enumerate(self.segments):
            if seg.ndim != 3 or seg.shape[1:] != (n, m):
                raise DataError(f"segment {r} has shape {seg.shape}, expected (T, {n}, {m})")
            if not np.all(np.isfinite(seg)):
                raise DataError(f"segment {r} contains non-finite values")
        if len(self.names) != n:
            raise DataError(f"{len(self.names)} names for {n} series")
        self.names = [str(x) for x in self.names]

    @property
    def n_series(self):
        return self.segments[0].shape[1]

    @property
    def dim(self):
        return self.segments[0].shape[2]

    @property
    def lengths(self):
        return [s.shape[0] for s in self.segments]

    def stacked(self):
        """All time steps of all segments, shape ``(sum T_r, N, M)``."""
        return np.concatenate(self.segments, axis=0)

    def map_series(self, j, fn):
        """Copy of the bundle with ``fn`` applied to every value of series ``j``."""
        segs = []
        for s in self.segments:
            s = s.copy()
            s[:, j] = fn(s[:, j])
            segs.append(s)
        return TimeSeriesBundle(segs, list(self.names), self.graph, dict(self.metadata))


def default_names(n):
    return [f"x{i + 1}" for i in range(n)]


def sample_graph(n, k=3, m=1, rng=None, lognormal_mean=0.0, lognormal_sigma=1.0, p_edge=0.5):
    """Draw ``A``, ``B`` for the softplus/tanh benchmark system."""
    if n < 2:
        raise ConfigError("need at least two series")
    rng = np.random.default_rng(rng)
    present = rng.random((n, n)) < p_edge
    magnitude = rng.lognormal(lognormal_mean, lognormal_sigma, size=(n, n, k, m))
    sign = rng.choice([-1.0, 1.0], size=(n, n, k, m))
    A = np.where(present[:, :, None, None], magnitude * sign, 0.0)
    B = rng.uniform(-1.0, 1.0, size=(n, k, m))
    return GroundTruthGraph(A, B, present.copy())


def softplus(x):
    return np.logaddexp(0.0, x)


def generate(graph, n_series=500, length=22, rng=None, h1=softplus, h2=np.tanh):
    """Roll out ``n_series`` independent trajectories of ``length`` steps.

    The first ``K`` steps of each trajectory are standard normal. All
    trajectories advance together, so one generator drives the whole bundle.
    """
    rng = np.random.default_rng(rng)
    A, B = graph.A, graph.B
    n, _, k, m = A.shape
    if length < k + 1:
        raise ConfigError(f"length {length} leaves no step after the initial {k}")
    x = np.empty((n_series, length, n, m))
    x[:, :k] = rng.standard_normal((n_series, k, n, m))
    for t in range(k, length):
        window = np.moveaxis(x[:, t - k:t], 1, 2)  # (R, N, K, M)
        drive = np.einsum("rjkm,jikm->rim", h2(B[None] * window), A)
        x[:, t] = h1(drive) + rng.standard_normal((n_series, n, m))
        if not np.all(np.isfinite(x[:, t])):
            raise NumericalError(f"non-finite state at step {t}")
    meta = {"generator": "softplus-tanh", "n_rollouts": n_series, "length": length}
    return TimeSeriesBundle(list(x), default_names(n), graph, meta)


PROBE_KINDS = ("independent-pair", "copy-pair", "linear-chain-3", "gaussian-linear-appendixD", "quadratic-pair")


def _lag_graph(n, k, edges):
    A = np.zeros((n, n, k, 1))
    for (j, i), coef in edges.items():
        A[j, i, k - 1, 0] = coef  # most recent lag sits last in the window
    return GroundTruthGraph.from_tensor(A)


def make_probe_system(kind, length=2000, rng=None, k=3, noise=0.1, sigma_x=1.0, omega_x=2.0, omega_y=1.0):
    """Small systems with one or two planted lag-1 relations.

    ``independent-pair``
        two white-noise series.
    ``copy-pair``
        ``x2_t = x1_{t-1} + noise * u``.
    ``linear-chain-3``
        ``x2_t = x1_{t-1} + u``, ``x3_t = x2_{t-1} + u``.
    ``gaussian-linear-appendixD``
        ``x1 = sqrt(sigma_x) u1``, ``x2_t = x1_{t-1} + sqrt(omega_x) u2``,
        ``x3_t = x2_{t-1} + sqrt(omega_y) u3``.
    ``quadratic-pair``
        ``x2_t = x1_{t-1}**2 + u``; invisible to linear methods.
    """
    rng = np.random.default_rng(rng)
    T = int(length)
    if kind == "independent-pair":
        x = rng.standard_normal((T, 2))
        graph = _lag_graph(2, k, {})
    elif kind == "copy-pair":
        x = rng.standard_normal((T, 2))
        x[1:, 1] = x[:-1, 0] + noise * x[1:, 1]
        graph = _lag_graph(2, k, {(0, 1): 1.0})
    elif kind == "quadratic-pair":
        x = rng.standard_normal((T, 2))
        x[1:, 1] = x[:-1, 0] ** 2 + x[1:, 1]
        graph = _lag_graph(2, k, {(0, 1): 1.0})
    elif kind == "linear-chain-3":
        u = rng.standard_normal((T, 3))
        x = u.copy()
        x[1:, 1] = x[:-1, 0] + u[1:, 1]
        x[1:, 2] = x[:-1, 1] + u[1:, 2]
        graph = _lag_graph(3, k, {(0, 1): 1.0, (1, 2): 1.0})
    elif kind == "gaussian-linear-appendixD":
        u = rng.standard_normal((T, 3))
        x = np.empty((T, 3))
        x[:, 0] = np.sqrt(sigma_x) * u[:, 0]
        x[0, 1] = np.sqrt(sigma_x + omega_x) * u[0, 1]
        x[1:, 1] = x[:-1, 0] + np.sqrt(omega_x) * u[1:, 1]
        x[0, 2] = np.sqrt(sigma_x + omega_x + omega_y) * u[0, 2]
        x[1:, 2] = x[:-1, 1] + np.sqrt(omega_y) * u[1:, 2]
        graph = _lag_graph(3, k, {(0, 1): 1.0, (1, 2): 1.0})
    else:
        raise ConfigError(f"unknown probe kind {kind!r}; choose from {', '.join(PROBE_KINDS)}")
    names = default_names(x.shape[1])
    return TimeSeriesBundle([x[:, :, None]], names, graph, {"generator": kind, "length": T})
