"""k-nearest-neighbor estimators of mutual information and KL divergence.

All neighbor searches use the maximum (Chebyshev) norm through a k-d tree,
so a call costs ``O(n log n)``. Estimates are in nats and are reported
unclipped, so small negative values are ordinary estimator noise.
"""
from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from .errors import DataError, ShapeError

JITTER_SCALE = 1e-10
SMALL_SAMPLE = 50


class NearDeterministicWarning(UserWarning):
    """The estimate exceeds ``ln(n)/2``: the variables look functionally related."""


class SmallSampleWarning(UserWarning):
    pass


def as_cloud(points, name="cloud"):
    """Validate a sample cloud and return it as an ``(n, d)`` float array."""
    a = np.asarray(points, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ShapeError(f"{name} must be (n,) or (n, d), got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name} contains non-finite values")
    return a


def _dejitter(a, seed=0):
    """Perturb repeated rows by ``1e-10`` times the column scale.

    Only rows that repeat an earlier row move, so clouds without duplicates
    pass through untouched.
    """
    if a.shape[0] < 2 or a.shape[1] == 0:
        return a
    _, first = np.unique(a, axis=0, return_index=True)
    if first.size == a.shape[0]:
        return a
    dup = np.ones(a.shape[0], dtype=bool)
    dup[first] = False
    scale = np.where(a.std(axis=0) > 0, a.std(axis=0), np.maximum(np.abs(a).max(axis=0), 1.0))
    rng = np.random.default_rng(seed)
    a = a.copy()
    a[dup] += JITTER_SCALE * scale * rng.standard_normal((int(dup.sum()), a.shape[1]))
    return a


class NeighborIndex:
    """Immutable k-d tree over a cloud under the Chebyshev norm."""

    def __init__(self, points):
        self.points = as_cloud(points)
        self.tree = cKDTree(self.points)

    @property
    def n(self):
        return self.points.shape[0]

    def kth_distance(self, k, queries=None):
        """Distance to the k-th neighbor.

        Without ``queries`` the indexed points query themselves and the point
        itself is skipped.
        """
        if queries is None:
            d, _ = self.tree.query(self.points, k=[k + 1], p=np.inf)
        else:
            d, _ = self.tree.query(as_cloud(queries), k=[k], p=np.inf)
        return d[:, 0]

    def count_within(self, radii, exclude_self=True):
        """Points strictly closer than ``radii[i]`` to point ``i``."""
        r = np.nextafter(radii, 0.0)
        counts = self.tree.query_ball_point(self.points, r, p=np.inf, return_length=True)
        return counts - 1 if exclude_self else counts


def _check_pair(x, y, k):
    x, y = as_cloud(x, "x"), as_cloud(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"clouds have {x.shape[0]} and {y.shape[0]} samples")
    n = x.shape[0]
    if n <= k:
        raise DataError(f"need more than k={k} samples, got {n}")
    if n < SMALL_SAMPLE:
        warnings.warn(f"{n} samples is below {SMALL_SAMPLE}; estimate is unreliable", SmallSampleWarning,
                      stacklevel=3)
    return x, y, n


def _mean_digamma(counts):
    return math.fsum(digamma(counts + 1.0)) / counts.size


def _flag(value, n):
    if value > 0.5 * math.log(n):
        warnings.warn(f"estimate {value:.3f} nats exceeds ln(n)/2; variables look near-deterministic",
                      NearDeterministicWarning, stacklevel=3)
    return value


def ksg_mutual_information(x, y, k=5):
    """Kraskov-Stoegbauer-Grassberger estimate of ``I(X; Y)`` (first variant).

    Parameters
    ----------
    x, y : array_like, shape (n,) or (n, d)
        Paired samples.
    k : int
        Neighbor order in the joint space.

    Returns
    -------
    float
        ``psi(k) + psi(n) - <psi(n_x + 1) + psi(n_y + 1)>`` in nats.
    """
    x, y, n = _check_pair(x, y, k)
    x, y = _dejitter(x, 1), _dejitter(y, 2)
    eps = NeighborIndex(np.hstack([x, y])).kth_distance(k)
    nx = NeighborIndex(x).count_within(eps)
    ny = NeighborIndex(y).count_within(eps)
    value = digamma(k) + digamma(n) - _mean_digamma(nx) - _mean_digamma(ny)
    return _flag(float(value), n)


def ksg_conditional_mi(x, y, z, k=3):
    """KSG-style estimate of ``I(X; Y | Z)``.

    Counts are taken in the ``(x, z)``, ``(y, z)`` and ``z`` subspaces inside
    the joint k-th neighbor radius. An empty ``z`` (zero columns) gives
    :func:`ksg_mutual_information` with the same ``k``.
    """
    x, y, n = _check_pair(x, y, k)
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0:
        return ksg_mutual_information(x, y, k)
    z = as_cloud(z, "z")
    if z.shape[0] != n:
        raise ShapeError(f"z has {z.shape[0]} samples, x and y have {n}")
    x, y, z = _dejitter(x, 1), _dejitter(y, 2), _dejitter(z, 3)
    eps = NeighborIndex(np.hstack([x, y, z])).kth_distance(k)
    nxz = NeighborIndex(np.hstack([x, z])).count_within(eps)
    nyz = NeighborIndex(np.hstack([y, z])).count_within(eps)
    nz = NeighborIndex(z).count_within(eps)
    value = digamma(k) - _mean_digamma(nxz) - _mean_digamma(nyz) + _mean_digamma(nz)
    return _flag(float(value), n)


def knn_kl_divergence(p, q, k=5):
    """Wang-Kulkarni-Verdu k-NN estimate of ``KL(P || Q)``.

    ``(d/n) * sum_i log(nu_k(i) / rho_k(i)) + log(m / (n - 1))`` where
    ``rho_k(i)`` is the distance from ``p_i`` to its k-th neighbor in ``P``
    and ``nu_k(i)`` the distance to its k-th neighbor in ``Q``.
    """
    p, q = as_cloud(p, "p"), as_cloud(q, "q")
    if p.shape[1] != q.shape[1]:
        raise ShapeError(f"dimension mismatch: {p.shape[1]} vs {q.shape[1]}")
    n, m, d = p.shape[0], q.shape[0], p.shape[1]
    if n <= k or m < k:
        raise DataError(f"need more than k={k} samples in both clouds")
    p, q = _dejitter(p, 4), _dejitter(q, 5)
    rho = NeighborIndex(p).kth_distance(k)
    nu = NeighborIndex(q).kth_distance(k, queries=p)
    if np.any(nu == 0):
        # a P sample coincides with Q samples; nudge the queries off them
        nu = NeighborIndex(q).kth_distance(k, queries=p + JITTER_SCALE * np.maximum(p.std(axis=0), 1.0))
    return float(d * math.fsum(np.log(nu / rho)) / n + math.log(m / (n - 1)))
