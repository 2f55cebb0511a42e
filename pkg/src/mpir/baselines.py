"""Comparison scorers producing an ``N x N`` matrix ``A[j, i]`` (``j -> i``).

Every scorer takes a :class:`~mpir.discovery.WindowedDataset`; fake inputs,
if present, are ignored. Scores only need to rank candidate edges, so their
scales differ between methods.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .info_estimators import knn_kl_divergence, ksg_conditional_mi, ksg_mutual_information

RIDGE_FALLBACK = 1e-8
KERNEL_FEATURE_CAP = 5000
TE_DIM_WARNING = 20


class EstimatorDimensionWarning(UserWarning):
    """The conditioning or joint space is too large for reliable k-NN estimates."""


@dataclass
class ScoreMatrix:
    scores: np.ndarray
    method: str
    names: list
    valid: np.ndarray | None = None
    flags: list = field(default_factory=list)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.valid is None:
            self.valid = np.isfinite(self.scores)

    @property
    def n_series(self):
        return self.scores.shape[0]


def _windows(dataset):
    """Real-series windows ``(E, N, L)`` and targets ``(E, N, M)``."""
    n = dataset.n_series
    X = dataset.inputs[:, :n].reshape(dataset.n_examples, n, -1)
    return X, dataset.targets[:, :n]


def _others(X, j):
    return np.delete(X, j, axis=1).reshape(X.shape[0], -1)


def mutual_information_score(dataset, k=5):
    """``A[j, i] = I(X_j window; x_i)`` for ``j < i``, mirrored to ``A[i, j]``.

    The diagonal holds ``I(X_i window; x_i)``.
    """
    X, Y = _windows(dataset)
    n = dataset.n_series
    A = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            A[j, i] = A[i, j] = ksg_mutual_information(X[:, j], Y[:, i], k)
    return ScoreMatrix(A, "mutual_information", dataset.names[:n])


def transfer_entropy_score(dataset, k=3):
    """``A[j, i] = I(X_j; x_i | windows of every other series)``."""
    X, Y = _windows(dataset)
    n = dataset.n_series
    flags = []
    cond_dim = (n - 1) * X.shape[2]
    if cond_dim > TE_DIM_WARNING:
        msg = f"conditioning dimension {cond_dim} exceeds {TE_DIM_WARNING}; transfer entropy is unreliable"
        warnings.warn(msg, EstimatorDimensionWarning, stacklevel=2)
        flags.append(msg)
    A = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            A[j, i] = ksg_conditional_mi(X[:, j], Y[:, i], _others(X, j), k)
    return ScoreMatrix(A, "transfer_entropy", dataset.names[:n], flags=flags)


def _rss(design, y, flags, what):
    design = np.hstack([np.ones((design.shape[0], 1)), design])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        flags.append(f"{what}: rank-deficient design, ridge {RIDGE_FALLBACK:g} fallback")
        gram = design.T @ design + RIDGE_FALLBACK * np.eye(design.shape[1])
        coef = np.linalg.solve(gram, design.T @ y)
    resid = y - design @ coef
    return float(np.sum(resid * resid))


def _granger(features, Y, method, names, flags=None):
    """Log ratio of restricted to full residual sums, per (source, target)."""
    n = len(features)
    flags = [] if flags is None else flags
    A = np.zeros((n, n))
    full = np.hstack(features)
    for i in range(n):
        rss_full = _rss(full, Y[:, i], flags, f"target {i} full")
        for j in range(n):
            rest = np.hstack([f for s, f in enumerate(features) if s != j]) if n > 1 else full[:, :0]
            rss_rest = _rss(rest, Y[:, i], flags, f"target {i} without {j}")
            A[j, i] = math.log(rss_rest / rss_full) if rss_full > 0 else math.inf
    return ScoreMatrix(A, method, names, flags=flags)


def linear_granger_score(dataset):
    """``A[j, i] = log(RSS without series j / RSS with all series)``, OLS with intercept."""
    X, Y = _windows(dataset)
    return _granger([X[:, j] for j in range(dataset.n_series)], Y, "linear_granger",
                    dataset.names[:dataset.n_series])


def _zscore(a):
    sd = a.std(axis=0)
    return (a - a.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def polynomial_features(blocks, degree=2):
    """Monomials of degree 1..``degree`` over the concatenated blocks.

    Returns one feature block per input block: block ``j`` holds every
    monomial that involves at least one coordinate of block ``j``, so
    dropping it removes exactly the features series ``j`` takes part in.
    Cross terms involving several series are assigned to every block they
    involve and appear once in the full design.
    """
    if degree not in (1, 2):
        raise ConfigError("polynomial degree must be 1 or 2")
    owners = np.concatenate([np.full(b.shape[1], s) for s, b in enumerate(blocks)])
    Z = np.hstack(blocks)
    cols, col_owners = [Z[:, c] for c in range(Z.shape[1])], [{int(o)} for o in owners]
    if degree == 2:
        for a in range(Z.shape[1]):
            for b in range(a, Z.shape[1]):
                cols.append(Z[:, a] * Z[:, b])
                col_owners.append({int(owners[a]), int(owners[b])})
    return np.stack(cols, axis=1), col_owners


def kernel_granger_score(dataset, degree=2, ridge=1e-6):
    """Granger index in the feature space of the kernel ``(1 + x.y)**degree``.

    Inputs are z-scored per coordinate. For every pair the restricted model
    drops all monomials involving series ``j``; the score is the log ratio of
    ridge-regularized residual sums.
    """
    X, Y = _windows(dataset)
    n = dataset.n_series
    blocks = [_zscore(X[:, j]) for j in range(n)]
    feats, owners = polynomial_features(blocks, degree)
    flags = []
    if feats.shape[1] > KERNEL_FEATURE_CAP:
        flags.append(f"{feats.shape[1]} features exceed the cap of {KERNEL_FEATURE_CAP}")
        return ScoreMatrix(np.full((n, n), np.nan), "kernel_granger", dataset.names[:n],
                           valid=np.zeros((n, n), bool), flags=flags)
    design = np.hstack([np.ones((feats.shape[0], 1)), feats])
    gram = design.T @ design
    pen = ridge * feats.shape[0] * np.eye(design.shape[1])
    pen[0, 0] = 0.0
    A = np.zeros((n, n))
    Yc = Y.reshape(Y.shape[0], n, -1)

    def rss(cols, y):
        G = gram[np.ix_(cols, cols)] + pen[np.ix_(cols, cols)]
        coef = np.linalg.solve(G, design[:, cols].T @ y)
        r = y - design[:, cols] @ coef
        return float(np.sum(r * r))

    all_cols = np.arange(design.shape[1])
    for i in range(n):
        y = Yc[:, i]
        full = rss(all_cols, y)
        for j in range(n):
            keep = np.array([0] + [c + 1 for c, o in enumerate(owners) if j not in o])
            A[j, i] = math.log(rss(keep, y) / full)
    return ScoreMatrix(A, "kernel_granger", dataset.names[:n], flags=flags)


EN_L1_RATIOS = (0.5, 0.8, 0.9, 0.95, 0.99)
EN_ALPHAS = np.geomspace(1e-4, 10 ** -0.5, 200)


def elastic_net_score(dataset, l1_ratios=EN_L1_RATIOS, alphas=EN_ALPHAS, n_splits=5, tol=1e-10, max_iter=10000):
    """Sum of absolute elastic-net coefficients over each source's window.

    The penalty is chosen per target by mean out-of-fold ``R**2`` over
    expanding-window time-series splits, then the model is refit on all
    examples.
    """
    from sklearn.exceptions import ConvergenceWarning
    from sklearn.linear_model import ElasticNet, enet_path
    from sklearn.model_selection import TimeSeriesSplit

    X, Y = _windows(dataset)
    n, L = dataset.n_series, X.shape[2]
    flat = X.reshape(X.shape[0], -1)
    alphas = np.sort(np.asarray(alphas, dtype=np.float64))[::-1]
    splits = list(TimeSeriesSplit(n_splits=n_splits).split(flat))
    A = np.zeros((n, n))
    flags = []
    for i in range(n):
        y = Y[:, i, :].reshape(len(Y), -1)
        if y.shape[1] != 1:
            raise ConfigError("elastic net scoring supports one-dimensional targets only")
        y = y[:, 0]
        if np.all(y == y[0]):
            continue
        best = (-np.inf, None, None)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConvergenceWarning)
            for l1 in l1_ratios:
                r2 = np.zeros(len(alphas))
                for tr, va in splits:
                    xm, ym = flat[tr].mean(axis=0), y[tr].mean()
                    _, coefs, _ = enet_path(flat[tr] - xm, y[tr] - ym, l1_ratio=l1, alphas=alphas, tol=tol,
                                            max_iter=max_iter)
                    pred = (flat[va] - xm) @ coefs + ym  # (n_va, n_alphas)
                    ss = np.sum((y[va] - y[va].mean()) ** 2)
                    r2 += 1.0 - np.sum((y[va][:, None] - pred) ** 2, axis=0) / max(ss, 1e-300)
                k = int(np.argmax(r2))
                if r2[k] > best[0]:
                    best = (r2[k], l1, alphas[k])
            model = ElasticNet(alpha=best[2], l1_ratio=best[1], tol=tol, max_iter=max_iter).fit(flat, y)
        if any(issubclass(w.category, ConvergenceWarning) for w in caught):
            flags.append(f"target {i}: coordinate descent did not reach tol {tol:g}")
        A[:, i] = np.abs(model.coef_).reshape(n, L).sum(axis=1)
    return ScoreMatrix(A, "elastic_net", dataset.names[:n], flags=flags)


def causal_influence_score(dataset, config, k=5, seed=None):
    """KL divergence between observed and ``j``-cut joint samples.

    A noise-free MLP of the same architecture is trained per target on the
    training split. The examples are then split in two halves: ``P`` pairs
    the windows of the first half with the observed targets; ``Q`` pairs the
    windows of the second half with predictions made after replacing series
    ``j`` by an example-permuted copy, plus the model residual of the
    unmodified example. ``A[j, i] = KL(P || Q)``.
    """
    from dataclasses import replace as dc_replace

    from .discovery import train_targets

    data = dataset.real_only()
    n = data.n_series
    seed = config.seed if seed is None else int(seed)
    cfg = dc_replace(config, seed=seed)
    flags = []
    joint_dim = n * data.window_size + data.dim
    if joint_dim > TE_DIM_WARNING:
        msg = f"joint dimension {joint_dim} exceeds {TE_DIM_WARNING}; k-NN divergence is unreliable"
        warnings.warn(msg, EstimatorDimensionWarning, stacklevel=2)
        flags.append(msg)
    fits = train_targets(data, range(n), cfg, corrupt=False)
    flat = data.flat_inputs()
    E, L = data.n_examples, data.window_size
    rng = np.random.default_rng([seed, 5])
    order = rng.permutation(E)
    half_a, half_b = order[:E // 2], order[E // 2:]
    xs = _zscore(flat)
    A = np.zeros((n, n))
    for i, fit in enumerate(fits):
        y = data.targets[:, i]
        mu, sd = y.mean(axis=0), np.where(y.std(axis=0) > 0, y.std(axis=0), 1.0)
        ys = (y - mu) / sd
        resid = y - fit.predict(flat)
        P = np.hstack([xs[half_a], ys[half_a]])
        for j in range(n):
            cut = flat[half_b].copy()
            cut[:, j * L:(j + 1) * L] = flat[rng.permutation(E)[:half_b.size], j * L:(j + 1) * L]
            y_cut = fit.predict(cut) + resid[half_b]
            Q = np.hstack([xs[half_b], (y_cut - mu) / sd])
            A[j, i] = knn_kl_divergence(P, Q, k)
    return ScoreMatrix(A, "causal_influence", data.names[:n], flags=flags)


def gaussian_random_score(n, count=10000, rng=None, names=None):
    """``count`` matrices of i.i.d. standard normal scores."""
    rng = np.random.default_rng(rng)
    names = names or [f"x{i + 1}" for i in range(n)]
    draws = rng.standard_normal((count, n, n))
    return [ScoreMatrix(d, "gaussian_random", names) for d in draws]


SCORERS = {
    "mutual_information": mutual_information_score,
    "transfer_entropy": transfer_entropy_score,
    "linear_granger": linear_granger_score,
    "kernel_granger": kernel_granger_score,
    "elastic_net": elastic_net_score,
}
NEEDS_CONFIG = {"causal_influence": causal_influence_score}
BASELINE_METHODS = tuple(SCORERS) + tuple(NEEDS_CONFIG) + ("gaussian_random",)
