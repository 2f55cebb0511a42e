"""Ranking metrics against ground truth and the benchmark grid runner."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from . import baselines, synth
from .discovery import RunConfig, infer_matrix, prepare_dataset
from .errors import DataError, MpirError

METHODS = ("mpir",) + baselines.BASELINE_METHODS
PAPER_SEEDS = (0, 30, 60, 90, 120, 150, 180, 210, 240, 270)


class UndefinedMetricError(DataError):
    """Labels contain a single class, so the ranking metric is undefined."""


def off_diagonal(matrix):
    """Entries with ``j != i`` in row-major order."""
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataError(f"expected a square matrix, got shape {m.shape}")
    return m[~np.eye(m.shape[0], dtype=bool)]


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    if s.shape != y.shape:
        raise DataError(f"{s.size} scores for {y.size} labels")
    if not np.all(np.isfinite(s)):
        raise DataError("scores must be finite")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise UndefinedMetricError("need at least one positive and one negative label")
    return s, y, n_pos


def auc_roc(scores, labels):
    """Area under the ROC curve with tied scores counted as half-correct.

    Equals the Mann-Whitney statistic ``U / (n_pos * n_neg)``.
    """
    s, y, n_pos = _check(scores, labels)
    n_neg = y.size - n_pos
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_pr(scores, labels):
    """Average precision ``sum_k (R_k - R_{k-1}) * P_k``.

    Thresholds sweep the distinct scores in descending order, so tied scores
    enter together.
    """
    s, y, n_pos = _check(scores, labels)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]  # end of every tie group
    tp = np.cumsum(y)[last]
    precision = tp / (last + 1.0)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


@dataclass
class BenchmarkConfig:
    """Data-generation settings and per-method options for a benchmark grid."""

    n_rollouts: int = 500
    length: int = 22
    horizon: int = 3
    mpir: RunConfig = field(default_factory=RunConfig)
    random_count: int = 10000

    def to_dict(self):
        return {"n_rollouts": self.n_rollouts, "length": self.length, "horizon": self.horizon,
                "random_count": self.random_count, "mpir": self.mpir.to_dict()}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        mpir = RunConfig.from_dict(d.pop("mpir", {}))
        return cls(mpir=mpir, **d)


@dataclass
class BenchmarkResult:
    """One row per (method, N, seed) cell plus per-cell wall times.

    ``rows`` hold only deterministic values; ``timings`` is kept apart so
    documents built from ``rows`` are reproducible byte for byte.
    """

    rows: list
    timings: list

    def aggregate(self):
        """Mean and population std of both AUCs per (method, N)."""
        groups = {}
        for r in self.rows:
            groups.setdefault((r["method"], r["n"]), []).append(r)
        out = []
        for (method, n), rows in sorted(groups.items()):
            ok = [r for r in rows if r["status"] == "ok"]
            entry = {"method": method, "n": n, "cells": len(rows), "ok": len(ok)}
            for key in ("auc_pr", "auc_roc"):
                vals = np.array([r[key] for r in ok])
                entry[f"{key}_mean"] = float(vals.mean()) if ok else None
                entry[f"{key}_std"] = float(vals.std()) if ok else None
            out.append(entry)
        return out


def graph_and_bundle(n, seed, config):
    """Ground-truth graph and rollouts for one benchmark cell."""
    graph_ss, data_ss = np.random.SeedSequence([seed, n]).spawn(2)
    graph = synth.sample_graph(n, config.horizon, 1, np.random.default_rng(graph_ss))
    bundle = synth.generate(graph, config.n_rollouts, config.length, np.random.default_rng(data_ss))
    return graph, bundle


def score_method(method, bundle, config, seed):
    """Score matrix of ``method`` on ``bundle`` (list of matrices for the random scorer)."""
    if method == "mpir":
        return [infer_matrix(bundle, replace(config.mpir, seed=seed, horizon=config.horizon)).main]
    if method == "gaussian_random":
        mats = baselines.gaussian_random_score(bundle.n_series, config.random_count, np.random.default_rng([seed, 6]))
        return [m.scores for m in mats]
    run = replace(config.mpir, seed=seed, horizon=config.horizon, augment=False)
    dataset = prepare_dataset(bundle, run)
    if method in baselines.NEEDS_CONFIG:
        return [baselines.NEEDS_CONFIG[method](dataset, run).scores]
    if method in baselines.SCORERS:
        return [baselines.SCORERS[method](dataset).scores]
    raise MpirError(f"unknown method {method!r}")


def run_benchmark(methods, n_list, seeds, config=None, scorers=None):
    """Evaluate every method on every (N, seed) dataset.

    ``scorers`` maps extra method names to ``fn(bundle, config, seed)``
    returning a list of ``N x N`` score matrices. Failures inside a cell are
    recorded in its row and do not stop the grid. For ``gaussian_random`` the
    row reports the mean over all drawn matrices.
    """
    config = config or BenchmarkConfig()
    scorers = scorers or {}
    unknown = [m for m in methods if m not in METHODS and m not in scorers]
    if unknown:
        raise MpirError(f"unknown methods: {', '.join(unknown)}")
    rows, timings = [], []
    for n in n_list:
        for seed in seeds:
            graph, bundle = graph_and_bundle(n, seed, config)
            labels = off_diagonal(graph.indicator)
            for method in methods:
                row = {"method": method, "n": int(n), "seed": int(seed), "status": "ok", "message": "",
                       "auc_pr": None, "auc_roc": None}
                start = time.perf_counter()
                try:
                    if method in scorers:
                        mats = scorers[method](bundle, config, seed)
                    else:
                        mats = score_method(method, bundle, config, seed)
                    pr = [auc_pr(off_diagonal(m), labels) for m in mats]
                    roc = [auc_roc(off_diagonal(m), labels) for m in mats]
                    row["auc_pr"], row["auc_roc"] = float(np.mean(pr)), float(np.mean(roc))
                except UndefinedMetricError as exc:
                    row.update(status="undefined", message=str(exc))
                except (MpirError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
                    row.update(status="error", message=f"{type(exc).__name__}: {exc}")
                rows.append(row)
                timings.append({"method": method, "n": int(n), "seed": int(seed),
                                "seconds": time.perf_counter() - start})
    return BenchmarkResult(rows, timings)
