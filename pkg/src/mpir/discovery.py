"""Directional relation discovery with minimum predictive information.

For every target series ``i`` a small MLP predicts ``x_t[i]`` from the
noise-corrupted windows of all series and is trained on

    mean ||x_t[i] - f(X_{t-1} + eta * eps)||**2  +  lam * sum_j bound_j(eta_j)

where ``bound_j`` is the Gaussian-channel bound from :mod:`mpir.noise_channel`.
At the end of training ``bound_j`` is the predictive strength ``W[j, i]``.
Example-permuted copies of real series ("fake" series) are appended to the
inputs; they are independent of every target and their strengths give a null
distribution for thresholding.

Training runs targets in lockstep groups: the models of a group share the
minibatch order and the noise draw, which turns the first layer into a single
wide matrix product. Each model still optimizes only its own objective.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError, EmptyWindowError, ShapeError, TrainingError
from .noise_channel import LOG_CHI_FLOOR, NoiseAmplitudes, mi_upper_bound
from .tensor_nn import AdamState, MlpParams, adam_step, init_mlp, leaky_relu, leaky_relu_slope, mlp_forward

_STREAM_INIT = 1
_STREAM_TRAIN = 2
_STREAM_AUGMENT = 3
_STREAM_LAMBDA = 4


def default_fake_count(n):
    return max(2, math.ceil(n / 2))


@dataclass
class RunConfig:
    """Hyperparameters of one discovery run.

    ``n_fake=None`` applies the default rule ``max(2, ceil(N/2))``.
    ``group_size`` bounds how many targets are trained in lockstep.
    """

    lam: float = 0.002
    eta0: float = 0.01
    n_fake: int | None = None
    alpha: float = 0.05
    epochs: int = 30000
    warmup: int = 400
    batch_size: int = 256
    learning_rate: float = 1e-4
    hidden: tuple = (8, 8)
    horizon: int = 3
    seed: int = 0
    per_entry_noise: bool = False
    augment: bool = True
    test_fraction: float = 0.1
    group_size: int = 16

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self):
        if not self.lam > 0:
            raise ConfigError("lam must be positive")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0 <= self.warmup < self.epochs:
            raise ConfigError("warmup must be smaller than epochs")
        if self.eta0 <= 0 or self.learning_rate <= 0 or self.batch_size < 1:
            raise ConfigError("eta0, learning_rate and batch_size must be positive")
        if self.horizon < 1 or not self.hidden or min(self.hidden) < 1:
            raise ConfigError("horizon and hidden widths must be positive")
        if not 0 <= self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in [0, 1)")
        if self.n_fake is not None and self.n_fake < 0:
            raise ConfigError("n_fake must be non-negative")

    def fake_count(self, n):
        return default_fake_count(n) if self.n_fake is None else self.n_fake

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**known)


@dataclass
class WindowedDataset:
    """Supervised pairs ``(X_{t-1}, x_t)``.

    ``inputs`` has shape ``(E, P, K, M)`` where the first ``n_series`` of the
    ``P`` inputs are the real series and the rest are fake copies;
    ``targets`` has shape ``(E, N, M)``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    names: list
    n_series: int
    segment: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    fake_sources: list = field(default_factory=list)

    @property
    def n_examples(self):
        return self.inputs.shape[0]

    @property
    def n_inputs(self):
        return self.inputs.shape[1]

    @property
    def n_fake(self):
        return self.inputs.shape[1] - self.n_series

    @property
    def horizon(self):
        return self.inputs.shape[2]

    @property
    def dim(self):
        return self.inputs.shape[3]

    @property
    def window_size(self):
        return self.inputs.shape[2] * self.inputs.shape[3]

    def flat_inputs(self):
        return self.inputs.reshape(self.n_examples, -1)

    def real_only(self):
        """The dataset without fake inputs."""
        return replace(self, inputs=self.inputs[:, :self.n_series], names=self.names[:self.n_series],
                       fake_sources=[])


def windowize(bundle, horizon, test_fraction=0.1):
    """Cut every segment into stride-1 windows of ``horizon`` steps.

    The last ``test_fraction`` of the examples (in segment/time order) form the
    test split, so held-out examples never share a window with training ones
    within the same segment except at a single boundary.
    """
    k = int(horizon)
    inputs, targets, segment = [], [], []
    for r, seg in enumerate(bundle.segments):
        T = seg.shape[0]
        if T <= k:
            raise EmptyWindowError(f"segment {r} has {T} steps, needs more than horizon {k}")
        win = np.lib.stride_tricks.sliding_window_view(seg[:-1], k, axis=0)  # (T-k, N, M, K)
        inputs.append(np.moveaxis(win, -1, 2))
        targets.append(seg[k:])
        segment.append(np.full(T - k, r))
    inputs = np.ascontiguousarray(np.concatenate(inputs))
    targets = np.ascontiguousarray(np.concatenate(targets))
    n = inputs.shape[0]
    n_test = int(round(n * test_fraction))
    order = np.arange(n)
    return WindowedDataset(inputs, targets, list(bundle.names), bundle.n_series, np.concatenate(segment),
                           order[:n - n_test], order[n - n_test:])


def make_fake_series(dataset, n_fake, rng):
    """Append ``n_fake`` example-permuted copies of randomly chosen series."""
    if dataset.n_fake:
        raise ConfigError("dataset is already augmented")
    if n_fake < 1:
        raise ConfigError("need at least one fake series")
    if n_fake > dataset.n_series:
        raise ConfigError(f"cannot draw {n_fake} fake series from {dataset.n_series} real ones")
    rng = np.random.default_rng(rng)
    sources = rng.choice(dataset.n_series, size=n_fake, replace=False)
    fakes = [dataset.inputs[rng.permutation(dataset.n_examples), src] for src in sources]
    inputs = np.concatenate([dataset.inputs, np.stack(fakes, axis=1)], axis=1)
    names = dataset.names + [f"fake{s + 1}({dataset.names[src]})" for s, src in enumerate(sources)]
    return replace(dataset, inputs=inputs, names=names, fake_sources=[int(s) for s in sources])


def _standardize(values, rows, what):
    mean = values[rows].mean(axis=0)
    std = values[rows].std(axis=0)
    if np.any(std <= 0):
        bad = np.unravel_index(int(np.argmin(std)), std.shape)
        raise DataError(f"{what} entry {bad} is constant on the training split")
    return mean, std


@dataclass
class TargetFit:
    """Trained predictor and noise state for one target series.

    ``params`` act on standardized flattened windows and produce standardized
    targets; :meth:`predict` applies the conversion.
    """

    target: int
    params: MlpParams
    amps: NoiseAmplitudes | None
    loss_trace: np.ndarray
    train_mse: float
    test_mse: float
    input_mean: np.ndarray
    input_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray

    def predict(self, flat_inputs, standardized_output=False):
        z = (np.asarray(flat_inputs, dtype=np.float64) - self.input_mean) / self.input_std
        out = mlp_forward(self.params, z)
        return out if standardized_output else out * self.target_std + self.target_mean


class GroupTrainer:
    """Lockstep trainer for a group of targets on one dataset.

    All trainable arrays live in the flat vector ``theta`` (gradients in
    ``grad``); the named attributes are views into it. Layer 0 is stored as
    ``(D, G, H)`` so the whole group shares one matrix product; deeper layers
    are stored per model and scattered into block-diagonal matrices.
    """

    def __init__(self, dataset, targets, config, seed=None, corrupt=True):
        self.dataset = dataset
        self.targets = [int(t) for t in targets]
        if not self.targets:
            raise ConfigError("no targets to train")
        for t in self.targets:
            if not 0 <= t < dataset.targets.shape[1]:
                raise ConfigError(f"target {t} out of range")
        if dataset.train_idx.size == 0:
            raise DataError("empty training split")
        self.config = config
        self.seed = config.seed if seed is None else int(seed)
        self.corrupt = corrupt
        G = len(self.targets)
        P, L, M = dataset.n_inputs, dataset.window_size, dataset.dim
        D = P * L
        self.G, self.P, self.L, self.M, self.D = G, P, L, M, D

        flat = dataset.flat_inputs()
        self.input_mean, self.input_std = _standardize(flat, dataset.train_idx, "input")
        self.xs = np.ascontiguousarray((flat - self.input_mean) / self.input_std)
        y = dataset.targets[:, self.targets]  # (E, G, M)
        self.target_mean, self.target_std = _standardize(y, dataset.train_idx, "target")
        self.ys = np.ascontiguousarray(((y - self.target_mean) / self.target_std).reshape(len(y), G * M))

        widths = [D, *config.hidden, M]
        self.widths = widths
        shapes = [("W0", (D, G, widths[1])), ("b0", (G * widths[1],))]
        for l in range(1, len(widths) - 1):
            shapes += [(f"W{l}", (G, widths[l], widths[l + 1])), (f"b{l}", (G * widths[l + 1],))]
        if corrupt:
            shapes.append(("log_chi", (G, P, L) if config.per_entry_noise else (G, P)))
        sizes = [int(np.prod(s)) for _, s in shapes]
        self.theta = np.zeros(sum(sizes))
        self.grad = np.zeros_like(self.theta)
        self.views, self.grad_views = {}, {}
        pos = 0
        for (name, shape), size in zip(shapes, sizes):
            self.views[name] = self.theta[pos:pos + size].reshape(shape)
            self.grad_views[name] = self.grad[pos:pos + size].reshape(shape)
            pos += size
        self.n_layers = len(widths) - 1

        self._blocks, self._block_idx = {}, {}
        for l in range(1, self.n_layers):
            a, b = widths[l], widths[l + 1]
            g, i, j = np.meshgrid(np.arange(G), np.arange(a), np.arange(b), indexing="ij")
            self._block_idx[l] = ((g * a + i) * (G * b) + g * b + j).ravel()
            self._blocks[l] = np.zeros((G * a, G * b))

        for g, t in enumerate(self.targets):
            init = init_mlp(D, M, np.random.default_rng([self.seed, _STREAM_INIT, t]), config.hidden)
            self.views["W0"][:, g, :] = init.weights[0]
            for l in range(1, self.n_layers):
                self.views[f"W{l}"][g] = init.weights[l]
        if corrupt:
            self.views["log_chi"][...] = math.log(config.eta0)
        self.adam = AdamState.zeros_like(self.theta, lr=config.learning_rate)
        self.loss_trace = None

    # -- objective -------------------------------------------------------
    def _chi_entries(self):
        """Relative noise amplitude for every flattened input entry, (G, D)."""
        log_chi = np.maximum(self.views["log_chi"], LOG_CHI_FLOOR)
        chi = np.exp(log_chi)
        if chi.ndim == 2:
            chi = np.repeat(chi, self.L, axis=1)
        return chi.reshape(self.G, self.D)

    def bound(self):
        """Per-model, per-input bound contributions, shape (G, P)."""
        log_chi = np.maximum(self.views["log_chi"], LOG_CHI_FLOOR)
        per = 0.5 * np.log1p(np.exp(-2.0 * log_chi))
        return per.sum(axis=-1) if per.ndim == 3 else self.L * per

    def _bound_grad(self):
        chi2 = np.exp(2.0 * np.maximum(self.views["log_chi"], LOG_CHI_FLOOR))
        g = -1.0 / (chi2 + 1.0)
        return g if g.ndim == 3 else self.L * g

    def _block(self, l):
        blk = self._blocks[l]
        blk.flat[self._block_idx[l]] = self.views[f"W{l}"].ravel()
        return blk

    def objective(self, idx, eps=None, lam=0.0):
        """Loss of every model on examples ``idx``; fills ``self.grad``.

        ``eps`` has shape ``(len(idx), D)`` and is shared by the group. The
        returned array holds ``mse_g + lam * bound_g`` per model.
        """
        v, gv = self.views, self.grad_views
        G, D = self.G, self.D
        x = self.xs[idx]
        y = self.ys[idx]
        B = x.shape[0]
        H0 = self.widths[1]
        W0 = v["W0"]
        W0c = W0.reshape(D, G * H0)
        z = x @ W0c
        if self.corrupt:
            chi = self._chi_entries()  # (G, D)
            Wn = (chi.T[:, :, None] * W0).reshape(D, G * H0)
            z += eps @ Wn
        z += v["b0"]
        pre, acts = [z], [x]
        h = z
        for l in range(1, self.n_layers):
            h = leaky_relu(h)
            acts.append(h)
            h = h @ self._block(l) + v[f"b{l}"]
            pre.append(h)
        r = h - y
        sq = (r * r).reshape(B, G, self.M).sum(axis=(0, 2)) / B
        delta = (2.0 / B) * r
        for l in range(self.n_layers - 1, 0, -1):
            gblk = acts[l].T @ delta
            gv[f"W{l}"][...] = gblk.ravel()[self._block_idx[l]].reshape(gv[f"W{l}"].shape)
            gv[f"b{l}"][...] = delta.sum(axis=0)
            delta = (delta @ self._blocks[l].T) * leaky_relu_slope(pre[l - 1])
        gv["b0"][...] = delta.sum(axis=0)
        gx = (x.T @ delta).reshape(D, G, H0)
        if self.corrupt:
            ge = (eps.T @ delta).reshape(D, G, H0)
            gv["W0"][...] = gx + chi.T[:, :, None] * ge
            # d loss / d log_chi = sum over entries of (d loss / d eta) * eta
            g_eta = np.einsum("dgh,dgh->gd", W0, ge) * chi
            g_eta = g_eta.reshape(gv["log_chi"].shape[:2] + (self.L,))
            g_log = g_eta if gv["log_chi"].ndim == 3 else g_eta.sum(axis=-1)
            loss = sq
            if lam:
                g_log = g_log + lam * self._bound_grad()
                loss = sq + lam * self.bound().sum(axis=1)
            gv["log_chi"][...] = g_log
            return loss
        gv["W0"][...] = gx
        return sq

    # -- training --------------------------------------------------------
    def fit(self, epochs=None):
        cfg = self.config
        epochs = cfg.epochs if epochs is None else int(epochs)
        rng = np.random.default_rng([self.seed, _STREAM_TRAIN])
        train = self.dataset.train_idx
        n = train.size
        bs = min(cfg.batch_size, n)
        trace = np.empty((epochs, self.G))
        has_chi = self.corrupt
        for epoch in range(epochs):
            lam = 0.0 if epoch < cfg.warmup else cfg.lam
            order = train[rng.permutation(n)]
            total = np.zeros(self.G)
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                eps = rng.standard_normal((idx.size, self.D)) if has_chi else None
                total += idx.size * self.objective(idx, eps, lam)
                try:
                    adam_step(self.adam, self.theta, self.grad)
                except TrainingError as exc:
                    raise TrainingError(f"epoch {epoch}: {exc}") from exc
                if has_chi:
                    np.maximum(self.views["log_chi"], LOG_CHI_FLOOR, out=self.views["log_chi"])
            trace[epoch] = total / n
            if not np.all(np.isfinite(trace[epoch])):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
        self.loss_trace = trace
        return self

    # -- results ---------------------------------------------------------
    def model(self, g):
        """Standalone :class:`MlpParams` of model ``g`` (standardized units)."""
        v = self.views
        weights = [v["W0"][:, g, :].copy()]
        biases = [v["b0"].reshape(self.G, -1)[g].copy()]
        for l in range(1, self.n_layers):
            weights.append(v[f"W{l}"][g].copy())
            biases.append(v[f"b{l}"].reshape(self.G, -1)[g].copy())
        return MlpParams(weights, biases)

    def amplitudes(self, g):
        if not self.corrupt:
            return None
        std = self.input_std.reshape(self.P, self.L)
        return NoiseAmplitudes(self.views["log_chi"][g].copy(), std)

    def _mse(self, g, rows):
        if rows.size == 0:
            return float("nan")
        out = mlp_forward(self.model(g), self.xs[rows])
        y = self.ys[rows].reshape(rows.size, self.G, self.M)[:, g]
        return float(np.mean(np.sum((out - y) ** 2, axis=-1)))

    def results(self):
        fits = []
        M = self.M
        for g, t in enumerate(self.targets):
            trace = self.loss_trace[:, g].copy() if self.loss_trace is not None else np.empty(0)
            fits.append(TargetFit(
                t, self.model(g), self.amplitudes(g), trace,
                self._mse(g, self.dataset.train_idx), self._mse(g, self.dataset.test_idx),
                self.input_mean, self.input_std,
                self.target_mean[g].reshape(M), self.target_std[g].reshape(M),
            ))
        return fits


def train_targets(dataset, targets, config, seed=None, corrupt=True):
    """Train the given targets in lockstep groups of ``config.group_size``."""
    targets = list(targets)
    fits = []
    for start in range(0, len(targets), max(1, config.group_size)):
        chunk = targets[start:start + config.group_size]
        fits.extend(GroupTrainer(dataset, chunk, config, seed, corrupt).fit().results())
    return fits


def train_target(dataset, target, config, seed=None):
    """Train the regularized predictor of one target series.

    Minibatch order and noise come from the stream of ``seed`` (default
    ``config.seed``) and the initialization from ``(seed, target)``, so the
    result matches the corresponding column of :func:`infer_matrix`.
    """
    return train_targets(dataset, [target], config, seed)[0]


def predictive_strength(amps):
    """Strength column ``W[:, i]`` in nats and the floor-clamp flags."""
    bound = mi_upper_bound(amps)
    return bound.contributions, bound.capped


@dataclass
class StrengthMatrix:
    """``W[j, i]``: strength of input ``j`` for predicting target ``i``.

    Rows ``0..N-1`` are the real series, rows ``N..N+S-1`` the fake ones.
    """

    raw: np.ndarray
    input_names: list
    target_names: list
    n_series: int
    capped: np.ndarray
    threshold: float | None = None
    thresholded: np.ndarray | None = None
    test_mse: np.ndarray | None = None
    fits: list = field(default_factory=list, repr=False)

    @property
    def n_fake(self):
        return self.raw.shape[0] - self.n_series

    @property
    def main(self):
        return self.raw[:self.n_series]

    @property
    def fake(self):
        return self.raw[self.n_series:]


def strength_from_fits(dataset, fits):
    fits = sorted(fits, key=lambda f: f.target)
    cols, caps = zip(*(predictive_strength(f.amps) for f in fits))
    return StrengthMatrix(
        np.stack(cols, axis=1), list(dataset.names), [dataset.names[f.target] for f in fits],
        dataset.n_series, np.stack(caps, axis=1), test_mse=np.array([f.test_mse for f in fits]), fits=fits,
    )


def prepare_dataset(bundle, config):
    dataset = windowize(bundle, config.horizon, config.test_fraction)
    if config.augment:
        n_fake = config.fake_count(dataset.n_series)
        if n_fake:
            dataset = make_fake_series(dataset, n_fake, np.random.default_rng([config.seed, _STREAM_AUGMENT]))
    return dataset


def infer_matrix(bundle, config):
    """Windowize, augment, train every target and assemble ``W``."""
    dataset = prepare_dataset(bundle, config)
    fits = train_targets(dataset, range(dataset.n_series), config)
    return strength_from_fits(dataset, fits)


def significance_threshold(W, alpha=0.05):
    """Zero the real entries not strictly above the ``1-alpha`` fake quantile."""
    if W.n_fake < 1:
        raise ConfigError("significance threshold needs at least one fake series")
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    threshold = float(np.quantile(W.fake.ravel(), 1.0 - alpha, method="linear"))
    main = W.main
    return replace(W, threshold=threshold, thresholded=np.where(main > threshold, main, 0.0))


@dataclass
class LambdaSelection:
    chosen: float | None
    accepted: list
    diagnostics: list

    @property
    def valid(self):
        return self.chosen is not None


def lambda_criterion(v_to_w, x_to_w, n_sigma=4.0):
    """Gaussian separation test between null and planted strengths.

    Accepts when ``mean(v_to_w) + n_sigma * std(v_to_w)`` lies strictly below
    ``mean(x_to_w) - n_sigma * std(x_to_w)`` (population standard deviations).
    """
    v, x = np.asarray(v_to_w, dtype=np.float64), np.asarray(x_to_w, dtype=np.float64)
    mv, sv, mx, sx = float(v.mean()), float(v.std()), float(x.mean()), float(x.std())
    return {"v_to_w_mean": mv, "v_to_w_std": sv, "x_to_w_mean": mx, "x_to_w_std": sx,
            "accepted": bool(mv + n_sigma * sv < mx - n_sigma * sx)}


def select_lambda(bundle, candidates, config):
    """Pick the largest ``lam`` that separates known-causal from known-null.

    ``ceil(N/2)`` permuted inputs ``v`` and ``ceil(N/2)`` constructed targets
    ``w_i = X_i . Q`` (``Q`` a fixed random projection of a window) are added.
    A candidate is accepted when the Gaussian fitted to the ``v -> w``
    strengths, shifted up by 4 sigma, stays below the Gaussian of the
    ``X_i -> w_i`` strengths shifted down by 4 sigma.
    """
    candidates = [float(c) for c in candidates]
    if not candidates:
        raise ConfigError("no candidate values")
    if any(b <= a for a, b in zip(candidates, candidates[1:])):
        raise ConfigError("candidates must be strictly ascending")
    base = windowize(bundle, config.horizon, config.test_fraction)
    n = base.n_series
    if n < 2:
        raise ConfigError("lambda selection needs at least two series")
    half = math.ceil(n / 2)
    rng = np.random.default_rng([config.seed, _STREAM_LAMBDA])
    dataset = make_fake_series(base, half, rng)
    sources = rng.choice(n, size=half, replace=False)
    Q = rng.standard_normal((base.window_size, base.dim))
    w = base.inputs[:, sources].reshape(base.n_examples, half, -1) @ Q  # (E, half, M)
    dataset = replace(dataset, targets=np.concatenate([base.targets, w], axis=1),
                      names=dataset.names[:n] + [f"v{s + 1}" for s in range(half)])
    w_targets = list(range(n, n + half))
    diagnostics, accepted = [], []
    for lam in candidates:
        cfg = replace(config, lam=lam)
        fits = train_targets(dataset, w_targets, cfg)
        W = np.stack([predictive_strength(f.amps)[0] for f in fits], axis=1)  # (n + half, half)
        diag = lambda_criterion(W[n:].ravel(), W[sources, np.arange(half)])
        diagnostics.append({"lam": lam, **diag})
        if diag["accepted"]:
            accepted.append(lam)
    return LambdaSelection(max(accepted) if accepted else None, accepted, diagnostics)


def fit_linear_fixed_noise(inputs, target, eta):
    """Linear predictor minimizing the noise-averaged squared error.

    With ``x_tilde = x + eta * eps`` and ``f(x) = x @ beta`` the expectation
    over ``eps`` adds ``sum(beta**2 * eta**2)`` to the empirical MSE, so the
    minimizer solves ``(X'X/n + diag(eta**2)) beta = X'y/n``. No intercept.
    """
    X = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    eta = np.broadcast_to(np.asarray(eta, dtype=np.float64), X.shape[1:])
    if X.ndim != 2 or y.shape[0] != X.shape[0]:
        raise ShapeError("inputs must be (n, d) with one target per row")
    n = X.shape[0]
    return np.linalg.solve(X.T @ X / n + np.diag(eta ** 2), X.T @ y / n)
