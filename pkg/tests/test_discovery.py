import math
from dataclasses import replace

import numpy as np
import pytest

from mpir import discovery, synth
from mpir.discovery import (GroupTrainer, RunConfig, StrengthMatrix, default_fake_count, infer_matrix,
                            lambda_criterion, make_fake_series, prepare_dataset, significance_threshold,
                            train_target, train_targets, windowize)
from mpir.errors import ConfigError, DataError, EmptyWindowError

from conftest import bundle_from, copy_with_bystander

FAST = dict(epochs=150, warmup=20, learning_rate=1e-2, batch_size=256)


def test_window_counts():
    b = bundle_from(np.random.default_rng(0).normal(size=(22, 1)))
    assert windowize(b, 3).n_examples == 19
    b = bundle_from(np.zeros((4, 2)) + np.arange(4)[:, None])
    assert windowize(b, 3).n_examples == 1
    segs = [np.random.default_rng(s).normal(size=(22, 2, 1)) for s in range(500)]
    assert windowize(synth.TimeSeriesBundle(segs, ["a", "b"]), 3).n_examples == 9500


def test_window_contents_and_split():
    x = np.arange(20.0).reshape(10, 2)
    ds = windowize(bundle_from(x), 3, test_fraction=0.1)
    # example e: window rows e..e+2, target row e+3
    np.testing.assert_array_equal(ds.inputs[2, 1, :, 0], x[2:5, 1])
    np.testing.assert_array_equal(ds.targets[2, :, 0], x[5])
    assert ds.train_idx.tolist() == list(range(6)) and ds.test_idx.tolist() == [6]


def test_windows_never_cross_segments():
    a = np.zeros((5, 1, 1))
    b = np.ones((5, 1, 1))
    ds = windowize(synth.TimeSeriesBundle([a, b], ["x"]), 3)
    assert ds.n_examples == 4
    for e in range(4):
        vals = np.r_[ds.inputs[e].ravel(), ds.targets[e].ravel()]
        assert len(set(vals)) == 1


def test_window_too_short():
    with pytest.raises(EmptyWindowError, match="segment 1"):
        windowize(synth.TimeSeriesBundle([np.zeros((5, 1, 1)), np.zeros((3, 1, 1))], ["x"]), 3)


def test_fake_series_preserve_multiset(rng):
    ds = windowize(bundle_from(rng.normal(size=(300, 4))), 3)
    aug = make_fake_series(ds, 2, np.random.default_rng(1))
    assert aug.n_fake == 2 and aug.n_inputs == 6
    for s, src in enumerate(aug.fake_sources):
        fake = aug.inputs[:, 4 + s]
        assert not np.array_equal(fake, ds.inputs[:, src])
        np.testing.assert_array_equal(np.sort(fake, axis=0), np.sort(ds.inputs[:, src], axis=0))
        # whole windows move together
        rows = {tuple(r) for r in ds.inputs[:, src].reshape(ds.n_examples, -1)}
        assert all(tuple(r) in rows for r in fake.reshape(ds.n_examples, -1))
    assert aug.names[4].startswith("fake1(")


def test_fake_series_deterministic(rng):
    ds = windowize(bundle_from(rng.normal(size=(100, 3))), 3)
    a = make_fake_series(ds, 2, np.random.default_rng(9))
    b = make_fake_series(ds, 2, np.random.default_rng(9))
    assert np.array_equal(a.inputs, b.inputs)


def test_fake_series_errors(rng):
    ds = windowize(bundle_from(rng.normal(size=(100, 3))), 3)
    with pytest.raises(ConfigError):
        make_fake_series(ds, 4, rng)
    with pytest.raises(ConfigError):
        make_fake_series(ds, 0, rng)
    with pytest.raises(ConfigError):
        make_fake_series(make_fake_series(ds, 1, rng), 1, rng)


def test_default_fake_rule():
    assert default_fake_count(3) == 2
    assert default_fake_count(10) == 5
    assert default_fake_count(2) == 2
    assert default_fake_count(7) == 4
    assert RunConfig(n_fake=1).fake_count(10) == 1


def test_config_defaults_and_validation():
    c = RunConfig()
    assert (c.lam, c.eta0, c.alpha, c.epochs, c.warmup, c.learning_rate, tuple(c.hidden)) == \
        (0.002, 0.01, 0.05, 30000, 400, 1e-4, (8, 8))
    for bad in (dict(lam=0), dict(alpha=1.0), dict(warmup=10, epochs=10), dict(eta0=-1), dict(hidden=(0,))):
        with pytest.raises(ConfigError):
            RunConfig(**bad)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"lamda": 0.1})
    assert RunConfig.from_dict(RunConfig(lam=0.01).to_dict()) == RunConfig(lam=0.01)


def test_threshold_all_zero_fakes():
    raw = np.array([[0.0, 0.3], [1e-9, 0.0], [0.0, 0.0], [0.0, 0.0]])
    W = significance_threshold(StrengthMatrix(raw, list("abcd"), list("ab"), 2, raw > 1), 0.05)
    assert W.threshold == 0.0
    np.testing.assert_array_equal(W.thresholded, raw[:2])


def test_threshold_linear_quantile():
    fake = np.arange(1.0, 21.0).reshape(10, 2)
    main = np.array([[19.05, 19.06], [0.0, 25.0]])
    raw = np.vstack([main, fake])
    W = significance_threshold(StrengthMatrix(raw, [str(i) for i in range(12)], ["a", "b"], 2,
                                              np.zeros_like(raw, dtype=bool)), 0.05)
    assert W.threshold == pytest.approx(19.05, abs=1e-12)
    # equality goes to the null
    W = replace(W, raw=np.vstack([np.array([[W.threshold, 19.06], [0, 25]]), fake]))
    W = significance_threshold(W, 0.05)
    assert W.thresholded.tolist() == [[0.0, 19.06], [0.0, 25.0]]


def test_threshold_needs_fakes():
    raw = np.ones((2, 2))
    with pytest.raises(ConfigError):
        significance_threshold(StrengthMatrix(raw, ["a", "b"], ["a", "b"], 2, raw > 1))


def small_dataset(seed=0, n=4, length=60, augment=True, **cfg):
    rng = np.random.default_rng(seed)
    config = RunConfig(seed=seed, augment=augment, **cfg)
    return prepare_dataset(bundle_from(rng.normal(size=(length, n))), config), config


@pytest.mark.parametrize("per_entry", [False, True])
def test_objective_gradient_matches_finite_differences(per_entry):
    ds, cfg = small_dataset(n=3, per_entry_noise=per_entry)
    trainer = GroupTrainer(ds, [0, 2], cfg)
    rng = np.random.default_rng(1)
    trainer.theta[...] = rng.normal(scale=0.5, size=trainer.theta.size)
    idx = ds.train_idx[:20]
    eps = rng.standard_normal((idx.size, trainer.D))
    lam = 0.3
    trainer.objective(idx, eps, lam)
    analytic = trainer.grad.copy()
    h = 1e-5
    theta = trainer.theta.copy()
    for k in range(theta.size):
        trainer.theta[...] = theta
        trainer.theta[k] += h
        up = trainer.objective(idx, eps, lam).sum()
        trainer.theta[k] -= 2 * h
        down = trainer.objective(idx, eps, lam).sum()
        fd = (up - down) / (2 * h)
        assert abs(analytic[k] - fd) <= 1e-5 * max(abs(fd), 1e-4), k


def test_warmup_has_no_bound_gradient():
    ds, cfg = small_dataset()
    trainer = GroupTrainer(ds, [1], cfg)
    idx = ds.train_idx[:16]
    trainer.objective(idx, np.zeros((16, trainer.D)), lam=0.0)
    # with eps = 0 and no information term nothing reaches log_chi
    assert np.all(trainer.grad_views["log_chi"] == 0)
    trainer.objective(idx, np.zeros((16, trainer.D)), lam=0.5)
    np.testing.assert_allclose(trainer.grad_views["log_chi"], 0.5 * trainer._bound_grad())


def test_group_member_matches_single_model():
    ds, cfg = small_dataset(epochs=30, warmup=5, learning_rate=1e-2)
    group = train_targets(ds, [0, 1, 2, 3], cfg)
    single = train_target(ds, 2, cfg)
    np.testing.assert_allclose(single.amps.log_chi, group[2].amps.log_chi, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(single.params.ravel(), group[2].params.ravel(), rtol=1e-9, atol=1e-12)


def test_chunked_groups_match_one_group():
    ds, cfg = small_dataset(epochs=20, warmup=5, learning_rate=1e-2)
    a = train_targets(ds, range(4), cfg)
    b = train_targets(ds, range(4), replace(cfg, group_size=3))
    for fa, fb in zip(a, b):
        np.testing.assert_allclose(fa.amps.log_chi, fb.amps.log_chi, rtol=1e-9, atol=1e-12)


def test_trainer_errors():
    ds, cfg = small_dataset()
    with pytest.raises(ConfigError):
        GroupTrainer(ds, [], cfg)
    with pytest.raises(ConfigError):
        GroupTrainer(ds, [7], cfg)
    x = np.random.default_rng(0).normal(size=(30, 2))
    x[:, 1] = 1.0
    with pytest.raises(DataError):
        infer_matrix(bundle_from(x), RunConfig(epochs=5, warmup=1))


def test_unregularized_fit_reaches_least_squares():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1500, 3))
    x[1:, 2] = 0.8 * x[:-1, 0] - 0.5 * x[:-1, 1] + 0.3 * x[1:, 2]
    cfg = RunConfig(epochs=300, warmup=1, learning_rate=3e-3, augment=False)
    ds = prepare_dataset(bundle_from(x), cfg)
    fit = train_targets(ds, [2], cfg, corrupt=False)[0]
    tr = ds.train_idx
    X = np.c_[np.ones(tr.size), ds.flat_inputs()[tr]]
    y = ds.targets[tr, 2, 0]
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    ols = np.mean((y - X @ beta) ** 2) / fit.target_std[0] ** 2
    assert fit.train_mse <= 1.05 * ols


def test_predict_undoes_standardization():
    ds, cfg = small_dataset(epochs=10, warmup=2)
    fit = train_target(ds, 0, cfg)
    flat = ds.flat_inputs()
    z = fit.predict(flat, standardized_output=True)
    np.testing.assert_allclose(fit.predict(flat), z * fit.target_std + fit.target_mean)


def test_determinism_and_non_negativity():
    b = copy_with_bystander(0, length=300)
    cfg = RunConfig(seed=3, **FAST)
    W1, W2 = infer_matrix(b, cfg), infer_matrix(b, cfg)
    assert np.array_equal(W1.raw, W2.raw)
    assert np.all(W1.raw >= 0)
    assert W1.raw.shape == (5, 3)
    W3 = infer_matrix(b, replace(cfg, seed=4))
    assert not np.array_equal(W1.raw, W3.raw)


def test_predictive_strength_plug_in_and_cap():
    from mpir.noise_channel import NoiseAmplitudes
    w, cap = discovery.predictive_strength(NoiseAmplitudes(np.array([0.0, -40.0]), np.ones((2, 3))))
    assert w[0] == pytest.approx(1.0397, abs=1e-4)
    assert cap.tolist() == [False, True]


def test_copy_edge_beats_fakes():
    forward = backward = 0
    for seed in range(5):
        bundle = synth.make_probe_system("copy-pair", 1200, np.random.default_rng(seed))
        W = infer_matrix(bundle, RunConfig(seed=seed, epochs=400, warmup=40, learning_rate=1e-2))
        forward += int(W.raw[0, 1] > W.fake.max())
        backward += int(W.raw[1, 0] <= W.fake.max())
    assert forward == 5
    assert backward >= 4


def test_independent_pair_below_threshold():
    hits = 0
    for seed in range(3):
        bundle = synth.make_probe_system("independent-pair", 1200, np.random.default_rng(seed))
        W = significance_threshold(infer_matrix(bundle, RunConfig(seed=seed, **FAST)))
        hits += int(W.thresholded[0, 1] == 0 and W.thresholded[1, 0] == 0)
    assert hits >= 2


def test_lambda_criterion():
    ok = lambda_criterion(np.array([0.01, 0.02, 0.015]), np.array([5.0, 5.1, 4.9]))
    assert ok["accepted"]
    bad = lambda_criterion(np.array([0.01, 4.0, 0.015]), np.array([5.0, 5.1, 4.9]))
    assert not bad["accepted"]


def test_select_lambda_returns_single_accepted(monkeypatch):
    calls = []

    def fake_criterion(v, x, n_sigma=4.0):
        calls.append(len(calls))
        return {"accepted": len(calls) == 1}

    monkeypatch.setattr(discovery, "lambda_criterion", fake_criterion)
    b = copy_with_bystander(0, length=120)
    sel = discovery.select_lambda(b, [0.001, 0.01], RunConfig(epochs=3, warmup=1))
    assert sel.chosen == 0.001 and sel.accepted == [0.001] and sel.valid


def test_select_lambda_none_accepted(monkeypatch):
    monkeypatch.setattr(discovery, "lambda_criterion", lambda v, x, n_sigma=4.0: {"accepted": False})
    b = copy_with_bystander(0, length=120)
    sel = discovery.select_lambda(b, [0.001, 0.01], RunConfig(epochs=3, warmup=1))
    assert sel.chosen is None and not sel.valid
    assert len(sel.diagnostics) == 2


def test_select_lambda_validation():
    b = copy_with_bystander(0, length=120)
    with pytest.raises(ConfigError):
        discovery.select_lambda(b, [0.01, 0.001], RunConfig(epochs=3, warmup=1))
    with pytest.raises(ConfigError):
        discovery.select_lambda(b, [], RunConfig(epochs=3, warmup=1))


def test_fixed_noise_linear_fit_oracle():
    # x1 ~ N(0, 1), x2 = x1 + N(0, 2); predict x2 from noisy x1 with eta = 1
    rng = np.random.default_rng(0)
    x1 = rng.standard_normal(200000)
    x2 = x1 + math.sqrt(2) * rng.standard_normal(x1.size)
    beta = discovery.fit_linear_fixed_noise(x1[:, None], x2, [1.0])
    assert beta[0] == pytest.approx(np.mean(x1 * x2) / (np.mean(x1 ** 2) + 1.0), rel=1e-12)
    assert abs(beta[0] - 0.5) < 0.01
