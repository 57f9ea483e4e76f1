"""Optimizer, schedule, clipping, and the fit loop."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from wavemix import data, ops, training
from wavemix.errors import ConfigError, NumericalError
from wavemix.model import ModelConfig, VitModel, load_checkpoint
from wavemix.tensor import Parameter, Tensor
from wavemix.training import OptimizerState, TrainConfig

from oracles import adam_scalar_ref


def tiny_setup(mixer="mwa", seed=0, n=32, epochs=3, **train_kw):
    cfg = ModelConfig(mixer=mixer, image_size=8, patch_size=2, dim=4, depth=1,
                      classes=4, mlp_ratio=2, heads=2, seed=seed)
    m = VitModel(cfg)
    ds = data.load_dataset("synthetic", seed=seed, subset=n, image_size=8,
                           classes=4)
    kw = dict(epochs=epochs, warmup_epochs=min(1, epochs - 1), base_lr=1e-3,
              min_lr=1e-5, weight_decay=0.01, batch_size=16, seed=seed)
    kw.update(train_kw)
    return m, ds, TrainConfig(**kw)


class TestSchedule:
    def test_warmup_values(self):
        cfg = TrainConfig(epochs=300, warmup_epochs=5, base_lr=5e-4)
        assert training.lr_at(cfg, 0) == pytest.approx(1e-4, rel=1e-12)
        assert training.lr_at(cfg, 2) == pytest.approx(3e-4, rel=1e-12)
        assert training.lr_at(cfg, 4) == pytest.approx(5e-4, rel=1e-12)

    def test_junction_continuity_and_midpoint(self):
        cfg = TrainConfig(epochs=25, warmup_epochs=5, base_lr=5e-4, min_lr=1e-5)
        assert training.lr_at(cfg, 5) == pytest.approx(5e-4, rel=1e-12)
        assert training.lr_at(cfg, 15) == pytest.approx(2.55e-4, rel=1e-12)

    def test_decay_monotone_to_min(self):
        cfg = TrainConfig(epochs=300, warmup_epochs=5, base_lr=5e-4, min_lr=1e-5)
        lrs = [training.lr_at(cfg, e) for e in range(5, 300)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))
        assert abs(lrs[-1] - cfg.min_lr) <= 1e-7

    def test_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)
        with pytest.raises(ConfigError):
            TrainConfig(epochs=5, warmup_epochs=5)
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=0)
        with pytest.raises(ConfigError):
            TrainConfig(base_lr=-1e-4)
        TrainConfig(base_lr=0.0)  # a frozen run is a legal run


def params_with_grads(grads):
    out = []
    for i, g in enumerate(grads):
        p = Parameter(np.zeros_like(np.asarray(g, dtype=np.float64)), name=f"p{i}")
        p.grad[...] = g
        out.append(p)
    return out


class TestClipping:
    def test_triangle_example(self):
        params = params_with_grads([np.array([3.0]), np.array([4.0])])
        scale = training.clip_global_norm(params, 1.0)
        assert scale == pytest.approx(0.2, rel=1e-12)
        assert params[0].grad[0] == pytest.approx(0.6, rel=1e-12)
        assert params[1].grad[0] == pytest.approx(0.8, rel=1e-12)

    def test_norm_two_halves(self):
        params = params_with_grads([np.array([2.0])])
        assert training.clip_global_norm(params, 1.0) == pytest.approx(0.5)

    def test_small_norm_untouched(self):
        params = params_with_grads([np.array([0.5])])
        assert training.clip_global_norm(params, 1.0) == 1.0
        assert params[0].grad[0] == 0.5

    def test_zero_grads_scale_one(self):
        params = params_with_grads([np.zeros(3)])
        assert training.clip_global_norm(params, 1.0) == 1.0

    def test_never_increases_norms(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            gs = [rng.normal(size=rng.integers(1, 5)) for _ in range(3)]
            params = params_with_grads(gs)
            before = np.sqrt(sum(float(p.grad @ p.grad) for p in params))
            training.clip_global_norm(params, 1.0)
            after = np.sqrt(sum(float(p.grad @ p.grad) for p in params))
            assert after <= min(before, 1.0) + 1e-12


class TestAdam:
    def test_first_step_hand_value(self):
        p = Parameter(np.array([1.0]), name="w")
        p.grad[...] = 0.1
        cfg = TrainConfig(weight_decay=0.0)
        training.adam_step([p], OptimizerState(), lr=1e-3, cfg=cfg)
        delta = 1e-3 * 0.1 / (0.1 + 1e-8)
        assert p.data[0] == pytest.approx(1.0 - delta, abs=1e-15)
        assert delta == pytest.approx(9.99999e-4, rel=1e-6)

    def test_decay_only(self):
        p = Parameter(np.array([1.0]), name="w")
        cfg = TrainConfig(weight_decay=0.05)
        training.adam_step([p], OptimizerState(), lr=1e-3, cfg=cfg)
        assert p.data[0] == pytest.approx(0.99995, abs=1e-15)

    def test_decay_flag_respected(self):
        p = Parameter(np.array([1.0]), name="b", decay=False)
        cfg = TrainConfig(weight_decay=0.05)
        training.adam_step([p], OptimizerState(), lr=1e-3, cfg=cfg)
        assert p.data[0] == 1.0

    def test_matches_scalar_reference_sequence(self):
        rng = np.random.default_rng(1)
        g_seq = rng.normal(size=12)
        cfg = TrainConfig(weight_decay=0.02)
        p = Parameter(np.array([0.7]), name="w")
        state = OptimizerState()
        got = []
        for g in g_seq:
            p.grad[...] = g
            training.adam_step([p], state, lr=3e-3, cfg=cfg)
            got.append(p.data[0])
        want = adam_scalar_ref(g_seq, lr=3e-3, x0=0.7, wd=0.02)
        assert_allclose(got, want, rtol=1e-12)

    def test_nan_gradient_names_parameter(self):
        p = Parameter(np.array([1.0]), name="blocks.0.mlp.w1")
        p.grad[...] = np.nan
        with pytest.raises(NumericalError, match="blocks.0.mlp.w1"):
            training.adam_step([p], OptimizerState(), lr=1e-3, cfg=TrainConfig())

    def test_descends_quadratic(self):
        target = np.array([1.5, -2.0, 0.5])
        p = Parameter(np.zeros(3), name="x")
        cfg = TrainConfig(weight_decay=0.0)
        state = OptimizerState()

        def loss_val():
            d = p.data - target
            return float(d @ d)

        first = loss_val()
        for _ in range(400):
            p.zero_grad()
            diff = ops.sub(p, Tensor(target))
            ops.sum_(ops.mul(diff, diff)).backward()
            training.adam_step([p], state, lr=0.05, cfg=cfg)
        assert loss_val() < 1e-3 * first


class TestEvaluate:
    def test_top5_at_least_top1_and_bounded(self):
        m, ds, _ = tiny_setup()
        top1, top5, loss = training.evaluate(m, ds.test_x, ds.test_y)
        assert 0.0 <= top1 <= top5 <= 100.0
        assert np.isfinite(loss)

    def test_perfect_predictions_are_100(self):
        m, ds, _ = tiny_setup()
        logits = m.forward(ds.test_x).data
        labels = np.argmax(logits, axis=1)
        top1, top5, _ = training.evaluate(m, ds.test_x, labels)
        assert top1 == 100.0 and top5 == 100.0


class TestFit:
    def test_identical_seeds_identical_history(self, tmp_path):
        losses = []
        for _ in range(2):
            m, ds, cfg = tiny_setup(seed=5, epochs=2)
            hist = training.fit(m, ds, cfg)
            losses.append([r["train_loss"] for r in hist])
        assert losses[0] == losses[1]

    def test_history_rows_and_metrics_log(self, tmp_path):
        log = tmp_path / "metrics.log"
        m, ds, cfg = tiny_setup(epochs=2)
        hist = training.fit(m, ds, cfg, log_path=log)
        assert len(hist) == 2
        for row in hist:
            assert set(row) >= {"epoch", "lr", "train_loss", "test_top1",
                                "test_top5", "seconds"}
        lines = log.read_text().splitlines()
        assert lines[0] == training.METRICS_HEADER
        assert len(lines) == 3
        assert lines[1].startswith("0\t")

    def test_zero_lr_keeps_parameters_bitwise(self):
        m, ds, cfg = tiny_setup(base_lr=0.0, min_lr=0.0, weight_decay=0.0,
                                epochs=1)
        before = {n: p.data.copy() for n, p in m.named_parameters().items()}
        training.fit(m, ds, cfg)
        for n, p in m.named_parameters().items():
            assert (p.data == before[n]).all(), n

    def test_best_checkpoint_and_load_best(self, tmp_path):
        ckpt = tmp_path / "best.wvmx"
        m, ds, cfg = tiny_setup(epochs=2)
        hist = training.fit(m, ds, cfg, checkpoint_path=ckpt)
        meta = training.load_best(m, ckpt)
        best = max(hist, key=lambda r: r["test_top1"])
        assert meta["meta.best_top1"][0] == pytest.approx(best["test_top1"])
        top1, _, _ = training.evaluate(m, ds.test_x, ds.test_y)
        assert top1 == pytest.approx(best["test_top1"])

    def test_stop_top1_and_max_epochs(self):
        m, ds, cfg = tiny_setup(epochs=5)
        hist = training.fit(m, ds, cfg, max_epochs=2)
        assert len(hist) == 2
        m, ds, cfg = tiny_setup(epochs=5)
        hist = training.fit(m, ds, cfg, stop_top1=0.0)
        assert len(hist) == 1

    def test_nonfinite_loss_aborts_keeping_checkpoint(self, tmp_path):
        ckpt = tmp_path / "best.wvmx"
        m, ds, cfg = tiny_setup(epochs=1)
        training.fit(m, ds, cfg, checkpoint_path=ckpt)
        good_bytes = ckpt.read_bytes()
        m.patch_w.data[...] = np.nan
        with pytest.raises(NumericalError) as err:
            training.fit(m, ds, cfg, checkpoint_path=ckpt)
        assert err.value.history == []
        assert ckpt.read_bytes() == good_bytes
        fresh, _, _ = tiny_setup(epochs=1)
        training.load_best(fresh, ckpt)  # still a valid checkpoint

    def test_augment_changes_trajectory_not_shapes(self):
        m, ds, cfg = tiny_setup(epochs=1, augment=True)
        plain_m, plain_ds, plain_cfg = tiny_setup(epochs=1)
        aug_hist = training.fit(m, ds, cfg)
        plain_hist = training.fit(plain_m, plain_ds, plain_cfg)
        assert aug_hist[0]["train_loss"] != plain_hist[0]["train_loss"]
        again_m, again_ds, again_cfg = tiny_setup(epochs=1, augment=True)
        again = training.fit(again_m, again_ds, again_cfg)
        assert aug_hist[0]["train_loss"] == again[0]["train_loss"]
