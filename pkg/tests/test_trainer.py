import math
from dataclasses import replace

import numpy as np
import pytest

from lightsb_ou.datagen import GaussianProvider, NormalProvider, PointMassProvider
from lightsb_ou.ou import kernel_at
from lightsb_ou.potential import PotentialModel
from lightsb_ou.trainer import (
    Adam, SGD, TrainConfig, TrainingDiverged, cell_config, config_from_mapping, evaluate_model,
    grid_sweep, load_config, train,
)
from lightsb_ou.seeding import stream

STANDARD_K30_YAML = """\
batch_size: 128
eps: 0.1
lr: 0.002
K: 30
diagonal: true
b: -0.099
m: -0.225
"""


def small_cfg(**kw):
    base = dict(n_steps=50, batch_size=32, K=3, d=2, eps=0.5, seed=7, checkpoint_every=10)
    base.update(kw)
    return TrainConfig(**base)


SRC = NormalProvider(2)
TGT = GaussianProvider(np.array([2.0, -1.0]), np.array([0.5, 1.0]))


class TestAdam:
    def test_hand_computed_quadratic(self):
        # f(theta) = 0.5 theta' A theta, two steps
        A = np.diag([2.0, 0.5])
        theta = np.array([1.0, -3.0])
        opt = Adam(0.1)
        g1 = A @ theta
        th1 = opt.step(theta, g1)
        m = 0.1 * g1
        v = 0.001 * g1 ** 2
        ref1 = theta - 0.1 * (m / 0.1) / (np.sqrt(v / 0.001) + 1e-8)
        np.testing.assert_allclose(th1, ref1, rtol=0, atol=1e-12)
        g2 = A @ th1
        th2 = opt.step(th1, g2)
        m = 0.9 * m + 0.1 * g2
        v = 0.999 * v + 0.001 * g2 ** 2
        ref2 = th1 - 0.1 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
        np.testing.assert_allclose(th2, ref2, rtol=0, atol=1e-12)

    def test_state_round_trip(self):
        opt = Adam(0.01)
        th = np.array([1.0, 2.0])
        for _ in range(3):
            th = opt.step(th, th)
        clone = Adam(0.01, state=opt.state())
        np.testing.assert_array_equal(clone.step(th, th), opt.step(th, th))

    def test_sgd(self):
        np.testing.assert_array_equal(SGD(0.5).step(np.ones(2), np.ones(2)), np.full(2, 0.5))


class TestConfig:
    def test_standard_yaml_values(self, tmp_path):
        p = tmp_path / "cfg.yaml"
        p.write_text(STANDARD_K30_YAML)
        cfg = load_config(p)
        assert (cfg.batch_size, cfg.eps, cfg.lr, cfg.K, cfg.b, cfg.m_scale) == \
            (128, 0.1, 2e-3, 30, -0.099, -0.225)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "nope.yaml")

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown"):
            config_from_mapping({"learning_rate": 0.1})

    def test_full_covariance_rejected(self):
        with pytest.raises(ValueError):
            config_from_mapping({"diagonal": False})

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(n_steps=0)
        with pytest.raises(ValueError):
            TrainConfig(optimizer="rmsprop")


class TestTrain:
    def test_single_step(self):
        rep = train(small_cfg(n_steps=1), SRC, TGT)
        assert rep.loss_trace.shape == (1,)

    def test_deterministic(self):
        a = train(small_cfg(), SRC, TGT)
        b = train(small_cfg(), SRC, TGT)
        assert a.loss_trace.tobytes() == b.loss_trace.tobytes()
        assert a.final_model.to_vector().tobytes() == b.final_model.to_vector().tobytes()

    def test_seed_changes_run(self):
        a = train(small_cfg(), SRC, TGT)
        b = train(small_cfg(seed=8), SRC, TGT)
        assert a.loss_trace.tobytes() != b.loss_trace.tobytes()

    def test_resume_continues_trace(self):
        full = train(small_cfg(n_steps=40), SRC, TGT)
        saved = {}
        train(small_cfg(n_steps=20), SRC, TGT,
              on_checkpoint=lambda s, m, o: saved.__setitem__(s, (m.copy(), o)))
        model, state = saved[20]
        rest = train(small_cfg(n_steps=20), SRC, TGT, init=model, optimizer_state=state,
                     start_step=20)
        assert rest.loss_trace.tobytes() == full.loss_trace[20:].tobytes()
        assert rest.final_model.to_vector().tobytes() == full.final_model.to_vector().tobytes()
        assert rest.meta()["steps"] == 40

    def test_loss_decreases(self):
        rep = train(small_cfg(n_steps=400, lr=0.02), SRC, TGT)
        assert rep.loss_trace[-50:].mean() < rep.loss_trace[:50].mean()

    def test_divergence_guard(self):
        cfg = small_cfg(n_steps=5, K=1, eps=1e-3, checkpoint_every=1)
        bad = PotentialModel([0.0], [[0.0, 0.0]], [[700.0, 700.0]], 1e-3)
        far = PointMassProvider(np.array([1e3, 0.0]))
        with pytest.raises(TrainingDiverged) as info:
            train(cfg, far, TGT, init=bad)
        assert info.value.step == 0
        assert info.value.last_good[0] == 0

    def test_init_shape_mismatch(self):
        with pytest.raises(ValueError):
            train(small_cfg(), SRC, TGT, init=PotentialModel([0.0], [[0.0, 0.0]], [[0.0, 0.0]], 0.5))


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_recover_single_component(seed):
    # point-mass source and a target equal to the coupling of a known K = 1 potential
    cfg = TrainConfig(n_steps=5000, batch_size=512, lr=1e-2, K=1, d=2, eps=0.1, b=0.5,
                      m_scale=0.3, seed=seed)
    ou = cfg.ou_params()
    x0 = np.array([0.5, -1.0])
    r_star, S_star = np.array([1.0, -2.0]), np.array([0.5, 2.0])
    k = kernel_at(ou, ou.T)
    mT = k.mean_coeff * x0 + (1 - k.mean_coeff) * ou.m
    target = GaussianProvider(r_star + S_star * mT / k.sigma2_t, np.sqrt(cfg.eps * S_star))
    m = train(cfg, PointMassProvider(x0), target).final_model
    assert np.max(np.abs(m.means[0] / r_star - 1)) < 0.02
    assert np.max(np.abs(m.S[0] / S_star - 1)) < 0.02


class TestSweep:
    def test_single_cell_equals_direct(self):
        base = small_cfg(n_steps=30)
        rows = grid_sweep(base, [0.2], [0.1], SRC, TGT, eval_n=300)
        assert len(rows) == 1
        cfg = cell_config(base, 0.2, 0.1)
        rep = train(cfg, SRC, TGT)
        ev = evaluate_model(rep.final_model, cfg.ou_params(), SRC, TGT, n=300, n_repeats=1,
                            rng=stream(base.seed, "eval"), metrics=("sliced_w1",))
        assert rows[0]["value"] == ev.sliced_w1[0]

    @pytest.mark.parametrize("mode", ["shared", "per-cell"])
    def test_order_invariance(self, mode):
        base = small_cfg(n_steps=20)
        a = grid_sweep(base, [0.0, 0.3], [-0.2, 0.2], SRC, TGT, eval_n=200, seed_mode=mode)
        b = grid_sweep(base, [0.3, 0.0], [0.2, -0.2], SRC, TGT, eval_n=200, seed_mode=mode)
        key = lambda r: (r["b"], r["m_scale"])
        for ra, rb in zip(sorted(a, key=key), sorted(b, key=key)):
            assert (ra["seed"], ra["value"]) == (rb["seed"], rb["value"])
        values = [r["value"] for r in a]
        assert values == sorted(values)

    def test_brownian_cell(self):
        cfg = cell_config(small_cfg(), 0.0, 0.0)
        ou = cfg.ou_params()
        assert ou.b == 0.0 and np.all(ou.m == 0.0)

    def test_failing_cell_is_marked(self):
        base = small_cfg(n_steps=5)
        broken = PointMassProvider(np.array([np.nan, 0.0]))
        rows = grid_sweep(base, [0.0], [0.0], broken, TGT, eval_n=50)
        assert math.isinf(rows[0]["value"]) and rows[0]["error"]

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            grid_sweep(small_cfg(), [], [0.0], SRC, TGT)

    def test_per_cell_seeds_differ(self):
        base = small_cfg()
        s1 = cell_config(base, 0.1, 0.0, "per-cell").seed
        s2 = cell_config(base, -0.1, 0.0, "per-cell").seed
        assert s1 != s2 and cell_config(base, 0.1, 0.0).seed == base.seed


def test_replace_keeps_validation():
    with pytest.raises(ValueError):
        replace(TrainConfig(), batch_size=0)
