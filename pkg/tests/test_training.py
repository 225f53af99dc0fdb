import numpy as np
import pytest

from deen.core import Rng
from deen.data import default_mog_spec, gen_gaussian, gen_mog
from deen.optim import OptState, adam_step, sgd_step
from deen.training import (
    LossHistory,
    NumericalError,
    TrainConfig,
    load_state,
    save_state,
    train,
)
from test_model import random_net


class TestOptim:
    def test_adam_first_step_is_lr_times_sign(self):
        p = random_net(2, (3,), 0)
        g = p.map(lambda a: np.linspace(-2, 3, a.size).reshape(a.shape) + 0.1)
        q, st = adam_step(p, g, OptState.fresh("adam", p), 0.01)
        step = (p.flat() - q.flat())
        gf = g.flat()
        expected = 0.01 * gf / (np.abs(gf) + 1e-8)
        assert np.allclose(step, expected, atol=1e-12, rtol=0)
        assert st.t == 1

    def test_adam_zero_gradient(self):
        p = random_net(2, (3,), 0)
        q, _ = adam_step(p, p.zeros_like(), OptState.fresh("adam", p), 0.1)
        assert np.array_equal(q.flat(), p.flat())

    def test_sgd(self):
        p = random_net(1, (2,), 1)
        g = p.map(lambda a: np.ones_like(a))
        q, st = sgd_step(p, g, OptState.fresh("sgd", p), 0.5)
        assert np.allclose(q.flat(), p.flat() - 0.5)
        assert st.t == 1

    def test_unknown_optimizer(self):
        with pytest.raises(ValueError):
            OptState.fresh("rmsprop", random_net(1, (2,), 1))


class TestLossHistory:
    def test_running_average(self):
        h = LossHistory(window=2)
        for it, v in enumerate([4.0, 2.0, 6.0], start=1):
            h.append(it, v)
        assert h.running == [4.0, 3.0, 4.0]
        assert h.running_at(2) == 3.0

    def test_csv_round_trip(self, tmp_path):
        h = LossHistory(window=3)
        for it in range(1, 8):
            h.append(it, 1.0 / it)
        h.to_csv(tmp_path / "loss.csv")
        lines = (tmp_path / "loss.csv").read_text().splitlines()
        assert lines[0] == "iter,loss,running_avg"
        assert len(lines) == 8
        back = LossHistory.from_csv(tmp_path / "loss.csv", 3)
        assert back.raw == h.raw and back.running == h.running


def small_data(seed=0):
    return gen_gaussian(500, 1, 1.0, Rng(seed))


class TestTrain:
    def test_zero_iterations_returns_init(self):
        cfg = TrainConfig(sigma=0.5, iterations=0)
        s = train("deen", small_data(), cfg, hidden=(4,))
        assert s.iteration == 0 and s.history.raw == []

    @pytest.mark.parametrize("kind", ["deen", "dsm", "cd"])
    def test_deterministic(self, kind):
        cfg = TrainConfig(sigma=0.5, iterations=30, batch_size=16, seed=3)
        a = train(kind, small_data(), cfg, hidden=(5, 5))
        b = train(kind, small_data(), cfg, hidden=(5, 5))
        assert np.array_equal(a.params.flat(), b.params.flat())
        assert a.history.raw == b.history.raw

    def test_seed_changes_run(self):
        a = train("deen", small_data(), TrainConfig(sigma=0.5, iterations=5, seed=1), hidden=(4,))
        b = train("deen", small_data(), TrainConfig(sigma=0.5, iterations=5, seed=2), hidden=(4,))
        assert not np.array_equal(a.params.flat(), b.params.flat())

    @pytest.mark.parametrize("kind", ["deen", "dsm"])
    def test_loss_decreases_1d(self, kind):
        cfg = TrainConfig(sigma=0.5, iterations=2000, batch_size=128, seed=0)
        s = train(kind, gen_gaussian(2000, 1, 1.0, Rng(1)), cfg, hidden=(16,))
        assert s.history.running_at(2000) < s.history.running_at(50)

    @pytest.mark.parametrize("kind", ["deen", "dsm", "cd"])
    def test_resume_is_exact(self, kind, tmp_path):
        data = gen_mog(400, default_mog_spec(), Rng(2))
        full_cfg = TrainConfig(sigma=0.2, iterations=40, batch_size=32, seed=9)
        full = train(kind, data, full_cfg, hidden=(6, 6))

        half_cfg = TrainConfig(sigma=0.2, iterations=20, batch_size=32, seed=9)
        half = train(kind, data, half_cfg, hidden=(6, 6))
        save_state(tmp_path, half, kind, half_cfg)
        state, kind_back, cfg_back = load_state(tmp_path)
        assert kind_back == kind and cfg_back == half_cfg
        cfg_back.iterations = 40
        resumed = train(kind, data, cfg_back, state=state)
        assert np.array_equal(resumed.params.flat(), full.params.flat())
        assert resumed.history.raw == full.history.raw
        assert resumed.history.running == full.history.running

    def test_fixed_pairs(self):
        data = small_data()
        cfg = TrainConfig(sigma=0.5, iterations=200, batch_size=32, noisy_per_point=4,
                          resample_each_iter=False, seed=1)
        a = train("deen", data, cfg, hidden=(4,))
        b = train("deen", data, cfg, hidden=(4,))
        assert np.array_equal(a.params.flat(), b.params.flat())
        fresh = train("deen", data, TrainConfig(sigma=0.5, iterations=200, batch_size=32,
                                                noisy_per_point=4, seed=1), hidden=(4,))
        assert not np.array_equal(a.params.flat(), fresh.params.flat())

    def test_sgd_optimizer(self):
        cfg = TrainConfig(sigma=0.5, iterations=10, optimizer="sgd", learning_rate=0.01)
        s = train("deen", small_data(), cfg, hidden=(4,))
        assert s.opt.kind == "sgd" and s.opt.t == 10

    def test_nan_guard(self):
        # noise of size 1e200 squares to inf in the loss
        with pytest.raises(NumericalError) as exc:
            train("deen", small_data(), TrainConfig(sigma=1e200, iterations=5), hidden=(4,))
        assert exc.value.iteration == 1

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            train("nce", small_data(), TrainConfig(sigma=0.5, iterations=1))

    @pytest.mark.parametrize("bad", [dict(sigma=0.0), dict(sigma=1, learning_rate=0),
                                     dict(sigma=1, batch_size=0), dict(sigma=1, optimizer="x")])
    def test_config_validation(self, bad):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
