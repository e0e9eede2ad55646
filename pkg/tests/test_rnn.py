import numpy as np
import pytest

from loco import checkpoint, loss, rnn
from loco.errors import InvalidInputError, InvalidStateError, TrainingDiverged


def random_model(seed, input_dim=3, hidden=4, channels=1, scale=0.3):
    params = rnn.ModelParams.init(input_dim, hidden, channels, seed=seed, omega=0.5, t_ref=5)
    rng = np.random.default_rng(seed + 1000)
    for v in params.tensors.values():
        v += rng.normal(0.0, scale, size=v.shape)
    return params


class TestForward:
    def test_zero_weights_give_bias(self):
        params = rnn.ModelParams.zeros(3, 4, 2)
        params.tensors["b_out"][:] = [0.3, -1.2]
        x = np.random.default_rng(0).normal(size=(7, 3))
        p, _ = rnn.forward(params, x)
        np.testing.assert_allclose(p, np.tile(1 / (1 + np.exp(-np.array([0.3, -1.2]))), (7, 1)), rtol=1e-15)

    def test_causality(self):
        params = random_model(1, scale=1.0)
        x = np.random.default_rng(2).normal(size=(12, 3))
        base, _ = rnn.forward(params, x)
        for t0 in range(12):
            y = x.copy()
            y[t0:] += np.random.default_rng(t0).normal(size=y[t0:].shape)
            p, _ = rnn.forward(params, y)
            np.testing.assert_array_equal(p[:t0], base[:t0])

    def test_deterministic(self):
        x = np.random.default_rng(3).normal(size=(9, 3))
        a, _ = rnn.forward(rnn.ModelParams.init(3, 4, 1, seed=9), x)
        b, _ = rnn.forward(rnn.ModelParams.init(3, 4, 1, seed=9), x)
        np.testing.assert_array_equal(a, b)

    def test_batched_equals_single(self):
        params = random_model(4)
        x = np.random.default_rng(5).normal(size=(3, 8, 3))
        pb, _ = rnn.forward(params, x)
        for i in range(3):
            np.testing.assert_allclose(rnn.forward(params, x[i])[0], pb[i], rtol=0, atol=1e-15)

    def test_hidden_bounded(self):
        params = random_model(6, scale=3.0)
        _, cache = rnn.forward(params, np.random.default_rng(7).normal(0, 5, size=(50, 3)))
        assert np.all(np.abs(cache.h) <= 1.0)

    def test_outputs_open_interval(self):
        p, _ = rnn.forward(random_model(8), np.random.default_rng(0).normal(size=(6, 3)))
        assert np.all((p > 0) & (p < 1))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            rnn.forward(rnn.ModelParams.zeros(3, 4, 1), np.zeros((5, 2)))


class TestBackward:
    def test_zero_upstream(self):
        params = random_model(0)
        _, cache = rnn.forward(params, np.random.default_rng(1).normal(size=(5, 3)))
        for g in rnn.backward(cache, np.zeros((5, 1))).values():
            assert np.all(g == 0.0)

    def test_cache_mismatch(self):
        _, cache = rnn.forward(random_model(0), np.zeros((5, 3)))
        with pytest.raises(InvalidStateError):
            rnn.backward(cache, np.zeros((4, 1)))

    @pytest.mark.parametrize("seed", range(3))
    def test_full_pipeline_gradient(self, seed):
        params = random_model(seed)
        x = np.random.default_rng(seed).normal(size=(5, 3))
        assert rnn.grad_check(params, (x, np.array([2])), h=1e-5) <= 1e-5

    def test_zero_model_gradient(self):
        params = rnn.ModelParams.zeros(3, 4, 1)
        params.tensors["b_out"][:] = loss.init_bias(0.5, 5)
        x = np.random.default_rng(0).normal(size=(5, 3))
        assert rnn.grad_check(params, (x, np.array([1])), h=1e-5) <= 1e-7

    def test_coarse_step_reports_without_raising(self):
        params = random_model(2)
        x = np.random.default_rng(2).normal(size=(5, 3))
        err = rnn.grad_check(params, (x, np.array([1])), h=1e-1)
        assert np.isfinite(err) and err >= 0.0

    def test_batch_gradient_is_mean(self):
        params = random_model(3, channels=2)
        rng = np.random.default_rng(3)
        samples = [(rng.normal(size=(6, 3)), np.array([1, 0])), (rng.normal(size=(9, 3)), np.array([2, 1]))]
        _, both = rnn.pipeline_loss(params, samples, 31)
        _, g0 = rnn.pipeline_loss(params, samples[:1], 31)
        _, g1 = rnn.pipeline_loss(params, samples[1:], 31)
        for k in both:
            np.testing.assert_allclose(both[k], (g0[k] + g1[k]) / 2, rtol=0, atol=1e-12)


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        params = random_model(0)
        state = rnn.AdamState.create(params)
        zero = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        new, state = rnn.adam_step(params, zero, state)
        for k in params.tensors:
            np.testing.assert_array_equal(new[k], params[k])
        assert state.step == 1

    def test_first_step_magnitude(self):
        params = rnn.ModelParams({"w": np.array([0.0])})
        state = rnn.AdamState(m={"w": np.zeros(1)}, v={"w": np.zeros(1)}, lr=1e-3)
        for g in (3.0, -0.02, 1e-3):
            new, _ = rnn.adam_step(params, {"w": np.array([g])}, state)
            step = abs(new["w"][0])
            assert step == pytest.approx(1e-3 * abs(g) / (abs(g) + 1e-8), rel=1e-12)
            assert step == pytest.approx(1e-3, rel=1e-4)

    def test_constant_gradient_update_monotone(self):
        # closed form: m_t/c1 = g exactly; v_t/c2 = g^2 exactly, so steps equal
        # lr*g/(|g| + eps) up to rounding and never exceed lr
        params = rnn.ModelParams({"w": np.array([0.0])})
        state = rnn.AdamState(m={"w": np.zeros(1)}, v={"w": np.zeros(1)}, lr=1e-2, eps_adam=1e-3)
        g = {"w": np.array([0.05])}
        steps = []
        for _ in range(50):
            new, state = rnn.adam_step(params, g, state)
            steps.append(abs(new["w"][0] - params["w"][0]))
            params = new
        assert all(b >= a - 1e-15 for a, b in zip(steps, steps[1:]))
        assert steps[-1] <= 1e-2
        expected = 1e-2 * 0.05 / (0.05 + 1e-3)
        assert steps[-1] == pytest.approx(expected, rel=1e-9)

    def test_non_finite_gradient(self):
        params = random_model(0)
        state = rnn.AdamState.create(params)
        grads = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        grads["U_h"][0, 0] = np.nan
        with pytest.raises(TrainingDiverged) as exc:
            rnn.adam_step(params, grads, state)
        assert exc.value.payload["tensor"] == "U_h"

    def test_clip(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        clipped, norm = rnn.clip_grads(grads, 1.0)
        assert norm == 5.0
        assert rnn.grad_norm(clipped) == pytest.approx(1.0)


def test_checkpoint_round_trip(tmp_path):
    params = random_model(5, channels=2)
    state = rnn.AdamState.create(params, lr=2e-3)
    x = np.random.default_rng(1).normal(size=(10, 3))
    grads = {k: np.ones_like(v) for k, v in params.tensors.items()}
    params, state = rnn.adam_step(params, grads, state)
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, params, state, {"run": {"seed": 1}}, "abc", {"epoch": 1})
    loaded, lstate, header = checkpoint.load(path)
    np.testing.assert_array_equal(rnn.forward(loaded, x)[0], rnn.forward(params, x)[0])
    assert lstate.step == 1 and lstate.lr == 2e-3
    for k in params.tensors:
        np.testing.assert_array_equal(lstate.m[k], state.m[k])
    assert header["config"] == {"run": {"seed": 1}} and header["config_hash"] == "abc"
    assert path.read_bytes() == checkpoint.to_bytes(loaded, lstate, {"run": {"seed": 1}}, "abc", {"epoch": 1})


def test_checkpoint_bad_magic(tmp_path):
    from loco.errors import FormatError
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACKPT" + bytes(20))
    with pytest.raises(FormatError):
        checkpoint.load(path)
