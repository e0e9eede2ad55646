import math

import numpy as np
import pytest

from loco import loss, pbd
from loco.errors import InvalidInputError


def sigmoid(b):
    return 1.0 / (1.0 + math.exp(-b))


class TestBatchNll:
    def test_certain_zero(self):
        assert loss.batch_nll([[0.0, 0.0, 0.0]], [[0]], 3).total == 0.0

    def test_two_channels(self):
        p = np.array([[0.1, 0.1], [0.2, 0.2], [0.3, 0.3]])
        rep = loss.batch_nll([p], [[1, 0]], 31)
        assert rep.total == pytest.approx(-math.log(0.398) - math.log(0.504), abs=1e-12)
        # 0.92130 + 0.68518, each term rounded to five places
        assert rep.total == pytest.approx(1.60648, abs=1e-5)
        np.testing.assert_allclose(rep.per_channel, [-math.log(0.398), -math.log(0.504)], atol=1e-12)

    def test_mean_over_samples(self):
        p = np.array([[0.1], [0.2], [0.3]])
        one = loss.batch_nll([p], [[1]], 31).total
        assert loss.batch_nll([p, p], [[1], [1]], 31).total == pytest.approx(one, abs=1e-15)

    def test_total_is_mean_of_per_sample(self):
        rng = np.random.default_rng(0)
        ps = [rng.uniform(size=(int(rng.integers(3, 20)), 2)) for _ in range(5)]
        ys = [rng.integers(0, 3, size=2) for _ in range(5)]
        rep = loss.batch_nll(ps, ys, 8)
        assert abs(rep.total - rep.per_sample.mean()) <= 1e-12

    def test_single_channel_equals_scalar(self):
        p = np.random.default_rng(1).uniform(size=12)
        assert loss.batch_nll([p[:, None]], [[4]], 6).total == pbd.nll(p, 4, 6)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            loss.batch_nll([np.full((3, 2), 0.5)], [[1]], 3)
        with pytest.raises(InvalidInputError):
            loss.batch_nll([np.full((3, 1), 0.5)], [[1], [1]], 3)

    def test_gradients_against_finite_differences(self):
        rng = np.random.default_rng(4)
        ps = [rng.uniform(0.05, 0.95, size=(int(rng.integers(4, 12)), 2)) for _ in range(3)]
        ys = [rng.integers(0, 4, size=2) for _ in range(3)]
        rep = loss.batch_nll(ps, ys, 5, want_grad=True)
        h = 1e-6
        for i, p in enumerate(ps):
            numeric = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = loss.batch_nll(ps, ys, 5).total
                p[idx] = old - h
                down = loss.batch_nll(ps, ys, 5).total
                p[idx] = old
                numeric[idx] = (up - down) / (2 * h)
            err = np.linalg.norm(rep.grads[i] - numeric) / np.linalg.norm(numeric)
            assert err <= 1e-5

    def test_padded_matches_per_sample(self):
        rng = np.random.default_rng(7)
        lengths = [5, 11, 8]
        ps = [rng.uniform(size=(n, 2)) for n in lengths]
        ys = [rng.integers(0, 5, size=2) for _ in lengths]
        padded = np.full((3, 11, 2), 0.7)
        for i, p in enumerate(ps):
            padded[i, : len(p)] = p
        ref = loss.batch_nll(ps, ys, 6, want_grad=True)
        rep, grad = loss.padded_batch_nll(padded, lengths, ys, 6)
        assert rep.total == pytest.approx(ref.total, abs=1e-13)
        for i, n in enumerate(lengths):
            np.testing.assert_allclose(grad[i, :n], ref.grads[i], atol=1e-14)
            assert np.all(grad[i, n:] == 0.0)


class TestInitBias:
    def test_single_step(self):
        assert loss.init_bias(0.5, 1) == 0.0

    def test_two_steps(self):
        assert loss.init_bias(0.5, 2) == pytest.approx(math.log(0.29289 / 0.70711), abs=1e-4)
        assert loss.init_bias(0.5, 2) == pytest.approx(-0.88137, abs=1e-5)

    def test_long_sequence(self):
        b = loss.init_bias(0.5, 100)
        root = 0.5 ** 0.01
        assert b == pytest.approx(math.log1p(-root) - math.log(root), abs=1e-12)
        assert b == pytest.approx(-4.96822, abs=1e-5)
        p = np.full(100, sigmoid(b))
        assert abs(pbd.pmf(p, 31).masses[0] - 0.5) <= 1e-9

    @pytest.mark.parametrize("omega", [0.1, 0.3, 0.5, 0.9])
    @pytest.mark.parametrize("T", [1, 10, 100, 400])
    def test_grid(self, omega, T):
        p = np.full(T, sigmoid(loss.init_bias(omega, T)))
        assert abs(pbd.pmf(p, 31).masses[0] - omega) <= 1e-9

    @pytest.mark.parametrize("omega", [0.0, 1.0, -0.2, 1.5])
    def test_invalid(self, omega):
        with pytest.raises(InvalidInputError):
            loss.init_bias(omega, 10)


class TestClamp:
    def test_boundaries(self):
        np.testing.assert_array_equal(loss.clamp_probs([0.0, 0.5, 1.0], 1e-6), [1e-6, 0.5, 1 - 1e-6])

    def test_identity_inside(self):
        np.testing.assert_array_equal(loss.clamp_probs([0.3], 1e-6), [0.3])

    def test_disabled(self):
        raw = np.array([0.0, 1.0])
        np.testing.assert_array_equal(loss.clamp_probs(raw, 0.0), raw)
        np.testing.assert_array_equal(loss.clamp_mask(raw, 0.0), [1.0, 1.0])

    def test_mask_blocks_clamped(self):
        np.testing.assert_array_equal(loss.clamp_mask([0.0, 0.5, 1.0], 1e-6), [0.0, 1.0, 0.0])
