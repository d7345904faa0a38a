import numpy as np
import pytest

from oracles import gradient_check, mlp_forward
from slicc.approximator import (MlpParams, OptimizerState, apply_update, as_table, decode_joint,
                                dumps_checkpoint, encode_joint, forward, init_params,
                                load_checkpoint, loads_checkpoint, loss_and_grad, save_checkpoint)
from slicc.errors import DimensionError, InputError


def small(seed=0, in_dim=4, hidden=16, out=9, dtype=np.float64):
    return init_params(seed, in_dim, hidden, out, dtype)


class TestForward:
    def test_matches_loop_oracle(self):
        p = small(3, out=81)
        x = np.random.default_rng(1).normal(size=4)
        want = mlp_forward(p.w1.tolist(), p.b1.tolist(), p.w2.tolist(), p.b2.tolist(), x.tolist())
        np.testing.assert_allclose(forward(p, x), want, rtol=0, atol=1e-13)

    def test_batch_rows_match_single(self):
        p = small(4)
        xs = np.random.default_rng(2).normal(size=(5, 4))
        batch = forward(p, xs)
        for k in range(5):
            np.testing.assert_allclose(batch[k], forward(p, xs[k]), rtol=0, atol=1e-14)

    def test_hand_built(self):
        # w1 = I, tanh(0) = 0 so the output is the bias at the origin
        p = MlpParams(np.eye(2), np.zeros(2), np.array([[1.0, 2.0]]), np.array([0.5]))
        assert forward(p, [0.0, 0.0])[0] == 0.5
        assert forward(p, [1.0, 0.0])[0] == pytest.approx(0.5 + np.tanh(1.0))

    def test_golden_outputs(self, fixtures_dir):
        # seeded float32 net at training width; frozen outputs
        p = init_params(2024, 8, 1024, 81, np.float32)
        obs = np.array([[0.1, 0.25, 0.0, 0.05, 0.1, -0.25, 0.01, 0.04],
                        [1.0, -1.0, 3.0, 0.2, 0.0, 0.0, -3.0, -0.2]], np.float32)
        got = forward(p, obs)
        assert got.dtype == np.float32 and got.shape == (2, 81)
        want = np.load(fixtures_dir / "forward_golden.npy")
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-6)

    def test_wrong_width(self):
        with pytest.raises(DimensionError):
            forward(small(), np.zeros(5))

    def test_init_bounds_and_seed(self):
        p = small(9, hidden=64)
        assert np.abs(p.w1).max() <= 0.5 and np.abs(p.w2).max() <= 1 / 8
        q = small(9, hidden=64)
        assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))


class TestJointIndex:
    def test_round_trip(self):
        for k in range(81):
            assert encode_joint(*decode_joint(k)) == k
        assert decode_joint(13) == (1, 4)

    def test_table_is_row_major(self):
        t = as_table(np.arange(81.0))
        assert t[1, 4] == 13 and t.shape == (9, 9)


class TestGradients:
    @pytest.mark.parametrize("seed", range(6))
    @pytest.mark.parametrize("out", [9, 81])
    def test_finite_differences(self, seed, out):
        assert gradient_check(seed, out) <= 1e-4

    def test_only_selected_output_gets_gradient(self):
        p = small(1)
        _, g = loss_and_grad(p, np.ones((1, 4)), [3], [10.0])
        rows = np.flatnonzero(np.abs(g.w2).sum(axis=1))
        assert rows.tolist() == [3]
        assert np.flatnonzero(g.b2).tolist() == [3]

    def test_loss_value(self):
        p = MlpParams(np.zeros((2, 3)), np.zeros(2), np.zeros((4, 2)), np.array([0.0, 1.0, 2.0, 3.0]))
        loss, _ = loss_and_grad(p, np.zeros((2, 3)), [1, 3], [0.0, 5.0])
        assert loss == pytest.approx((1.0 + 4.0) / 2)

    def test_duplicate_actions_accumulate(self):
        p = small(2)
        obs = np.random.default_rng(0).normal(size=(3, 4))
        _, g = loss_and_grad(p, obs, [2, 2, 2], [1.0, 2.0, 3.0])
        _, parts = zip(*(loss_and_grad(p, obs[k:k + 1], [2], [t]) for k, t in enumerate([1.0, 2.0, 3.0])))
        np.testing.assert_allclose(g.w2, sum(x.w2 for x in parts) / 3, atol=1e-14)

    @pytest.mark.parametrize("obs, act, tgt, err", [
        (np.zeros((0, 4)), [], [], InputError),
        (np.zeros((2, 4)), [0, 9], [0, 0], DimensionError),
        (np.zeros((2, 4)), [0], [0, 0], DimensionError),
        (np.zeros((1, 4)), [0], [np.nan], InputError),
    ])
    def test_bad_batches(self, obs, act, tgt, err):
        with pytest.raises(err):
            loss_and_grad(small(), obs, act, tgt)


class TestOptimizer:
    def test_sgd_step(self):
        p = small(0)
        before = p.copy()
        _, g = loss_and_grad(p, np.ones((2, 4)), [0, 1], [1.0, -1.0])
        apply_update(p, g, OptimizerState("sgd", learning_rate=0.1))
        np.testing.assert_allclose(p.w1, before.w1 - 0.1 * g.w1, atol=1e-15)

    def test_adam_first_step_is_sign(self):
        # with bias correction the first step moves every touched weight by ~lr
        p = small(0)
        before = p.copy()
        _, g = loss_and_grad(p, np.ones((2, 4)), [0, 1], [1.0, -1.0])
        apply_update(p, g, OptimizerState("adam", learning_rate=1e-3))
        mask = np.abs(g.w1) > 1e-6
        np.testing.assert_allclose((before.w1 - p.w1)[mask], 1e-3 * np.sign(g.w1[mask]), rtol=1e-4)

    def test_adam_reference(self):
        # textbook Adam with explicit bias-corrected moments
        p = small(5)
        ref = [a.copy() for a in p.arrays()]
        m = [np.zeros_like(a) for a in ref]
        v = [np.zeros_like(a) for a in ref]
        opt = OptimizerState("adam", learning_rate=0.01)
        rng = np.random.default_rng(0)
        for t in range(1, 21):
            obs, act, tgt = rng.normal(size=(4, 4)), rng.integers(9, size=4), rng.normal(size=4)
            _, g = loss_and_grad(p, obs, act, tgt)
            apply_update(p, g, opt)
            _, g_ref = loss_and_grad(MlpParams(*ref), obs, act, tgt)
            for k, gk in enumerate(g_ref.arrays()):
                m[k] = 0.9 * m[k] + 0.1 * gk
                v[k] = 0.999 * v[k] + 0.001 * gk * gk
                mh, vh = m[k] / (1 - 0.9 ** t), v[k] / (1 - 0.999 ** t)
                ref[k] = ref[k] - 0.01 * mh / (np.sqrt(vh) + 1e-8)
        for a, b in zip(p.arrays(), ref):
            np.testing.assert_allclose(a, b, rtol=1e-6, atol=1e-9)

    def test_regression_decreases_loss(self):
        p = small(1, out=3)
        rng = np.random.default_rng(1)
        obs = rng.normal(size=(32, 4))
        act = rng.integers(3, size=32)
        tgt = np.sin(obs[:, 0]) + act
        opt = OptimizerState(learning_rate=1e-2)
        first = loss_and_grad(p, obs, act, tgt)[0]
        for _ in range(300):
            apply_update(p, loss_and_grad(p, obs, act, tgt)[1], opt)
        assert loss_and_grad(p, obs, act, tgt)[0] < 0.1 * first

    def test_bad_optimizer(self):
        with pytest.raises(InputError):
            OptimizerState("rmsprop")


class TestCheckpoint:
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_round_trip(self, tmp_path, dtype):
        p = small(7, out=81, dtype=dtype)
        save_checkpoint(tmp_path / "q.ckpt", p, {"role": "prosocial"})
        q, meta = load_checkpoint(tmp_path / "q.ckpt", p.shape_spec())
        assert meta == {"role": "prosocial"} and q.dtype == dtype
        for a, b in zip(p.arrays(), q.arrays()):
            assert a.tobytes() == b.tobytes()
        x = np.ones(4, dtype)
        assert forward(p, x).tobytes() == forward(q, x).tobytes()

    def test_deterministic_bytes(self):
        assert dumps_checkpoint(small(1)) == dumps_checkpoint(small(1))

    def test_shape_mismatch(self):
        blob = dumps_checkpoint(small(1, out=9))
        with pytest.raises(DimensionError):
            loads_checkpoint(blob, small(1, out=81).shape_spec())

    def test_corrupt(self):
        blob = dumps_checkpoint(small(1))
        with pytest.raises(InputError):
            loads_checkpoint(b"garbage" + blob)
        with pytest.raises(InputError):
            loads_checkpoint(blob[:-4])
