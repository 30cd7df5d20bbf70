import math
from types import SimpleNamespace

import numpy as np
import pytest

from hcn import neural
from conftest import finite_difference_gradients, max_relative_error


def sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


class TestInitParameters:
    def test_task5_dimensions(self):
        params = neural.init_parameters(obs_size=389, action_count=16, hidden=128, seed=7)
        assert params.input_dim == 421
        params.validate()

    def test_dialer_dimensions(self):
        params = neural.init_parameters(obs_size=17, action_count=14, hidden=32, seed=7)
        assert params.input_dim == 45

    def test_deterministic_for_seed(self):
        a = neural.init_parameters(5, 3, 4, seed=42)
        b = neural.init_parameters(5, 3, 4, seed=42)
        for ta, tb in zip(a.tensors(), b.tensors()):
            assert np.array_equal(ta, tb)

    def test_seed_changes_weights(self):
        a = neural.init_parameters(5, 3, 4, seed=1)
        b = neural.init_parameters(5, 3, 4, seed=2)
        assert not np.array_equal(a.input_weights, b.input_weights)

    def test_forget_bias_one_other_biases_zero(self):
        params = neural.init_parameters(5, 3, 4, seed=0)
        fg = neural.GATE_ORDER.index("forget")
        assert np.all(params.gate_biases[fg] == 1.0)
        for k in range(4):
            if k != fg:
                assert np.all(params.gate_biases[k] == 0.0)

    def test_glorot_bound(self):
        params = neural.init_parameters(10, 4, 8, seed=3)
        s = np.sqrt(6.0 / (params.input_dim + 8))
        assert np.max(np.abs(params.input_weights)) <= s

    @pytest.mark.parametrize("dims", [(0, 3, 4), (5, 0, 4), (5, 3, 0), (-1, 3, 4)])
    def test_rejects_bad_dimensions(self, dims):
        with pytest.raises(ValueError):
            neural.init_parameters(*dims, seed=0)


class TestLstmStep:
    def test_all_zero_parameters_give_zero_state(self):
        params = neural.init_parameters(2, 2, 3, seed=0)
        for t in params.tensors():
            t[...] = 0.0
        state = neural.lstm_step(params, neural.LstmState.zeros(3), np.array([1.0, -2.0, 0.0, 1.0, 1.0, 0.5]))
        assert np.all(state.hidden == 0.0)
        assert np.all(state.cell == 0.0)

    def test_scalar_oracle(self):
        # 1-unit net, hand-set scalar weights, checked against a separate
        # evaluation of the five recurrence equations
        params = neural.init_parameters(obs_size=1, action_count=1, hidden=1, seed=0)
        wi, wf, wg, wo = 0.3, -0.2, 0.5, 0.8
        ui, uf, ug, uo = 0.1, 0.4, -0.3, 0.2
        bi, bf, bg, bo = 0.05, 1.0, -0.1, 0.0
        params.input_weights[...] = 0.0
        params.input_weights[0, 0, 0] = wi
        params.input_weights[1, 0, 0] = wf
        params.input_weights[2, 0, 0] = wg
        params.input_weights[3, 0, 0] = wo
        params.recurrent_weights[0, 0, 0] = ui
        params.recurrent_weights[1, 0, 0] = uf
        params.recurrent_weights[2, 0, 0] = ug
        params.recurrent_weights[3, 0, 0] = uo
        params.gate_biases[:, 0] = [bi, bf, bg, bo]

        h0, c0, x0 = 0.3, -0.6, 0.7
        i = sigmoid(wi * x0 + ui * h0 + bi)
        f = sigmoid(wf * x0 + uf * h0 + bf)
        g = math.tanh(wg * x0 + ug * h0 + bg)
        o = sigmoid(wo * x0 + uo * h0 + bo)
        c1 = f * c0 + i * g
        h1 = o * math.tanh(c1)

        state = neural.lstm_step(
            params,
            neural.LstmState(np.array([h0]), np.array([c0])),
            np.array([x0, 0.0, 0.0]),
        )
        assert state.cell[0] == pytest.approx(c1, abs=1e-12)
        assert state.hidden[0] == pytest.approx(h1, abs=1e-12)

    def test_recurrence_depends_on_state(self, small_params):
        x = np.zeros(small_params.input_dim)
        x[0] = 1.0
        s1 = neural.lstm_step(small_params, neural.LstmState.zeros(8), x)
        s2 = neural.lstm_step(small_params, s1, x)
        assert not np.allclose(s1.hidden, s2.hidden)

    def test_rejects_wrong_length(self, small_params):
        with pytest.raises(ValueError):
            neural.lstm_step(small_params, neural.LstmState.zeros(8), np.zeros(3))

    def test_rejects_non_finite(self, small_params):
        x = np.zeros(small_params.input_dim)
        x[0] = np.nan
        with pytest.raises(ValueError):
            neural.lstm_step(small_params, neural.LstmState.zeros(8), x)


def params_with_logits(logits):
    """Net whose output logits are constant, for output-layer arithmetic tests."""
    params = neural.init_parameters(obs_size=1, action_count=len(logits), hidden=2, seed=0)
    params.output_weights[...] = 0.0
    params.output_bias[...] = np.asarray(logits)
    return params


class TestOutputDistribution:
    def test_mask_renormalizes(self):
        params = params_with_logits(np.log([0.5, 0.3, 0.2]))
        dist = neural.output_distribution(params, np.zeros(2), np.array([1, 0, 1]))
        assert dist.probs == pytest.approx([0.714286, 0.0, 0.285714], abs=1e-6)
        assert dist.probs[1] == 0.0

    def test_all_ones_mask_is_identity(self):
        params = params_with_logits(np.log([0.5, 0.3, 0.2]))
        dist = neural.output_distribution(params, np.zeros(2), np.ones(3))
        assert dist.probs == pytest.approx([0.5, 0.3, 0.2], abs=1e-12)

    def test_single_bit_mask_is_one_hot(self):
        params = params_with_logits([0.3, -1.0, 2.0])
        dist = neural.output_distribution(params, np.zeros(2), np.array([0, 1, 0]))
        assert dist.probs == pytest.approx([0.0, 1.0, 0.0], abs=0)

    def test_all_zero_mask_raises(self):
        params = params_with_logits([0.0, 0.0])
        with pytest.raises(neural.MaskError):
            neural.output_distribution(params, np.zeros(2), np.zeros(2))

    def test_random_masked_softmax_invariants(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            a = rng.integers(2, 10)
            logits = rng.normal(scale=5.0, size=a)
            mask = rng.integers(0, 2, size=a)
            if not mask.any():
                mask[rng.integers(a)] = 1
            q = neural.masked_softmax(logits, mask)
            assert np.all(q[mask == 0] == 0.0)
            assert abs(q.sum() - 1.0) <= 1e-9
            assert np.all(q >= 0.0)


class TestForwardDialog:
    def test_single_turn(self, small_params):
        dists = neural.forward_dialog(small_params, [np.ones(5)], [np.ones(4)], [0])
        assert len(dists) == 1

    def test_first_turn_prev_action_is_zero(self, small_params):
        # the action at turn 0 only matters from turn 1 on
        obs, mask = [np.ones(5)], [np.ones(4)]
        d0 = neural.forward_dialog(small_params, obs, mask, [0])
        d1 = neural.forward_dialog(small_params, obs, mask, [3])
        assert np.array_equal(d0[0].probs, d1[0].probs)

    def test_causality(self, small_params):
        rng = np.random.default_rng(0)
        obs = [rng.normal(size=5) for _ in range(4)]
        masks = [np.ones(4)] * 4
        history = [0, 1, 2, 3]
        base = neural.forward_dialog(small_params, obs, masks, history)
        altered = list(obs)
        altered[3] = rng.normal(size=5)
        changed = neural.forward_dialog(small_params, altered, masks, history)
        for t in range(3):
            assert np.array_equal(base[t].probs, changed[t].probs)

    def test_matches_stepwise_evaluation(self, small_params):
        rng = np.random.default_rng(1)
        obs = [rng.normal(size=5) for _ in range(3)]
        masks = [np.array([1, 1, 0, 1]), np.ones(4), np.array([0, 1, 1, 1])]
        history = [1, 3, 2]
        dists = neural.forward_dialog(small_params, obs, masks, history)

        state = neural.LstmState.zeros(8)
        prev = None
        for t in range(3):
            onehot = np.zeros(4)
            if prev is not None:
                onehot[prev] = 1.0
            x = np.concatenate([obs[t], onehot, masks[t]])
            state = neural.lstm_step(small_params, state, x)
            dist = neural.output_distribution(small_params, state.hidden, masks[t])
            assert np.array_equal(dist.probs, dists[t].probs)
            prev = history[t]

    def test_length_mismatch(self, small_params):
        with pytest.raises(ValueError):
            neural.forward_dialog(small_params, [np.ones(5)], [np.ones(4)] * 2, [0, 1])


def random_dialog(params, T, seed, all_ones_mask=False):
    rng = np.random.default_rng(seed)
    a = params.action_count
    obs = [rng.normal(size=params.obs_size) for _ in range(T)]
    masks = []
    labels = []
    for _ in range(T):
        if all_ones_mask:
            mask = np.ones(a)
        else:
            mask = rng.integers(0, 2, size=a).astype(float)
            if not mask.any():
                mask[rng.integers(a)] = 1.0
        masks.append(mask)
        labels.append(int(rng.choice(np.flatnonzero(mask))))
    return obs, masks, labels


class TestSupervisedGradients:
    def test_perfect_prediction_zero_loss_zero_grads(self):
        # single-bit masks force probability one onto each label
        params = neural.init_parameters(3, 4, 6, seed=2)
        obs = [np.ones(3), np.zeros(3)]
        masks = [np.array([0, 1, 0, 0.0]), np.array([0, 0, 0, 1.0])]
        grads, loss = neural.supervised_gradients(params, obs, masks, [1, 3])
        assert loss == 0.0
        for t in grads.tensors():
            assert np.allclose(t, 0.0, atol=1e-15)

    def test_gradients_match_finite_differences(self, small_params):
        obs, masks, labels = random_dialog(small_params, T=3, seed=7)
        analytic, _ = neural.supervised_gradients(small_params, obs, masks, labels)
        numeric = finite_difference_gradients(
            small_params, lambda p: neural.supervised_gradients(p, obs, masks, labels)[1]
        )
        assert max_relative_error(analytic, numeric) <= 1e-4

    def test_loss_decreases_over_adadelta_steps(self, small_params):
        obs, masks, labels = random_dialog(small_params, T=4, seed=3)
        params = small_params
        opt = neural.AdaDeltaState.zeros_like(params)
        losses = []
        for _ in range(5):
            grads, loss = neural.supervised_gradients(params, obs, masks, labels)
            losses.append(loss)
            params, opt = neural.adadelta_step(params, neural.clip_global_norm(grads, 1.0), opt)
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_masked_label_raises(self, small_params):
        obs = [np.ones(5)]
        masks = [np.array([1, 0, 1, 1.0])]
        with pytest.raises(neural.MaskError):
            neural.supervised_gradients(small_params, obs, masks, [1])

    def test_label_out_of_range(self, small_params):
        with pytest.raises(ValueError):
            neural.supervised_gradients(small_params, [np.ones(5)], [np.ones(4)], [9])


def make_trajectory(params, obs, masks, actions):
    dists = neural.forward_dialog(params, obs, masks, actions)
    return SimpleNamespace(
        observations=obs,
        masks=masks,
        actions=actions,
        behavior_probs=[float(d.probs[a]) for d, a in zip(dists, actions)],
    )


class TestReinforceGradients:
    def test_zero_advantage_zero_gradient(self, small_params):
        obs, masks, actions = random_dialog(small_params, T=3, seed=11)
        traj = make_trajectory(small_params, obs, masks, actions)
        grads = neural.reinforce_gradients(small_params, traj, G=0.5, b=0.5)
        for t in grads.tensors():
            assert np.allclose(t, 0.0, atol=1e-15)

    def test_positive_advantage_increases_log_prob(self, small_params):
        obs, masks, actions = random_dialog(small_params, T=3, seed=12)
        traj = make_trajectory(small_params, obs, masks, actions)

        def log_prob_sum(params):
            dists = neural.forward_dialog(params, obs, masks, actions)
            return sum(math.log(d.probs[a]) for d, a in zip(dists, actions))

        before = log_prob_sum(small_params)
        grads = neural.reinforce_gradients(small_params, traj, G=1.0, b=0.2)
        ascent = neural.clip_global_norm(grads.scaled(-1.0), 1.0)
        updated, _ = neural.adadelta_step(small_params, ascent, neural.AdaDeltaState.zeros_like(small_params))
        assert log_prob_sum(updated) > before

    def test_matches_supervised_direction(self, small_params):
        # with unit advantage, all-ones masks and labels equal to the sampled
        # actions, the policy-gradient ascent direction is exactly the negated
        # cross-entropy gradient
        obs, masks, actions = random_dialog(small_params, T=3, seed=13, all_ones_mask=True)
        traj = make_trajectory(small_params, obs, masks, actions)
        rl = neural.reinforce_gradients(small_params, traj, G=1.0, b=0.0)
        sup, _ = neural.supervised_gradients(small_params, obs, masks, actions)
        for a, b in zip(rl.tensors(), sup.tensors()):
            assert np.allclose(a, -b, atol=1e-12)

    def test_gradient_matches_finite_differences(self, small_params):
        obs, masks, actions = random_dialog(small_params, T=2, seed=14)
        traj = make_trajectory(small_params, obs, masks, actions)
        G, b = 0.9, 0.4

        def objective(params):
            dists = neural.forward_dialog(params, obs, masks, actions)
            return (G - b) * sum(math.log(d.probs[a]) for d, a in zip(dists, actions))

        analytic = neural.reinforce_gradients(small_params, traj, G, b)
        numeric = finite_difference_gradients(small_params, objective)
        assert max_relative_error(analytic, numeric) <= 1e-4

    def test_zero_behavior_probability_raises(self, small_params):
        obs, masks, actions = random_dialog(small_params, T=2, seed=15)
        traj = make_trajectory(small_params, obs, masks, actions)
        traj.behavior_probs[1] = 0.0
        with pytest.raises(ValueError):
            neural.reinforce_gradients(small_params, traj, G=1.0, b=0.0)


class TestClipGlobalNorm:
    def make_grads(self, params, value):
        grads = neural.Gradients.zeros_like(params)
        grads.output_bias[...] = value
        return grads

    def test_scales_down(self, small_params):
        grads = neural.Gradients.zeros_like(small_params)
        grads.output_bias[...] = 1.0  # norm 2 over 4 entries
        clipped = neural.clip_global_norm(grads, 1.0)
        assert np.allclose(clipped.output_bias, 0.5)

    def test_under_norm_unchanged(self, small_params):
        grads = neural.Gradients.zeros_like(small_params)
        grads.output_bias[0] = 0.5
        clipped = neural.clip_global_norm(grads, 1.0)
        assert np.array_equal(clipped.output_bias, grads.output_bias)

    def test_post_clip_norm(self, small_params):
        rng = np.random.default_rng(4)
        grads = neural.Gradients(*(rng.normal(size=t.shape) for t in small_params.tensors()))
        n = grads.global_norm()
        for max_norm in (0.5 * n, 2.0 * n):
            clipped = neural.clip_global_norm(grads, max_norm)
            assert clipped.global_norm() == pytest.approx(min(n, max_norm), abs=1e-12)

    def test_preserves_direction(self, small_params):
        rng = np.random.default_rng(8)
        grads = neural.Gradients(*(rng.normal(size=t.shape) for t in small_params.tensors()))
        clipped = neural.clip_global_norm(grads, 1e-3)
        ratio = clipped.output_bias / grads.output_bias
        assert np.allclose(ratio, ratio[0])
        assert np.all(np.abs(clipped.output_bias) <= np.abs(grads.output_bias))


class TestAdaDelta:
    def test_zero_gradient_leaves_parameters(self, small_params):
        opt = neural.AdaDeltaState.zeros_like(small_params)
        opt.grad_sq_avg[0][...] = 0.5
        grads = neural.Gradients.zeros_like(small_params)
        updated, new_opt = neural.adadelta_step(small_params, grads, opt)
        for a, b in zip(updated.tensors(), small_params.tensors()):
            assert np.array_equal(a, b)
        assert np.allclose(new_opt.grad_sq_avg[0], 0.5 * 0.95)

    def test_scalar_first_step(self):
        # fresh accumulators, rho=0.95, eps=1e-6, g=1:
        # delta = -sqrt(1e-6) / sqrt(0.05 + 1e-6) ~ -4.4717e-3
        params = neural.init_parameters(1, 1, 1, seed=0)
        grads = neural.Gradients.zeros_like(params)
        grads.output_bias[0] = 1.0
        before = params.output_bias[0]
        updated, _ = neural.adadelta_step(params, grads, neural.AdaDeltaState.zeros_like(params))
        assert updated.output_bias[0] - before == pytest.approx(-4.4717e-3, rel=1e-4)

    def test_equal_gradients_equal_updates(self, small_params):
        grads = neural.Gradients.zeros_like(small_params)
        grads.output_bias[...] = 0.7
        updated, _ = neural.adadelta_step(
            small_params, grads, neural.AdaDeltaState.zeros_like(small_params)
        )
        deltas = updated.output_bias - small_params.output_bias
        assert np.allclose(deltas, deltas[0])


class TestCheckpoint:
    def test_round_trip(self, small_params, tmp_path):
        path = tmp_path / "model.ckpt"
        neural.save_checkpoint(path, small_params)
        loaded, opt = neural.load_checkpoint(path)
        assert opt is None
        for a, b in zip(loaded.tensors(), small_params.tensors()):
            assert np.array_equal(a, b)
        assert loaded.obs_size == small_params.obs_size

    def test_round_trip_with_optimizer(self, small_params, tmp_path):
        opt = neural.AdaDeltaState.zeros_like(small_params, rho=0.9, epsilon=1e-7)
        opt.grad_sq_avg[0][...] = 0.25
        path = tmp_path / "model.ckpt"
        neural.save_checkpoint(path, small_params, opt)
        _, loaded = neural.load_checkpoint(path)
        assert loaded is not None
        assert loaded.rho == 0.9
        assert loaded.epsilon == 1e-7
        assert np.array_equal(loaded.grad_sq_avg[0], opt.grad_sq_avg[0])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError):
            neural.load_checkpoint(path)

    def test_truncated_file(self, small_params, tmp_path):
        path = tmp_path / "model.ckpt"
        neural.save_checkpoint(path, small_params)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(ValueError):
            neural.load_checkpoint(path)
