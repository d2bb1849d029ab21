import math

import numpy as np
import pytest

from galore import optim
from galore.errors import InvalidInputError
from galore.projector import Projector


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


class TestAdam:
    def test_zero_gradient_fresh_state(self):
        st = optim.AdamState.zeros((2, 3))
        dW = optim.adam_step(st, np.zeros((2, 3)), eta=0.1)
        assert np.allclose(dW, 0.0)

    def test_first_step_unit_gradient(self):
        st = optim.AdamState.zeros((2, 2))
        dW = optim.adam_step(st, np.ones((2, 2)), eta=0.5)
        assert np.allclose(dW, 0.5 / (1.0 + 1e-8))

    def test_two_step_scalar_oracle(self):
        b1, b2, eps, eta = 0.9, 0.999, 1e-8, 1.0
        gs = [1.0, -1.0]
        m = v = 0.0
        want = []
        for t, g in enumerate(gs, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            want.append(eta * (m / (1 - b1 ** t))
                        / (math.sqrt(v / (1 - b2 ** t)) + eps))
        st = optim.AdamState.zeros((1, 1), beta1=b1, beta2=b2, eps=eps)
        got = [optim.adam_step(st, np.array([[g]]), eta)[0, 0] for g in gs]
        assert abs(got[0] - want[0]) <= 1e-12
        assert abs(got[1] - want[1]) <= 1e-12

    def test_second_moment_nonnegative_long_run(self):
        g = rng(3)
        st = optim.AdamState.zeros((3, 4))
        for _ in range(1000):
            optim.adam_step(st, g.standard_normal((3, 4)) * 10, eta=0.1)
            assert np.all(st.V >= 0.0)
        assert st.t == 1000

    def test_shape_mismatch(self):
        st = optim.AdamState.zeros((2, 2))
        with pytest.raises(InvalidInputError):
            optim.adam_step(st, np.ones((3, 2)), eta=0.1)


class TestAdafactor:
    def test_zero_gradient(self):
        st = optim.AdafactorState.zeros((3, 3))
        assert np.allclose(optim.adafactor_step(st, np.zeros((3, 3)), 0.1), 0.0)

    def test_first_step_constant_gradient_exact_factored_v(self):
        c = -2.5
        st = optim.AdafactorState.zeros((2, 4))
        dW = optim.adafactor_step(st, np.full((2, 4), c), eta=1.0)
        # rank-1 G^2 is factored exactly: Vhat = c^2, so the step is the
        # epsilon-damped sign of c.
        assert np.allclose(dW, c / (abs(c) + 1e-8))

    def test_two_step_hand_oracle(self):
        b1, b2f, eps, eta = 0.9, 0.999, 1e-8, 1.0
        g = rng(5)
        gs = [g.standard_normal((3, 3)) for _ in range(2)]
        M = np.zeros((3, 3))
        row = np.zeros(3)
        col = np.zeros(3)
        want = None
        for t, G in enumerate(gs, start=1):
            M = b1 * M + (1 - b1) * G
            row = b2f * row + (1 - b2f) * (G * G).mean(axis=1)
            col = b2f * col + (1 - b2f) * (G * G).mean(axis=0)
            mh = M / (1 - b1 ** t)
            rh = row / (1 - b2f ** t)
            ch = col / (1 - b2f ** t)
            vh = np.outer(rh, ch) / rh.mean()
            want = eta * mh / (np.sqrt(vh) + eps)
        st = optim.AdafactorState.zeros((3, 3), beta1=b1, beta2f=b2f, eps=eps)
        got = None
        for G in gs:
            got = optim.adafactor_step(st, G, eta)
        assert np.abs(got - want).max() <= 1e-12

    def test_accumulators_nonnegative(self):
        g = rng(6)
        st = optim.AdafactorState.zeros((4, 2))
        for _ in range(200):
            optim.adafactor_step(st, g.standard_normal((4, 2)), eta=0.1)
            assert np.all(st.row_acc >= 0.0)
            assert np.all(st.col_acc >= 0.0)


class TestQuantize8:
    def test_zero_block(self):
        blocks, dq = optim.q8_roundtrip(np.zeros((2, 8)), block_size=4)
        assert all(b.scale == 0.0 for b in blocks)
        assert np.allclose(dq, 0.0)

    def test_absmax_entry_exact(self):
        x = np.array([[0.3, -1.7, 0.9, 0.2]])
        _, dq = optim.q8_roundtrip(x, block_size=4)
        assert dq[0, 1] == -1.7

    def test_bruteforce_error_bound_seeded_block(self):
        x = rng(9).uniform(-2.0, 2.0, size=(1, 256))
        blocks, dq = optim.q8_roundtrip(x, block_size=256)
        scale = blocks[0].scale
        assert np.abs(x - dq).max() <= scale / 127.0 + 1e-15
        assert blocks[0].codes.dtype == np.int8
        assert np.abs(blocks[0].codes).max() <= 127

    def test_ragged_tail_block(self):
        x = rng(10).standard_normal((3, 5))
        blocks, dq = optim.q8_roundtrip(x, block_size=4)
        assert [b.codes.size for b in blocks] == [4, 4, 4, 3]
        assert dq.shape == (3, 5)

    def test_block_size_validation(self):
        with pytest.raises(InvalidInputError):
            optim.quantize_blockwise(np.ones((2, 2)), block_size=0)


def _oracle_galore_sequence(W0, grads, rank, eta, alpha, switch_freq):
    """Compose the documented sub-operations step by step."""
    W = W0.copy()
    proj = Projector(W0.shape, rank, switch_freq=switch_freq)
    inner = optim.AdamState.zeros(proj.compact_shape())
    for step, G in enumerate(grads):
        proj.maybe_refresh(G, step)
        R = proj.project(G)
        N = optim.adam_step(inner, R, eta=1.0)
        W = W + eta * proj.project_back(N, alpha=alpha)
    return W


class TestGaLoreStep:
    def test_full_rank_identity_rho_matches_plain_ascent(self):
        g = rng(11)
        W = g.standard_normal((3, 5))
        ref = W.copy()
        gstate = optim.GaLoreOptimState.adam(
            (3, 5), rank=3, switch_freq=4, alpha=1.0, rho=optim.RHO_IDENTITY)
        eta = 0.1
        for step in range(30):
            G = g.standard_normal((3, 5))
            ref = ref + eta * G
            W = optim.galore_adam_step(W, G, gstate, eta, step)
        assert np.abs(W - ref).max() <= 1e-10 * max(1.0, np.abs(ref).max())

    def test_zero_gradient_stream_keeps_weights_and_moments(self):
        W = rng(12).standard_normal((4, 4))
        gstate = optim.GaLoreOptimState.adam((4, 4), rank=2, switch_freq=2)
        out = W.copy()
        with pytest.warns(Warning):
            for step in range(6):
                out = optim.galore_adam_step(out, np.zeros((4, 4)), gstate,
                                             0.1, step)
        assert np.array_equal(out, W)
        assert np.allclose(gstate.inner.M, 0.0)
        assert np.allclose(gstate.inner.V, 0.0)

    def test_three_step_compositional_oracle(self):
        g = rng(13)
        W0 = g.standard_normal((4, 6))
        grads = [g.standard_normal((4, 6)) for _ in range(3)]
        want = _oracle_galore_sequence(W0, grads, rank=2, eta=0.05,
                                       alpha=0.25, switch_freq=1)
        gstate = optim.GaLoreOptimState.adam((4, 6), rank=2, switch_freq=1,
                                             alpha=0.25)
        W = W0.copy()
        for step, G in enumerate(grads):
            W = optim.galore_adam_step(W, G, gstate, 0.05, step)
        assert np.abs(W - want).max() <= 1e-12

    @pytest.mark.parametrize("policy", ["carry", "reset", "rotate"])
    def test_policies_identical_when_never_switching(self, policy):
        g = rng(14)
        grads = [g.standard_normal((3, 4)) for _ in range(25)]
        W0 = g.standard_normal((3, 4))
        gstate = optim.GaLoreOptimState.adam(
            (3, 4), rank=2, switch_freq=1000, switch_policy=policy)
        W = W0.copy()
        for step, G in enumerate(grads):
            W = optim.galore_adam_step(W, G, gstate, 0.05, step)
        baseline = optim.GaLoreOptimState.adam((3, 4), rank=2,
                                               switch_freq=1000)
        Wb = W0.copy()
        for step, G in enumerate(grads):
            Wb = optim.galore_adam_step(Wb, G, baseline, 0.05, step)
        assert np.array_equal(W, Wb)

    def test_rotate_policy_transports_first_moment(self):
        g = rng(15)
        gstate = optim.GaLoreOptimState.adam((4, 5), rank=2, switch_freq=3,
                                             switch_policy="rotate")
        W = g.standard_normal((4, 5))
        for step in range(3):
            W = optim.galore_adam_step(W, g.standard_normal((4, 5)), gstate,
                                       0.05, step)
        P_old = gstate.projector.P.copy()
        M_old = gstate.inner.M.copy()
        G = g.standard_normal((4, 5))
        optim.galore_adam_step(W, G, gstate, 0.05, 3)  # refresh step
        rot = gstate.projector.P.T @ P_old
        b1 = gstate.inner.beta1
        want = b1 * (rot @ M_old) + (1 - b1) * gstate.projector.project(G)
        assert np.abs(gstate.inner.M - want).max() <= 1e-12

    @pytest.mark.parametrize("shape,mode,side", [
        ((5, 4), "one-sided", None),   # defaults to the right side
        ((4, 6), "two-sided", None),
    ])
    def test_rotate_policy_other_orientations(self, shape, mode, side):
        g = rng(23)
        gstate = optim.GaLoreOptimState.adam(shape, rank=2, switch_freq=2,
                                             switch_policy="rotate",
                                             mode=mode, side=side)
        W = g.standard_normal(shape)
        for step in range(5):
            W = optim.galore_adam_step(W, g.standard_normal(shape), gstate,
                                       0.05, step)
        assert gstate.inner.M.shape == gstate.projector.compact_shape()
        assert np.all(np.isfinite(gstate.inner.M))
        assert np.all(gstate.inner.V >= 0.0)

    def test_reset_policy_zeroes_moments_on_switch(self):
        g = rng(16)
        gstate = optim.GaLoreOptimState.adam((4, 4), rank=2, switch_freq=2,
                                             switch_policy="reset")
        W = g.standard_normal((4, 4))
        W = optim.galore_adam_step(W, g.standard_normal((4, 4)), gstate, 0.1, 0)
        W = optim.galore_adam_step(W, g.standard_normal((4, 4)), gstate, 0.1, 1)
        assert gstate.inner.t == 2
        G = g.standard_normal((4, 4))
        optim.galore_adam_step(W, G, gstate, 0.1, 2)
        # After the switch the inner state restarted and saw exactly one step.
        assert gstate.inner.t == 1

    def test_int8_storage_stays_close_to_float(self):
        g = rng(17)
        W_f = g.standard_normal((6, 8))
        W_q = W_f.copy()
        grads = [g.standard_normal((6, 8)) for _ in range(40)]
        f_state = optim.GaLoreOptimState.adam((6, 8), rank=3, switch_freq=10)
        q_state = optim.GaLoreOptimState.adam((6, 8), rank=3, switch_freq=10,
                                              storage=optim.STORAGE_INT8)
        for step, G in enumerate(grads):
            W_f = optim.galore_adam_step(W_f, G, f_state, 0.01, step)
            W_q = optim.galore_adam_step(W_q, G, q_state, 0.01, step)
        assert np.all(np.isfinite(W_q))
        # Same subspace; quantized moments perturb the trajectory mildly.
        assert np.abs(W_q - W_f).max() <= 0.1

    def test_state_entry_count_matches_formula(self):
        m, n, r = 4, 9, 3
        gstate = optim.GaLoreOptimState.adam((m, n), rank=r)
        assert gstate.entry_count() == 2 * r * max(m, n) + r * min(m, n)

    def test_adafactor_inner_matches_composed_oracle(self):
        g = rng(24)
        W0 = g.standard_normal((4, 6))
        grads = [g.standard_normal((4, 6)) for _ in range(3)]
        proj = Projector((4, 6), rank=2, switch_freq=1)
        inner = optim.AdafactorState.zeros(proj.compact_shape())
        want = W0.copy()
        for step, G in enumerate(grads):
            proj.maybe_refresh(G, step)
            R = proj.project(G)
            N = optim.adafactor_step(inner, R, eta=1.0)
            want = want + 0.05 * proj.project_back(N, alpha=0.25)
        gstate = optim.GaLoreOptimState.adafactor((4, 6), rank=2,
                                                  switch_freq=1, alpha=0.25)
        W = W0.copy()
        for step, G in enumerate(grads):
            W = optim.galore_adam_step(W, G, gstate, 0.05, step)
        assert np.abs(W - want).max() <= 1e-12

    def test_bad_settings_rejected(self):
        with pytest.raises(InvalidInputError):
            optim.GaLoreOptimState.adam((3, 3), rank=2, alpha=-1.0)
        with pytest.raises(InvalidInputError):
            optim.GaLoreOptimState.adam((3, 3), rank=2, rho="nope")
        with pytest.raises(InvalidInputError):
            optim.GaLoreOptimState.adam((3, 3), rank=2, switch_policy="maybe")


class TestLora:
    def test_first_step_only_b_moves(self):
        g = rng(18)
        ls = optim.LoraState.create(g.standard_normal((4, 4)), rank=2, rng=g)
        A0 = ls.A.copy()
        optim.lora_adam_step(ls, g.standard_normal((4, 4)), eta=0.1)
        assert np.array_equal(ls.A, A0)  # grad_A = s * B^T G = 0 at B = 0
        assert not np.allclose(ls.B, 0.0)

    def test_zero_gradient_no_change(self):
        g = rng(19)
        ls = optim.LoraState.create(g.standard_normal((3, 5)), rank=2, rng=g)
        W_before = ls.effective_weight()
        optim.lora_adam_step(ls, np.zeros((3, 5)), eta=0.1)
        assert np.array_equal(ls.effective_weight(), W_before)

    def test_two_step_effective_weight_oracle(self):
        g = rng(20)
        W0 = g.standard_normal((4, 4))
        grads = [g.standard_normal((4, 4)) for _ in range(2)]
        ls = optim.LoraState.create(W0, rank=2, rng=rng(99), lora_alpha=32.0)
        s = ls.scaling
        B = ls.B.copy()
        A = ls.A.copy()
        adamB = optim.AdamState.zeros(B.shape)
        adamA = optim.AdamState.zeros(A.shape)
        for G in grads:
            gB = s * (G @ A.T)
            gA = s * (B.T @ G)
            B = B + optim.adam_step(adamB, gB, 0.1)
            A = A + optim.adam_step(adamA, gA, 0.1)
            optim.lora_adam_step(ls, G, 0.1)
        assert np.abs(ls.effective_weight() - (W0 + s * B @ A)).max() <= 1e-12

    def test_w0_frozen(self):
        g = rng(21)
        W0 = g.standard_normal((3, 3))
        ls = optim.LoraState.create(W0, rank=1, rng=g)
        for _ in range(5):
            optim.lora_adam_step(ls, g.standard_normal((3, 3)), eta=0.2)
        assert np.array_equal(ls.W0, W0)

    def test_entry_count_matches_adaptor_formula(self):
        g = rng(22)
        ls = optim.LoraState.create(g.standard_normal((4, 9)), rank=3, rng=g)
        assert ls.entry_count() == 2 * 4 * 3 + 2 * 9 * 3
