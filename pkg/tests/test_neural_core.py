import math

import numpy as np
import pytest

from vegagen.neural import kernels
from vegagen.neural.model import (Alignment, DimensionMismatch, attend, backward,
                                  decode_step, encode_source, forward_batch,
                                  init_decoder_state, init_decoder_state_batch,
                                  loss_and_gradients, lstm_step, model_forward)
from vegagen.neural.params import ModelHyper, init_params, zero_params
from vegagen.tokenizer import EOS, SOS


def tiny_params(seed=0, *, src_vocab=7, tgt_vocab=6, d_cell=4, dtype="float64",
                dropout=0.0, **kw):
    hyper = ModelHyper(src_vocab=src_vocab, tgt_vocab=tgt_vocab, d_cell=d_cell,
                       dtype=dtype, dropout=dropout, **kw)
    return init_params(hyper, seed=seed)


def random_seqs(rng, vocab, n, lo=2, hi=9, with_eos=True):
    out = []
    for _ in range(n):
        m = int(rng.integers(lo, hi))
        ids = rng.integers(4, vocab, size=m).tolist()
        out.append(ids + [EOS] if with_eos else ids)
    return out


def flatten_grads(grads, names):
    return np.concatenate([grads[n].ravel() for n in names])


class TestLstmStep:
    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(0)
        H, E = 3, 2
        Wx = rng.standard_normal((E, 4 * H))
        Wh = rng.standard_normal((H, 4 * H))
        b = rng.standard_normal(4 * H)
        x = rng.standard_normal(E)
        c = rng.standard_normal(H)
        h = rng.standard_normal(H)

        pre = x @ Wx + h @ Wh + b
        sig = lambda z: 1.0 / (1.0 + math.exp(-z))
        c_want, h_want = [], []
        for j in range(H):
            i_g = sig(pre[j])
            f_g = sig(pre[H + j])
            g_g = math.tanh(pre[2 * H + j])
            o_g = sig(pre[3 * H + j])
            cj = f_g * c[j] + i_g * g_g
            c_want.append(cj)
            h_want.append(o_g * math.tanh(cj))

        c2, h2 = lstm_step(x, (c, h), (Wx, Wh, b))
        np.testing.assert_allclose(c2, c_want, rtol=1e-12)
        np.testing.assert_allclose(h2, h_want, rtol=1e-12)

    def test_shape_validation(self):
        p = tiny_params()
        rng = np.random.default_rng(0)
        with pytest.raises(DimensionMismatch):
            lstm_step(rng.standard_normal(3), (np.zeros(4), np.zeros(4)),
                      (np.zeros((2, 16)), np.zeros((4, 16)), np.zeros(16)))


class TestEncoderAndAttention:
    def test_encoder_state_shapes(self):
        p = tiny_params(d_cell=5)
        enc = encode_source([4, 5, 6, EOS], p)
        assert enc.h.shape == (4, 10)
        assert enc.keys.shape == (4, p.hyper.d_attn)
        assert enc.bridge_src.shape == (10,)
        assert enc.length == 4

    def test_bad_token_ids(self):
        p = tiny_params()
        with pytest.raises(DimensionMismatch):
            encode_source([4, 99], p)
        with pytest.raises(DimensionMismatch):
            encode_source([], p)

    def test_attention_weights_normalized(self):
        p = tiny_params(d_cell=6)
        enc = encode_source([4, 5, 6, 4, EOS], p)
        rng = np.random.default_rng(1)
        ctx, weights = attend(rng.standard_normal(6), enc, p)
        assert weights.shape == (5,)
        assert np.all(weights >= 0)
        assert abs(weights.sum() - 1.0) < 1e-12
        assert ctx.shape == (12,)
        # context is inside the convex hull coordinate-wise
        assert np.all(ctx <= enc.h.max(axis=0) + 1e-12)
        assert np.all(ctx >= enc.h.min(axis=0) - 1e-12)


class TestForward:
    def test_decode_step_is_normalized(self):
        p = tiny_params()
        enc = encode_source([4, 5, EOS], p)
        state = init_decoder_state(enc, p)
        logp, state2 = decode_step(SOS, state, enc, p)
        assert logp.shape == (p.hyper.tgt_vocab,)
        assert abs(np.logaddexp.reduce(logp)) < 1e-10

    def test_zero_params_give_uniform_nll(self):
        hyper = ModelHyper(src_vocab=9, tgt_vocab=11, d_cell=4, dtype="float64")
        p = zero_params(hyper)
        total, steps, _ = model_forward([4, 5, EOS], [4, 5, 6, EOS], p)
        expect = math.log(11)
        np.testing.assert_allclose(steps, expect, rtol=0, atol=1e-12)
        assert abs(total - 4 * expect) < 1e-10

    def test_teacher_forcing_matches_stepwise(self):
        p = tiny_params(seed=3)
        rng = np.random.default_rng(5)
        src = random_seqs(rng, 7, 1)[0]
        tgt = random_seqs(rng, 6, 1)[0]
        total, steps, align = model_forward(src, tgt, p)

        enc = encode_source(src, p)
        state = init_decoder_state(enc, p)
        prev = SOS
        replayed = []
        for t in tgt:
            logp, state = decode_step(prev, state, enc, p)
            replayed.append(-logp[t])
            prev = t
        np.testing.assert_allclose(steps, replayed, rtol=0, atol=0)
        assert align.matrix.shape == (len(tgt), len(src))

    def test_alignment_rows_sum_to_one(self):
        p = tiny_params(seed=2)
        _, _, align = model_forward([4, 5, 6, EOS], [4, 5, EOS], p)
        np.testing.assert_allclose(align.matrix.sum(axis=1), 1.0, atol=1e-12)

    def test_alignment_requires_2d(self):
        with pytest.raises(ValueError):
            Alignment(np.zeros(3))

    def test_batch_matches_single(self):
        p = tiny_params(seed=4)
        rng = np.random.default_rng(9)
        sources = random_seqs(rng, 7, 3)
        targets = random_seqs(rng, 6, 3)
        fw = forward_batch(sources, targets, p)
        for i, (s, t) in enumerate(zip(sources, targets)):
            total, _, _ = model_forward(s, t, p)
            np.testing.assert_allclose(fw.pair_nll[i], total, rtol=1e-9)
        assert fw.token_counts.tolist() == [len(t) for t in targets]

    def test_train_mode_needs_rng(self):
        p = tiny_params(dropout=0.5)
        with pytest.raises(ValueError):
            forward_batch([[4, EOS]], [[4, EOS]], p, train_mode=True)


def fd_check(params, sources, targets, *, train_mode=False, seed=11,
             n_coords=180, eps=1e-5):
    """Central finite differences against analytic grads on sampled coords."""
    def loss():
        rng = np.random.default_rng(seed) if train_mode else None
        total, _, _ = loss_and_gradients(sources, targets, params,
                                         train_mode=train_mode, rng=rng)
        return total

    rng0 = np.random.default_rng(seed)
    total, _, grads = loss_and_gradients(
        sources, targets, params, train_mode=train_mode,
        rng=np.random.default_rng(seed) if train_mode else None)
    names = sorted(params.tensors)
    fd, an = [], []
    coord_rng = np.random.default_rng(123)
    for _ in range(n_coords):
        name = names[int(coord_rng.integers(len(names)))]
        arr = params.tensors[name]
        idx = tuple(int(coord_rng.integers(s)) for s in arr.shape)
        keep = arr[idx]
        arr[idx] = keep + eps
        up = loss()
        arr[idx] = keep - eps
        down = loss()
        arr[idx] = keep
        fd.append((up - down) / (2 * eps))
        an.append(grads[name][idx])
    fd = np.array(fd)
    an = np.array(an)
    denom = max(np.linalg.norm(fd), np.linalg.norm(an), 1e-12)
    return np.linalg.norm(fd - an) / denom


class TestGradients:
    def test_gradcheck_eval_mode(self):
        p = tiny_params(seed=0, d_cell=4)
        rng = np.random.default_rng(2)
        sources = random_seqs(rng, 7, 3, lo=2, hi=7)
        targets = random_seqs(rng, 6, 3, lo=2, hi=7)
        assert fd_check(p, sources, targets) < 1e-6

    def test_gradcheck_with_dropout(self):
        p = tiny_params(seed=1, d_cell=4, dropout=0.4)
        rng = np.random.default_rng(3)
        sources = random_seqs(rng, 7, 2, lo=2, hi=6)
        targets = random_seqs(rng, 6, 2, lo=2, hi=6)
        assert fd_check(p, sources, targets, train_mode=True) < 1e-6

    def test_unused_embedding_rows_have_zero_grad(self):
        p = tiny_params(seed=5, src_vocab=9, tgt_vocab=9)
        _, _, grads = loss_and_gradients([[4, EOS]], [[5, EOS]], p)
        assert np.all(grads["src_emb"][8] == 0)
        assert np.all(grads["tgt_emb"][8] == 0)
        assert np.any(grads["src_emb"][4] != 0)

    def test_duplicating_batch_doubles_gradients(self):
        p = tiny_params(seed=6)
        src = [4, 5, EOS]
        tgt = [4, 5, 5, EOS]
        _, _, g1 = loss_and_gradients([src], [tgt], p)
        _, _, g2 = loss_and_gradients([src, src], [tgt, tgt], p)
        for name in g1:
            np.testing.assert_allclose(g2[name], 2 * g1[name], rtol=1e-9, atol=1e-13)

    def test_grads_cover_every_tensor(self):
        p = tiny_params(seed=7)
        _, _, grads = loss_and_gradients([[4, 5, EOS]], [[4, 5, EOS]], p)
        assert set(grads) == set(p.tensors)
        for name, g in grads.items():
            assert g.shape == p.tensors[name].shape


class TestDropoutSemantics:
    def test_dropout_zero_train_equals_eval(self):
        p = tiny_params(seed=8, dropout=0.0)
        src, tgt = [[4, 5, EOS]], [[5, 4, EOS]]
        a = forward_batch(src, tgt, p, train_mode=True, rng=np.random.default_rng(0))
        b = forward_batch(src, tgt, p)
        assert a.total_nll == b.total_nll

    def test_same_rng_seed_replays_masks(self):
        p = tiny_params(seed=9, dropout=0.5)
        src, tgt = [[4, 5, 6, EOS]], [[5, 4, EOS]]
        a = forward_batch(src, tgt, p, train_mode=True, rng=np.random.default_rng(4))
        b = forward_batch(src, tgt, p, train_mode=True, rng=np.random.default_rng(4))
        c = forward_batch(src, tgt, p, train_mode=True, rng=np.random.default_rng(5))
        assert a.total_nll == b.total_nll
        assert a.total_nll != c.total_nll


class TestKernelBackends:
    def test_backend_parity(self):
        if "c" not in kernels.available_backends():
            pytest.skip("compiled backend not built")
        rng = np.random.default_rng(0)
        pre = rng.standard_normal((5, 16))
        c_prev = rng.standard_normal((5, 4))
        dh = rng.standard_normal((5, 4))
        dc = rng.standard_normal((5, 4))
        scores = rng.standard_normal((6, 9))
        mask = (rng.random((6, 9)) < 0.7)
        mask[:, 0] = True

        results = {}
        for name in kernels.available_backends():
            prev = kernels.use_backend(name)
            try:
                f = kernels.lstm_cell_forward(pre, c_prev)
                b = kernels.lstm_cell_backward(f[2], f[3], c_prev, dh, dc)
                s = kernels.masked_softmax(scores, mask.astype(np.uint8))
                results[name] = (*f, *b, s)
            finally:
                kernels.use_backend(prev)
        for a, b in zip(results["py"], results["c"]):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)

    def test_forced_backend_round_trip(self):
        start = kernels.BACKEND
        prev = kernels.use_backend("py")
        assert kernels.BACKEND == "py"
        kernels.use_backend(prev)
        assert kernels.BACKEND == start
        with pytest.raises(ValueError):
            kernels.use_backend("fortran")

    def test_full_model_parity_across_backends(self):
        if "c" not in kernels.available_backends():
            pytest.skip("compiled backend not built")
        p = tiny_params(seed=10)
        src, tgt = [[4, 5, 6, EOS], [5, EOS]], [[4, 4, EOS], [5, 4, 5, EOS]]
        outs = {}
        for name in kernels.available_backends():
            prev = kernels.use_backend(name)
            try:
                total, _, grads = loss_and_gradients(src, tgt, p)
                outs[name] = (total, grads)
            finally:
                kernels.use_backend(prev)
        assert abs(outs["py"][0] - outs["c"][0]) < 1e-12
        for name in outs["py"][1]:
            np.testing.assert_allclose(outs["py"][1][name], outs["c"][1][name],
                                       rtol=0, atol=1e-11)


class TestBatchDecoding:
    def test_batch_state_select_reorders(self):
        p = tiny_params(seed=12)
        enc = encode_source([4, 5, 6, EOS], p)
        state = init_decoder_state_batch(enc, 3, p)
        from vegagen.neural.model import decode_step_batch

        logp, state, alpha = decode_step_batch(np.array([SOS, 4, 5]), state, enc, p)
        assert logp.shape == (3, p.hyper.tgt_vocab)
        assert alpha.shape == (3, 4)
        picked = state.select(np.array([2, 0]))
        np.testing.assert_array_equal(picked.h[:, 0], state.h[:, 2])
        np.testing.assert_array_equal(picked.context[1], state.context[0])
