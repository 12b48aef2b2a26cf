import numpy as np
import pytest

from vulncf.nn import (
    GraphTensors,
    Hyper,
    ModelParams,
    ShapeError,
    backward,
    batch_gradients,
    cross_entropy,
    forward,
    init_params,
    load_checkpoint,
    loss_grad_logits,
    predict_index,
    save_checkpoint,
    softmax,
)

RNG = np.random.default_rng(20240)


def random_graph(n, d_in, density=0.15, rng=RNG):
    x = rng.normal(size=(n, d_in))
    adj = (rng.random((6, n, n)) < density).astype(float)
    return GraphTensors(x=x, adj=adj)


def small_params(seed=0, **kw):
    defaults = dict(d_in=9, d_h=8, steps=3, c1=6, c2=4)
    defaults.update(kw)
    return init_params(Hyper(seed=seed, **defaults))


class TestForward:
    def test_deterministic(self):
        params = small_params()
        gt = random_graph(6, 9)
        a = forward(gt, params).logits
        b = forward(gt, params).logits
        assert np.array_equal(a, b)

    def test_single_node_no_propagation(self):
        params = small_params(steps=0)
        gt = random_graph(1, 9, density=0.0)
        cache = forward(gt, params)
        # no propagation: the readout sees exactly the projected input
        assert np.array_equal(cache.y[:, :8], gt.x @ params.proj.T)

    def test_disconnected_identical_nodes_share_states(self):
        params = small_params()
        x = np.tile(RNG.normal(size=(1, 9)), (2, 1))
        gt = GraphTensors(x=x, adj=np.zeros((6, 2, 2)))
        cache = forward(gt, params)
        for step in cache.steps:
            assert np.allclose(step["htil"][0], step["htil"][1])
        assert np.allclose(cache.y[0], cache.y[1])

    def test_edge_order_invariance(self):
        from vulncf.dataset import Label, SourceFunction
        from vulncf.embedding import SkipgramConfig, node_features, pretrain_skipgram
        from vulncf.lang import assemble_cpg
        from vulncf.nn import graph_tensors

        fn = SourceFunction(id="t", source="int f(int a){if(a>0){return 1;}return 0;}", label=Label.BENIGN)
        g = assemble_cpg(fn)
        table = pretrain_skipgram([fn], cfg=SkipgramConfig(epochs=1, seed=0))
        feats = node_features(g, table)
        gt1 = graph_tensors(g, feats)
        reordered = type(g)(
            function_id=g.function_id, label=g.label, provenance=g.provenance,
            nodes=g.nodes, edges=tuple(reversed(g.edges)),
        )
        gt2 = graph_tensors(reordered, feats)
        params = init_params(Hyper(d_in=feats.shape[1], d_h=8, steps=2, c1=5, c2=3))
        assert np.array_equal(forward(gt1, params).logits, forward(gt2, params).logits)

    def test_shape_error(self):
        params = small_params()
        with pytest.raises(ShapeError):
            forward(random_graph(4, 11), params)

    def test_appended_zero_node_keeps_logits_with_masked_pooling(self):
        # fresh parameters: GRU and conv biases are zero, so an isolated
        # all-zero-feature node keeps a zero state and its extra (ReLU'd,
        # non-negative) conv outputs cannot move the pooled maximum
        params = small_params(seed=3)
        gt = random_graph(5, 9)
        base = forward(gt, params).logits
        x2 = np.vstack([gt.x, np.zeros((1, 9))])
        adj2 = np.zeros((6, 6, 6))
        adj2[:, :5, :5] = gt.adj
        padded = forward(GraphTensors(x=x2, adj=adj2), params).logits
        assert np.allclose(base, padded)


class TestLoss:
    def test_confident_correct_is_tiny(self):
        assert cross_entropy(np.array([10.0, -10.0]), 0) < 1e-4

    def test_uniform_logits_give_ln2(self):
        for label in (0, 1):
            assert cross_entropy(np.array([0.0, 0.0]), label) == pytest.approx(np.log(2))

    def test_confident_wrong_closed_form(self):
        # -log softmax_0([-10, 10]) = log(1 + e^20)
        expected = float(np.log1p(np.exp(20.0)))
        assert cross_entropy(np.array([-10.0, 10.0]), 0) == pytest.approx(expected, rel=1e-9)
        assert cross_entropy(np.array([-10.0, 10.0]), 0) == pytest.approx(20.0, abs=1e-6)

    def test_nonnegative(self):
        for _ in range(20):
            logits = RNG.normal(size=2) * 5
            assert cross_entropy(logits, int(RNG.integers(2))) >= 0.0


class TestGradients:
    def check_params(self, params, gt, label, coords=6, eps=1e-4, tol=1e-4):
        cache = forward(gt, params)
        grads, _, _ = backward(cache, params, loss_grad_logits(cache.logits, label))
        rng = np.random.default_rng(7)
        for name, t in params.tensors().items():
            flat = t.ravel()
            for i in rng.choice(flat.size, size=min(coords, flat.size), replace=False):
                orig = flat[i]
                flat[i] = orig + eps
                lp = cross_entropy(forward(gt, params).logits, label)
                flat[i] = orig - eps
                lm = cross_entropy(forward(gt, params).logits, label)
                flat[i] = orig
                fd = (lp - lm) / (2 * eps)
                an = grads[name].ravel()[i]
                assert abs(an - fd) / max(1.0, abs(fd)) < tol, (name, i, an, fd)

    def test_matches_finite_differences(self):
        params = small_params(seed=1)
        self.check_params(params, random_graph(7, 9), label=1)

    def test_matches_on_tiny_graph(self):
        params = small_params(seed=2)
        self.check_params(params, random_graph(2, 9, density=0.4), label=0)

    def test_classifier_bias_closed_form(self):
        # gradient of the final bias is softmax(logits) - onehot(label)
        params = small_params(seed=4)
        gt = random_graph(5, 9)
        cache = forward(gt, params)
        grads, _, _ = backward(cache, params, loss_grad_logits(cache.logits, 1))
        expected = softmax(cache.logits).copy()
        expected[1] -= 1.0
        assert np.allclose(grads["cls_b"], expected)

    def test_feature_gradient(self):
        params = small_params(seed=5)
        gt = random_graph(4, 9)
        cache = forward(gt, params)
        _, dx, _ = backward(cache, params, loss_grad_logits(cache.logits, 0))
        eps = 1e-5
        for (i, j) in [(0, 0), (1, 4), (3, 8)]:
            orig = gt.x[i, j]
            gt.x[i, j] = orig + eps
            lp = cross_entropy(forward(gt, params).logits, 0)
            gt.x[i, j] = orig - eps
            lm = cross_entropy(forward(gt, params).logits, 0)
            gt.x[i, j] = orig
            assert abs(dx[i, j] - (lp - lm) / (2 * eps)) < 1e-7

    def test_mask_gradient_matches_finite_differences(self):
        # soft node removal: mask scales both features and message sources
        params = small_params(seed=12)
        gt = random_graph(6, 9, density=0.3)
        rng = np.random.default_rng(3)
        mask = rng.uniform(0.2, 0.8, size=6)
        cache = forward(gt, params, mask=mask, mask_messages=True)
        _, dx, dmask = backward(cache, params, loss_grad_logits(cache.logits, 1))
        total = (dx * gt.x).sum(axis=1) + dmask
        eps = 1e-6
        for i in range(6):
            orig = mask[i]
            mask[i] = orig + eps
            lp = cross_entropy(forward(gt, params, mask=mask, mask_messages=True).logits, 1)
            mask[i] = orig - eps
            lm = cross_entropy(forward(gt, params, mask=mask, mask_messages=True).logits, 1)
            mask[i] = orig
            fd = (lp - lm) / (2 * eps)
            assert abs(total[i] - fd) / max(1.0, abs(fd)) < 1e-6, (i, total[i], fd)

    def test_duplicated_sample_equals_single(self):
        params = small_params(seed=6)
        gt = random_graph(5, 9)
        loss1, g1 = batch_gradients([(gt, 1)], params)
        loss2, g2 = batch_gradients([(gt, 1), (gt, 1)], params)
        assert loss1 == pytest.approx(loss2)
        for k in g1:
            assert np.allclose(g1[k], g2[k])


class TestPredict:
    def test_tie_breaks_to_class_zero(self):
        # equal logits arise from zeroed classifier weights and bias
        params = small_params(seed=8)
        params.cls_w[:] = 0.0
        params.cls_b[:] = 0.0
        idx, conf = predict_index(random_graph(4, 9), params)
        assert idx == 0
        assert conf == pytest.approx(0.5)

    def test_deterministic_across_calls(self):
        params = small_params(seed=9)
        gt = random_graph(6, 9)
        assert predict_index(gt, params) == predict_index(gt, params)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        params = small_params(seed=11)
        path = tmp_path / "ckpt.json"
        save_checkpoint(params, vocab_hash="abc", path=path, extra={"note": 1})
        loaded, doc = load_checkpoint(path, expect_vocab_hash="abc")
        for k, v in params.tensors().items():
            assert np.array_equal(loaded.tensors()[k], v)
        assert doc["extra"] == {"note": 1}

    def test_vocab_hash_mismatch_rejected(self, tmp_path):
        params = small_params()
        path = tmp_path / "ckpt.json"
        save_checkpoint(params, vocab_hash="abc", path=path)
        with pytest.raises(ValueError):
            load_checkpoint(path, expect_vocab_hash="different")
