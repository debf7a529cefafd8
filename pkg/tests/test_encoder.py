import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subtree2vec.autodiff import Tensor, gradient_check
from subtree2vec.encoder import (
    ENCODER_TENSORS, EncoderParams, encode, forward, init_params, prepare_tree, tbcnn_conv_layer,
    window_coefficients,
)
from subtree2vec.minilang import parse_minilang
from subtree2vec.trainer import label_loss, predict_subtree_distribution
from subtree2vec.vocab import build_token_vocab, build_type_vocab
from conftest import random_asts


def params_for(trees, D=6, seed=0, layers=2):
    return init_params(build_type_vocab(trees), build_token_vocab(trees), D, layers, seed)


class TestWindows:
    def test_three_children(self):
        assert window_coefficients(3) == [(0.0, 1.0, 0.0), (0.0, 0.5, 0.5), (0.0, 0.0, 1.0)]

    def test_single_child_is_split_evenly(self):
        assert window_coefficients(1) == [(0.0, 0.5, 0.5)]

    def test_leaf(self):
        assert window_coefficients(0) == []

    @settings(max_examples=50, deadline=None)
    @given(random_asts(max_nodes=10), st.integers(0, 5))
    def test_matches_per_window_loop(self, tree, seed):
        """The matrix form equals a direct loop over (parent, children) windows."""
        p = params_for([tree], D=4, seed=seed)
        prepared = prepare_tree(tree, p.type_vocab, p.token_vocab)
        H = np.random.default_rng(seed).normal(size=(len(tree), 4))
        got = tbcnn_conv_layer(prepared, Tensor(H), p).value
        row = {nid: i for i, nid in enumerate(tree.preorder())}
        Wt, Wl, Wr, b = (p.W_t.value, p.W_l.value, p.W_r.value, p.b_conv.value)
        for nid in tree.preorder():
            kids = tree[nid].children
            acc = H[row[nid]] @ Wt
            m = len(kids)
            for i, c in enumerate(kids, start=1):
                eta_r = 0.5 if m == 1 else (i - 1) / (m - 1)
                eta_l = 1 - eta_r
                acc = acc + H[row[c]] @ (eta_l * Wl + eta_r * Wr)
            np.testing.assert_allclose(got[row[nid]], np.tanh(acc + b), atol=1e-12)


class TestForward:
    @settings(max_examples=1000, deadline=None)
    @given(random_asts(max_nodes=10), st.integers(0, 10_000))
    def test_attention_and_distribution_normalized(self, tree, seed):
        p = params_for([tree], D=5, seed=seed)
        v, alpha = encode(tree, p)
        assert abs(alpha.sum() - 1.0) <= 1e-9
        W = np.random.default_rng(seed).normal(size=(7, 5))
        assert abs(predict_subtree_distribution(v, W).sum() - 1.0) <= 1e-9

    def test_shapes_and_determinism(self):
        tree = parse_minilang("int f(int a) { return a * 2; }", "f")
        p = params_for([tree], D=8)
        v, alpha = encode(tree, p)
        assert v.values.shape == (8,)
        assert alpha.shape == (len(tree),)
        v2, _ = encode(tree, params_for([tree], D=8))
        assert np.array_equal(v.values, v2.values)
        assert v.source_id == "f"

    @pytest.mark.parametrize("mode", ["type", "token", "combine"])
    def test_init_modes(self, mode):
        tree = parse_minilang("x = y + 1;")
        v, _ = encode(tree, params_for([tree]), init_mode=mode)
        assert np.all(np.isfinite(v.values))

    def test_max_aggregation(self):
        tree = parse_minilang("x = y + 1;")
        p = params_for([tree])
        v, alpha = encode(tree, p, aggregate_mode="max")
        assert alpha is None
        prepared = prepare_tree(tree, p.type_vocab, p.token_vocab)
        _, _, H = forward(prepared, p, aggregate_mode="max")
        np.testing.assert_array_equal(v.values, H.value.max(axis=0))

    def test_bad_modes(self):
        tree = parse_minilang("x;")
        with pytest.raises(ValueError):
            encode(tree, params_for([tree]), init_mode="bogus")
        with pytest.raises(ValueError):
            encode(tree, params_for([tree]), aggregate_mode="bogus")

    def test_unknown_symbols_use_unk_row(self):
        known = parse_minilang("x = 1;")
        other = parse_minilang("zzz = 1;")
        p = params_for([known])
        prepared = prepare_tree(other, p.type_vocab, p.token_vocab)
        assert 0 in prepared.token_idx

    def test_init_is_per_tensor(self):
        """Drawing a tensor does not depend on other tensors' shapes."""
        t1 = parse_minilang("x;")
        t2 = parse_minilang("int f(int a, int b) { while (a) { b = b[a] + f(a); } }")
        a, b = params_for([t1], D=6, seed=3), params_for([t2], D=6, seed=3)
        for name in ("W_t", "W_l", "W_r", "b_conv", "a", "W_fuse"):
            assert np.array_equal(getattr(a, name).value, getattr(b, name).value)
        assert np.abs(a.W_t.value).max() <= 0.05


def _pipeline(tree, labels, base, init_mode):
    """Scalar loss of encoder + subtree head as a function of all parameter tensors."""
    names = list(ENCODER_TENSORS) + ["W_subtrees"]

    def f(*ts):
        kw = dict(zip(names, ts))
        W = kw.pop("W_subtrees")
        p = EncoderParams(**kw, type_vocab=base.type_vocab, token_vocab=base.token_vocab,
                          num_conv_layers=base.num_conv_layers)
        v, _, _ = forward(prepare_tree(tree, p.type_vocab, p.token_vocab), p, init_mode)
        return label_loss(v, W, labels)

    return f, names


class TestFullPipelineGradient:
    @pytest.mark.parametrize("init_mode", ["type", "token", "combine"])
    @settings(max_examples=4, deadline=None)
    @given(tree=random_asts(max_nodes=8), seed=st.integers(0, 1000),
           n_labels=st.integers(1, 5), D=st.integers(2, 8))
    def test_gradients(self, init_mode, tree, seed, n_labels, D):
        base = params_for([tree], D=D, seed=seed)
        rng = np.random.default_rng(seed)
        # larger weights than the default init so tanh is not in its linear regime
        values = [rng.normal(scale=0.5, size=t.shape) for t in base.tensors().values()]
        values.append(rng.normal(scale=0.5, size=(n_labels, D)))
        labels = list(rng.integers(0, n_labels, size=rng.integers(1, 4)))
        f, _ = _pipeline(tree, labels, base, init_mode)
        report = gradient_check(f, values, tol=1e-3)
        assert report.passed, str(report)


class TestEncoderProperties:
    @settings(max_examples=100, deadline=None)
    @given(random_asts(max_nodes=10), st.integers(0, 100))
    def test_vector_inside_convex_hull(self, tree, seed):
        p = params_for([tree], D=5, seed=seed)
        prepared = prepare_tree(tree, p.type_vocab, p.token_vocab)
        v, alpha, H = forward(prepared, p)
        assert (alpha.value > 0).all()
        assert (H.value.min(axis=0) - 1e-12 <= v.value).all()
        assert (v.value <= H.value.max(axis=0) + 1e-12).all()

    @settings(max_examples=50, deadline=None)
    @given(random_asts(max_nodes=10), st.randoms(use_true_random=False))
    def test_storage_order_does_not_matter(self, tree, rnd):
        from subtree2vec.trees import AstNode, build_ast
        ids = list(tree.nodes)
        new = [i * 7 + 3 for i in ids]
        rnd.shuffle(new)
        m = dict(zip(ids, new))
        moved = build_ast([AstNode(m[n.id], n.type_label, n.token, tuple(m[c] for c in n.children))
                           for n in reversed(list(tree.nodes.values()))], root=m[tree.root])
        p = params_for([tree], D=4)
        assert np.array_equal(encode(tree, p)[0].values, encode(moved, p)[0].values)

    def test_zero_weights(self):
        tree = parse_minilang("x;")
        p = params_for([tree], D=3)
        for name in ("W_fuse", "b_fuse", "W_t", "W_l", "W_r", "a"):
            getattr(p, name).value[...] = 0.0
        p.b_conv.value[...] = 0.3
        prepared = prepare_tree(tree, p.type_vocab, p.token_vocab)
        v, alpha, _ = forward(prepared, p)
        # zero fusion gives zero initial rows; a = 0 gives uniform attention
        np.testing.assert_allclose(alpha.value, np.full(len(tree), 1 / len(tree)))
        np.testing.assert_allclose(v.value, np.tanh(0.3 * np.ones(3)))

    def test_single_node(self):
        from subtree2vec.trees import AstNode, build_ast
        tree = build_ast([AstNode(0, "literal", "1")])
        v, alpha = encode(tree, params_for([tree], D=4))
        assert alpha.tolist() == [1.0]

    def test_type_mode_ignores_tokens(self):
        a = parse_minilang("x = y + 1;")
        b = parse_minilang("p = q + 9;")
        p = params_for([a, b], D=4)
        assert np.array_equal(encode(a, p, "type")[0].values, encode(b, p, "type")[0].values)
        assert not np.array_equal(encode(a, p, "combine")[0].values, encode(b, p, "combine")[0].values)
