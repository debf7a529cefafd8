import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subtree2vec import autodiff as ad
from subtree2vec.autodiff import ShapeError, Tape, Tensor, gradient_check

seeds = st.integers(0, 2**31 - 1)


def arr(seed, *shape):
    return np.random.default_rng(seed).normal(size=shape)


# one scalar-valued wrapper per primitive; inputs are drawn from the seed
PRIMITIVE_CASES = {
    "matmul_2d_1d": (lambda W, x: ad.reduce_sum(ad.tanh(ad.matmul(W, x))), [(3, 4), (4,)]),
    "matmul_2d_2d": (lambda A, B: ad.reduce_sum(ad.tanh(ad.matmul(A, B))), [(2, 3), (3, 4)]),
    "matmul_1d_2d": (lambda x, W: ad.reduce_sum(ad.tanh(ad.matmul(x, W))), [(3,), (3, 2)]),
    "add_bias": (lambda A, b: ad.reduce_sum(ad.tanh(ad.add(A, b))), [(3, 4), (4,)]),
    "scale": (lambda a: ad.reduce_sum(ad.tanh(ad.scale(a, -1.7))), [(5,)]),
    "tanh": (lambda a: ad.reduce_sum(ad.tanh(a)), [(2, 3)]),
    "sigmoid": (lambda a: ad.reduce_sum(ad.tanh(ad.sigmoid(a))), [(4,)]),
    "softmax_vec": (lambda a, w: ad.matmul(ad.softmax(a), w), [(5,), (5,)]),
    "softmax_rows": (lambda a, w: ad.reduce_sum(ad.matmul(ad.softmax(a, axis=1), w)), [(3, 4), (4,)]),
    "embedding": (lambda M, w: ad.matmul(ad.reduce_sum(ad.embedding_lookup(M, [0, 2, 2]), 0), w),
                  [(4, 3), (3,)]),
    "reduce_sum_axis": (lambda a, w: ad.matmul(ad.reduce_sum(a, axis=0), w), [(3, 4), (4,)]),
    "reduce_max": (lambda a, w: ad.matmul(ad.reduce_max(a, axis=0), w), [(4, 3), (3,)]),
    "weighted_sum": (lambda p, R, w: ad.matmul(ad.weighted_sum(ad.softmax(p), R), w),
                     [(3,), (3, 4), (4,)]),
    "concat": (lambda a, b, w: ad.matmul(ad.tanh(ad.concat(a, b)), w), [(2,), (3,), (5,)]),
    "cross_entropy": (lambda z: ad.cross_entropy(z, [1, 3, 1]), [(4,)]),
}


class TestPrimitiveGradients:
    @pytest.mark.parametrize("name", sorted(PRIMITIVE_CASES))
    @settings(max_examples=10, deadline=None)
    @given(seed=seeds)
    def test_matches_finite_differences(self, name, seed):
        f, shapes = PRIMITIVE_CASES[name]
        inputs = [arr(seed + k, *s) for k, s in enumerate(shapes)]
        report = gradient_check(f, inputs, tol=1e-4)
        assert report.passed, str(report)

    def test_wrong_backward_is_caught(self):
        # negative control: a tanh whose backward forgets the chain rule factor
        def bad_tanh(a):
            y = np.tanh(a.value)
            return ad.apply("bad_tanh", y, (a,), lambda g: (g,))

        report = gradient_check(lambda a: ad.reduce_sum(bad_tanh(a)), [arr(0, 4)], tol=1e-4)
        assert not report.passed
        assert report.max_rel_error > 0.01

    def test_max_tie_goes_to_lowest_index(self):
        a = Tensor(np.array([[1.0, 2.0], [1.0, 0.0], [0.5, 2.0]]), requires_grad=True)
        with Tape() as tape:
            out = ad.reduce_sum(ad.reduce_max(a, axis=0))
        tape.backward(out)
        np.testing.assert_array_equal(a.grad, [[1, 1], [0, 0], [0, 0]])


class TestHandValues:
    def test_cross_entropy_single(self):
        loss = ad.cross_entropy(Tensor(np.array([math.log(2), 0.0])), 0)
        assert float(loss.value) == pytest.approx(-math.log(2 / 3), abs=1e-12)
        assert float(loss.value) == pytest.approx(0.4055, abs=1e-4)

    def test_two_label_mean(self):
        logits = np.array([math.log(3), 0.0])
        np.testing.assert_allclose(ad.softmax(Tensor(logits)).value, [0.75, 0.25], atol=1e-15)
        loss = ad.cross_entropy(Tensor(logits), [0, 1])
        assert float(loss.value) == pytest.approx(0.8369882, abs=1e-6)

    def test_uniform_logits(self):
        assert float(ad.cross_entropy(Tensor(np.zeros(4)), [2]).value) == pytest.approx(math.log(4))

    def test_cross_entropy_gradient(self):
        z = Tensor(np.array([math.log(3), 0.0]), requires_grad=True)
        with Tape() as tape:
            loss = ad.cross_entropy(z, [0, 1])
        tape.backward(loss)
        # p - mean one-hot = [0.75 - 0.5, 0.25 - 0.5]
        np.testing.assert_allclose(z.grad, [0.25, -0.25], atol=1e-15)

    def test_float64(self):
        assert Tensor([1, 2]).value.dtype == np.float64


class TestTape:
    def test_no_recording_outside_tape(self):
        a = Tensor(np.ones(3), requires_grad=True)
        out = ad.tanh(a)
        assert not out.requires_grad

    def test_gradient_accumulates_across_uses(self):
        a = Tensor(np.array([0.3, -0.2]), requires_grad=True)
        with Tape() as tape:
            out = ad.reduce_sum(ad.add(ad.tanh(a), ad.tanh(a)))
        tape.backward(out)
        np.testing.assert_allclose(a.grad, 2 * (1 - np.tanh(a.value) ** 2))

    def test_backward_needs_scalar(self):
        a = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            out = ad.tanh(a)
        with pytest.raises(ShapeError):
            tape.backward(out)

    def test_constants_get_no_gradient(self):
        a = Tensor(np.ones(2), requires_grad=True)
        c = Tensor(np.ones(2))
        with Tape() as tape:
            out = ad.reduce_sum(ad.add(a, c))
        tape.backward(out)
        assert c.grad is None

    @pytest.mark.parametrize("call", [
        lambda: ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones(2))),
        lambda: ad.add(Tensor(np.ones(3)), Tensor(np.ones(2))),
        lambda: ad.concat(Tensor(np.ones((2, 2))), Tensor(np.ones((3, 3))), axis=1),
        lambda: ad.weighted_sum(Tensor(np.ones(2)), Tensor(np.ones((3, 2)))),
    ])
    def test_shape_errors(self, call):
        with pytest.raises(ShapeError):
            call()

    def test_embedding_out_of_range(self):
        with pytest.raises(IndexError):
            ad.embedding_lookup(Tensor(np.ones((2, 2))), 2)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
def test_softmax_sums_to_one(xs):
    p = ad.softmax(Tensor(np.array(xs))).value
    assert abs(p.sum() - 1.0) <= 1e-9
    assert (p >= 0).all()
