import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msstnet import numerics as nx
from msstnet.numerics import GradientError, ShapeError, tensor

from fd import numeric_grad, rel_error


def triple_loop(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


class TestMatmul:
    def test_identity(self, rng):
        b = rng.normal(size=(3, 4))
        np.testing.assert_array_equal(nx.matmul(tensor(np.eye(3)), tensor(b)).data, b)

    def test_two_by_one(self):
        out = nx.matmul(tensor([[1.0, 2.0]]), tensor([[3.0], [4.0]]))
        assert out.data.tolist() == [[11.0]]

    def test_against_triple_loop(self, rng):
        a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
        assert np.abs(nx.matmul(tensor(a), tensor(b)).data - triple_loop(a, b)).max() < 1e-12

    @pytest.mark.parametrize("m,k,n", [(1, 1, 1), (16, 16, 16), (7, 16, 2), (16, 3, 16)])
    def test_up_to_16(self, m, k, n):
        r = np.random.default_rng(m * 100 + k * 10 + n)
        a, b = r.normal(size=(m, k)), r.normal(size=(k, n))
        assert np.abs(nx.matmul(tensor(a), tensor(b)).data - triple_loop(a, b)).max() < 1e-12

    def test_shape_error_names_both(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
            nx.matmul(tensor(np.ones((2, 3))), tensor(np.ones((4, 5))))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(nx.softmax_lastdim(tensor(np.zeros(4))).data, [0.25] * 4, atol=0)

    def test_length_one(self):
        assert nx.softmax_lastdim(tensor([3.7])).data.tolist() == [1.0]

    def test_one_two_high_precision(self):
        mpmath.mp.dps = 40
        e = mpmath.e
        expected = [float(1 / (1 + e)), float(e / (1 + e))]
        np.testing.assert_allclose(nx.softmax_lastdim(tensor([1.0, 2.0])).data, expected, rtol=0, atol=1e-15)
        assert abs(expected[0] - 0.26894142) < 1e-8

    def test_empty(self):
        with pytest.raises(ShapeError):
            nx.softmax_lastdim(tensor(np.zeros((2, 0))))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=32))
    def test_rows_sum_to_one(self, xs):
        y = nx.softmax_lastdim(tensor(xs)).data
        assert np.all(y >= 0)
        assert abs(y.sum() - 1.0) < 1e-12


class TestLayerNorm:
    def test_constant_vector(self):
        out = nx.layer_norm(tensor(np.full(6, 2.5)), tensor(np.ones(6)), tensor(np.zeros(6)), 1e-5)
        np.testing.assert_array_equal(out.data, np.zeros(6))
        out = nx.layer_norm(tensor(np.full(6, 3.3)), tensor(np.ones(6)), tensor(np.zeros(6)), 1e-5)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-12)

    def test_two_values(self):
        out = nx.layer_norm(tensor([1.0, 3.0]), tensor(np.ones(2)), tensor(np.zeros(2)), 1e-14)
        np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-12)

    def test_two_pass_oracle(self, rng):
        x = rng.normal(size=16) * 3 + 1
        g, b = rng.normal(size=16), rng.normal(size=16)
        mu = sum(x) / 16
        var = sum((v - mu) ** 2 for v in x) / 16
        expected = [(v - mu) / np.sqrt(var + 1e-5) * gi + bi for v, gi, bi in zip(x, g, b)]
        out = nx.layer_norm(tensor(x), tensor(g), tensor(b), 1e-5)
        assert np.abs(out.data - expected).max() < 1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            nx.layer_norm(tensor(np.ones((2, 4))), tensor(np.ones(3)), tensor(np.zeros(3)))

    def test_per_token(self, rng):
        x = rng.normal(size=(3, 5, 8))
        out = nx.layer_norm(tensor(x), tensor(np.ones(8)), tensor(np.zeros(8)), 1e-12).data
        np.testing.assert_allclose(out.mean(-1), 0, atol=1e-12)
        np.testing.assert_allclose(out.var(-1), 1, atol=1e-9)


class TestBackward:
    def test_sum_gives_ones(self):
        x = nx.parameter([1.0, -2.0, 5.0])
        nx.backward(nx.sum(x))
        np.testing.assert_array_equal(x.grad, [1, 1, 1])

    def test_square(self):
        x = nx.parameter([1.0, 2.0])
        nx.backward(nx.sum(nx.mul(x, x)))
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])

    def test_non_scalar(self):
        x = nx.parameter([1.0, 2.0])
        with pytest.raises(GradientError, match="scalar"):
            nx.backward(nx.mul(x, x))

    def test_untracked(self):
        with pytest.raises(GradientError):
            nx.backward(nx.sum(tensor([1.0, 2.0])))

    def test_repeat_is_error(self):
        x = nx.parameter([1.0, 2.0])
        loss = nx.sum(nx.mul(x, x))
        nx.backward(loss)
        with pytest.raises(GradientError, match="already"):
            nx.backward(loss)

    def test_accumulates_across_passes(self):
        x = nx.parameter([3.0])
        nx.backward(nx.sum(x))
        nx.backward(nx.sum(nx.scale(x, 2.0)))
        assert x.grad.tolist() == [3.0]

    def test_shared_subexpression(self):
        x = nx.parameter([1.5, -0.5])
        y = nx.mul(x, x)
        nx.backward(nx.sum(nx.add(y, y)))
        np.testing.assert_allclose(x.grad, 4 * np.array([1.5, -0.5]))

    def test_composite_against_fd(self, rng):
        xv = rng.normal(size=(3, 4))
        wv = rng.normal(size=(5, 4))
        gv, bv = rng.normal(size=5), rng.normal(size=5)

        def build(x, w, g, b):
            h = nx.gelu(nx.linear(x, w))
            h = nx.layer_norm(h, g, b)
            return nx.sum(nx.mul(nx.softmax_lastdim(h), h))

        ps = [nx.parameter(v) for v in (xv, wv, gv, bv)]
        nx.backward(build(*ps))
        arrays = [xv, wv, gv, bv]
        for p, arr in zip(ps, arrays):
            num = numeric_grad(lambda: build(*[tensor(a) for a in arrays]).item(), arr)
            assert rel_error(p.grad, num).max() < 1e-4

    def test_no_grad_records_nothing(self):
        x = nx.parameter([1.0])
        with nx.no_grad():
            y = nx.scale(x, 2.0)
        assert not y.requires_grad


# every differentiable op, each on many random configurations
def _op_cases():
    def unary(fn, shape):
        return lambda r: ([r.normal(size=shape)], lambda x: fn(x))

    return {
        "add_broadcast": lambda r: (
            [r.normal(size=(3, 4)), r.normal(size=(4,))],
            lambda a, b: nx.add(a, b),
        ),
        "sub": lambda r: ([r.normal(size=(2, 3)), r.normal(size=(2, 3))], lambda a, b: nx.sub(a, b)),
        "mul_broadcast": lambda r: (
            [r.normal(size=(2, 3, 4)), r.normal(size=(3, 1))],
            lambda a, b: nx.mul(a, b),
        ),
        "matmul": lambda r: ([r.normal(size=(3, 4)), r.normal(size=(4, 2))], lambda a, b: nx.matmul(a, b)),
        "linear_bias": lambda r: (
            [r.normal(size=(2, 3, 4)), r.normal(size=(5, 4)), r.normal(size=5)],
            lambda x, w, b: nx.linear(x, w, b),
        ),
        "bmm": lambda r: (
            [r.normal(size=(2, 3, 4, 5)), r.normal(size=(2, 3, 5, 2))],
            lambda a, b: nx.bmm(a, b),
        ),
        "softmax": unary(nx.softmax_lastdim, (3, 5)),
        "log_softmax": unary(nx.log_softmax_lastdim, (2, 6)),
        "gelu": unary(nx.gelu, (4, 3)),
        "relu": lambda r: ([r.normal(size=(5, 4)) + np.sign(r.normal(size=(5, 4))) * 0.1], nx.relu),
        "layer_norm": lambda r: (
            [r.normal(size=(3, 6)), r.normal(size=6), r.normal(size=6)],
            lambda x, g, b: nx.layer_norm(x, g, b),
        ),
        "transpose_reshape": unary(lambda x: nx.reshape(nx.transpose(x, (2, 0, 1)), (4, -1)), (2, 3, 4)),
        "mean_axes": unary(lambda x: nx.mean(x, axis=(0, 2)), (3, 4, 5)),
        "getitem": unary(lambda x: x[1:3], (4, 3)),
        "pad_edge": unary(lambda x: nx.pad_edge(x, 2), (1, 2, 3, 4)),
        "conv2d": lambda r: (
            [r.normal(size=(2, 3, 6, 5)), r.normal(size=(4, 3, 3, 3)), r.normal(size=4)],
            lambda x, w, b: nx.conv2d(x, w, b, stride=2, pad=1),
        ),
        "resample2d": lambda r: (
            [r.normal(size=(2, 7, 5))],
            lambda x: nx.resample2d(x, nx.area_weights(7, 3), nx.area_weights(5, 2)),
        ),
        "cross_entropy": lambda r: (
            [r.normal(size=(4, 5))],
            lambda x: nx.cross_entropy(x, [0, 3, 4, 1]),
        ),
    }


OP_CASES = _op_cases()


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("op", sorted(OP_CASES))
def test_op_gradient_matches_fd(op, seed):
    r = np.random.default_rng(seed)
    arrays, fn = OP_CASES[op](r)
    probe = None

    def loss_of(ts):
        nonlocal probe
        out = fn(*ts)
        if probe is None:
            probe = r.normal(size=out.shape)
        return nx.sum(nx.mul(out, tensor(probe)))

    params = [nx.parameter(a) for a in arrays]
    nx.backward(loss_of(params))
    for p, arr in zip(params, arrays):
        num = numeric_grad(lambda: loss_of([tensor(a) for a in arrays]).item(), arr)
        assert rel_error(p.grad, num).max() < 1e-4, op


class TestConv:
    def test_hand_kernel_against_direct_convolution(self, rng):
        x = rng.normal(size=(1, 1, 5, 5))
        k = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
        out = nx.conv2d(tensor(x), tensor(k[None, None]), tensor([0.5]), stride=1, pad=1).data
        xp = np.pad(x[0, 0], 1, mode="edge")
        direct = np.zeros((5, 5))
        for i in range(5):
            for j in range(5):
                direct[i, j] = sum(k[a, b] * xp[i + a, j + b] for a in range(3) for b in range(3)) + 0.5
        np.testing.assert_allclose(out[0, 0], direct, atol=1e-13)

    def test_constant_stays_constant(self, rng):
        x = np.full((1, 2, 6, 6), 0.7)
        w = rng.normal(size=(3, 2, 3, 3))
        out = nx.conv2d(tensor(x), tensor(w), None, stride=2, pad=1).data
        for c in range(3):
            np.testing.assert_allclose(out[0, c], 0.7 * w[c].sum(), atol=1e-13)

    def test_area_weights_preserve_mean(self, rng):
        for n_in, n_out in [(14, 4), (7, 3), (56, 8), (5, 5)]:
            m = nx.area_weights(n_in, n_out)
            np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-14)
            x = rng.normal(size=(n_in, n_in))
            y = m @ x @ m.T
            assert abs(y.mean() - x.mean()) < 1e-12


class TestSGD:
    def test_plain_step(self):
        p = nx.parameter([1.0])
        p.grad = np.array([0.5])
        nx.sgd_step([p], lr=0.1, momentum=0.0, weight_decay=0.0)
        assert p.data.tolist() == [0.95]

    def test_zero_lr(self, rng):
        p = nx.parameter(rng.normal(size=4))
        before = p.data.copy()
        p.grad = rng.normal(size=4)
        nx.sgd_step([p], lr=0.0, momentum=0.9, weight_decay=5e-4, velocity={})
        np.testing.assert_array_equal(p.data, before)

    def test_two_momentum_steps_unrolled(self):
        lr, mu, wd = 0.1, 0.9, 5e-4
        p0, g1, g2 = 1.0, 0.5, -0.25
        p = nx.parameter([p0])
        opt = nx.SGD([p], momentum=mu, weight_decay=wd)
        p.grad = np.array([g1])
        opt.step(lr)
        p.grad = np.array([g2])
        opt.step(lr)
        v1 = g1 + wd * p0
        p1 = p0 - lr * v1
        v2 = mu * v1 + (g2 + wd * p1)
        p2 = p1 - lr * v2
        assert abs(p.data[0] - p2) < 1e-15

    def test_missing_grad(self):
        with pytest.raises(GradientError):
            nx.sgd_step([nx.parameter([1.0])], lr=0.1)


def test_ops_deterministic(rng):
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(4, 3, 3, 3))
    a = nx.conv2d(tensor(x), tensor(w), None, 2, 1).data
    b = nx.conv2d(tensor(x), tensor(w), None, 2, 1).data
    assert a.tobytes() == b.tobytes()


def test_rng_streams():
    a = nx.Rng(42).child("x").normal((5,))
    b = nx.Rng(42).child("x").normal((5,))
    c = nx.Rng(42).child("y").normal((5,))
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)
    with pytest.raises(ValueError):
        nx.Rng(-1)


def test_mac_counter():
    with nx.count_macs() as c:
        nx.linear(tensor(np.ones((3, 4))), tensor(np.ones((2, 4))))
        nx.conv2d(tensor(np.ones((1, 2, 4, 4))), tensor(np.ones((3, 2, 3, 3))), None, 1, 1)
    assert c.total == 3 * 4 * 2 + 16 * 3 * 2 * 9
    assert c.flops == 2 * c.total
