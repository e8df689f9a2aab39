import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dhnn import autodiff as ad

from randexpr import as_function, random_suite


def grad_at(f, *point):
    tape = ad.Tape()
    xs = [tape.var(v) for v in point]
    return [float(g) for g in ad.gradient(f(*xs), xs)]


def test_product_rule():
    assert grad_at(lambda x, y: x * y, 2.0, 3.0) == [3.0, 2.0]


def test_tanh_at_zero():
    assert grad_at(ad.tanh, 0.0) == [1.0]


def test_quadratic_gradient():
    g = grad_at(lambda q, p: 0.5 * (ad.square(q) + ad.square(p)), 0.9, 0.0)
    assert g == pytest.approx([0.9, 0.0], abs=1e-15)


def test_second_derivative_of_cube():
    tape = ad.Tape()
    x = tape.var(2.0)
    (d1,) = ad.gradient_as_nodes(x * x * x, [x])
    assert float(d1) == 12.0
    assert ad.gradient(d1, [x])[0] == pytest.approx(12.0, abs=1e-12)


def test_mixed_partial_of_product():
    tape = ad.Tape()
    x, y = tape.var(1.3), tape.var(-0.4)
    dx, _ = ad.gradient_as_nodes(x * y, [x, y])
    assert ad.gradient(dx, [y])[0] == 1.0


def test_nested_parameter_gradient():
    # L(w) = (d/dx [w tanh x])^2 at w = 2, x = 0, so dL/dw = 2 w = 4
    tape = ad.Tape()
    w, x = tape.var(2.0), tape.var(0.0)
    (dx,) = ad.gradient_as_nodes(w * ad.tanh(x), [x])
    loss = ad.square(dx)
    assert ad.gradient(loss, [w])[0] == pytest.approx(4.0, abs=1e-14)


def test_unreachable_input_gets_zero():
    tape = ad.Tape()
    x, y = tape.var(1.0), tape.var(5.0)
    assert ad.gradient(ad.sin(x), [x, y])[1] == 0.0


def test_rejects_foreign_inputs():
    tape, other = ad.Tape(), ad.Tape()
    x = tape.var(1.0)
    y = x * 2.0
    with pytest.raises(ValueError):
        ad.gradient(y, [other.var(1.0)])
    with pytest.raises(ValueError):
        ad.gradient(y, [tape.constant(1.0)])


def test_nodes_match_plain_gradient_bitwise():
    for tree, point in random_suite(200, seed=7):
        f = as_function(tree)
        tape = ad.Tape()
        xs = [tape.var(v) for v in point]
        y = f(xs)
        plain = ad.gradient(y, xs)
        nodes = ad.gradient_as_nodes(y, xs)
        for a, b in zip(plain, nodes):
            assert np.array_equal(a, b.value)


@pytest.mark.filterwarnings("ignore:overflow")  # tiny denominators overflow on both sides
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_values_match_plain_arithmetic(a, b):
    tape = ad.Tape()
    x, y = tape.var(a), tape.var(b)
    assert float(x + y) == a + b
    assert float(x - y) == a - b
    assert float(x * y) == a * b
    assert float(ad.square(x)) == a * a
    assert float(ad.tanh(x)) == np.tanh(a)
    assert float(ad.sin(x)) == np.sin(a)
    assert float(ad.cos(x)) == np.cos(a)
    if b != 0:
        assert float(x / y) == a / b


def test_fd_check_examples():
    assert ad.finite_difference_check(
        lambda xs: ad.square(xs[0]) + ad.square(xs[1]) + ad.square(xs[2]), [1, 2, 3]) <= 1e-8
    assert ad.finite_difference_check(lambda xs: ad.tanh(xs[0]), [0.5]) <= 1e-7
    assert ad.finite_difference_check(lambda xs: xs[0] * 0.0 + 3.0, [0.7]) == 0.0


def test_random_first_derivatives():
    for tree, point in random_suite(300, seed=1):
        assert ad.finite_difference_check(as_function(tree), point) <= 1e-5


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_mixed_partials_commute(seed):
    (tree, point), = random_suite(1, seed=seed)
    f = as_function(tree)
    tape = ad.Tape()
    xs = [tape.var(v) for v in point]
    first = ad.gradient_as_nodes(f(xs), xs)
    hess = np.array([[float(h) for h in ad.gradient(g, xs)] if g.tracked else [0.0] * 3
                     for g in first])
    assert np.max(np.abs(hess - hess.T)) <= 1e-10


def test_tape_growth_is_linear():
    sizes = []
    for n in (10, 20, 40):
        tape = ad.Tape()
        x = y = tape.var(0.3)
        for _ in range(n):
            y = ad.tanh(y * x + 1.0)
        sizes.append(len(tape))
    assert sizes[1] - sizes[0] == (sizes[2] - sizes[1]) / 2


def test_array_ops_match_finite_differences():
    rng = np.random.default_rng(0)
    a0 = rng.normal(size=(4, 3))
    w0 = rng.normal(size=(3, 5))
    b0 = rng.normal(size=5)

    def f(a, w, b):
        return ad.sum_all(ad.tanh(a @ w + b) * ad.cos(a[:, 1:2]))

    tape = ad.Tape()
    a, w, b = tape.var(a0), tape.var(w0), tape.var(b0)
    ga, gw, gb = ad.gradient(f(a, w, b), [a, w, b])

    def value(a_, w_, b_):
        t = ad.Tape()
        return float(f(t.var(a_), t.var(w_), t.var(b_)))

    h = 1e-6
    for arr, grad, pos in ((a0, ga, 0), (w0, gw, 1), (b0, gb, 2)):
        for idx in np.ndindex(arr.shape):
            args = [a0, w0, b0]
            hi = [x.copy() for x in args]
            lo = [x.copy() for x in args]
            hi[pos][idx] += h
            lo[pos][idx] -= h
            fd = (value(*hi) - value(*lo)) / (2 * h)
            assert grad[idx] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_transpose_and_mean():
    tape = ad.Tape()
    x = tape.var(np.arange(6.0).reshape(2, 3))
    (g,) = ad.gradient(ad.mean(ad.square(x.T)), [x])
    assert np.allclose(g, 2 * np.arange(6.0).reshape(2, 3) / 6)


def test_division_rule():
    g = grad_at(lambda x, y: x / y, 1.5, 2.0)
    assert g == pytest.approx([0.5, -1.5 / 4], rel=1e-15)
    assert math.isfinite(g[1])
