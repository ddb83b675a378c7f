"""Autodiff engine: closed-form derivatives, mode agreement, error paths."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robotdyn import autodiff as ad
from robotdyn.kinematics import forward_kinematics
import robotdyn as rd


# ---------------------------------------------------------------------------
# reverse mode: values and closed-form derivatives


def test_value_passthrough_identity():
    t = ad.Tape()
    x = t.var(3.5)
    y = x * 1.0
    assert ad.value(y) == 3.5
    ad.backward(y)
    assert x.adj == 1.0


def test_square_derivative_at_three():
    g = ad.gradient(lambda xs: xs[0] * xs[0], [3.0])
    np.testing.assert_allclose(g, [6.0], rtol=1e-12)
    # cross-check against central finite differences
    err = ad.check_gradient(lambda xs: xs[0] * xs[0], [3.0], step=1e-6)
    assert err < 1e-9


def test_sin_derivative_at_zero():
    g = ad.gradient(lambda xs: ad.sin(xs[0]), [0.0])
    np.testing.assert_allclose(g, [1.0], rtol=1e-12)


def test_gradient_of_sum_is_ones():
    g = ad.gradient(lambda xs: xs[0] + xs[1] + xs[2], [1.0, 2.0, 3.0])
    np.testing.assert_allclose(g, [1.0, 1.0, 1.0], rtol=1e-15)


def test_gradient_product_rule():
    g = ad.gradient(lambda xs: xs[0] * xs[1], [2.0, 3.0])
    np.testing.assert_allclose(g, [3.0, 2.0], rtol=1e-15)


def test_gradient_of_constant_is_zero():
    g = ad.gradient(lambda xs: 7.0, [1.0, 2.0])
    np.testing.assert_allclose(g, [0.0, 0.0])


def test_elementary_function_derivatives():
    x0 = 0.7
    cases = [
        (lambda xs: ad.sin(xs[0]), np.cos(x0)),
        (lambda xs: ad.cos(xs[0]), -np.sin(x0)),
        (lambda xs: ad.exp(xs[0]), np.exp(x0)),
        (lambda xs: ad.log(xs[0]), 1.0 / x0),
        (lambda xs: ad.sqrt(xs[0]), 0.5 / np.sqrt(x0)),
        (lambda xs: ad.acos(xs[0]), -1.0 / np.sqrt(1.0 - x0 * x0)),
        (lambda xs: xs[0] ** 3, 3.0 * x0 * x0),
        (lambda xs: 1.0 / xs[0], -1.0 / (x0 * x0)),
        (lambda xs: abs(xs[0]), 1.0),
    ]
    for f, want in cases:
        np.testing.assert_allclose(ad.gradient(f, [x0]), [want], rtol=1e-12)


def test_chain_rule_composition():
    f = lambda xs: ad.sin(ad.exp(xs[0] * xs[0]))
    x0 = 0.3
    want = np.cos(np.exp(x0 * x0)) * np.exp(x0 * x0) * 2 * x0
    np.testing.assert_allclose(ad.gradient(f, [x0]), [want], rtol=1e-12)


def test_fan_out_accumulates_adjoints():
    # x used twice: d/dx (x*x + sin(x)) = 2x + cos(x)
    f = lambda xs: xs[0] * xs[0] + ad.sin(xs[0])
    x0 = 1.1
    np.testing.assert_allclose(ad.gradient(f, [x0]), [2 * x0 + np.cos(x0)],
                               rtol=1e-12)


def test_where_differentiates_taken_branch_only():
    f = lambda xs: ad.where(xs[0] > 0.0, xs[0] * xs[0], -xs[0])
    np.testing.assert_allclose(ad.gradient(f, [2.0]), [4.0], rtol=1e-12)
    np.testing.assert_allclose(ad.gradient(f, [-2.0]), [-1.0], rtol=1e-12)


def test_maximum_minimum_subgradients():
    f = lambda xs: ad.maximum(xs[0], 1.0) + ad.minimum(xs[1], -1.0)
    np.testing.assert_allclose(ad.gradient(f, [2.0, -2.0]), [1.0, 1.0])
    np.testing.assert_allclose(ad.gradient(f, [0.0, 0.0]), [0.0, 0.0])


def test_array_valued_tape_with_reductions():
    # One tape node per op even with array values; amean reduces to a scalar.
    xv = np.array([1.0, 2.0, 3.0, 4.0])

    def f(xs):
        s = xs[0]
        return ad.amean((s * xv) * (s * xv))

    g = ad.gradient(f, [2.0])
    want = np.mean(2.0 * 2.0 * xv * xv)
    np.testing.assert_allclose(g, [want], rtol=1e-12)


def test_asum_matches_numpy():
    t = ad.Tape()
    x = t.var(np.array([1.0, -2.0, 3.5]))
    y = ad.asum(x * x)
    np.testing.assert_allclose(ad.value(y), np.sum(np.array([1, -2, 3.5]) ** 2))


# ---------------------------------------------------------------------------
# non-finite propagation


def test_division_by_zero_propagates_then_reports():
    with pytest.raises(ad.NonFiniteError) as exc:
        ad.gradient(lambda xs: (1.0 / xs[0]) + xs[0], [0.0])
    assert "non-finite" in str(exc.value)


def test_sqrt_of_negative_propagates_nan():
    with pytest.raises(ad.NonFiniteError):
        ad.gradient(lambda xs: ad.sqrt(xs[0]), [-1.0])


def test_log_of_negative_propagates_nan():
    with pytest.raises(ad.NonFiniteError):
        ad.gradient(lambda xs: ad.log(xs[0]), [-1.0])


def test_finite_output_from_intermediate_branch_is_fine():
    # where() evaluates both branches but only the taken one matters.
    f = lambda xs: ad.where(xs[0] > 0.0, ad.sqrt(xs[0]), 0.0 * xs[0])
    np.testing.assert_allclose(ad.gradient(f, [4.0]), [0.25], rtol=1e-12)


# ---------------------------------------------------------------------------
# forward mode and mode agreement


def test_jacobian_fwd_identity_map():
    J = ad.jacobian_fwd(lambda xs: xs, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(J, np.eye(3))


def test_jacobian_fwd_linear_map():
    J = ad.jacobian_fwd(lambda xs: [xs[0] + xs[1], xs[0] - xs[1]], [5.0, 7.0])
    np.testing.assert_allclose(J, [[1, 1], [1, -1]])


def test_jacobian_fwd_constant_row_is_zero():
    J = ad.jacobian_fwd(lambda xs: [xs[0] * xs[1], 4.0], [2.0, 3.0])
    np.testing.assert_allclose(J, [[3, 2], [0, 0]])


def test_forward_reverse_agreement_random():
    rng = np.random.default_rng(0)

    def f(xs):
        return xs[0] * ad.sin(xs[1]) + ad.exp(xs[2] * xs[0]) / (1.0 + xs[1] * xs[1])

    for _ in range(10):
        x0 = list(rng.uniform(-1, 1, size=3))
        g_rev = ad.gradient(f, x0)
        g_fwd = ad.jacobian_fwd(lambda xs: [f(xs)], x0)[0]
        np.testing.assert_allclose(g_rev, g_fwd, rtol=1e-12, atol=1e-14)


def test_fk_jacobian_fwd_matches_finite_difference(two_link):
    link = "tool"
    q0 = [0.4, -0.8]
    step = 1e-6

    def fk_pos(qs):
        pose = forward_kinematics(two_link, list(qs))[link]
        return [pose.position.x, pose.position.y, pose.position.z]

    J = ad.jacobian_fwd(fk_pos, q0)
    for j in range(2):
        qp, qm = list(q0), list(q0)
        qp[j] += step
        qm[j] -= step
        fd = (np.array(fk_pos(qp)) - np.array(fk_pos(qm))) / (2 * step)
        np.testing.assert_allclose(J[:, j], fd, atol=1e-6)


def test_dual_comparisons_use_value_channel():
    a = ad.Dual(1.0, (1.0,))
    b = ad.Dual(2.0, (0.0,))
    assert a < b and b > a and a <= b and b >= a


# ---------------------------------------------------------------------------
# check_gradient


def test_check_gradient_polynomial_small_error():
    f = lambda xs: xs[0] ** 3 + 2.0 * xs[0] * xs[1] + xs[1] ** 2
    err = ad.check_gradient(f, [0.7, -0.3], step=1e-6)
    assert err < 1e-7


def test_check_gradient_detects_injected_sign_bug():
    # A deliberately wrong-sign "gradient" shows up as error ~ 2|f'| / max(1,|f'|).
    class Flipped:
        """sin with a wrong-sign derivative rule, mimicking an AD bug."""

        def __call__(self, xs):
            x = xs[0]
            if isinstance(x, ad.Var):
                return x._new(np.sin(ad.value(x)), "buggy_sin",
                              ((x, -np.cos(ad.value(x))),))
            return np.sin(x)

    err = ad.check_gradient(Flipped(), [0.0], step=1e-6)
    np.testing.assert_allclose(err, 2.0, atol=1e-6)


def test_check_gradient_constant_is_zero():
    assert ad.check_gradient(lambda xs: 3.0, [1.0, 2.0]) == 0.0


def test_check_gradient_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        ad.check_gradient(lambda xs: xs[0], [1.0], step=0.0)


# ---------------------------------------------------------------------------
# property tests

finite = st.floats(min_value=-3, max_value=3, allow_nan=False,
                   allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(finite, finite)
def test_gradient_linearity_property(a, b):
    # d/dx (a*x + b) == a everywhere
    g = ad.gradient(lambda xs: a * xs[0] + b, [0.37])
    np.testing.assert_allclose(g, [a], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=-1.5, max_value=1.5, allow_nan=False))
def test_modes_agree_on_transcendental(x0):
    f = lambda xs: ad.sin(xs[0]) * ad.exp(xs[0])
    g_rev = ad.gradient(f, [x0])
    g_fwd = ad.jacobian_fwd(lambda xs: [f(xs)], [x0])[0]
    np.testing.assert_allclose(g_rev, g_fwd, rtol=1e-12, atol=1e-13)
