import math

import numpy as np
import pytest

from confop import parse
from confop.coefficients import SingularCoefficientError
from confop.jets import (
    GeometryStack,
    InsufficientOrderError,
    Jet,
    MetricJet,
    curvature_stack,
    evaluate,
    evaluate_with_scale,
    rescale_test,
    sample_linearized,
    sample_metric_jet,
    sample_scalar_jet,
)
from confop.jets import constant, get_space, jeinsum, jexp, jinv_matrix, jreciprocal


def _conformal_to_flat(n, order, factor):
    """The metric factor * delta for a scalar jet ``factor``."""
    sp = factor.space
    return MetricJet(n, order, jeinsum(",ij->ij", factor, constant(sp, np.eye(n))))


def _round_sphere(n, order):
    # (1 + |x|^2/4)^{-2} delta has sectional curvature 1
    sp = get_space(n, order)
    u = constant(sp, 1.0)
    for v in range(n):
        x = Jet(sp, sp.variable(v))
        u = u + (x * x).scale(0.25)
    r = jreciprocal(u)
    return _conformal_to_flat(n, order, r * r)


def test_sampling_deterministic():
    a = sample_metric_jet(7, 5, 3, trial=2)
    b = sample_metric_jet(7, 5, 3, trial=2)
    c = sample_metric_jet(7, 5, 3, trial=3)
    assert np.array_equal(a.g.data, b.g.data)
    assert not np.array_equal(a.g.data, c.g.data)


def test_zero_amplitude_is_flat():
    mj = sample_metric_jet(1, 5, 4, amplitude=0.0)
    st = curvature_stack(mj)
    assert np.array_equal(st.g.value(), np.eye(5))
    assert np.abs(st.riemann.value()).max() == 0.0
    assert np.abs(st.nabla("R", 2).value()).max() == 0.0


def test_sampler_argument_checks():
    with pytest.raises(ValueError):
        sample_metric_jet(0, 2, 3)
    with pytest.raises(ValueError):
        sample_metric_jet(0, 5, 1)
    with pytest.raises(ValueError):
        sample_metric_jet(0, 5, 3, amplitude=0.5)


def test_round_sphere():
    n = 5
    st = GeometryStack(_round_sphere(n, 4).g)
    g = np.eye(n)
    assert st.scalar.value() == pytest.approx(n * (n - 1))
    assert np.allclose(st.ricci.value(), (n - 1) * g)
    assert np.allclose(st.schouten.value(), 0.5 * g)
    assert np.abs(st.weyl.value()).max() < 1e-12
    assert np.abs(st.nabla("R", 1).value()).max() < 1e-12
    R = st.riemann.value()
    # sectional curvature +1 in the sign convention used throughout
    assert R[0, 1, 0, 1] == pytest.approx(-1.0) or R[0, 1, 1, 0] == pytest.approx(-1.0)
    assert R[0, 1, 0, 1] * R[0, 1, 1, 0] < 0


def test_conformally_flat_has_no_weyl():
    n, order = 5, 5
    phi = sample_scalar_jet(3, n, order, amplitude=0.4)
    st = GeometryStack(_conformal_to_flat(n, order, jexp(phi.scale(2.0))).g)
    assert np.abs(st.weyl.value()).max() < 1e-12
    assert np.abs(st.nabla("W", 2).value()).max() < 1e-10
    assert np.abs(st.cotton.value()).max() < 1e-10
    assert np.abs(st.riemann.value()).max() > 1e-3


def test_curvature_symmetries():
    st = curvature_stack(sample_metric_jet(4, 5, 4))
    R = st.riemann.value()
    assert np.allclose(R, -R.transpose(1, 0, 2, 3))
    assert np.allclose(R, R.transpose(2, 3, 0, 1))
    assert np.allclose(R + R.transpose(1, 2, 0, 3) + R.transpose(2, 0, 1, 3), 0)
    dR = st.nabla("R", 1).value()
    assert np.allclose(dR + dR.transpose(1, 2, 0, 3, 4) + dR.transpose(2, 0, 1, 3, 4), 0)
    W = st.weyl.value()
    assert np.abs(np.einsum("iijk->jk", W)).max() < 1e-12


def test_evaluate_examples():
    mj = sample_metric_jet(5, 5, 4)
    st = curvature_stack(mj)
    S = float(st.scalar.value())
    assert float(evaluate(parse("S"), st)) == pytest.approx(S)
    # the trace of Ric is S
    assert float(evaluate(parse("Ric{a,a}"), st)) == pytest.approx(S)
    assert float(evaluate(parse("g{a,a}"), st)) == pytest.approx(5.0)
    assert float(evaluate(parse("n*S - 5*S"), st)) == pytest.approx(0.0, abs=1e-14)
    f = sample_scalar_jet(5, 5, 4)
    lap = float(evaluate(parse("D{a,a}f"), st, f_jet=f))
    hess = evaluate(parse("D{a,b}f"), st, f_jet=f)
    ginv = np.linalg.inv(st.g.value())
    assert lap == pytest.approx(float(np.einsum("ab,ab->", ginv, hess)))


def test_free_indices_give_arrays():
    st = curvature_stack(sample_metric_jet(6, 5, 3))
    v = evaluate(parse("Ric{a,b}"), st)
    assert v.shape == (5, 5) and np.allclose(v, st.ricci.value())


def test_rescale_identity_and_constant():
    n = 5
    mj = sample_metric_jet(8, n, 4)
    f = sample_scalar_jet(8, n, 4)
    zero = sample_scalar_jet(8, n, 4, amplitude=0.0, stream=9).scale(0.0)
    assert rescale_test(parse("D{a,a}f"), ("1-n/2", "-1-n/2"), mj, f, zero) < 1e-14
    # constant phi: every natural quantity rescales homogeneously
    c = constant(get_space(n, 4), 0.7)
    for text, bd in (("D{a,a}f", ("w", "w-2")), ("S", (0, -2)), ("W{a,b,c,d}*W{a,b,c,d}", (0, -4))):
        assert rescale_test(parse(text), bd, mj, f, c, w_value=0.3) < 1e-12


def test_rescale_detects_non_invariance():
    n = 5
    mj = sample_metric_jet(9, n, 4)
    f = sample_scalar_jet(9, n, 4)
    phi = sample_scalar_jet(9, n, 4, stream=3)
    assert rescale_test(parse("D{a,a}f"), ("1-n/2", "-1-n/2"), mj, f, phi) > 1e-3


def test_jet_arithmetic():
    sp = get_space(3, 4)
    x = Jet(sp, sp.variable(0))
    y = Jet(sp, sp.variable(1))
    one = constant(sp, 1.0)
    p = (one + x) * (one - y)
    assert p.coefficient((1, 1, 0)) == pytest.approx(-1.0)
    e = jexp(x)
    assert e.coefficient((3, 0, 0)) == pytest.approx(1 / 6)
    r = jreciprocal(one + x)
    assert r.coefficient((4, 0, 0)) == pytest.approx(1.0)
    assert np.allclose((r * (one + x)).data, one.data)
    assert x.diff(0).value() == pytest.approx(1.0)
    assert (x * x).diff(0).diff(0).value() == pytest.approx(2.0)


def test_matrix_inverse_jet():
    mj = sample_metric_jet(2, 4, 3)
    inv = jinv_matrix(mj.g)
    prod = jeinsum("ij,jk->ik", mj.g, inv)
    assert np.allclose(prod.data, constant(mj.g.space, np.eye(4)).data)


def test_scalar_curvature_homogeneity():
    # S scales by c^-2 under g -> c^2 g
    mj = sample_metric_jet(3, 5, 3)
    c = 1.7
    big = MetricJet(5, 3, mj.g.scale(c * c))
    s0 = float(curvature_stack(mj).scalar.value())
    s1 = float(curvature_stack(big).scalar.value())
    assert s1 == pytest.approx(s0 / c**2)


def test_insufficient_order():
    with pytest.raises(InsufficientOrderError):
        curvature_stack(MetricJet(5, 1, constant(get_space(5, 1), np.eye(5))))
    st = curvature_stack(sample_metric_jet(1, 5, 2))
    with pytest.raises(InsufficientOrderError):
        evaluate(parse("D{a}S*D{a}S"), st)


def test_missing_scalar_jet():
    st = curvature_stack(sample_metric_jet(1, 5, 3))
    with pytest.raises(ValueError):
        evaluate(parse("D{a,a}f"), st)


def test_singular_coefficient():
    st = curvature_stack(sample_metric_jet(1, 5, 3))
    with pytest.raises(SingularCoefficientError):
        evaluate(parse("(1/(n-5))*S"), st)


def test_scale_is_absolute_sum():
    st = curvature_stack(sample_metric_jet(1, 5, 3))
    val, scale = evaluate_with_scale(parse("Ric{a,a} - S"), st)
    assert abs(val) < 1e-14 and scale == pytest.approx(2 * abs(float(st.scalar.value())))


def test_linearized_symmetries():
    env = sample_linearized(0, 5, {"LR": [0, 1], "T": [2]})
    R = env.lr[0]
    assert np.allclose(R, -R.transpose(1, 0, 2, 3))
    assert np.allclose(R, R.transpose(2, 3, 0, 1))
    assert np.allclose(R + R.transpose(1, 2, 0, 3) + R.transpose(2, 0, 1, 3), 0)
    R1 = env.lr[1]
    assert np.allclose(R1 + R1.transpose(1, 2, 0, 3, 4) + R1.transpose(2, 0, 1, 3, 4), 0)
    T = env.t[2]
    assert np.allclose(T, T.T)
    assert env.value("U", 1).shape == (5,)
