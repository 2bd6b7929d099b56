import math

import numpy as np
import pytest

from confop import parse
from confop.algebra import is_formally_zero
from confop.ambient import L1_INTRINSIC, LSHARP_INTRINSIC, LSHARP_OBSERVED
from confop.coefficients import Coefficient, N
from confop.conformal import (
    BiDegree,
    Character,
    agree_linearized,
    check_invariance,
    const_alpha,
    im_one_star,
    im_z,
    r_of_factor,
)
from confop.expr_core import Factor, LinearCombination
from confop.fixtures import fixture_expression
from confop.jets import curvature_stack, evaluate, sample_metric_jet, sample_scalar_jet

W = Coefficient.w()
LAPLACIAN_BD = BiDegree.parse("1-n/2,-1-n/2")


def test_density_alone():
    assert im_z(parse("f"), 1, BiDegree(W, W)).is_empty()


def test_conformal_laplacian_formal():
    assert im_z(fixture_expression("conformal_laplacian"), 1, LAPLACIAN_BD).is_empty()


def test_scalar_curvature_variation():
    im = im_z(parse("S"), 1, BiDegree(0, -2))
    assert is_formally_zero(im - parse("-2*(n-1)*D{a,a}phi"))


def test_scalar_curvature_variation_numeric():
    # d/dlam of e^{2 lam phi} S(e^{2 lam phi} g) at lam = 0, by central differences
    n, order, h = 5, 4, 1e-4
    mj = sample_metric_jet(2, n, order)
    phi = sample_scalar_jet(2, n, order, amplitude=0.3, stream=3)
    vals = []
    for lam in (h, -h):
        S = float(curvature_stack(mj.rescaled(phi.scale(lam))).scalar.value())
        vals.append(math.exp(2 * lam * float(phi.data[0])) * S)
    fd = (vals[0] - vals[1]) / (2 * h)
    exact = float(evaluate(parse("-2*(n-1)*D{a,a}phi"), curvature_stack(mj), aux_jets={"phi": phi}, n_value=n))
    assert abs(fd - exact) < 1e-6 * max(1.0, abs(exact))


def test_metric_only_weight_zero():
    assert im_z(parse("g{a,b}*g{a,b}"), 1, BiDegree(0, 0)).is_empty()


def test_every_term_has_one_differentiated_phi():
    im = im_z(parse("D{a,b,a,b}f + S*D{a,a}f + Ric{a,b}*D{a,b}f"), 1, BiDegree(W, W - 4))
    for t in im:
        phis = [f for f in t.factors if f.head == "phi"]
        assert len(phis) == 1 and phis[0].nderiv >= 1


# --- check_invariance -----------------------------------------------------


def test_paneitz_invariant():
    rep = check_invariance(fixture_expression("paneitz"), BiDegree.parse("2-n/2,-2-n/2"), trials=5)
    assert rep.formal and rep.max_residual < 1e-6


def test_bare_laplacian_fails_with_witness():
    rep = check_invariance(parse("D{a,a}f"), LAPLACIAN_BD, trials=3)
    assert not rep.formal and not rep.numeric_pass
    assert "f" in rep.witness and "phi" in rep.witness
    assert rep.max_residual > 1e-2


def test_l1_intrinsic_invariant():
    rep = check_invariance(parse(L1_INTRINSIC), BiDegree(0, -6), trials=3)
    assert rep.formal and rep.numeric_pass


def test_lsharp_forms():
    assert not check_invariance(parse(LSHARP_INTRINSIC), BiDegree(0, -6), trials=2).formal
    rep = check_invariance(parse(LSHARP_OBSERVED), BiDegree(0, -6), trials=2)
    assert rep.formal and rep.numeric_pass


def test_formal_verdict_scale_free():
    L = fixture_expression("conformal_laplacian")
    for c in (Coefficient(3), Coefficient("n-1"), Coefficient("1/(w+7)")):
        assert im_z(L.scaled(c), 1, LAPLACIAN_BD).is_empty()
    bad = parse("D{a,a}f")
    assert not im_z(bad.scaled(Coefficient("n+1")), 1, LAPLACIAN_BD).is_empty()


# --- R[T] and the star combination ----------------------------------------


def test_r_density_delta_one():
    r = r_of_factor(Factor("f", 2), ("a", "a"), W)
    assert agree_linearized(r, parse("(n-2+2*w)*D{x}f*D{x}phi"))


def test_r_weyl_derivative_contraction():
    r = r_of_factor(Factor("W", 2), ("a", "a", "i", "j", "k", "l"), W)
    assert agree_linearized(r, parse("(n-2)*D{x}W{i,j,k,l}*D{x}phi"))


def test_r_weyl_internal_index():
    r = r_of_factor(Factor("W", 1), ("a", "a", "j", "k", "l"), W)
    assert agree_linearized(r, parse("(n-3)*W{x,j,k,l}*D{x}phi"))
    assert not agree_linearized(r, parse("(n-2)*W{x,j,k,l}*D{x}phi"))


def test_r_rejects_too_many_internal_indices():
    with pytest.raises(ValueError):
        r_of_factor(Factor("W", 3), ("a", "b", "c", "a", "b", "c", "l"), W)


def test_r_without_contraction_is_empty():
    assert r_of_factor(Factor("f", 2), ("a", "b"), W).is_empty()


def test_star_weyl_square_laplacian():
    out = im_one_star(parse("W{i,j,k,l}*W{i,j,k,l}*D{a,a}f"), W)
    assert out.structurally_equal(parse("(n+2*w-2)*W{a,b,c,d}*W{a,b,c,d}*D{e}f*D{e}phi"))


def test_star_without_internal_contractions():
    assert im_one_star(parse("W{i,j,k,l}*W{i,j,k,m}*D{l,m}f"), W).is_empty()


@pytest.mark.parametrize("text", [
    "D{a}W{a,j,k,l}*W{b,j,k,l}*D{b}f",
    "D{a,a}W{i,j,k,l}*W{i,j,k,l}*f",
    "W{i,j,k,l}*W{i,j,k,l}*D{a,a}f",
])
def test_star_matches_filtered_variation(text):
    # the part of Im^1 with one nabla phi, one factor more and one internal contraction fewer
    L = parse(text)
    (t0,) = L.terms
    mu = sum(len(l) - len(set(l)) for l in t0.labels)

    def keep(t):
        phis = [f for f in t.factors if f.head == "phi"]
        return (len(phis) == 1 and phis[0].nderiv == 1 and len(t.factors) == len(t0.factors) + 1
                and sum(len(l) - len(set(l)) for l in t.labels) == mu - 1)

    im = im_z(L, 1, BiDegree(W, W - 6))
    filtered = LinearCombination([t for t in im if keep(t)])
    assert agree_linearized(filtered, im_one_star(L, W))


# --- the leading constants ------------------------------------------------


def test_const_density():
    assert const_alpha(Character((), (1,)), "density") == N - 2 + 2 * W


def test_const_curvature():
    assert const_alpha(Character((2,), ()), "curvature") == 2 * (N - 4)


def test_const_multiplicity():
    assert const_alpha(Character((), (2, 2, 1)), "density") == 2 * 2 * (N - 4 + 2 * W)


def test_const_density_root():
    assert const_alpha(Character((), (2, 1)), "density", Coefficient("-n/2+2")) == 0


def test_const_empty_side():
    with pytest.raises(ValueError):
        const_alpha(Character((1,), ()), "density")
    with pytest.raises(ValueError):
        const_alpha(Character((1,), ()), "spin")


def test_character_of_term():
    (t,) = parse("D{a,b,a,b}W{i,j,k,l}*W{i,j,k,l}*D{c,c}f").terms
    ch = Character.of(t)
    assert ch.rl1 == (2,) and ch.rl2 == (1,)
    with pytest.raises(ValueError):
        Character((0,), ())


@pytest.mark.parametrize("inp,trailing", [
    ("D{a,b,b}W{a,j,k,l}",
     "(n-3)*D{b,b}W{x,j,k,l}*D{x}phi + (n-6)*D{a,x}W{a,j,k,l}*D{x}phi + {c}*D{a,j}W{a,x,k,l}*D{x}phi"),
    ("D{a,b,c,c}W{a,j,b,l}",
     "(n-4)*D{b,c,c}W{x,j,b,l}*D{x}phi + (n-4)*D{a,c,c}W{a,j,x,l}*D{x}phi + (n-10)*D{a,b,x}W{a,j,b,l}*D{x}phi"
     " + {c}*D{a,b,j}W{a,x,b,l}*D{x}phi + {c}*D{a,b,l}W{a,j,b,x}*D{x}phi"),
])
def test_trailing_terms_doubled(inp, trailing):
    # leading brackets match the printed ones; the last terms come with twice the printed weight
    r = im_one_star(parse(inp), W)
    assert agree_linearized(r, parse(trailing.replace("{c}", "2")))
    assert not agree_linearized(r, parse(trailing.replace("{c}", "1")))
