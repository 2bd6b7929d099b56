from fractions import Fraction

import pytest

from confop.coefficients import Coefficient, N, SingularCoefficientError
from confop.expr_core import (
    DSLSyntaxError,
    Factor,
    LinearCombination,
    check_extra_restrictions,
    factor_gamma,
    format_lc,
    parse,
    profile,
    split_by_homogeneity,
)


def one(text):
    (t,) = parse(text).terms
    return t


# --- coefficients ---------------------------------------------------------


def test_coefficient_reduces_and_compares():
    a = Coefficient("(n^2-4)/(n-2)")
    assert a == N + 2
    assert Coefficient("(2-n)/(4-2*n)") == Fraction(1, 2)
    assert Coefficient("1/(n-2)") - Coefficient("1/(n-2)") == 0


def test_coefficient_sign_canonical():
    assert str(Coefficient("1/(2-n)")) == str(Coefficient("-1/(n-2)"))


def test_coefficient_evaluate_and_singular():
    c = Coefficient("(n-2)/(4*(n-1))")
    assert c.evaluate(6) == Fraction(1, 5)
    with pytest.raises(SingularCoefficientError):
        c.evaluate(1)


def test_coefficient_w_symbol():
    c = Coefficient("n+2*w")
    assert c.evaluate(5, Fraction(-3, 2)) == 2


# --- parsing --------------------------------------------------------------


def test_gradient_square():
    t = one("D{a}f * D{a}f")
    assert len(t.factors) == 2
    assert len(t.pairing) == 1
    assert t.weight == -2


def test_conformal_laplacian_coefficient():
    t = one("((n-2)/(2*(n-1))) * S{} * f")
    assert t.coeff == Coefficient("(n-2)/(2*n-2)")
    assert [f.head for f in t.factors] == ["S", "f"]
    assert all(f.nderiv == 0 for f in t.factors)


def test_free_slots():
    t = one("W{i,j,k,l} * W{i,j,k,m}")
    assert sorted(t.free_labels) == ["l", "m"]


def test_index_used_three_times():
    with pytest.raises(DSLSyntaxError):
        parse("W{i,j,k,l} * W{i,j,l,k} * g{k,a}")


def test_slot_count_mismatch():
    with pytest.raises(DSLSyntaxError):
        parse("W{i,j,k}")


def test_syntax_error_position():
    with pytest.raises(DSLSyntaxError) as e:
        parse("D{a}f * D{a}f\n + W{i,j,k,l * f")
    assert e.value.line == 2


def test_comments_and_newlines():
    L = parse("# header: x\nD{a,a}f\n- S*f  # trailing\n")
    assert len(L.terms) == 2


def test_round_trip():
    for text in ["D{a,a,b,b}f - (1/(n-2))*Ric{a,b}*D{a,b}f",
                 "W{i,j,k,l}*W{i,j,k,m}*D{l,m}f + 3*D{a}S*D{a}f",
                 "SP{a,b}*D{a,b}f"]:
        L = parse(text)
        assert parse(format_lc(L)).structurally_equal(L)
        assert format_lc(parse(format_lc(L))) == format_lc(L)


def test_merging_and_zero_drop():
    assert parse("D{a}f*D{a}f - D{b}f*D{b}f").is_empty()
    L = parse("S*f + S*f")
    assert L.terms[0].coeff == 2


def test_unknown_head():
    with pytest.raises(ValueError):
        Factor("Q", 0)


# --- profile --------------------------------------------------------------


def test_profile_weyl_square_laplacian():
    p = profile(one("W{i,j,k,l} * W{i,j,k,l} * D{a,a}f"))
    assert p.weight == -6
    assert p.degree == 5
    assert p.beta == 1
    assert p.gamma == 2
    assert p.character == ((), (1,))


def test_profile_gradient_square():
    p = profile(one("D{a}f * D{a}f"))
    assert (p.weight, p.kappa, p.kappa_sharp, p.sigma, p.delta, p.beta) == (-2, 2, 2, 2, 0, 1)
    assert p.character == ((), ())


def test_schouten_factor_gamma():
    assert factor_gamma(Factor("SP", 0), 0) == 1
    # the term maximum is set by D{a,b}f here
    assert profile(one("SP{a,b} * D{a,b}f")).gamma == 2


def test_weight_additivity():
    t = one("D{a}W{i,j,k,l} * D{b}Ric{b,c} * D{c,a}f * D{i,j,k,l}f")
    assert t.weight == -(3 + 3 + 2 + 4)


def test_profile_invariant_under_relabel_and_reorder():
    a = profile(one("W{i,j,k,l} * D{i,j,a,a}f * D{k,l}f"))
    b = profile(one("D{x,y}f * D{p,q,z,z}f * W{p,q,x,y}"))
    assert a == b


# --- homogeneity split and restrictions -----------------------------------


def test_split_by_homogeneity():
    parts = split_by_homogeneity(parse("D{a,a}f + S*f + f*D{a,a}f"))
    assert set(parts) == {1, 2}
    assert len(parts[1].terms) == 2
    assert split_by_homogeneity(LinearCombination()) == {}
    assert set(split_by_homogeneity(parse("S*f"))) == {1}


def test_restrictions_pass():
    r = check_extra_restrictions(parse("f*D{a,a}f"), 6, -1)
    assert r.k == 2 and r.beta_ok


def test_restrictions_fail_at_boundary():
    r = check_extra_restrictions(parse("D{a,a,b,b}f*f"), 6, -1)
    assert r.beta == 2 and r.beta_ok is False
    assert r.witness


def test_restrictions_not_applicable():
    r = check_extra_restrictions(parse("D{a,a}f"), 5, Fraction(-1, 3))
    assert not r.applicable
    assert str(r) == "no restrictions applicable"
