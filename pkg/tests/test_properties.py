import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st

from confop.algebra import canonicalize, commute_derivatives, second_bianchi_substitutes
from confop.expr_core import LinearCombination
from confop.jets import curvature_stack, evaluate_with_scale, sample_metric_jet, sample_scalar_jet

from _rewrites import bounds, random_bianchi, random_commutation, random_term

N = 5
SEEDS = st.integers(min_value=0, max_value=2**32 - 1)
FEW = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

_STACKS = []


def stacks():
    if not _STACKS:
        for trial in range(2):
            mj = sample_metric_jet(21, N, 6, trial=trial)
            f = sample_scalar_jet(21, N, 6, trial=trial)
            _STACKS.append((curvature_stack(mj), f))
    return _STACKS


def same_value(a, b, tol=1e-9):
    for stack, f in stacks():
        va, sa = evaluate_with_scale(a, stack, f, n_value=N)
        vb, sb = evaluate_with_scale(b, stack, f, n_value=N)
        if abs(float(va) - float(vb)) > tol * max(sa, sb, 1e-12):
            return False
    return True


@FEW
@given(SEEDS)
def test_canonicalize_idempotent(seed):
    rng = np.random.default_rng(seed)
    L = LinearCombination([random_term(rng, 2, 2) for _ in range(2)])
    c = canonicalize(L)
    assert canonicalize(c).structurally_equal(c)


@FEW
@given(SEEDS)
def test_canonicalize_sound(seed):
    rng = np.random.default_rng(seed)
    L = LinearCombination([random_term(rng, 2, 2)])
    assert same_value(canonicalize(L), L)


@FEW
@given(SEEDS)
def test_commutation_sound(seed):
    t, out = random_commutation(np.random.default_rng(seed))
    assert same_value(out, LinearCombination([t]))


@FEW
@given(SEEDS)
def test_commutation_keeps_bounds(seed):
    t, out = random_commutation(np.random.default_rng(seed))
    if not out.is_empty():
        b0, g0 = bounds([t])
        b1, g1 = bounds(out.terms)
        assert b1 <= b0 and g1 <= g0


@settings(max_examples=40, deadline=None)
@given(SEEDS)
def test_bianchi_substitution_keeps_bounds(seed):
    pairs = second_bianchi_substitutes()
    t, out = random_bianchi(np.random.default_rng(seed), pairs)
    if not out.is_empty():
        b0, g0 = bounds([t])
        b1, g1 = bounds(out.terms)
        assert b1 <= b0 and g1 <= g0
