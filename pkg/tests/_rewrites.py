"""Random complete contractions and rewrite applications for the property tests."""
import numpy as np

from confop.algebra import canonicalize_structural, commute_derivatives
from confop.coefficients import ONE
from confop.expr_core import Factor, LinearCombination, Term, profile


def paired_antisymmetric(f, labels):
    """A W/R factor whose (i,j) or (k,l) pair both contract its own derivatives.

    Such factors are rewritten away before the restrictions are discussed, so
    they are outside the domain of the bound-preservation property.
    """
    if f.head not in ("W", "R"):
        return False
    m = f.nderiv
    ders = set(labels[:m])
    b = labels[m:]
    return (b[0] in ders and b[1] in ders) or (b[2] in ders and b[3] in ders)


def random_term(rng, max_factors=3, max_deriv=3):
    while True:
        heads = []
        for _ in range(int(rng.integers(1, max_factors + 1))):
            h = str(rng.choice(["W", "R", "Ric", "f", "f"]))
            m = int(rng.integers(1, max_deriv + 2)) if h == "f" else int(rng.integers(0, max_deriv + 1))
            heads.append(Factor(h, m))
        if sum(f.nslots for f in heads) % 2:
            heads.append(Factor("f", 1))
        slots = [(i, j) for i, f in enumerate(heads) for j in range(f.nslots)]
        perm = rng.permutation(len(slots))
        pairs = [(slots[perm[k]], slots[perm[k + 1]]) for k in range(0, len(perm), 2)]
        # no curvature factor traced on its own curvature slots
        if any(a[0] == b[0] and heads[a[0]].head != "f" and min(a[1], b[1]) >= heads[a[0]].nderiv
               for a, b in pairs):
            continue
        labels = [[None] * f.nslots for f in heads]
        for k, (a, b) in enumerate(pairs):
            labels[a[0]][a[1]] = labels[b[0]][b[1]] = f"x{k}"
        if any(paired_antisymmetric(f, l) for f, l in zip(heads, labels)):
            continue
        return Term(ONE, tuple(heads), tuple(tuple(l) for l in labels))


def bounds(terms):
    ps = [profile(t) for t in terms]
    return max(p.beta for p in ps), max(p.gamma for p in ps)


def random_commutation(rng):
    """(input term, output combination) for one application of the curvature identity."""
    while True:
        t = random_term(rng)
        cands = [i for i, f in enumerate(t.factors) if f.nderiv >= 2]
        if cands:
            break
    i = cands[int(rng.integers(len(cands)))]
    s = int(rng.integers(0, t.factors[i].nderiv - 1))
    return t, commute_derivatives(t, i, s)


def random_bianchi(rng, pairs):
    """(input term, output combination) for one fake second Bianchi substitution.

    The leading left-hand term is closed off by density factors (and possibly
    one self-contraction) and replaced by rhs minus the other left-hand terms.
    """
    while True:
        k = int(rng.integers(len(pairs)))
        lhs, rhs = pairs[k]
        lead = lhs.terms[0]
        free = list(lead.free_labels)
        rng.shuffle(free)
        ren = {}
        if len(free) >= 2 and rng.random() < 0.4:
            a, b = free.pop(), free.pop()
            ren[b] = a
        cut = int(rng.integers(0, len(free) + 1)) if rng.random() < 0.5 else len(free)
        facs, labs = [], []
        for gi, grp in enumerate((free[:cut], free[cut:])):
            if not grp:
                continue
            extra = [f"y{gi}_{e}" for e in range(int(rng.integers(0, 2)))]
            lab = tuple(grp) + tuple(x for e in extra for x in (e, e))
            facs.append(Factor("f", len(lab)))
            labs.append(lab)

        def close(t):
            tl = tuple(tuple(ren.get(x, x) for x in l) for l in t.labels)
            return Term(t.coeff, t.factors + tuple(facs), tl + tuple(labs))

        inp = close(lead)
        if paired_antisymmetric(inp.factors[0], inp.labels[0]):
            continue
        outs = [close(t) for t in rhs.terms] + [close(t.scaled(-1)) for t in lhs.terms[1:]]
        return inp, canonicalize_structural(LinearCombination(outs))
