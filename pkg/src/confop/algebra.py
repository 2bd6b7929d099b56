"""Rewriting and canonical forms for linear combinations of contractions.

``canonicalize`` does the structural work: metric elimination, curvature
traces, monoterm slot symmetries with sign, a fixed first-Bianchi basis for
curvature factors whose four curvature slots are free, dummy relabeling and
merging.  Multi-term identities that involve dummies (second Bianchi, the
commutation of derivatives) are decided by the metric-jet normal form of
:mod:`confop.formal`; a combination whose normal form vanishes canonicalizes
to the empty combination.
"""
from __future__ import annotations

import itertools
from collections import defaultdict
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .coefficients import ONE, ZERO, Coefficient, N
from .expr_core import (
    Factor,
    LinearCombination,
    Term,
    format_factor,
    fresh_labels,
    multiply_terms,
    profile,
)
from . import formal

__all__ = [
    "canonicalize",
    "canonical_text",
    "is_formally_zero",
    "commute_derivatives",
    "normal_order",
    "to_riemann_form",
    "to_weyl_schouten_form",
    "second_bianchi_substitutes",
    "linearize",
    "weylify",
    "iota_construct",
    "jet_normal_form",
    "RewriteError",
]


class RewriteError(ValueError):
    pass


# ---------------------------------------------------------------------------
# slot symmetry groups


def _riemann_group(offset: int) -> List[Tuple[Tuple[int, ...], int]]:
    """The 8 monoterm symmetries on slots offset..offset+3, as (perm, sign)."""
    base = [((0, 1, 2, 3), 1), ((1, 0, 2, 3), -1), ((0, 1, 3, 2), -1), ((1, 0, 3, 2), 1),
            ((2, 3, 0, 1), 1), ((3, 2, 0, 1), -1), ((2, 3, 1, 0), -1), ((3, 2, 1, 0), 1)]
    return [(tuple(offset + i for i in p), s) for p, s in base]


@lru_cache(maxsize=None)
def slot_group(f: Factor) -> Tuple[Tuple[Tuple[int, ...], int], ...]:
    """Elements (perm, sign): the factor's value is unchanged when the label at
    slot perm[j] moves to slot j, up to sign."""
    k = f.nslots
    ident = tuple(range(k))
    if f.head in ("R", "W", "Rt"):
        m = f.nderiv
        return tuple((ident[:m] + p, s) for p, s in _riemann_group(m))
    if f.head == "LR":
        m = f.nderiv
        out = []
        for dp in itertools.permutations(range(m)):
            for p, s in _riemann_group(m):
                out.append((tuple(dp) + p, s))
        return tuple(out)
    if f.head == "Ric":
        m = f.nderiv
        return ((ident, 1), (ident[:m] + (m + 1, m), 1))
    if f.head in ("SP", "T", "g", "ginv"):
        return tuple((p, 1) for p in itertools.permutations(range(k)))
    if f.head in ("S", "f", "phi", "ups", "Y", "ut"):
        if k >= 2:
            return ((ident, 1), (ident[:k - 2] + (k - 1, k - 2), 1))
        return ((ident, 1),)
    return ((ident, 1),)


# ---------------------------------------------------------------------------
# structural steps


def _eliminate_metric(t: Term) -> Optional[Term]:
    """Absorb g/ginv factors into the slots they contract; traces give n."""
    factors = list(t.factors)
    labels = [list(l) for l in t.labels]
    coeff = t.coeff
    changed = True
    while changed:
        changed = False
        for i, f in enumerate(factors):
            if f.head not in ("g", "ginv"):
                continue
            a, b = labels[i]
            if a == b:
                coeff = coeff * N
                del factors[i], labels[i]
                changed = True
                break
            others = [(j, s) for j, fl in enumerate(labels) if j != i for s, x in enumerate(fl) if x == a]
            target, keep = (a, b)
            if not others:
                others = [(j, s) for j, fl in enumerate(labels) if j != i for s, x in enumerate(fl) if x == b]
                target, keep = (b, a)
            if not others:
                continue
            j, s = others[0]
            labels[j][s] = keep
            del factors[i], labels[i]
            changed = True
            break
    return Term(coeff, tuple(factors), tuple(tuple(l) for l in labels))


def _resolve_traces(t: Term) -> Optional[Term]:
    """Curvature self-traces: W -> 0, antisymmetric pairs -> 0, R -> Ric -> S."""
    coeff = t.coeff
    factors = list(t.factors)
    labels = [list(l) for l in t.labels]
    changed = True
    while changed:
        changed = False
        for i, f in enumerate(factors):
            if f.head not in ("R", "W", "Ric"):
                continue
            m = f.nderiv
            internal = labels[i][m:]
            if len(set(internal)) == len(internal):
                continue
            if f.head == "W":
                return None
            if f.head == "Ric":
                # Ric_{ab} traced -> S
                factors[i] = Factor("S", m)
                labels[i] = labels[i][:m]
                changed = True
                break
            pos = [(p, q) for p in range(4) for q in range(p + 1, 4) if internal[p] == internal[q]]
            p, q = pos[0]
            if (p, q) in ((0, 1), (2, 3)):
                return None
            # bring the traced pair to positions (0, 3) with a group element
            for perm, sign in _riemann_group(0):
                moved = [internal[perm[j]] for j in range(4)]
                if moved[0] == moved[3]:
                    coeff = coeff * sign
                    factors[i] = Factor("Ric", m)
                    labels[i] = labels[i][:m] + [moved[1], moved[2]]
                    changed = True
                    break
            break
    return Term(coeff, tuple(factors), tuple(tuple(l) for l in labels))


def _canonical_monoterm(t: Term) -> Tuple[Optional[Term], tuple]:
    """Minimal relabeled form under factor permutations and slot groups.

    Returns (term or None if it vanishes by a sign clash, key).
    """
    order = sorted(range(len(t.factors)), key=lambda i: t.factors[i])
    kinds = [t.factors[i] for i in order]
    counts = t.label_counts
    free = {x for x, c in counts.items() if c == 1}
    groups = [slot_group(f) for f in kinds]
    best: List = [None]
    signs: set = set()
    best_assign: List = [None]

    def token(x, dmap):
        if x in free:
            return (0, x)
        if x not in dmap:
            dmap[x] = len(dmap)
        return (1, dmap[x])

    def rec(pos, remaining, seq, dmap, sign, assign):
        if pos == len(kinds):
            tseq = tuple(seq)
            if best[0] is None or tseq < best[0]:
                best[0] = tseq
                signs.clear()
                signs.add(sign)
                best_assign[0] = list(assign)
            elif tseq == best[0]:
                signs.add(sign)
            return
        f = kinds[pos]
        tried = set()
        for idx in remaining:
            if t.factors[idx] != f:
                continue
            labs = t.labels[idx]
            for perm, s in groups[pos]:
                arranged = tuple(labs[perm[j]] for j in range(len(labs)))
                if (arranged, s) in tried:
                    continue
                tried.add((arranged, s))
                dm = dict(dmap)
                toks = [token(x, dm) for x in arranged]
                new = seq + toks
                if best[0] is not None:
                    pref = tuple(best[0][:len(new)])
                    if tuple(new) > pref:
                        continue
                rem = [r for r in remaining if r != idx]
                rec(pos + 1, rem, new, dm, sign * s, assign + [arranged])
    rec(0, list(range(len(t.factors))), [], {}, 1, [])
    if len(signs) > 1:
        return None, None
    sign = signs.pop()
    # relabel dummies alphabetically by first occurrence
    names = _dummy_names(free)
    dmap: Dict[str, str] = {}
    new_labels = []
    for arranged in best_assign[0]:
        row = []
        for x in arranged:
            if x in free:
                row.append(x)
            else:
                if x not in dmap:
                    dmap[x] = names[len(dmap)]
                row.append(dmap[x])
        new_labels.append(tuple(row))
    nt = Term(t.coeff * sign, tuple(kinds), tuple(new_labels))
    return nt, (tuple(kinds), best[0])


def _dummy_names(free: Iterable[str]) -> List[str]:
    used = set(free)
    base = [c for c in "abcdefghijklmnopqrstuvwxyz" if c not in used]
    out = list(base)
    k = 1
    while len(out) < 60:
        out.extend(f"{c}{k}" for c in base)
        k += 1
    return out


def _bianchi_reduce(t: Term) -> Optional[List[Term]]:
    """Rewrite one curvature factor with four free distinct curvature labels
    of type R_{psqr} (p<q<r<s) as R_{prqs} - R_{pqrs}; None if nothing to do."""
    counts = t.label_counts
    for i, f in enumerate(t.factors):
        if f.head not in ("R", "W", "LR", "Rt"):
            continue
        m = f.nderiv
        internal = t.labels[i][m:]
        if len(set(internal)) < 4 or any(counts[x] != 1 for x in internal):
            continue
        p, q, r, s = sorted(internal)
        images = {}
        for perm, sign in _riemann_group(0):
            images[tuple(internal[perm[j]] for j in range(4))] = sign
        bad = (p, s, q, r)
        if bad not in images:
            continue
        sign = images[bad]
        head = t.labels[i][:m]
        out = []
        for lab, c in (((p, r, q, s), 1), ((p, q, r, s), -1)):
            labels = list(t.labels)
            labels[i] = tuple(head) + lab
            out.append(Term(t.coeff * (sign * c), t.factors, tuple(labels)))
        return out
    return None


def _structural(t: Term) -> List[Term]:
    t = _eliminate_metric(t)
    t = _resolve_traces(t)
    if t is None:
        return []
    out = []
    stack = [t]
    guard = 0
    while stack:
        guard += 1
        if guard > 10000:
            raise RewriteError("first Bianchi reduction did not terminate")
        u = stack.pop()
        nt, _ = _canonical_monoterm(u)
        if nt is None:
            continue
        red = _bianchi_reduce(nt)
        if red is None:
            out.append(nt)
        else:
            stack.extend(red)
    return out


def _sort_key(t: Term):
    return (t.factors, t.labels)


def canonicalize_structural(L: LinearCombination) -> LinearCombination:
    terms: List[Term] = []
    for t in L:
        terms.extend(_structural(t))
    merged = LinearCombination(terms)
    return LinearCombination(sorted(merged.terms, key=_sort_key))


def canonicalize(L: LinearCombination) -> LinearCombination:
    """Structural canonical form; empty iff the combination is formally zero."""
    S = canonicalize_structural(L)
    if S.is_empty():
        return S
    if not jet_normal_form(S):
        return LinearCombination()
    return S


def canonical_text(L: LinearCombination) -> str:
    return str(canonicalize(L))


def is_formally_zero(L: LinearCombination) -> bool:
    return canonicalize(L).is_empty()


# ---------------------------------------------------------------------------
# Riemann form and the jet normal form


def _schouten_terms(m: int, deriv: Sequence[str], a: str, b: str, avoid) -> List[Term]:
    """nabla^m P_ab in Riemann form: (Ric - S g/(2(n-1)))/(n-2)."""
    x, y = _fresh_names(avoid, 2)
    c1 = Coefficient(1) / (N - 2)
    c2 = -Coefficient(1) / ((N - 2) * (N - 1) * 2)
    t1 = Term(c1, (Factor("R", m),), (tuple(deriv) + (x, a, b, x),))
    t2 = Term(c2, (Factor("R", m), Factor("g", 0)), (tuple(deriv) + (x, y, y, x), (a, b)))
    return [t1, t2]


_NAME_COUNTER = itertools.count()


def _fresh_names(avoid, k: int) -> List[str]:
    out = []
    while len(out) < k:
        c = f"_{next(_NAME_COUNTER)}"
        if c not in avoid:
            out.append(c)
    return out


def _factor_riemann(f: Factor, labels: Tuple[str, ...], avoid) -> List[Term]:
    """Riemann-form expansion of one factor (a list of single-factor-ish terms)."""
    m = f.nderiv
    if f.head == "W":
        d, (i, j, k, l) = labels[:m], labels[m:]
        out = [Term(ONE, (Factor("R", m),), (tuple(labels),))]
        for (pa, pb, ga, gb), sgn in (((j, k, i, l), -1), ((i, l, j, k), -1),
                                      ((i, k, j, l), 1), ((j, l, i, k), 1)):
            for st in _schouten_terms(m, d, pa, pb, avoid):
                out.append(multiply_terms(st.scaled(sgn), Term(ONE, (Factor("g", 0),), ((ga, gb),))))
        return out
    if f.head == "Ric":
        x, = _fresh_names(avoid, 1)
        return [Term(ONE, (Factor("R", m),), (tuple(labels[:m]) + (x, labels[m], labels[m + 1], x),))]
    if f.head == "S":
        x, y = _fresh_names(avoid, 2)
        return [Term(ONE, (Factor("R", m),), (tuple(labels[:m]) + (x, y, y, x),))]
    if f.head == "SP":
        q = len(labels)
        perms = list(itertools.permutations(range(q)))
        out = []
        w = Coefficient(Fraction(1, len(perms)))
        for p in perms:
            lab = [labels[p[j]] for j in range(q)]
            for st in _schouten_terms(q - 2, lab[:q - 2], lab[q - 2], lab[q - 1], avoid):
                out.append(st.scaled(w))
        return out
    return [Term(ONE, (f,), (tuple(labels),))]


def _expand_factorwise(t: Term, fn) -> List[Term]:
    avoid = set(t.label_counts)
    parts = [fn(f, labs, avoid) for f, labs in zip(t.factors, t.labels)]
    out = []
    for combo in itertools.product(*parts):
        acc = Term(t.coeff, (), ())
        for piece in combo:
            acc = _join(acc, piece)
        out.append(acc)
    return out


def _join(a: Term, b: Term) -> Term:
    """Product where labels are already globally consistent (no renaming)."""
    return Term(a.coeff * b.coeff, a.factors + b.factors, a.labels + b.labels)


def to_riemann_form(L: LinearCombination) -> LinearCombination:
    """Only R (possibly traced), scalar, linearized and metric factors remain."""
    out: List[Term] = []
    for t in L:
        for u in _expand_factorwise(t, _factor_riemann):
            u = _eliminate_metric(u)
            out.append(u)
    return LinearCombination(out)


def jet_normal_form(L: LinearCombination) -> Dict:
    return formal.normal_form(canonicalize_structural(to_riemann_form(L)))


# ---------------------------------------------------------------------------
# commuting covariant derivatives


def commute_derivatives(t: Term, factor: int, i: int, j: Optional[int] = None) -> LinearCombination:
    """Swap derivative slots i, i+1 of a factor, adding the curvature corrections.

    nabla_o nabla_x nabla_y Y = nabla_o nabla_y nabla_x Y
        + nabla_o ( sum_s R_{x y c s} Y[s -> c] )
    with Y = nabla_inner X and the outer derivatives distributed by Leibniz.
    """
    if j is None:
        j = i + 1
    f = t.factors[factor]
    if j != i + 1:
        raise RewriteError("derivative slots must be adjacent")
    if f.head not in ("R", "W", "Ric", "S", "f", "phi", "ups", "Y", "Rt", "ut"):
        raise RewriteError(f"{f.head} has no ordered derivative slots")
    if not (0 <= i and j < f.nderiv):
        raise RewriteError("slots are not both derivative slots")
    labs = t.labels[factor]
    outer, x, y, inner = labs[:i], labs[i], labs[j], labs[j + 1:]
    swapped = list(t.labels)
    swapped[factor] = tuple(outer) + (y, x) + tuple(inner)
    out = [Term(t.coeff, t.factors, tuple(swapped))]
    rest_f = [ff for k, ff in enumerate(t.factors) if k != factor]
    rest_l = [ll for k, ll in enumerate(t.labels) if k != factor]
    avoid = set(t.label_counts)
    y_slots = list(inner)  # slots of Y = nabla_inner X: inner derivatives then base
    curv_head = "Rt" if f.head in ("Rt", "ut") else "R"
    for s_pos in range(len(y_slots)):
        c, = _fresh_names(avoid, 1)
        avoid.add(c)
        s = y_slots[s_pos]
        y_new = list(y_slots)
        y_new[s_pos] = c
        for mask in itertools.product((0, 1), repeat=len(outer)):
            to_r = [o for o, b in zip(outer, mask) if b]
            to_y = [o for o, b in zip(outer, mask) if not b]
            r_factor = Factor(curv_head, len(to_r))
            r_labels = tuple(to_r) + (x, y, c, s)
            y_factor = Factor(f.head, f.nderiv - 2 - len(outer) + len(to_y)) if f.head not in ("Ric",) \
                else Factor("Ric", f.nderiv - 2 - len(outer) + len(to_y))
            y_labels = tuple(to_y) + tuple(y_new)
            factors = tuple(rest_f[:factor]) + (r_factor, y_factor) + tuple(rest_f[factor:])
            labels = tuple(rest_l[:factor]) + (r_labels, y_labels) + tuple(rest_l[factor:])
            out.append(Term(t.coeff, factors, labels))
    return LinearCombination(out)


def normal_order(L: LinearCombination, max_rounds: int = 200) -> LinearCombination:
    """Sort derivative slots of every factor by label, adding Ricci corrections.

    Terminates because each correction has one more factor and the weight
    bounds the number of curvature factors.
    """
    done: List[Term] = []
    work = list(L)
    rounds = 0
    while work:
        rounds += 1
        if rounds > 100000:
            raise RewriteError("normal ordering did not terminate")
        t = work.pop()
        hit = None
        for fi, f in enumerate(t.factors):
            if f.head not in ("R", "W", "Ric", "S", "f", "phi", "ups", "Y", "Rt", "ut"):
                continue
            d = t.labels[fi][:f.nderiv]
            for i in range(len(d) - 1):
                if d[i] > d[i + 1]:
                    hit = (fi, i)
                    break
            if hit:
                break
        if hit is None:
            done.append(t)
        else:
            work.extend(commute_derivatives(t, hit[0], hit[1]))
    return LinearCombination(done)


# ---------------------------------------------------------------------------
# Weyl / Schouten form


def _wcontr_factor(f: Factor, labels: Tuple[str, ...], avoid) -> List[Term]:
    """Expansion of one factor in W, SP and density factors."""
    m = f.nderiv
    if f.head in ("W", "SP", "f", "phi", "ups", "Y", "g", "ginv", "LR", "T", "U"):
        return [Term(ONE, (f,), (tuple(labels),))]
    if f.head == "R":
        d, (i, j, k, l) = labels[:m], labels[m:]
        out = [Term(ONE, (Factor("W", m),), (tuple(labels),))]
        for (pa, pb, ga, gb), sgn in (((j, k, i, l), 1), ((i, l, j, k), 1),
                                      ((i, k, j, l), -1), ((j, l, i, k), -1)):
            for pt in _schouten_wcontr(tuple(d) + (pa, pb), avoid):
                out.append(_join(pt.scaled(sgn), Term(ONE, (Factor("g", 0),), ((ga, gb),))))
        return out
    if f.head == "Ric":
        # Ric = (n-2) P + J g,  J = trace P
        d, (a, b) = labels[:m], labels[m:]
        out = [pt.scaled(N - 2) for pt in _schouten_wcontr(tuple(d) + (a, b), avoid)]
        x, = _fresh_names(avoid, 1)
        for pt in _schouten_wcontr(tuple(d) + (x, x), avoid):
            out.append(_join(pt, Term(ONE, (Factor("g", 0),), ((a, b),))))
        return out
    if f.head == "S":
        x, = _fresh_names(avoid, 1)
        return [pt.scaled(2 * (N - 1)) for pt in _schouten_wcontr(tuple(labels) + (x, x), avoid)]
    raise RewriteError(f"cannot rewrite head {f.head}")


def _schouten_wcontr(labels: Tuple[str, ...], avoid) -> List[Term]:
    """nabla^m P with the given labels, in (Wcontr) form."""
    return list(_p_decompose(tuple(labels), frozenset(avoid)))


@lru_cache(maxsize=None)
def _p_decompose_cached(q: int) -> Tuple[Term, ...]:
    """nabla^{q-2} P on placeholder labels p0..p{q-1} in (Wcontr) form."""
    labels = tuple(f"p{i}" for i in range(q))
    m = q - 2
    if m == 0:
        return (Term(ONE, (Factor("SP", 0),), (labels,)),)
    # T - Sym T = (1/q!) sum_s (T - sT).  Each difference telescopes along a
    # path of adjacent swaps in a spanning tree of arrangements, so every tree
    # edge is counted once per arrangement below it.
    parent: Dict[Tuple[str, ...], Tuple[Tuple[str, ...], int]] = {}
    order = [labels]
    seen = {labels}
    i = 0
    while i < len(order):
        arr = order[i]
        i += 1
        for k in range(q - 1):
            if labels.index(arr[k]) > labels.index(arr[k + 1]):
                continue
            new = arr[:k] + (arr[k + 1], arr[k]) + arr[k + 2:]
            if new not in seen:
                seen.add(new)
                parent[new] = (arr, k)
                order.append(new)
    below = {arr: 1 for arr in order}
    for arr in reversed(order[1:]):
        below[parent[arr][0]] += below[arr]
    total = len(order)
    out: List[Term] = [Term(ONE, (Factor("SP", m),), (labels,))]
    for arr in order[1:]:
        up, k = parent[arr]
        wgt = Coefficient(Fraction(below[arr], total))
        out.extend(t.scaled(wgt) for t in _swap_difference(up, k))
    L = canonicalize_structural(LinearCombination(out))
    return tuple(L.terms)


def _p_decompose(labels: Tuple[str, ...], avoid) -> List[Term]:
    q = len(labels)
    base = _p_decompose_cached(q)
    mapping = {f"p{i}": labels[i] for i in range(q)}
    out = []
    for t in base:
        dummies = [x for x, c in t.label_counts.items() if c == 2]
        fresh = _fresh_names(set(avoid) | set(labels), len(dummies))
        mp = dict(mapping)
        mp.update(dict(zip(dummies, fresh)))
        out.append(Term(t.coeff, t.factors, tuple(tuple(mp[x] for x in fl) for fl in t.labels)))
    return out


def _swap_difference(labels: Tuple[str, ...], k: int) -> List[Term]:
    """T[labels] - T[labels with k, k+1 swapped] for T = nabla^m P, in (Wcontr) form."""
    q = len(labels)
    m = q - 2
    if k == m:
        return []  # P is symmetric
    avoid = set(labels)
    if k == m - 1:
        # nabla_o (nabla_x P_yb - nabla_y P_xb) = 1/(n-3) nabla_o nabla^d W_{x y b d}
        outer, x, y, b = labels[:k], labels[k], labels[k + 1], labels[k + 2]
        d, = _fresh_names(avoid, 1)
        t = Term(ONE / (N - 3), (Factor("W", m),), (tuple(outer) + (d, x, y, b, d),))
        return [t]
    # commutator of two derivatives
    outer, x, y, inner = labels[:k], labels[k], labels[k + 1], labels[k + 2:]
    out: List[Term] = []
    y_slots = list(inner)
    for s_pos in range(len(y_slots)):
        c, = _fresh_names(avoid, 1)
        avoid.add(c)
        s = y_slots[s_pos]
        y_new = list(y_slots)
        y_new[s_pos] = c
        for mask in itertools.product((0, 1), repeat=len(outer)):
            to_r = [o for o, bb in zip(outer, mask) if bb]
            to_y = [o for o, bb in zip(outer, mask) if not bb]
            r_labels = tuple(to_r) + (x, y, c, s)
            p_labels = tuple(to_y) + tuple(y_new)
            for rt in _wcontr_factor(Factor("R", len(to_r)), r_labels, avoid | set(p_labels)):
                avoid |= set(rt.label_counts)
                for pt in _p_decompose(p_labels, frozenset(avoid | set(rt.label_counts))):
                    avoid |= set(pt.label_counts)
                    out.append(_join(rt, pt))
    return out


def to_weyl_schouten_form(L: LinearCombination) -> LinearCombination:
    """Only W, SP and density/auxiliary factors (metric factors are absorbed)."""
    out: List[Term] = []
    for t in L:
        for u in _expand_factorwise(t, _wcontr_factor):
            u = _eliminate_metric(u)
            u = _resolve_traces(u)
            if u is not None:
                out.append(u)
    return canonicalize_structural(LinearCombination(out))


# ---------------------------------------------------------------------------
# fake second Bianchi identities


FAKE_BIANCHI_LHS = (
    # free r, i, j, k, l
    "D{r}W{i,j,k,l} + D{j}W{r,i,k,l} + D{i}W{j,r,k,l}",
    # free i, j, k, l
    "D{s,s}W{i,j,k,l} + ((n-2)/(n-3)) * D{s,j}W{s,i,k,l} + ((n-2)/(n-3)) * D{s,i}W{j,s,k,l}",
    # free r, i, j, l
    "D{k,r}W{i,j,k,l} + D{k,j}W{r,i,k,l} + D{k,i}W{j,r,k,l}",
    # free j, k, l
    "D{r,i,r}W{i,j,k,l} + D{r,i,j}W{r,i,k,l} + D{r,i,i}W{j,r,k,l}",
)

# the genuine identity each one is modelled on (all formally zero)
_GENUINE = (
    "D{r}R{i,j,k,l} + D{j}R{r,i,k,l} + D{i}R{j,r,k,l}",
    "D{s,s}R{i,j,k,l} + D{s,j}R{s,i,k,l} + D{s,i}R{j,s,k,l}",
    "D{k,r}R{i,j,k,l} + D{k,j}R{r,i,k,l} + D{k,i}R{j,r,k,l}",
    "D{r,i,r}R{i,j,k,l} + D{r,i,j}R{r,i,k,l} + D{r,i,i}R{j,r,k,l}",
)


def derive_fake_bianchi(index: int) -> Tuple[LinearCombination, LinearCombination]:
    """(lhs, rhs) with rhs = Weyl/Schouten form of lhs minus the genuine identity."""
    from .expr_core import parse
    lhs = parse(FAKE_BIANCHI_LHS[index])
    genuine = parse(_GENUINE[index])
    rhs = to_weyl_schouten_form(to_riemann_form(lhs) - genuine)
    return lhs, rhs


def second_bianchi_substitutes() -> List[Tuple[LinearCombination, LinearCombination]]:
    """The four fake second Bianchi identities, read from the shipped fixture."""
    from .fixtures import load_fake_bianchi
    return load_fake_bianchi()


# ---------------------------------------------------------------------------
# linearization and Weylify


_LIN_HEAD = {"R": "LR", "f": "T"}


def linearize(L: LinearCombination) -> LinearCombination:
    """Factor-wise substitution nabla^m R -> LR(m), nabla^p f -> T(p), nabla ups -> U."""
    out = []
    for t in L:
        factors = []
        labels = list(t.labels)
        for i, f in enumerate(t.factors):
            if f.head == "R":
                factors.append(Factor("LR", f.nderiv))
            elif f.head == "f":
                factors.append(Factor("T", f.nderiv))
            elif f.head == "ups":
                if f.nderiv != 1:
                    raise RewriteError("only first derivatives of the auxiliary scalar linearize")
                factors.append(Factor("U", 0))
            elif f.head in ("g", "ginv", "LR", "T", "U", "phi", "Y"):
                factors.append(f)
            else:
                raise RewriteError(f"linearize expects Riemann form, found {f.head}")
        out.append(Term(t.coeff, tuple(factors), tuple(labels)))
    return LinearCombination(out)


def weylify(Llin: LinearCombination) -> LinearCombination:
    """Inverse of the iota construction on linearized contractions.

    Slots of T(p) paired to U become internally contracted derivatives of f;
    LR slots paired to U become derivative indices contracted into the factor
    (coefficient (n-2)/(n-3) when a curvature slot was paired); U is consumed.
    """
    out = []
    for t in Llin:
        u_idx = [i for i, f in enumerate(t.factors) if f.head == "U"]
        partner = {}
        for i in u_idx:
            x = t.labels[i][0]
            hits = [(j, s) for j, fl in enumerate(t.labels) if j != i for s, y in enumerate(fl) if y == x]
            if not hits:
                raise RewriteError("auxiliary vector with a free slot")
            j, s = hits[0]
            if t.factors[j].head == "U":
                raise RewriteError("an auxiliary vector pairs with another auxiliary vector")
            partner[i] = (j, s)
        # group by host factor: each U is replaced by a contraction with a new derivative
        add = defaultdict(list)
        for i, (j, s) in partner.items():
            add[j].append(s)
        coeff = t.coeff
        factors, labels = [], []
        avoid = set(t.label_counts)
        for j, f in enumerate(t.factors):
            if f.head == "U":
                continue
            labs = list(t.labels[j])
            slots = add.get(j, [])
            fresh = _fresh_names(avoid, len(slots))
            avoid |= set(fresh)
            for s, nm in zip(slots, fresh):
                labs[s] = nm
            if f.head == "LR":
                m = f.nderiv
                if any(s >= m for s in slots):
                    coeff = coeff * (N - 2) / (N - 3)
                factors.append(Factor("W", m + len(slots)))
                labels.append(tuple(fresh) + tuple(labs))
            elif f.head == "T":
                factors.append(Factor("f", f.nderiv + len(slots)))
                labels.append(tuple(fresh) + tuple(labs))
            else:
                factors.append(f)
                labels.append(tuple(labs))
        out.append(Term(coeff, tuple(factors), tuple(labels)))
    return LinearCombination(out)


def iota_construct(t: Term, use_aux: bool = True) -> Term:
    """Free every internal contraction of a (W, f)-only term.

    Each internal contraction (nabla^a, _a) of a factor loses its derivative
    and the remaining slot is either left free (label ``i1``, ``i2``...) or
    paired to a new auxiliary vector U.  A W factor whose internal contraction
    used one of its four curvature slots gets the coefficient (n-3)/(n-2);
    W becomes R (then linearized by ``linearize``).
    """
    for f in t.factors:
        if f.head not in ("W", "f"):
            raise RewriteError("iota_construct takes terms with only W and f factors")
    coeff = t.coeff
    factors, labels, extra_f, extra_l = [], [], [], []
    k = 0
    used = set(t.label_counts)
    for f, labs in zip(t.factors, t.labels):
        m = f.nderiv
        labs = list(labs)
        ders = labs[:m]
        base = labs[m:]
        seen = {}
        drop = []
        for pos, x in enumerate(labs):
            if x in seen:
                first = seen[x]
                drop.append((first, pos))
            else:
                seen[x] = pos
        keep_der = list(range(m))
        new_labels = list(labs)
        for first, pos in drop:
            # the derivative slot (smaller position) is erased, the other becomes free
            der, other = (first, pos)
            if der >= m:
                raise RewriteError("internal contraction between two curvature slots")
            keep_der.remove(der)
            k += 1
            name = f"i{k}"
            while name in used:
                k += 1
                name = f"i{k}"
            used.add(name)
            new_labels[other] = name
            if other >= m and f.head == "W":
                coeff = coeff * (N - 3) / (N - 2)
            if use_aux:
                extra_f.append(Factor("U", 0))
                extra_l.append((name,))
        labs_out = tuple(new_labels[d] for d in keep_der) + tuple(new_labels[m:])
        head = "R" if f.head == "W" else "f"
        factors.append(Factor(head, len(keep_der)))
        labels.append(labs_out)
    return Term(coeff, tuple(factors) + tuple(extra_f), tuple(labels) + tuple(extra_l))
