"""Conformal rescaling of complete contractions.

Under g -> e^{2 lam phi} g every factor is rewritten by its exact
transformation law as a power series in lam times one exponential
e^{c lam phi}:

    W    -> e^{2 lam phi} W
    R    -> e^{2 lam phi} (R + D o g),   D = -lam nabla^2 phi + lam^2 (dphi dphi - |dphi|^2 g / 2)
    Ric  -> Ric + (n-2) D + tr(D) g
    S    -> e^{-2 lam phi} (S + 2(n-1) tr D)
    f    -> e^{a lam phi} f,   g -> e^{2 lam phi} g

and each covariant derivative by

    nabla'_k T_{..l..} = nabla_k T - lam sum_l (phi_l T_{..k..} + phi_k T_{..l..} - g_{kl} phi^s T_{..s..}).

Every contraction through the new inverse metric contributes e^{-2 lam phi}.
For a consistent bi-degree the exponentials cancel, so the lam-degree of a
summand equals its degree in phi and ``im_z`` is Z! times the lam^Z part.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .coefficients import ONE, Coefficient, N
from .expr_core import Factor, LinearCombination, Term, profile
from . import algebra
from . import formal

__all__ = [
    "BiDegree",
    "Character",
    "WeightMismatchError",
    "im_z",
    "check_invariance",
    "InvarianceReport",
    "im_one_factor",
    "r_of_factor",
    "im_one_star",
    "const_alpha",
    "skeleton",
    "agree_linearized",
    "numeric_invariance",
    "im_z_raw",
]


class WeightMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class BiDegree:
    a: Coefficient
    b: Coefficient

    def __init__(self, a, b):
        object.__setattr__(self, "a", Coefficient.of(a))
        object.__setattr__(self, "b", Coefficient.of(b))

    @staticmethod
    def parse(text: str) -> "BiDegree":
        a, b = _split_pair(text)
        return BiDegree(Coefficient(a), Coefficient(b))

    def consistent_with(self, weight: int, kappa: int) -> bool:
        return self.b == self.a * kappa + weight

    def __str__(self):
        return f"({self.a}, {self.b})"


def _split_pair(text: str) -> Tuple[str, str]:
    depth = 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            return text[:i].strip(), text[i + 1:].strip()
    raise ValueError(f"bi-degree must look like 'a,b', got {text!r}")


@dataclass(frozen=True)
class Character:
    rl1: Tuple[int, ...]
    rl2: Tuple[int, ...]

    def __init__(self, rl1: Sequence[int] = (), rl2: Sequence[int] = ()):
        if any(x <= 0 for x in list(rl1) + list(rl2)):
            raise ValueError("character entries must be positive")
        object.__setattr__(self, "rl1", tuple(sorted(rl1, reverse=True)))
        object.__setattr__(self, "rl2", tuple(sorted(rl2, reverse=True)))

    @staticmethod
    def of(t: Term) -> "Character":
        c = profile(t).character
        return Character(c[0], c[1])


# ---------------------------------------------------------------------------
# series of linear combinations


_COUNTER = iter(range(10 ** 12))


def _fresh(k: int = 1) -> List[str]:
    return [f"z{next(_COUNTER)}" for _ in range(k)]


def _lc(*terms: Term) -> LinearCombination:
    return LinearCombination(terms)


def _t(coeff, *pieces) -> Term:
    """Term from (head, nderiv, labels) pieces."""
    return Term(Coefficient.of(coeff), tuple(Factor(h, m) for h, m, _ in pieces),
                tuple(tuple(l) for _, _, l in pieces))


class Series:
    """sum_j lam^j X_j, times e^{c lam phi}; every X_j has the same free labels."""

    __slots__ = ("parts", "c", "free")

    def __init__(self, parts: Dict[int, LinearCombination], c: Coefficient, free: Tuple[str, ...]):
        self.parts = {k: v for k, v in parts.items() if not v.is_empty()}
        self.c = c
        self.free = tuple(free)


def _d_phi_terms(x: str, y: str) -> Tuple[List[Term], List[Term]]:
    """lam^1 and lam^2 parts of D_{xy}."""
    s = _fresh()[0]
    one = [_t(-1, ("phi", 2, (x, y)))]
    two = [_t(1, ("phi", 1, (x,)), ("phi", 1, (y,))),
           _t(Fraction(-1, 2), ("phi", 1, (s,)), ("phi", 1, (s,)), ("g", 0, (x, y)))]
    return one, two


def _trace_d_terms() -> Tuple[List[Term], List[Term]]:
    """lam^1 and lam^2 parts of tr_g D = -Lap phi + (1 - n/2)|dphi|^2."""
    s, u = _fresh(2)
    return ([_t(-1, ("phi", 2, (s, s)))],
            [_t(ONE - N / 2, ("phi", 1, (u,)), ("phi", 1, (u,)))])


def _times_g(terms: List[Term], x: str, y: str, scale=ONE) -> List[Term]:
    out = []
    for t in terms:
        out.append(Term(t.coeff * scale, t.factors + (Factor("g", 0),), t.labels + ((x, y),)))
    return out


def _rename(t: Term, mp: Dict[str, str]) -> Term:
    return Term(t.coeff, t.factors, tuple(tuple(mp.get(x, x) for x in fl) for fl in t.labels))


def _base_series(head: str, labels: Tuple[str, ...], a: Coefficient, Z: int) -> Series:
    parts: Dict[int, List[Term]] = {0: [_t(1, (head, 0, labels))]}
    if head == "W":
        c = Coefficient(2)
    elif head == "g":
        c = Coefficient(2)
    elif head == "f":
        c = a
    elif head in ("ups", "Y"):
        c = Coefficient(0)
    elif head == "R":
        c = Coefficient(2)
        i, j, k, l = labels
        # D o g = D_jk g_il + D_il g_jk - D_ik g_jl - D_jl g_ik
        for (x, y, u, v), sgn in (((j, k, i, l), 1), ((i, l, j, k), 1),
                                  ((i, k, j, l), -1), ((j, l, i, k), -1)):
            one, two = _d_phi_terms(x, y)
            parts.setdefault(1, []).extend(_times_g(one, u, v, sgn))
            parts.setdefault(2, []).extend(_times_g(two, u, v, sgn))
    elif head == "Ric":
        c = Coefficient(0)
        x, y = labels
        one, two = _d_phi_terms(x, y)
        t1, t2 = _trace_d_terms()
        parts.setdefault(1, []).extend(t.scaled(N - 2) for t in one)
        parts[1].extend(_times_g(t1, x, y))
        parts.setdefault(2, []).extend(t.scaled(N - 2) for t in two)
        parts[2].extend(_times_g(t2, x, y))
    elif head == "S":
        c = Coefficient(-2)
        t1, t2 = _trace_d_terms()
        parts[1] = [t.scaled(2 * (N - 1)) for t in t1]
        parts[2] = [t.scaled(2 * (N - 1)) for t in t2]
    else:
        raise ValueError(f"no transformation law for {head!r}")
    return Series({k: LinearCombination(v) for k, v in parts.items() if k <= Z}, c, labels)


def _plain_derivative(L: LinearCombination, k: str) -> LinearCombination:
    """nabla_k by Leibniz; the new index becomes the outermost derivative."""
    out = []
    for t in L:
        for i, f in enumerate(t.factors):
            if f.head in ("g", "ginv"):
                continue
            if f.head in ("SP", "T", "U", "LR"):
                raise ValueError(f"cannot differentiate {f.head} here")
            factors = list(t.factors)
            labels = list(t.labels)
            factors[i] = Factor(f.head, f.nderiv + 1)
            labels[i] = (k,) + tuple(labels[i])
            out.append(Term(t.coeff, tuple(factors), tuple(labels)))
    return LinearCombination(out)


def _relabel_lc(L: LinearCombination, old: str, new: str) -> LinearCombination:
    return LinearCombination(_rename(t, {old: new}) for t in L)


def _with_factor(L: LinearCombination, head: str, m: int, labs: Tuple[str, ...], scale=ONE) -> LinearCombination:
    return LinearCombination(Term(t.coeff * scale, t.factors + (Factor(head, m),), t.labels + (tuple(labs),))
                             for t in L)


def _covariant_series(X: Series, k: str, Z: int) -> Series:
    parts: Dict[int, LinearCombination] = {}

    def add(j, L):
        if j > Z or L.is_empty():
            return
        parts[j] = parts[j] + L if j in parts else L

    for j, Xj in X.parts.items():
        add(j, _plain_derivative(Xj, k))
        if j + 1 > Z:
            continue
        corr: List[Term] = []
        if not X.c.is_zero():
            corr.extend(_with_factor(Xj, "phi", 1, (k,), X.c))
        for l in X.free:
            # -phi_l T[l -> k]
            corr.extend(_with_factor(_relabel_lc(Xj, l, k), "phi", 1, (l,), -1))
            # -phi_k T
            corr.extend(_with_factor(Xj, "phi", 1, (k,), -1))
            # +g_{kl} phi^s T[l -> s]
            s = _fresh()[0]
            moved = _with_factor(_relabel_lc(Xj, l, s), "phi", 1, (s,))
            corr.extend(_with_factor(moved, "g", 0, (k, l)))
        add(j + 1, LinearCombination(corr))
    return Series(parts, X.c, (k,) + X.free)


@lru_cache(maxsize=None)
def _factor_series_cached(head: str, m: int, a_text: str, Z: int) -> Tuple[Tuple[int, Tuple[Term, ...]], ...]:
    """Transformed nabla^m head on placeholder labels p0..; c is recomputed by the caller."""
    a = Coefficient(a_text)
    f = Factor(head, m)
    ph = tuple(f"p{i}" for i in range(f.nslots))
    X = _base_series(head, ph[m:], a, Z)
    for step in range(m - 1, -1, -1):
        X = _covariant_series(X, ph[step], Z)
    return tuple((j, tuple(algebra.canonicalize_structural(L).terms)) for j, L in sorted(X.parts.items()))


def _factor_c(head: str, a: Coefficient) -> Coefficient:
    return {"W": Coefficient(2), "R": Coefficient(2), "g": Coefficient(2), "ginv": Coefficient(2),
            "Ric": Coefficient(0), "S": Coefficient(-2), "f": a}.get(head, Coefficient(0))


def _factor_series(f: Factor, labels: Tuple[str, ...], a: Coefficient, Z: int) -> Dict[int, List[Term]]:
    head = "g" if f.head == "ginv" else f.head
    cached = _factor_series_cached(head, f.nderiv, str(a), Z)
    out: Dict[int, List[Term]] = {}
    for j, terms in cached:
        lst = []
        for t in terms:
            mp = {f"p{i}": labels[i] for i in range(len(labels))}
            for x, cnt in t.label_counts.items():
                if cnt == 2:
                    mp[x] = _fresh()[0]
            lst.append(_rename(t, mp))
        out[j] = lst
    return out


def _product(a: Dict[int, List[Term]], b: Dict[int, List[Term]], Z: int) -> Dict[int, List[Term]]:
    out: Dict[int, List[Term]] = {}
    for i, la in a.items():
        for j, lb in b.items():
            if i + j > Z:
                continue
            acc = out.setdefault(i + j, [])
            for x in la:
                for y in lb:
                    acc.append(Term(x.coeff * y.coeff, x.factors + y.factors, x.labels + y.labels))
    return out


def _term_exponent(t: Term, a: Coefficient, b: Coefficient) -> Coefficient:
    c = sum((_factor_c(f.head, a) for f in t.factors), Coefficient(0))
    pairs = sum(1 for v in t.label_counts.values() if v == 2)
    return c - 2 * pairs - b


def _prepare(L: LinearCombination) -> LinearCombination:
    out = []
    for t in L:
        heads = {f.head for f in t.factors}
        if "phi" in heads:
            raise ValueError("input already contains the rescaling function phi")
        if heads & {"LR", "T", "U", "Rt", "ut"}:
            raise ValueError("im_z takes intrinsic contractions only")
        if "SP" in heads:
            out.extend(algebra.to_riemann_form(LinearCombination([t])))
        else:
            out.append(t)
    return LinearCombination(out)


def im_z_raw(L: LinearCombination, Z: int, bidegree: BiDegree) -> LinearCombination:
    """Z! times the lam^Z part, before canonicalization."""
    if Z < 1:
        raise ValueError("Z must be a positive integer")
    a, b = bidegree.a, bidegree.b
    L = _prepare(L)
    out: List[Term] = []
    zf = math.factorial(Z)
    for t in L:
        e = _term_exponent(t, a, b)
        if not e.is_zero():
            raise WeightMismatchError(
                f"term {t} does not have bi-degree {bidegree} (leftover exponent {e})")
        acc: Dict[int, List[Term]] = {0: [Term(t.coeff, (), ())]}
        for f, labs in zip(t.factors, t.labels):
            acc = _product(acc, _factor_series(f, tuple(labs), a, Z), Z)
        out.extend(x.scaled(zf) for x in acc.get(Z, []))
    return LinearCombination(out)


def im_z(L: LinearCombination, Z: int, bidegree: BiDegree) -> LinearCombination:
    """Im^{Z|(a,b)}_phi of L, canonicalized; the rescaling function is the ``phi`` head."""
    return algebra.canonicalize(im_z_raw(L, Z, bidegree))


# ---------------------------------------------------------------------------
# invariance


@dataclass
class InvarianceReport:
    formal: bool
    numeric_pass: bool
    max_residual: float
    witness: Optional[str]
    trials: int
    dims: Tuple[int, ...]
    seed: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.formal and self.numeric_pass


def required_order(L: LinearCombination) -> int:
    need = 2
    for t in L:
        for f in t.factors:
            if f.head in ("R", "W", "Ric", "S", "SP"):
                need = max(need, f.nderiv + 2)
            elif f.head in ("f", "phi", "ups", "Y"):
                need = max(need, f.nderiv)
    return need


def numeric_invariance(L: LinearCombination, bidegree: BiDegree, n_values: Sequence[int] = (5, 6),
                       trials: int = 10, seed: int = 0, w_value=None) -> float:
    """Max relative residual of the finite rescaling test over random jets."""
    from . import jets as J
    order = required_order(L)
    worst = 0.0
    for n in n_values:
        wv = w_value
        if wv is None:
            wv = bidegree.a.evaluate(n, 0)
        for trial in range(trials):
            mj = J.sample_metric_jet(seed, n, order, trial=trial)
            f = J.sample_scalar_jet(seed, n, order, trial=trial, stream=2)
            aux = {name: J.sample_scalar_jet(seed, n, order, trial=trial, stream=10 + i)
                   for i, name in enumerate(("ups", "Y"))}
            phi = J.sample_scalar_jet(seed, n, order, trial=trial, stream=3)
            r = J.rescale_test(L, (bidegree.a.substitute(w_value=wv), bidegree.b.substitute(w_value=wv)),
                               mj, f, phi, aux, n, wv)
            worst = max(worst, r)
    return worst


def check_invariance(L: LinearCombination, bidegree: BiDegree, n_values: Sequence[int] = (5, 6),
                     trials: int = 10, seed: int = 0, tol: float = 1e-6, w_value=None) -> InvarianceReport:
    """Formal verdict from Im^1 plus the finite rescaling test.

    Invariance along every path e^{2 lam phi} g follows from Im^1 = 0 at all
    metrics: the lam-derivative at lam = s of e^{-b lam phi} L_{e^{2 lam phi} g}(e^{a lam phi} f)
    is e^{-b s phi} Im^1 evaluated at the metric e^{2 s phi} g and density e^{a s phi} f.
    """
    im1 = im_z(L, 1, bidegree)
    formal = im1.is_empty()
    witness = None if formal else str(LinearCombination([im1.terms[0]]))
    resid = numeric_invariance(L, bidegree, n_values, trials, seed, w_value)
    return InvarianceReport(formal, resid < tol, resid, witness, trials, tuple(n_values), seed, tol)


# ---------------------------------------------------------------------------
# the first-variation coefficients


def _internal_pairs(labels: Tuple[str, ...]) -> List[Tuple[int, int]]:
    seen: Dict[str, int] = {}
    out = []
    for pos, x in enumerate(labels):
        if x in seen:
            out.append((seen[x], pos))
        else:
            seen[x] = pos
    return out


def im_one_factor(f: Factor, labels: Tuple[str, ...], w) -> LinearCombination:
    """Terms of Im^1 of a single factor (its internal contractions included)
    that carry exactly one derivative on phi."""
    w = Coefficient.of(w)
    single = Term(ONE, (f,), (tuple(labels),))
    series = _factor_series(f, tuple(labels), w, 1)
    out = [t for t in series.get(1, []) if _phi_degrees(t) == [1]]
    return algebra.canonicalize_structural(LinearCombination(out))


def _phi_degrees(t: Term) -> List[int]:
    return sorted(f.nderiv for f in t.factors if f.head == "phi")


def _drop_long(L: LinearCombination, nfactors: int) -> LinearCombination:
    return LinearCombination(t for t in L if len(t.factors) <= nfactors)


def r_of_factor(f: Factor, labels: Tuple[str, ...], w) -> LinearCombination:
    """R[T]: the part of Im^1[T] of the shape (W or f factor) x (nabla phi)
    with one internal contraction fewer, derivatives normal ordered and
    terms with three or more factors discarded."""
    if f.head not in ("W", "f"):
        raise ValueError("R[T] is defined for Weyl and density factors")
    delta = len(_internal_pairs(tuple(labels)))
    if delta == 0:
        return LinearCombination()
    m = f.nderiv
    curv_pairs = sum(1 for p, q in _internal_pairs(tuple(labels)) if q >= m and p >= m)
    deriv_curv = sum(1 for p, q in _internal_pairs(tuple(labels)) if p < m <= q)
    if f.head == "W" and (curv_pairs or deriv_curv > 2):
        raise ValueError("more than two internal-index contractions (a Weyl trace)")
    L = im_one_factor(f, labels, w)
    keep = []
    for t in L:
        if len(t.factors) != 2 or any(x.head == "g" for x in t.factors):
            continue
        host = [i for i, x in enumerate(t.factors) if x.head != "phi"][0]
        if len(_internal_pairs(t.labels[host])) != delta - 1:
            continue
        keep.append(t)
    ordered = algebra.normal_order(LinearCombination(keep))
    return algebra.canonicalize_structural(_drop_long(ordered, 2))


def im_one_star(L: LinearCombination, w) -> LinearCombination:
    """Sum over terms and over internally contracted factors T_y of the term
    with T_y replaced by R[T_y] (the C^{u,+} construction)."""
    out: List[Term] = []
    for t in L:
        for f in t.factors:
            if f.head not in ("W", "f"):
                raise ValueError("im_one_star takes terms with only W and f factors")
        nf = len(t.factors)
        for y, (f, labs) in enumerate(zip(t.factors, t.labels)):
            if not _internal_pairs(tuple(labs)):
                continue
            # give the factor's externally contracted slots stable names
            r = r_of_factor(f, tuple(labs), w)
            others_f = t.factors[:y] + t.factors[y + 1:]
            others_l = t.labels[:y] + t.labels[y + 1:]
            used = set(t.label_counts)
            for rt in r:
                mp = {}
                for x, cnt in rt.label_counts.items():
                    if cnt == 2 or x not in labs:
                        nm = _fresh()[0]
                        while nm in used:
                            nm = _fresh()[0]
                        mp[x] = nm
                rt = _rename(rt, mp)
                out.append(Term(t.coeff * rt.coeff, others_f + rt.factors, others_l + rt.labels))
    return algebra.canonicalize_structural(LinearCombination(out))


def const_alpha(character: Character, which: str, w=None) -> Coefficient:
    """m xi (n - 2 xi + 2w) on the density side, f zeta (n - 2 zeta) on the curvature side."""
    if which == "density":
        side = character.rl2
    elif which == "curvature":
        side = character.rl1
    else:
        raise ValueError("which must be 'curvature' or 'density'")
    if not side:
        raise ValueError(f"the {which} side of the character is empty")
    lead = side[0]
    mult = side.count(lead)
    if which == "density":
        wc = Coefficient.w() if w is None else Coefficient.of(w)
        return Coefficient(mult * lead) * (N - 2 * lead + 2 * wc)
    return Coefficient(mult * lead) * (N - 2 * lead)


def skeleton(L: LinearCombination) -> LinearCombination:
    """Replace each W factor by R, with the factor (n-3)/(n-2) when one of its
    internal contractions involves a curvature slot."""
    out = []
    for t in L:
        c = t.coeff
        factors = []
        for f, labs in zip(t.factors, t.labels):
            if f.head == "W":
                if any(q >= f.nderiv for _, q in _internal_pairs(tuple(labs))):
                    c = c * (N - 3) / (N - 2)
                factors.append(Factor("R", f.nderiv))
            else:
                factors.append(f)
        out.append(Term(c, tuple(factors), t.labels))
    return LinearCombination(out)


def agree_linearized(a: LinearCombination, b: LinearCombination) -> bool:
    """True when lin{skeleton(a)} and lin{skeleton(b)} are formally equal.

    This is the equivalence the R[T] formulas are used under: after the
    skeleton replacement and linearization, derivatives commute and the
    second Bianchi identity holds exactly.
    """
    diff = algebra.linearize(skeleton(a)) - algebra.linearize(skeleton(b))
    return not formal.normal_form(algebra.canonicalize_structural(diff))
