"""Exact normal form of complete contractions in metric-jet variables.

At a point choose coordinates with g = delta and dg = 0.  The higher jets
H_k = d^k g (k >= 2, symmetric in the k derivative slots and in the two
metric slots) are then free variables, and so are the jets F_p = d^p psi of
every scalar psi.  Expanding each factor of a Riemann-form contraction in
these variables turns it into a polynomial in tensors whose only symmetries
are slot permutations inside symmetric groups of slots, with contractions
through delta (a closed delta loop gives the symbol n).  Such a polynomial is
zero for generic n iff its coefficients vanish after reducing every monomial
to a canonical contraction graph.  This decides exactly the identities that
follow from the curvature symmetries, both Bianchi identities and the
commutation of covariant derivatives, uniformly in the dimension.

The symbolic pre-evaluation algebra uses the symbols

    ("h", k)          d^k (g - delta), slots: k derivative + 2 metric
    ("G",)            inverse metric, 2 slots
    ("d",)            constant delta, 2 slots
    ("F", name, p)    d^p psi
    ("U",)            auxiliary vector (constant)

and evaluation at the point drops h_0, h_1 and turns G into delta.
"""
from __future__ import annotations

import itertools
from collections import defaultdict
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .coefficients import Coefficient, N
from .expr_core import _dummy_normal

Sym = Tuple
Mono = Tuple[Tuple[Sym, Tuple], ...]
Poly = Dict[Mono, Fraction]

_counter = itertools.count()


def _fresh() -> int:
    return next(_counter)


def _canon_factor(sym: Sym, labs: Tuple) -> Tuple[Sym, Tuple]:
    """Sort labels inside each symmetric group of slots."""
    kind = sym[0]
    if kind in ("h", "H"):
        k = sym[1]
        return sym, tuple(sorted(labs[:k], key=repr)) + tuple(sorted(labs[k:], key=repr))
    if kind in ("G", "d", "F"):
        return sym, tuple(sorted(labs, key=repr))
    return sym, labs


def _norm(factors: Iterable[Tuple[Sym, Tuple]]) -> Mono:
    return tuple(sorted((_canon_factor(s, l) for s, l in factors), key=repr))


def _add_into(acc: Poly, mono: Mono, c: Fraction) -> None:
    v = acc.get(mono, 0) + c
    if v:
        acc[mono] = v
    elif mono in acc:
        del acc[mono]


def _deficit(mono: Mono) -> int:
    d = 0
    for sym, _ in mono:
        if sym[0] == "h":
            if sym[1] == 0:
                d += 2
            elif sym[1] == 1:
                d += 1
    return d


def _prune(p: Poly, budget: int) -> Poly:
    return {m: c for m, c in p.items() if _deficit(m) <= budget}


def _mul(p: Poly, q: Poly, budget: int) -> Poly:
    out: Poly = {}
    for m1, c1 in p.items():
        d1 = _deficit(m1)
        if d1 > budget:
            continue
        for m2, c2 in q.items():
            if d1 + _deficit(m2) > budget:
                continue
            _add_into(out, _norm(m1 + m2), c1 * c2)
    return out


def _relabel(p: Poly, mapping: Dict) -> Poly:
    out: Poly = {}
    for m, c in p.items():
        nm = _norm((s, tuple(mapping.get(x, x) for x in labs)) for s, labs in m)
        _add_into(out, nm, c)
    return out


def _diff_mono(mono: Mono, a) -> List[Tuple[Mono, Fraction]]:
    out = []
    for i, (sym, labs) in enumerate(mono):
        rest = mono[:i] + mono[i + 1:]
        kind = sym[0]
        if kind == "h":
            out.append((_norm(rest + ((("h", sym[1] + 1), (a,) + labs),)), Fraction(1)))
        elif kind == "F":
            out.append((_norm(rest + ((("F", sym[1], sym[2] + 1), (a,) + labs),)), Fraction(1)))
        elif kind == "G":
            b, c = labs
            x, y = _fresh(), _fresh()
            new = ((("G",), (b, x)), (("h", 1), (a, x, y)), (("G",), (y, c)))
            out.append((_norm(rest + new), Fraction(-1)))
        # ("d",) and ("U",) are constant
    return out


def _diff(p: Poly, a, budget: int) -> Poly:
    out: Poly = {}
    for m, c in p.items():
        for nm, k in _diff_mono(m, a):
            if _deficit(nm) <= budget:
                _add_into(out, nm, c * k)
    return out


def _christoffel(c, a, s) -> Poly:
    """Gamma^c_{a s} = 1/2 G^{cd}(d_a h_ds + d_s h_da - d_d h_as)."""
    d = _fresh()
    g = (("G",), (c, d))
    half = Fraction(1, 2)
    return {
        _norm((g, (("h", 1), (a, d, s)))): half,
        _norm((g, (("h", 1), (s, d, a)))): half,
        _norm((g, (("h", 1), (d, a, s)))): -half,
    }


def _add(p: Poly, q: Poly, scale: Fraction = Fraction(1)) -> Poly:
    out = dict(p)
    for m, c in q.items():
        _add_into(out, m, c * scale)
    return out


def _covariant(p: Poly, free: Sequence, a, budget: int) -> Poly:
    """nabla_a of a covariant tensor expression whose free slots are ``free``."""
    out = _diff(p, a, budget)
    if budget >= 0:
        for s in free:
            c = _fresh()
            gam = _christoffel(c, a, s)
            moved = _relabel(p, {s: c})
            out = _add(out, _mul(gam, moved, budget), Fraction(-1))
    return out


def _riemann_expr(i, j, k, l, budget: int) -> Poly:
    """Full (not evaluated) R_{ijkl} = -g_{im} R^m_{jkl} with the standard R^a_{bcd}."""
    m = _fresh()
    # R^m_{jkl} = d_k G^m_{lj} - d_l G^m_{kj} + G^m_{ke} G^e_{lj} - G^m_{le} G^e_{kj}
    r: Poly = {}
    r = _add(r, _diff(_christoffel(m, l, j), k, budget + 2))
    r = _add(r, _diff(_christoffel(m, k, j), l, budget + 2), Fraction(-1))
    e = _fresh()
    r = _add(r, _mul(_christoffel(m, k, e), _christoffel(e, l, j), budget + 2))
    e2 = _fresh()
    r = _add(r, _mul(_christoffel(m, l, e2), _christoffel(e2, k, j), budget + 2), Fraction(-1))
    lower = {_norm(((("d",), (i, m)),)): Fraction(1), _norm(((("h", 0), (i, m)),)): Fraction(1)}
    out = _mul(lower, r, budget)
    return {mm: -c for mm, c in out.items()}


# ---------------------------------------------------------------------------
# evaluation at the point


class _UF:
    def __init__(self):
        self.p = {}

    def find(self, x):
        p = self.p
        while p.get(x, x) != x:
            p[x] = p.get(p[x], p[x])
            x = p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # prefer string (free) labels as representatives
            if isinstance(ra, str) and not isinstance(rb, str):
                self.p[rb] = ra
            else:
                self.p[ra] = rb
            return True
        return False


def eliminate_metric(factors: Sequence[Tuple[Sym, Tuple]]) -> Optional[Tuple[int, List[Tuple[Sym, Tuple]]]]:
    """Contract delta/G factors away.  Returns (power of n, remaining factors)."""
    uf = _UF()
    npow = 0
    rest = []
    for sym, labs in factors:
        if sym[0] in ("G", "d"):
            if not uf.union(labs[0], labs[1]):
                npow += 1
        else:
            rest.append((sym, labs))
    # label occurrences among non-metric factors
    occ = defaultdict(int)
    for _, labs in rest:
        for x in labs:
            occ[uf.find(x)] += 1
    out = [(s, tuple(uf.find(x) for x in labs)) for s, labs in rest]
    # metric chains that end on two free labels survive as delta factors
    comps = defaultdict(list)
    for x in list(uf.p.keys()):
        comps[uf.find(x)].append(x)
    for root, members in comps.items():
        members = set(members) | {root}
        frees = sorted(x for x in members if isinstance(x, str))
        if occ[root] == 0 and len(frees) == 2:
            out.append((("d",), tuple(frees)))
        elif occ[root] == 0 and len(frees) == 1:
            raise ValueError("dangling metric chain")
    # rename representatives: a free label in a component wins
    ren = {}
    for root, members in comps.items():
        frees = [x for x in set(members) | {root} if isinstance(x, str)]
        if len(frees) == 1:
            ren[root] = frees[0]
    out = [(s, tuple(ren.get(x, x) for x in labs)) for s, labs in out]
    return npow, out


def _evaluate(p: Poly) -> Dict[Mono, Dict[int, Fraction]]:
    out: Dict[Mono, Dict[int, Fraction]] = {}
    for m, c in p.items():
        if any(s[0] == "h" and s[1] < 2 for s, _ in m):
            continue
        npow, rest = eliminate_metric(m)
        rest = [(("H", s[1]) if s[0] == "h" else s, labs) for s, labs in rest]
        key = _norm(rest)
        slot = out.setdefault(key, {})
        slot[npow] = slot.get(npow, 0) + c
    return out


# ---------------------------------------------------------------------------
# templates: factors evaluated at the point, with placeholder free labels


def _placeholders(k: int) -> Tuple[str, ...]:
    return tuple(f"${i}" for i in range(k))


@lru_cache(maxsize=None)
def riemann_template(m: int):
    """nabla^m R at the point; slots $0..$(m-1) derivatives, then i, j, k, l."""
    ph = _placeholders(m + 4)
    ders, (i, j, k, l) = ph[:m], ph[m:]
    expr = _riemann_expr(i, j, k, l, m)
    free = [i, j, k, l]
    for step in range(m - 1, -1, -1):
        a = ders[step]
        expr = _covariant(expr, free, a, step)
        free = [a] + free
    return _freeze(_evaluate(expr))


@lru_cache(maxsize=None)
def scalar_template(name: str, p: int):
    ph = _placeholders(p)
    expr: Poly = {_norm(((("F", name, 0), ()),)): Fraction(1)}
    free: List = []
    for step in range(p - 1, -1, -1):
        a = ph[step]
        expr = _covariant(expr, free, a, step)
        free = [a] + free
    return _freeze(_evaluate(expr))


@lru_cache(maxsize=None)
def linear_riemann_template(m: int):
    """Linearized curvature: the (exactly linear) point value of R with m more plain derivatives."""
    base = riemann_template(0)
    ph = _placeholders(m + 4)
    ders = ph[:m]
    shift = {f"${i}": f"${i + m}" for i in range(4)}
    out = []
    for mono, coeffs in base:
        new = []
        for sym, labs in mono:
            labs = tuple(shift.get(x, x) for x in labs)
            new.append((("H", sym[1] + m), tuple(ders) + labs))
        out.append((tuple(new), coeffs))
    return tuple(out)


def _freeze(d: Dict[Mono, Dict[int, Fraction]]):
    return tuple((m, tuple(sorted((k, v) for k, v in c.items() if v))) for m, c in d.items()
                 if any(v for v in c.values()))


def template_for(head: str, m: int):
    if head == "R":
        return riemann_template(m)
    if head in ("f", "phi", "ups", "Y"):
        return scalar_template(head, m)
    if head == "LR":
        return linear_riemann_template(m)
    if head == "T":
        return (((((("F", "T", m)), _placeholders(m)),), ((0, Fraction(1)),)),)
    if head == "U":
        return (((((("U",)), _placeholders(1)),), ((0, Fraction(1)),)),)
    raise ValueError(f"no jet template for head {head!r}; convert to Riemann form first")


# ---------------------------------------------------------------------------
# canonical contraction graphs


def _port_class(sym: Sym, j: int) -> int:
    if sym[0] == "H":
        return 0 if j < sym[1] else 1
    return 0


def canonical_graph(factors: Sequence[Tuple[Sym, Tuple]]):
    """Canonical key of a contraction of symmetric-slot tensors."""
    nodes = list(factors)
    where = defaultdict(list)
    for u, (sym, labs) in enumerate(nodes):
        for j, x in enumerate(labs):
            where[x].append((u, _port_class(sym, j)))
    edges = []  # (endpoint, endpoint) ; endpoint = (u, cls) or ("ext", label)
    for x, ends in where.items():
        if len(ends) == 2:
            edges.append((ends[0], ends[1]))
        elif len(ends) == 1:
            edges.append((ends[0], ("ext", x)))
        else:
            raise ValueError(f"label {x!r} used {len(ends)} times")
    nn = len(nodes)
    adj = [[] for _ in range(nn)]
    for a, b in edges:
        if b[0] == "ext":
            adj[a[0]].append((a[1], ("x", b[1])))
        else:
            adj[a[0]].append((a[1], b))
            adj[b[0]].append((b[1], a))
    # colour refinement
    syms = [repr(s) for s, _ in nodes]
    order = sorted(set(syms))
    color = [order.index(s) for s in syms]
    ncol = len(set(color))
    while True:
        sigs = []
        for u in range(nn):
            nb = sorted(repr((cu, "x", v[1])) if v[0] == "x" else repr((cu, "n", color[v[0]], v[1]))
                        for cu, v in adj[u])
            sigs.append((color[u], tuple(nb)))
        uniq = sorted(set(sigs))
        newc = [uniq.index(sg) for sg in sigs]
        color = newc
        if len(uniq) == ncol:
            break
        ncol = len(uniq)
    cells = defaultdict(list)
    for u in range(nn):
        cells[color[u]].append(u)
    cell_list = [cells[c] for c in sorted(cells)]
    best = None
    for combo in itertools.product(*[itertools.permutations(c) for c in cell_list]):
        order_nodes = [u for cell in combo for u in cell]
        pos = {u: i for i, u in enumerate(order_nodes)}
        enc = []
        for a, b in edges:
            ea = (0, pos[a[0]], a[1])
            eb = (1, b[1], 0) if b[0] == "ext" else (0, pos[b[0]], b[1])
            enc.append((ea, eb) if ea <= eb else (eb, ea))
        key = tuple(sorted(enc, key=repr))
        if best is None or key < best:
            best = key
    return (tuple(syms[u] for cell in cell_list for u in cell), best)


# ---------------------------------------------------------------------------
# normal form of a term / linear combination


def term_normal_form(head_m_labels: Sequence[Tuple[str, int, Tuple]], metric_pairs: Sequence[Tuple]):
    """Normal form of one product.  Returns {graph key: {npow: Fraction}}."""
    counts = defaultdict(int)
    for _, _, labels in head_m_labels:
        for x in labels:
            counts[x] += 1
    for p in metric_pairs:
        for x in p:
            counts[x] += 1
    op = lambda x: x if counts[x] == 1 else ("c", x)
    head_m_labels = [(h, m, tuple(op(x) for x in labels)) for h, m, labels in head_m_labels]
    metric_pairs = [tuple(op(x) for x in p) for p in metric_pairs]
    templates = []
    for idx, (head, m, labels) in enumerate(head_m_labels):
        tpl = template_for(head, m)
        templates.append((idx, labels, tpl))
    out: Dict = {}
    lists = []
    for idx, labels, tpl in templates:
        entries = []
        for mono, coeffs in tpl:
            ren = {}
            new = []
            for sym, labs in mono:
                nl = []
                for x in labs:
                    if isinstance(x, str) and x.startswith("$"):
                        nl.append(labels[int(x[1:])])
                    else:
                        if x not in ren:
                            ren[x] = ("t", idx, x)
                        nl.append(ren[x])
                new.append((sym, tuple(nl)))
            entries.append((tuple(new), coeffs))
        lists.append(entries)
    metric = [(("d",), tuple(p)) for p in metric_pairs]
    for combo in itertools.product(*lists):
        factors = list(metric)
        poly = {0: Fraction(1)}
        for mono, coeffs in combo:
            factors.extend(mono)
            newp: Dict[int, Fraction] = {}
            for k1, v1 in poly.items():
                for k2, v2 in coeffs:
                    newp[k1 + k2] = newp.get(k1 + k2, 0) + v1 * v2
            poly = newp
        npow, rest = eliminate_metric(factors)
        # relabel term labels that are contracted to opaque ids (keep free strings)
        key = canonical_graph(rest)
        slot = out.setdefault(key, {})
        for k, v in poly.items():
            slot[k + npow] = slot.get(k + npow, 0) + v
    return out


def _opaque(factors):
    counts = defaultdict(int)
    for _, labs in factors:
        for x in labs:
            counts[x] += 1
    return [(s, tuple(x if counts[x] == 1 else ("c", x) for x in labs)) for s, labs in factors]


def poly_in_n(coeffs: Dict[int, Fraction]) -> Coefficient:
    total = Coefficient(0)
    for k, v in coeffs.items():
        if v:
            total = total + Coefficient(v) * (N ** k)
    return total


def _term_products(t):
    """(head, m, labels) list and metric pairs of a Riemann-form term."""
    prods, metric = [], []
    k = 0
    for f, labs in zip(t.factors, t.labels):
        if f.head in ("g", "ginv"):
            metric.append(tuple(labs))
        elif f.head == "Ric":
            x = ("tr", k)
            k += 1
            m = f.nderiv
            prods.append(("R", m, tuple(labs[:m]) + (x, labs[m], labs[m + 1], x)))
        elif f.head == "S":
            x, y = ("tr", k), ("tr", k + 1)
            k += 2
            m = f.nderiv
            prods.append(("R", m, tuple(labs[:m]) + (x, y, y, x)))
        elif f.head in ("W", "SP", "Rt", "ut"):
            raise ValueError(f"head {f.head} must be rewritten before taking the jet normal form")
        else:
            prods.append((f.head, f.nderiv, tuple(labs)))
    return prods, metric


@lru_cache(maxsize=20000)
def _cached_term_nf(factors, labels):
    from .expr_core import Term
    prods, metric = _term_products(Term(Coefficient(1), factors, labels))
    part = term_normal_form(prods, metric)
    return tuple((k, poly_in_n(c)) for k, c in part.items() if any(c.values()))


def normal_form(L) -> Dict:
    """{graph key: Coefficient} with zero entries dropped."""
    acc: Dict = {}
    for t in L:
        for key, c0 in _cached_term_nf(t.factors, _dummy_normal(t.labels)):
            c = t.coeff * c0
            acc[key] = acc.get(key, Coefficient(0)) + c
    return {k: v for k, v in acc.items() if not v.is_zero()}
