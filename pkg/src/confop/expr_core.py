"""Tensor-expression IR, its text syntax, and the bookkeeping statistics.

A :class:`Term` is a coefficient times an ordered list of factors.  Each
factor owns an ordered list of slots and every slot carries an index label:
a label used twice in a term is a contraction (through the metric), a label
used once is a free slot.  Dummy labels only matter for the surface syntax;
structural identity compares terms after renaming dummies in order of first
appearance.

Slot layout per factor, always derivative slots first (outermost first):

    R, W, Rt   D{r1..rm} + 4 curvature slots          m + 4
    Ric        D{r1..rm} + 2                          m + 2
    S          D{r1..rm}                              m
    SP         p + 2 fully symmetric slots            p + 2
    f, phi, ups, Y, ut     D{r1..rp}                  p
    g, ginv    2
    LR         D{r1..rm} + 4 (linearized curvature)   m + 4
    T          p fully symmetric slots                p
    U          1 (auxiliary vector)                   1

Example::

    >>> L = parse("((n-2)/(2*(n-1))) * S{} * f{} + D{a,a}f{}")
    >>> sorted(profile(t).weight for t in L.terms)
    [-2, -2]
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from .coefficients import ONE, ZERO, Coefficient

CURVATURE_HEADS = ("R", "W", "Ric", "S", "SP")
DENSITY_HEAD = "f"
AUX_HEADS = ("phi", "ups", "Y")
SCALAR_HEADS = (DENSITY_HEAD,) + AUX_HEADS
METRIC_HEADS = ("g", "ginv")
LINEAR_HEADS = ("LR", "T", "U")
AMBIENT_HEADS = ("Rt", "ut")
ALL_HEADS = CURVATURE_HEADS + SCALAR_HEADS + METRIC_HEADS + LINEAR_HEADS + AMBIENT_HEADS

KIND_NAMES = {
    "R": "RiemannDeriv",
    "W": "WeylDeriv",
    "Ric": "RicciDeriv",
    "S": "ScalarDeriv",
    "SP": "SymSchoutenDeriv",
    "f": "DensityDeriv",
    "phi": "AuxScalarDeriv",
    "ups": "AuxScalarDeriv",
    "Y": "AuxScalarDeriv",
    "g": "MetricOrInverse",
    "ginv": "MetricOrInverse",
    "LR": "LinRiemann",
    "T": "SymTensor",
    "U": "AuxVector",
    "Rt": "AmbientRiemannDeriv",
    "ut": "AmbientDensityDeriv",
}

# base slot counts (slots that are not derivative slots)
_BASE_SLOTS = {"R": 4, "W": 4, "Rt": 4, "LR": 4, "Ric": 2, "S": 0, "SP": 2,
               "f": 0, "phi": 0, "ups": 0, "Y": 0, "ut": 0,
               "g": 2, "ginv": 2, "T": 0, "U": 1}


class DSLSyntaxError(ValueError):
    def __init__(self, message: str, line: int = 1, column: int = 1):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


@dataclass(frozen=True, order=True)
class Factor:
    head: str
    nderiv: int = 0

    def __post_init__(self):
        if self.head not in ALL_HEADS:
            raise ValueError(f"unknown factor head {self.head!r}")
        if self.nderiv < 0:
            raise ValueError("derivative count must be nonnegative")
        if self.head in METRIC_HEADS + ("U",) and self.nderiv:
            raise ValueError(f"{self.head} takes no derivatives")

    @property
    def kind(self) -> str:
        return KIND_NAMES[self.head]

    @property
    def nslots(self) -> int:
        return self.nderiv + _BASE_SLOTS[self.head]

    @property
    def deriv_slots(self) -> range:
        """Slot positions that carry covariant derivatives (none for SP, T: symmetric)."""
        if self.head in ("SP", "T", "U", "g", "ginv"):
            return range(0)
        return range(self.nderiv)

    @property
    def is_curvature(self) -> bool:
        return self.head in CURVATURE_HEADS or self.head in ("LR", "Rt")

    @property
    def is_density(self) -> bool:
        return self.head in ("f", "T", "ut")

    @property
    def is_metric(self) -> bool:
        return self.head in METRIC_HEADS

    @property
    def weight(self) -> int:
        if self.head in METRIC_HEADS:
            return 0
        if self.head in ("R", "W", "Ric", "S", "LR", "Rt"):
            return -(self.nderiv + 2)
        if self.head == "SP":
            return -(self.nderiv + 2)
        if self.head == "U":
            return -1
        return -self.nderiv

    def __str__(self):
        return f"{self.head}[{self.nderiv}]"


Label = str


def _dummy_normal(labels: Tuple[Tuple[Label, ...], ...]) -> Tuple[Tuple[Label, ...], ...]:
    counts: Dict[Label, int] = {}
    for fl in labels:
        for x in fl:
            counts[x] = counts.get(x, 0) + 1
    ren: Dict[Label, Label] = {}
    out = []
    for fl in labels:
        row = []
        for x in fl:
            if counts[x] == 2:
                if x not in ren:
                    ren[x] = f"#{len(ren)}"
                row.append(ren[x])
            else:
                row.append(x)
        out.append(tuple(row))
    return tuple(out)


@dataclass(frozen=True)
class Term:
    """coefficient * product of factors with labeled slots."""

    coeff: Coefficient
    factors: Tuple[Factor, ...]
    labels: Tuple[Tuple[Label, ...], ...]

    def __post_init__(self):
        if len(self.factors) != len(self.labels):
            raise ValueError("one label tuple per factor is required")
        counts: Dict[Label, int] = {}
        for f, fl in zip(self.factors, self.labels):
            if len(fl) != f.nslots:
                raise ValueError(f"{f.head} with {f.nderiv} derivatives needs {f.nslots} indices, got {len(fl)}")
            for x in fl:
                counts[x] = counts.get(x, 0) + 1
        bad = [x for x, c in counts.items() if c > 2]
        if bad:
            raise ValueError(f"index {bad[0]!r} appears more than twice")

    # structure ------------------------------------------------------------
    @property
    def label_counts(self) -> Dict[Label, int]:
        counts: Dict[Label, int] = {}
        for fl in self.labels:
            for x in fl:
                counts[x] = counts.get(x, 0) + 1
        return counts

    @property
    def free_labels(self) -> Tuple[Label, ...]:
        return tuple(sorted(x for x, c in self.label_counts.items() if c == 1))

    @property
    def slots(self) -> List[Tuple[int, int]]:
        return [(i, j) for i, fl in enumerate(self.labels) for j in range(len(fl))]

    @property
    def pairing(self) -> frozenset:
        where: Dict[Label, List[Tuple[int, int]]] = {}
        for i, fl in enumerate(self.labels):
            for j, x in enumerate(fl):
                where.setdefault(x, []).append((i, j))
        return frozenset(tuple(v) for v in where.values() if len(v) == 2)

    @property
    def free_slots(self) -> Tuple[Tuple[Tuple[int, int], Label], ...]:
        counts = self.label_counts
        out = []
        for i, fl in enumerate(self.labels):
            for j, x in enumerate(fl):
                if counts[x] == 1:
                    out.append(((i, j), x))
        return tuple(sorted(out, key=lambda s: s[1]))

    def key(self):
        """Structural identity (coefficient excluded, dummies normalized)."""
        return (self.factors, _dummy_normal(self.labels))

    def with_coeff(self, c) -> "Term":
        return Term(Coefficient.of(c), self.factors, self.labels)

    def scaled(self, c) -> "Term":
        return Term(self.coeff * c, self.factors, self.labels)

    @property
    def weight(self) -> int:
        return sum(f.weight for f in self.factors)

    @property
    def homogeneity(self) -> int:
        return sum(1 for f in self.factors if f.head == DENSITY_HEAD)

    def __str__(self):
        return format_term(self)


class LinearCombination:
    """Formal sum of terms, merged by structural identity; zero terms dropped."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Iterable[Term] = ()):
        acc: Dict[object, Term] = {}
        for t in terms:
            k = t.key()
            if k in acc:
                acc[k] = acc[k].with_coeff(acc[k].coeff + t.coeff)
            else:
                acc[k] = t
        self._terms = tuple(t for t in acc.values() if not t.coeff.is_zero())

    @property
    def terms(self) -> Tuple[Term, ...]:
        return self._terms

    def __iter__(self) -> Iterator[Term]:
        return iter(self._terms)

    def __len__(self):
        return len(self._terms)

    def is_empty(self) -> bool:
        return not self._terms

    def __add__(self, other: "LinearCombination") -> "LinearCombination":
        return LinearCombination(self._terms + tuple(other))

    def __sub__(self, other: "LinearCombination") -> "LinearCombination":
        return LinearCombination(self._terms + tuple(t.scaled(-1) for t in other))

    def __neg__(self):
        return LinearCombination(t.scaled(-1) for t in self._terms)

    def scaled(self, c) -> "LinearCombination":
        c = Coefficient.of(c)
        return LinearCombination(t.scaled(c) for t in self._terms)

    def __mul__(self, c):
        return self.scaled(c)

    __rmul__ = __mul__

    def structurally_equal(self, other: "LinearCombination") -> bool:
        a = {t.key(): t.coeff for t in self._terms}
        b = {t.key(): t.coeff for t in other}
        return a.keys() == b.keys() and all(a[k] == b[k] for k in a)

    @property
    def free_labels(self) -> Tuple[Label, ...]:
        return self._terms[0].free_labels if self._terms else ()

    def __str__(self):
        return format_lc(self)

    def __repr__(self):
        return f"LinearCombination({format_lc(self)!r})"


# ---------------------------------------------------------------------------
# building helpers


def term(coeff, *pieces: Tuple[str, int, Sequence[Label]]) -> Term:
    """term(c, ("W", 0, "ijkl"), ("f", 2, "aa")) with string or list labels."""
    factors, labels = [], []
    for head, m, labs in pieces:
        factors.append(Factor(head, m))
        labels.append(tuple(labs) if not isinstance(labs, str) else tuple(labs))
    return Term(Coefficient.of(coeff), tuple(factors), tuple(labels))


def multiply_terms(a: Term, b: Term) -> Term:
    """Product of two terms; dummies of ``b`` are renamed apart from ``a``."""
    used = set(a.label_counts)
    bc = b.label_counts
    ren = {}
    k = 0
    for x, c in bc.items():
        if c == 2 and x in used:
            while f"_{k}" in used or f"_{k}" in bc:
                k += 1
            ren[x] = f"_{k}"
            k += 1
    labels_b = tuple(tuple(ren.get(x, x) for x in fl) for fl in b.labels)
    return Term(a.coeff * b.coeff, a.factors + b.factors, a.labels + labels_b)


def rename_free(t: Term, mapping: Dict[Label, Label]) -> Term:
    counts = t.label_counts
    labels = tuple(tuple(mapping.get(x, x) if counts[x] == 1 else x for x in fl) for fl in t.labels)
    return Term(t.coeff, t.factors, labels)


def fresh_labels(t: Term, k: int, avoid: Iterable[Label] = ()) -> List[Label]:
    used = set(t.label_counts) | set(avoid)
    out = []
    i = 0
    while len(out) < k:
        cand = f"_{i}"
        if cand not in used:
            out.append(cand)
            used.add(cand)
        i += 1
    return out


# ---------------------------------------------------------------------------
# text syntax

_FACTOR_RE = re.compile(
    r"^\s*(?:D\{(?P<d>[^{}]*)\})?\s*(?P<h>[A-Za-z]+)\s*(?:\{(?P<i>[^{}]*)\})?\s*$")
_IDENT_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")


def _split_top(text: str, seps: str) -> List[Tuple[str, int, str]]:
    """Split at separator characters outside (), {}; returns (sep, offset, piece)."""
    out = []
    depth = 0
    start = 0
    sep = ""
    for i, ch in enumerate(text):
        if ch in "({":
            depth += 1
        elif ch in ")}":
            depth -= 1
        elif ch in seps and depth == 0:
            out.append((sep, start, text[start:i]))
            sep = ch
            start = i + 1
    out.append((sep, start, text[start:]))
    return out


def _parse_labels(s: str, line: int, col: int) -> Tuple[Label, ...]:
    s = s.strip()
    if not s:
        return ()
    labs = tuple(x.strip() for x in s.split(","))
    for x in labs:
        if not _IDENT_RE.match(x):
            raise DSLSyntaxError(f"bad index name {x!r}", line, col)
    return labs


def _parse_factor(text: str, line: int, col: int) -> Optional[Tuple[Factor, Tuple[Label, ...]]]:
    m = _FACTOR_RE.match(text)
    if not m or m.group("h") not in ALL_HEADS:
        return None
    head = m.group("h")
    dl = _parse_labels(m.group("d") or "", line, col)
    il = _parse_labels(m.group("i") or "", line, col)
    if head in ("SP", "T"):
        f = Factor(head, len(dl) + len(il) - _BASE_SLOTS[head])
        if f.nderiv < 0:
            raise DSLSyntaxError(f"{head} needs at least {_BASE_SLOTS[head]} indices", line, col)
        return f, dl + il
    if len(il) != _BASE_SLOTS[head]:
        raise DSLSyntaxError(
            f"{head} takes {_BASE_SLOTS[head]} indices inside braces, got {len(il)}", line, col)
    if head in METRIC_HEADS + ("U",) and dl:
        raise DSLSyntaxError(f"{head} takes no derivatives", line, col)
    return Factor(head, len(dl)), dl + il


def _parse_term(text: str, line: int, col: int, sign: int) -> Term:
    pieces = _split_top(text, "*")
    coeff_parts = []
    factors, labels = [], []
    for _, off, piece in pieces:
        if not piece.strip():
            raise DSLSyntaxError("empty factor", line, col + off)
        parsed = _parse_factor(piece, line, col + off)
        if parsed is None:
            if factors:
                raise DSLSyntaxError(f"cannot parse factor {piece.strip()!r}", line, col + off)
            coeff_parts.append(piece)
            continue
        factors.append(parsed[0])
        labels.append(parsed[1])
    coeff = ONE
    if coeff_parts:
        try:
            coeff = Coefficient("*".join(f"({p})" for p in coeff_parts))
        except Exception as exc:
            raise DSLSyntaxError(f"bad coefficient {'*'.join(coeff_parts).strip()!r}: {exc}",
                                 line, col) from None
    if sign < 0:
        coeff = -coeff
    try:
        return Term(coeff, tuple(factors), tuple(labels))
    except ValueError as exc:
        raise DSLSyntaxError(str(exc), line, col) from None


def parse(text: str) -> LinearCombination:
    """Parse DSL text into a LinearCombination.

    Terms are separated by top-level + and -; newlines continue the sum.
    Compound coefficients must be parenthesized, e.g. ``(n-2) * S{} * f{}``.
    """
    terms: List[Term] = []
    free_sets = set()
    lines = text.splitlines()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        for sep, off, piece in _split_top(line, "+-"):
            if not piece.strip():
                if sep == "" and off == 0:
                    continue
                raise DSLSyntaxError("dangling operator", lineno, off)
            sign = -1 if sep == "-" else 1
            lead = len(piece) - len(piece.lstrip())
            t = _parse_term(piece, lineno, off + lead + 1, sign)
            terms.append(t)
            free_sets.add(t.free_labels)
    if len(free_sets) > 1:
        raise DSLSyntaxError("terms have different free indices: "
                             + "; ".join(",".join(s) for s in sorted(free_sets)))
    # the sign of a term following a leading "-" at line start is handled by _split_top
    return LinearCombination(terms)


def _fmt_coeff(c: Coefficient) -> Tuple[int, str]:
    """Sign and magnitude text of a coefficient."""
    s = str(c)
    if c.is_constant():
        fr = c.to_fraction()
        sign = -1 if fr < 0 else 1
        mag = abs(fr)
        return sign, ("" if mag == 1 else str(mag))
    neg = -c
    if len(str(neg)) < len(s) and not str(neg).startswith("-"):
        return -1, f"({neg})"
    return 1, f"({s})"


def format_factor(f: Factor, labels: Sequence[Label]) -> str:
    nd = len(f.deriv_slots)
    if f.head in ("SP", "T"):
        return f"{f.head}{{{','.join(labels)}}}"
    d = f"D{{{','.join(labels[:nd])}}}" if nd else ""
    if _BASE_SLOTS[f.head] == 0:
        return f"{d}{f.head}"
    return f"{d}{f.head}{{{','.join(labels[nd:])}}}"


def format_term(t: Term, with_sign: bool = True) -> str:
    sign, mag = _fmt_coeff(t.coeff)
    body = " * ".join(format_factor(f, fl) for f, fl in zip(t.factors, t.labels))
    if not body:
        body = "1" if not mag else ""
        parts = [p for p in (mag, body) if p]
        text = " * ".join(parts) if parts else "1"
    else:
        text = f"{mag} * {body}" if mag else body
    if with_sign and sign < 0:
        return f"-{text}"
    return text


def format_lc(L: LinearCombination) -> str:
    if L.is_empty():
        return "0"
    lines = []
    for i, t in enumerate(L.terms):
        sign, _ = _fmt_coeff(t.coeff)
        body = format_term(t, with_sign=False)
        if i == 0:
            lines.append(("- " if sign < 0 else "") + body)
        else:
            lines.append(("- " if sign < 0 else "+ ") + body)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class ExpressionProfile:
    weight: int
    kappa: int
    kappa_sharp: int
    sigma: int
    delta: int
    degree: int
    beta: int
    gamma: int
    character: Tuple[Tuple[int, ...], Tuple[int, ...]]


def internal_contractions(t: Term, i: int) -> int:
    fl = t.labels[i]
    return len(fl) - len(set(fl))


def iota_tau(f: Factor, tau_internal: int) -> Tuple[int, int]:
    """(iota, tau) counting Ric and S as traced curvature factors."""
    if f.head == "Ric":
        return f.nderiv + 4, tau_internal + 1
    if f.head == "S":
        return f.nderiv + 4, tau_internal + 2
    return f.nslots, tau_internal


def factor_gamma(f: Factor, tau: int) -> Optional[int]:
    iota, tau = iota_tau(f, tau)
    if f.head in ("R", "W", "Ric", "S", "LR", "Rt"):
        return iota - tau - 2
    if f.head == "SP":
        return iota - tau - 1
    if f.head in ("f", "T"):
        return iota - tau
    return None


def profile(t: Term) -> ExpressionProfile:
    weight = t.weight
    kappa = sum(1 for f in t.factors if f.head == DENSITY_HEAD)
    kappa_sharp = sum(1 for f in t.factors if f.head == DENSITY_HEAD and f.nderiv >= 1)
    sigma = sum(1 for f in t.factors if not f.is_metric)
    s = sum(1 for f in t.factors if f.head in CURVATURE_HEADS)
    delta = 0
    betas, gammas = [], []
    rl1, rl2 = [], []
    for i, f in enumerate(t.factors):
        if f.is_metric:
            continue
        tau = internal_contractions(t, i)
        delta += tau
        if f.head == DENSITY_HEAD:
            betas.append(f.nslots - tau)
            if tau:
                rl2.append(tau)
        elif f.head in CURVATURE_HEADS and tau:
            rl1.append(tau)
        gm = factor_gamma(f, tau)
        if gm is not None and f.head not in ("T", "LR"):
            gammas.append(gm)
    return ExpressionProfile(
        weight=weight,
        kappa=kappa,
        kappa_sharp=kappa_sharp,
        sigma=sigma,
        delta=delta,
        degree=2 * s + kappa_sharp,
        beta=max(betas) if betas else 0,
        gamma=max(gammas) if gammas else 0,
        character=(tuple(sorted(rl1, reverse=True)), tuple(sorted(rl2, reverse=True))),
    )


def split_by_homogeneity(L: LinearCombination) -> Dict[int, LinearCombination]:
    parts: Dict[int, List[Term]] = {}
    for t in L:
        parts.setdefault(t.homogeneity, []).append(t)
    return {z: LinearCombination(ts) for z, ts in sorted(parts.items())}


@dataclass
class RestrictionReport:
    k: Optional[int]
    beta: int
    beta_ok: Optional[bool]
    gamma: int
    gamma_ok: Optional[bool]
    witness: Optional[str] = None
    notes: List[str] = field(default_factory=list)

    @property
    def applicable(self) -> bool:
        return self.beta_ok is not None or self.gamma_ok is not None

    @property
    def passed(self) -> bool:
        return self.beta_ok is not False and self.gamma_ok is not False

    def __str__(self):
        if not self.applicable:
            return "no restrictions applicable"
        parts = []
        if self.beta_ok is not None:
            parts.append(f"beta={self.beta} < k={self.k}: {'pass' if self.beta_ok else 'fail'}")
        if self.gamma_ok is not None:
            parts.append(f"gamma={self.gamma} < n/2: {'pass' if self.gamma_ok else 'fail'}")
        if self.witness:
            parts.append(f"witness: {self.witness}")
        return "; ".join(parts)


def check_extra_restrictions(L: LinearCombination, n: int,
                             w: Union[int, Fraction, Coefficient, None]) -> RestrictionReport:
    """beta[L] < k when w = -n/2 + k (k a positive integer); gamma[L] < n/2 when n is even."""
    profiles = [(t, profile(t)) for t in L]
    beta = max((p.beta for _, p in profiles), default=0)
    gamma = max((p.gamma for _, p in profiles), default=0)
    notes = []
    k = None
    if w is not None:
        wc = Coefficient.of(w) if not isinstance(w, Coefficient) else w
        kc = wc + Fraction(n, 2)
        if kc.is_constant():
            kv = kc.to_fraction()
            if kv.denominator == 1 and kv > 0:
                k = int(kv)
        else:
            notes.append("weight is symbolic; the beta restriction is not decided")
    beta_ok = None if k is None else beta < k
    gamma_ok = (gamma < Fraction(n, 2)) if n % 2 == 0 else None
    witness = None
    for t, p in profiles:
        if (beta_ok is False and p.beta >= k) or (gamma_ok is False and 2 * p.gamma >= n):
            witness = format_term(t)
            break
    return RestrictionReport(k, beta, beta_ok, gamma, gamma_ok, witness, notes)
