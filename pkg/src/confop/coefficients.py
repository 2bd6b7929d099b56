"""Exact coefficients: rational functions in the symbols n (dimension) and w (weight).

Arithmetic is delegated to sympy's sparse fraction field over ZZ, which keeps
numerator and denominator coprime.  The wrapper adds a canonical sign, a
stable text form, hashing and exact evaluation at rational points.
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Union

from sympy import ZZ, sympify
from sympy.polys.fields import field

_FIELD, _N, _W = field("n,w", ZZ)

Number = Union[int, Fraction]


class SingularCoefficientError(ZeroDivisionError):
    """A coefficient's denominator vanishes at the requested (n, w)."""

    def __init__(self, coeff: "Coefficient", n_value, w_value):
        self.coeff = coeff
        self.n_value = n_value
        self.w_value = w_value
        super().__init__(
            f"coefficient {coeff} is singular at n={n_value}, w={w_value}"
        )


class Coefficient:
    # constants keep a Fraction fast path; the field element is built lazily
    __slots__ = ("_q", "_ee", "_hash")

    def __init__(self, value=0):
        self._hash = None
        self._q = None
        self._ee = None
        if isinstance(value, Coefficient):
            self._q, self._ee = value._q, value._ee
        elif isinstance(value, (int, Fraction)):
            self._q = Fraction(value)
        elif isinstance(value, str):
            self._set(_parse(value))
        else:
            self._set(_FIELD(value))

    def _set(self, e):
        e = _normalize(e)
        if e.numer.is_ground and e.denom.is_ground:
            self._q = Fraction(int(e.numer.LC or 0), int(e.denom.LC))
        else:
            self._ee = e

    @property
    def _e(self):
        if self._ee is None:
            q = self._q
            self._ee = _FIELD(q.numerator) / _FIELD(q.denominator)
        return self._ee

    # construction helpers
    @classmethod
    def _wrap(cls, e) -> "Coefficient":
        c = cls.__new__(cls)
        c._hash = None
        c._q = None
        c._ee = None
        c._set(e)
        return c

    @classmethod
    def _const(cls, q: Fraction) -> "Coefficient":
        c = cls.__new__(cls)
        c._hash = None
        c._q = q
        c._ee = None
        return c

    @staticmethod
    def n() -> "Coefficient":
        return Coefficient._wrap(_N)

    @staticmethod
    def w() -> "Coefficient":
        return Coefficient._wrap(_W)

    @staticmethod
    def of(value) -> "Coefficient":
        return value if isinstance(value, Coefficient) else Coefficient(value)

    # field operations
    def __add__(self, other):
        o = Coefficient.of(other)
        if self._q is not None and o._q is not None:
            return Coefficient._const(self._q + o._q)
        return Coefficient._wrap(self._e + o._e)

    __radd__ = __add__

    def __sub__(self, other):
        o = Coefficient.of(other)
        if self._q is not None and o._q is not None:
            return Coefficient._const(self._q - o._q)
        return Coefficient._wrap(self._e - o._e)

    def __rsub__(self, other):
        return Coefficient.of(other) - self

    def __mul__(self, other):
        o = Coefficient.of(other)
        if self._q is not None and o._q is not None:
            return Coefficient._const(self._q * o._q)
        if self._q == 0 or o._q == 0:
            return Coefficient._const(Fraction(0))
        if self._q == 1:
            return o
        if o._q == 1:
            return self
        return Coefficient._wrap(self._e * o._e)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Coefficient.of(other)
        if o.is_zero():
            raise ZeroDivisionError("division by the zero coefficient")
        if self._q is not None and o._q is not None:
            return Coefficient._const(self._q / o._q)
        return Coefficient._wrap(self._e / o._e)

    def __rtruediv__(self, other):
        return Coefficient.of(other) / self

    def __neg__(self):
        if self._q is not None:
            return Coefficient._const(-self._q)
        return Coefficient._wrap(-self._e)

    def __pow__(self, k: int):
        if self._q is not None:
            return Coefficient._const(self._q ** k)
        return Coefficient._wrap(self._e ** k)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction, Coefficient)):
            o = Coefficient.of(other)
            if self._q is not None or o._q is not None:
                return self._q == o._q
            return self._e == o._e
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(str(self))
        return self._hash

    def is_zero(self) -> bool:
        return self._q == 0

    def is_constant(self) -> bool:
        return self._q is not None

    @property
    def numerator(self):
        return self._e.numer

    @property
    def denominator(self):
        return self._e.denom

    def to_fraction(self) -> Fraction:
        if self._q is None:
            raise ValueError(f"{self} depends on n or w")
        return self._q

    def evaluate(self, n_value: Number, w_value: Number = 0) -> Fraction:
        """Exact value at a rational point; raises if the denominator vanishes."""
        if self._q is not None:
            return self._q
        nv, wv = Fraction(n_value), Fraction(w_value)
        den = _eval_poly(self._e.denom, nv, wv)
        if den == 0:
            raise SingularCoefficientError(self, n_value, w_value)
        return _eval_poly(self._e.numer, nv, wv) / den

    def substitute(self, n_value=None, w_value=None) -> "Coefficient":
        if self._q is not None:
            return self
        e = self._e
        num, den = e.numer.as_expr(), e.denom.as_expr()
        subs = {}
        if n_value is not None:
            subs["n"] = sympify(n_value) if not isinstance(n_value, Coefficient) else n_value.as_expr()
        if w_value is not None:
            subs["w"] = sympify(w_value) if not isinstance(w_value, Coefficient) else w_value.as_expr()
        expr = (num / den).subs(subs)
        return Coefficient._wrap(_FIELD.from_expr(expr))

    def as_expr(self):
        return self._e.as_expr()

    def roots_in(self, symbol: str):
        """Roots of the numerator in one symbol (the other treated as a parameter)."""
        from sympy import Symbol, solve
        return solve(self._e.numer.as_expr(), Symbol(symbol))

    def __str__(self):
        if self._q is not None:
            q = self._q
            if q.denominator == 1:
                return str(q.numerator)
            num = f"({q.numerator})" if q.numerator < 0 else str(q.numerator)
            return f"{num}/{q.denominator}"
        return _text(self._e)

    def __repr__(self):
        return f"Coefficient({str(self)!r})"


def _normalize(e):
    den = e.denom
    if den.LC < 0:
        e = _FIELD.new(-e.numer, -den)
    return e


def _eval_poly(p, nv: Fraction, wv: Fraction) -> Fraction:
    total = Fraction(0)
    for (i, j), c in p.terms():
        total += Fraction(int(c)) * nv ** i * wv ** j
    return total


def _poly_text(p) -> str:
    s = str(p.as_expr()).replace("**", "^")
    return s


def _text(e) -> str:
    num, den = e.numer, e.denom
    if not num:
        return "0"
    ns = _poly_text(num)
    if den.is_ground and den.LC == 1:
        return ns
    ds = _poly_text(den)
    if not num.is_ground or num.LC < 0:
        ns = f"({ns})"
    if not (den.is_ground):
        ds = f"({ds})"
    return f"{ns}/{ds}"


@lru_cache(maxsize=4096)
def _parse(text: str):
    t = text.strip().replace("^", "**")
    expr = sympify(t, locals={"n": sympify("n"), "w": sympify("w")})
    bad = {str(s) for s in expr.free_symbols} - {"n", "w"}
    if bad:
        raise ValueError(f"unknown symbols in coefficient: {sorted(bad)}")
    return _FIELD.from_expr(expr)


ZERO = Coefficient(0)
ONE = Coefficient(1)
N = Coefficient.n()
W = Coefficient.w()
