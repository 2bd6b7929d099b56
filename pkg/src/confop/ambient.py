"""Numeric Fefferman-Graham ambient metric and harmonic extension of densities.

Two jet spaces are used.

* The solve space has variables (x_1..x_n, rho) with rho of weight 2.  The
  tangential metric g_ij(x, rho) and the extension u(x, rho) are computed here
  order by order in rho; t never appears because both are homogeneous in t
  with known degree.
* The evaluation space has variables (s, x_1..x_n, rho), s = t - 1, all of
  weight 1.  The full (n+2)x(n+2) ambient metric is assembled there with its
  exact t-dependence, so ambient Christoffel symbols, curvature and covariant
  derivatives come out of the ordinary curvature stack and homogeneity can be
  checked rather than assumed.

Index 0 is the t direction, 1..n the x directions, n+1 the rho direction.
Taylor coefficients of rho-order above what was solved are unknown.  They are
filled with zeros, and ``ambient_evaluate`` probes whether a value depends on
them by refilling them at random.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .expr_core import LinearCombination, parse
from .jets import (
    GeometryStack,
    InsufficientOrderError,
    Jet,
    MetricJet,
    _contract,
    constant,
    curvature_stack,
    get_space,
    jeinsum,
    jinv_matrix,
    sample_metric_jet,
    sample_scalar_jet,
    trial_rng,
    jexp,
)

__all__ = [
    "AmbientJet",
    "DensityJet",
    "AmbientOrderCapError",
    "SingularOrderError",
    "ObstructionError",
    "AmbientValidityError",
    "fg_expand",
    "fg_residual",
    "ambient_ricci_residual",
    "ambient_curvature_check",
    "harmonic_extend",
    "harmonic_residual",
    "ambient_evaluate",
    "gjms_evaluate",
    "invariance_test_ambient",
    "L1_SPEC",
    "L1_INTRINSIC",
    "LSHARP_SPEC",
    "LSHARP_INTRINSIC",
    "LSHARP_OBSERVED",
    "worked_examples",
    "gjms_ratios",
]

T0 = "T0"
INF = "INF"

L1_SPEC = "D{a}Rt{i,j,k,l} * Rt{i,j,k,l} * D{a}ut{} + Rt{i,j,k,l} * D{a}Rt{i,j,k,l} * D{a}ut{}"
L1_INTRINSIC = ("D{a}W{i,j,k,l} * W{i,j,k,l} * D{a}f + W{i,j,k,l} * D{a}W{i,j,k,l} * D{a}f"
                " + (4/(n-2)) * W{i,j,k,l} * W{i,j,k,l} * D{a,a}f")
LSHARP_SPEC = "D{s,t}ut{} * Rt{s,j,k,l} * Rt{t,j,k,l}"
LSHARP_INTRINSIC = ("W{i,j,k,l} * W{i,j,k,m} * D{l,m}f"
                    " - (2/(n-3)) * D{d}W{i,j,k,d} * W{i,j,k,l} * D{l}f"
                    " + (1/(n-2)) * W{i,j,k,l} * W{i,j,k,l} * D{a,a}f")
# what the L# contraction evaluates to; differs from the printed form in two signs
LSHARP_OBSERVED = ("W{i,j,k,l} * W{i,j,k,m} * D{l,m}f"
                   " + (2/(n-3)) * D{d}W{i,j,k,d} * W{i,j,k,l} * D{l}f"
                   " - (1/(n-2)) * W{i,j,k,l} * W{i,j,k,l} * D{a,a}f")


class AmbientOrderCapError(ValueError):
    """Even n: the ambient metric is only determined below rho-order n/2."""

    def __init__(self, n: int, rho_order: int):
        self.n = n
        self.rho_order = rho_order
        super().__init__(f"n = {n} is even: rho_order must be < n/2 = {n // 2}, got {rho_order}")


class SingularOrderError(ValueError):
    """The linear system for a rho-Taylor coefficient is singular."""

    def __init__(self, order: int, what: str = "metric"):
        self.order = order
        super().__init__(f"singular {what} system at rho-order {order}")


class ObstructionError(ValueError):
    """Harmonic extension requested past the obstruction order k = w + n/2."""

    def __init__(self, k: int, rho_order: int):
        self.k = k
        self.rho_order = rho_order
        super().__init__(
            f"w + n/2 = {k}: the harmonic extension is determined only through rho-order "
            f"{k - 1}, requested {rho_order}")


class AmbientValidityError(ValueError):
    """A value depends on rho-Taylor coefficients that were not determined."""

    def __init__(self, J: int, what: str):
        self.J = J
        self.what = what
        super().__init__(f"value depends on the undetermined rho^{J} coefficient of {what}")


# ---------------------------------------------------------------------------
# the solve space (x, rho)


def _solve_space(n: int, order: int):
    return get_space(n + 1, order, (1,) * n + (2,))


@lru_cache(maxsize=None)
def _rho_maps(n: int, order: int, k: int, valid: int):
    """Positions of x^a rho^k in the solve space and of x^a in the x space."""
    ws = _solve_space(n, order)
    xs = get_space(n, max(valid - 2 * k, 0))
    src, dst = [], []
    if valid - 2 * k >= 0:
        for i, a in enumerate(xs.monomials):
            src.append(ws.index[tuple(a) + (k,)])
            dst.append(i)
    return xs, np.array(src, dtype=int), np.array(dst, dtype=int)


def _rho_coeff(J: Jet, n: int, k: int) -> Jet:
    """The coefficient of rho^k as a jet in x alone."""
    xs, src, dst = _rho_maps(n, J.space.order, k, J.valid)
    out = np.zeros(J.shape + (xs.size,))
    if len(src):
        out[..., dst] = J.data[..., src]
    return Jet(xs, out, J.valid - 2 * k)


def _embed_rho(X: Jet, n: int, k: int, order: int) -> Jet:
    """rho^k X as a jet in the solve space of the given order."""
    ws = _solve_space(n, order)
    out = np.zeros(X.shape + (ws.size,))
    for i, a in enumerate(X.space.monomials[:X.data.shape[-1]]):
        key = tuple(a) + (k,)
        if key in ws.index:
            out[..., ws.index[key]] = X.data[..., i]
    return Jet(ws, out)


def _mul_rho(J: Jet, n: int) -> Jet:
    """rho * J, exact: the valid order goes up by the weight of rho."""
    ws = J.space
    out = np.zeros(J.shape + (ws.upto(J.valid + 2),))
    for i, m in enumerate(ws.monomials[:J.data.shape[-1]]):
        key = m[:n] + (m[n] + 1,)
        j = ws.index.get(key)
        if j is not None and j < out.shape[-1]:
            out[..., j] = J.data[..., i]
    return Jet(ws, out, J.valid + 2)


def _from_x(J: Jet, n: int, order: int) -> Jet:
    return _embed_rho(J, n, 0, order).restrict_valid(J.valid)


# ---------------------------------------------------------------------------
# ambient metric


@dataclass
class AmbientJet:
    """Tangential FG metric g_ij(x, rho) with its rho-validity.

    ``g_rho`` lives in the solve space; its rho^j coefficients are solved for
    j <= rho_order and zero above.  ``x_order`` is the total derivative order
    available in the evaluation space.
    """

    n: int
    rho_order: int
    x_order: int
    g_rho: Jet
    base: MetricJet
    _cache: Dict = field(default_factory=dict, repr=False)

    @property
    def g_tilde(self) -> Jet:
        """(n+2)x(n+2) ambient metric in the evaluation variables (s, x, rho)."""
        return self.evaluation_metric(self.x_order)

    def coefficient(self, j: int) -> Jet:
        """g_ij^{(j)}(x): the rho^j Taylor coefficient of g_ij(x, rho)."""
        return _rho_coeff(self.g_rho, self.n, j)

    def evaluation_metric(self, order: int, fill: Optional[Dict[int, np.random.Generator]] = None) -> Jet:
        key = (order, None if fill is None else tuple(sorted(fill)))
        if fill is None and key in self._cache:
            return self._cache[key]
        n = self.n
        es = get_space(n + 2, order)
        ws = self.g_rho.space
        data = np.zeros((n + 2, n + 2, es.size))
        drawn: Dict = {}
        for i, m in enumerate(es.monomials):
            a, alpha, j = m[0], m[1:n + 1], m[n + 1]
            if a > 2:
                continue
            tf = math.comb(2, a)
            if j <= self.rho_order:
                idx = ws.index.get(tuple(alpha) + (j,))
                if idx is None or idx >= self.g_rho.data.shape[-1]:
                    raise InsufficientOrderError(
                        f"ambient metric lacks x-order {sum(alpha)} at rho^{j}")
                data[1:n + 1, 1:n + 1, i] = tf * self.g_rho.data[..., idx]
            elif fill is not None and j in fill:
                data[1:n + 1, 1:n + 1, i] = tf * _fill_value(drawn, fill[j], (alpha, j), (n, n), True)
        # 2 t dt drho + 2 rho dt^2, exact
        data[0, n + 1, es.index[(0,) * (n + 2)]] = 1.0
        data[n + 1, 0, es.index[(0,) * (n + 2)]] = 1.0
        if order >= 1:
            e = [0] * (n + 2)
            e[0] = 1
            data[0, n + 1, es.index[tuple(e)]] = 1.0
            data[n + 1, 0, es.index[tuple(e)]] = 1.0
            e = [0] * (n + 2)
            e[n + 1] = 1
            data[0, 0, es.index[tuple(e)]] = 2.0
        out = Jet(es, data)
        if fill is None:
            self._cache[key] = out
        return out

    def stack(self, order: int, fill=None) -> GeometryStack:
        key = ("stack", order)
        if fill is None and key in self._cache:
            return self._cache[key]
        st = GeometryStack(self.evaluation_metric(order, fill), dvars=range(self.n + 2))
        if fill is None:
            self._cache[key] = st
        return st


def fg_expand(g: MetricJet, rho_order: int) -> AmbientJet:
    """Solve Ric(g~) = O(rho^rho_order) for g_ij(x, rho) in special form.

    The tangential equation

        rho g'' - rho g^{kl} g'_ik g'_jl + 1/2 rho tr(g') g' + (1 - n/2) g'
            - 1/2 tr(g') g + Ric(g_rho) = 0

    is solved one rho-coefficient at a time.  At order j the unknown g_j
    enters only through L_j(X) = j((j - n/2) X - 1/2 tr(X) g_0), whose
    inverse is explicit: tr X = tr Y / (j (j - n)).
    """
    n = g.n
    if rho_order < 0:
        raise ValueError("rho_order must be nonnegative")
    if n % 2 == 0 and rho_order >= n // 2:
        raise AmbientOrderCapError(n, rho_order)
    order = g.order
    if order - rho_order < 2:
        raise InsufficientOrderError(
            f"metric jet of order {order} is too short for rho_order {rho_order}")
    gr = _from_x(g.g, n, order)
    g0 = g.g
    g0inv = jinv_matrix(g0)
    for j in range(1, rho_order + 1):
        if 2 * j == n or j == n:
            raise SingularOrderError(j)
        Y = _rho_coeff(_fg_known(gr, n), n, j - 1)
        g0j = Jet(Y.space, g0.data[..., :Y.space.size], Y.valid) if Y.valid >= 0 else None
        if g0j is None:
            raise InsufficientOrderError(f"no x-order left at rho-order {j}")
        g0invj = Jet(Y.space, _restrict(g0inv, Y.space), Y.valid)
        rhs = -Y
        tr = jeinsum("kl,kl->", g0invj, rhs).scale(1.0 / (j * (j - n)))
        X = (rhs.scale(1.0 / j) + jeinsum(",ij->ij", tr, g0j).scale(0.5)).scale(1.0 / (j - n / 2))
        gr = gr + _embed_rho(X, n, j, order).restrict_valid(gr.valid)
    return AmbientJet(n=n, rho_order=rho_order, x_order=order - rho_order, g_rho=gr, base=g)


def _restrict(J: Jet, space) -> np.ndarray:
    """Re-index an x-jet onto a (smaller) x space of the same variables."""
    src = J.space
    out = np.zeros(J.shape + (space.size,))
    for i, m in enumerate(space.monomials):
        k = src.index.get(m)
        if k is not None and k < J.data.shape[-1]:
            out[..., i] = J.data[..., k]
    return out


def _fg_known(gr: Jet, n: int, full: bool = False) -> Jet:
    """The FG tangential expression; without ``full`` the rho g'' term is dropped.

    That term has no known part at the order being solved.
    """
    gp = gr.diff(n)
    ginv = jinv_matrix(gr)
    st = GeometryStack(gr, dvars=range(n), n=n)
    ric = st.ricci
    trp = jeinsum("kl,kl->", ginv, gp)
    gpu = jeinsum("kl,lj->kj", ginv, gp)
    quad = jeinsum("ik,kj->ij", gp, gpu).scale(-1.0) + jeinsum(",ij->ij", trp, gp).scale(0.5)
    out = _mul_rho(quad, n) + gp.scale(1 - n / 2) - jeinsum(",ij->ij", trp, gr).scale(0.5) + ric
    if full:
        out = out + _mul_rho(gp.diff(n), n)
    return out


def fg_residual(A: AmbientJet) -> float:
    """Largest relative rho^k coefficient (k < rho_order) of the FG tangential equation."""
    E = _fg_known(A.g_rho, A.n, full=True)
    worst = 0.0
    scale = max(1.0, float(np.max(np.abs(A.base.g.data))))
    for k in range(A.rho_order):
        c = _rho_coeff(E, A.n, k)
        if c.valid < 0:
            break
        worst = max(worst, float(np.max(np.abs(c.data))) / scale)
    return worst


def ambient_ricci_residual(A: AmbientJet, order: Optional[int] = None) -> Dict[str, float]:
    """Max |Ric(g~)| coefficient of rho-degree < rho_order, by component block."""
    n = A.n
    order = min(A.x_order, 4) if order is None else order
    st = A.stack(order)
    ric = st.ricci
    es = st.space
    keep = ric.data.shape[-1]
    rdeg = np.array([m[n + 1] for m in es.monomials[:keep]])
    out = {}
    blocks = {"tangential": (slice(1, n + 1), slice(1, n + 1)),
              "mixed": (slice(0, n + 2), slice(0, 1)),
              "rho": (slice(n + 1, n + 2), slice(0, n + 2))}
    for name, (a, b) in blocks.items():
        lim = A.rho_order if name == "tangential" else A.rho_order - 1
        sel = rdeg < lim
        out[name] = float(np.max(np.abs(ric.data[a, b][..., sel]))) if np.any(sel) else 0.0
    return out


# ---------------------------------------------------------------------------
# identities at (1, x0, 0)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b))) / max(float(np.max(np.abs(b))), float(np.max(np.abs(a))), 1e-12)


def ambient_curvature_check(A: AmbientJet, tol: float = 1e-7) -> Dict[str, Tuple[float, bool]]:
    """Residuals of the ambient identities at (1, x0, 0).

    Every entry compares against the value printed in the literature.  The
    entries ending in ``_observed`` record what the special form actually
    produces with the curvature conventions of this package: -g_ab for
    Gamma~^inf_ab, -C_kij and -B_ij/(n-4) for the two Cotton/Bach components.
    """
    n = A.n
    if A.rho_order < 2:
        raise ValueError("ambient curvature checks need rho_order >= 2")
    st = A.stack(2)
    base = curvature_stack(A.base)
    x = slice(1, n + 1)
    gam = st.gamma.value()
    g0 = A.base.g.value()
    P = base.schouten.value()
    out: Dict[str, Tuple[float, bool]] = {}

    def put(name, a, b):
        r = _rel(a, b)
        out[name] = (r, r < tol)

    put("gamma_abc", gam[x, x, x], base.gamma.value())
    put("gamma_inf", gam[n + 1, x, x], g0)
    put("gamma_inf_observed", gam[n + 1, x, x], -g0)
    put("gamma_0", gam[0, x, x], -P)
    put("drho_g", A.coefficient(1).value(), 2 * P)
    R = st.riemann.value()
    r0 = np.max(np.abs(R[..., 0])) / max(np.max(np.abs(R)), 1e-12)
    out["R_ijk0"] = (float(r0), r0 < tol)
    put("R_ijkl", R[x, x, x, x], base.weyl.value())
    C = base.cotton.value()  # C[k, i, j]
    put("R_ijkinf", R[x, x, x, n + 1], np.transpose(C, (1, 2, 0)))
    put("R_ijkinf_observed", R[x, x, x, n + 1], -np.transpose(C, (1, 2, 0)))
    if n != 4:
        put("R_infijinf", R[n + 1, x, x, n + 1], base.bach.value() / (n - 4))
        put("R_infijinf_observed", R[n + 1, x, x, n + 1], -base.bach.value() / (n - 4))
    return out


# ---------------------------------------------------------------------------
# densities


@dataclass
class DensityJet:
    """Extension u(x, rho) of f with u~(t, x, rho) = t^w u(x, rho)."""

    w: float
    rho_order: int
    u_rho: Jet
    ambient: AmbientJet

    def coefficient(self, j: int) -> Jet:
        return _rho_coeff(self.u_rho, self.ambient.n, j)

    def evaluation_jet(self, order: int, fill: Optional[Dict[int, np.random.Generator]] = None) -> Jet:
        n = self.ambient.n
        es = get_space(n + 2, order)
        ws = self.u_rho.space
        data = np.zeros(es.size)
        drawn: Dict = {}
        for i, m in enumerate(es.monomials):
            a, alpha, j = m[0], m[1:n + 1], m[n + 1]
            tf = _gbinom(self.w, a)
            if j <= self.rho_order:
                idx = ws.index.get(tuple(alpha) + (j,))
                if idx is None or idx >= self.u_rho.data.shape[-1]:
                    raise InsufficientOrderError(f"density lacks x-order {sum(alpha)} at rho^{j}")
                data[i] = tf * self.u_rho.data[idx]
            elif fill is not None and j in fill:
                data[i] = tf * _fill_value(drawn, fill[j], (alpha, j), (), False)
        return Jet(es, data)


def _fill_value(drawn: Dict, rng: np.random.Generator, key, shape, sym: bool):
    """One random coefficient per x-monomial, shared by every power of s."""
    if key not in drawn:
        h = rng.standard_normal(shape)
        drawn[key] = 0.5 * (h + h.T) if sym else h
    return drawn[key]


def _gbinom(w: float, a: int) -> float:
    out = 1.0
    for i in range(a):
        out *= (w - i) / (i + 1)
    return out


def _obstruction_k(n: int, w: float) -> Optional[int]:
    k = w + n / 2
    if abs(k - round(k)) < 1e-12 and round(k) >= 1:
        return int(round(k))
    return None


def _harmonic_known(ur: Jet, gr: Jet, n: int, w: float, full: bool = False) -> Jet:
    """Laplacian of t^w u(x, rho) at t = 1 in the solve space.

    -2 rho u'' + (2w - 2 + n - rho tr g') u' + w/2 tr(g') u + Delta_{g_rho} u
    Without ``full`` the terms that only see the unknown coefficient are dropped.
    """
    gp = gr.diff(n)
    st = GeometryStack(gr, dvars=range(n), n=n)
    ginv = st.ginv
    trp = jeinsum("kl,kl->", ginv, gp)
    up = ur.diff(n)
    d1 = st.covariant(ur)
    d2 = st.covariant(d1)
    lap = jeinsum("ab,ab->", ginv, d2)
    out = _mul_rho(trp * up, n).scale(-1.0) + (trp * ur).scale(w / 2) + lap
    if full:
        out = out + _mul_rho(up.diff(n), n).scale(-2.0) + up.scale(2 * w - 2 + n)
    return out


def harmonic_extend(A: AmbientJet, f_jet: Jet, w_value: float, rho_order: int) -> DensityJet:
    """Solve the ambient Laplace equation for u_1 .. u_rho_order.

    The rho^{j-1} coefficient of the equation reads 2j(w + n/2 - j) u_j + known = 0.
    """
    n = A.n
    k = _obstruction_k(n, w_value)
    if k is not None and rho_order >= k:
        raise ObstructionError(k, rho_order)
    if rho_order > A.rho_order:
        raise InsufficientOrderError(
            f"harmonic extension to rho-order {rho_order} needs the ambient metric to rho-order "
            f"{rho_order}, have {A.rho_order}")
    order = A.g_rho.space.order
    if f_jet.space.order < order:
        raise InsufficientOrderError(f"density jet needs order {order}")
    ur = _from_x(Jet(get_space(n, order), f_jet.data[: get_space(n, order).size]), n, order)
    for j in range(1, rho_order + 1):
        c = 2 * j * (w_value + n / 2 - j)
        if abs(c) < 1e-10:
            raise SingularOrderError(j, "density")
        Y = _rho_coeff(_harmonic_known(ur, A.g_rho, n, w_value), n, j - 1)
        ur = ur + _embed_rho(Y.scale(-1.0 / c), n, j, order).restrict_valid(ur.valid)
    return DensityJet(w=w_value, rho_order=rho_order, u_rho=ur, ambient=A)


def harmonic_residual(u: DensityJet) -> float:
    n = u.ambient.n
    E = _harmonic_known(u.u_rho, u.ambient.g_rho, n, u.w, full=True)
    scale = max(1.0, float(np.max(np.abs(u.u_rho.data))))
    worst = 0.0
    for k in range(u.rho_order):
        c = _rho_coeff(E, n, k)
        if c.valid < 0:
            break
        worst = max(worst, float(np.max(np.abs(c.data))) / scale)
    return worst


# ---------------------------------------------------------------------------
# evaluation of ambient complete contractions


def _needed_order(L: LinearCombination) -> int:
    need = 0
    for t in L:
        for f in t.factors:
            if f.head == "Rt":
                need = max(need, f.nderiv + 2)
            elif f.head == "ut":
                need = max(need, f.nderiv)
            else:
                raise ValueError(f"factor {f.head!r} is not an ambient factor")
    return need


def _ambient_value(L: LinearCombination, A: AmbientJet, u: Optional[DensityJet], n_value, w_value,
                   gfill=None, ufill=None):
    order = max(_needed_order(L), 1)
    if order > A.x_order:
        raise InsufficientOrderError(f"ambient jet carries order {A.x_order}, need {order}")
    st = A.stack(order, gfill)
    if u is not None:
        st.set_scalar("u", u.evaluation_jet(order, ufill))
    n2 = A.n + 2
    fixed = {T0: 0, INF: n2 - 1}
    ginv0 = st.ginv.value()
    total = 0.0
    scale = 0.0
    for t in L:
        vals, labs = [], []
        for f, lab in zip(t.factors, t.labels):
            if f.head == "Rt":
                v = st.nabla("R", f.nderiv).value()
            else:
                if u is None:
                    raise ValueError("ut factor without a density jet")
                v = st.scalar_nabla("u", f.nderiv).value()
            keep = []
            for pos, x in enumerate(lab):
                if x in fixed:
                    v = np.take(v, fixed[x], axis=len(keep))
                else:
                    keep.append(x)
            vals.append(v)
            labs.append(keep)
        c = float(t.coeff.evaluate(n_value, w_value))
        val = c * _contract(vals, labs, ginv0)
        total = total + val
        scale += float(np.sum(np.abs(val)))
    return total, scale


def ambient_evaluate(spec, A: AmbientJet, u: Optional[DensityJet] = None,
                     n_value: Optional[int] = None, w_value=None, probe_seed: int = 0,
                     tol: float = 1e-9, with_scale: bool = False):
    """Value of an ambient contraction (heads Rt, ut) at (1, x0, 0).

    Undetermined rho-coefficients of the metric and of the density are probed
    one order at a time; any influence raises AmbientValidityError(J).
    """
    L = parse(spec) if isinstance(spec, str) else spec
    n_value = A.n if n_value is None else n_value
    if w_value is None:
        w_value = u.w if u is not None else 0
    val, scale = _ambient_value(L, A, u, n_value, w_value)
    order = max(_needed_order(L), 1)
    ref = max(scale, 1e-300)
    for J in range(A.rho_order + 1, order + 1):
        fill = {J: trial_rng(probe_seed, J, 40)}
        v2, _ = _ambient_value(L, A, u, n_value, w_value, gfill=fill)
        if np.max(np.abs(v2 - val)) > tol * max(ref, 1.0):
            raise AmbientValidityError(J, "the ambient metric")
    if u is not None:
        for J in range(u.rho_order + 1, order + 1):
            fill = {J: trial_rng(probe_seed, J, 41)}
            v2, _ = _ambient_value(L, A, u, n_value, w_value, ufill=fill)
            if np.max(np.abs(v2 - val)) > tol * max(ref, 1.0):
                raise AmbientValidityError(J, "the density extension")
    return (val, scale) if with_scale else val


def _laplacian_power_spec(k: int) -> str:
    labs = []
    for i in range(k):
        x = f"q{i}"
        labs += [x, x]
    return "D{" + ",".join(labs) + "}ut{}"


def gjms_evaluate(k: int, g: MetricJet, f_jet: Jet, rho_order: Optional[int] = None) -> float:
    """Ambient Laplacian to the power k of the extension of f at w = k - n/2."""
    n = g.n
    if n % 2 == 0 and k > n // 2:
        raise AmbientOrderCapError(n, k)
    w = k - n / 2
    r = k - 1 if rho_order is None else rho_order
    A = fg_expand(g, max(r, min(k, n // 2 - 1) if n % 2 == 0 else k))
    u = harmonic_extend(A, f_jet, w, r)
    return float(ambient_evaluate(_laplacian_power_spec(k), A, u, n, w))


def invariance_test_ambient(spec, w_value: float, trials: int = 10, n: int = 5, seed: int = 0,
                            rho_order: int = 2, order: Optional[int] = None,
                            phi_constant: bool = False) -> Dict[str, float]:
    """Compare ambient evaluations on g and e^{2 phi} g.

    The value on the rescaled metric must equal e^{b phi(x0)} times the value
    on g, with b = r w - K read off the contraction.
    """
    L = parse(spec) if isinstance(spec, str) else spec
    need = max(_needed_order(L), 1)
    order = need + rho_order if order is None else order
    t = next(iter(L))
    r = sum(1 for f in t.factors if f.head == "ut")
    K = -sum(f.nderiv + (2 if f.head == "Rt" else 0) for f in t.factors)
    b = r * w_value + K
    worst = 0.0
    for trial in range(trials):
        mj = sample_metric_jet(seed, n, order, trial=trial)
        f = sample_scalar_jet(seed, n, order, trial=trial, stream=2)
        if phi_constant:
            phi = constant(f.space, 0.3 + 0.1 * trial)
        else:
            phi = sample_scalar_jet(seed, n, order, amplitude=0.3, trial=trial, stream=3)
        A = fg_expand(mj, rho_order)
        u = harmonic_extend(A, f, w_value, _u_order(n, w_value, rho_order))
        v0, s0 = ambient_evaluate(L, A, u, n, w_value, with_scale=True)
        mj2 = mj.rescaled(phi)
        f2 = jeinsum(",->", jexp(phi.scale(w_value)), f)
        A2 = fg_expand(mj2, rho_order)
        u2 = harmonic_extend(A2, f2, w_value, _u_order(n, w_value, rho_order))
        v1, s1 = ambient_evaluate(L, A2, u2, n, w_value, with_scale=True)
        ob = math.exp(b * float(phi.data[0]))
        worst = max(worst, float(np.max(np.abs(v1 - ob * v0))) / max(s1, ob * s0, 1e-300))
    return {"max_residual": worst, "trials": trials, "b": b}


def _u_order(n: int, w: float, rho_order: int) -> int:
    k = _obstruction_k(n, w)
    return rho_order if k is None else min(rho_order, k - 1)


# ---------------------------------------------------------------------------
# packaged comparisons


def _rel_scalar(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def worked_examples(n: int = 5, trials: int = 10, seed: int = 0, rho_order: int = 2,
                    order: Optional[int] = None) -> Dict[str, float]:
    """Max relative gap between the ambient L1 and L# contractions (w = 0) and
    their intrinsic formulas over random jets."""
    from .jets import evaluate
    order = 2 * rho_order + 1 if order is None else order
    pairs = {
        "L1": (L1_SPEC, parse(L1_INTRINSIC)),
        "Lsharp_printed": (LSHARP_SPEC, parse(LSHARP_INTRINSIC)),
        "Lsharp_observed": (LSHARP_SPEC, parse(LSHARP_OBSERVED)),
    }
    worst = {k: 0.0 for k in pairs}
    for trial in range(trials):
        mj = sample_metric_jet(seed, n, order, trial=trial)
        f = sample_scalar_jet(seed, n, order, trial=trial, stream=2)
        A = fg_expand(mj, rho_order)
        u = harmonic_extend(A, f, 0.0, rho_order)
        st = curvature_stack(mj)
        amb = {}
        for name, (spec, intr) in pairs.items():
            if spec not in amb:
                amb[spec] = float(ambient_evaluate(spec, A, u, n, 0.0))
            b = float(evaluate(intr, st, f, n_value=n, w_value=0))
            worst[name] = max(worst[name], _rel_scalar(amb[spec], b))
    return worst


def gjms_ratios(k: int, n: int, intrinsic: LinearCombination, trials: int = 10,
                seed: int = 0) -> List[float]:
    """Ratios of the ambient Laplacian power to an intrinsic operator at w = k - n/2."""
    from .jets import evaluate
    out = []
    for trial in range(trials):
        mj = sample_metric_jet(seed, n, 2 * k + 2, trial=trial)
        f = sample_scalar_jet(seed, n, 2 * k + 2, trial=trial, stream=2)
        a = gjms_evaluate(k, mj, f)
        b = float(evaluate(intrinsic, curvature_stack(mj), f, n_value=n, w_value=k - n / 2))
        out.append(a / b)
    return out
