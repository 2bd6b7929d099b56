"""Numeric jets: truncated Taylor polynomials at a base point.

A jet in ``nvars`` variables is a dense vector of Taylor coefficients indexed
by the monomials of (weighted) degree at most ``order``.  Tensor-valued jets
are numpy arrays whose last axis runs over monomials.  Every variable has an
integer weight (1 by default); the ambient construction gives the variable
rho weight 2 so that a rho-derivative costs two orders, matching the loss of
two x-derivatives per rho-order in the Fefferman-Graham recursion.

The curvature stack built here is the "by substitution" oracle: any complete
contraction can be evaluated at the base point from it.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "JetSpace",
    "Jet",
    "JetPolynomial",
    "MetricJet",
    "GeometryStack",
    "InsufficientOrderError",
    "sample_metric_jet",
    "sample_scalar_jet",
    "curvature_stack",
    "trial_rng",
    "evaluate",
    "evaluate_terms",
    "evaluate_with_scale",
    "rescale_test",
    "LinearizedEnv",
    "sample_linearized",
    "evaluate_linearized",
]


class InsufficientOrderError(ValueError):
    """A requested quantity needs more Taylor orders than the jet carries."""


# ---------------------------------------------------------------------------
# monomial bookkeeping


class JetSpace:
    """Monomials of weighted degree <= order, with derivative and product tables."""

    def __init__(self, nvars: int, order: int, weights: Optional[Sequence[int]] = None):
        self.nvars = nvars
        self.order = order
        self.weights = tuple(weights) if weights is not None else (1,) * nvars
        mons = []
        for exps in _bounded_exponents(self.weights, order):
            mons.append(exps)
        mons.sort(key=lambda e: (self._wdeg(e), tuple(-x for x in e)))
        self.monomials: List[Tuple[int, ...]] = mons
        self.index: Dict[Tuple[int, ...], int] = {m: i for i, m in enumerate(mons)}
        self.size = len(mons)
        self.wdeg = np.array([self._wdeg(m) for m in mons], dtype=int)
        # count of monomials with wdeg <= d
        self._upto = np.array([int(np.sum(self.wdeg <= d)) for d in range(order + 1)])
        self._deriv = [self._deriv_table(v) for v in range(nvars)]
        self._mul = None

    def _wdeg(self, e) -> int:
        return sum(a * b for a, b in zip(e, self.weights))

    def upto(self, d: int) -> int:
        if d < 0:
            return 0
        return int(self._upto[min(d, self.order)])

    def _deriv_table(self, v: int):
        src, dst, fac = [], [], []
        for i, m in enumerate(self.monomials):
            if m[v] == 0:
                continue
            lower = m[:v] + (m[v] - 1,) + m[v + 1:]
            src.append(i)
            dst.append(self.index[lower])
            fac.append(m[v])
        return np.array(src, dtype=int), np.array(dst, dtype=int), np.array(fac, dtype=float)

    def mul_table(self):
        """For each alpha: the betas (sorted by degree) and the positions of alpha+beta."""
        if self._mul is None:
            table = []
            for a, ma in enumerate(self.monomials):
                room = self.order - self.wdeg[a]
                nb = self.upto(room)
                betas = np.arange(nb)
                gammas = np.array(
                    [self.index[tuple(x + y for x, y in zip(ma, self.monomials[b]))] for b in betas],
                    dtype=int,
                )
                table.append((betas, gammas))
            self._mul = table
        return self._mul

    def variable(self, v: int) -> np.ndarray:
        e = [0] * self.nvars
        e[v] = 1
        out = np.zeros(self.size)
        if self._wdeg(e) <= self.order:
            out[self.index[tuple(e)]] = 1.0
        return out


def _bounded_exponents(weights, order):
    if not weights:
        yield ()
        return
    w0 = weights[0]
    for k in range(order // w0 + 1):
        for rest in _bounded_exponents(weights[1:], order - k * w0):
            yield (k,) + rest


@lru_cache(maxsize=64)
def get_space(nvars: int, order: int, weights: Optional[Tuple[int, ...]] = None) -> JetSpace:
    return JetSpace(nvars, order, weights)


# ---------------------------------------------------------------------------
# tensor-valued jets


class Jet:
    """Tensor-valued jet: ``data`` has shape tensor_shape + (m,).

    ``valid`` is the weighted order through which the coefficients are exact;
    only the m monomials of degree <= valid are stored.
    """

    __slots__ = ("space", "data", "valid")

    def __init__(self, space: JetSpace, data: np.ndarray, valid: Optional[int] = None):
        self.space = space
        self.valid = space.order if valid is None else min(valid, space.order)
        keep = space.upto(self.valid)
        if data.shape[-1] > keep:
            data = data[..., :keep]
        elif data.shape[-1] < keep:
            pad = np.zeros(data.shape[:-1] + (keep - data.shape[-1],))
            data = np.concatenate([data, pad], axis=-1)
        self.data = data

    @property
    def shape(self):
        return self.data.shape[:-1]

    def value(self) -> np.ndarray:
        if self.valid < 0:
            raise InsufficientOrderError("jet has no valid coefficients left")
        return self.data[..., 0]

    def coefficient(self, exps: Tuple[int, ...]) -> np.ndarray:
        return self.data[..., self.space.index[tuple(exps)]]

    def __add__(self, other: "Jet") -> "Jet":
        if not isinstance(other, Jet):
            d = self.data.copy()
            d[..., 0] += other
            return Jet(self.space, d, self.valid)
        k = min(self.data.shape[-1], other.data.shape[-1])
        return Jet(self.space, self.data[..., :k] + other.data[..., :k], min(self.valid, other.valid))

    __radd__ = __add__

    def __sub__(self, other: "Jet") -> "Jet":
        if not isinstance(other, Jet):
            return self + (-other)
        k = min(self.data.shape[-1], other.data.shape[-1])
        return Jet(self.space, self.data[..., :k] - other.data[..., :k], min(self.valid, other.valid))

    def __neg__(self) -> "Jet":
        return Jet(self.space, -self.data, self.valid)

    def scale(self, c: float) -> "Jet":
        return Jet(self.space, self.data * c, self.valid)

    def __mul__(self, other):
        if isinstance(other, Jet):
            if self.shape == () or other.shape == ():
                return _scalar_product(self, other)
            raise TypeError("use jeinsum for tensor products")
        return self.scale(other)

    __rmul__ = __mul__

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.space, self.data[key + (Ellipsis,)] if Ellipsis not in key else self.data[key], self.valid)

    def transpose(self, *axes) -> "Jet":
        return Jet(self.space, np.transpose(self.data, tuple(axes) + (len(axes),)), self.valid)

    def diff(self, v: int) -> "Jet":
        src, dst, fac = self.space._deriv[v]
        valid = self.valid - self.space.weights[v]
        keep = self.space.upto(valid)
        sel = dst < keep
        out = np.zeros(self.data.shape[:-1] + (keep,))
        out[..., dst[sel]] = self.data[..., src[sel]] * fac[sel]
        return Jet(self.space, out, valid)

    def restrict_valid(self, valid: int) -> "Jet":
        return Jet(self.space, self.data, valid)


JetPolynomial = Jet  # scalar jets are jets with empty tensor shape


def zeros(space: JetSpace, shape=(), valid=None) -> Jet:
    keep = space.upto(space.order if valid is None else valid)
    return Jet(space, np.zeros(tuple(shape) + (keep,)), valid)


def constant(space: JetSpace, value, valid=None) -> Jet:
    value = np.asarray(value, dtype=float)
    d = np.zeros(value.shape + (space.upto(space.order if valid is None else valid),))
    d[..., 0] = value
    return Jet(space, d, valid)


def jeinsum(spec: str, a: Jet, b: Jet) -> Jet:
    """Einstein summation over tensor axes combined with the truncated jet product.

    The letters Y and Z are reserved for the monomial axes.

    Monomials of ``a`` are processed one degree at a time: the tensor
    contraction is done for every (alpha, beta) pair of that degree in one
    einsum call and the result is scattered onto alpha + beta with a sparse
    0/1 matrix.
    """
    space = a.space
    valid = min(a.valid, b.valid)
    ins, out = spec.split("->")
    sa, sb = ins.split(",")
    espec = f"{sa}Z,{sb}Y->{out}ZY"
    mout = space.upto(valid)
    result = None
    for d in range(valid + 1):
        lo, hi = space.upto(d - 1), space.upto(d)
        ca = a.data[..., lo:hi]
        if not np.any(ca):
            continue
        nb = space.upto(valid - d)
        part = np.einsum(espec, ca, b.data[..., :nb], optimize=True)
        tshape = part.shape[:-2]
        scatter = _scatter_matrix(space, d, valid)
        flat = part.reshape((-1, (hi - lo) * nb))
        contrib = (scatter @ flat.T).T
        if result is None:
            result = np.zeros(tshape + (mout,))
        result += contrib.reshape(tshape + (mout,))
    if result is None:
        shape = np.einsum(f"{sa},{sb}->{out}", np.zeros(a.shape), np.zeros(b.shape)).shape
        result = np.zeros(shape + (mout,))
    return Jet(space, result, valid)


_SCATTER: Dict[Tuple[int, int, int], object] = {}


def _scatter_matrix(space: JetSpace, d: int, valid: int):
    key = (id(space), d, valid)
    mat = _SCATTER.get(key)
    if mat is None:
        from scipy.sparse import csr_matrix

        lo, hi = space.upto(d - 1), space.upto(d)
        nb = space.upto(valid - d)
        table = space.mul_table()
        rows, cols = [], []
        for i, alpha in enumerate(range(lo, hi)):
            gammas = table[alpha][1][:nb]
            rows.extend(gammas.tolist())
            cols.extend(range(i * nb, (i + 1) * nb))
        mat = csr_matrix((np.ones(len(rows)), (rows, cols)),
                         shape=(space.upto(valid), (hi - lo) * nb))
        _SCATTER[key] = mat
    return mat


def _scalar_product(a: Jet, b: Jet) -> Jet:
    if a.shape == ():
        ta = "" ; tb = "".join(chr(97 + i) for i in range(len(b.shape)))
        return jeinsum(f"{ta},{tb}->{tb}", a, b)
    ta = "".join(chr(97 + i) for i in range(len(a.shape)))
    return jeinsum(f"{ta},->{ta}", a, b)


def jexp(a: Jet) -> Jet:
    """exp of a scalar jet by the power series of its non-constant part."""
    space = a.space
    a0 = float(a.data[0])
    u = a.data.copy()
    u[0] = 0.0
    uj = Jet(space, u, a.valid)
    total = constant(space, 1.0, a.valid)
    term = constant(space, 1.0, a.valid)
    minw = min(space.weights)
    for k in range(1, a.valid // minw + 1):
        term = (term * uj).scale(1.0 / k)
        total = total + term
    return total.scale(math.exp(a0))


def jinv_matrix(a: Jet) -> Jet:
    """Inverse of a matrix-valued jet by Newton iteration from the base value."""
    space = a.space
    x = constant(space, np.linalg.inv(a.value()), a.valid)
    eye = constant(space, np.eye(a.shape[0]), a.valid)
    reached = 0
    while reached < a.valid:
        ax = jeinsum("ij,jk->ik", a, x)
        x = jeinsum("ij,jk->ik", x, eye.scale(2.0) - ax)
        reached = 2 * reached + 1
    return x


def jreciprocal(a: Jet) -> Jet:
    one = a.shape == ()
    assert one
    space = a.space
    x = constant(space, 1.0 / float(a.data[0]), a.valid)
    reached = 0
    while reached < a.valid:
        x = x * (constant(space, 2.0, a.valid) - a * x)
        reached = 2 * reached + 1
    return x


# ---------------------------------------------------------------------------
# randomness


def trial_rng(seed: int, trial: int = 0, stream: int = 0) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by (seed, trial, stream)."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(trial), int(stream)])
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# metric jets and curvature


@dataclass
class MetricJet:
    n: int
    order: int
    g: Jet  # shape (n, n)

    def __post_init__(self):
        if not np.allclose(self.g.data, np.swapaxes(self.g.data, 0, 1)):
            raise ValueError("metric jet is not symmetric")

    def rescaled(self, phi: Jet) -> "MetricJet":
        """The jet of e^{2 phi} g."""
        e2 = jexp(phi.scale(2.0))
        return MetricJet(self.n, self.order, jeinsum(",ij->ij", e2, self.g))


def sample_metric_jet(seed: int, n: int, order: int, amplitude: float = 0.1,
                      trial: int = 0) -> MetricJet:
    if n < 3:
        raise ValueError("dimension must be at least 3")
    if order < 2:
        raise ValueError("metric jets need order >= 2")
    if not (0 <= amplitude <= 0.2):
        raise ValueError("amplitude must lie in [0, 0.2]")
    space = get_space(n, order)
    rng = trial_rng(seed, trial, 1)
    data = np.zeros((n, n, space.size))
    data[..., 0] = np.eye(n)
    for k in range(1, space.size):
        a = rng.standard_normal((n, n))
        data[..., k] = 0.5 * (a + a.T) * amplitude ** space.wdeg[k]
    return MetricJet(n, order, Jet(space, data))


def sample_scalar_jet(seed: int, n: int, order: int, amplitude: float = 0.5,
                      trial: int = 0, stream: int = 2) -> Jet:
    space = get_space(n, order)
    rng = trial_rng(seed, trial, stream)
    scale = np.array([amplitude ** max(d - 1, 0) for d in space.wdeg])
    return Jet(space, rng.standard_normal(space.size) * scale)


def christoffel(g: Jet, ginv: Jet, dvars: Sequence[int]) -> Jet:
    """Gamma^a_{bc} over the coordinate directions ``dvars`` (len == g.shape[0])."""
    dg = _stack([g.diff(v) for v in dvars])  # dg[c, a, b] = d_c g_ab
    # low[d, b, c] = 1/2 (d_b g_dc + d_c g_db - d_d g_bc)
    low = Jet(g.space,
              0.5 * (np.transpose(dg.data, (1, 0, 2, 3)) + np.transpose(dg.data, (1, 2, 0, 3))
                     - dg.data),
              dg.valid)
    return jeinsum("ad,dbc->abc", ginv, low)


def _stack(jets: Sequence[Jet]) -> Jet:
    valid = min(j.valid for j in jets)
    return Jet(jets[0].space, np.stack([j.data for j in jets]), valid)


def riemann_from_gamma(g: Jet, gam: Jet, dvars: Sequence[int]) -> Jet:
    """All-lower curvature with [nabla_i, nabla_j] X_l = R_{ijkl} X^k."""
    dgam = _stack([gam.diff(v) for v in dvars])  # dgam[c, a, d, b] = d_c Gamma^a_db
    t1 = np.transpose(dgam.data, (1, 3, 0, 2, 4))  # [a,b,c,d] = d_c Gamma^a_{db}
    # R^a_{bcd} = d_c G^a_db - d_d G^a_cb + G^a_ce G^e_db - G^a_de G^e_cb
    gg = jeinsum("ace,edb->abcd", gam, gam)
    lin = Jet(g.space, t1 - np.swapaxes(t1, 2, 3), dgam.valid)
    quad = Jet(g.space, gg.data - np.swapaxes(gg.data, 2, 3), gg.valid)
    rup = lin + quad
    rstd = jeinsum("ae,ebcd->abcd", g, rup)
    return -rstd


def kulkarni(p: Jet, g: Jet) -> Jet:
    """(P o g)_{ijkl} = P_jk g_il + P_il g_jk - P_ik g_jl - P_jl g_ik."""
    a = jeinsum("jk,il->ijkl", p, g)
    b = jeinsum("il,jk->ijkl", p, g)
    c = jeinsum("ik,jl->ijkl", p, g)
    d = jeinsum("jl,ik->ijkl", p, g)
    return a + b - c - d


class GeometryStack:
    """Curvature tensors of a metric jet and their covariant derivatives, as jets.

    All tensors are stored with lower indices.  ``dvars`` lists the jet
    variables that are coordinate directions (extra variables, such as rho in
    the ambient construction, are carried along as parameters).
    """

    def __init__(self, g: Jet, dvars: Optional[Sequence[int]] = None, n: Optional[int] = None):
        self.g = g
        self.n = g.shape[0] if n is None else n
        self.dvars = list(range(self.n)) if dvars is None else list(dvars)
        self.space = g.space
        self.ginv = jinv_matrix(g)
        self.gamma = christoffel(g, self.ginv, self.dvars)
        self._cache: Dict[Tuple[str, int], Jet] = {}
        self._scalars: Dict[Tuple[str, int], Jet] = {}
        self._scalar_base: Dict[str, Jet] = {}

    # base tensors -----------------------------------------------------
    @property
    def riemann(self) -> Jet:
        return self.nabla("R", 0)

    @property
    def ricci(self) -> Jet:
        return self.nabla("Ric", 0)

    @property
    def scalar(self) -> Jet:
        return self.nabla("S", 0)

    @property
    def schouten(self) -> Jet:
        return self.nabla("P", 0)

    @property
    def weyl(self) -> Jet:
        return self.nabla("W", 0)

    @property
    def cotton(self) -> Jet:
        if ("C", 0) not in self._cache:
            dp = self.nabla("P", 1)  # dp[i, j, k] = nabla_i P_jk
            c = np.transpose(dp.data, (2, 0, 1, 3)) - np.transpose(dp.data, (2, 1, 0, 3))
            self._cache[("C", 0)] = Jet(self.space, c, dp.valid)
        return self._cache[("C", 0)]

    @property
    def bach(self) -> Jet:
        if ("B", 0) not in self._cache:
            dc = self.covariant(self.cotton)  # dc[m, i, j, k]
            div = jeinsum("mk,mijk->ij", self.ginv, dc)
            pw = jeinsum("ka,lb->klab", self.ginv, self.ginv)
            pup = jeinsum("klab,ab->kl", pw, self.schouten)
            term = jeinsum("kl,kijl->ij", pup, self.weyl)
            self._cache[("B", 0)] = div - term
        return self._cache[("B", 0)]

    def _base(self, name: str) -> Jet:
        n = self.n
        if name == "R":
            return riemann_from_gamma(self.g, self.gamma, self.dvars)
        if name == "Ric":
            return jeinsum("il,ijkl->jk", self.ginv, self.nabla("R", 0))
        if name == "S":
            return jeinsum("jk,jk->", self.ginv, self.nabla("Ric", 0))
        if name == "P":
            s = self.nabla("S", 0)
            gs = jeinsum(",ij->ij", s, self.g)
            return (self.nabla("Ric", 0) - gs.scale(1.0 / (2 * (n - 1)))).scale(1.0 / (n - 2))
        if name == "W":
            return self.nabla("R", 0) - kulkarni(self.nabla("P", 0), self.g)
        if name == "J":
            return self.nabla("S", 0).scale(1.0 / (2 * (n - 1)))
        raise KeyError(name)

    def covariant(self, t: Jet) -> Jet:
        """nabla T with the new index first: (nabla T)[a, b1..bk] = nabla_a T_{b1..bk}."""
        rank = len(t.shape)
        d = _stack([t.diff(v) for v in self.dvars])
        out = d
        letters = "bcdefghijklmnopqrstuvwxyz"
        idx = letters[:rank]
        for pos in range(rank):
            tin = idx[:pos] + "A" + idx[pos + 1:]
            corr = jeinsum(f"Aa{idx[pos]},{tin}->a{idx}", self.gamma, t)
            out = out - corr
        return out

    def nabla(self, name: str, m: int) -> Jet:
        key = (name, m)
        if key not in self._cache:
            if m == 0:
                self._cache[key] = self._base(name)
            else:
                self._cache[key] = self.covariant(self.nabla(name, m - 1))
        return self._cache[key]

    def set_scalar(self, name: str, jet: Jet) -> None:
        self._scalar_base[name] = jet
        for k in [k for k in self._scalars if k[0] == name]:
            del self._scalars[k]

    def scalar_nabla(self, name: str, p: int) -> Jet:
        key = (name, p)
        if key not in self._scalars:
            if p == 0:
                self._scalars[key] = self._scalar_base[name]
            else:
                self._scalars[key] = self.covariant(self.scalar_nabla(name, p - 1))
        return self._scalars[key]

    def sym_schouten(self, p: int) -> Jet:
        """Full symmetrization of nabla^p P over its p + 2 slots."""
        key = ("SP", p)
        if key not in self._cache:
            t = self.nabla("P", p)
            rank = p + 2
            acc = np.zeros_like(t.data)
            perms = list(itertools.permutations(range(rank)))
            for perm in perms:
                acc += np.transpose(t.data, perm + (rank,))
            self._cache[key] = Jet(self.space, acc / len(perms), t.valid)
        return self._cache[key]


def curvature_stack(mj: MetricJet) -> GeometryStack:
    if mj.order < 2:
        raise InsufficientOrderError("curvature needs metric order >= 2")
    return GeometryStack(mj.g)


# ---------------------------------------------------------------------------
# evaluation of complete contractions at the base point


_SCALAR_NAMES = ("f", "phi", "ups", "Y")


def _contract(values: Sequence[np.ndarray], labels: Sequence[Sequence[str]],
              ginv0: np.ndarray) -> np.ndarray:
    """Contract lower-index arrays along repeated labels through ginv0."""
    ids: Dict[Tuple[int, int], int] = {}
    where: Dict[str, List[Tuple[int, int]]] = {}
    for i, labs in enumerate(labels):
        for j, x in enumerate(labs):
            where.setdefault(x, []).append((i, j))
    nxt = 0
    extra = []
    free = []
    for x in sorted(where):
        locs = where[x]
        if len(locs) == 1:
            ids[locs[0]] = nxt
            free.append(nxt)
            nxt += 1
        else:
            ids[locs[0]] = nxt
            ids[locs[1]] = nxt + 1
            extra.append([nxt, nxt + 1])
            nxt += 2
    args: List = []
    for i, (v, labs) in enumerate(zip(values, labels)):
        args.append(v)
        args.append([ids[(i, j)] for j in range(len(labs))])
    for pair in extra:
        args.append(ginv0)
        args.append(pair)
    args.append(free)
    if len(values) + len(extra) == 1:
        return np.einsum(*args)
    return np.einsum(*args, optimize="greedy")


def factor_value(stack: "GeometryStack", head: str, m: int) -> np.ndarray:
    """Base-point value of one factor kind (lower indices)."""
    try:
        if head in ("R", "W", "Ric", "S"):
            return stack.nabla(head, m).value()
        if head == "SP":
            return stack.sym_schouten(m).value()
        if head in ("g", "ginv"):
            return stack.g.value()
        if head in _SCALAR_NAMES:
            if head not in stack._scalar_base:
                raise ValueError(f"no jet supplied for the scalar {head!r}")
            return stack.scalar_nabla(head, m).value()
    except InsufficientOrderError as exc:
        raise InsufficientOrderError(f"{head} with {m} derivatives: {exc}") from None
    raise ValueError(f"factor {head!r} cannot be evaluated on a metric jet")


def _bind_scalars(stack: "GeometryStack", f_jet: Optional[Jet], aux_jets: Optional[Dict[str, Jet]]):
    given = dict(aux_jets or {})
    if f_jet is not None:
        given["f"] = f_jet
    for name, jet in given.items():
        if stack._scalar_base.get(name) is not jet:
            stack.set_scalar(name, jet)


def evaluate_terms(L, stack: "GeometryStack", f_jet: Optional[Jet] = None,
                   aux_jets: Optional[Dict[str, Jet]] = None,
                   n_value: Optional[int] = None, w_value=0) -> List[np.ndarray]:
    """Value of each term (coefficient included); free labels give array axes in sorted order."""
    n_value = stack.n if n_value is None else n_value
    _bind_scalars(stack, f_jet, aux_jets)
    ginv0 = stack.ginv.value()
    out = []
    for t in L:
        c = float(t.coeff.evaluate(n_value, w_value))
        vals = [factor_value(stack, f.head, f.nderiv) for f in t.factors]
        out.append(c * _contract(vals, t.labels, ginv0))
    return out


def evaluate(L, stack: "GeometryStack", f_jet: Optional[Jet] = None,
             aux_jets: Optional[Dict[str, Jet]] = None,
             n_value: Optional[int] = None, w_value=0):
    """Value of the linear combination at the base point."""
    vals = evaluate_terms(L, stack, f_jet, aux_jets, n_value, w_value)
    if not vals:
        return 0.0
    total = vals[0]
    for v in vals[1:]:
        total = total + v
    return total


def evaluate_with_scale(L, stack, f_jet=None, aux_jets=None, n_value=None, w_value=0):
    """(value, sum of absolute term values); the second number sets relative tolerances."""
    vals = evaluate_terms(L, stack, f_jet, aux_jets, n_value, w_value)
    total = sum(vals) if vals else 0.0
    scale = sum(float(np.sum(np.abs(v))) for v in vals)
    return total, scale


def rescale_test(L, bidegree, metric: MetricJet, f_jet: Jet, phi_jet: Jet,
                 aux_jets: Optional[Dict[str, Jet]] = None,
                 n_value: Optional[int] = None, w_value=0) -> float:
    """|L_{O^2 g}(O^a f) - O^b L_g(f)| / scale at the base point, O = e^phi.

    ``bidegree`` is a pair (a, b) of Coefficients (or numbers) evaluated at
    (n_value, w_value).  The scale is the larger of the two sides' sums of
    absolute term values.
    """
    from .coefficients import Coefficient
    n_value = metric.n if n_value is None else n_value
    a = float(Coefficient.of(bidegree[0]).evaluate(n_value, w_value))
    b = float(Coefficient.of(bidegree[1]).evaluate(n_value, w_value))
    base = GeometryStack(metric.g)
    lhs0, s0 = evaluate_with_scale(L, base, f_jet, aux_jets, n_value, w_value)
    resc = GeometryStack(metric.rescaled(phi_jet).g)
    f2 = jeinsum(",->", jexp(phi_jet.scale(a)), f_jet)
    lhs1, s1 = evaluate_with_scale(L, resc, f2, aux_jets, n_value, w_value)
    omega_b = math.exp(b * float(phi_jet.data[0]))
    scale = max(s1, omega_b * s0, 1e-300)
    return float(np.max(np.abs(lhs1 - omega_b * lhs0))) / scale


# ---------------------------------------------------------------------------
# linearized environment


@dataclass
class LinearizedEnv:
    """Values for linearized curvature LR(m), symmetric tensors T(p) and the vector U."""

    n: int
    lr: Dict[int, np.ndarray]
    t: Dict[int, np.ndarray]
    u: np.ndarray

    def value(self, head: str, m: int) -> np.ndarray:
        if head == "LR":
            return self.lr[m]
        if head == "T":
            return self.t[m]
        if head == "U":
            return self.u
        if head in ("g", "ginv"):
            return np.eye(self.n)
        raise ValueError(f"factor {head!r} has no linearized value")


def _random_symmetric(rng: np.random.Generator, n: int, p: int) -> np.ndarray:
    a = rng.standard_normal((n,) * p) if p else np.array(rng.standard_normal())
    if p < 2:
        return a
    acc = np.zeros_like(a)
    perms = list(itertools.permutations(range(p)))
    for perm in perms:
        acc += np.transpose(a, perm)
    return acc / len(perms)


def linearized_curvature(hk: np.ndarray) -> np.ndarray:
    """LR(m) from H = d^{m+2} h (axes: m+2 symmetric derivative axes, then a, b).

    R_{ijkl} = 1/2 (h_{jl,ik} + h_{ik,jl} - h_{il,jk} - h_{jk,il}), differentiated m times.
    """
    rank = hk.ndim
    m = rank - 4
    d = list(range(m))
    i, j, k, l = m, m + 1, m + 2, m + 3

    def piece(x, y, a, b):
        # axes of hk: derivs (d..., x, y), tensor (a, b) -> output order d, i, j, k, l
        src = d + [x, y, a, b]
        return np.transpose(hk, [src.index(ax) for ax in range(rank)])

    return 0.5 * (piece(i, k, j, l) + piece(j, l, i, k) - piece(j, k, i, l) - piece(i, l, j, k))


def sample_linearized(seed: int, n: int, orders: Dict[str, Sequence[int]], trial: int = 0,
                      h_scale: float = 1.0) -> LinearizedEnv:
    """Random linearized values.

    ``orders`` maps "LR" and "T" to the derivative counts needed.  LR values
    come from one random symmetric 2-tensor field h, so they satisfy every
    linear curvature symmetry by construction.
    """
    rng = trial_rng(seed, trial, 7)
    lr = {}
    for m in sorted(set(orders.get("LR", ()))):
        k = m + 2
        # symmetric in the k derivative axes and in (a, b)
        raw = rng.standard_normal((n,) * (k + 2)) * h_scale
        acc = np.zeros_like(raw)
        perms = list(itertools.permutations(range(k)))
        for perm in perms:
            for ab in ((k, k + 1), (k + 1, k)):
                acc += np.transpose(raw, perm + ab)
        lr[m] = linearized_curvature(acc / (2 * len(perms)))
    t = {p: _random_symmetric(rng, n, p) for p in sorted(set(orders.get("T", ())))}
    u = rng.standard_normal(n)
    return LinearizedEnv(n, lr, t, u)


def needed_orders(L) -> Dict[str, List[int]]:
    out: Dict[str, set] = {}
    for t in L:
        for f in t.factors:
            out.setdefault(f.head, set()).add(f.nderiv)
    return {k: sorted(v) for k, v in out.items()}


def evaluate_linearized(Llin, env: LinearizedEnv):
    eye = np.eye(env.n)
    total = 0.0
    scale = 0.0
    for t in Llin:
        c = float(t.coeff.evaluate(env.n, 0))
        vals = [env.value(f.head, f.nderiv) for f in t.factors]
        total = total + c * _contract(vals, t.labels, eye)
        # a priori magnitude: the same contraction of absolute values
        scale += abs(c) * float(np.sum(_contract([np.abs(v) for v in vals], t.labels, eye)))
    return total, scale
