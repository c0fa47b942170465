"""Families of metrics, gauge transformations and cohesive structures.

Parameter dependence is declared through free ring parameters.  Identities
that hold "identically in the parameters" are checked by expanding the family
around sample points: a free parameter ``t`` is replaced by ``t0 + t`` where
the new ``t`` is a truncated jet direction.  Every identity is then an exact
statement about jets in ``z, zb`` and the local parameter offsets.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from .cohesive import (
    CohesiveModule,
    Superconnection,
    chern_prime,
    curvature,
    operator_square,
)
from .forms import Form, exterior_derivative
from .gbundle import (
    EndForm,
    HermitianMetric,
    adjoint,
    dcomm,
    derivative_coeffs,
    directional_eval,
    endform_inverse,
    series_eval,
    supercommutator,
    supertrace,
)
from .jetalg import Jet, JetRing, NonInvertibleError, Param, jet_recenter, jet_subs

__all__ = [
    "CheckResult",
    "MetricFamily",
    "GaugeFamily",
    "CohesiveFamily",
    "SecondaryForm",
    "local_ring",
    "localize_endform",
    "theta",
    "dM",
    "param_derivative",
    "bracket",
    "gauge_act",
    "exact_gamma",
    "metric_transgression_suite",
    "moduli_delta_check",
    "secondary_form",
    "path_independence_witness",
    "gauss_legendre",
]


@dataclass
class CheckResult:
    """Outcome of one identity: ``defect`` is the largest coefficient of ``lhs - rhs``."""

    name: str
    ok: bool
    defect: float
    valid_order: int
    note: str = ""
    where: str = ""

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "ok": self.ok,
            "defect": self.defect,
            "valid_order": self.valid_order,
            "note": self.note,
            "where": self.where,
        }


def worst_term(x) -> str:
    """Location of the largest coefficient of a Form or EndForm, or ``""``."""
    from .forms import _mask_name

    ring = x.ring
    best, where = 0.0, ""
    if isinstance(x, Form):
        items = [(None, m, p) for m, p in x.terms.items()]
    else:
        items = [(ij, m, p) for ij, t in x.entries.items() for m, p in t.items()]
    names = [f"z{i+1}" for i in range(ring.n)] + [f"zb{i+1}" for i in range(ring.n)]
    names += [q.name for q in ring.params]
    for ij, m, p in sorted(items, key=lambda it: (it[0] or (0, 0), it[1])):
        for mon, c in sorted(Jet(ring, p, x.valid_order).terms().items()):
            a = abs(c)
            if a > best:
                mono = "*".join(nm if e == 1 else f"{nm}^{e}" for nm, e in zip(names, mon) if e) or "1"
                loc = f"entry ({ij[0]},{ij[1]}), " if ij is not None else ""
                best, where = a, f"{loc}form {_mask_name(ring, m)}, monomial {mono}"
    return where


def _result(name: str, diff, tol: float = 0.0, note: str = "") -> CheckResult:
    defect = diff.max_abs()
    ok = defect <= tol
    return CheckResult(name, ok, defect, diff.valid_order, note, "" if ok else worst_term(diff))


# --------------------------------------------------------------------------
# localization


def local_ring(ring: JetRing, names: Sequence[str], order: int | None = None) -> JetRing:
    """The ring in which the named free parameters become jet directions."""
    params = []
    for p in ring.params:
        if p.name in names:
            if p.laurent_floor != 0:
                raise ValueError(f"cannot localize the Laurent parameter {p.name}")
            params.append(Param(p.name, 0, True))
        else:
            params.append(p)
    return JetRing(ring.n, tuple(params), ring.order if order is None else order, ring.exact)


def _localize_payload(ring, target, p, valid, point):
    mapping = {k: (k, v) for k, v in point.items()}
    return jet_recenter(Jet(ring, p, valid), target, mapping)._p


def localize_form(f: Form, target: JetRing, point: Mapping[str, object]) -> Form:
    v = min(f.valid_order, target.order)
    return Form(target, {m: _localize_payload(f.ring, target, p, v, point) for m, p in f.terms.items()}, v)


def localize_endform(A: EndForm, target: JetRing, point: Mapping[str, object]) -> EndForm:
    v = min(A.valid_order, target.order)
    out = {
        ij: {m: _localize_payload(A.ring, target, p, v, point) for m, p in t.items()}
        for ij, t in A.entries.items()
    }
    return EndForm(A.bundle, target, out, v)


def substitute_endform(A: EndForm, values: Mapping[str, object]) -> EndForm:
    """Evaluate free parameters at scalar values (generators ``dπ`` are kept)."""
    out = {
        ij: {m: jet_subs(Jet(A.ring, p, A.valid_order), values)._p for m, p in t.items()}
        for ij, t in A.entries.items()
    }
    return EndForm(A.bundle, A.ring, out, A.valid_order)


def param_derivative(A: EndForm, name: str) -> EndForm:
    """Coefficient-wise ``∂/∂name`` (no ``dπ`` generator is added)."""
    ring = A.ring
    idx = ring.param_index[name]
    bk = ring.backend
    lowers = ring.is_counted(idx)
    v = A.valid_order - 1 if lowers else A.valid_order
    out = {ij: {m: bk.normalize(ring, bk.derivative(ring, p, idx), v) for m, p in t.items()} for ij, t in A.entries.items()}
    return EndForm(A.bundle, ring, out, v)


# --------------------------------------------------------------------------
# primitives


def theta(h: HermitianMetric) -> EndForm:
    """Maurer-Cartan form ``h^{-1} d^M h`` of a parameter-dependent metric."""
    return h.inv * dcomm(h.H, "dparam")


def dM(x):
    """Parameter exterior derivative of a Form or the commutator ``[d^M, x]``."""
    if isinstance(x, Form):
        return exterior_derivative(x, "dparam")
    return dcomm(x, "dparam")


def bracket(which: str, tail: EndForm, X: EndForm) -> EndForm:
    """``[D, X]`` for the superconnection with base ``which`` and tail ``tail``."""
    return dcomm(X, which) + supercommutator(tail, X)


class _Chern:
    """Everything derived from one (module, metric) pair at one point."""

    def __init__(self, E: CohesiveModule, h: HermitianMetric):
        self.E = E
        self.h = h
        self.T2 = E.tail
        self.T1 = chern_prime(E, h).tail
        self.T = self.T2 + self.T1
        self.R = operator_square(Superconnection("total", self.T))

    def br1(self, X):
        return bracket("del", self.T1, X)

    def br2(self, X):
        return bracket("delbar", self.T2, X)

    def br(self, X):
        return bracket("dX", self.T, X)


# --------------------------------------------------------------------------
# families


class MetricFamily:
    """A cohesive module with a metric depending on free parameters."""

    def __init__(self, module: CohesiveModule, h: HermitianMetric, params: Sequence[str]):
        if h.bundle != module.bundle:
            raise ValueError("metric lives on a different bundle")
        if h.ring != module.ring:
            raise ValueError("module and metric must share a ring")
        for p in params:
            if p not in h.ring.param_index:
                raise ValueError(f"unknown family parameter {p!r}")
        self.module = module
        self.h = h
        self.params = tuple(params)

    @property
    def ring(self) -> JetRing:
        return self.h.ring

    def at(self, point: Mapping[str, object], order: int | None = None):
        """Module and metric expanded around ``point`` (jet offsets in the params)."""
        point = {k: point.get(k, 0) for k in self.params}
        L = local_ring(self.ring, self.params, order)
        E = CohesiveModule.from_tail(localize_endform(self.module.tail, L, point), check=False)
        H = localize_endform(self.h.H, L, point)
        return E, HermitianMetric.from_endform(H, check=False)

    def value_at(self, point: Mapping[str, object]):
        """Module and metric at ``point`` with the parameters substituted away.

        ``theta`` at that point is returned as an EndForm ``sum_p H^{-1} P ∂_p H dπ``.
        """
        ring = self.ring
        H = substitute_endform(self.h.H, point)
        E = CohesiveModule.from_tail(substitute_endform(self.module.tail, point), check=False)
        h = HermitianMetric.from_endform(H, check=False)
        th = EndForm.zero(h.bundle, ring)
        for p in self.params:
            dH = substitute_endform(param_derivative(self.h.H, p), point)
            gen = Form.gen(ring, "d" + p)
            th = th + (h.inv * dcomm_free(dH)).right_wedge(gen)
        return E, h, th


def dcomm_free(A: EndForm) -> EndForm:
    """``P A`` with ``P = diag((-1)^{d_i})``."""
    degs = A.bundle.degrees
    bk = A.ring.backend
    out = {
        (i, j): ({m: bk.neg(A.ring, p) for m, p in t.items()} if degs[i] & 1 else t)
        for (i, j), t in A.entries.items()
    }
    return EndForm(A.bundle, A.ring, out, A.valid_order)


class GaugeFamily:
    """Gauge transformations ``f(t)`` with ``f(0) = Id``."""

    def __init__(self, f: EndForm, param: str, check: bool = True):
        self.f = f
        self.param = param
        self.bundle = f.bundle
        if check:
            degs = f.bundle.degrees
            for (i, j), t in f.entries.items():
                for m in t:
                    p, q, k = Form.split_mask(f.ring, m)
                    if p or k or degs[i] - degs[j] != -q:
                        raise ValueError("gauge terms must lie in A^(0,k)(End^(-k))")
            f0 = substitute_endform(f, {param: 0})
            if f0 != EndForm.identity(f.bundle, f.ring):
                raise ValueError("gauge family must start at the identity")

    def at(self, t) -> EndForm:
        return substitute_endform(self.f, {self.param: t})


class CohesiveFamily:
    """A ∂̄-superconnection tail depending on free parameters, flat for all values."""

    def __init__(self, tail: EndForm, params: Sequence[str], check: bool = True):
        self.tail = tail
        self.params = tuple(params)
        self.bundle = tail.bundle
        if check:
            d = operator_square(Superconnection("delbar", tail))
            if not d.is_zero():
                raise ValueError("family is not flat identically in its parameters")

    @property
    def ring(self) -> JetRing:
        return self.tail.ring

    def at(self, point: Mapping[str, object], order: int | None = None) -> CohesiveModule:
        point = {k: point.get(k, 0) for k in self.params}
        L = local_ring(self.ring, self.params, order)
        return CohesiveModule.from_tail(localize_endform(self.tail, L, point), check=False)


# --------------------------------------------------------------------------
# gauge action


def gauge_act(E: CohesiveModule, f: EndForm, check: bool = True) -> CohesiveModule:
    """``(E'')^f = f^{-1} [E'', f] + E''`` in coefficients: ``f^{-1}(P ∂̄f + T f)``."""
    if f.bundle != E.bundle:
        raise ValueError("gauge element lives on a different bundle")
    fi = endform_inverse(f)
    tail = fi * (dcomm(f, "delbar") + E.tail * f)
    return CohesiveModule.from_tail(tail, check=check)


def exact_gamma(E: CohesiveModule, g: GaugeFamily, points: Sequence = (0, Fraction(1, 2), 1)):
    """``γ'' = f^{-1} ∂_t f`` and the check ``[E''_t, γ''_t] = ∂_t E''_t``.

    Tries to verify identically in ``t``; if ``f`` is not invertible as a
    polynomial family, falls back to expansions around ``points``.  Returns
    ``(gamma, results)``; ``gamma`` is over the family ring when the identity
    was checked globally and ``None`` otherwise.
    """
    ring = g.f.ring
    if E.ring != ring:
        E = CohesiveModule.from_tail(_embed(E.tail, ring), check=False)
    try:
        fi = endform_inverse(g.f)
    except NonInvertibleError:
        fi = None
    results = []
    if fi is not None:
        gamma = fi * param_derivative(g.f, g.param)
        Et = fi * (dcomm(g.f, "delbar") + E.tail * g.f)
        lhs = bracket("delbar", Et, gamma)
        rhs = param_derivative(Et, g.param)
        results.append(_result("exact_gamma", lhs - rhs, note="identically in " + g.param))
        return gamma, results
    L = local_ring(ring, [g.param])
    for t0 in points:
        fl = localize_endform(g.f, L, {g.param: t0})
        El = localize_endform(E.tail, L, {g.param: t0})
        fil = endform_inverse(fl)
        gamma = fil * param_derivative(fl, g.param)
        Et = fil * (dcomm(fl, "delbar") + El * fl)
        lhs = bracket("delbar", Et, gamma)
        rhs = param_derivative(Et, g.param)
        results.append(_result(f"exact_gamma@{g.param}={t0}", lhs - rhs))
    return None, results


def _embed(A: EndForm, ring: JetRing) -> EndForm:
    from .cohesive import embed_endform

    return embed_endform(A, ring)


# --------------------------------------------------------------------------
# metric transgressions


def metric_transgression_suite(
    mf: MetricFamily,
    f: Sequence,
    points: Sequence[Mapping[str, object]] | None = None,
    order: int | None = None,
) -> list[CheckResult]:
    """Exact checks of the metric-variation identities at each sample point."""
    if points is None:
        points = [{p: 0 for p in mf.params}, {p: Fraction(1, 2) for p in mf.params}]
    g = derivative_coeffs(list(f))
    out = []
    for pt in points:
        E, h = mf.at(pt, order)
        tag = ",".join(f"{k}={v}" for k, v in pt.items())
        out.extend(_metric_checks(E, h, list(f), g, tag, len(mf.params)))
    return out


def _str_poly(coeffs, R: EndForm, X: EndForm | None = None) -> Form:
    F = series_eval(coeffs, R)
    return supertrace(F * X if X is not None else F)


def _metric_checks(E, h, f, g, tag, nparams) -> list[CheckResult]:
    C = _Chern(E, h)
    th = theta(h)
    E1th = C.br1(th)
    E2th = C.br2(th)
    res = []

    def add(name, diff):
        res.append(_result(f"{name}@{tag}", diff))

    add("theta_hermitian", adjoint(th, h) - th)
    if nparams >= 2:
        add("maurer_cartan", dM(th) + th * th)
    add("derivative_of_connection", dM(C.T) + E1th)
    add("derivative_of_curvature", dM(C.R) - C.br(E1th))
    sf = _str_poly(f, C.R)
    s1 = _str_poly(g, C.R, E1th)
    # the delbar component of d^M str f(R) = d^X str{f'(R)[E',θ]}
    add("first_transgression_delbar", dM(sf) - s1.d("delbar"))
    add("first_transgression_del", s1.d("del"))
    sth = _str_poly(g, C.R, th)
    add("second_transgression", s1 - sth.d("del"))
    # d^M str f(R) = ∂̄∂ str{f'(R)θ}
    add("bott_chern", dM(sf) - sth.d("del").d("delbar"))
    add("prep_del_square", supertrace(directional_eval(g, C.R, E1th) * E1th))
    add("prep_delbar_square", supertrace(directional_eval(g, C.R, E2th) * E2th))
    gp = g
    add(
        "prep_delbar_theta",
        supertrace(directional_eval(gp, C.R, E2th) * th).d("delbar")
        + supertrace(directional_eval(gp, C.R, th) * C.br2(E2th)),
    )
    if nparams >= 2:
        lhs = dM(_str_poly(g, C.R, th))
        a = supertrace(directional_eval(g, C.R, E1th) * th).d("delbar")
        b = supertrace(directional_eval(g, C.R, E2th) * th).d("del")
        half = Fraction(1, 2) if h.ring.exact else 0.5
        add("third_transgression", lhs - (a - b).scale(half))
    return res


# --------------------------------------------------------------------------
# moduli of cohesive structures


def lift_dt(X: EndForm, param: str) -> EndForm:
    """``L(X) = P (dπ ∧ X)``: turns a contracted tangent into a one-form."""
    gen = Form.gen(X.ring, "d" + param)
    return EndForm.left_mul(X.bundle, gen) * X


def moduli_delta_check(
    cf: CohesiveFamily,
    h: HermitianMetric,
    f: Sequence,
    gauge: GaugeFamily | None = None,
    points: Sequence = (0, Fraction(1, 2)),
    order: int | None = None,
) -> list[CheckResult]:
    """Transgression identities along a one-parameter family of flat structures.

    ``δ'' = [d^M, E''_t]`` and ``δ' = [d^M, E'_t]``.  When ``gauge`` is given
    the family must be ``E''^{f_t}`` and the exact-family identities are
    checked too, with ``γ'' = -L(f^{-1} ∂_t f)`` and ``γ' = -L((f^{-1} ∂_t f)^*)``.
    """
    if len(cf.params) != 1:
        raise ValueError("moduli checks use one-parameter families")
    t = cf.params[0]
    g = derivative_coeffs(list(f))
    res = []
    for t0 in points:
        L = local_ring(cf.ring, [t], order)
        E = CohesiveModule.from_tail(localize_endform(cf.tail, L, {t: t0}), check=False)
        hl = HermitianMetric.from_endform(localize_endform(_embed(h.H, cf.ring), L, {t: t0}), check=False)
        C = _Chern(E, hl)
        d2 = dM(C.T2)
        d1 = dM(C.T1)
        tag = f"{t}={t0}"

        def add(name, diff, note=""):
            res.append(_result(f"{name}@{tag}", diff, note=note))

        sf = _str_poly(list(f), C.R)
        s2 = _str_poly(g, C.R, d2)
        s1 = _str_poly(g, C.R, d1)
        add("delta_prime_adjoint", d1 + adjoint(d2, hl), "delta' = -(delta'')^*")
        add("moduli_first_transgression", dM(sf) + s2.d("del") + s1.d("delbar"))
        add("moduli_del_closed", s1.d("del"))
        add("moduli_delbar_closed", s2.d("delbar"))
        if gauge is not None:
            fl = localize_endform(_embed(gauge.f, cf.ring), L, {t: t0})
            c2 = endform_inverse(fl) * param_derivative(fl, t)
            c1 = adjoint(c2, hl)
            gam2 = -lift_dt(c2, t)
            gam1 = -lift_dt(c1, t)
            add("exact_lift", C.br2(gam2) - d2)
            g2 = _str_poly(g, C.R, gam2)
            g1 = _str_poly(g, C.R, gam1)
            add("exact_delbar", g2.d("delbar") - s2)
            add("exact_del", g1.d("del") + s1)
            add("double_transgression", dM(sf) + (g1 + g2).d("delbar").d("del"))
    return res


# --------------------------------------------------------------------------
# secondary forms


@lru_cache(maxsize=None)
def gauss_legendre(k: int, denom: int = 10**15) -> tuple[tuple[Fraction, Fraction], ...]:
    """Gauss-Legendre rule on [0, 1] with nodes and weights as Fractions."""
    x, w = np.polynomial.legendre.leggauss(k)
    return tuple(
        (Fraction((xi + 1) / 2).limit_denominator(denom), Fraction(wi / 2).limit_denominator(denom))
        for xi, wi in zip(x, w)
    )


def param_coefficient(f: Form, names: Sequence[str]) -> Form:
    """Coefficient ``a`` of ``a ∧ dπ_1 ∧ ... ∧ dπ_k`` (other parameter terms dropped)."""
    ring = f.ring
    bits = 0
    for nm in names:
        bits |= 1 << ring.param_index[nm]
    allp = ((1 << len(ring.params)) - 1) << (2 * ring.n)
    out = {}
    for m, p in f.terms.items():
        if m & allp == bits:
            out[m ^ bits] = p
    # canonical order puts the listed generators after every X generator, in ring order
    order = sorted(names, key=lambda nm: ring.param_index[nm])
    perm = [order.index(nm) for nm in names]
    inv = sum(1 for a, b in itertools.combinations(range(len(perm)), 2) if perm[a] > perm[b])
    res = Form(ring, out, f.valid_order)
    return -res if inv & 1 else res


@dataclass
class SecondaryForm:
    value: Form
    path: str
    nodes: int


def _weight(ring, w):
    return w if ring.exact else float(w)


def secondary_form(mf: MetricFamily, f: Sequence, nodes: int = 16, path: Callable | None = None) -> SecondaryForm:
    """``∫_0^1 str{f'(R_h) θ}`` along ``path(s) -> point`` (default: first parameter 0→1).

    Evaluated by a Gauss-Legendre rule with rational nodes, so each sample is
    exact; the quadrature error is the only approximation.
    """
    g = derivative_coeffs(list(f))
    if path is None:
        p0 = mf.params[0]

        def path(s):
            return {p0: s}, {p0: 1}

    total = None
    for s, w in gauss_legendre(nodes):
        point, velocity = path(s)
        point = {k: point.get(k, 0) for k in mf.params}
        E, h, th = mf.value_at(point)
        integrand = _str_poly(g, curvature(E, h), th)
        val = Form.zero(mf.ring)
        for p in mf.params:
            v = velocity.get(p, 0)
            if v:
                val = val + param_coefficient(integrand, [p]).scale(v)
        term = val.scale(_weight(mf.ring, w))
        total = term if total is None else total + term
    desc = "line"
    return SecondaryForm(total, desc, nodes)


def path_independence_witness(
    mf2: MetricFamily,
    f: Sequence,
    vertices=((0, 0), (1, 0), (0, 1)),
    nodes: int = 12,
    tol: float = 1e-10,
):
    """Stokes witness over the 2-simplex spanned by ``vertices``.

    Returns ``(X, Y, lhs, ok)`` where ``lhs`` is the loop integral of
    ``str{g(R) θ}`` around the boundary and ``ok`` states
    ``lhs = ∂̄X - ∂Y`` to ``tol``; ``X = ½∫ str{g(R;[E',θ]) θ}`` and
    ``Y = ½∫ str{g(R;[E'',θ]) θ}`` over the simplex, ``g = f'``.
    """
    if len(mf2.params) != 2:
        raise ValueError("path independence needs a two-parameter family")
    s_name, t_name = mf2.params
    P = [tuple(Fraction(c) for c in v) for v in vertices]
    g = derivative_coeffs(list(f))

    # boundary P0 -> P1 -> P2 -> P0
    loop = None
    for a, b in ((P[0], P[1]), (P[1], P[2]), (P[2], P[0])):
        vel = {s_name: b[0] - a[0], t_name: b[1] - a[1]}
        if not any(vel.values()):
            continue

        def path(u, a=a, vel=vel):
            return {s_name: a[0] + u * vel[s_name], t_name: a[1] + u * vel[t_name]}, vel

        piece = secondary_form(mf2, f, nodes, path).value
        loop = piece if loop is None else loop + piece
    if loop is None:
        loop = Form.zero(mf2.ring)

    # simplex integral by the Duffy map (u, v) -> P0 + u (P1 - P0) + u v (P2 - P1)
    e1 = (P[1][0] - P[0][0], P[1][1] - P[0][1])
    e2 = (P[2][0] - P[1][0], P[2][1] - P[1][1])
    jac = e1[0] * e2[1] - e1[1] * e2[0]
    X = Form.zero(mf2.ring)
    Y = Form.zero(mf2.ring)
    half = Fraction(1, 2)
    if jac != 0:
        rule = gauss_legendre(nodes)
        for u, wu in rule:
            for v, wv in rule:
                pt = {
                    s_name: P[0][0] + u * e1[0] + u * v * e2[0],
                    t_name: P[0][1] + u * e1[1] + u * v * e2[1],
                }
                E, h, th = mf2.value_at(pt)
                C = _Chern(E, h)
                a = supertrace(directional_eval(g, C.R, C.br1(th)) * th)
                b = supertrace(directional_eval(g, C.R, C.br2(th)) * th)
                w = wu * wv * u * jac * half
                X = X + param_coefficient(a, [s_name, t_name]).scale(_weight(mf2.ring, w))
                Y = Y + param_coefficient(b, [s_name, t_name]).scale(_weight(mf2.ring, w))
    rhs = X.d("delbar") - Y.d("del")
    diff = loop - rhs
    return X, Y, loop, diff.max_abs() <= tol


# --------------------------------------------------------------------------
# single-module suites


def chern_suite(E: CohesiveModule, h: HermitianMetric) -> list[CheckResult]:
    """Identities of the Chern superconnection of one module and metric."""
    C = _Chern(E, h)
    res = [
        _result("del_square", operator_square(Superconnection("del", C.T1))),
        _result("curvature_selfadjoint", adjoint(C.R, h) - C.R),
        _result("curvature_bracket", C.R - supercommutator(C.T1, C.T2) - dcomm(C.T2, "del") - dcomm(C.T1, "delbar")),
        _result("bianchi", C.br(C.R)),
    ]
    bad = C.R.exotic_degrees() - {0}
    res.append(CheckResult("curvature_exotic_degree", not bad, float(len(bad)), C.R.valid_order, f"degrees {sorted(C.R.exotic_degrees())}"))
    return res


def chern_weil_check(E: CohesiveModule, h: HermitianMetric, f: Sequence) -> CheckResult:
    """``d^X str f(R) = 0``."""
    return _result("chern_weil_closed", _str_poly(list(f), curvature(E, h)).d("total"))


def operator_oracle(D: Superconnection, A: EndForm, masks: Sequence[int] | None = None, tol: float = 0.0) -> CheckResult:
    """Compare ``A s`` with ``D(D s)`` on the jet basis by composing the operator.

    ``s`` runs over ``e_j`` times every monomial of degree at most the order
    and every form generator in ``masks`` (default: ``0`` and single generators).
    """
    from .cohesive import apply
    from .gbundle import SectionForm, apply_endform

    ring = D.ring
    if masks is None:
        masks = [0] + [1 << k for k in range(Form.ngens(ring))]
    chart = 2 * ring.n
    nz = ring.nexp
    worst, where, valid = 0.0, "", ring.order
    for j in range(D.bundle.rank):
        for mon in itertools.product(range(ring.order + 1), repeat=chart):
            if sum(mon) > ring.order:
                continue
            key = tuple(mon) + (0,) * (nz - chart)
            for m in masks:
                comps = [Form.zero(ring) for _ in range(D.bundle.rank)]
                comps[j] = Form(ring, {m: Jet.from_terms(ring, {key: 1})._p})
                s = SectionForm(D.bundle, ring, comps)
                twice = apply(D, apply(D, s))
                once = apply_endform(A, s)
                diff = twice - once
                v = min(c.valid_order for c in diff.comps)
                valid = min(valid, v)
                for i, c in enumerate(diff.comps):
                    a = c.truncate(v).max_abs()
                    if a > worst:
                        worst, where = a, f"section e{j} * {key} form mask {m}, component {i}"
    ok = worst <= tol
    return CheckResult("operator_oracle", ok, worst, valid, "", "" if ok else where)
