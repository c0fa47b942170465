"""Superconnections, cohesive modules and their Chern superconnections.

A superconnection is stored as a base differential plus a coefficient tail
``T``.  On a section ``s = sum_i e_i s_i`` it acts by

    (D s)_i = (-1)^{d_i} d_base(s_i) + sum_j T_ij s_j

so ``D^2`` is the EndForm ``dcomm(T, base) + T T``.
"""

from __future__ import annotations

from typing import Sequence

from .forms import Form, exterior_derivative, popcount
from .gbundle import (
    EndForm,
    GradedBundle,
    HermitianMetric,
    SectionForm,
    adjoint,
    dcomm,
    derivative_coeffs,
    series_eval,
    supertrace,
)
from .jetalg import Jet, JetRing, Param, jet_integrate_param, jet_recenter

__all__ = [
    "Superconnection",
    "CohesiveModule",
    "NotFlatError",
    "apply",
    "is_flat",
    "chern_prime",
    "chern_superconnection",
    "curvature",
    "char_form",
    "linear_transgression",
    "operator_square",
    "unitarity_defect",
    "embed_endform",
    "embed_form",
]

_BASES = {"delbar": "delbar", "del": "del", "total": "dX"}


class NotFlatError(ValueError):
    pass


class Superconnection:
    def __init__(self, base: str, tail: EndForm):
        if base not in _BASES:
            raise ValueError(f"base must be one of {sorted(_BASES)}")
        self.base = base
        self.tail = tail

    @property
    def bundle(self) -> GradedBundle:
        return self.tail.bundle

    @property
    def ring(self) -> JetRing:
        return self.tail.ring

    @property
    def diff(self) -> str:
        return _BASES[self.base]

    def pattern_violations(self) -> list[tuple[int, int, int]]:
        """Tail terms whose (form bidegree, End-degree) break the base pattern."""
        degs = self.bundle.degrees
        bad = []
        for (i, j), t in self.tail.entries.items():
            e = degs[i] - degs[j]
            for m in t:
                p, q, k = Form.split_mask(self.ring, m)
                ok = k == 0 and (
                    (self.base == "delbar" and p == 0 and e == 1 - q)
                    or (self.base == "del" and q == 0 and e == 1 - p)
                    or (self.base == "total" and (p == 0 or q == 0) and e == 1 - p - q)
                )
                if not ok:
                    bad.append((i, j, m))
        return bad

    def component(self, k: int) -> EndForm:
        """The tail part of form degree ``k`` (End-degree ``1 - k``)."""
        return self.tail.select(lambda i, j, m: popcount(m) == k)

    def __add__(self, other: "Superconnection") -> "Superconnection":
        pair = {self.base, other.base}
        if pair == {"delbar", "del"}:
            base = "total"
        elif len(pair) == 1 and self.base != "total":
            raise ValueError("adding two superconnections with the same partial base")
        else:
            raise ValueError(f"cannot add bases {self.base} and {other.base}")
        return Superconnection(base, self.tail + other.tail)

    def __repr__(self):
        return f"Superconnection({self.base}, {self.tail!r})"


class CohesiveModule:
    """A graded bundle with a flat ∂̄-superconnection."""

    def __init__(self, E_dblprime: Superconnection, check: bool = True):
        if E_dblprime.base != "delbar":
            raise ValueError("a cohesive module needs a delbar-superconnection")
        self.E2 = E_dblprime
        if check:
            bad = E_dblprime.pattern_violations()
            if bad:
                raise ValueError(f"tail terms outside A^(0,k)(End^(1-k)): {bad[:3]}")
            ok, defect = is_flat(E_dblprime)
            if not ok:
                raise NotFlatError("flatness defect does not vanish")

    @classmethod
    def from_tail(cls, tail: EndForm, check: bool = True) -> "CohesiveModule":
        return cls(Superconnection("delbar", tail), check)

    @property
    def bundle(self) -> GradedBundle:
        return self.E2.bundle

    @property
    def ring(self) -> JetRing:
        return self.E2.ring

    @property
    def tail(self) -> EndForm:
        return self.E2.tail

    def shift(self) -> "CohesiveModule":
        """``E[1]``: degrees drop by one and the superconnection changes sign."""
        b = self.bundle.shift(1)
        t = EndForm(b, self.ring, {ij: {m: self.ring.backend.neg(self.ring, p) for m, p in tt.items()} for ij, tt in self.tail.entries.items()}, self.tail.valid_order)
        return CohesiveModule.from_tail(t, check=False)


# --------------------------------------------------------------------------


def apply(D: Superconnection, s: SectionForm) -> SectionForm:
    """Apply a superconnection to a form-valued section."""
    degs = D.bundle.degrees
    out = []
    for i, c in enumerate(s.comps):
        dc = exterior_derivative(c, D.diff)
        out.append(-dc if degs[i] & 1 else dc)
    base = SectionForm(D.bundle, D.ring, out)
    from .gbundle import apply_endform

    return base + apply_endform(D.tail, s)


def operator_square(D: Superconnection) -> EndForm:
    """``D^2`` as an EndForm: ``dcomm(T, base) + T T``."""
    return dcomm(D.tail, D.diff) + D.tail * D.tail


def is_flat(D: Superconnection) -> tuple[bool, EndForm]:
    defect = operator_square(D)
    return defect.is_zero(), defect


def chern_prime(E: CohesiveModule, h: HermitianMetric) -> Superconnection:
    """The ∂-part ``E'`` of the Chern superconnection.

    Its connection form is ``H^{-1} P ∂H + (Θ)^*`` and its other terms are the
    metric adjoints of the ∂̄-tail, i.e. ``T' = H^{-1} P ∂H + adjoint(T'')``.
    """
    if h.bundle != E.bundle:
        raise ValueError("metric lives on a different bundle")
    conn = h.inv * dcomm(h.H, "del")
    return Superconnection("del", conn + adjoint(E.tail, h))


def chern_superconnection(E: CohesiveModule, h: HermitianMetric) -> Superconnection:
    return E.E2 + chern_prime(E, h)


def curvature(E: CohesiveModule, h: HermitianMetric) -> EndForm:
    """``R = 𝔼^2`` for the Chern superconnection ``𝔼 = E' + E''``."""
    return operator_square(chern_superconnection(E, h))


def char_form(E: CohesiveModule, h: HermitianMetric, f: Sequence) -> Form:
    """``str f(R)`` for a polynomial given by its coefficient list."""
    R = curvature(E, h)
    return supertrace(series_eval(f, R))


def unitarity_defect(D: Superconnection, h: HermitianMetric, s: SectionForm, t: SectionForm) -> Form:
    """``(-1)^{|s|} d h(s,t) + h(D s, t) - h(s, D t)`` for homogeneous ``s``.

    The total degree of ``s`` includes frame degrees.  Vanishes exactly when
    ``D`` is unitary with respect to ``h`` on this pair.
    """
    from .gbundle import metric_pairing

    degs = D.bundle.degrees
    ks = {popcount(m) + degs[i] for i, c in enumerate(s.comps) for m in c.terms}
    if len(ks) > 1:
        raise ValueError("s must be homogeneous")
    k = ks.pop() if ks else 0
    lhs = exterior_derivative(metric_pairing(s, t, h), D.diff)
    if k % 2:
        lhs = -lhs
    return lhs + metric_pairing(apply(D, s), t, h) - metric_pairing(s, apply(D, t), h)


# --------------------------------------------------------------------------
# ring extension


def embed_form(f: Form, target: JetRing) -> Form:
    """Re-express a form in a ring with extra trailing parameters."""
    out = {}
    for m, p in f.terms.items():
        out[m] = jet_recenter(Jet(f.ring, p, f.valid_order), target)._p
    return Form(target, out, min(f.valid_order, target.order))


def embed_endform(A: EndForm, target: JetRing) -> EndForm:
    out = {ij: embed_form(Form(A.ring, t, A.valid_order), target).terms for ij, t in A.entries.items()}
    return EndForm(A.bundle, target, out, min(A.valid_order, target.order))


def integrate_form(f: Form, param: str, lo=0, hi=1) -> Form:
    out = {}
    for m, j in f.coeffs().items():
        out[m] = jet_integrate_param(j, param, lo, hi)._p
    return Form(f.ring, out, f.valid_order)


def fresh_param_name(ring: JetRing, stem: str = "s") -> str:
    names = {p.name for p in ring.params}
    k = 0
    while f"{stem}{k}" in names:
        k += 1
    return f"{stem}{k}"


def linear_transgression(E: CohesiveModule, h: HermitianMetric, f: Sequence):
    """Potential ``∫_0^1 str{A f'(R_t)} dt`` for ``𝔼_t = ∇ + tA``.

    Returns ``(potential, difference, ok)`` where ``difference`` is
    ``str f(R_1) - str f(R_0)`` and ``ok`` says whether it equals
    ``d^X potential`` up to the surviving jet order.
    """
    full = chern_superconnection(E, h).tail
    ring = E.ring
    conn = full.select(lambda i, j, m: popcount(m) == 1 and E.bundle.degrees[i] == E.bundle.degrees[j])
    A = full - conn
    name = fresh_param_name(ring, "lt")
    big = ring.with_params(Param(name))
    connB = embed_endform(conn, big)
    AB = embed_endform(A, big)
    t = Form.scalar(Jet.var(big, name))
    Tt = connB + AB.right_wedge(t)
    Rt = dcomm(Tt, "dX") + Tt * Tt
    fp = derivative_coeffs(list(f))
    integrand = supertrace(AB * series_eval(fp, Rt)) if fp else Form.zero(big, Rt.valid_order)
    potB = integrate_form(integrand, name)
    R1 = operator_square(Superconnection("total", full))
    R0 = operator_square(Superconnection("total", conn))
    diff = supertrace(series_eval(f, R1)) - supertrace(series_eval(f, R0))
    pot = _restrict_form(potB, ring)
    dpot = exterior_derivative(pot, "dX")
    order = min(dpot.valid_order, diff.valid_order)
    return pot, diff, diff.equal_upto(dpot, order)


def _restrict_form(f: Form, ring: JetRing) -> Form:
    """Drop trailing parameters that no longer appear."""
    k = len(ring.params)
    out = {}
    for m, j in f.coeffs().items():
        terms = {}
        for mon, c in j.terms().items():
            if any(mon[2 * ring.n + k :]):
                raise ValueError("form still depends on the dropped parameter")
            terms[mon[: 2 * ring.n + k]] = c
        if m >> (2 * ring.n + k):
            raise ValueError("form still has a dropped parameter direction")
        out[m] = Jet.from_terms(ring, terms, f.valid_order)._p
    return Form(ring, out, f.valid_order)
