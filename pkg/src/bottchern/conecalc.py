"""Shifts, mapping cones, rescaling and the acyclic heat trace.

A closed degree-0 morphism ``φ: E -> F`` is stored as a rectangular block of
coefficients ``phi[(i, j)]`` with ``i`` a frame index of ``F`` and ``j`` one of
``E``.  The cone lives on ``F ⊕ E[1]`` with frame order ``F`` first.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.integrate import quad_vec
from scipy.linalg import expm

from .cohesive import (
    CohesiveModule,
    Superconnection,
    chern_superconnection,
    embed_endform,
    fresh_param_name,
    integrate_form,
    operator_square,
)
from .families import CohesiveFamily, bracket, param_derivative
from .forms import Form, popcount, wedge_sign
from .gbundle import (
    EndForm,
    GradedBundle,
    HermitianMetric,
    derivative_coeffs,
    grading_operator,
    series_eval,
    supertrace,
)
from .jetalg import Jet, JetRing, Param, Scalar

__all__ = [
    "Morphism",
    "HeatTraceResult",
    "NotClosedError",
    "NotAcyclicError",
    "ConvergenceError",
    "shift",
    "shift_endform",
    "closedness_defect",
    "cone_flatness_block",
    "cone",
    "cone_metric",
    "cone_family_gamma",
    "curvature_split",
    "divide_by_param",
    "regularized_cone_transgression",
    "cone_additivity",
    "rescale",
    "rescaled_curvature",
    "exp_form",
    "heat_integrand",
    "heat_integral",
    "acyclic_integral",
    "heat_flow_defect",
    "basepoint_magnitude",
]


class NotClosedError(ValueError):
    pass


class NotAcyclicError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


class IdentityError(AssertionError):
    """An identity that must hold by construction failed."""


# --------------------------------------------------------------------------
# shift


def shift(E: CohesiveModule) -> CohesiveModule:
    """``E[1]``: every degree drops by one and the tail changes sign."""
    return E.shift()


def shift_endform(A: EndForm) -> EndForm:
    """The operator ``A`` viewed on ``E[1]``.

    With coefficients stored on the right, the operator ``L ⊗ w`` has entries
    ``(-1)^{|w| d_j} w``; lowering every degree multiplies them by ``(-1)^{|w|}``.
    """
    ring = A.ring
    bk = ring.backend
    out = {
        ij: {m: (bk.neg(ring, p) if popcount(m) & 1 else p) for m, p in t.items()}
        for ij, t in A.entries.items()
    }
    return EndForm(A.bundle.shift(1), ring, out, A.valid_order)


# --------------------------------------------------------------------------
# morphisms and cones


def _place(entries, di: int, dj: int):
    return {(i + di, j + dj): t for (i, j), t in entries.items()}


def _block(A: EndForm, rows: range, cols: range):
    return {
        (i - rows.start, j - cols.start): t
        for (i, j), t in A.entries.items()
        if i in rows and j in cols
    }


def _block_diag(bundle: GradedBundle, A: EndForm, B: EndForm, sign_b: int = 1) -> EndForm:
    ring = A.ring
    bk = ring.backend
    rb = B.entries
    if sign_b < 0:
        rb = {ij: {m: bk.neg(ring, p) for m, p in t.items()} for ij, t in rb.items()}
    entries = dict(A.entries)
    entries.update(_place(rb, A.bundle.rank, A.bundle.rank))
    return EndForm(bundle, ring, entries, min(A.valid_order, B.valid_order))


@dataclass
class Morphism:
    """A degree-0 map ``φ: source -> target`` of cohesive modules."""

    source: CohesiveModule
    target: CohesiveModule
    phi: dict
    valid_order: int | None = None
    check: bool = True

    def __post_init__(self):
        if self.source.ring != self.target.ring:
            raise ValueError("source and target live over different rings")
        ring = self.source.ring
        if self.valid_order is None:
            self.valid_order = min(self.source.tail.valid_order, self.target.tail.valid_order)
        bk = ring.backend
        self.phi = {
            ij: {m: p for m, p in t.items() if not bk.is_zero(ring, p)} for ij, t in self.phi.items()
        }
        self.phi = {ij: t for ij, t in self.phi.items() if t}
        rF, rE = self.target.bundle.rank, self.source.bundle.rank
        dF, dE = self.target.bundle.degrees, self.source.bundle.degrees
        for (i, j), t in self.phi.items():
            if not (0 <= i < rF and 0 <= j < rE):
                raise ValueError(f"entry ({i},{j}) outside the {rF}x{rE} block")
            for m in t:
                if popcount(m) + dF[i] - dE[j] != 0:
                    raise ValueError(f"entry ({i},{j}) is not of total degree 0")
        if self.check:
            d = closedness_defect(self)
            if d:
                raise NotClosedError(f"closedness defect at entries {sorted(d)[:3]}")

    @classmethod
    def from_matrix(cls, source: CohesiveModule, target: CohesiveModule, rows, check: bool = True) -> "Morphism":
        """``rows[i][j]`` is the coefficient from source frame ``j`` to target frame ``i``."""
        ring = source.ring
        entries = {}
        for i, row in enumerate(rows):
            for j, x in enumerate(row):
                if x is None:
                    continue
                f = x if isinstance(x, Form) else Form.scalar(x if isinstance(x, Jet) else Jet.const(ring, x))
                if not f.is_zero():
                    entries[(i, j)] = f.terms
        return cls(source, target, entries, check=check)

    @classmethod
    def identity(cls, E: CohesiveModule) -> "Morphism":
        return cls(E, E, dict(EndForm.identity(E.bundle, E.ring).entries))

    def scale(self, s) -> "Morphism":
        ring = self.source.ring
        sc = Scalar.coerce(s, ring.exact)
        bk = ring.backend
        out = {ij: {m: bk.scale(ring, p, sc) for m, p in t.items()} for ij, t in self.phi.items()}
        return Morphism(self.source, self.target, out, self.valid_order, check=False)

    def sum_endform(self) -> EndForm:
        """``φ`` placed in the ``(F, E)`` block of the unshifted sum ``F ⊕ E``."""
        b = self.target.bundle + self.source.bundle
        return EndForm(b, self.source.ring, _place(self.phi, 0, self.target.bundle.rank), self.valid_order)


def closedness_defect(phi: Morphism) -> dict:
    """Entries of ``F'' φ - φ E''`` that do not vanish.

    Computed on the unshifted sum ``F ⊕ E`` where it is the ordinary
    commutator ``[∂̄ + T_F ⊕ T_E, Φ]`` of the even element ``Φ``.
    """
    S = phi.sum_endform()
    TS = _block_diag(S.bundle, phi.target.tail, phi.source.tail)
    from .gbundle import dcomm

    D = dcomm(S, "delbar") + TS * S - S * TS
    rF = phi.target.bundle.rank
    return _block(D, range(0, rF), range(rF, rF + phi.source.bundle.rank))


def _embed_entries(entries, ring: JetRing, big: JetRing, valid: int) -> dict:
    from .cohesive import embed_form

    return {ij: embed_form(Form(ring, t, valid), big).terms for ij, t in entries.items()}


def _cone_tail(phi: Morphism, scale_phi=None) -> EndForm:
    F, E = phi.target, phi.source
    bundle = F.bundle + E.bundle.shift(1)
    ring = F.ring
    T = _block_diag(bundle, F.tail, E.tail, sign_b=-1)
    entries = dict(T.entries)
    p = phi.phi
    if scale_phi is not None:
        bk = ring.backend
        p = {ij: {m: bk.mul_raw(ring, q, scale_phi) for m, q in t.items()} for ij, t in p.items()}
    entries.update(_place(p, 0, F.bundle.rank))
    return EndForm(bundle, ring, entries, min(T.valid_order, phi.valid_order))


def cone(phi: Morphism, check: bool = True) -> CohesiveModule:
    """``Cone(φ) = F ⊕ E[1]`` with tail ``[[T_F, φ], [0, -T_E]]``."""
    if check:
        d = closedness_defect(phi)
        if d:
            raise NotClosedError(f"closedness defect at entries {sorted(d)[:3]}")
    return CohesiveModule.from_tail(_cone_tail(phi), check=check)


def cone_flatness_block(phi: Morphism) -> tuple[dict, dict]:
    """The ``(F, E[1])`` block of the cone's flatness defect and all other blocks."""
    C = _cone_tail(phi)
    sq = operator_square(Superconnection("delbar", C))
    rF = phi.target.bundle.rank
    r = C.bundle.rank
    off = _block(sq, range(0, rF), range(rF, r))
    rest = {ij: t for ij, t in sq.entries.items() if not (ij[0] < rF <= ij[1])}
    return off, rest


def cone_metric(phi: Morphism, hE: HermitianMetric, hF: HermitianMetric) -> HermitianMetric:
    """``h_F ⊕ h_E`` on ``F ⊕ E[1]``."""
    bundle = phi.target.bundle + phi.source.bundle.shift(1)
    H = EndForm(bundle, hE.ring, dict(hF.H.entries) | _place(hE.H.entries, hF.bundle.rank, hF.bundle.rank))
    return HermitianMetric.from_endform(H, check=False)


def _e_projector(phi: Morphism, ring: JetRing) -> EndForm:
    rF = phi.target.bundle.rank
    r = rF + phi.source.bundle.rank
    one = ring.backend.const(ring, Scalar.coerce(1, ring.exact))
    bundle = phi.target.bundle + phi.source.bundle.shift(1)
    return EndForm(bundle, ring, {(i, i): {0: one} for i in range(rF, r)})


def cone_family_gamma(phi: Morphism, name: str | None = None):
    """The family ``C''_t`` for ``φ_t = tφ`` and ``γ''_t = Id_{E[1]}/t``.

    ``t`` is a Laurent parameter.  Checks ``[C''_t, γ''_t] = d/dt C''_t``
    identically in ``t`` and returns ``(family, gamma)``.
    """
    ring = phi.source.ring
    name = name or fresh_param_name(ring, "t")
    big = ring.with_params(Param(name, laurent_floor=-1))
    src = CohesiveModule.from_tail(embed_endform(phi.source.tail, big), check=False)
    tgt = CohesiveModule.from_tail(embed_endform(phi.target.tail, big), check=False)
    phiB = Morphism(src, tgt, _embed_entries(phi.phi, ring, big, phi.valid_order), check=False)
    t = Jet.var(big, name)
    C = _cone_tail(phiB, t._p)
    tinv = Jet.from_terms(big, {(0,) * (big.nexp - 1) + (-1,): 1})
    gamma = _e_projector(phiB, big).right_wedge(Form.scalar(tinv))
    fam = CohesiveFamily(C, [name], check=True)
    lhs = bracket("delbar", C, gamma)
    rhs = param_derivative(C, name)
    if lhs != rhs:
        raise IdentityError("[C''_t, gamma''_t] differs from d/dt C''_t")
    return fam, gamma


# --------------------------------------------------------------------------
# curvature along the cone family


def divide_by_param(A: EndForm, name: str) -> tuple[EndForm, EndForm]:
    """``A = name * Q + Rem`` with ``Rem`` free of ``name``; returns ``(Q, Rem)``."""
    ring = A.ring
    slot = ring.param_index[name]
    bk = ring.backend
    q_entries, r_entries = {}, {}
    for ij, t in A.entries.items():
        for m, p in t.items():
            qt, rt = {}, {}
            for mon, c in Jet(ring, p, A.valid_order).terms().items():
                if mon[slot] >= 1:
                    key = list(mon)
                    key[slot] -= 1
                    qt[tuple(key)] = c
                else:
                    rt[mon] = c
            if qt:
                q_entries.setdefault(ij, {})[m] = Jet.from_terms(ring, qt, A.valid_order)._p
            if rt:
                r_entries.setdefault(ij, {})[m] = Jet.from_terms(ring, rt, A.valid_order)._p
    return EndForm(A.bundle, ring, q_entries, A.valid_order), EndForm(A.bundle, ring, r_entries, A.valid_order)


class _ConeSetup:
    def __init__(self, phi: Morphism, hE: HermitianMetric, hF: HermitianMetric):
        ring = phi.source.ring
        self.name = fresh_param_name(ring, "t")
        big = ring.with_params(Param(self.name))
        self.ring = ring
        self.big = big
        src = CohesiveModule.from_tail(embed_endform(phi.source.tail, big), check=False)
        tgt = CohesiveModule.from_tail(embed_endform(phi.target.tail, big), check=False)
        self.phi = Morphism(src, tgt, _embed_entries(phi.phi, ring, big, phi.valid_order), check=False)
        t = Jet.var(big, self.name)
        self.Ct = CohesiveModule.from_tail(_cone_tail(self.phi, t._p), check=False)
        self.h = cone_metric(
            self.phi,
            HermitianMetric.from_endform(embed_endform(hE.H, big), check=False),
            HermitianMetric.from_endform(embed_endform(hF.H, big), check=False),
        )
        self.Rt = operator_square(chern_superconnection(self.Ct, self.h))
        _, self.R0 = divide_by_param(self.Rt, self.name)
        q, rem = divide_by_param(self.Rt - self.R0, self.name)
        if not rem.is_zero():
            raise IdentityError("R_t - R_0 is not divisible by t")
        self.At = q


def curvature_split(phi: Morphism, hE: HermitianMetric, hF: HermitianMetric):
    """``R_t = R_0 + t A_t`` for the cone family with ``h_F ⊕ h_E``.

    Returns ``(R0, A_t, t_name)``; ``A_t`` lives over the ring extended by the
    free parameter ``t_name``.
    """
    S = _ConeSetup(phi, hE, hF)
    return S.R0, S.At, S.name


def _restrict(f: Form, ring: JetRing) -> Form:
    from .cohesive import _restrict_form

    return _restrict_form(f, ring)


@dataclass
class ConeTransgression:
    potential: Form
    lhs: Form
    rhs: Form
    ok: bool
    literal_ok: bool
    remainder_zero: bool


def regularized_cone_transgression(
    phi: Morphism, hE: HermitianMetric, hF: HermitianMetric, f: Sequence
) -> ConeTransgression:
    """Potential ``P = ∫_0^1 str{R_{f'}(t) Q} dt`` with ``Q = Id_{E[1]}``.

    ``R_{f'}(t) = (f'(R_0 + t A_t) - f'(R_0)) / t`` by exact division in ``t``.
    The checked identity is ``f(C''_1) - f(C''_0) = 2 ∂∂̄ P``; ``literal_ok``
    reports whether the opposite sign ``-2 ∂∂̄ P`` holds instead.
    """
    S = _ConeSetup(phi, hE, hF)
    g = derivative_coeffs(list(f))
    big = S.big
    if g:
        Gt = series_eval(g, S.Rt)
        G0 = series_eval(g, S.R0)
        q, rem = divide_by_param(Gt - G0, S.name)
        remainder_zero = rem.is_zero()
        if not remainder_zero:
            raise IdentityError("nonzero remainder dividing f'(R_t) - f'(R_0) by t")
        Q = _e_projector(S.phi, big)
        potB = integrate_form(supertrace(q * Q), S.name)
    else:
        remainder_zero = True
        potB = Form.zero(big)
    P = _restrict(potB, S.ring)
    sf_t = supertrace(series_eval(list(f), S.Rt))
    one = _restrict(_subs_form(sf_t, S.name, 1), S.ring)
    zero = _restrict(_subs_form(sf_t, S.name, 0), S.ring)
    lhs = one - zero
    two = Fraction(2) if S.ring.exact else 2.0
    rhs = P.d("delbar").d("del").scale(two)
    order = min(lhs.valid_order, rhs.valid_order)
    literal = -rhs
    return ConeTransgression(P, lhs, rhs, lhs.equal_upto(rhs, order), lhs.equal_upto(literal, order), remainder_zero)


def _subs_form(f: Form, name: str, value) -> Form:
    from .jetalg import jet_subs

    return f.map_coeffs(lambda j: jet_subs(j, {name: value}))


@dataclass
class Additivity:
    defect: Form
    potential: Form
    chain_defect: Form
    ok: bool


def cone_additivity(phi: Morphism, hE: HermitianMetric, hF: HermitianMetric, f: Sequence) -> Additivity:
    """``f(Cone, C''_0) = f(F) - f(E)`` as forms, plus the Bott-Chern chain.

    ``chain_defect`` is ``f(E) - f(F) + f(Cone, C''_1) - 2 ∂∂̄ P`` with ``P``
    from ``regularized_cone_transgression``.
    """
    from .cohesive import char_form

    c0 = char_form(cone(phi.scale(0), check=False), cone_metric(phi, hE, hF), f)
    fE = char_form(phi.source, hE, f)
    fF = char_form(phi.target, hF, f)
    defect = c0 - (fF - fE)
    c1 = char_form(cone(phi, check=False), cone_metric(phi, hE, hF), f)
    tr = regularized_cone_transgression(phi, hE, hF, f)
    chain = fE - fF + c1 - tr.rhs
    order = min(defect.valid_order, chain.valid_order)
    ok = defect.truncate(order).is_zero() and chain.truncate(order).is_zero()
    return Additivity(defect, tr.potential, chain, ok)


# --------------------------------------------------------------------------
# rescaling


def _laurent_ring(ring: JetRing, name: str) -> JetRing:
    # t^{1-k} E_k against gamma = -N/t reaches t^{-k}, and k <= n
    return ring.with_params(Param(name, laurent_floor=min(-1, -ring.n)))


def rescale(E: CohesiveModule, mode: str = "exact-laurent", t=None, name: str | None = None):
    """``E''_t = Σ_k t^{1-k} E''_k`` with ``E''_k`` the form-degree-``k`` part.

    ``exact-laurent`` returns ``(family, gamma)`` with ``γ''_t = -N/t`` and
    checks ``[E''_t, γ''_t] = d/dt E''_t`` identically in ``t``.  ``numeric``
    substitutes the float ``t > 0`` and returns a numeric module.
    """
    if mode == "numeric":
        if t is None or not t > 0:
            raise ValueError("rescaling needs t > 0")
        tail = _rescale_numeric(E.tail.to_numeric(), float(t))
        return CohesiveModule.from_tail(tail, check=False)
    if mode != "exact-laurent":
        raise ValueError("mode must be 'exact-laurent' or 'numeric'")
    ring = E.ring
    name = name or fresh_param_name(ring, "t")
    big = _laurent_ring(ring, name)
    T = embed_endform(E.tail, big)
    slot = big.param_index[name]
    out = {}
    for ij, tt in T.entries.items():
        for m, p in tt.items():
            k = popcount(m)
            out.setdefault(ij, {})[m] = _times_power(big, p, slot, 1 - k, T.valid_order)
    Tt = EndForm(E.bundle, big, out, T.valid_order)
    tinv = Jet.from_terms(big, {tuple(-1 if i == slot else 0 for i in range(big.nexp)): 1})
    gamma = grading_operator(E.bundle, big).right_wedge(Form.scalar(-tinv))
    fam = CohesiveFamily(Tt, [name], check=True)
    if bracket("delbar", Tt, gamma) != param_derivative(Tt, name):
        raise IdentityError("degree commutator lemma fails")
    return fam, gamma


def _times_power(ring: JetRing, p, slot: int, k: int, valid: int):
    terms = {}
    for mon, c in Jet(ring, p, valid).terms().items():
        key = list(mon)
        key[slot] += k
        terms[tuple(key)] = c
    return Jet.from_terms(ring, terms, valid)._p


def _rescale_numeric(T: EndForm, t: float) -> EndForm:
    return T.map_forms(lambda f: Form(f.ring, {m: f.ring.backend.scale(f.ring, p, Scalar(t ** (1 - popcount(m)), 0, False)) for m, p in f.terms.items()}, f.valid_order))


def rescaled_curvature(E: CohesiveModule, h: HermitianMetric, t: float) -> EndForm:
    """``R_t`` for ``𝔼_t = Σ_k t^{1-k} 𝔼_k``, numerically."""
    En = CohesiveModule.from_tail(E.tail.to_numeric(), check=False)
    full = chern_superconnection(En, h.to_numeric()).tail
    return operator_square(Superconnection("total", _rescale_numeric(full, t)))


# --------------------------------------------------------------------------
# exponentials and the heat trace


class _RegularRep:
    """Left-regular representation of jets ⊗ exterior algebra in a numeric ring."""

    def __init__(self, ring: JetRing, order: int):
        if ring.params:
            raise ValueError("the matrix exponential supports parameter-free rings")
        self.ring = ring
        self.order = order
        nz = 2 * ring.n
        mons = [m for m in itertools.product(range(order + 1), repeat=nz) if sum(m) <= order]
        masks = range(1 << Form.ngens(ring))
        self.basis = [(m, k) for m in mons for k in masks]
        self.index = {b: i for i, b in enumerate(self.basis)}
        self.dim = len(self.basis)

    def left(self, terms: Mapping[int, Mapping[tuple, complex]]) -> np.ndarray:
        L = np.zeros((self.dim, self.dim), dtype=complex)
        for ma, poly in terms.items():
            for mon_a, c in poly.items():
                if c == 0:
                    continue
                for col, (mon_b, mb) in enumerate(self.basis):
                    if ma & mb:
                        continue
                    mon = tuple(x + y for x, y in zip(mon_a, mon_b))
                    row = self.index.get((mon, ma | mb))
                    if row is None:
                        continue
                    L[row, col] += wedge_sign(ma, mb) * c
        return L

    def unpack(self, vec: np.ndarray) -> dict:
        out: dict[int, dict] = {}
        for (mon, mask), c in zip(self.basis, vec):
            if c != 0:
                out.setdefault(mask, {})[mon] = complex(c)
        return out


def exp_form(A: EndForm) -> EndForm:
    """``exp(A)`` for a numeric EndForm by the left-regular representation.

    Each entry becomes a block of the left-multiplication matrix on jets ⊗ forms
    and the whole matrix goes through scaling-and-squaring.
    """
    if A.ring.exact:
        A = A.to_numeric()
    ring = A.ring
    rep = _RegularRep(ring, A.valid_order)
    r = A.bundle.rank
    d = rep.dim
    big = np.zeros((r * d, r * d), dtype=complex)
    for (i, j), t in A.entries.items():
        big[i * d : (i + 1) * d, j * d : (j + 1) * d] = rep.left(t)
    X = expm(big)
    unit = rep.index[((0,) * (2 * ring.n), 0)]
    entries = {}
    for i in range(r):
        for j in range(r):
            col = X[i * d : (i + 1) * d, j * d + unit]
            t = {m: Jet.from_terms(ring, {mon: c for mon, c in poly.items() if abs(c) > 0}, A.valid_order)._p for m, poly in rep.unpack(col).items()}
            if t:
                entries[(i, j)] = t
    return EndForm(A.bundle, ring, entries, A.valid_order)


def heat_integrand(E: CohesiveModule, h: HermitianMetric, t: float) -> Form:
    """``str{exp(-R_t) N_E}``."""
    R = rescaled_curvature(E, h, t)
    N = grading_operator(E.bundle, R.ring)
    return supertrace(exp_form(-R) * N)


def _check_acyclic(E: CohesiveModule, h: HermitianMetric, tol: float = 1e-10):
    R = rescaled_curvature(E, h, 1.0)
    r = R.bundle.rank
    zero = (0,) * R.ring.nexp
    M = np.zeros((r, r), dtype=complex)
    for (i, j), t in R.entries.items():
        p = t.get(0)
        if p:
            M[i, j] = p.get(zero, 0)
    ev = np.linalg.eigvalsh((M + M.conj().T) / 2)
    if ev.min() <= tol:
        raise NotAcyclicError(f"degree-0 Laplacian is not positive at the basepoint (min eigenvalue {ev.min():.3g})")


def _form_vector(f: Form, keys: list) -> np.ndarray:
    out = np.zeros(len(keys), dtype=complex)
    for k, (m, mon) in enumerate(keys):
        p = f.terms.get(m)
        if p:
            out[k] = p.get(mon, 0)
    return out


def _form_keys(ring: JetRing, order: int) -> list:
    rep = _RegularRep(ring, order)
    return [(mask, mon) for mon, mask in rep.basis]


def _vector_form(ring: JetRing, keys: list, vec: np.ndarray, valid: int) -> Form:
    out: dict[int, dict] = {}
    for (m, mon), c in zip(keys, vec):
        if c != 0:
            out.setdefault(m, {})[mon] = complex(c)
    return Form(ring, {m: Jet.from_terms(ring, t, valid)._p for m, t in out.items()}, valid)


def heat_integral(E: CohesiveModule, h: HermitianMetric, T: float, epsabs: float = 1e-13) -> Form:
    """``∫_1^T str{exp(-R_t) N_E} dt/t`` coefficientwise by adaptive quadrature."""
    ring = E.ring.numeric()
    order = heat_integrand(E, h, 1.0).valid_order
    keys = _form_keys(ring, order)

    def fn(t):
        return _form_vector(heat_integrand(E, h, t), keys) / t

    val, err = quad_vec(fn, 1.0, T, epsabs=epsabs, epsrel=1e-12)
    return _vector_form(ring, keys, val, order)


def basepoint_magnitude(f: Form) -> float:
    """Largest constant coefficient of ``f``: the size of the form at the basepoint."""
    zero = (0,) * f.ring.nexp
    return max((abs(complex(Jet(f.ring, p, f.valid_order).coefficient(zero))) for p in f.terms.values()), default=0.0)


def _fit_decay(samples):
    """Least-squares fit ``log m = a - c t^2``; returns ``(a, c, relative residual)``.

    The relative residual is the residual norm over the spread of ``log m``.
    """
    ts = np.array([t for t, _ in samples], dtype=float)
    ys = np.log(np.array([m for _, m in samples], dtype=float))
    A = np.vstack([np.ones_like(ts), -(ts**2)]).T
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    resid = ys - A @ coef
    spread = np.linalg.norm(ys - ys.mean())
    rel = float(np.linalg.norm(resid) / spread) if spread > 0 else 0.0
    return float(coef[0]), float(coef[1]), rel


@dataclass
class HeatTraceResult:
    I_E: Form
    decay_samples: list
    T: float
    residual: Form
    decay_rate: float = 0.0
    fit_residual: float = 0.0
    tail_estimate: float = 0.0
    factor: float = 2.0
    history: list = field(default_factory=list)


def acyclic_integral(
    E: CohesiveModule,
    h: HermitianMetric,
    T_max: float = 64.0,
    tol: float = 1e-12,
    T0: float = 4.0,
) -> HeatTraceResult:
    """``I_E = ∫_1^∞ str{exp(-R_t) N_E} dt/t`` for a basepoint-acyclic module.

    ``T`` starts at ``T0`` and doubles until the fitted Gaussian tail is
    below ``tol``.  ``residual`` is ``str exp(-R_1) + 2 ∂∂̄ I_E``.
    """
    _check_acyclic(E, h)
    samples = [(float(t), basepoint_magnitude(heat_integrand(E, h, float(t))) / t) for t in (1, 2, 3, 4)]
    a, c, rel = _fit_decay(samples)
    T = T0
    history = []
    while True:
        tail_fit = [(float(t), max(heat_integrand(E, h, float(t)).max_abs(), 1e-300)) for t in (T - 2, T - 1, T)]
        a_t, c_t, _ = _fit_decay(tail_fit)
        if c_t > 0:
            tail = math.exp(a_t - c_t * T * T) / (2 * c_t * T * T)
        else:
            tail = math.inf
        if tail_fit[-1][1] <= 1e-300:
            tail = 0.0
        history.append((T, tail))
        if tail < tol:
            break
        T *= 2
        if T > T_max:
            raise ConvergenceError(f"quadrature non-convergence: tail {tail:.3g} still above {tol:.3g} at T_max={T_max}")
    I = heat_integral(E, h, T)
    R1 = rescaled_curvature(E, h, 1.0)
    s1 = supertrace(exp_form(-R1))
    res = s1 + I.d("delbar").d("del").scale(2.0)
    res = res.truncate(res.valid_order)
    return HeatTraceResult(I, samples, T, res, c, rel, tail, -2.0, history)


def heat_flow_defect(E: CohesiveModule, h: HermitianMetric, t: float, step: float = 1e-4):
    """``(lhs, rhs)`` for ``d/dt str exp(-R_t)`` and ``(2/t) ∂∂̄ str{exp(-R_t) N_E}``.

    The derivative is a central difference with the given step.
    """
    a = supertrace(exp_form(-rescaled_curvature(E, h, t + step)))
    b = supertrace(exp_form(-rescaled_curvature(E, h, t - step)))
    lhs = (a - b).scale(1.0 / (2 * step))
    rhs = heat_integrand(E, h, t).d("delbar").d("del").scale(2.0 / t)
    order = min(lhs.valid_order, rhs.valid_order)
    return lhs.truncate(order), rhs.truncate(order)
