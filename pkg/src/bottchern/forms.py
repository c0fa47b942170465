"""Bigraded differential forms with jet coefficients.

Generators are ``dz_1..dz_n, dzb_1..dzb_n`` followed by one ``d<param>`` per
ring parameter.  A monomial is a bitmask over that list, always kept in that
canonical order; the Koszul sign of any reordering is folded into the
coefficient.  Parameter one-forms count as odd in every sign.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Mapping

from .jetalg import (
    Jet,
    JetRing,
    PrecisionError,
    RingMismatchError,
    Scalar,
    ScalarModeError,
)

__all__ = [
    "Form",
    "wedge",
    "exterior_derivative",
    "star",
    "exotic_decompose",
    "popcount",
    "wedge_sign",
]


def popcount(m: int) -> int:
    return bin(m).count("1")


@lru_cache(maxsize=None)
def wedge_sign(a: int, b: int) -> int:
    """Sign of ``g_a ∧ g_b`` relative to the canonical order of ``a | b``.

    Returns 0 when the masks overlap.
    """
    if a & b:
        return 0
    inv = 0
    bb = b
    while bb:
        low = bb & -bb
        # generators of a sitting above this generator of b must hop over it
        inv += popcount(a & ~((low << 1) - 1))
        bb ^= low
    return -1 if inv & 1 else 1


class Form:
    """A form ``Σ coef_mask · g_mask`` with a shared ``valid_order``."""

    __slots__ = ("ring", "terms", "valid_order")

    def __init__(self, ring: JetRing, terms: Mapping[int, object] | None = None, valid_order: int | None = None):
        self.ring = ring
        self.valid_order = ring.order if valid_order is None else valid_order
        bk = ring.backend
        self.terms = {m: p for m, p in (terms or {}).items() if not bk.is_zero(ring, p)}

    # -- generator bookkeeping
    @staticmethod
    def ngens(ring: JetRing) -> int:
        return 2 * ring.n + len(ring.params)

    @staticmethod
    def gen_index(ring: JetRing, name) -> int:
        """``'dz1'``, ``'dzb1'``, ``('dz', 0)``, ``('dzb', 0)`` or ``'d<param>'``."""
        if isinstance(name, tuple):
            kind, i = name
            return i if kind == "dz" else ring.n + i
        if name.startswith("dzb") and name[3:].isdigit():
            return ring.n + int(name[3:]) - 1
        if name.startswith("dz") and name[2:].isdigit():
            return int(name[2:]) - 1
        if name.startswith("d") and name[1:] in ring.param_index:
            return ring.param_index[name[1:]]
        raise KeyError(f"unknown form generator {name!r}")

    @staticmethod
    def split_mask(ring: JetRing, mask: int) -> tuple[int, int, int]:
        n = ring.n
        lo = (1 << n) - 1
        return (
            popcount(mask & lo),
            popcount((mask >> n) & lo),
            popcount(mask >> (2 * n)),
        )

    # -- constructors
    @classmethod
    def zero(cls, ring: JetRing, valid_order: int | None = None) -> "Form":
        return cls(ring, {}, valid_order)

    @classmethod
    def scalar(cls, f) -> "Form":
        if not isinstance(f, Jet):
            raise TypeError("Form.scalar expects a Jet")
        return cls(f.ring, {0: f._p}, f.valid_order)

    @classmethod
    def const(cls, ring: JetRing, value=1) -> "Form":
        return cls.scalar(Jet.const(ring, value))

    @classmethod
    def gen(cls, ring: JetRing, *names) -> "Form":
        """Wedge of the named generators in the order given."""
        out = cls.const(ring, 1)
        for nm in names:
            out = out * cls(ring, {1 << cls.gen_index(ring, nm): ring.backend.const(ring, Scalar.coerce(1, ring.exact))})
        return out

    @classmethod
    def from_coeffs(cls, ring: JetRing, coeffs: Mapping[int, Jet], valid_order: int | None = None) -> "Form":
        v = min([ring.order if valid_order is None else valid_order] + [j.valid_order for j in coeffs.values()])
        bk = ring.backend
        return cls(ring, {m: bk.normalize(ring, j._p, v) for m, j in coeffs.items()}, v)

    # -- inspection
    def coef(self, mask: int) -> Jet:
        p = self.terms.get(mask)
        return Jet(self.ring, p, self.valid_order) if p is not None else Jet(self.ring, None, self.valid_order)

    def coeffs(self) -> dict[int, Jet]:
        return {m: Jet(self.ring, p, self.valid_order) for m, p in self.terms.items()}

    def is_zero(self) -> bool:
        return not self.terms

    def is_homogeneous(self) -> bool:
        return len({popcount(m) for m in self.terms}) <= 1

    def degree(self) -> int:
        """Total degree p+q+m of a homogeneous form (0 for the zero form)."""
        degs = {popcount(m) for m in self.terms}
        if len(degs) > 1:
            raise ValueError("form is not homogeneous")
        return degs.pop() if degs else 0

    def bidegrees(self) -> set[tuple[int, int, int]]:
        return {Form.split_mask(self.ring, m) for m in self.terms}

    def max_abs(self) -> float:
        bk = self.ring.backend
        return max((bk.max_abs(self.ring, p) for p in self.terms.values()), default=0.0)

    def truncate(self, order: int) -> "Form":
        v = min(order, self.valid_order)
        bk = self.ring.backend
        return Form(self.ring, {m: bk.normalize(self.ring, p, v) for m, p in self.terms.items()}, v)

    def part(self, pred) -> "Form":
        """Terms whose ``(p, q, m)`` satisfies ``pred``."""
        return Form(
            self.ring,
            {k: p for k, p in self.terms.items() if pred(*Form.split_mask(self.ring, k))},
            self.valid_order,
        )

    def degree_part(self, k: int) -> "Form":
        return Form(self.ring, {m: p for m, p in self.terms.items() if popcount(m) == k}, self.valid_order)

    # -- arithmetic
    def _check(self, other: "Form"):
        if other.ring.exact != self.ring.exact:
            raise ScalarModeError("exact and numeric forms cannot be mixed")
        if other.ring != self.ring:
            raise RingMismatchError("forms live in different rings")

    def _lift(self, other) -> "Form":
        if isinstance(other, Form):
            self._check(other)
            return other
        if isinstance(other, Jet):
            return Form.scalar(other)
        return Form.const(self.ring, other)

    def __add__(self, other):
        other = self._lift(other)
        return _combine(self, other, 1)

    __radd__ = __add__

    def __sub__(self, other):
        return _combine(self, self._lift(other), -1)

    def __rsub__(self, other):
        return _combine(self._lift(other), self, -1)

    def __neg__(self):
        bk = self.ring.backend
        return Form(self.ring, {m: bk.neg(self.ring, p) for m, p in self.terms.items()}, self.valid_order)

    def __mul__(self, other):
        if isinstance(other, (Form, Jet)):
            return wedge(self, self._lift(other))
        return self.scale(other)

    def __rmul__(self, other):
        if isinstance(other, Jet):
            return wedge(Form.scalar(other), self)
        return self.scale(other)

    def scale(self, s) -> "Form":
        bk = self.ring.backend
        s = Scalar.coerce(s, self.ring.exact)
        if s.im == 0 and self.ring.exact and s.re.denominator == 1:
            k = int(s.re)
            return Form(self.ring, {m: bk.scale_int(self.ring, p, k) for m, p in self.terms.items()}, self.valid_order)
        return Form(self.ring, {m: bk.scale(self.ring, p, s) for m, p in self.terms.items()}, self.valid_order)

    def __eq__(self, other):
        if not isinstance(other, Form):
            try:
                other = self._lift(other)
            except (ScalarModeError, TypeError):
                return NotImplemented
        if other.ring != self.ring:
            return False
        return (self - other).is_zero()

    def __hash__(self):
        return hash((self.ring, tuple(sorted(self.terms))))

    def equal_upto(self, other: "Form", order: int) -> bool:
        return (self - other).truncate(order).is_zero()

    # -- maps
    def map_coeffs(self, fn, valid_order: int | None = None) -> "Form":
        """Apply a Jet -> Jet map to every coefficient."""
        out = {}
        v = self.valid_order if valid_order is None else valid_order
        for m, p in self.terms.items():
            j = fn(Jet(self.ring, p, self.valid_order))
            out[m] = j._p
            v = min(v, j.valid_order)
        return Form(self.ring, out, v)

    def conj_coeffs(self) -> "Form":
        bk = self.ring.backend
        return Form(self.ring, {m: bk.conj(self.ring, p) for m, p in self.terms.items()}, self.valid_order)

    def contract(self, param: str) -> "Form":
        """Interior product with ``∂/∂param`` from the left: ``dπ ∧ α + β ↦ α``."""
        bit = 1 << self.ring.param_index[param]
        out = {}
        bk = self.ring.backend
        for m, p in self.terms.items():
            if m & bit:
                sign = -1 if popcount(m & (bit - 1)) & 1 else 1
                out[m ^ bit] = p if sign > 0 else bk.neg(self.ring, p)
        return Form(self.ring, out, self.valid_order)

    def drop_param(self, param: str) -> "Form":
        """Terms without ``dπ``."""
        bit = 1 << self.ring.param_index[param]
        return Form(self.ring, {m: p for m, p in self.terms.items() if not m & bit}, self.valid_order)

    def to_numeric(self) -> "Form":
        return Form(
            self.ring.numeric(),
            {m: j.to_numeric()._p for m, j in self.coeffs().items()},
            self.valid_order,
        )

    def star(self) -> "Form":
        return star(self)

    def d(self, which: str = "total") -> "Form":
        return exterior_derivative(self, which)

    def __repr__(self):
        if not self.terms:
            return f"Form(0; valid<={self.valid_order})"
        parts = []
        for m in sorted(self.terms):
            parts.append(f"[{self.coef(m)!r}]{_mask_name(self.ring, m)}")
        return "Form(" + " + ".join(parts) + f"; valid<={self.valid_order})"


def _mask_name(ring: JetRing, mask: int) -> str:
    names = [f"dz{i+1}" for i in range(ring.n)] + [f"dzb{i+1}" for i in range(ring.n)]
    names += [f"d{p.name}" for p in ring.params]
    sel = [names[i] for i in range(len(names)) if mask >> i & 1]
    return "^".join(sel) if sel else "1"


def _combine(a: Form, b: Form, sign: int) -> Form:
    ring = a.ring
    bk = ring.backend
    v = min(a.valid_order, b.valid_order)
    out = dict(a.terms)
    for m, p in b.terms.items():
        if m in out:
            out[m] = bk.add(ring, out[m], p) if sign > 0 else bk.sub(ring, out[m], p)
        else:
            out[m] = p if sign > 0 else bk.neg(ring, p)
    if v < max(a.valid_order, b.valid_order):
        out = {m: bk.normalize(ring, p, v) for m, p in out.items()}
    return Form(ring, out, v)


def wedge_raw(ring: JetRing, a: Mapping[int, object], b: Mapping[int, object], acc: dict | None = None) -> dict:
    """Unnormalized wedge of raw term maps, accumulated into ``acc``."""
    bk = ring.backend
    out = {} if acc is None else acc
    for ma, pa in a.items():
        for mb, pb in b.items():
            s = wedge_sign(ma, mb)
            if not s:
                continue
            prod = bk.mul_raw(ring, pa, pb)
            m = ma | mb
            if s < 0:
                out[m] = bk.sub(ring, out[m], prod) if m in out else bk.neg(ring, prod)
            else:
                out[m] = bk.add(ring, out[m], prod) if m in out else prod
    return out


def wedge(a: Form, b: Form) -> Form:
    a._check(b)
    ring = a.ring
    v = min(a.valid_order, b.valid_order)
    raw = wedge_raw(ring, a.terms, b.terms)
    bk = ring.backend
    return Form(ring, {m: bk.normalize(ring, p, v) for m, p in raw.items()}, v)


def _derivative_slots(ring: JetRing, which: str) -> list[int]:
    n = ring.n
    if which == "del":
        return list(range(n))
    if which == "delbar":
        return list(range(n, 2 * n))
    if which == "dX":
        return list(range(2 * n))
    if which == "dparam":
        return [2 * n + k for k in range(len(ring.params))]
    if which == "total":
        return list(range(2 * n + len(ring.params)))
    if which.startswith("d") and which[1:] in ring.param_index:
        return [ring.param_index[which[1:]]]
    if which in ring.param_index:
        return [ring.param_index[which]]
    raise ValueError(f"unknown differential {which!r}")


def exterior_derivative(a: Form, which: str = "total") -> Form:
    """``which``: ``del``, ``delbar``, ``dX``, ``dparam`` (all parameters),
    ``total``, or a single parameter name."""
    ring = a.ring
    slots = _derivative_slots(ring, which)
    lowers = any(ring.is_counted(i) for i in slots)
    if lowers and a.terms and a.valid_order < 1:
        raise PrecisionError("exterior derivative of a form with valid_order 0")
    v = a.valid_order - 1 if lowers else a.valid_order
    bk = ring.backend
    out: dict[int, object] = {}
    for m, p in a.terms.items():
        for i in slots:
            bit = 1 << i
            if m & bit:
                continue
            dp = bk.derivative(ring, p, i)
            if bk.is_zero(ring, dp):
                continue
            s = wedge_sign(bit, m)
            key = m | bit
            if s < 0:
                out[key] = bk.sub(ring, out[key], dp) if key in out else bk.neg(ring, dp)
            else:
                out[key] = bk.add(ring, out[key], dp) if key in out else dp
    return Form(ring, {m: bk.normalize(ring, p, v) for m, p in out.items()}, v)


@lru_cache(maxsize=None)
def _star_mask(n: int, mask: int) -> tuple[int, int]:
    lo = (1 << n) - 1
    I = mask & lo
    J = (mask >> n) & lo
    rest = mask >> (2 * n)
    ni, nj = popcount(I), popcount(J)
    k = popcount(mask)
    kx = ni + nj
    e = k * (k - 1) // 2 + kx + ni * nj
    new = J | (I << n) | (rest << (2 * n))
    return new, (-1 if e & 1 else 1)


def star(a: Form) -> Form:
    """Conjugate-linear anti-involution with ``f* = conj f``, ``dz* = -dzb``,
    ``dzb* = -dz`` and ``dπ* = dπ``.

    On pure X-forms of degree k this is ``(-1)^{k(k+1)/2}`` times the complex
    conjugate.
    """
    ring = a.ring
    bk = ring.backend
    out = {}
    for m, p in a.terms.items():
        new, s = _star_mask(ring.n, m)
        c = bk.conj(ring, p)
        out[new] = c if s > 0 else bk.neg(ring, c)
    return Form(ring, out, a.valid_order)


def exotic_degree(ring: JetRing, mask: int) -> int:
    p, q, _ = Form.split_mask(ring, mask)
    return q - p


def exotic_decompose(a: Form) -> dict[int, Form]:
    out: dict[int, dict] = {}
    for m, p in a.terms.items():
        out.setdefault(exotic_degree(a.ring, m), {})[m] = p
    return {k: Form(a.ring, t, a.valid_order) for k, t in out.items()}
