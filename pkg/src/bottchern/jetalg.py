"""Truncated jets: the coefficient ring of every form and endomorphism.

A jet is a polynomial in chart variables ``z_i, zb_i`` and named parameters,
truncated at a total degree cap.  Chart variables always count toward the
cap.  A parameter either counts toward it too (``jet=True``, a local
direction expanded at a basepoint) or is a *free* polynomial/Laurent variable
that is never truncated (``jet=False``), used for exact integration and for
rescaling families.

Exact jets are stored as ``flint.fmpq_mpoly`` with an extra variable ``I``
for the imaginary unit; ``I`` powers are folded back to ``{1, I}`` whenever a
product is truncated.  Laurent parameters carry a companion inverse variable
that is cancelled in the same pass.  Numeric jets are plain dicts of complex
floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from numbers import Number
from typing import Mapping, Sequence

import flint

__all__ = [
    "JetError",
    "RingMismatchError",
    "ScalarModeError",
    "LaurentUnderflowError",
    "NonInvertibleError",
    "PrecisionError",
    "Scalar",
    "Param",
    "JetRing",
    "Jet",
    "jet_arith",
    "jet_invert",
    "jet_derivative",
    "jet_conj",
    "jet_integrate_param",
]


class JetError(Exception):
    pass


class RingMismatchError(JetError, ValueError):
    pass


class ScalarModeError(JetError, TypeError):
    pass


class LaurentUnderflowError(JetError, ArithmeticError):
    pass


class NonInvertibleError(JetError, ArithmeticError):
    pass


class PrecisionError(JetError, ValueError):
    """Raised when a chart derivative would need more jet order than is left."""


# --------------------------------------------------------------------------
# scalars


def _to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, flint.fmpq):
        return Fraction(int(x.p), int(x.q))
    if isinstance(x, str):
        return Fraction(x)
    raise ScalarModeError(f"cannot use {x!r} as an exact rational")


class Scalar:
    """A Gaussian rational (exact mode) or a complex float (numeric mode)."""

    __slots__ = ("re", "im", "exact")

    def __init__(self, re=0, im=0, exact: bool = True):
        if exact:
            self.re = _to_fraction(re)
            self.im = _to_fraction(im)
        else:
            self.re = float(re)
            self.im = float(im)
        self.exact = exact

    @classmethod
    def coerce(cls, x, exact: bool = True) -> "Scalar":
        if isinstance(x, Scalar):
            if x.exact != exact:
                raise ScalarModeError("exact and numeric scalars cannot be mixed")
            return x
        if isinstance(x, complex):
            if exact:
                raise ScalarModeError("complex float given where an exact scalar is required")
            return cls(x.real, x.imag, False)
        if isinstance(x, float) and exact:
            raise ScalarModeError("float given where an exact scalar is required")
        if isinstance(x, (Number, str, flint.fmpq)):
            return cls(x, 0, exact)
        raise ScalarModeError(f"not a scalar: {x!r}")

    @classmethod
    def parse(cls, text: str) -> "Scalar":
        """Parse ``"a/b"``, ``"a/b+c/d i"`` or ``"c/d i"``."""
        s = text.replace(" ", "")
        if not s.endswith("i"):
            return cls(Fraction(s), 0)
        body = s[:-1]
        # split at the last sign that is not the leading one or part of an exponent
        cut = max(body.rfind("+", 1), body.rfind("-", 1))
        if cut <= 0:
            im = body if body not in ("", "+", "-") else body + "1"
            return cls(0, Fraction(im))
        re_part, im_part = body[:cut], body[cut:]
        if im_part in ("+", "-"):
            im_part += "1"
        return cls(Fraction(re_part), Fraction(im_part))

    def _check(self, other: "Scalar"):
        if self.exact != other.exact:
            raise ScalarModeError("exact and numeric scalars cannot be mixed")

    def __add__(self, other):
        other = Scalar.coerce(other, self.exact)
        return Scalar(self.re + other.re, self.im + other.im, self.exact)

    __radd__ = __add__

    def __sub__(self, other):
        other = Scalar.coerce(other, self.exact)
        return Scalar(self.re - other.re, self.im - other.im, self.exact)

    def __rsub__(self, other):
        return Scalar.coerce(other, self.exact) - self

    def __neg__(self):
        return Scalar(-self.re, -self.im, self.exact)

    def __mul__(self, other):
        other = Scalar.coerce(other, self.exact)
        return Scalar(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
            self.exact,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Scalar.coerce(other, self.exact)
        den = other.re * other.re + other.im * other.im
        if den == 0:
            raise ZeroDivisionError("division by zero scalar")
        num = self * other.conj()
        return Scalar(num.re / den, num.im / den, self.exact)

    def conj(self) -> "Scalar":
        return Scalar(self.re, -self.im, self.exact)

    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def __abs__(self) -> float:
        return math.hypot(float(self.re), float(self.im))

    def __complex__(self) -> complex:
        return complex(float(self.re), float(self.im))

    def __eq__(self, other):
        try:
            other = Scalar.coerce(other, self.exact)
        except ScalarModeError:
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im, self.exact))

    def to_numeric(self) -> "Scalar":
        return Scalar(float(self.re), float(self.im), False)

    def __str__(self):
        if not self.exact:
            return repr(complex(self.re, self.im))
        if self.im == 0:
            return str(self.re)
        if self.re == 0:
            return f"{self.im} i"
        sign = "+" if self.im > 0 else "-"
        return f"{self.re}{sign}{abs(self.im)} i"

    def __repr__(self):
        return f"Scalar({self})"


# --------------------------------------------------------------------------
# ring descriptor


@dataclass(frozen=True)
class Param:
    """A named parameter.  ``jet=True`` makes it a truncated local direction."""

    name: str
    laurent_floor: int = 0
    jet: bool = False

    def __post_init__(self):
        if self.laurent_floor > 0:
            raise ValueError("laurent_floor must be <= 0")
        if self.jet and self.laurent_floor != 0:
            raise ValueError("a jet parameter cannot carry Laurent powers")


@dataclass(frozen=True)
class JetRing:
    """Chart dimension ``n``, parameters, degree cap ``order`` and scalar mode."""

    n: int
    params: tuple[Param, ...] = ()
    order: int = 4
    exact: bool = True

    def __post_init__(self):
        if self.n < 0 or self.order < 0:
            raise ValueError("n and order must be non-negative")
        object.__setattr__(self, "params", tuple(self.params))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")

    # -- layout of public exponent vectors: (z_1..z_n, zb_1..zb_n, params...)
    @property
    def nexp(self) -> int:
        return 2 * self.n + len(self.params)

    @cached_property
    def param_index(self) -> dict[str, int]:
        return {p.name: 2 * self.n + k for k, p in enumerate(self.params)}

    @cached_property
    def counted(self) -> tuple[int, ...]:
        """Exponent slots that count toward the degree cap."""
        idx = list(range(2 * self.n))
        idx += [2 * self.n + k for k, p in enumerate(self.params) if p.jet]
        return tuple(idx)

    @cached_property
    def laurent(self) -> tuple[int, ...]:
        return tuple(k for k, p in enumerate(self.params) if p.laurent_floor < 0)

    def var_index(self, var) -> int:
        """Resolve ``('z', i)``, ``('zb', i)``, ``'z1'``, ``'zb1'`` or a parameter name."""
        if isinstance(var, tuple):
            kind, i = var
            if kind == "z":
                return i
            if kind == "zb":
                return self.n + i
            raise KeyError(var)
        if isinstance(var, int):
            return var
        if var in self.param_index:
            return self.param_index[var]
        if var.startswith("zb") and var[2:].isdigit():
            return self.n + int(var[2:]) - 1
        if var.startswith("z") and var[1:].isdigit():
            return int(var[1:]) - 1
        raise KeyError(f"unknown variable {var!r}")

    def is_chart(self, idx: int) -> bool:
        return idx < 2 * self.n

    def is_counted(self, idx: int) -> bool:
        return idx in self.counted

    def degree(self, mon: Sequence[int]) -> int:
        return sum(mon[i] for i in self.counted)

    def with_params(self, *extra: Param) -> "JetRing":
        return JetRing(self.n, self.params + tuple(extra), self.order, self.exact)

    def with_order(self, order: int) -> "JetRing":
        return JetRing(self.n, self.params, order, self.exact)

    def numeric(self) -> "JetRing":
        return JetRing(self.n, self.params, self.order, False)

    # -- flint context for exact mode
    @cached_property
    def _ctx(self):
        names = [f"z{i+1}" for i in range(self.n)]
        names += [f"zb{i+1}" for i in range(self.n)]
        names += [f"p_{p.name}" for p in self.params]
        names += [f"u_{self.params[k].name}" for k in self.laurent]
        names.append("I")
        return flint.fmpq_mpoly_ctx.get(tuple(names), "lex")

    @cached_property
    def _nint(self) -> int:
        return self.nexp + len(self.laurent) + 1

    @cached_property
    def _conj_images(self):
        gens = self._ctx.gens()
        n = self.n
        imgs = list(gens)
        for i in range(n):
            imgs[i], imgs[n + i] = gens[n + i], gens[i]
        imgs[-1] = -gens[-1]
        return imgs

    @property
    def backend(self):
        return _EXACT if self.exact else _NUMERIC


# --------------------------------------------------------------------------
# backends operate on raw polynomial payloads; Jet and Form wrap them


class _ExactBackend:
    """Payload: ``fmpq_mpoly`` over the ring context, normalized."""

    @staticmethod
    def zero(ring):
        return ring._ctx.from_dict({})

    @staticmethod
    def const(ring, s: Scalar):
        d = {}
        base = [0] * ring._nint
        if s.re:
            d[tuple(base)] = flint.fmpq(s.re.numerator, s.re.denominator)
        if s.im:
            base[-1] = 1
            d[tuple(base)] = flint.fmpq(s.im.numerator, s.im.denominator)
        return ring._ctx.from_dict(d)

    @staticmethod
    def from_terms(ring, terms: Mapping[tuple, Scalar], valid: int):
        out = {}
        nexp = ring.nexp
        nl = len(ring.laurent)
        for mon, c in terms.items():
            c = Scalar.coerce(c, True)
            if c.is_zero():
                continue
            if len(mon) != nexp:
                raise ValueError(f"exponent vector {mon} has wrong length")
            if any(mon[i] < 0 for i in range(2 * ring.n)):
                raise ValueError("negative chart exponent")
            if ring.degree(mon) > valid:
                continue
            internal = list(mon) + [0] * (nl + 1)
            for j, k in enumerate(ring.laurent):
                slot = 2 * ring.n + k
                e = mon[slot]
                if e < ring.params[k].laurent_floor:
                    raise LaurentUnderflowError(f"power {e} below floor of {ring.params[k].name}")
                if e < 0:
                    internal[slot] = 0
                    internal[nexp + j] = -e
            for k, p in enumerate(ring.params):
                if p.laurent_floor == 0 and mon[2 * ring.n + k] < 0:
                    raise LaurentUnderflowError(f"negative power of polynomial parameter {p.name}")
            if c.re:
                out[tuple(internal)] = flint.fmpq(c.re.numerator, c.re.denominator)
            if c.im:
                internal[-1] = 1
                out[tuple(internal)] = flint.fmpq(c.im.numerator, c.im.denominator)
        return ring._ctx.from_dict(out)

    @staticmethod
    def terms(ring, p) -> dict[tuple, Scalar]:
        nexp = ring.nexp
        out: dict[tuple, list] = {}
        for mon, c in p.to_dict().items():
            pub = [int(e) for e in mon[:nexp]]
            for j, k in enumerate(ring.laurent):
                slot = 2 * ring.n + k
                pub[slot] -= int(mon[nexp + j])
            key = tuple(pub)
            acc = out.setdefault(key, [Fraction(0), Fraction(0)])
            acc[int(mon[-1])] += Fraction(int(c.p), int(c.q))
        return {k: Scalar(v[0], v[1]) for k, v in out.items()}

    @staticmethod
    def normalize(ring, p, valid: int):
        """Truncate to ``valid``, fold ``I**k``, cancel Laurent pairs."""
        counted = ring.counted
        lau = ring.laurent
        nexp = ring.nexp
        ncut = 2 * ring.n
        out: dict[tuple, object] = {}
        for mon, c in p.to_dict().items():
            deg = 0
            for i in counted:
                deg += mon[i]
            if deg > valid:
                continue
            k = mon[-1] & 3
            if k >= 2:
                c = -c
            m = list(mon)
            m[-1] = k & 1
            for j, q in enumerate(lau):
                slot = ncut + q
                a, b = m[slot], m[nexp + j]
                if a and b:
                    e = a - b
                    m[slot], m[nexp + j] = (e, 0) if e >= 0 else (0, -e)
                if m[nexp + j] > -ring.params[q].laurent_floor:
                    raise LaurentUnderflowError(
                        f"power -{m[nexp + j]} below floor of {ring.params[q].name}"
                    )
            key = tuple(m)
            if key in out:
                out[key] += c
            else:
                out[key] = c
        return ring._ctx.from_dict({k: v for k, v in out.items() if v != 0})

    @staticmethod
    def needs_normalize(ring) -> bool:
        return True

    @staticmethod
    def add(ring, a, b):
        return a + b

    @staticmethod
    def sub(ring, a, b):
        return a - b

    @staticmethod
    def neg(ring, a):
        return -a

    @staticmethod
    def mul_raw(ring, a, b):
        return a * b

    @staticmethod
    def scale(ring, a, s: Scalar):
        return a * _ExactBackend.const(ring, s)

    @staticmethod
    def scale_int(ring, a, k: int):
        return a * k

    @staticmethod
    def is_zero(ring, a) -> bool:
        return a.is_zero()

    @staticmethod
    def equal(ring, a, b) -> bool:
        return a == b

    @staticmethod
    def conj(ring, a):
        return a.compose(*ring._conj_images)

    @staticmethod
    def derivative(ring, a, idx: int):
        d = a.derivative(idx)
        if ring.is_chart(idx):
            return d
        k = idx - 2 * ring.n
        if k in ring.laurent:
            j = ring.laurent.index(k)
            uvar = ring.nexp + j
            du = a.derivative(uvar)
            if not du.is_zero():
                u = ring._ctx.gens()[uvar]
                # d/dt u^b = -b u^(b+1)
                d = d - u * u * du
        return d

    @staticmethod
    def max_abs(ring, a) -> float:
        best = 0.0
        for c in _ExactBackend.terms(ring, a).values():
            best = max(best, abs(c))
        return best


class _NumericBackend:
    """Payload: dict from public exponent tuple to complex."""

    @staticmethod
    def zero(ring):
        return {}

    @staticmethod
    def const(ring, s: Scalar):
        c = complex(s)
        return {(0,) * ring.nexp: c} if c else {}

    @staticmethod
    def from_terms(ring, terms, valid):
        out = {}
        for mon, c in terms.items():
            c = complex(Scalar.coerce(c, False))
            if c == 0:
                continue
            if len(mon) != ring.nexp:
                raise ValueError(f"exponent vector {mon} has wrong length")
            _NumericBackend._check_floor(ring, mon)
            if ring.degree(mon) > valid:
                continue
            out[tuple(mon)] = out.get(tuple(mon), 0) + c
        return out

    @staticmethod
    def _check_floor(ring, mon):
        base = 2 * ring.n
        for k, p in enumerate(ring.params):
            if mon[base + k] < p.laurent_floor:
                raise LaurentUnderflowError(f"power {mon[base + k]} below floor of {p.name}")

    @staticmethod
    def terms(ring, p):
        return {k: Scalar(v.real, v.imag, False) for k, v in p.items()}

    @staticmethod
    def normalize(ring, p, valid):
        return {k: v for k, v in p.items() if v != 0 and ring.degree(k) <= valid}

    @staticmethod
    def add(ring, a, b):
        out = dict(a)
        for k, v in b.items():
            out[k] = out.get(k, 0) + v
        return out

    @staticmethod
    def sub(ring, a, b):
        out = dict(a)
        for k, v in b.items():
            out[k] = out.get(k, 0) - v
        return out

    @staticmethod
    def neg(ring, a):
        return {k: -v for k, v in a.items()}

    @staticmethod
    def mul_raw(ring, a, b):
        out: dict = {}
        for ka, va in a.items():
            for kb, vb in b.items():
                key = tuple(x + y for x, y in zip(ka, kb))
                out[key] = out.get(key, 0) + va * vb
        for k in out:
            _NumericBackend._check_floor(ring, k)
        return out

    @staticmethod
    def scale(ring, a, s: Scalar):
        c = complex(s)
        return {k: v * c for k, v in a.items()}

    @staticmethod
    def scale_int(ring, a, k: int):
        return {m: v * k for m, v in a.items()}

    @staticmethod
    def is_zero(ring, a):
        return all(v == 0 for v in a.values())

    @staticmethod
    def equal(ring, a, b):
        return _NumericBackend.is_zero(ring, _NumericBackend.sub(ring, a, b))

    @staticmethod
    def conj(ring, a):
        n = ring.n
        out = {}
        for k, v in a.items():
            key = k[n : 2 * n] + k[:n] + k[2 * n :]
            out[key] = v.conjugate()
        return out

    @staticmethod
    def derivative(ring, a, idx):
        out = {}
        for k, v in a.items():
            e = k[idx]
            if e == 0:
                continue
            key = list(k)
            key[idx] -= 1
            key = tuple(key)
            out[key] = out.get(key, 0) + e * v
        for k in out:
            _NumericBackend._check_floor(ring, k)
        return out

    @staticmethod
    def max_abs(ring, a):
        return max((abs(v) for v in a.values()), default=0.0)


_EXACT = _ExactBackend()
_NUMERIC = _NumericBackend()


# --------------------------------------------------------------------------
# jets


_SCALAR_TYPES = (Number, Scalar, str, flint.fmpq)


class Jet:
    """Immutable truncated jet.  ``valid_order`` records how much of the
    expansion is still trustworthy after derivatives."""

    __slots__ = ("ring", "_p", "valid_order")

    def __init__(self, ring: JetRing, payload=None, valid_order: int | None = None):
        self.ring = ring
        self.valid_order = ring.order if valid_order is None else valid_order
        self._p = ring.backend.zero(ring) if payload is None else payload

    # -- constructors
    @classmethod
    def from_terms(cls, ring: JetRing, terms: Mapping[tuple, object], valid_order=None) -> "Jet":
        v = ring.order if valid_order is None else valid_order
        return cls(ring, ring.backend.from_terms(ring, terms, v), v)

    @classmethod
    def const(cls, ring: JetRing, value=1) -> "Jet":
        return cls(ring, ring.backend.const(ring, Scalar.coerce(value, ring.exact)))

    @classmethod
    def var(cls, ring: JetRing, name) -> "Jet":
        idx = ring.var_index(name)
        mon = [0] * ring.nexp
        mon[idx] = 1
        return cls.from_terms(ring, {tuple(mon): 1 if ring.exact else 1.0})

    @classmethod
    def zero(cls, ring: JetRing) -> "Jet":
        return cls(ring)

    # -- inspection
    def terms(self) -> dict[tuple, Scalar]:
        return self.ring.backend.terms(self.ring, self._p)

    def is_zero(self) -> bool:
        return self.ring.backend.is_zero(self.ring, self._p)

    def constant_term(self) -> Scalar:
        return self.terms().get((0,) * self.ring.nexp, Scalar(0, 0, self.ring.exact))

    def coefficient(self, mon: tuple) -> Scalar:
        return self.terms().get(tuple(mon), Scalar(0, 0, self.ring.exact))

    def max_abs(self) -> float:
        return self.ring.backend.max_abs(self.ring, self._p)

    def truncate(self, order: int) -> "Jet":
        v = min(order, self.valid_order)
        return Jet(self.ring, self.ring.backend.normalize(self.ring, self._p, v), v)

    # -- arithmetic
    def _check(self, other: "Jet"):
        if other.ring.exact != self.ring.exact:
            raise ScalarModeError("exact and numeric jets cannot be mixed")
        if other.ring != self.ring:
            raise RingMismatchError("jets live in different rings")

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            self._check(other)
            return other
        return Jet.const(self.ring, other)

    def __add__(self, other):
        if not isinstance(other, (Jet,) + _SCALAR_TYPES):
            return NotImplemented
        other = self._lift(other)
        v = min(self.valid_order, other.valid_order)
        p = self.ring.backend.add(self.ring, self._p, other._p)
        if v < max(self.valid_order, other.valid_order):
            p = self.ring.backend.normalize(self.ring, p, v)
        return Jet(self.ring, p, v)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.ring, self.ring.backend.neg(self.ring, self._p), self.valid_order)

    def __sub__(self, other):
        if not isinstance(other, (Jet,) + _SCALAR_TYPES):
            return NotImplemented
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            if not isinstance(other, _SCALAR_TYPES):
                return NotImplemented
            s = Scalar.coerce(other, self.ring.exact)
            return Jet(self.ring, self.ring.backend.scale(self.ring, self._p, s), self.valid_order)
        self._check(other)
        v = min(self.valid_order, other.valid_order)
        bk = self.ring.backend
        return Jet(self.ring, bk.normalize(self.ring, bk.mul_raw(self.ring, self._p, other._p), v), v)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            return jet_invert(self) ** (-k)
        out = Jet.const(self.ring, 1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if not isinstance(other, Jet):
            other = Jet.const(self.ring, other)
        if other.ring != self.ring:
            return False
        return (self - other).is_zero()

    def __hash__(self):
        return hash((self.ring, tuple(sorted(self.terms()))))

    def conj(self) -> "Jet":
        return jet_conj(self)

    def diff(self, var) -> "Jet":
        return jet_derivative(self, var)

    def subs(self, values: Mapping[str, object]) -> "Jet":
        return jet_subs(self, values)

    def to_numeric(self) -> "Jet":
        ring = self.ring.numeric()
        terms = {k: v.to_numeric() for k, v in self.terms().items()}
        return Jet.from_terms(ring, terms, self.valid_order)

    def __repr__(self):
        return f"Jet({_fmt_terms(self.ring, self.terms())}; valid<={self.valid_order})"


def _fmt_terms(ring: JetRing, terms: Mapping[tuple, Scalar]) -> str:
    if not terms:
        return "0"
    names = [f"z{i+1}" for i in range(ring.n)] + [f"zb{i+1}" for i in range(ring.n)]
    names += [p.name for p in ring.params]
    parts = []
    for mon in sorted(terms):
        c = terms[mon]
        mono = "*".join(
            (nm if e == 1 else f"{nm}^{e}") for nm, e in zip(names, mon) if e != 0
        )
        parts.append(f"({c})" + (f"*{mono}" if mono else ""))
    return " + ".join(parts)


# --------------------------------------------------------------------------
# operations


def jet_arith(a: Jet, b: Jet, op: str) -> Jet:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise ValueError(f"unknown op {op!r}")


def _nilpotent_split(a: Jet):
    ring = a.ring
    base = 2 * ring.n
    c = a.constant_term()
    for mon in a.terms():
        for k, p in enumerate(ring.params):
            e = mon[base + k]
            if e < 0:
                raise NonInvertibleError("cannot invert a jet with negative parameter powers")
            if e > 0 and not p.jet and ring.degree(mon) == 0:
                raise NonInvertibleError(
                    f"unit part depends on free parameter {p.name}; inverse is not a jet"
                )
    return c


def jet_invert(a: Jet) -> Jet:
    """Inverse by Newton iteration ``x <- x (2 - a x)`` from the constant term."""
    c = _nilpotent_split(a)
    if c.is_zero():
        raise NonInvertibleError("constant term is zero")
    ring = a.ring
    x = Jet.const(ring, Scalar(1, 0, ring.exact) / c)
    x = Jet(ring, x._p, a.valid_order)
    two = Jet.const(ring, 2)
    # each step doubles the correct order: 1, 2, 4, ...
    reach = 1
    while reach <= a.valid_order:
        x = x * (two - a * x)
        reach *= 2
    return x


def jet_derivative(a: Jet, var) -> Jet:
    ring = a.ring
    idx = ring.var_index(var)
    counted = ring.is_counted(idx)
    if counted and a.valid_order < 1:
        raise PrecisionError("derivative of a jet with valid_order 0")
    v = a.valid_order - 1 if counted else a.valid_order
    return Jet(ring, ring.backend.derivative(ring, a._p, idx), v)


def jet_conj(a: Jet) -> Jet:
    return Jet(a.ring, a.ring.backend.conj(a.ring, a._p), a.valid_order)


def jet_integrate_param(a: Jet, param: str, lo=0, hi=1) -> Jet:
    """Exact definite integral in a free polynomial parameter."""
    ring = a.ring
    idx = ring.param_index[param]
    pobj = ring.params[idx - 2 * ring.n]
    if pobj.jet:
        raise ValueError(f"{param} is a truncated jet direction; integrate over a free parameter")
    lo = Scalar.coerce(lo, ring.exact)
    hi = Scalar.coerce(hi, ring.exact)
    out: dict[tuple, Scalar] = {}
    for mon, c in a.terms().items():
        e = mon[idx]
        if e < 0:
            raise LaurentUnderflowError(
                f"Laurent dependence on {param}; use numeric quadrature instead"
            )
        f = e + 1
        val = c * (_spow(hi, f) - _spow(lo, f)) * Scalar.coerce(Fraction(1, f) if ring.exact else 1.0 / f, ring.exact)
        key = list(mon)
        key[idx] = 0
        key = tuple(key)
        out[key] = out.get(key, Scalar(0, 0, ring.exact)) + val
    return Jet.from_terms(ring, out, a.valid_order)


def _spow(s: Scalar, k: int) -> Scalar:
    out = Scalar(1, 0, s.exact)
    for _ in range(k):
        out = out * s
    return out


def jet_subs(a: Jet, values: Mapping[str, object]) -> Jet:
    """Substitute scalar values for parameters (the result keeps the same ring)."""
    ring = a.ring
    idxs = {ring.param_index[k]: Scalar.coerce(v, ring.exact) for k, v in values.items()}
    out: dict[tuple, Scalar] = {}
    for mon, c in a.terms().items():
        key = list(mon)
        for i, s in idxs.items():
            e = key[i]
            if e < 0:
                if s.is_zero():
                    raise ZeroDivisionError("Laurent term evaluated at zero")
                c = c / _spow(s, -e)
            else:
                c = c * _spow(s, e)
            key[i] = 0
        key = tuple(key)
        out[key] = out.get(key, Scalar(0, 0, ring.exact)) + c
    return Jet.from_terms(ring, out, a.valid_order)


def jet_recenter(a: Jet, target: JetRing, mapping: Mapping[str, tuple[str, object]] | None = None) -> Jet:
    """Re-express ``a`` in ``target``.

    ``mapping`` sends a parameter ``name`` of ``a.ring`` to ``(new_name, value)``
    meaning ``name = value + new_name``; this is how a polynomial family is
    expanded around a basepoint as a jet in a local parameter.  Parameters
    missing from ``mapping`` keep their names.  ``new_name`` may be ``None``
    to substitute the value outright.
    """
    mapping = dict(mapping or {})
    src = a.ring
    if target.n != src.n or target.exact != src.exact:
        raise RingMismatchError("chart dimension and scalar mode must agree")
    n2 = 2 * src.n
    out: dict[tuple, Scalar] = {}
    zero = Scalar(0, 0, src.exact)
    for mon, c in a.terms().items():
        partial = {tuple(mon[:n2]) + (0,) * len(target.params): c}
        for k, p in enumerate(src.params):
            e = mon[n2 + k]
            if e == 0:
                continue
            new_name, value = mapping.get(p.name, (p.name, 0))
            value = Scalar.coerce(value, src.exact)
            if new_name is None:
                factor = {0: _spow(value, e) if e >= 0 else Scalar(1, 0, src.exact) / _spow(value, -e)}
            elif value.is_zero():
                factor = {e: Scalar(1, 0, src.exact)}
            else:
                if e < 0:
                    raise ValueError("cannot recenter a Laurent parameter")
                factor = {j: Scalar(math.comb(e, j), 0, src.exact) * _spow(value, e - j) for j in range(e + 1)}
            slot = target.param_index[new_name] if new_name is not None else None
            nxt: dict[tuple, Scalar] = {}
            for m2, c2 in partial.items():
                for j, f in factor.items():
                    key = list(m2)
                    if slot is not None:
                        key[slot] += j
                    key = tuple(key)
                    nxt[key] = nxt.get(key, zero) + c2 * f
            partial = nxt
        for m2, c2 in partial.items():
            out[m2] = out.get(m2, zero) + c2
    return Jet.from_terms(target, out, min(a.valid_order, target.order))


def embed(a: Jet, target: JetRing) -> Jet:
    """Embed a jet into a ring with extra parameters (same names keep their slots)."""
    return jet_recenter(a, target)
