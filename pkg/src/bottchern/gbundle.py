"""Graded bundles, End-valued forms, supertraces and Hermitian metrics.

Conventions
-----------
An ``EndForm`` is stored as a matrix ``M`` over a homogeneous frame
``e_1..e_r`` (degrees ``d_1..d_r``) acting on the right module of
form-valued sections::

    A(e_j) = sum_i e_i M_ij

so composition is plain matrix-of-forms multiplication.  Left multiplication
by a form ``w`` is the operator with entries ``(-1)^{|w| d_i} w ∧ M_ij``.
The total degree of an entry term is its form degree plus ``d_i - d_j``.
"""

from __future__ import annotations

from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .forms import Form, popcount, star, wedge_raw, exterior_derivative, _star_mask
from .jetalg import (
    Jet,
    JetRing,
    NonInvertibleError,
    RingMismatchError,
    Scalar,
    ScalarModeError,
)

__all__ = [
    "GradedBundle",
    "EndForm",
    "SectionForm",
    "HermitianMetric",
    "BundleMismatchError",
    "MetricError",
    "endform_mul",
    "supercommutator",
    "supertrace",
    "adjoint",
    "metric_pairing",
    "series_eval",
    "directional_eval",
    "grading_operator",
    "endform_inverse",
    "dcomm",
]


class BundleMismatchError(ValueError):
    pass


class MetricError(ValueError):
    pass


class GradedBundle:
    """A Z-graded frame.  ``degrees[i]`` is the degree of frame vector ``i``."""

    __slots__ = ("degrees",)

    def __init__(self, ranks: Mapping[int, int] | None = None, degrees: Sequence[int] | None = None):
        if (ranks is None) == (degrees is None):
            raise ValueError("give exactly one of ranks or degrees")
        if ranks is not None:
            if any(r < 0 for r in ranks.values()):
                raise ValueError("ranks must be non-negative")
            degrees = [d for d in sorted(ranks) for _ in range(ranks[d])]
        degrees = tuple(int(d) for d in degrees)
        if not degrees:
            raise ValueError("total rank must be at least 1")
        self.degrees = degrees

    @property
    def rank(self) -> int:
        return len(self.degrees)

    @property
    def ranks(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for d in self.degrees:
            out[d] = out.get(d, 0) + 1
        return dict(sorted(out.items()))

    def indices(self, d: int) -> list[int]:
        return [i for i, e in enumerate(self.degrees) if e == d]

    def shift(self, k: int = 1) -> "GradedBundle":
        """``E[k]``: degree ``d`` becomes ``d - k``."""
        return GradedBundle(degrees=[d - k for d in self.degrees])

    def __add__(self, other: "GradedBundle") -> "GradedBundle":
        return GradedBundle(degrees=self.degrees + other.degrees)

    def __eq__(self, other):
        return isinstance(other, GradedBundle) and self.degrees == other.degrees

    def __hash__(self):
        return hash(self.degrees)

    def __repr__(self):
        return f"GradedBundle({self.ranks})"


def _acc(bk, ring, out: dict, m: int, p, sign: int = 1):
    if m in out:
        out[m] = bk.add(ring, out[m], p) if sign > 0 else bk.sub(ring, out[m], p)
    else:
        out[m] = p if sign > 0 else bk.neg(ring, p)


class EndForm:
    """End(E)-valued form; ``entries[(i, j)]`` is a raw ``{mask: payload}`` map."""

    __slots__ = ("bundle", "ring", "entries", "valid_order")

    def __init__(self, bundle: GradedBundle, ring: JetRing, entries=None, valid_order: int | None = None):
        self.bundle = bundle
        self.ring = ring
        self.valid_order = ring.order if valid_order is None else valid_order
        bk = ring.backend
        clean = {}
        for ij, t in (entries or {}).items():
            t = {m: p for m, p in t.items() if not bk.is_zero(ring, p)}
            if t:
                clean[ij] = t
        self.entries = clean

    # -- constructors
    @classmethod
    def zero(cls, bundle, ring, valid_order=None) -> "EndForm":
        return cls(bundle, ring, {}, valid_order)

    @classmethod
    def identity(cls, bundle, ring) -> "EndForm":
        one = ring.backend.const(ring, Scalar.coerce(1, ring.exact))
        return cls(bundle, ring, {(i, i): {0: one} for i in range(bundle.rank)})

    @classmethod
    def from_matrix(cls, bundle: GradedBundle, ring: JetRing, rows) -> "EndForm":
        """``rows[i][j]`` may be a Form, a Jet, a scalar or ``None``/0."""
        r = bundle.rank
        if len(rows) != r or any(len(row) != r for row in rows):
            raise BundleMismatchError("matrix shape does not match the bundle rank")
        entries = {}
        v = ring.order
        for i in range(r):
            for j in range(r):
                x = rows[i][j]
                if x is None:
                    continue
                f = _as_form(ring, x)
                if f.is_zero():
                    continue
                entries[(i, j)] = f
                v = min(v, f.valid_order)
        bk = ring.backend
        return cls(
            bundle,
            ring,
            {ij: {m: bk.normalize(ring, p, v) for m, p in f.terms.items()} for ij, f in entries.items()},
            v,
        )

    @classmethod
    def from_blocks(cls, bundle: GradedBundle, ring: JetRing, blocks: Mapping[tuple[int, int], Sequence[Sequence]]) -> "EndForm":
        """``blocks[(a, b)]`` is the matrix of the component ``E^b -> E^a``."""
        r = bundle.rank
        rows = [[None] * r for _ in range(r)]
        for (a, b), mat in blocks.items():
            ia, ib = bundle.indices(a), bundle.indices(b)
            if len(mat) != len(ia) or any(len(row) != len(ib) for row in mat):
                raise BundleMismatchError(f"block ({a},{b}) has the wrong shape")
            for x, i in enumerate(ia):
                for y, j in enumerate(ib):
                    rows[i][j] = mat[x][y]
        return cls.from_matrix(bundle, ring, rows)

    @classmethod
    def tensor(cls, bundle: GradedBundle, ring: JetRing, L, tau: Form) -> "EndForm":
        """The operator ``L ⊗ tau`` for a scalar matrix ``L`` and homogeneous form ``tau``.

        ``tau`` acts by left multiplication, so ``(L ⊗ tau)(e_j) = L(e_j)`` times a
        Koszul sign ``(-1)^{|tau| d_j}``, coefficient ``tau``.
        """
        k = tau.degree()
        r = bundle.rank
        rows = [[None] * r for _ in range(r)]
        for i in range(r):
            for j in range(r):
                c = L[i][j]
                if c == 0 or c is None:
                    continue
                s = -1 if (k * bundle.degrees[j]) & 1 else 1
                f = _as_form(ring, c) * tau
                rows[i][j] = f if s > 0 else -f
        return cls.from_matrix(bundle, ring, rows)

    @classmethod
    def left_mul(cls, bundle: GradedBundle, omega: Form) -> "EndForm":
        """The operator of left multiplication by a homogeneous form."""
        L = [[1 if i == j else 0 for j in range(bundle.rank)] for i in range(bundle.rank)]
        return cls.tensor(bundle, omega.ring, L, omega)

    # -- inspection
    def entry(self, i: int, j: int) -> Form:
        return Form(self.ring, self.entries.get((i, j), {}), self.valid_order)

    def matrix(self) -> list[list[Form]]:
        r = self.bundle.rank
        return [[self.entry(i, j) for j in range(r)] for i in range(r)]

    def block(self, a: int, b: int) -> list[list[Form]]:
        return [[self.entry(i, j) for j in self.bundle.indices(b)] for i in self.bundle.indices(a)]

    def blocks(self) -> dict[tuple[int, int], list[list[Form]]]:
        out = {}
        degs = self.bundle.degrees
        for (i, j) in self.entries:
            key = (degs[i], degs[j])
            if key not in out:
                out[key] = self.block(*key)
        return out

    def is_zero(self) -> bool:
        return not self.entries

    def max_abs(self) -> float:
        bk = self.ring.backend
        return max(
            (bk.max_abs(self.ring, p) for t in self.entries.values() for p in t.values()),
            default=0.0,
        )

    def term_degrees(self) -> set[int]:
        degs = self.bundle.degrees
        return {popcount(m) + degs[i] - degs[j] for (i, j), t in self.entries.items() for m in t}

    def degree(self) -> int:
        """Total degree of a homogeneous EndForm."""
        ds = self.term_degrees()
        if len(ds) > 1:
            raise ValueError("EndForm is not homogeneous")
        return ds.pop() if ds else 0

    def parity_parts(self) -> tuple["EndForm", "EndForm"]:
        degs = self.bundle.degrees
        even, odd = {}, {}
        for (i, j), t in self.entries.items():
            for m, p in t.items():
                tgt = odd if (popcount(m) + degs[i] - degs[j]) & 1 else even
                tgt.setdefault((i, j), {})[m] = p
        return self._new(even), self._new(odd)

    def select(self, pred) -> "EndForm":
        """Keep terms for which ``pred(i, j, mask)`` holds."""
        out = {}
        for (i, j), t in self.entries.items():
            kept = {m: p for m, p in t.items() if pred(i, j, m)}
            if kept:
                out[(i, j)] = kept
        return self._new(out)

    def end_degree_part(self, d: int) -> "EndForm":
        degs = self.bundle.degrees
        return self.select(lambda i, j, m: degs[i] - degs[j] == d)

    def form_part(self, pred) -> "EndForm":
        """Keep terms whose form bidegree ``(p, q, m)`` satisfies ``pred``."""
        ring = self.ring
        return self.select(lambda i, j, m: pred(*Form.split_mask(ring, m)))

    def exotic_part(self, k: int) -> "EndForm":
        degs = self.bundle.degrees
        ring = self.ring

        def keep(i, j, m):
            p, q, _ = Form.split_mask(ring, m)
            return q - p + degs[i] - degs[j] == k

        return self.select(keep)

    def exotic_degrees(self) -> set[int]:
        degs = self.bundle.degrees
        out = set()
        for (i, j), t in self.entries.items():
            for m in t:
                p, q, _ = Form.split_mask(self.ring, m)
                out.add(q - p + degs[i] - degs[j])
        return out

    def _new(self, entries, valid_order=None) -> "EndForm":
        return EndForm(self.bundle, self.ring, entries, self.valid_order if valid_order is None else valid_order)

    def truncate(self, order: int) -> "EndForm":
        v = min(order, self.valid_order)
        bk = self.ring.backend
        return self._new(
            {ij: {m: bk.normalize(self.ring, p, v) for m, p in t.items()} for ij, t in self.entries.items()},
            v,
        )

    def map_forms(self, fn) -> "EndForm":
        """Apply a Form -> Form map entrywise."""
        out = {}
        v = self.valid_order
        for ij, t in self.entries.items():
            f = fn(Form(self.ring, t, self.valid_order))
            v = min(v, f.valid_order)
            out[ij] = f
        bk = self.ring.backend
        return EndForm(
            self.bundle,
            self.ring,
            {ij: {m: bk.normalize(self.ring, p, v) for m, p in f.terms.items()} for ij, f in out.items()},
            v,
        )

    def to_numeric(self) -> "EndForm":
        ring = self.ring.numeric()
        out = {ij: Form(self.ring, t, self.valid_order).to_numeric().terms for ij, t in self.entries.items()}
        return EndForm(self.bundle, ring, out, self.valid_order)

    # -- arithmetic
    def _check(self, other: "EndForm"):
        if not isinstance(other, EndForm):
            raise TypeError("expected an EndForm")
        if other.bundle != self.bundle:
            raise BundleMismatchError("EndForms on different bundles")
        if other.ring.exact != self.ring.exact:
            raise ScalarModeError("exact and numeric EndForms cannot be mixed")
        if other.ring != self.ring:
            raise RingMismatchError("EndForms over different rings")

    def _combine(self, other: "EndForm", sign: int) -> "EndForm":
        self._check(other)
        bk = self.ring.backend
        ring = self.ring
        v = min(self.valid_order, other.valid_order)
        out = {ij: dict(t) for ij, t in self.entries.items()}
        for ij, t in other.entries.items():
            tgt = out.setdefault(ij, {})
            for m, p in t.items():
                _acc(bk, ring, tgt, m, p, sign)
        if v < max(self.valid_order, other.valid_order):
            out = {ij: {m: bk.normalize(ring, p, v) for m, p in t.items()} for ij, t in out.items()}
        return self._new(out, v)

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        bk = self.ring.backend
        return self._new({ij: {m: bk.neg(self.ring, p) for m, p in t.items()} for ij, t in self.entries.items()})

    def scale(self, s) -> "EndForm":
        bk = self.ring.backend
        s = Scalar.coerce(s, self.ring.exact)
        return self._new({ij: {m: bk.scale(self.ring, p, s) for m, p in t.items()} for ij, t in self.entries.items()})

    def __mul__(self, other):
        if isinstance(other, EndForm):
            return endform_mul(self, other)
        if isinstance(other, Form):
            return self.right_wedge(other)
        return self.scale(other)

    def __rmul__(self, other):
        if isinstance(other, (EndForm, Form)):
            return NotImplemented
        return self.scale(other)

    def __pow__(self, k: int) -> "EndForm":
        if k < 0:
            return endform_inverse(self) ** (-k)
        out = EndForm.identity(self.bundle, self.ring)
        for _ in range(k):
            out = out * self
        return out

    def right_wedge(self, w: Form) -> "EndForm":
        """Entrywise ``M_ij ∧ w``: right multiplication of every coefficient."""
        ring = self.ring
        bk = ring.backend
        v = min(self.valid_order, w.valid_order)
        out = {}
        for ij, t in self.entries.items():
            raw = wedge_raw(ring, t, w.terms)
            out[ij] = {m: bk.normalize(ring, p, v) for m, p in raw.items()}
        return self._new(out, v)

    def __eq__(self, other):
        if not isinstance(other, EndForm):
            return NotImplemented
        if other.bundle != self.bundle or other.ring != self.ring:
            return False
        return (self - other).is_zero()

    def __hash__(self):
        return hash((self.bundle, self.ring, tuple(sorted(self.entries))))

    def equal_upto(self, other: "EndForm", order: int) -> bool:
        return (self - other).truncate(order).is_zero()

    def __repr__(self):
        if not self.entries:
            return f"EndForm(0 on {self.bundle})"
        parts = [f"({i},{j}): {self.entry(i, j)!r}" for (i, j) in sorted(self.entries)]
        return f"EndForm({self.bundle}; " + "; ".join(parts) + ")"


def _as_form(ring: JetRing, x) -> Form:
    if isinstance(x, Form):
        if x.ring != ring:
            raise RingMismatchError("form lives in a different ring")
        return x
    if isinstance(x, Jet):
        if x.ring != ring:
            raise RingMismatchError("jet lives in a different ring")
        return Form.scalar(x)
    return Form.const(ring, x)


# --------------------------------------------------------------------------
# algebra


def endform_mul(A: EndForm, B: EndForm) -> EndForm:
    A._check(B)
    ring = A.ring
    bk = ring.backend
    v = min(A.valid_order, B.valid_order)
    by_row: dict[int, list] = {}
    for (j, k), t in B.entries.items():
        by_row.setdefault(j, []).append((k, t))
    acc: dict[tuple[int, int], dict] = {}
    for (i, j), ta in A.entries.items():
        for k, tb in by_row.get(j, ()):
            wedge_raw(ring, ta, tb, acc.setdefault((i, k), {}))
    out = {ij: {m: bk.normalize(ring, p, v) for m, p in t.items()} for ij, t in acc.items()}
    return EndForm(A.bundle, ring, out, v)


def supercommutator(A: EndForm, B: EndForm) -> EndForm:
    """``[A, B] = AB - (-1)^{|A||B|} BA``, extended bilinearly over parity parts."""
    A0, A1 = A.parity_parts()
    B0, B1 = B.parity_parts()
    out = EndForm.zero(A.bundle, A.ring, min(A.valid_order, B.valid_order))
    for X, px in ((A0, 0), (A1, 1)):
        if X.is_zero():
            continue
        for Y, py in ((B0, 0), (B1, 1)):
            if Y.is_zero():
                continue
            XY = X * Y
            YX = Y * X
            out = out + (XY + YX if px and py else XY - YX)
    return out


def supertrace(A: EndForm) -> Form:
    """Quillen supertrace ``sum_d (-1)^d tr`` of the End-degree-0 part.

    In the right-module storage an odd form coefficient on a diagonal entry of
    an odd frame vector picks up one more sign, so the weight of a term
    ``e_i ⊗ w`` is ``(-1)^{d_i (1 + |w|)}``.
    """
    ring = A.ring
    bk = ring.backend
    out: dict[int, object] = {}
    degs = A.bundle.degrees
    for (i, j), t in A.entries.items():
        if i != j:
            continue
        for m, p in t.items():
            sign = -1 if (degs[i] * (1 + popcount(m))) & 1 else 1
            _acc(bk, ring, out, m, p, sign)
    return Form(ring, out, A.valid_order)


def star_transpose(A: EndForm) -> EndForm:
    """Entrywise ``(M^*)_ij = star(M_ji)``."""
    ring = A.ring
    bk = ring.backend
    out = {}
    for (i, j), t in A.entries.items():
        nt = {}
        for m, p in t.items():
            new, s = _star_mask(ring.n, m)
            c = bk.conj(ring, p)
            nt[new] = c if s > 0 else bk.neg(ring, c)
        out[(j, i)] = nt
    return EndForm(A.bundle, ring, out, A.valid_order)


def adjoint(A: EndForm, h: "HermitianMetric") -> EndForm:
    """Metric adjoint: ``h(A s, t) = h(s, A^* t)``."""
    if h.bundle != A.bundle:
        raise BundleMismatchError("metric lives on a different bundle")
    return h.inv * star_transpose(A) * h.H


def dcomm(A: EndForm, which: str) -> EndForm:
    """Supercommutator of a base differential with ``A``.

    Equals ``P (dA)`` with ``P = diag((-1)^{d_i})`` and ``dA`` the entrywise
    exterior derivative; ``which`` is any differential accepted by
    ``exterior_derivative``.
    """
    degs = A.bundle.degrees
    ring = A.ring
    parts = {}
    v = A.valid_order
    for (i, j), t in A.entries.items():
        f = exterior_derivative(Form(ring, t, A.valid_order), which)
        parts[(i, j)] = -f if degs[i] & 1 else f
        v = min(v, f.valid_order)
    if not parts:
        probe = exterior_derivative(Form(ring, {}, A.valid_order), which)
        v = probe.valid_order
    return EndForm(A.bundle, ring, {ij: f.terms for ij, f in parts.items()}, v)


def grading_operator(bundle: GradedBundle, ring: JetRing) -> EndForm:
    r = bundle.rank
    rows = [[bundle.degrees[i] if i == j else 0 for j in range(r)] for i in range(r)]
    return EndForm.from_matrix(bundle, ring, rows)


def parity_operator(bundle: GradedBundle, ring: JetRing) -> EndForm:
    r = bundle.rank
    rows = [[(-1) ** (bundle.degrees[i] & 1) if i == j else 0 for j in range(r)] for i in range(r)]
    return EndForm.from_matrix(bundle, ring, rows)


def series_eval(coeffs: Sequence, A: EndForm) -> EndForm:
    """``f(A) = sum_k coeffs[k] A^k`` by Horner's rule."""
    out = EndForm.zero(A.bundle, A.ring, A.valid_order)
    ident = EndForm.identity(A.bundle, A.ring)
    for c in reversed(list(coeffs)):
        out = out * A
        if c != 0:
            out = out + ident.scale(c)
    return out


def directional_eval(coeffs: Sequence, A: EndForm, B: EndForm) -> EndForm:
    """``g(A; B) = sum_n coeffs[n] sum_{i=1}^n A^{i-1} B A^{n-i}``."""
    A._check(B)
    n_max = len(coeffs) - 1
    out = EndForm.zero(A.bundle, A.ring, min(A.valid_order, B.valid_order))
    if n_max < 1:
        return out
    powers = [EndForm.identity(A.bundle, A.ring)]
    for _ in range(n_max - 1):
        powers.append(powers[-1] * A)
    # S_n = sum_{i+j=n-1} A^i B A^j satisfies S_n = A S_{n-1} + B A^{n-1}
    S = B
    for n in range(1, n_max + 1):
        if n > 1:
            S = A * S + B * powers[n - 1]
        c = coeffs[n]
        if c != 0:
            out = out + S.scale(c)
    return out


def derivative_coeffs(coeffs: Sequence) -> list:
    return [k * coeffs[k] for k in range(1, len(coeffs))]


# --------------------------------------------------------------------------
# inverse


def _const_matrix(A: EndForm):
    """Constant-term matrix of the degree-0 form part, as Scalars."""
    r = A.bundle.rank
    zero_mon = (0,) * A.ring.nexp
    mat = [[Scalar(0, 0, A.ring.exact) for _ in range(r)] for _ in range(r)]
    for (i, j), t in A.entries.items():
        p = t.get(0)
        if p is None:
            continue
        terms = A.ring.backend.terms(A.ring, p)
        c = terms.get(zero_mon)
        if c is not None:
            mat[i][j] = c
        for mon in terms:
            if A.ring.degree(mon) == 0 and any(mon) and mon != zero_mon:
                raise NonInvertibleError("unit part depends on a free parameter; not a jet inverse")
    return mat


def _scalar_matrix_inverse(mat):
    r = len(mat)
    exact = mat[0][0].exact if r else True
    aug = [list(row) + [Scalar(1 if i == k else 0, 0, exact) for k in range(r)] for i, row in enumerate(mat)]
    for col in range(r):
        piv = None
        best = 0.0
        for row in range(col, r):
            a = abs(aug[row][col])
            if a > best:
                best, piv = a, row
        if piv is None or aug[piv][col].is_zero() or (not exact and best < 1e-14):
            raise NonInvertibleError("constant term is singular")
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = Scalar(1, 0, exact) / aug[col][col]
        aug[col] = [x * inv for x in aug[col]]
        for row in range(r):
            if row != col and not aug[row][col].is_zero():
                f = aug[row][col]
                aug[row] = [x - f * y for x, y in zip(aug[row], aug[col])]
    return [row[r:] for row in aug]


def endform_inverse(A: EndForm) -> EndForm:
    """Inverse of an EndForm whose constant part is an invertible scalar matrix.

    Newton iteration ``X <- X (2 - A X)``; the remainder is nilpotent because it
    raises chart degree, jet-parameter degree or form degree.
    """
    inv0 = _scalar_matrix_inverse(_const_matrix(A))
    X = EndForm.from_matrix(A.bundle, A.ring, inv0)
    X = X._new(X.entries, A.valid_order)
    two = EndForm.identity(A.bundle, A.ring).scale(2)
    depth = A.valid_order + Form.ngens(A.ring) + 1
    reach = 1
    while reach <= depth:
        X = X * (two - A * X)
        reach *= 2
    return X


# --------------------------------------------------------------------------
# sections and metrics


class SectionForm:
    """Form-valued section ``sum_i e_i s_i`` (coefficients on the right)."""

    __slots__ = ("bundle", "ring", "comps", "valid_order")

    def __init__(self, bundle: GradedBundle, ring: JetRing, comps: Sequence[Form]):
        if len(comps) != bundle.rank:
            raise BundleMismatchError("section length does not match the bundle rank")
        self.bundle = bundle
        self.ring = ring
        self.comps = [_as_form(ring, c) for c in comps]
        self.valid_order = min([ring.order] + [c.valid_order for c in self.comps])

    @classmethod
    def from_blocks(cls, bundle, ring, comps: Mapping[int, Sequence]) -> "SectionForm":
        col = [Form.zero(ring) for _ in range(bundle.rank)]
        for d, vec in comps.items():
            idx = bundle.indices(d)
            if len(vec) != len(idx):
                raise BundleMismatchError(f"degree {d} component has the wrong length")
            for i, x in zip(idx, vec):
                col[i] = _as_form(ring, x)
        return cls(bundle, ring, col)

    def __add__(self, other):
        return SectionForm(self.bundle, self.ring, [a + b for a, b in zip(self.comps, other.comps)])

    def __sub__(self, other):
        return SectionForm(self.bundle, self.ring, [a - b for a, b in zip(self.comps, other.comps)])

    def __neg__(self):
        return SectionForm(self.bundle, self.ring, [-a for a in self.comps])

    def right_wedge(self, w: Form) -> "SectionForm":
        return SectionForm(self.bundle, self.ring, [c * w for c in self.comps])

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.comps)

    def equal_upto(self, other: "SectionForm", order: int) -> bool:
        return all(a.equal_upto(b, order) for a, b in zip(self.comps, other.comps))

    def __eq__(self, other):
        return isinstance(other, SectionForm) and all(a == b for a, b in zip(self.comps, other.comps))

    def __repr__(self):
        return f"SectionForm({self.comps!r})"


def apply_endform(A: EndForm, s: SectionForm) -> SectionForm:
    if A.bundle != s.bundle:
        raise BundleMismatchError("section lives on a different bundle")
    r = A.bundle.rank
    out = [Form.zero(A.ring, min(A.valid_order, s.valid_order)) for _ in range(r)]
    for (i, j), t in A.entries.items():
        out[i] = out[i] + Form(A.ring, t, A.valid_order) * s.comps[j]
    return SectionForm(A.bundle, A.ring, out)


class HermitianMetric:
    """Block-diagonal Hermitian metric; ``blocks[d]`` is a square Jet matrix."""

    def __init__(self, bundle: GradedBundle, ring: JetRing, blocks: Mapping[int, Sequence[Sequence]], check: bool = True):
        self.bundle = bundle
        self.ring = ring
        self.blocks = {}
        r = bundle.rank
        rows = [[None] * r for _ in range(r)]
        for d, idx in ((d, bundle.indices(d)) for d in bundle.ranks):
            if d not in blocks:
                raise MetricError(f"missing metric block for degree {d}")
            mat = [[_as_jet(ring, x) for x in row] for row in blocks[d]]
            if len(mat) != len(idx) or any(len(row) != len(idx) for row in mat):
                raise MetricError(f"metric block {d} has the wrong shape")
            self.blocks[d] = mat
            for x, i in enumerate(idx):
                for y, j in enumerate(idx):
                    rows[i][j] = mat[x][y]
        extra = set(blocks) - set(bundle.ranks)
        if extra:
            raise MetricError(f"metric blocks for degrees not in the bundle: {sorted(extra)}")
        if check:
            self._check()
        self.H = EndForm.from_matrix(bundle, ring, rows)

    @classmethod
    def identity(cls, bundle: GradedBundle, ring: JetRing) -> "HermitianMetric":
        return cls(
            bundle,
            ring,
            {d: [[1 if i == j else 0 for j in range(k)] for i in range(k)] for d, k in bundle.ranks.items()},
        )

    @classmethod
    def from_endform(cls, H: EndForm, check: bool = True) -> "HermitianMetric":
        b = H.bundle
        blocks = {}
        for d in b.ranks:
            blocks[d] = [[H.entry(i, j).coef(0) for j in b.indices(d)] for i in b.indices(d)]
        return cls(b, H.ring, blocks, check)

    def _check(self):
        for d, mat in self.blocks.items():
            k = len(mat)
            for i in range(k):
                for j in range(k):
                    if not (mat[i][j] == mat[j][i].conj()):
                        raise MetricError(f"metric block {d} is not Hermitian at ({i},{j})")
            c = np.array([[complex(mat[i][j].constant_term()) for j in range(k)] for i in range(k)])
            ev = np.linalg.eigvalsh(c)
            norm = max(np.abs(c).max(), 1.0)
            if ev.min() <= 1e-12 * norm:
                raise MetricError(f"metric block {d} is not positive definite at the basepoint")

    @cached_property
    def inv(self) -> EndForm:
        return endform_inverse(self.H)

    def to_numeric(self) -> "HermitianMetric":
        ring = self.ring.numeric()
        blocks = {d: [[x.to_numeric() for x in row] for row in mat] for d, mat in self.blocks.items()}
        return HermitianMetric(self.bundle, ring, blocks, check=False)


def _as_jet(ring: JetRing, x) -> Jet:
    if isinstance(x, Jet):
        return x
    return Jet.const(ring, x)


def metric_pairing(s: SectionForm, t: SectionForm, h: HermitianMetric) -> Form:
    """``h(e ⊗ w, f ⊗ n) = w^* ∧ h(e, f) ∧ n`` summed over the frame."""
    if s.bundle != h.bundle or t.bundle != h.bundle:
        raise BundleMismatchError("sections and metric live on different bundles")
    out = Form.zero(h.ring, min(s.valid_order, t.valid_order, h.H.valid_order))
    for (i, j), hij in h.H.entries.items():
        if s.comps[i].is_zero() or t.comps[j].is_zero():
            continue
        out = out + star(s.comps[i]) * Form(h.ring, hij, h.H.valid_order) * t.comps[j]
    return out
