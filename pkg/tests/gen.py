"""Random jets, forms, flat modules and metrics for the property tests."""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

from bottchern.cohesive import CohesiveModule
from bottchern.forms import Form
from bottchern.gbundle import EndForm, GradedBundle, HermitianMetric, dcomm, endform_inverse
from bottchern.jetalg import Jet, JetRing, NonInvertibleError, Param, Scalar


def rscalar(rng: random.Random) -> Scalar:
    return Scalar(Fraction(rng.randint(-3, 3), rng.randint(1, 3)), Fraction(rng.randint(-2, 2), rng.randint(1, 2)))


def rjet(R: JetRing, rng: random.Random, nterms: int = 3, maxdeg: int | None = None) -> Jet:
    maxdeg = R.order if maxdeg is None else maxdeg
    chart = 2 * R.n
    terms = {}
    for _ in range(nterms):
        mon = [0] * R.nexp
        for _ in range(rng.randint(0, maxdeg)):
            mon[rng.randrange(chart)] += 1
        terms[tuple(mon)] = rscalar(rng)
    return Jet.from_terms(R, terms)


def rform(R: JetRing, rng: random.Random, deg: int | None = None, nterms: int = 2) -> Form:
    ng = Form.ngens(R)
    out = Form.zero(R)
    for _ in range(nterms):
        k = rng.randint(0, min(2, ng)) if deg is None else deg
        m = 0
        for g in rng.sample(range(ng), k):
            m |= 1 << g
        out = out + Form(R, {m: rjet(R, rng)._p})
    return out


def rhomogeneous(R: JetRing, rng: random.Random, deg: int) -> Form:
    return rform(R, rng, deg)


def rend(B: GradedBundle, R: JetRing, rng: random.Random, deg: int | None = None) -> EndForm:
    """Random EndForm; with ``deg`` every term has total degree ``deg``."""
    r = B.rank
    ng = Form.ngens(R)
    rows = [[None] * r for _ in range(r)]
    for i in range(r):
        for j in range(r):
            if deg is None:
                rows[i][j] = rform(R, rng)
            else:
                fd = deg - (B.degrees[i] - B.degrees[j])
                rows[i][j] = rform(R, rng, fd) if 0 <= fd <= ng else None
    return EndForm.from_matrix(B, R, rows)


def koszul(R: JetRing, a0=None) -> CohesiveModule:
    """The two-term module ``E^0 -> E^1`` given by multiplication by ``a0`` (default ``z1``)."""
    B = GradedBundle({0: 1, 1: 1})
    a0 = Jet.var(R, "z1") if a0 is None else a0
    return CohesiveModule.from_tail(EndForm.from_matrix(B, R, [[0, 0], [a0, 0]]))


def _holo(R: JetRing, rng: random.Random, maxdeg: int = 2) -> Jet:
    z = Jet.var(R, "z1")
    out = Jet.zero(R)
    for k in range(maxdeg + 1):
        c = rng.randint(-2, 2)
        if c:
            out = out + z**k * c
    return out


def rcomplex(R: JetRing, rng: random.Random) -> CohesiveModule:
    """A random holomorphic complex (flat tail with only the End-degree-1 part)."""
    z = Jet.var(R, "z1")
    kind = rng.randrange(4)
    if kind == 0:
        return koszul(R, z + rng.randint(0, 1) * z * z)
    if kind == 1:
        B = GradedBundle({0: 2, 1: 1})
        return CohesiveModule.from_tail(EndForm.from_blocks(B, R, {(1, 0): [[_holo(R, rng) + z, _holo(R, rng)]]}))
    if kind == 2:
        B = GradedBundle({-1: 1, 0: 2, 1: 1})
        p, q = z, z * z + z * rng.randint(0, 2)
        return CohesiveModule.from_tail(
            EndForm.from_blocks(B, R, {(0, -1): [[p], [q]], (1, 0): [[q, -p]]})
        )
    B = GradedBundle({0: 2, 1: 2})
    return CohesiveModule.from_tail(
        EndForm.from_blocks(B, R, {(1, 0): [[z, _holo(R, rng)], [0, z + 1]]})
    )


def rgauge_element(B: GradedBundle, R: JetRing, rng: random.Random) -> EndForm:
    """A degree-0 gauge element: ``f_k`` in ``A^(0,k)(End^-k)`` with invertible ``f_0``."""
    r = B.rank
    n = R.n
    rows = [[None] * r for _ in range(r)]
    for i in range(r):
        for j in range(r):
            k = B.degrees[j] - B.degrees[i]
            if k < 0 or k > n:
                continue
            f = Form.zero(R)
            for combo in itertools.combinations(range(n), k):
                m = 0
                for c in combo:
                    m |= 1 << (n + c)
                f = f + Form(R, {m: rjet(R, rng, 2)._p})
            if i == j:
                f = f + Form.const(R, 2)
            rows[i][j] = f
    return EndForm.from_matrix(B, R, rows)


def gauge_transform(E: CohesiveModule, f: EndForm) -> CohesiveModule:
    fi = endform_inverse(f)
    return CohesiveModule.from_tail(fi * (dcomm(f, "delbar") + E.tail * f))


def rmodule(R: JetRing, rng: random.Random) -> CohesiveModule:
    """A random flat cohesive module: a holomorphic complex moved by a random gauge."""
    E = rcomplex(R, rng)
    while True:
        try:
            return gauge_transform(E, rgauge_element(E.bundle, R, rng))
        except NonInvertibleError:
            continue


def rmetric(B: GradedBundle, R: JetRing, rng: random.Random) -> HermitianMetric:
    """``c Id + M M^*`` per degree block, so Hermitian with positive constant term."""
    blocks = {}
    for d, k in B.ranks.items():
        M = [[rjet(R, rng, 2, 2) for _ in range(k)] for _ in range(k)]
        H = []
        for i in range(k):
            row = []
            for j in range(k):
                x = Jet.const(R, 3 if i == j else 0)
                for l in range(k):
                    x = x + M[i][l] * M[j][l].conj()
                row.append(x)
            H.append(row)
        blocks[d] = H
    return HermitianMetric(B, R, blocks)


def rmetric_family(E: CohesiveModule, R: JetRing, rng: random.Random, params) -> HermitianMetric:
    """A metric depending polynomially on the free parameters, positive at every point of [0,1]^k."""
    blocks = {}
    ps = [Jet.var(R, p) for p in params]
    for d, k in E.bundle.ranks.items():
        H = []
        for i in range(k):
            row = []
            for j in range(k):
                if i == j:
                    x = Jet.const(R, 4 + rng.randint(0, 2))
                    for p in ps:
                        x = x + p * rng.randint(1, 3) + p * Jet.var(R, "z1") * Jet.var(R, "zb1") * rng.randint(0, 2)
                    if len(ps) == 2:
                        x = x + ps[0] * ps[1] * rng.randint(0, 2)
                    x = x + Jet.var(R, "z1") * Jet.var(R, "zb1") * rng.randint(0, 2)
                else:
                    x = None
                row.append(x)
            H.append(row)
        for i in range(k):
            for j in range(i + 1, k):
                c = rjet(R, rng, 1, 1) * Fraction(1, 4)
                c = c + ps[0] * Fraction(1, 4)
                H[i][j] = c
                H[j][i] = c.conj()
        blocks[d] = H
    return HermitianMetric(E.bundle, R, blocks)


def ring(n: int = 1, order: int = 4, params=(), exact: bool = True) -> JetRing:
    return JetRing(n, tuple(Param(p) if isinstance(p, str) else p for p in params), order, exact)


def rchain_map(R: JetRing, rng: random.Random):
    """Koszul-type complexes ``O --a--> O`` and ``O --a q--> O`` with the chain map ``(1, q)``."""
    z = Jet.var(R, "z1")
    a = z + rng.randint(0, 1) * z * z
    q = _holo(R, rng, 1) + rng.choice([1, 2])
    E = koszul(R, a)
    F = koszul(R, a * q)
    phi = EndForm.from_matrix(E.bundle, R, [[1, 0], [0, q]])
    return E, F, phi


def rmorphism(R: JetRing, rng: random.Random):
    """A random closed degree-0 morphism ``(E, F, phi_entries)``.

    Either a gauge element viewed as a map ``E^f -> E`` or a chain map between
    two complexes, in both cases conjugated by independent gauge elements.
    """
    if rng.randrange(2):
        F = rcomplex(R, rng)
        while True:
            try:
                f = rgauge_element(F.bundle, R, rng)
                E = gauge_transform(F, f)
                break
            except NonInvertibleError:
                continue
        phi = f
    else:
        E, F, phi = rchain_map(R, rng)
    while True:
        try:
            gE = rgauge_element(E.bundle, R, rng)
            gF = rgauge_element(F.bundle, R, rng)
            E2, F2 = gauge_transform(E, gE), gauge_transform(F, gF)
            phi2 = endform_inverse(gF) * _retarget(phi, F.bundle) * gE
            return E2, F2, phi2
        except NonInvertibleError:
            continue


def _retarget(A: EndForm, B: GradedBundle) -> EndForm:
    return EndForm(B, A.ring, A.entries, A.valid_order)
