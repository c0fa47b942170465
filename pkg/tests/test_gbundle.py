import random

import pytest
from hypothesis import assume, given, settings, strategies as st

from bottchern.forms import Form, popcount, star
from bottchern.gbundle import (
    BundleMismatchError,
    EndForm,
    GradedBundle,
    HermitianMetric,
    MetricError,
    SectionForm,
    adjoint,
    apply_endform,
    directional_eval,
    endform_inverse,
    grading_operator,
    metric_pairing,
    series_eval,
    supercommutator,
    supertrace,
)
from bottchern.jetalg import Jet, JetRing, NonInvertibleError, Param

from gen import rend, rform, rjet, rmetric

seeds = st.integers(min_value=0, max_value=10**6)
B3 = GradedBundle({-1: 1, 0: 2, 1: 1})


def ring(n=1, order=3, params=()):
    return JetRing(n, tuple(Param(p) for p in params), order)


def rsection(B, R, rng):
    return SectionForm(B, R, [rform(R, rng) for _ in range(B.rank)])


def test_multiplication_examples():
    R = ring()
    B = GradedBundle({0: 1, 1: 1})
    rng = random.Random(1)
    A = rend(B, R, rng)
    one = EndForm.identity(B, R)
    assert one * A == A and A * one == A
    N = grading_operator(B, R)
    assert N * N == EndForm.from_matrix(B, R, [[0, 0], [0, 1]])
    # End-degree spread 2 on three degrees: the cube of a raising map vanishes
    up = EndForm.from_blocks(B3, R, {(0, -1): [[1], [Jet.var(R, "z1")]], (1, 0): [[2, 1]]})
    assert not (up * up).is_zero()
    assert (up * up * up).is_zero()


def test_bundle_mismatch():
    R = ring()
    a = EndForm.identity(GradedBundle({0: 1}), R)
    b = EndForm.identity(GradedBundle({0: 2}), R)
    with pytest.raises(BundleMismatchError):
        a * b


def test_supercommutator_examples():
    R = ring(n=2)
    rng = random.Random(2)
    A = rend(B3, R, rng, 1)
    assert supercommutator(A, A) == (A * A).scale(2)
    assert supercommutator(EndForm.identity(B3, R), rend(B3, R, rng)).is_zero()


def test_supertrace_examples():
    R = ring()
    assert supertrace(EndForm.identity(GradedBundle({0: 2, 1: 1}), R)) == Form.const(R, 1)
    B = GradedBundle({0: 1, 1: 1})
    assert supertrace(grading_operator(B, R)) == Form.const(R, -1)


def test_grading_operator_examples():
    R = ring()
    assert grading_operator(GradedBundle({-1: 2}), R) == EndForm.identity(GradedBundle({-1: 2}), R).scale(-1)
    rng = random.Random(3)
    for d in (-2, -1, 0, 1, 2):
        A = rend(B3, R, rng).end_degree_part(d)
        assert supercommutator(grading_operator(B3, R), A) == A.scale(d)


def test_series_and_directional_examples():
    R = ring(n=2)
    rng = random.Random(4)
    A, Bm = rend(B3, R, rng), rend(B3, R, rng)
    assert series_eval([0, 0, 1], A) == A * A
    assert directional_eval([0, 0, 1], A, Bm) == A * Bm + Bm * A
    assert directional_eval([0, 0, 0, 1], A, Bm) == A * A * Bm + A * Bm * A + Bm * A * A


def test_directional_is_linear_part():
    # the t-linear part of f(A + tB) equals g(A;B), t a free parameter
    R = ring(n=1, params=("t",))
    rng = random.Random(5)
    A, Bm = rend(B3, R, rng), rend(B3, R, rng)
    t = Form.scalar(Jet.var(R, "t"))
    f = [1, 2, -1, 3]
    shifted = series_eval(f, A + Bm.right_wedge(t))
    linear = shifted.map_forms(lambda w: w.map_coeffs(lambda c: c.diff("t").subs({"t": 0})))
    assert linear == directional_eval(f, A, Bm)


def test_adjoint_examples():
    R = ring(n=2)
    rng = random.Random(6)
    h = rmetric(B3, R, rng)
    one = EndForm.identity(B3, R)
    assert adjoint(one, h) == one
    A = rend(B3, R, rng)
    assert adjoint(adjoint(A, h), h) == A


def test_pairing_examples():
    R = ring()
    B = GradedBundle({0: 1})
    h = HermitianMetric.identity(B, R)
    e = SectionForm(B, R, [Form.const(R, 1)])
    assert metric_pairing(e, e, h) == Form.const(R, 1)
    dz = Form.gen(R, "dz1")
    w = Jet.const(R, 2) + Jet.var(R, "z1") * Jet.var(R, "zb1")
    h2 = HermitianMetric(B, R, {0: [[w]]})
    assert metric_pairing(e.right_wedge(dz), e, h2) == -(Form.scalar(w) * Form.gen(R, "dzb1"))


def test_metric_validation():
    R = ring()
    B = GradedBundle({0: 2})
    z = Jet.var(R, "z1")
    with pytest.raises(MetricError):
        HermitianMetric(B, R, {0: [[1, z], [z, 1]]})
    with pytest.raises(MetricError):
        HermitianMetric(B, R, {0: [[1, 2], [2, 1]]})
    with pytest.raises(MetricError):
        HermitianMetric(B, R, {0: [[1, 0], [0, 1]], 1: [[1]]})


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_adjoint_pairing_identity(seed):
    rng = random.Random(seed)
    R = ring(n=2)
    h = rmetric(B3, R, rng)
    A = rend(B3, R, rng)
    s, t = rsection(B3, R, rng), rsection(B3, R, rng)
    lhs = metric_pairing(apply_endform(A, s), t, h)
    rhs = metric_pairing(s, apply_endform(adjoint(A, h), t), h)
    assert lhs == rhs


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_adjoint_reverses_products(seed):
    rng = random.Random(seed)
    R = ring(n=2)
    h = rmetric(B3, R, rng)
    A, Bm = rend(B3, R, rng, rng.randint(0, 2)), rend(B3, R, rng, rng.randint(0, 2))
    assert adjoint(A * Bm, h) == adjoint(Bm, h) * adjoint(A, h)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_adjoint_negates_exotic_degree(seed):
    rng = random.Random(seed)
    R = ring(n=2)
    h = HermitianMetric.identity(B3, R)
    A = rend(B3, R, rng)
    assert adjoint(A, h).exotic_degrees() == {-k for k in A.exotic_degrees()}


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_supertrace_kills_supercommutators(seed):
    rng = random.Random(seed)
    R = ring(n=2)
    A, Bm = rend(B3, R, rng), rend(B3, R, rng)
    assert supertrace(supercommutator(A, Bm)).is_zero()


def _left_supertrace(A: EndForm) -> Form:
    # translate e_i ⊗ w to w ⊗ e_i with sign (-1)^{d_i |w|}, then weight (-1)^{d_i}
    R = A.ring
    out = Form.zero(R, A.valid_order)
    for i in range(A.bundle.rank):
        d = A.bundle.degrees[i]
        for m, c in A.entry(i, i).coeffs().items():
            s = -1 if (d * popcount(m) + d) & 1 else 1
            out = out + Form.from_coeffs(R, {m: c}).scale(s)
    return out


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_supertrace_matches_left_module_translation(seed):
    rng = random.Random(seed)
    R = ring(n=2)
    A = rend(B3, R, rng)
    assert supertrace(A) == _left_supertrace(A)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_graded_jacobi(seed):
    rng = random.Random(seed)
    R = ring(n=1, params=("t",))
    da, db = rng.randint(0, 2), rng.randint(0, 2)
    A, Bm, C = rend(B3, R, rng, da), rend(B3, R, rng, db), rend(B3, R, rng)
    lhs = supercommutator(A, supercommutator(Bm, C))
    rhs = supercommutator(supercommutator(A, Bm), C) + supercommutator(Bm, supercommutator(A, C)).scale(
        (-1) ** (da * db)
    )
    assert lhs == rhs


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_exotic_grading_multiplicative(seed):
    rng = random.Random(seed)
    R = ring(n=2)
    A, Bm = rend(B3, R, rng), rend(B3, R, rng)
    for i in A.exotic_degrees():
        for j in Bm.exotic_degrees():
            prod = A.exotic_part(i) * Bm.exotic_part(j)
            assert prod.exotic_degrees() <= {i + j}


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_pairing_sesquilinear(seed):
    rng = random.Random(seed)
    R = ring(n=2)
    h = rmetric(B3, R, rng)
    s, t = rsection(B3, R, rng), rsection(B3, R, rng)
    w = rform(R, rng)
    assert metric_pairing(s.right_wedge(w), t, h) == star(w) * metric_pairing(s, t, h)
    assert metric_pairing(s, t.right_wedge(w), h) == metric_pairing(s, t, h) * w


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_pairing_conjugate_symmetric_on_functions(seed):
    rng = random.Random(seed)
    R = ring(n=2)
    h = rmetric(B3, R, rng)
    s = SectionForm(B3, R, [Form.scalar(rjet(R, rng)) for _ in range(B3.rank)])
    t = SectionForm(B3, R, [Form.scalar(rjet(R, rng)) for _ in range(B3.rank)])
    assert metric_pairing(s, t, h) == star(metric_pairing(t, s, h))


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_inverse(seed):
    rng = random.Random(seed)
    R = ring(n=2)
    A = EndForm.identity(B3, R).scale(3) + rend(B3, R, rng, 0)
    try:
        Ai = endform_inverse(A)
    except NonInvertibleError:
        assume(False)
    assert A * Ai == EndForm.identity(B3, R)
    assert Ai * A == EndForm.identity(B3, R)
