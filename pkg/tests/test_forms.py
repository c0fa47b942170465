import random

from hypothesis import given, settings, strategies as st

from bottchern.forms import Form, exotic_decompose, exterior_derivative, star, wedge
from bottchern.jetalg import Jet, JetRing, Param, Scalar

from gen import rform

seeds = st.integers(min_value=0, max_value=10**6)


def ring(n=1, order=4, params=("t",)):
    return JetRing(n, tuple(Param(p) for p in params), order)


def fz(R, name):
    return Form.scalar(Jet.var(R, name))


def test_wedge_examples():
    R = ring()
    dz, dzb = Form.gen(R, "dz1"), Form.gen(R, "dzb1")
    assert wedge(dz, dz).is_zero()
    assert wedge(dz, dzb) == -wedge(dzb, dz)
    assert wedge(fz(R, "z1") * dz, fz(R, "zb1") * dzb) == fz(R, "z1") * fz(R, "zb1") * Form.gen(R, "dz1", "dzb1")


def test_generator_order_is_normalized():
    R = ring()
    assert Form.gen(R, "dt", "dz1") == -Form.gen(R, "dz1", "dt")
    assert Form.gen(R, "dzb1", "dz1") == -Form.gen(R, "dz1", "dzb1")


def test_exterior_derivative_examples():
    R = ring()
    assert exterior_derivative(fz(R, "zb1"), "delbar") == Form.gen(R, "dzb1")
    w = fz(R, "z1") * fz(R, "zb1")
    two_step = exterior_derivative(exterior_derivative(w, "delbar"), "del")
    # delbar(z zb) = z dzb, then del(z dzb) = dz ^ dzb
    assert two_step == Form.gen(R, "dz1", "dzb1")
    other = exterior_derivative(exterior_derivative(w, "del"), "delbar")
    assert (two_step + other).is_zero()
    t = fz(R, "t")
    assert exterior_derivative(t * Form.gen(R, "dz1"), "dparam") == Form.gen(R, "dt", "dz1")


def test_derivative_lowers_valid_order_only_for_chart():
    R = ring()
    w = fz(R, "z1") * fz(R, "t")
    assert w.d("del").valid_order == R.order - 1
    assert w.d("dparam").valid_order == R.order


def test_star_examples():
    R = ring()
    assert star(Form.gen(R, "dz1")) == -Form.gen(R, "dzb1")
    i = Jet.const(R, Scalar(0, 1))
    f = Form.scalar(i * Jet.var(R, "z1") + 2)
    assert star(f) == Form.scalar(-i * Jet.var(R, "zb1") + 2)
    dz, dzb = Form.gen(R, "dz1"), Form.gen(R, "dzb1")
    assert star(dz * dzb) == dz * dzb
    assert star(dz * dzb) == star(dzb) * star(dz)
    assert star(Form.gen(R, "dt")) == Form.gen(R, "dt")


def test_exotic_examples():
    R = ring()
    dz, dzb = Form.gen(R, "dz1"), Form.gen(R, "dzb1")
    assert exotic_decompose(dz * dzb) == {0: dz * dzb}
    parts = exotic_decompose(dz + dzb)
    assert parts == {-1: dz, 1: dzb}


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_star_reverses_wedge(seed):
    rng = random.Random(seed)
    R = ring(n=2, order=3)
    a, b = rform(R, rng), rform(R, rng)
    assert star(a * b) == star(b) * star(a)
    assert star(star(a)) == a


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_star_negates_exotic_degree(seed):
    rng = random.Random(seed)
    R = ring(n=2, order=3, params=())
    a = rform(R, rng, nterms=4)
    sa = exotic_decompose(star(a))
    for k, part in exotic_decompose(a).items():
        assert sa[-k] == star(part)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_wedge_associative_and_graded_commutative(seed):
    rng = random.Random(seed)
    R = ring(n=2, order=3)
    a, b, c = (rform(R, rng) for _ in range(3))
    assert (a * b) * c == a * (b * c)
    ka, kb = rng.randint(0, 3), rng.randint(0, 3)
    x, y = rform(R, rng, ka), rform(R, rng, kb)
    assert x * y == y * x * (-1) ** (ka * kb)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_differentials_square_and_anticommute(seed):
    rng = random.Random(seed)
    R = ring(n=2, order=5)
    a = rform(R, rng, nterms=3)
    v = R.order - 2
    for w in ("del", "delbar", "dparam"):
        assert a.d(w).d(w).truncate(v).is_zero()
    assert (a.d("del").d("delbar") + a.d("delbar").d("del")).truncate(v).is_zero()
    for w in ("del", "delbar"):
        assert (a.d("dparam").d(w) + a.d(w).d("dparam")).truncate(v).is_zero()
    assert a.d("total") == a.d("del") + a.d("delbar") + a.d("dparam")


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_leibniz(seed):
    rng = random.Random(seed)
    R = ring(n=2, order=4)
    k = rng.randint(0, 3)
    a, b = rform(R, rng, k), rform(R, rng)
    for w in ("del", "delbar", "dparam", "total"):
        assert (a * b).d(w) == a.d(w) * b + (-1) ** k * (a * b.d(w))


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_exotic_grading_is_multiplicative(seed):
    rng = random.Random(seed)
    R = ring(n=2, order=3, params=())
    a, b = rform(R, rng, nterms=3), rform(R, rng, nterms=3)
    expected = {}
    for i, x in exotic_decompose(a).items():
        for j, y in exotic_decompose(b).items():
            expected[i + j] = expected.get(i + j, Form.zero(R)) + x * y
    got = exotic_decompose(a * b)
    for k, part in got.items():
        assert part == expected[k]
    assert sum(got.values(), Form.zero(R)) == a * b
