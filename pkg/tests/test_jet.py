import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finslerab import jet as J
from finslerab.errors import DomainError, OrderExceeded, SpaceMismatch
from finslerab.jet import X1, X2, Y1, Y2, Jet, JetSpace, jeinsum, seed_point
from oracles import mp_partial, random_composition

SPACE = JetSpace(2, 4)


def seeds(point, space=SPACE):
    return seed_point(space, point)


def test_default_space_layout():
    assert SPACE.size == 90
    assert SPACE.indices[0] == (0, 0, 0, 0)
    assert all(a + b <= 2 and c + d <= 4 for a, b, c, d in SPACE.indices)


def test_seed_single_active_variable():
    (x,) = seed_point(SPACE, (3.0, 0, 0, 0), active=(X1,))[:1]
    assert x.value == 3.0
    assert x.partial((1, 0, 0, 0)) == 1.0
    assert np.count_nonzero(x.c) == 2


def test_seed_all_four():
    js = seeds((1, 2, 0.5, 0.5))
    for k, j in enumerate(js):
        idx = [0, 0, 0, 0]
        idx[k] = 1
        assert j.partial(idx) == 1.0
        assert np.count_nonzero(j.c) == 2


def test_inactive_seed_is_constant():
    x1, x2, y1, y2 = seed_point(SPACE, (1, 2, 3, 4), active=(Y1,))
    assert x1.value == 1 and np.count_nonzero(x1.c) == 1
    assert y1.partial((0, 0, 1, 0)) == 1


def test_bilinear_product():
    x1, x2, _, _ = seeds((2, 3, 0, 0))
    f = x1 * x2
    assert f.value == 6
    assert f.partial((1, 1, 0, 0)) == 1


def test_polynomial_mixed_partial():
    x1, x2, _, _ = seeds((2, 3, 0, 0))
    f = x1 * x1 * x2
    assert f.partial((1, 1, 0, 0)) == pytest.approx(4.0)


def test_partial_examples():
    c = Jet.constant(SPACE, 7.0)
    assert J.partial(c, (0, 0, 0, 0)) == 7
    _, x2, _, _ = seeds((0.1, 0.2, 0.3, 0.4))
    assert J.partial(x2, (0, 1, 0, 0)) == 1
    x1, _, y1, _ = seeds((0.7, 0, -0.4, 0))
    assert J.partial(x1 * y1**3, (1, 0, 3, 0)) == pytest.approx(6.0)


def test_partial_order_exceeded():
    x1 = seeds((0.5, 0, 0, 0))[0]
    with pytest.raises(OrderExceeded):
        x1.partial((3, 0, 0, 0))
    with pytest.raises(OrderExceeded):
        x1.partial((0, 0, 5, 0))


def test_exp_of_zero_jet():
    z = Jet.constant(SPACE, 0.0)
    e = J.exp(z)
    assert e.value == 1.0
    assert np.all(e.c[1:] == 0)


def test_composition_against_high_precision_oracle():
    point = (0.3, -0.2, 0.4, 0.1)
    x1, x2, y1, y2 = seeds(point)
    f = J.exp(J.sin(x1 + y1 * y1))
    g = lambda a, b, c, d: mp.exp(mp.sin(a + c * c))
    for idx in SPACE.indices:
        ref = mp_partial(g, point, idx)
        got = f.partial(idx)
        assert abs(got - ref) <= 1e-9 * max(1.0, abs(ref)), idx


# -- 20 random elementary compositions ---------------------------------------------
@pytest.mark.parametrize("case", range(20))
def test_random_compositions_match_oracle(case):
    rng = np.random.default_rng(1000 + case)
    fj, fm = random_composition(rng)
    point = tuple(float(v) for v in rng.uniform(-0.6, 0.6, 4))
    jet = fj(seeds(point))
    if not isinstance(jet, Jet):
        jet = Jet.constant(SPACE, jet)
    worst = 0.0
    for idx in SPACE.indices:
        ref = mp_partial(lambda *v: fm(v), point, idx)
        worst = max(worst, abs(jet.partial(idx) - ref) / max(1.0, abs(ref)))
    assert worst <= 1e-5


# -- algebraic laws ------------------------------------------------------------------
small = JetSpace(1, 2)
coeff = st.lists(
    st.floats(-3, 3, allow_nan=False, allow_infinity=False), min_size=small.size, max_size=small.size
)


@given(coeff, coeff, coeff)
def test_distributive_law(a, b, c):
    a, b, c = (Jet(small, np.array(v)) for v in (a, b, c))
    lhs = a * (b + c)
    rhs = a * b + a * c
    np.testing.assert_allclose(lhs.c, rhs.c, rtol=1e-12, atol=1e-12 * (1 + np.max(np.abs(lhs.c))))


@given(coeff, coeff)
def test_division_inverts_multiplication(a, b):
    b = np.array(b)
    b[0] = 1.0 + abs(b[0])
    a, b = Jet(small, np.array(a)), Jet(small, b)
    back = (a * b) / b
    np.testing.assert_allclose(back.c, a.c, rtol=1e-9, atol=1e-9 * (1 + np.max(np.abs(a.c))))


@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=4, max_size=4),
       st.lists(st.floats(-5, 5, allow_nan=False), min_size=SPACE.size, max_size=SPACE.size))
def test_polynomials_are_reproduced_exactly(point, poly):
    """A polynomial within the truncation orders, expanded about ``point``, has exact coefficients."""
    vs = seeds(point)
    shifted = [v - p for v, p in zip(vs, point)]
    out = Jet.constant(SPACE, 0.0)
    for c, idx in zip(poly, SPACE.indices):
        term = Jet.constant(SPACE, c)
        for var, power in enumerate(idx):
            if power:
                term = term * shifted[var] ** power
        out = out + term
    np.testing.assert_allclose(out.c, np.array(poly), rtol=1e-13, atol=1e-13 * (1 + max(map(abs, poly))))


def test_batch_broadcasting():
    x1, x2, y1, y2 = seed_point(SPACE, (np.array([0.1, 0.2, 0.3]), 0.5, 1.0, 0.0))
    f = x1 * y1 + x2
    assert f.shape == (3,)
    np.testing.assert_allclose(f.value, [0.6, 0.7, 0.8])
    np.testing.assert_allclose(f.partial((1, 0, 1, 0)), 1.0)


def test_mixed_spaces_meet():
    a = seed_point(JetSpace(2, 4), (0.3, 0, 0, 0))[0]
    b = seed_point(JetSpace(1, 2), (0.3, 0, 0, 0))[0]
    c = a * b
    assert c.space == JetSpace(1, 2)
    assert c.partial((1, 0, 0, 0)) == pytest.approx(0.6)


def test_truncate_to_larger_space_rejected():
    a = seed_point(JetSpace(1, 2), (0.3, 0, 0, 0))[0]
    with pytest.raises(SpaceMismatch):
        a.truncate(JetSpace(2, 4))


def test_diff_lowers_order():
    x1, _, y1, _ = seeds((0.5, 0, 2.0, 0))
    f = x1 * y1**3
    d = f.diff(Y1)
    assert d.space == JetSpace(2, 3)
    assert d.value == pytest.approx(3 * 0.5 * 4.0)
    assert d.partial((1, 0, 0, 0)) == pytest.approx(12.0)


@pytest.mark.parametrize(
    "fn, arg",
    [(J.log, -1.0), (J.sqrt, -0.5), (J.reciprocal, 0.0), (lambda a: J.pow_real(a, 0.25), -2.0)],
)
def test_domain_errors(fn, arg):
    with pytest.raises(DomainError):
        fn(Jet.constant(SPACE, arg) + seeds((0, 0, 0, 0))[0] * 0.0)


def test_jet_func_dispatch():
    x = seeds((0.4, 0, 0, 0))[0]
    assert J.jet_func("pow_real", x, 2.5).value == pytest.approx(0.4**2.5)
    assert J.jet_func("neg", x).value == -0.4
    assert J.jet_arith(x, x, "div").value == 1.0


def test_primitive_rebuilds_antiderivative():
    x = seed_point(SPACE, (0.7, 0.2, 1.0, 0.5))
    a = x[0] * x[2] + x[1]  # composite argument
    got = J.primitive(a, math.sin(a.value), J.cos)
    ref = J.sin(a)
    np.testing.assert_allclose(got.c, ref.c, rtol=1e-12, atol=1e-13)


def test_jeinsum_matches_manual_contraction():
    x1, x2, y1, y2 = seeds((0.2, 0.3, 1.0, -1.0))
    A = Jet.stack([Jet.stack([x1, x2]), Jet.stack([y1, y2])])
    v = Jet.stack([x1 * y1, x2 + y2])
    out = jeinsum("ij,j->i", A, v)
    manual0 = x1 * (x1 * y1) + x2 * (x2 + y2)
    np.testing.assert_allclose(out[0].c, manual0.c, atol=1e-15)


def test_power_operators():
    x = seeds((1.5, 0, 0, 0))[0]
    assert (x**3).partial((2, 0, 0, 0)) == pytest.approx(6 * 1.5)
    assert (x**0.5).value == pytest.approx(math.sqrt(1.5))
    assert (x ** x).value == pytest.approx(1.5**1.5)
    assert (2.0 ** x).partial((1, 0, 0, 0)) == pytest.approx(math.log(2) * 2**1.5)
