import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from tvlevel.anisotropy import Anisotropy, AnisotropyError, CrystallineError

W41 = Anisotropy.weighted([[4.0, 0.0], [0.0, 1.0]])

finite = st.floats(-50, 50, allow_nan=False)
vectors = st.tuples(finite, finite).filter(lambda v: math.hypot(*v) > 1e-3).map(np.array)
smooth_norms = st.sampled_from([
    Anisotropy.euclidean(), W41, Anisotropy.weighted([[2.0, 0.7], [0.7, 1.0]]),
    Anisotropy.lp_norm(1.3), Anisotropy.lp_norm(3.0), Anisotropy.lp_norm(6.0),
])
all_norms = st.one_of(smooth_norms, st.sampled_from([Anisotropy("l1"), Anisotropy("linf")]))


def support_polar(a, xi, samples=20000):
    """sup <x, xi> over the unit ball of a, by dense sampling of the unit sphere."""
    th = np.linspace(0, 2 * np.pi, samples, endpoint=False)
    d = np.stack([np.cos(th), np.sin(th)], axis=1)
    d = d / np.asarray(a.eval(d))[:, None]
    return float(np.max(d @ xi))


@pytest.mark.parametrize("a, x, want", [
    (Anisotropy.euclidean(), (3, 4), 5.0),
    (W41, (1, 0), 2.0),
    (Anisotropy.lp_norm(1.5), (1, 1), 2 ** (2 / 3)),
])
def test_eval_examples(a, x, want):
    assert a.eval(x) == pytest.approx(want, rel=1e-15)


@pytest.mark.parametrize("a, xi, want", [
    (Anisotropy.euclidean(), (0, 2), 2.0),
    (W41, (1, 0), 0.5),
    (Anisotropy.lp_norm(3), (1, 1), 2 ** (2 / 3)),
])
def test_polar_examples(a, xi, want):
    assert a.polar_eval(xi) == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("a", [Anisotropy.euclidean(), W41, Anisotropy.lp_norm(1.5),
                               Anisotropy.lp_norm(3), Anisotropy("l1"), Anisotropy("linf")])
def test_closed_form_polar_matches_support_function(a):
    rng = np.random.default_rng(3)
    for xi in rng.normal(size=(5, 2)):
        assert a.polar_eval(xi) == pytest.approx(support_polar(a, xi), rel=1e-6)


def test_grad_examples():
    np.testing.assert_allclose(Anisotropy.euclidean().grad((3, 4)), (0.6, 0.8), rtol=1e-15)
    np.testing.assert_allclose(W41.grad((1, 0)), (2.0, 0.0), rtol=1e-15)


def test_lp_grad_matches_central_difference():
    a = Anisotropy.lp_norm(3)
    h = 1e-6
    x = np.array([1.0, 1.0])
    fd = [(a.eval(x + h * e) - a.eval(x - h * e)) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(fd, [2 ** (-2 / 3)] * 2, rtol=1e-9)
    np.testing.assert_allclose(a.grad(x), fd, rtol=1e-9)


def test_grad_errors():
    with pytest.raises(AnisotropyError):
        Anisotropy.euclidean().grad((0.0, 0.0))
    with pytest.raises(CrystallineError):
        Anisotropy("l1").grad((1.0, 2.0))


@pytest.mark.parametrize("desc", [
    {"kind": "weighted_l2", "matrix": [[1, 2], [2, 1]]},
    {"kind": "weighted_l2", "matrix": [[1, 0.5], [0.4, 1]]},
    {"kind": "lp", "p": 1.0},
    {"kind": "lp", "p": 0.5},
    {"kind": "lp"},
    {"kind": "mystery"},
    {"kind": "euclidean", "colour": "red"},
])
def test_descriptor_rejects(desc):
    with pytest.raises(AnisotropyError):
        Anisotropy.from_descriptor(desc)


@pytest.mark.parametrize("a", [Anisotropy.euclidean(), W41, Anisotropy.lp_norm(2.5), Anisotropy("linf")])
def test_descriptor_round_trip(a):
    assert Anisotropy.from_descriptor(a.to_descriptor()) == a


def test_capability_flags():
    assert Anisotropy("l1").crystalline and Anisotropy("linf").crystalline
    assert not W41.crystalline
    assert Anisotropy.lp_norm(1.5).strongly_convex_square
    assert not Anisotropy.lp_norm(3).strongly_convex_square


@given(all_norms, vectors, vectors, st.floats(-20, 20, allow_nan=False))
def test_norm_axioms(a, x, y, s):
    fx = a.eval(x)
    assert fx > 0 and a.eval((0.0, 0.0)) == 0.0
    assert a.eval(s * x) == pytest.approx(abs(s) * fx, rel=1e-12, abs=1e-300)
    assert a.eval(-x) == pytest.approx(fx, rel=1e-15)
    assert a.eval(x + y) <= fx + a.eval(y) + 1e-9 * (fx + a.eval(y))
    lo, hi = a.bounds()
    r = math.hypot(*x)
    assert lo * r * (1 - 1e-12) <= fx <= hi * r * (1 + 1e-12)


@given(all_norms, vectors, vectors)
def test_holder(a, x, xi):
    assert float(x @ xi) <= a.eval(x) * a.polar_eval(xi) + 1e-12 * (1 + abs(float(x @ xi)))


@given(all_norms, vectors)
def test_bipolar(a, x):
    assert a.polar().polar().eval(x) == pytest.approx(a.eval(x), rel=1e-9)


@given(smooth_norms, vectors, st.floats(0.01, 100))
def test_gradient_identities(a, x, s):
    g = a.grad(x)
    fx = a.eval(x)
    assert float(g @ x) == pytest.approx(fx, rel=1e-9)
    assert a.polar_eval(g) == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(a.grad(s * x), g, atol=1e-12)
    pol = a.polar()
    y = fx * g
    back = pol.eval(y) * pol.grad(y)
    np.testing.assert_allclose(back, x, atol=1e-8 * np.linalg.norm(x))


def test_bounds_are_tight_for_weighted():
    lo, hi = W41.bounds()
    assert (lo, hi) == (1.0, 2.0)
    # attained along eigenvectors
    assert W41.eval((0, 1)) == lo and W41.eval((1, 0)) == hi


def test_lp_bounds_against_numeric_extremes():
    a = Anisotropy.lp_norm(3)
    res_min = minimize_scalar(lambda t: a.eval((math.cos(t), math.sin(t))), bounds=(0, math.pi / 2), method="bounded")
    lo, hi = a.bounds()
    assert lo == pytest.approx(res_min.fun, rel=1e-6)
    assert hi == pytest.approx(a.eval((1, 0)))
