import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from tvlevel.anisotropy import Anisotropy
from tvlevel.grid import BOUNDARY, OUTSIDE, ScalarField, cell_tv, crofton_weights, full_mask, pairwise_tv
from tvlevel.rof import RofError, RofProblem, energy, solve
from tvlevel.verify import fixtures as fx
from tvlevel.verify.oracles import resum_rof_energy

EUC = Anisotropy.euclidean()
W41 = Anisotropy.weighted([[4.0, 1.0], [1.0, 1.0]])
S8 = crofton_weights(EUC, 8)


def _solve(g, lam, tol=1e-10, **kw):
    if "anisotropy" not in kw:
        kw.setdefault("stencil", S8)
    u, rep = solve(RofProblem(g, lam, **kw), tol=tol)
    assert rep.converged
    return u, rep


def test_constant_input_is_fixed_point():
    g = fx.constant_image(6, 0.3)
    u, rep = _solve(g, 2.0)
    np.testing.assert_allclose(u.values, 0.3, atol=1e-9)
    assert rep.primal == pytest.approx(0.0, abs=1e-12)


def _two_pixel_reference(a, w, lam):
    def f(d):
        u0 = (a + d) / 2  # mean is preserved, so u = (m + d/2, m - d/2) with m = a/2
        u1 = (a - d) / 2
        return w * abs(d) + 0.5 / lam * ((u0 - a) ** 2 + u1 ** 2)
    return minimize_scalar(f, bounds=(-abs(a) - 1, abs(a) + 1), method="bounded",
                           options={"xatol": 1e-12}).x


@pytest.mark.parametrize("a,lam", [(1.0, 0.1), (1.0, 0.4), (2.0, 0.3), (0.5, 2.0)])
def test_two_pixel_closed_form(a, lam):
    g = ScalarField(np.array([[a, 0.0]]))
    w = S8.weights[S8.offsets.index((1, 0))]
    u, _ = _solve(g, lam)
    d = u.values[0, 0] - u.values[0, 1]
    assert d == pytest.approx(max(a - 2 * w * lam, 0.0), abs=1e-6)
    assert d == pytest.approx(_two_pixel_reference(a, w, lam), abs=1e-6)


def test_energy_at_data_is_tv():
    g = fx.random_field((5, 5), 3)
    p = RofProblem(g, 0.7, stencil=S8)
    assert energy(p, g) == pytest.approx(pairwise_tv(g, S8), rel=1e-12)


def test_energy_of_zero_against_unit_data():
    g = ScalarField(np.ones((3, 4)))
    p = RofProblem(g, 1.0, stencil=S8)
    assert energy(p, g.with_values(np.zeros((3, 4)))) == pytest.approx(6.0)


def test_energy_matches_independent_resum(rng):
    g = ScalarField(rng.random((4, 4)))
    u = g.with_values(rng.random((4, 4)))
    p = RofProblem(g, 0.6, stencil=S8)
    assert energy(p, u) == pytest.approx(resum_rof_energy(g, 0.6, S8, u.values), abs=1e-12)


@pytest.mark.parametrize("scheme", ["forward", "symmetric"])
def test_cell_energy_matches_cell_tv(rng, scheme):
    g = ScalarField(rng.random((5, 6)))
    u = g.with_values(rng.random((5, 6)))
    p = RofProblem(g, 0.5, anisotropy=W41, cell_scheme=scheme)
    fid = 0.5 / 0.5 * float(np.sum((u.values - g.values) ** 2))
    assert energy(p, u) == pytest.approx(cell_tv(u, W41, scheme) + fid, abs=1e-12)


def test_optimality_against_perturbations(rng):
    g = fx.random_field((6, 6), 9)
    p = RofProblem(g, 0.5, stencil=S8)
    u, rep = solve(p, tol=1e-10)
    e0 = energy(p, u)
    assert e0 == pytest.approx(rep.primal, abs=1e-12)
    for _ in range(20):
        v = u.with_values(u.values + 1e-3 * rng.standard_normal(u.shape))
        assert energy(p, v) >= e0 - 1e-8


def test_gap_is_nonnegative_and_tracks_tolerance():
    g = fx.smooth_field(16, 2)
    gaps = []
    for tol in (1e-3, 1e-6, 1e-9):
        _, rep = solve(RofProblem(g, 0.3, stencil=S8), tol=tol)
        assert rep.converged and rep.gap >= -1e-12 and rep.rel_gap <= tol
        gaps.append(rep.rel_gap)
    assert gaps[2] <= gaps[0]


def test_non_convergence_is_reported():
    g = fx.smooth_field(16, 2)
    _, rep = solve(RofProblem(g, 0.3, stencil=S8), tol=1e-14, max_iter=20)
    assert not rep.converged and rep.iterations == 20


# -- invariants ------------------------------------------------------------------


@settings(max_examples=15)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["pair", "cell"]))
def test_comparison_and_contraction(seed, reg):
    rng = np.random.default_rng(seed)
    g1 = ScalarField(rng.random((5, 5)))
    g2 = g1.with_values(g1.values + 0.5 * rng.random((5, 5)))
    kw = {"stencil": S8} if reg == "pair" else {"anisotropy": W41}
    u1, _ = _solve(g1, 0.5, **kw)
    u2, _ = _solve(g2, 0.5, **kw)
    assert np.all(u1.values <= u2.values + 1e-5)
    assert np.max(np.abs(u1.values - u2.values)) <= np.max(np.abs(g1.values - g2.values)) + 1e-5


def test_shift_equivariance(rng):
    g = ScalarField(rng.random((6, 6)))
    u, _ = _solve(g, 0.4)
    v, _ = _solve(g.with_values(g.values + 2.5), 0.4)
    np.testing.assert_allclose(v.values, u.values + 2.5, atol=1e-5)


@pytest.mark.parametrize("kw", [{"stencil": S8}, {"anisotropy": W41}, {"anisotropy": Anisotropy.lp_norm(3.0)}])
def test_mean_and_maximum_principle(kw):
    g = fx.random_field((7, 7), 4)
    u, _ = _solve(g, 0.8, **kw)
    assert u.values.mean() == pytest.approx(g.values.mean(), abs=1e-6)
    assert g.values.min() - 1e-6 <= u.values.min() and u.values.max() <= g.values.max() + 1e-6


def test_symmetric_scheme_is_reflection_invariant(rng):
    g = ScalarField(rng.random((6, 6)))
    u, _ = _solve(g, 0.5, anisotropy=EUC, cell_scheme="symmetric")
    v, _ = _solve(ScalarField(g.values[::-1, ::-1].copy()), 0.5, anisotropy=EUC, cell_scheme="symmetric")
    np.testing.assert_allclose(v.values[::-1, ::-1], u.values, atol=1e-5)


def test_larger_lambda_gives_smaller_tv():
    g = fx.step_image(8)
    tvs = [pairwise_tv(_solve(g, lam)[0], S8) for lam in (0.1, 1.0, 10.0)]
    assert tvs[0] >= tvs[1] >= tvs[2]


def test_huber_close_to_tv_for_small_eps(rng):
    g = ScalarField(rng.random((6, 6)))
    u, _ = _solve(g, 0.5)
    v, rep = _solve(g, 0.5, huber_eps=1e-4)
    assert np.max(np.abs(u.values - v.values)) < 1e-2
    assert rep.gap >= -1e-12


def test_masked_domain(rng):
    mask = full_mask(6, 6)
    mask[2:4, 2:4] = OUTSIDE
    vals = rng.random((6, 6))
    vals[2:4, 2:4] = np.nan
    g = ScalarField(vals, 1.0, mask)
    u, _ = _solve(g, 0.5)
    assert np.all(np.isnan(u.values[2:4, 2:4]))
    assert np.all(np.isfinite(u.values[mask != OUTSIDE]))


def test_dirichlet_keeps_trace_and_orders():
    g = fx.split_trace(8)
    u, _ = _solve(g, 1.0, boundary="dirichlet")
    bm = g.mask == BOUNDARY
    np.testing.assert_array_equal(u.values[bm], g.values[bm])
    up, _ = _solve(g, 1.0, boundary="dirichlet", trace=np.where(bm, g.values + 0.3, 0.0))
    assert np.all(u.values <= up.values + 1e-6)


# -- errors -------------------------------------------------------------------------


def test_problem_validation():
    g = fx.constant_image(3)
    with pytest.raises(RofError):
        RofProblem(g, 0.0, stencil=S8)
    with pytest.raises(RofError):
        RofProblem(g, 1.0)
    with pytest.raises(RofError):
        RofProblem(g, 1.0, stencil=S8, anisotropy=EUC)
    with pytest.raises(RofError, match="smooth"):
        RofProblem(g, 1.0, anisotropy=Anisotropy("l1"))
    with pytest.raises(RofError, match="scheme"):
        RofProblem(g, 1.0, anisotropy=EUC, cell_scheme="central")
    with pytest.raises(RofError):
        RofProblem(g, 1.0, stencil=S8, huber_eps=-1.0)
    with pytest.raises(RofError, match="boundary cells"):
        RofProblem(g, 1.0, stencil=S8, boundary="dirichlet")
    with pytest.raises(RofError):
        solve(RofProblem(g, 1.0, stencil=S8), tol=0.0)
