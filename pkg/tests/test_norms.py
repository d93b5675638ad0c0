import math
import warnings

import numpy as np
import pytest

from ergoreg import averaging as av
from ergoreg import bounds as bd
from ergoreg import fourier_core as fc
from ergoreg import norms as nm
from ergoreg.errors import ConfigError, QuadratureError, ResolutionWarning

UNIT = fc.ActionDomain(np.array([0.0]), np.array([1.0]))


def _one_mode(k, value, gradient=None, domain=UNIT):
    return fc.single_mode_function(k, value, domain, gradient)


def _const(I):
    return np.ones(I.shape[:-1], dtype=complex)


def _ident(I):
    return I[..., 0].astype(complex)


def _ident_grad(I):
    return np.ones(I.shape, dtype=complex)


def test_integrate_examples():
    g = nm.make_grid(UNIT, 8)
    assert nm.integrate(lambda I: np.ones(len(I)), g) == pytest.approx(1, abs=1e-14)
    assert nm.integrate(lambda I: I[:, 0], g) == pytest.approx(0.5, abs=1e-14)
    assert nm.integrate(lambda I: I[:, 0] ** 2, g) == pytest.approx(1 / 3, abs=1e-12)


@pytest.mark.parametrize("scheme", ["gauss_legendre", "midpoint"])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_grid_invariants(scheme, n):
    dom = fc.ActionDomain(-np.arange(1, n + 1, dtype=float), np.full(n, 0.5))
    g = nm.make_grid(dom, 40 if n < 3 else 16, scheme)
    assert np.sum(g.weights) == pytest.approx(dom.volume, rel=1e-12)
    assert np.all(dom.contains(g.nodes))
    assert g.coarsened().size < g.size < g.refined().size


def test_quadrature_error_reports_node():
    g = nm.make_grid(UNIT, 8)
    with pytest.raises(QuadratureError) as exc:
        nm.integrate(lambda I: np.where(I[:, 0] > 0.5, np.nan, 1.0), g)
    assert exc.value.node[0] > 0.5


def test_norm_examples():
    u1 = _one_mode((1,), _const, lambda I: np.zeros(I.shape, dtype=complex))
    g = nm.make_grid(UNIT, 16)
    assert nm.norm_uniform(u1, g) == pytest.approx(1)
    assert nm.norm_zero(u1, g) == pytest.approx(1)
    assert nm.norm_one(u1, g) == pytest.approx(2)
    ui = _one_mode((1,), _ident, _ident_grad)
    assert nm.norm_uniform(ui, g) == pytest.approx(1, abs=1e-6)
    u2 = _one_mode((2,), _ident, _ident_grad)
    assert nm.norm_one(u2, g) == pytest.approx(2.5, abs=1e-12)


def test_limit_average_norms_vanish():
    gm = fc.linear_model(1)
    fbar = av.transform(fc.cosine_function(), gm, av.LimitAverage())
    g = nm.make_grid(gm.domain, 64)
    assert nm.norm_zero(fbar, g) == 0
    assert nm.norm_one(fbar, g) == 0


def test_finite_time_sup_nonconvergence():
    gm = fc.linear_model(1)
    f = fc.cosine_function()
    for T in (10.0, 100.0, 1000.0):
        u = av.difference_field(av.transform(f, gm, av.FiniteTime(T)))
        assert nm.norm_uniform(u, nm.resolution_grid(u)) >= 0.5 - 1e-3


def test_stochastic_norm_below_bound():
    gm = fc.linear_model(1)
    f = fc.cosine_function()
    u = av.difference_field(av.transform(f, gm, av.StochasticDamped(0.1, 0.1)))
    rep = nm.compute_norms(u)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert rep.norm_0 <= bd.bound_stochastic(bd.BoundInputs.from_function(gm, f), 0.1, 0.1)


def test_finite_time_w1_grows():
    gm = fc.linear_model(1)
    f = fc.cosine_function()
    vals = [nm.compute_norms(av.difference_field(av.transform(f, gm, av.FiniteTime(T)))).norm_1
            for T in (10.0, 1000.0)]
    assert vals[1] > vals[0]


def test_report_totals_and_ordering():
    gm = fc.linear_model(2)
    f = fc.default_test_function(n=2, K=2)
    u = av.difference_field(av.transform(f, gm, av.Damped(0.3)))
    rep = nm.compute_norms(u, nm.make_grid(gm.domain, 48))
    per = np.array(list(rep.per_mode.values()))
    assert rep.norm_1 >= rep.norm_0 >= 0
    np.testing.assert_allclose(per.sum(axis=0), [rep.norm_inf, rep.norm_0, rep.norm_1], rtol=1e-12)
    assert rep.refinement_estimate == max(rep.refinement_0, rep.refinement_1)


def _scaled(u, c):
    return fc.PhaseSpaceFunction({k: ck.scaled(c) for k, ck in u.modes.items()}, u.domain, u.truncation_radius)


def _sum(u, v):
    def add(a, b):
        return fc.CoefficientFn(lambda I: a(I) + b(I), lambda I: a.grad(I) + b.grad(I), a.sup_norm + b.sup_norm)

    return fc.PhaseSpaceFunction({k: add(u.modes[k], v.modes[k]) for k in u.modes}, u.domain, u.truncation_radius)


def test_homogeneity_and_triangle():
    gm = fc.linear_model(1)
    f = fc.default_test_function(K=3)
    g = nm.make_grid(gm.domain, 128)
    u = av.difference_field(av.transform(f, gm, av.Damped(0.2)))
    v = av.difference_field(av.transform(f, gm, av.FiniteTime(20.0)))
    base = nm.compute_norms(u, g, refine_sup=False)
    for c in (0.0, 2.0, 10.0, -2.5):
        rep = nm.compute_norms(_scaled(u, c), g, refine_sup=False)
        for a, b in ((rep.norm_inf, base.norm_inf), (rep.norm_0, base.norm_0), (rep.norm_1, base.norm_1)):
            assert a == pytest.approx(abs(c) * b, rel=1e-12, abs=1e-300)
    w = _sum(u, v)
    assert nm.norm_uniform(w, g, refine=False) <= nm.norm_uniform(u, g, False) + nm.norm_uniform(v, g, False) + 1e-12
    assert nm.norm_zero(w, g) <= nm.norm_zero(u, g) + nm.norm_zero(v, g) + 1e-12
    assert nm.norm_one(w, g) <= nm.norm_one(u, g) + nm.norm_one(v, g) + 1e-12


@pytest.mark.parametrize("kind", [av.Damped(0.1), av.FiniteTime(50.0), av.StochasticDamped(0.05, 0.05)])
def test_refinement_is_stable(kind):
    gm = fc.linear_model(1)
    u = av.difference_field(av.transform(fc.default_test_function(), gm, kind))
    g = nm.resolution_grid(u)
    rep = nm.compute_norms(u, g, refine_sup=False)
    fine = nm.compute_norms(u, g.refined(), refine_sup=False)
    assert abs(fine.norm_0 - rep.norm_0) <= rep.refinement_0
    assert abs(fine.norm_1 - rep.norm_1) <= rep.refinement_1


def test_gradient_required_without_fd():
    u = _one_mode((1,), _ident)
    g = nm.make_grid(UNIT, 16)
    assert nm.norm_one(u, g) == pytest.approx(2.0, abs=1e-8)
    with pytest.raises(ConfigError) as exc:
        nm.norm_one(u, g, allow_fd=False)
    assert exc.value.field == "gradient"


def test_boundary_flag():
    ui = _one_mode((1,), _ident, _ident_grad)
    rep = nm.compute_norms(ui, nm.make_grid(UNIT, 16))
    assert rep.boundary_flag and rep.boundary_modes == ((1,),)
    bump = _one_mode((1,), lambda I: (1 - (2 * I[..., 0] - 1) ** 2).astype(complex))
    assert not nm.compute_norms(bump, nm.make_grid(UNIT, 16)).boundary_flag


def test_resolution_cap_warns():
    gm = fc.linear_model(2)
    u = av.difference_field(av.transform(fc.default_test_function(n=2, K=2), gm, av.FiniteTime(1e5)))
    with pytest.warns(ResolutionWarning):
        count = nm.resolution_nodes(u)
    assert count**2 <= nm.MAX_TOTAL_NODES


def test_sandwich_single_mode_is_tight():
    u = _one_mode((2,), lambda I: (1 + 1j * I[..., 0]).astype(complex),
                  lambda I: np.full(I.shape, 1j, dtype=complex))
    lhs, mid, rhs, ok = nm.sobolev_sandwich_check(u, nm.make_grid(UNIT, 16))
    assert ok
    assert lhs == pytest.approx(mid, rel=1e-12) and mid == pytest.approx(rhs, rel=1e-12)


def test_sandwich_zero_field():
    u = fc.PhaseSpaceFunction({}, UNIT, 1)
    assert nm.sobolev_sandwich_check(u, nm.make_grid(UNIT, 8)) == (0.0, 0.0, 0.0, True)


def test_sandwich_opposing_modes():
    dom = fc.ActionDomain.cube(1)
    modes = {(1,): fc.constant_coefficient(0.5, 1), (-1,): fc.constant_coefficient(0.5, 1),
             (2,): fc.affine_coefficient(0.0, [0.3], dom), (-2,): fc.affine_coefficient(0.0, [0.3], dom)}
    u = fc.PhaseSpaceFunction(modes, dom, 2, real=True)
    grid = nm.make_grid(dom, 32)
    lhs, mid, rhs, ok = nm.sobolev_sandwich_check(u, grid, angle_nodes=4096)
    assert ok and lhs < mid - 1e-3
    # oracle: dense angle grid, normalized, |u| + |d_I u| + |d_phi u| for u = cos(phi) + 0.6 I cos(2 phi)
    x, w = grid.nodes[:, 0], grid.weights
    phi = 2 * np.pi * np.arange(4096) / 4096
    I, P = np.meshgrid(x, phi, indexing="ij")
    dens = (np.abs(np.cos(P) + 0.6 * I * np.cos(2 * P)) + np.abs(0.6 * np.cos(2 * P))
            + np.abs(np.sin(P) + 1.2 * I * np.sin(2 * P)))
    oracle = float(np.sum(w[:, None] * dens) / phi.size)
    assert lhs == pytest.approx(oracle, rel=1e-12)
