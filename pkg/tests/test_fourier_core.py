import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergoreg import fourier_core as fc
from ergoreg.errors import DomainError

modes_1d = st.lists(st.integers(-6, 6), min_size=1, max_size=3)


@given(modes_1d)
def test_mode_norms(k):
    k = tuple(k)
    assert fc.norm1(k) >= fc.norm2(k) - 1e-12
    assert (fc.norm2(k) == 0) == fc.is_zero_mode(k)


def test_domain_validation():
    with pytest.raises(ValueError):
        fc.ActionDomain(np.array([0.0]), np.array([0.0]))
    with pytest.raises(ValueError):
        fc.ActionDomain(np.array([0.0, 1.0]), np.array([1.0]))
    dom = fc.ActionDomain.cube(2)
    assert dom.volume == 4.0
    assert dom.diameter == pytest.approx(2 * math.sqrt(2))
    pts = dom.grid_points(5)
    assert pts.shape == (25, 2) and np.all(dom.contains(pts))


def test_linear_model_constants():
    for n in (1, 2, 3):
        gm = fc.linear_model(n)
        assert gm.C == pytest.approx(math.sqrt(n))
        assert (gm.D, gm.m, gm.M, gm.lam) == (1.0, 1.0, 1.0, 1.0)
        obs = gm.check_constants(nodes_per_dim=8 if n < 3 else 5, pairs=500)
        assert obs["max_norm"] <= gm.C
        assert obs["max_entry"] <= gm.D
        assert gm.m <= obs["min_det"] <= obs["max_det"] <= gm.M
        assert obs["max_lipschitz"] <= gm.lam + 1e-12


def test_affine_model_constants_on_grid():
    gm = fc.affine_model([[2.0, 0.5], [0.0, 1.0]], offset=[0.1, -0.2])
    obs = gm.check_constants(nodes_per_dim=16, pairs=1000)
    assert obs["max_norm"] <= gm.C
    assert obs["max_entry"] <= gm.D
    assert gm.m - 1e-12 <= obs["min_det"] and obs["max_det"] <= gm.M + 1e-12
    assert obs["max_lipschitz"] <= gm.lam + 1e-12
    with pytest.raises(ValueError):
        fc.affine_model([[1.0, 1.0], [1.0, 1.0]])


def test_evaluate_examples():
    dom = fc.ActionDomain.cube(1)
    const = fc.PhaseSpaceFunction({(0,): fc.constant_coefficient(1.0, 1)}, dom, 1)
    assert fc.evaluate(const, [0.2], [1.3]) == pytest.approx(1.0)
    cosf = fc.cosine_function(dom)
    assert fc.evaluate(cosf, [0.3], [0.0]) == pytest.approx(1.0)
    assert fc.evaluate(cosf, [0.3], [math.pi / 3]) == pytest.approx(0.5)
    assert isinstance(fc.evaluate(cosf, [0.3], [0.0]), float)
    with pytest.raises(DomainError):
        fc.evaluate(cosf, [1.0], [0.0])


def test_small_divisor_examples():
    gm = fc.linear_model(2)
    assert fc.small_divisor(gm, (1, -1), [0.3, 0.3]) == 0.0
    assert fc.small_divisor(gm, (1, 0), [0.25, 0.9]) == 0.25
    assert fc.small_divisor(gm, (2, 3), [0.1, 0.2]) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        fc.small_divisor(gm, (0, 0), [0.1, 0.2])


@settings(max_examples=50)
@given(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), st.tuples(st.integers(-5, 5), st.integers(-5, 5)),
       st.tuples(st.floats(-0.99, 0.99), st.floats(-0.99, 0.99)))
def test_small_divisor_is_additive(k1, k2, I):
    gm = fc.affine_model([[1.3, 0.2], [-0.4, 0.9]])
    ks = (k1[0] + k2[0], k1[1] + k2[1])
    if fc.is_zero_mode(k1) or fc.is_zero_mode(k2) or fc.is_zero_mode(ks):
        return
    total = fc.small_divisor(gm, k1, I) + fc.small_divisor(gm, k2, I)
    assert fc.small_divisor(gm, ks, I) == pytest.approx(total, abs=1e-14)


def test_find_resonance_examples():
    gm = fc.linear_model(1)
    f = fc.cosine_function()
    rp = fc.find_resonance(gm, f, (1,))
    assert rp is not None and abs(rp.I_bar[0]) <= 1e-12 and rp.divisor_residual <= fc.TOL_RES
    assert rp.coeff_magnitude == pytest.approx(0.5)

    dom = fc.ActionDomain(np.array([0.5]), np.array([1.0]))
    gm2 = fc.linear_model(1, dom)
    assert fc.find_resonance(gm2, fc.cosine_function(dom), (1,)) is None

    gm3 = fc.linear_model(2)
    f3 = fc.single_mode_function((1, -1), lambda I: np.ones(I.shape[:-1], dtype=complex), gm3.domain)
    rp3 = fc.find_resonance(gm3, f3, (1, -1))
    assert rp3 is not None
    assert abs(rp3.I_bar[0] - rp3.I_bar[1]) <= 1e-12
    assert rp3.coeff_magnitude == 1.0
    # residual is minimal along the grid line it was found on
    line = np.repeat(rp3.I_bar[None, :], 2001, axis=0)
    axis = int(np.argmax(np.abs(rp3.I_bar - gm3.domain.center)) == 0)
    line[:, 1 - axis] = np.linspace(-0.999, 0.999, 2001)
    assert rp3.divisor_residual <= np.min(np.abs(line @ np.array([1.0, -1.0]))) + 1e-12


def test_find_resonance_tolerance_tightens():
    gm = fc.affine_model([[1.0]], offset=[1.0 / 3.0])
    f = fc.cosine_function(gm.domain)
    loose = fc.find_resonance(gm, f, (1,), tol_res=1e-6)
    tight = fc.find_resonance(gm, f, (1,), tol_res=1e-7)
    assert loose.divisor_residual <= 1e-6
    assert tight.divisor_residual <= 1e-7
    assert abs(tight.I_bar[0] + 1 / 3) <= 1e-6


def test_find_resonance_rejects_zero_mode():
    gm = fc.linear_model(1)
    f = fc.default_test_function(gm.domain, K=2)
    with pytest.raises(ValueError):
        fc.find_resonance(gm, f, (0,))


def test_default_function_properties():
    f = fc.default_test_function(n=2)
    assert f.truncation_radius == 8 and len(f.modes) == 17**2
    assert f.real
    assert fc.default_test_function(n=3).truncation_radius == 4
    g = fc.default_test_function(K=3)
    assert complex(g.modes[(1,)](np.zeros((1, 1)))[0]) == pytest.approx(math.exp(-1))
    pts = g.domain.grid_points(50)
    for k, ck in g.modes.items():
        assert np.max(np.abs(ck(pts))) <= ck.sup_norm + 1e-12
        # analytic and finite-difference gradients agree to O(h^2)
        np.testing.assert_allclose(ck.grad(pts), fc.fd_gradient(ck.value, pts, g.fd_step), atol=1e-9)


def test_reality_symmetry_enforced():
    dom = fc.ActionDomain.cube(1)
    with pytest.raises(ValueError):
        fc.PhaseSpaceFunction({(1,): fc.constant_coefficient(1.0, 1)}, dom, 1, real=True)
    with pytest.raises(ValueError):
        fc.PhaseSpaceFunction({(1,): fc.constant_coefficient(1.0, 1), (-1,): fc.constant_coefficient(1j, 1)},
                              dom, 1, real=True)
    with pytest.raises(ValueError):
        fc.PhaseSpaceFunction({(3,): fc.constant_coefficient(1.0, 1)}, dom, 2)


def test_fd_gradient_fallback_matches_analytic():
    dom = fc.ActionDomain.cube(2)
    c = fc.affine_coefficient(0.5 + 0.1j, [0.3, -0.7j], dom)
    bare = fc.CoefficientFn(c.value, None, c.sup_norm)
    I = dom.grid_points(4)
    np.testing.assert_allclose(bare.grad(I, 1e-5), c.grad(I), atol=1e-9)
    with pytest.raises(ValueError):
        bare.grad(I)
