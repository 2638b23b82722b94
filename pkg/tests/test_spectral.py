import dataclasses

import numpy as np
import pytest

from rdafront.front import refine_front, remesh, solve_front_bvp
from rdafront.singular import classify_regime, layer_for, reduced_slow_orbits
from rdafront.spectral import (
    LambdaTracker,
    SpectralError,
    lambda_c2_discrete,
    lambda_c2_exact,
    lambda_c2_oracle,
    solve_adjoint,
    stability_operator,
    stability_report,
    zero_contour,
)

# independent direct-eigenvalue fits (oracle), frozen
LAMBDA2_NU0 = {1e-2: 23.7923, 1e-3: 244.171}


@pytest.fixture(scope="module")
def adj_d2(front_d2):
    return solve_adjoint(front_d2)


@pytest.fixture(scope="module")
def adj_d3(front_d3):
    return solve_adjoint(front_d3)


def test_adjoint_is_discrete_kernel(front_d2, adj_d2):
    assert abs(adj_d2.eigenvalue) < 1e-6
    assert adj_d2.residual / np.linalg.norm(adj_d2.psi) < 1e-8
    assert abs(adj_d2.gap) > 1e-2


def test_adjoint_normalisation_and_decay(front_d2, adj_d2):
    m = front_d2.mesh()
    pair = m.integrate((m.D1 @ front_d2.u) * adj_d2.uA + (m.D1 @ front_d2.v) * adj_d2.vA)
    assert pair == pytest.approx(1.0, abs=1e-12)
    for f in (adj_d2.uA, adj_d2.vA):
        assert np.max(np.abs(f[[0, -1]])) < 1e-8 * np.max(np.abs(f))


def test_continuous_adjoint_residual_shrinks(front_d2, adj_d2):
    fine, _ = refine_front(front_d2)
    r0 = adj_d2.continuous_residual(front_d2)
    r1 = solve_adjoint(fine).continuous_residual(fine)
    assert r0 < 1e-6
    assert r1 < r0 / 4


def test_quotient_is_normalisation_invariant(front_d2, adj_d2):
    scaled = dataclasses.replace(adj_d2, uA=7.3 * adj_d2.uA, vA=7.3 * adj_d2.vA)
    assert lambda_c2_exact(front_d2, scaled) == pytest.approx(lambda_c2_exact(front_d2, adj_d2), rel=1e-13)


@pytest.mark.parametrize("delta", [1e-2, 1e-3])
def test_quotient_matches_oracle_at_zero_advection(delta, front_d2, front_d3, adj_d2, adj_d3):
    f, a = (front_d2, adj_d2) if delta == 1e-2 else (front_d3, adj_d3)
    exact = lambda_c2_exact(f, a)
    assert exact > 0
    assert exact == pytest.approx(LAMBDA2_NU0[delta], rel=1e-5)
    assert lambda_c2_discrete(f, a) == pytest.approx(exact, rel=1e-5)
    assert lambda_c2_oracle(f).value == pytest.approx(exact, rel=1e-4)


def test_leading_order_adjoint_shape(km, front_d3, adj_d3):
    slow = reduced_slow_orbits(km, classify_regime(1e-3, 0.0))
    lay = layer_for(km, slow.v_star)
    m = front_d3.mesh()
    core = np.abs(front_d3.xi) < 60
    shift = np.interp(lay.evaluate(0.0)[0], front_d3.u[core], front_d3.xi[core])
    w = np.abs(front_d3.xi - shift) < lay.L
    _, p = lay.evaluate(front_d3.xi[w] - shift)
    g = np.exp(lay.c_star * front_d3.xi[w]) * p
    ww = m.w[w]
    uA = adj_d3.uA[w]
    alpha = np.sum(ww * uA * g) / np.sum(ww * g * g)
    err = np.sqrt(np.sum(ww * (uA - alpha * g) ** 2) / np.sum(m.w * adj_d3.uA**2))
    assert err < 0.05
    # slow component is negligible against the fast one
    assert np.max(np.abs(adj_d3.vA)) < 1e-2 * np.max(np.abs(adj_d3.uA))


def test_translation_eigenvalue_and_real_branch(front_d2):
    orc = lambda_c2_oracle(front_d2)
    assert abs(orc.eigenvalues[0]) < 1e-8
    assert np.all(np.isreal(orc.eigenvalues))
    assert orc.fit_residual < 1e-3


def test_quartic_remainder_order(front_d2, adj_d2):
    lam2 = lambda_c2_exact(front_d2, adj_d2)
    rem = []
    # the quartic coefficient is large here, so the asymptotic range starts near ell = 5e-3
    for ell0 in (1e-2, 5e-3, 2.5e-3, 1.25e-3):
        orc = lambda_c2_oracle(front_d2, ells=[0.0, ell0, 2 * ell0])
        rem.append(abs(orc.eigenvalues[1] - orc.eigenvalues[0] - lam2 * ell0**2))
    orders = np.log2(np.array(rem[:-1]) / np.array(rem[1:]))
    assert np.all(np.diff(orders) > 0) and orders[-1] > 3.8


def test_oracle_needs_three_wavenumbers(front_d2):
    with pytest.raises(ValueError):
        lambda_c2_oracle(front_d2, ells=[0.0, 1e-2])


def test_report_agrees_in_sign(front_d2):
    rep = stability_report(front_d2, asymptotic=True)
    assert rep.agree_in_sign
    assert rep.regime == "Weak"
    assert rep.as_dict()["lambda2_exact"] == rep.lambda2_exact


def test_operator_has_translation_kernel(front_d2):
    L, keep, b = stability_operator(front_d2)
    m = front_d2.mesh()
    phi = np.concatenate([m.D1 @ front_d2.u, m.D1 @ front_d2.v])[keep]
    # the derivative of the discrete front is a kernel vector up to truncation error
    assert np.linalg.norm(L @ phi) / np.linalg.norm(phi) < 1e-4
    assert b.shape == phi.shape


@pytest.fixture(scope="module")
def tracker_d3(km):
    return LambdaTracker(km, 1e-3)


def test_oracle_cross_validation_at_nu_500(tracker_d3):
    f = tracker_d3.front(500.0)
    exact = lambda_c2_exact(f, solve_adjoint(f))
    assert lambda_c2_oracle(f).value == pytest.approx(exact, rel=1e-2)


def test_quotient_mesh_and_domain_convergence(km, tracker_d3):
    f = tracker_d3.front(1472.0)
    base = lambda_c2_exact(f, solve_adjoint(f))
    fine, _ = refine_front(f)
    longer = solve_front_bvp(remesh(f, K=45.0))
    for g in (fine, longer):
        assert lambda_c2_exact(g, solve_adjoint(g)) == pytest.approx(base, rel=5e-3)


def test_tracker_zero_at_delta_1e2(km):
    t = LambdaTracker(km, 1e-2)
    nu_star = t.find_zero(1400.0)
    assert nu_star == pytest.approx(1472.27, rel=1e-4)
    assert t(0.5 * nu_star) > 0 > t(2 * nu_star)


def test_tracker_without_sign_change(km):
    t = LambdaTracker(km, 1e-2)
    with pytest.raises(SpectralError):
        t.find_zero(10.0, factor=1.2, max_expand=2)


@pytest.mark.slow
def test_contour_is_worker_independent(km):
    a = zero_contour(km, [5e-3, 1e-2], workers=1)
    b = zero_contour(km, [5e-3, 1e-2], workers=2)
    assert np.array_equal(a.nu_star, b.nu_star)
    assert a.slope < 0
