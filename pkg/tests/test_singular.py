import math

import numpy as np
import pytest
from scipy.integrate import quad

from rdafront.singular import (
    asymptotic_lambda2,
    classify_regime,
    coefficient_M,
    critical_advection,
    klausmeier_layer_front,
    reduced_slow_orbits,
    solve_layer_front,
    strong_q_profile,
    weighted_integrals,
    zeta_orbits,
)


def closed_form(km, vs):
    a, b = km.middle_branch(vs), km.upper_branch(vs)
    beta = math.sqrt(km.mu2 * vs / 2)
    k = beta * b
    c = beta * (2 * a - b)

    def u(x):
        with np.errstate(over="ignore"):
            return b / (1 + np.exp(-k * x))

    def up(x):
        w = u(x)
        return k * w * (1 - w / b)

    return a, b, c, u, up


def test_regime_examples():
    assert classify_regime(1e-3, 0).tag == "Weak"
    r = classify_regime(1e-3, 1e4, 0.05)
    assert r.tag == "Intermediate"
    assert classify_regime(1e-3, 1e8).tag == "Strong"
    assert r.r == pytest.approx(1e-2) and r.rbar == pytest.approx(10.0) and r.eps == pytest.approx(1e-4)
    assert classify_regime(1e-3, 0).eps == math.inf and classify_regime(1e-3, 0).dbar == math.inf
    assert classify_regime(1e-3, 1e3).tag == "Weak"
    assert classify_regime(1e-3, 5e4, 0.05).tag == "Strong"


def test_regime_validation():
    with pytest.raises(ValueError):
        classify_regime(0.0, 1.0)
    with pytest.raises(ValueError):
        classify_regime(1e-3, -1.0)
    with pytest.raises(ValueError):
        classify_regime(1e-3, 1.0, r0=2.0)
    with pytest.warns(RuntimeWarning):
        classify_regime(0.05, 1.0)


@pytest.mark.parametrize("vs", [1.0, 1.5, 2.0])
def test_closed_form_front_solves_layer_ode(km, vs):
    a, b, c, u, up = closed_form(km, vs)
    x = np.linspace(-30, 30, 301)
    k = math.sqrt(km.mu2 * vs / 2) * b
    upp = k * up(x) * (1 - 2 * u(x) / b)
    assert np.max(np.abs(upp + c * up(x) + km.F(u(x), vs))) < 1e-12


@pytest.mark.parametrize("vs", [1.0, 1.5, 2.0])
def test_shooting_matches_closed_form(km, vs):
    shot = solve_layer_front(km, vs)
    _, b, c, u, _ = closed_form(km, vs)
    assert abs(shot.c_star - c) < 1e-8
    # closed form centred at its midpoint, which is where the shooting profile puts xi = 0
    assert np.max(np.abs(shot.u - u(shot.xi))) < 1e-6
    assert np.max(np.abs(shot.residual())) < 1e-9
    assert abs(shot.u[0] - shot.u_minus) < 1e-8 and abs(shot.u[-1] - shot.u_plus) < 1e-8


def test_standing_front_when_energy_balanced():
    from rdafront.kinetics import FunctionModel

    # cubic with symmetric wells: int_{-1}^{1} F du = 0, so c = 0
    m = FunctionModel(lambda u, v, mu: u - u**3 + 0 * v, lambda u, v, mu: 0 * u - v, (),
                      partials=lambda u, v, mu: (1 - 3 * u**2, 0 * u, 0 * u, -1 + 0 * u))
    m.branches = lambda: []
    from rdafront.singular import NullclineBranch

    neg = NullclineBranch("S-", lambda v: -np.ones_like(np.asarray(v, float)), (-5, 5), m)
    pos = NullclineBranch("S+", lambda v: np.ones_like(np.asarray(v, float)), (-5, 5), m)
    import rdafront.singular as s

    orig = s._front_branches
    s._front_branches = lambda model: (neg, pos)
    try:
        lay = solve_layer_front(m, 0.0)
    finally:
        s._front_branches = orig
    assert abs(lay.c_star) < 1e-8


@pytest.mark.parametrize("vs", [1.0, 2.0])
def test_weighted_integrals_vs_quadrature(km, vs):
    a, b, c, u, up = closed_form(km, vs)
    lay = klausmeier_layer_front(km, vs)
    F, G, N = weighted_integrals(lay, km)
    Fq = quad(lambda x: km.partials(u(x), vs)[1] * math.exp(c * x) * up(x), -60, 60, limit=400, epsabs=0)[0]
    Nq = quad(lambda x: math.exp(c * x) * up(x) ** 2, -60, 60, limit=400, epsabs=0)[0]
    assert F == pytest.approx(Fq, rel=1e-8)
    assert N == pytest.approx(Nq, rel=1e-8)
    assert G == pytest.approx(-vs * b**2, rel=1e-12)
    assert F > 0 and N > 0 and G < 0


def test_shooting_and_exact_integrals_agree(km):
    a = weighted_integrals(solve_layer_front(km, 1.3), km)
    b = weighted_integrals(klausmeier_layer_front(km, 1.3), km)
    assert np.allclose(a, b, rtol=1e-8)


def test_slow_orbits_continuity_and_residual(km):
    so = zeta_orbits(km, 1.0)
    assert so.v_minus(0.0)[0] == pytest.approx(so.v_star, abs=1e-9)
    assert so.v_plus(0.0)[0] == pytest.approx(so.v_star, abs=1e-9)
    assert so.q_minus(0.0)[0] == pytest.approx(so.q_star, abs=1e-9)
    assert so.q_plus(0.0)[0] == pytest.approx(so.q_star, abs=1e-9)
    assert so.residual(km) < 1e-9
    assert so.transversality > 1e-6


def test_slow_orbits_depend_smoothly_on_rbar(km):
    a = zeta_orbits(km, 1.0)
    b = zeta_orbits(km, 1.01)
    assert abs(b.v_star - a.v_star) < 0.05 * abs(a.v_star)
    assert abs(b.q_star - a.q_star) < 0.05 * abs(a.q_star)


def test_slow_integral_continuous_at_zero(km):
    s0 = zeta_orbits(km, 0.0).slow_integral
    s1 = zeta_orbits(km, 1e-6).slow_integral
    assert s1 == pytest.approx(s0, rel=1e-4)


def test_intermediate_jump_level_approaches_V_plus(km):
    Vp = km.steady_states()[-1].V
    d = [zeta_orbits(km, rb).v_star - Vp for rb in (40.0, 80.0)]
    assert d[0] > 0 and d[1] > 0
    assert 3.5 < d[0] / d[1] < 4.5


def test_weak_lambda_scales_like_inverse_delta(km):
    rbar = 0.5
    vals = [d * asymptotic_lambda2(km, classify_regime(d, rbar / d)).lambda2 for d in (1e-3, 1e-4)]
    assert vals[0] == pytest.approx(vals[1], rel=1e-10)


def test_weak_sign_rule(km):
    rep = asymptotic_lambda2(km, classify_regime(1e-3, 0.0))
    assert np.sign(rep.lambda2) == -np.sign(rep.F_star) * np.sign(rep.G_star)
    assert rep.lambda2 > 0
    assert rep.regime.tag == "Weak"


def test_M_sign_rule_and_variants(km):
    rep = asymptotic_lambda2(km, classify_regime(1e-3, 1e4))
    M = coefficient_M(km)
    for v in M.values():
        assert np.sign(v) == -np.sign(rep.F_star) * np.sign(rep.G_star)
    assert rep.nu_crit["G2"] == pytest.approx(M["G2"] ** (1 / 3) * 1e-3 ** (-4 / 3))


def test_strong_regime_is_minus_one(km):
    reg = classify_regime(1e-3, 1e8)
    rep = asymptotic_lambda2(km, reg)
    assert rep.lambda2 == -1.0
    assert rep.error_bound == pytest.approx(reg.eps / reg.r)
    so = reduced_slow_orbits(km, reg)
    assert so.scaling == "eta"
    assert so.v_star == km.steady_states()[-1].V


def test_strong_q_profile(km):
    so = reduced_slow_orbits(km, classify_regime(1e-3, 1e8))
    lay = klausmeier_layer_front(km, so.v_star)
    x = np.linspace(-20, 20, 801)
    for r in (0.5, 5.0):
        q, sol = strong_q_profile(lay, km, r, x)
        rhs = -r * (q + km.G(lay.evaluate(x)[0], so.v_star))
        h = 1e-4
        num = (sol.sol(x + h)[0] - sol.sol(x - h)[0]) / (2 * h)
        assert np.max(np.abs(num - rhs)) < 1e-6 * max(1.0, r)
    q, _ = strong_q_profile(lay, km, 500.0, x)
    lim = -km.G(lay.evaluate(x)[0], so.v_star)
    assert np.max(np.abs(q - lim)) < 0.05 * np.max(np.abs(lim))


def test_critical_advection_variants(km):
    out = critical_advection(km, 1e-3, variants=("G", "G2"))
    assert out["G2"] > out["G"] > 0
