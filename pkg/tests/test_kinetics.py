import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdafront.kinetics import (
    FunctionModel,
    KlausmeierModel,
    eval_reaction,
    find_steady_states,
    get_model,
    nullcline_branches,
)

mus = st.tuples(st.floats(0.05, 2.0), st.floats(0.05, 2.0), st.floats(0.5, 10.0))


def test_eval_reaction_values(km):
    assert eval_reaction(km, 0.0, 2.0) == (0.0, 0.0)
    F, G = eval_reaction(km, 1.0, 1.0)
    assert F == pytest.approx(0.8, abs=1e-15)
    assert G == pytest.approx(0.0, abs=1e-15)


def test_eval_reaction_rejects_nonfinite(km):
    with pytest.raises(ValueError):
        eval_reaction(km, math.nan, 1.0)
    with pytest.raises(ValueError):
        eval_reaction(km, 1.0, np.array([1.0, math.inf]))


@settings(max_examples=60, deadline=None)
@given(mus, st.floats(0.0, 12.0), st.floats(0.0, 8.0))
def test_partials_match_central_differences(mu, u, v):
    m = KlausmeierModel(mu)
    h = 1e-6
    fd = [
        (m.F(u + h, v) - m.F(u - h, v)) / (2 * h),
        (m.F(u, v + h) - m.F(u, v - h)) / (2 * h),
        (m.G(u + h, v) - m.G(u - h, v)) / (2 * h),
        (m.G(u, v + h) - m.G(u, v - h)) / (2 * h),
    ]
    for a, b in zip(m.partials(u, v), fd):
        assert a == pytest.approx(b, rel=1e-6, abs=1e-6 * max(1.0, abs(a)))


def test_Fv_closed_form(km):
    u = np.linspace(0, 10, 11)
    assert np.allclose(km.partials(u, 1.3)[1], u**2 * (1 - 0.1 * u))


def test_F_vanishes_on_desert_branch(km):
    v = np.linspace(0, 5, 50)
    assert np.all(km.F(np.zeros_like(v), v) == 0)


def test_branches_at_fold_and_at_v2(km):
    vf = 4 * 0.1 * 0.1
    assert km.upper_branch(vf) == pytest.approx(5.0)
    assert km.middle_branch(vf) == pytest.approx(5.0)
    assert km.upper_branch(2.0) == pytest.approx(9.9497, abs=1e-4)
    assert km.middle_branch(2.0) == pytest.approx(0.0503, abs=1e-4)


def test_branch_residual_and_slope(km):
    for br in nullcline_branches(km):
        lo, hi = br.domain
        v = np.linspace(lo + 1e-3, hi, 200)
        u = br(v)
        assert np.max(np.abs(km.F(u, v))) < 1e-10
        if br.label != "S-":
            h = 1e-6
            fd = (br(v[5:] + h) - br(v[5:] - h)) / (2 * h)
            assert np.allclose(br.derivative(v[5:]), fd, rtol=1e-6, atol=1e-8)
    assert {b.label for b in nullcline_branches(km)} == {"S-", "S0", "S+"}


def test_steady_states_closed_form_vs_polynomial(km):
    states = find_steady_states(km)
    assert (states[0].U, states[0].V) == (0.0, 2.0)
    # vegetated states from -(mu1 + mu2 mu3) U^2 + mu3 U - mu1 = 0
    roots = np.sort(np.roots([-(0.1 + 0.1 * 2.0), 2.0, -0.1]).real)
    U2 = roots[-1]
    V2 = 2.0 / (1 + U2**2)
    s = states[-1]
    assert s.branch == "S+"
    assert s.U == pytest.approx(U2, rel=1e-12)
    assert s.V == pytest.approx(V2, rel=1e-12)
    assert (s.U, s.V) == pytest.approx((6.6163, 0.0447), abs=1e-4)
    for st_ in states:
        assert abs(km.F(st_.U, st_.V)) < 1e-12 and abs(km.G(st_.U, st_.V)) < 1e-12


def test_admissibility_flags(km):
    states = km.steady_states()
    assert states[0].bistable_admissible and states[-1].bistable_admissible
    assert not states[1].bistable_admissible
    for s in states:
        if s.bistable_admissible:
            assert s.Fu < 0 and s.Gv < 0 and s.det > 0


def test_only_desert_below_saddle_node():
    m = KlausmeierModel((0.1, 0.1, 0.2))
    with pytest.warns(RuntimeWarning, match="only the desert state"):
        states = m.steady_states()
    assert len(states) == 1


def test_admissibility_flips_at_pde_threshold():
    def flag(mu3):
        return KlausmeierModel((0.1, 0.1, mu3)).steady_states()[-1].bistable_admissible

    lo, hi = 0.5, 2.0
    assert not flag(lo) and flag(hi)
    while hi - lo > 1e-7:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if not flag(mid) else (lo, mid)
    assert 0.5 * (lo + hi) == pytest.approx(KlausmeierModel((0.1, 0.1, 2.0)).pde_stable_threshold(), abs=1e-6)


def test_mu_ratio_twenty_is_pde_stable():
    m = KlausmeierModel((0.1, 0.1, 2.0))
    assert 2.0 / 0.1 > 4 * 0.1 + 1 / 0.1
    assert m.steady_states()[-1].bistable_admissible


def test_generic_model_newton_matches_klausmeier(km):
    gm = FunctionModel(lambda u, v, mu: km.F(u, v), lambda u, v, mu: km.G(u, v), km.params,
                       u_window=(0.0, 10.0), v_window=(0.0, 3.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        found = sorted((s.U, s.V) for s in gm.steady_states())
    ref = sorted((s.U, s.V) for s in km.steady_states())
    assert len(found) == len(ref)
    for a, b in zip(found, ref):
        assert a == pytest.approx(b, abs=1e-8)


def test_fd_fallback_partials(km):
    gm = FunctionModel(lambda u, v, mu: km.F(u, v), lambda u, v, mu: km.G(u, v), km.params)
    a = np.array(gm.partials(3.0, 0.7))
    b = np.array(km.partials(3.0, 0.7))
    assert np.allclose(a, b, rtol=1e-6)


def test_registry():
    m = get_model("klausmeier", (0.1, 0.1, 2.0))
    assert isinstance(m, KlausmeierModel)
    with pytest.raises(ValueError, match="unknown model"):
        get_model("nope", (1,))
    with pytest.raises(ValueError):
        KlausmeierModel((0.1, -1, 2))
