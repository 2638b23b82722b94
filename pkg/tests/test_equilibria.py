import warnings

import numpy as np
import pytest

from rdafront.equilibria import (
    check_equilibrium_stability,
    dispersion_coefficients,
    max_real_part,
    stability_boundary_mu3,
    stability_margin,
)
from rdafront.kinetics import SteadyState


def synthetic(Fu, Fv, Gu, Gv):
    return SteadyState(0.0, 0.0, "test", Fu, Fv, Gu, Gv, 0.0, True)


@pytest.fixture
def desert(km):
    return km.steady_states()[0]


def test_zero_wavenumber_coefficients(km):
    s = km.steady_states()[-1]
    c = dispersion_coefficients(s, km, 0.01, 300.0, 0.0, 0.0)
    assert c.p1 == -s.Fu - s.Gv
    assert c.p2 == s.Fu * s.Gv - s.Fv * s.Gu
    assert c.q1 == 0 and c.q2 == 0


def test_desert_jacobian(desert, km):
    assert (desert.Fu, desert.Fv, desert.Gu, desert.Gv) == pytest.approx((-0.1, 0.0, 0.0, -1.0))
    assert dispersion_coefficients(desert, km, 0.01, 0.0, 0.0, 0.0).p2 == pytest.approx(0.1)


def test_symmetries(km):
    s = km.steady_states()[-1]
    k, ell = 0.37, 1.9
    a = dispersion_coefficients(s, km, 0.05, 40.0, k, ell)
    b = dispersion_coefficients(s, km, 0.05, 40.0, -k, -ell)
    assert a.q1 == -40.0 * k
    assert (b.p1, b.p2) == (a.p1, a.p2)
    assert (b.q1, b.q2) == (-a.q1, -a.q2)
    z = dispersion_coefficients(s, km, 0.05, 0.0, k, ell)
    assert z.q1 == 0 and z.q2 == 0


def test_invalid_inputs(km, desert):
    with pytest.raises(ValueError):
        dispersion_coefficients(desert, km, 0.0, 1.0, 0.1, 0.1)
    with pytest.raises(ValueError):
        dispersion_coefficients(desert, km, 0.1, -1.0, 0.1, 0.1)


@pytest.mark.parametrize("nu", [0.0, 1e3, 1e5])
def test_desert_state_stable(desert, km, nu):
    rep = check_equilibrium_stability(desert, km, 0.01, nu)
    assert rep.stable and not rep.on_boundary


def test_vegetated_state_below_threshold_unstable(km):
    # 1.04 is the small-delta threshold; at delta = 1e-4 the boundary sits at 1.0355
    below = km.with_params((0.1, 0.1, 1.03))
    above = km.with_params((0.1, 0.1, 1.05))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert not check_equilibrium_stability(below.vegetated_states()[-1], below, 1e-4, 0.0).stable
        assert check_equilibrium_stability(above.vegetated_states()[-1], above, 1e-4, 0.0).stable


def test_negative_determinant_unstable_at_origin(km):
    s = synthetic(-1.0, 1.0, 1.0, -0.5)
    assert s.det < 0
    c = dispersion_coefficients(s, km, 0.1, 10.0, 0.0, 0.0)
    assert stability_margin(c.p1, c.q1, c.p2, c.q2) < 0
    assert max(r.real for r in c.roots()) > 0


def test_margin_matches_roots_on_random_draws():
    rng = np.random.default_rng(7)
    p1, q1, p2, q2 = rng.normal(scale=2.0, size=(4, 10_000))
    m = stability_margin(p1, q1, p2, q2)
    r = max_real_part(p1, q1, p2, q2)
    clear = (np.abs(m) > 1e-9) & (np.abs(r) > 1e-9)
    assert clear.sum() > 9_900
    assert np.array_equal(np.sign(r[clear]), np.sign(-m[clear]))


def test_worker_count_does_not_change_report(desert, km):
    a = check_equilibrium_stability(desert, km, 0.01, 1e3, workers=1)
    b = check_equilibrium_stability(desert, km, 0.01, 1e3, workers=4)
    assert a.as_dict() == b.as_dict()


def test_large_advection_destabilises_when_gv_positive(km):
    s = synthetic(-2.0, -1.0, 2.0, 0.5)
    assert s.det > 0 and -s.Fu - s.Gv > 0
    assert check_equilibrium_stability(s, km, 0.1, 0.0).stable
    rep = check_equilibrium_stability(s, km, 0.1, 1e4)
    assert not rep.stable
    assert rep.k < 1.0


def test_positive_fu_destabilises_from_ell_of_order_delta(km):
    s = synthetic(0.5, 1.0, -1.5, -2.0)
    assert s.det > 0 and -s.Fu - s.Gv > 0
    delta = 0.01
    assert not check_equilibrium_stability(s, km, delta, 0.0).stable
    onset = delta * np.sqrt(s.det / s.Fu)
    c_lo = dispersion_coefficients(s, km, delta, 0.0, 0.0, 0.3 * onset)
    c_hi = dispersion_coefficients(s, km, delta, 0.0, 0.0, 3.0 * onset)
    assert c_lo.margin > 0 > c_hi.margin


def test_narrow_window_warns(desert, km):
    with pytest.warns(UserWarning):
        check_equilibrium_stability(desert, km, 0.01, 0.0, k_max=1.0, ell_max=1.0)


def test_boundary_bisection_brackets(km):
    mu3 = stability_boundary_mu3(km, 1e-3, 0.0, 0.9, 1.1, rtol=1e-4)
    assert 0.99 < mu3 < 1.0
    with pytest.raises(ValueError):
        stability_boundary_mu3(km, 1e-3, 0.0, 1.1, 1.5)
