"""Acceptance checks. Each criterion returns a :class:`CriterionResult`.

Expensive shared quantities (fronts along nu, zero contours) are cached per
process so that the criteria can be evaluated in any order.
"""
from __future__ import annotations

import math
import os
import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .equilibria import stability_boundary_mu3
from .front import build_initial_guess, refine_front, remesh, solve_front_bvp
from .kinetics import KlausmeierModel
from .sim2d import SimConfig, Simulator, growth_rate_check, run_simulation
from .singular import (
    asymptotic_lambda2,
    classify_regime,
    critical_advection,
    klausmeier_layer_front,
    solve_layer_front,
    zeta_orbits,
    layer_for,
    weighted_integrals,
)
from .spectral import LambdaTracker, lambda_c2_exact, lambda_c2_oracle, solve_adjoint, zero_contour

MU = (0.1, 0.1, 2.0)
MU_FINGER = (1.2, 1.0, 6.2)
REFERENCE_NU = 1472.0
DELTAS = (1e-3, 2e-3, 5e-3, 1e-2)


@dataclass
class CriterionResult:
    id: str
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    note: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        items = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"[{status}] criterion {self.id}: {self.name} | {items}" + (f" | {self.note}" if self.note else "")

    def as_dict(self) -> dict:
        return {"id": self.id, "name": self.name, "passed": self.passed, "measured": self.measured,
                "note": self.note, "seconds": self.seconds}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _timed(fn):
    def wrapper(*a, **kw):
        t = time.perf_counter()
        res = fn(*a, **kw)
        res.seconds = time.perf_counter() - t
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@lru_cache(maxsize=None)
def model(mu=MU) -> KlausmeierModel:
    return KlausmeierModel(mu)


@lru_cache(maxsize=None)
def tracker(delta: float, mu=MU) -> LambdaTracker:
    return LambdaTracker(model(mu), delta)


@lru_cache(maxsize=None)
def nu_star(delta: float) -> float:
    seed = critical_advection(model(), delta, variants=("G2",))["G2"]
    return tracker(delta).find_zero(seed)


@lru_cache(maxsize=None)
def lambda2(delta: float, nu: float) -> float:
    return tracker(delta)(nu)


def _weak_formula(delta, nu):
    m = model()
    slow = zeta_orbits(m, delta * nu)
    F, G, N = weighted_integrals(layer_for(m, slow.v_star), m)
    return -(1.0 / delta) * (F / G) * slow.slow_integral / N


# ---------------------------------------------------------------- criteria


@_timed
def criterion_1() -> CriterionResult:
    ns = nu_star(1e-3)
    lam = lambda2(1e-3, REFERENCE_NU)
    ok = 1325 <= ns <= 1620
    ns2 = nu_star(1e-2)
    return CriterionResult("1", "sign change of lambda_c2 at delta=1e-3 within [1325, 1620]", ok,
                           {"nu_star": ns, "lambda2_at_1472": lam, "nu_star_delta_1e-2": ns2},
                           "crossing near 1472 occurs at delta=1e-2" if 1325 <= ns2 <= 1620 and not ok else "")


@_timed
def criterion_2() -> CriterionResult:
    nus = (5e3, 1e4, 2e4)
    vals = [lambda2(1e-3, nu) for nu in nus]
    dist = [abs(v + 1) for v in vals]
    mono = dist[0] > dist[1] > dist[2]
    ok = -1.1 <= vals[-1] <= -0.9 and mono
    alt = [lambda2(1e-2, nu) for nu in nus]
    return CriterionResult("2", "lambda_c2 in [-1.1, -0.9] at delta=1e-3, nu=2e4, monotone approach to -1", ok,
                           {"lambda2": vals, "monotone": mono, "lambda2_delta_1e-2": alt})


@_timed
def criterion_3() -> CriterionResult:
    nus = [nu_star(d) for d in DELTAS]
    slope = float(np.polyfit(np.log(DELTAS), np.log(nus), 1)[0])
    ok = abs(slope + 4 / 3) <= 0.10
    return CriterionResult("3", "log-log slope of nu*(delta) equals -4/3 +- 0.10", ok,
                           {"deltas": list(DELTAS), "nu_star": nus, "slope": slope})


@_timed
def criterion_4() -> CriterionResult:
    delta = 1e-3
    rows = {}
    ok = True
    for nu in (0.0, 500.0, 1472.0, 1e4, 1e5):
        f = tracker(delta).front(nu)
        exact = lambda_c2_exact(f, solve_adjoint(f))
        fine, _ = refine_front(f)
        err = abs(lambda_c2_exact(fine, solve_adjoint(fine, check_simple=False)) - exact)
        orc = lambda_c2_oracle(f).value
        rel = abs(exact - orc) / abs(exact)
        excluded = abs(exact) < 10 * err
        rows[f"nu={nu:g}"] = [exact, orc, rel, classify_regime(delta, nu).tag] + (["excluded"] if excluded else [])
        if not excluded and rel > 0.01:
            ok = False
    return CriterionResult("4", "exact quotient vs eigenvalue oracle within 1% at delta=1e-3", ok, rows)


@_timed
def criterion_5() -> CriterionResult:
    m = model()
    ok = True
    out = {}
    for vs in (1.0, 1.5, 2.0):
        exact = klausmeier_layer_front(m, vs)
        shot = solve_layer_front(m, vs)
        dc = abs(shot.c_star - exact.c_star)
        sup = float(np.max(np.abs(shot.u - exact.evaluate(shot.xi)[0])))
        out[f"v*={vs:g}"] = [dc, sup]
        ok &= dc < 1e-8 and sup < 1e-6
    return CriterionResult("5", "shooting layer front vs closed form (|dc| < 1e-8, sup < 1e-6)", ok, out)


@_timed
def criterion_6() -> CriterionResult:
    delta = 1e-3
    signs = {}
    ok = True
    for nu in (0.0, 1e3):
        lam = lambda2(delta, nu)
        pred = _weak_formula(delta, nu)
        signs[f"nu={nu:g}"] = [lam, pred]
        ok &= np.sign(lam) == np.sign(pred)
    lam5 = lambda2(delta, 1e5)
    asym = asymptotic_lambda2(model(), classify_regime(delta, 1e5)).lambda2
    signs["nu=1e+05"] = [lam5, asym]
    ok &= lam5 < 0
    ns = nu_star(delta)
    crit = critical_advection(model(), delta)
    rel = {k: (v - ns) / ns for k, v in crit.items()}
    best = min(("G", "G2"), key=lambda k: abs(rel[k]))
    ok &= abs(rel[best]) <= 0.25
    return CriterionResult("6", "sign criteria and nu_crit = M^(1/3) delta^(-4/3) within 25% of nu*", ok,
                           {**signs, "nu_star": ns, "nu_crit": crit, "rel_error": rel, "better_variant": best})


@_timed
def criterion_7() -> CriterionResult:
    m = model()
    target = m.pde_stable_threshold()
    delta = 1e-4
    b = stability_boundary_mu3(m, delta, 0.0, 0.3, 1.5)
    rel = abs(b - target) / target
    return CriterionResult("7", "PDE-stability boundary of the vegetated state vs mu1(4 mu2 + 1/mu2) within 1%",
                           rel <= 0.01, {"delta": delta, "mu3_boundary": b, "formula": target, "rel_error": rel})


def _linear_rate(nu: float, Ly: float = 500.0, dt: float = 2.0, t_end: float = 6000.0):
    f = tracker(1e-2).front(nu)
    lam = lambda_c2_exact(f, solve_adjoint(f, check_simple=False))
    cfg = SimConfig(front=f, Ly=Ly, Ny=4, dt=dt, t_end=t_end)
    sigma, _ = growth_rate_check(cfg, m=1)
    pred = lam * cfg.wavenumber(1) ** 2
    return sigma, pred, lam


def pattern_run(mu, nu, Ly, Ny, dt, t_end, noise=0.05, seed=0):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        f = tracker(1e-2, mu).front(nu)
    cfg = SimConfig(front=f, Ly=Ly, Ny=Ny, dt=dt, t_end=t_end, noise=noise, seed=seed, diag_every=10)
    return run_simulation(cfg)


@_timed
def criterion_8(qualitative: bool = True) -> CriterionResult:
    ns = nu_star(1e-2)
    out = {"nu_star_delta_1e-2": ns}
    ok = True
    for label, nu in (("stable", 2 * ns), ("unstable", ns / 2)):
        sigma, pred, lam = _linear_rate(nu)
        rel = abs(sigma - pred) / abs(pred)
        out[label] = [nu, sigma, pred, rel]
        ok &= rel <= 0.2 and np.sign(sigma) == np.sign(lam)
    if qualitative:
        cusp = pattern_run(MU, 1200.0, **CUSP_RUN)
        fing = pattern_run(MU_FINGER, 50.0, **FINGER_RUN)
        out["cusping_run"] = [cusp.pattern_class(), cusp.diagnostics.spread[-1], _late_spread_rate(cusp)]
        out["fingering_run"] = [fing.pattern_class(), fing.diagnostics.spread[-1], _late_spread_rate(fing)]
        ok &= cusp.pattern_class() == "cusped" and fing.pattern_class() == "fingered"
    return CriterionResult("8", "simulated interface rates within 20% of lambda_c2 l^2; pattern classes", ok, out)


def _late_spread_rate(res) -> float:
    """Slope of the interface spread over the last third of the run (bounded cusps give about 0)."""
    t = np.asarray(res.diagnostics.t)
    s = np.asarray(res.diagnostics.spread)
    tail = t >= t[0] + 2 * (t[-1] - t[0]) / 3
    return float(np.polyfit(t[tail], s[tail], 1)[0])


CUSP_RUN = dict(Ly=300.0, Ny=32, dt=5.0, t_end=30000.0)
FINGER_RUN = dict(Ly=350.0, Ny=64, dt=0.5, t_end=4500.0)


@_timed
def criterion_9() -> CriterionResult:
    out = {}
    m = model()
    # Jacobian vs central differences
    rng = np.random.default_rng(1)
    u, v = rng.uniform(0, 7, 50), rng.uniform(0, 3, 50)
    h = 1e-6
    fd = np.array([(m.F(u + h, v) - m.F(u - h, v)) / (2 * h), (m.F(u, v + h) - m.F(u, v - h)) / (2 * h),
                   (m.G(u + h, v) - m.G(u - h, v)) / (2 * h), (m.G(u, v + h) - m.G(u, v - h)) / (2 * h)])
    jac_err = float(np.max(np.abs(fd - np.array(m.partials(u, v)))))
    out["jacobian_fd_error"] = jac_err
    # adjoint residual under mesh refinement
    f = solve_front_bvp(build_initial_guess(m, 1e-2, 0.0, h0=0.2))
    r1 = solve_adjoint(f, check_simple=False).continuous_residual(f)
    f2, _ = refine_front(f)
    r2 = solve_adjoint(f2, check_simple=False).continuous_residual(f2)
    adj_order = math.log2(r1 / r2)
    out["adjoint_residual_order"] = adj_order
    # quartic remainder of lambda_c(ell)
    exact = lambda_c2_exact(f2, solve_adjoint(f2, check_simple=False))
    rem = []
    for e0 in (4e-3, 2e-3):
        o = lambda_c2_oracle(f2, ells=[0.0, e0, 2 * e0])
        rem.append(abs(o.eigenvalues[1] - o.eigenvalues[0] - exact * e0**2))
    quart_order = math.log2(rem[0] / rem[1])
    out["quartic_remainder_order"] = quart_order
    # mesh and domain convergence at the reference point
    fr = tracker(1e-3).front(REFERENCE_NU)
    lam0 = lambda_c2_exact(fr, solve_adjoint(fr, check_simple=False))
    fine, _ = refine_front(fr)
    lam_h = lambda_c2_exact(fine, solve_adjoint(fine, check_simple=False))
    long = solve_front_bvp(remesh(fr, K=45.0))
    lam_L = lambda_c2_exact(long, solve_adjoint(long, check_simple=False))
    drift_h, drift_L = abs(lam_h - lam0) / abs(lam0), abs(lam_L - lam0) / abs(lam0)
    out.update(mesh_drift=drift_h, domain_drift=drift_L)
    # determinism of the simulator under worker counts
    fs = tracker(1e-2).front(1000.0)
    res = []
    for w in (1, 2, 4):
        cfg = SimConfig(front=fs, Ly=200.0, Ny=16, dt=1.0, t_end=20.0, noise=0.02, workers=w)
        res.append(run_simulation(cfg).final.U)
    det = all(np.array_equal(res[0], r) for r in res[1:])
    out["simulation_deterministic"] = det
    ok = (jac_err < 1e-6 and adj_order > 3.0 and quart_order > 3.5 and drift_h < 5e-3 and drift_L < 5e-3 and det)
    return CriterionResult("9", "property suites (Jacobian, adjoint order, quartic remainder, convergence, "
                           "determinism)", ok, out)


CRITERIA = {
    "1": criterion_1,
    "2": criterion_2,
    "3": criterion_3,
    "4": criterion_4,
    "5": criterion_5,
    "6": criterion_6,
    "7": criterion_7,
    "8": criterion_8,
    "9": criterion_9,
}


def run_all(ids=None) -> list[CriterionResult]:
    ids = ids or list(CRITERIA)
    out = []
    for i in ids:
        try:
            out.append(CRITERIA[i]())
        except Exception as exc:  # a crash is a failed criterion, not a crashed report
            out.append(CriterionResult(i, CRITERIA[i].__doc__ or CRITERIA[i].__name__, False,
                                       {"error": f"{type(exc).__name__}: {exc}"}))
    return out
