"""Singular skeleton of the front: layer heteroclinic, slow orbits, asymptotic coefficients."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .kinetics import KlausmeierModel, NullclineBranch, ReactionModel, front_states
from .mesh import fd_weights

__all__ = [
    "RegimeParams",
    "classify_regime",
    "LayerFront",
    "solve_layer_front",
    "klausmeier_layer_front",
    "weighted_integrals",
    "SlowOrbits",
    "reduced_slow_orbits",
    "zeta_orbits",
    "strong_q_profile",
    "AsymptoticStabilityReport",
    "asymptotic_lambda2",
    "critical_advection",
    "ShootingError",
    "IntersectionError",
    "DivergentIntegralError",
]

_RTOL = 3e-14
_ATOL = 1e-16


class ShootingError(RuntimeError):
    pass


class IntersectionError(RuntimeError):
    pass


class DivergentIntegralError(ArithmeticError):
    pass


# ---------------------------------------------------------------- regimes


@dataclass(frozen=True)
class RegimeParams:
    delta: float
    nu: float
    r0: float = 0.05
    delta0: float = 0.02
    rbar0: float = 2.0
    dbar0: float = 2.0

    @property
    def r(self) -> float:
        return self.delta**2 * self.nu

    @property
    def eps(self) -> float:
        return math.inf if self.nu == 0 else 1.0 / self.nu

    @property
    def rbar(self) -> float:
        return self.delta * self.nu

    @property
    def dbar(self) -> float:
        return math.inf if self.r == 0 else self.delta / self.r

    @property
    def tag(self) -> str:
        weak_edge = 1.0 / self.delta
        strong_edge = self.r0 / self.delta**2
        if self.nu <= weak_edge or math.isclose(self.nu, weak_edge, rel_tol=1e-12):
            return "Weak"
        if self.nu < strong_edge and not math.isclose(self.nu, strong_edge, rel_tol=1e-12):
            return "Intermediate"
        return "Strong"

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "nu": self.nu,
            "r": self.r,
            "eps": self.eps,
            "rbar": self.rbar,
            "dbar": self.dbar,
            "r0": self.r0,
            "delta0": self.delta0,
            "rbar0": self.rbar0,
            "dbar0": self.dbar0,
            "regime": self.tag,
        }


def classify_regime(delta: float, nu: float, r0: float = 0.05, **thresholds) -> RegimeParams:
    if not delta > 0:
        raise ValueError("delta must be positive")
    if nu < 0:
        raise ValueError("nu must be non-negative")
    if not 0 < r0 < 1:
        raise ValueError("r0 must lie in (0, 1)")
    reg = RegimeParams(float(delta), float(nu), float(r0), **thresholds)
    if delta > reg.delta0:
        warnings.warn(f"delta = {delta} exceeds delta0 = {reg.delta0}", RuntimeWarning, stacklevel=2)
    return reg


# ---------------------------------------------------------------- layer problem


def _front_branches(model: ReactionModel) -> tuple[NullclineBranch, NullclineBranch]:
    minus, plus = front_states(model)
    by_label = {b.label: b for b in model.branches()}
    return by_label[minus.branch], by_label[plus.branch]


@dataclass
class LayerFront:
    """Fast heteroclinic ``u_*`` of ``u'' + c_* u' + F(u, v_*) = 0``."""

    v_star: float
    c_star: float
    xi: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    u_minus: float = 0.0
    u_plus: float = 0.0
    #: linear decay rates at the two ends (positive on the left, negative on the right)
    rate_minus: float = 0.0
    rate_plus: float = 0.0
    model: ReactionModel | None = field(default=None, repr=False)

    @property
    def L(self) -> float:
        return float(self.xi[-1])

    def evaluate(self, x) -> tuple[np.ndarray, np.ndarray]:
        """``(u_*, u_*')`` at arbitrary points; linear tails outside the window."""
        x = np.asarray(x, dtype=float)
        spl = CubicHermiteSpline(self.xi, self.u, self.p)
        inside = np.clip(x, self.xi[0], self.xi[-1])
        u = spl(inside)
        p = spl(inside, 1)
        lo = x < self.xi[0]
        hi = x > self.xi[-1]
        if np.any(lo):
            d = (self.u[0] - self.u_minus) * np.exp(self.rate_minus * (x[lo] - self.xi[0]))
            u[lo] = self.u_minus + d
            p[lo] = self.rate_minus * d
        if np.any(hi):
            d = (self.u[-1] - self.u_plus) * np.exp(self.rate_plus * (x[hi] - self.xi[-1]))
            u[hi] = self.u_plus + d
            p[hi] = self.rate_plus * d
        return u, p

    def residual(self) -> np.ndarray:
        """ODE residual at interior nodes, from 8th-order differences of ``u``."""
        h = self.xi[1] - self.xi[0]
        c = fd_weights(0.0, np.arange(-4, 5, dtype=float), 2)
        u = self.u
        n = len(u)
        d1 = np.zeros(n - 8)
        d2 = np.zeros(n - 8)
        for k in range(9):
            d1 += c[k, 1] * u[k : n - 8 + k]
            d2 += c[k, 2] * u[k : n - 8 + k]
        d1 /= h
        d2 /= h * h
        ui = u[4:-4]
        return d2 + self.c_star * d1 + self.model.F(ui, np.full_like(ui, self.v_star))


def _saddle_rates(model: ReactionModel, u0: float, v: float, c: float) -> tuple[float, float]:
    Fu = float(model.partials(np.float64(u0), np.float64(v))[0])
    if Fu >= 0:
        raise ShootingError(f"u = {u0:g} is not a saddle of the layer flow at v = {v:g} (F_u = {Fu:g})")
    root = math.sqrt(c * c - 4.0 * Fu)
    return (-c + root) / 2.0, (-c - root) / 2.0


def _layer_window(u_minus, u_plus, mu_u, mu_s, tol=1e-10):
    jump = abs(u_plus - u_minus)
    L = max(math.log(0.5 * jump / tol) / mu_u, math.log(0.5 * jump / tol) / -mu_s)
    h = 0.05 / max(mu_u, -mu_s, 1e-300)
    h = min(h, L / 200.0)
    n = 2 * int(math.ceil(L / h)) + 1
    return np.linspace(-L, L, n)


def solve_layer_front(
    model: ReactionModel,
    v_star: float,
    c_guess: float = 0.0,
    c_bracket: tuple[float, float] | None = None,
    c_tol: float = 1e-12,
    seed: float = 1e-9,
) -> LayerFront:
    """Shoot for the layer heteroclinic at ``v = v_star``.

    The unstable manifold of ``(u_-, 0)`` overshoots ``u_+`` for speeds below
    the critical one and turns back for speeds above it; the speed is
    bisected on that sign.
    """
    fm, fp = _front_branches(model)
    if not (fm.contains(v_star) and fp.contains(v_star)):
        raise ShootingError(f"v_* = {v_star:g} outside the branch domains")
    um = float(fm(v_star))
    up = float(fp(v_star))
    s = 1.0 if up > um else -1.0
    jump = abs(up - um)
    vv = float(v_star)

    def rhs(t, y, c):
        return [y[1], -c * y[1] - model.F(y[0], vv)]

    def shoot(c):
        mu_u, _ = _saddle_rates(model, um, vv, c)
        y0 = [um + s * seed * jump, s * seed * jump * mu_u]

        def over(t, y, c):
            return s * (y[0] - up)

        over.terminal = True
        over.direction = 1

        def turn(t, y, c):
            return s * y[1]

        turn.terminal = True
        turn.direction = -1

        def escape(t, y, c):
            return 1e3 * (1 + jump) - abs(y[0])

        escape.terminal = True
        T = 50.0 * (math.log(1.0 / seed) + 10.0) / mu_u
        sol = solve_ivp(rhs, (0.0, T), y0, args=(c,), events=(over, turn, escape), rtol=_RTOL, atol=_ATOL * jump, method="DOP853")
        if sol.t_events[2].size:
            raise ShootingError("trajectory escaped the phase-plane window")
        if sol.t_events[0].size:
            return 1
        if sol.t_events[1].size:
            return -1
        return 0

    if c_bracket is None:
        c0 = float(c_guess)
        s0 = shoot(c0)
        if s0 == 0:
            lo = hi = c0
        else:
            step = 0.5 * max(1.0, abs(c0))
            other = c0 + step * s0
            for _ in range(60):
                if shoot(other) != s0:
                    break
                step *= 2.0
                other = c0 + step * s0
            else:
                raise ShootingError("no sign change of the shooting functional while expanding the speed bracket")
            lo, hi = (c0, other) if s0 > 0 else (other, c0)
    else:
        lo, hi = map(float, c_bracket)
        slo, shi = shoot(lo), shoot(hi)
        if not (slo >= 0 and shi <= 0 and slo != shi):
            raise ShootingError(f"no sign change of the shooting functional on [{lo}, {hi}]")
    while hi - lo > c_tol:
        mid = 0.5 * (lo + hi)
        sm = shoot(mid)
        if sm == 0:
            lo = hi = mid
            break
        if sm > 0:
            lo = mid
        else:
            hi = mid
    c = 0.5 * (lo + hi)
    return _stitched_profile(model, vv, c, um, up, seed)


def _stitched_profile(model, v, c, um, up, seed) -> LayerFront:
    s = 1.0 if up > um else -1.0
    jump = abs(up - um)
    mid = 0.5 * (um + up)
    mu_u, _ = _saddle_rates(model, um, v, c)
    _, mu_s = _saddle_rates(model, up, v, c)

    def rhs(t, y):
        return [y[1], -c * y[1] - model.F(y[0], v)]

    def at_mid(t, y):
        return y[0] - mid

    at_mid.terminal = True
    T = 50.0 * (math.log(1.0 / seed) + 10.0) / min(mu_u, -mu_s)
    xi = _layer_window(um, up, mu_u, mu_s)
    # short steps keep the dense interpolant at integrator accuracy
    hmax = xi[1] - xi[0]
    left = solve_ivp(rhs, (0.0, T), [um + s * seed * jump, s * seed * jump * mu_u], events=at_mid,
                     rtol=_RTOL, atol=_ATOL * jump, method="DOP853", dense_output=True, max_step=hmax)
    right = solve_ivp(rhs, (0.0, -T), [up - s * seed * jump, -s * seed * jump * mu_s], events=at_mid,
                      rtol=_RTOL, atol=_ATOL * jump, method="DOP853", dense_output=True, max_step=hmax)
    if not (left.t_events[0].size and right.t_events[0].size):
        raise ShootingError("layer trajectory did not reach the interface midpoint")
    tl = left.t_events[0][0]
    tr = right.t_events[0][0]
    u = np.empty_like(xi)
    p = np.empty_like(xi)
    # left piece: xi = t - tl, defined for t in [0, tl]
    neg = xi <= 0
    t = xi[neg] + tl
    inside = t >= 0
    y = left.sol(t[inside])
    uu = np.empty(t.size)
    pp = np.empty(t.size)
    uu[inside], pp[inside] = y[0], y[1]
    d = s * seed * jump * np.exp(mu_u * t[~inside])
    uu[~inside] = um + d
    pp[~inside] = mu_u * d
    u[neg], p[neg] = uu, pp
    pos = ~neg
    t = xi[pos] + tr
    inside = t <= 0
    y = right.sol(t[inside])
    uu = np.empty(t.size)
    pp = np.empty(t.size)
    uu[inside], pp[inside] = y[0], y[1]
    d = -s * seed * jump * np.exp(mu_s * t[~inside])
    uu[~inside] = up + d
    pp[~inside] = mu_s * d
    u[pos], p[pos] = uu, pp
    return LayerFront(float(v), float(c), xi, u, p, float(um), float(up), mu_u, mu_s, model)


def klausmeier_layer_front(model: KlausmeierModel, v_star: float) -> LayerFront:
    """Closed-form logistic front ``u = b / (1 + exp(-beta b xi))``.

    With ``a, b`` the middle and upper roots of ``F(., v_*)``, ``beta =
    sqrt(mu2 v_* / 2)`` and ``c_* = beta (2a - b)``.
    """
    if v_star < model.fold_v:
        raise ValueError("v_* below the fold of the nonzero nullcline")
    a = float(model.middle_branch(v_star))
    b = float(model.upper_branch(v_star))
    beta = math.sqrt(model.mu2 * v_star / 2.0)
    c = beta * (2.0 * a - b)
    mu_u, _ = _saddle_rates(model, 0.0, v_star, c)
    _, mu_s = _saddle_rates(model, b, v_star, c)
    xi = _layer_window(0.0, b, mu_u, mu_s)
    e = np.exp(-np.clip(beta * b * xi, -700.0, 700.0))
    u = b / (1.0 + e)
    p = beta * u * (b - u)
    return LayerFront(float(v_star), c, xi, u, p, 0.0, b, mu_u, mu_s, model)


def weighted_integrals(layer: LayerFront, model: ReactionModel | None = None) -> tuple[float, float, float]:
    """``(F_*, G_*, N_*)`` for a layer front."""
    model = model or layer.model
    xi, u, p, c, v = layer.xi, layer.u, layer.p, layer.c_star, layer.v_star
    # convergence of the exponentially weighted tails
    for name, rate in (("left", c + layer.rate_minus), ("right", c + layer.rate_plus)):
        if (name == "left" and rate <= 0) or (name == "right" and rate >= 0):
            raise DivergentIntegralError(f"weighted integrand does not decay on the {name}: rate {rate:g}")
    vv = np.full_like(u, v)
    Fv = model.partials(u, vv)[1]
    weight = np.exp(c * xi)

    def quad_with_tails(f):
        total = simpson(f, x=xi)
        h = xi[1] - xi[0]
        scale = np.max(np.abs(f))
        for end, nxt in ((0, 1), (-1, -2)):
            # tails below roundoff carry no information about their rate
            if abs(f[end]) < 1e-13 * scale:
                continue
            k = math.log(abs(f[nxt] / f[end])) / h
            if k <= 0:
                raise DivergentIntegralError(f"tail of weighted integrand grows (rate {k:g})")
            total += f[end] / k
        return float(total)

    F_star = quad_with_tails(Fv * weight * p)
    N_star = quad_with_tails(weight * p * p)
    G_star = float(model.G(layer.u_plus, v) - model.G(layer.u_minus, v))
    return F_star, G_star, N_star


# ---------------------------------------------------------------- slow orbits


@dataclass
class SlowOrbits:
    """Slow pieces of the singular front meeting at the jump ``(v_*, q_*)``.

    ``v_minus``/``q_minus`` are defined for ``z <= 0`` and ``v_plus``/``q_plus``
    for ``z >= 0`` where ``z`` is the slow variable named by ``scaling``
    (``"zeta"`` for the weak/intermediate reduced flow, ``"eta"`` for the
    strong-advection reduced flow).
    """

    v_star: float
    q_star: float
    scaling: str
    rbar: float
    V_minus: float
    V_plus: float
    v_minus: Callable = field(repr=False)
    q_minus: Callable = field(repr=False)
    v_plus: Callable = field(repr=False)
    q_plus: Callable = field(repr=False)
    z_min: float = -math.inf
    z_max: float = math.inf
    rate_minus: float = 0.0
    rate_plus: float = 0.0
    transversality: float = math.nan
    slow_integral: float = math.nan

    def residual(self, model: ReactionModel) -> float:
        """Max residual of the reduced flow along both pieces (4th-order differences of the dense output)."""
        fm, fp = _front_branches(model)
        h = 2.5e-4
        worst = 0.0
        for vf, qf, br, zz in (
            (self.v_minus, self.q_minus, fm, np.linspace(-20.0, -2 * h, 400)),
            (self.v_plus, self.q_plus, fp, np.linspace(2 * h, 20.0, 400)),
        ):
            def d(f):
                return (f(zz - 2 * h) - 8 * f(zz - h) + 8 * f(zz + h) - f(zz + 2 * h)) / (12 * h)

            v = vf(zz)
            if self.scaling == "zeta":
                r1 = d(vf) - qf(zz)
                r2 = d(qf) + self.rbar * qf(zz) + model.G(br(v), v)
                worst = max(worst, float(np.max(np.abs(r1))), float(np.max(np.abs(r2))))
            else:
                worst = max(worst, float(np.max(np.abs(d(vf) + model.G(br(v), v)))))
        return worst


def _reduced_rhs(branch: NullclineBranch, model: ReactionModel, rbar: float):
    def rhs(t, y):
        v = y[0]
        return [y[1], -(rbar * y[1] + model.G(branch(v), v))]

    return rhs


def _kappa(branch: NullclineBranch, model: ReactionModel, V: float) -> float:
    u = branch(V)
    _, _, Gu, Gv = model.partials(u, np.float64(V))
    return float(Gu * branch.derivative(V) + Gv)


def _domain_event(branch: NullclineBranch, margin: float = 1e-9):
    lo, hi = branch.domain

    def ev(t, y):
        return min(y[0] - lo - margin, hi + margin - y[0]) if math.isfinite(hi) else y[0] - lo - margin

    ev.terminal = True
    return ev


def reduced_slow_orbits(model: ReactionModel, regime: RegimeParams, seed: float = 1e-7,
                        transversality_margin: float = 1e-6) -> SlowOrbits:
    if regime.tag == "Strong":
        minus, plus = front_states(model)
        fm, _ = _front_branches(model)
        return _strong_orbits(model, fm, minus.V, plus.V)
    return zeta_orbits(model, regime.rbar, seed, transversality_margin)


def zeta_orbits(model: ReactionModel, rbar: float, seed: float = 1e-7,
                transversality_margin: float = 1e-6) -> SlowOrbits:
    """Manifolds of the planar reduced flows ``v' = q, q' = -(rbar q + G(f(v), v))``."""
    minus, plus = front_states(model)
    fm, fp = _front_branches(model)
    Vm, Vp = minus.V, plus.V
    km = _kappa(fm, model, Vm)
    kp = _kappa(fp, model, Vp)
    if km >= 0 or kp >= 0:
        raise IntersectionError("steady states are not saddles of the reduced flows")
    mu_u = (-rbar + math.sqrt(rbar * rbar - 4 * km)) / 2
    mu_s = (-rbar - math.sqrt(rbar * rbar - 4 * kp)) / 2
    sm = math.copysign(1.0, Vp - Vm)
    em = np.array([1.0, mu_u]) / math.hypot(1.0, mu_u)
    ep = np.array([1.0, mu_s]) / math.hypot(1.0, mu_s)
    y0m = np.array([Vm, 0.0]) + sm * seed * em
    y0p = np.array([Vp, 0.0]) - sm * seed * ep
    rhs_m = _reduced_rhs(fm, model, rbar)
    rhs_p = _reduced_rhs(fp, model, rbar)
    span = abs(Vm - Vp)

    def far(t, y):
        return 10.0 * span + abs(Vm) + abs(Vp) - abs(y[0])

    far.terminal = True
    Tm = 40.0 * (math.log(1 / seed) + 5) / mu_u
    Tp = 40.0 * (math.log(1 / seed) + 5) / -mu_s
    def past_plus(t, y):
        # the jump lies between V- and V+, so the unstable manifold is not needed beyond V+
        return sm * (Vp - y[0]) + 1e-3 * span

    past_plus.terminal = True
    # large rbar makes the minus-side flow stiff
    method = "DOP853" if rbar <= 10 else "LSODA"
    opts = {"max_step": 0.05} if method == "DOP853" else {}
    solm = solve_ivp(rhs_m, (0.0, Tm), y0m, rtol=_RTOL if method == "DOP853" else 1e-12, atol=_ATOL, method=method,
                     dense_output=True, events=(_domain_event(fm), far, past_plus), **opts)
    solp = solve_ivp(rhs_p, (0.0, -Tp), y0p, rtol=_RTOL, atol=_ATOL, method="DOP853",
                     dense_output=True, events=(_domain_event(fp), far), max_step=0.05 if rbar <= 10 else np.inf)
    tm, tp = _curve_intersection(solm, solp, rhs_m, rhs_p)
    ym = solm.sol(tm)
    yp = solp.sol(tp)
    fmv = np.array(rhs_m(tm, ym))
    fpv = np.array(rhs_p(tp, yp))
    angle = abs(fmv[0] * fpv[1] - fmv[1] * fpv[0]) / (np.linalg.norm(fmv) * np.linalg.norm(fpv))
    if angle < transversality_margin:
        raise IntersectionError(f"tangential intersection (margin {angle:.3g})")
    v_star = 0.5 * (ym[0] + yp[0])
    q_star = 0.5 * (ym[1] + yp[1])

    def vmi(z):
        return _orbit_eval(solm, np.asarray(z, float) + tm, 0, Vm, sm * seed * em, mu_u, 0.0, tm)

    def qmi(z):
        return _orbit_eval(solm, np.asarray(z, float) + tm, 1, 0.0, sm * seed * em, mu_u, 0.0, tm)

    def vpl(z):
        return _orbit_eval(solp, np.asarray(z, float) + tp, 0, Vp, -sm * seed * ep, mu_s, tp, 0.0)

    def qpl(z):
        return _orbit_eval(solp, np.asarray(z, float) + tp, 1, 0.0, -sm * seed * ep, mu_s, tp, 0.0)

    # slow integral S(rbar) with analytic tails beyond the seeds
    zm0 = -tm
    zp0 = -tp
    core_m = _weighted_square_integral(solm, 0.0, tm, rbar, tm)
    core_p = _weighted_square_integral(solp, tp, 0.0, rbar, tp)
    qs_m = y0m[1]
    qs_p = y0p[1]
    if rbar + 2 * mu_s >= 0:
        raise DivergentIntegralError(f"weight exp({rbar:g} z) outruns decay rate {mu_s:g} of v+_z")
    tail_m = math.exp(rbar * zm0) * qs_m**2 / (rbar + 2 * mu_u)
    tail_p = math.exp(rbar * zp0) * qs_p**2 / -(rbar + 2 * mu_s)
    S = float(core_m + core_p + tail_m + tail_p)
    return SlowOrbits(
        v_star=float(v_star),
        q_star=float(q_star),
        scaling="zeta",
        rbar=rbar,
        V_minus=Vm,
        V_plus=Vp,
        v_minus=vmi,
        q_minus=qmi,
        v_plus=vpl,
        q_plus=qpl,
        z_min=-math.inf,
        z_max=math.inf,
        rate_minus=mu_u,
        rate_plus=mu_s,
        transversality=float(angle),
        slow_integral=S,
    )


def _weighted_square_integral(sol, a, b, rbar, t0):
    """Gauss-Legendre quadrature of exp(rbar (t - t0)) q(t)^2 over the solver steps in [a, b]."""
    knots = np.unique(np.clip(np.concatenate([sol.t, [a, b]]), a, b))
    x, wts = np.polynomial.legendre.leggauss(8)
    lo, hi = knots[:-1], knots[1:]
    mid = 0.5 * (lo + hi)[:, None]
    half = 0.5 * (hi - lo)[:, None]
    t = (mid + half * x[None, :]).ravel()
    q = sol.sol(t)[1]
    f = np.exp(rbar * (t - t0)) * q * q
    return float(np.sum((half * wts[None, :]).ravel() * f))


def _orbit_eval(sol, t, comp, base, seed_vec, rate, t_lo, t_hi):
    """Dense orbit on [t_lo, t_hi] (seed at t = 0), linear tail beyond the seed."""
    t = np.atleast_1d(t)
    out = np.empty_like(t)
    inside = (t >= min(t_lo, t_hi, 0.0)) & (t <= max(t_lo, t_hi, 0.0))
    seed_side = (t < 0) if t_hi > 0 else (t > 0)
    if np.any(inside):
        out[inside] = sol.sol(t[inside])[comp]
    tail = seed_side & ~inside
    if np.any(tail):
        out[tail] = base + seed_vec[comp] * np.exp(rate * t[tail])
    rest = ~(inside | tail)
    if np.any(rest):
        # beyond the jump point (only used for plotting / guesses): clamp at the jump
        out[rest] = sol.sol(np.full(rest.sum(), t_hi if t_hi != 0.0 else t_lo))[comp]
    return out


def _curve_intersection(solm, solp, rhs_m, rhs_p) -> tuple[float, float]:
    """First crossing of the two (v, q) curves, polished by Newton in the two times."""
    tm = np.linspace(solm.t[0], solm.t[-1], 4000)
    tp = np.linspace(solp.t[0], solp.t[-1], 4000)
    A = solm.sol(tm).T
    B = solp.sol(tp).T
    best = None
    for j in range(len(B) - 1):
        b0, b1 = B[j], B[j + 1]
        d = b1 - b0
        a0 = A[:-1]
        e = A[1:] - a0
        den = e[:, 0] * d[1] - e[:, 1] * d[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            sa = ((b0[0] - a0[:, 0]) * d[1] - (b0[1] - a0[:, 1]) * d[0]) / den
            sb = ((b0[0] - a0[:, 0]) * e[:, 1] - (b0[1] - a0[:, 1]) * e[:, 0]) / den
        hit = np.nonzero((sa >= 0) & (sa <= 1) & (sb >= 0) & (sb <= 1))[0]
        if hit.size:
            i = hit[0]
            best = (tm[i] + sa[i] * (tm[i + 1] - tm[i]), tp[j] + sb[i] * (tp[j + 1] - tp[j]))
            break
    if best is None:
        raise IntersectionError("slow manifolds do not intersect")
    t1, t2 = best
    for _ in range(30):
        ya = solm.sol(t1)
        yb = solp.sol(t2)
        J = np.column_stack([rhs_m(t1, ya), -np.array(rhs_p(t2, yb))])
        dt = np.linalg.solve(J, -(ya - yb))
        t1 += dt[0]
        t2 += dt[1]
        if np.max(np.abs(dt)) < 1e-14 * max(1.0, abs(t1), abs(t2)):
            break
    return float(t1), float(t2)


def _strong_orbits(model, fm, Vm, Vp) -> SlowOrbits:
    lo, hi = sorted((Vm, Vp))
    vs = np.linspace(lo, hi, 201)[:-1] if Vm > Vp else np.linspace(lo, hi, 201)[1:]
    flow = -model.G(fm(vs), vs)
    if not np.all(np.sign(flow) == math.copysign(1.0, Vp - Vm)):
        raise IntersectionError("reduced flow on the minus branch does not carry V- to V+")
    km = _kappa(fm, model, Vm)

    def rhs(t, y):
        return [-model.G(fm(y[0]), y[0])]

    def near(t, y):
        return abs(y[0] - Vm) - 1e-10 * max(1.0, abs(Vm))

    near.terminal = True
    sol = solve_ivp(rhs, (0.0, -1e4), [Vp], rtol=_RTOL, atol=_ATOL, method="DOP853", dense_output=True, events=near)
    t_end = sol.t[-1]
    y_end = sol.y[0, -1]

    def vmi(z):
        z = np.atleast_1d(np.asarray(z, float))
        out = np.empty_like(z)
        inside = z >= t_end
        out[inside] = sol.sol(z[inside])[0]
        out[~inside] = Vm + (y_end - Vm) * np.exp(-km * (z[~inside] - t_end))
        return out

    def qmi(z):
        v = vmi(z)
        return -model.G(fm(v), v)

    const = lambda z: np.full_like(np.atleast_1d(np.asarray(z, float)), Vp)
    zero = lambda z: np.zeros_like(np.atleast_1d(np.asarray(z, float)))
    return SlowOrbits(float(Vp), float(-model.G(fm(Vp), Vp)), "eta", math.inf, Vm, Vp, vmi, qmi, const, zero,
                      rate_minus=-km, rate_plus=0.0)


def strong_q_profile(layer: LayerFront, model: ReactionModel, r: float, xi: np.ndarray | None = None):
    """``q~_*(xi) = -r int_{-inf}^xi exp(-r (xi - s)) G(u_*(s), v_*) ds`` on ``xi``.

    Computed as the decaying solution of ``q' = -r (q + G(u_*, v_*))`` started
    from its left equilibrium ``-G(u_-, v_*)``.
    """
    xi = layer.xi if xi is None else np.asarray(xi, float)
    v = layer.v_star
    x0 = min(float(xi[0]), layer.xi[0]) - 20.0 / max(r, layer.rate_minus)

    def g(x):
        return model.G(layer.evaluate(np.atleast_1d(x))[0], v)

    sol = solve_ivp(lambda x, q: -r * (q + g(x)), (x0, float(xi[-1])), [-float(model.G(layer.u_minus, v))],
                    t_eval=xi, rtol=1e-12, atol=1e-14, method="Radau" if r > 50 else "DOP853", dense_output=True)
    return sol.y[0], sol


# ---------------------------------------------------------------- asymptotics


@dataclass
class AsymptoticStabilityReport:
    regime: RegimeParams
    F_star: float
    G_star: float
    N_star: float
    c_star: float
    v_star: float
    slow_integral: float
    lambda2: float
    error_bound: float
    M: dict
    nu_crit: dict

    @property
    def criterion_sign(self) -> int:
        return int(np.sign(self.lambda2))

    def as_dict(self) -> dict:
        return {
            **self.regime.as_dict(),
            "F_star": self.F_star,
            "G_star": self.G_star,
            "N_star": self.N_star,
            "c_star": self.c_star,
            "v_star": self.v_star,
            "slow_integral": self.slow_integral,
            "lambda2": self.lambda2,
            "error_bound": self.error_bound,
            "criterion_sign": self.criterion_sign,
            "M": dict(self.M),
            "nu_crit": dict(self.nu_crit),
        }


def layer_for(model: ReactionModel, v_star: float, c_guess: float = 0.0) -> LayerFront:
    if isinstance(model, KlausmeierModel):
        return klausmeier_layer_front(model, v_star)
    return solve_layer_front(model, v_star, c_guess)


def coefficient_M(model: ReactionModel) -> dict:
    """Intermediate-regime coefficient with the inner integral in first and second power of ``G``.

    At leading order the slow orbit on the minus branch is frozen at
    ``v = V+`` over the unit exponential weight, so the inner integral
    reduces to ``G(f-(V+), V+)`` or its square.
    """
    minus, plus = front_states(model)
    fm, _ = _front_branches(model)
    layer = layer_for(model, plus.V)
    F_star, G_star, N_star = weighted_integrals(layer, model)
    g0 = float(model.G(fm(plus.V), plus.V))
    base = -(F_star / G_star) / N_star
    return {"G": base * g0, "G2": base * g0 * g0}


def _composite_lambda(model, delta, nu):
    slow = zeta_orbits(model, delta * nu)
    layer = layer_for(model, slow.v_star)
    F_star, G_star, N_star = weighted_integrals(layer, model)
    return -1.0 - (F_star / G_star) * slow.slow_integral / (delta * N_star)


def critical_advection(model: ReactionModel, delta: float, variants=("G", "G2", "slow")) -> dict:
    """Predicted sign-change advection ``M^{1/3} delta^{-4/3}`` for each ``M`` variant.

    ``"slow"`` locates the zero of ``-1 - (F_*/G_*) S(rbar) / (delta N_*)``
    with the full slow orbits at ``rbar = delta nu``; it contains the
    contribution of both slow pieces.
    """
    M = coefficient_M(model)
    out = {}
    for k in ("G", "G2"):
        if k in variants:
            out[k] = M[k] ** (1 / 3) * delta ** (-4 / 3) if M[k] > 0 else math.nan
    if "slow" in variants:
        guess = out.get("G2", M["G2"] ** (1 / 3) * delta ** (-4 / 3))
        f = lambda nu: _composite_lambda(model, delta, nu)
        lo, hi = guess / 1.5, guess * 1.5
        flo, fhi = f(lo), f(hi)
        for _ in range(4):
            if flo > 0 > fhi:
                break
            if flo <= 0:
                lo, flo = lo / 1.5, f(lo / 1.5)
            if fhi >= 0:
                hi, fhi = hi * 1.5, f(hi * 1.5)
        out["slow"] = brentq(f, lo, hi, xtol=1e-6 * guess) if flo > 0 > fhi else math.nan
    return out


def asymptotic_lambda2(model: ReactionModel, regime: RegimeParams, layer: LayerFront | None = None,
                       slow: SlowOrbits | None = None, variants=("G", "G2")) -> AsymptoticStabilityReport:
    tag = regime.tag
    if slow is None:
        slow = reduced_slow_orbits(model, regime)
    if layer is None:
        layer = layer_for(model, slow.v_star)
    if abs(layer.v_star - slow.v_star) > 1e-8 * max(1.0, abs(slow.v_star)):
        raise ValueError("layer and slow orbits disagree on the jump level")
    F_star, G_star, N_star = weighted_integrals(layer, model)
    M = coefficient_M(model)
    nu_crit = {k: (m ** (1 / 3) * regime.delta ** (-4 / 3) if m > 0 else math.nan) for k, m in M.items() if k in variants}
    delta = regime.delta
    S = slow.slow_integral
    if tag == "Weak":
        lam = -(1.0 / delta) * (F_star / G_star) * S / N_star
        err = abs(lam) * delta
    elif tag == "Intermediate":
        key = "G2" if "G2" in M else next(iter(M))
        lam = -1.0 + M[key] / (delta**4 * regime.nu**3)
        err = abs(lam) * max(regime.dbar**2 / math.sqrt(regime.r), regime.dbar**4 / regime.r) if regime.r > 0 else math.inf
    else:
        lam = -1.0
        err = regime.eps / regime.r
    return AsymptoticStabilityReport(regime, F_star, G_star, N_star, layer.c_star, layer.v_star,
                                     S, float(lam), float(err), M, nu_crit)
