"""Linear stability of homogeneous states under 2D perturbations with differential flow.

A perturbation ``exp(i k xi + i ell y + lambda t)`` of a homogeneous state
satisfies ``lambda^2 + (p1 + i q1) lambda + (p2 + i q2) = 0``. Both roots lie
in the open left half plane iff ``p1 > 0`` and
``p1^2 p2 + p1 q1 q2 - q2^2 > 0``.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .kinetics import KlausmeierModel, ReactionModel, SteadyState

__all__ = [
    "DispersionCoefficients",
    "EquilibriumStabilityReport",
    "dispersion_coefficients",
    "stability_margin",
    "max_real_part",
    "check_equilibrium_stability",
    "stability_boundary_mu3",
]


@dataclass(frozen=True)
class DispersionCoefficients:
    p1: np.ndarray | float
    q1: np.ndarray | float
    p2: np.ndarray | float
    q2: np.ndarray | float

    @property
    def margin(self):
        return stability_margin(self.p1, self.q1, self.p2, self.q2)

    def roots(self):
        b = self.p1 + 1j * self.q1
        disc = np.sqrt(b * b - 4 * (self.p2 + 1j * self.q2))
        return (-b + disc) / 2, (-b - disc) / 2


def _jacobian(state: SteadyState, model: ReactionModel):
    if isinstance(state, SteadyState):
        return state.Fu, state.Fv, state.Gu, state.Gv
    return model.partials(*state)


def dispersion_coefficients(state, model: ReactionModel, delta: float, nu: float, k, ell) -> DispersionCoefficients:
    """Coefficients of the dispersion relation at wavenumbers ``(k, ell)`` (broadcasting)."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if nu < 0:
        raise ValueError("nu must be non-negative")
    Fu, Fv, Gu, Gv = _jacobian(state, model)
    k = np.asarray(k, float)
    ell = np.asarray(ell, float)
    K = k**2 + ell**2
    d2 = delta**-2
    p1 = (1 + d2) * K - Fu - Gv
    q1 = -nu * k
    p2 = (Fu * Gv - Fv * Gu) - (Fu * d2 + Gv) * K + d2 * K**2
    q2 = nu * k * (Fu - K)
    if p1.ndim == 0:
        return DispersionCoefficients(float(p1), float(q1), float(p2), float(q2))
    return DispersionCoefficients(p1, np.broadcast_to(q1, p1.shape), p2, np.broadcast_to(q2, p1.shape))


def stability_margin(p1, q1, p2, q2):
    """``min(p1, p1^2 p2 + p1 q1 q2 - q2^2)``; positive iff both roots are stable."""
    return np.minimum(p1, p1 * p1 * p2 + p1 * q1 * q2 - q2 * q2)


def max_real_part(p1, q1, p2, q2):
    """Largest real part among the two roots, computed directly."""
    b = np.asarray(p1) + 1j * np.asarray(q1)
    disc = np.sqrt(b * b - 4 * (np.asarray(p2) + 1j * np.asarray(q2)))
    return np.maximum(((-b + disc) / 2).real, ((-b - disc) / 2).real)


@dataclass
class EquilibriumStabilityReport:
    stable: bool
    margin: float
    k: float
    ell: float
    window: tuple[float, float]
    n_grid: int
    on_boundary: bool
    delta: float
    nu: float

    def as_dict(self) -> dict:
        return dict(stable=self.stable, margin=self.margin, k=self.k, ell=self.ell, k_max=self.window[0],
                    ell_max=self.window[1], n_grid=self.n_grid, on_boundary=self.on_boundary,
                    delta=self.delta, nu=self.nu)


def turnover_scale(state, model, delta: float) -> float:
    Fu, _, _, Gv = _jacobian(state, model)
    return max(1.0, 1.0 / delta) * math.sqrt(abs(Fu) + abs(Gv))


def _axis(top: float, n: int, decades: float) -> np.ndarray:
    return np.r_[0.0, np.logspace(math.log10(top) - decades, math.log10(top), n - 1)]


def check_equilibrium_stability(state, model: ReactionModel, delta: float, nu: float, k_max: float | None = None,
                                ell_max: float | None = None, n_grid: int = 121, decades: float = 9.0,
                                workers: int | None = None, refine: bool = True) -> EquilibriumStabilityReport:
    """Sample the stability margin on a (k, ell) grid, then polish the minimum with Nelder-Mead."""
    scale = turnover_scale(state, model, delta)
    k_max = k_max if k_max is not None else 10 * scale
    ell_max = ell_max if ell_max is not None else 10 * scale
    if min(k_max, ell_max) < scale:
        warnings.warn(f"wavenumber window below the turnover scale {scale:.3g}", stacklevel=2)
    ks = _axis(k_max, n_grid, decades)
    ls = _axis(ell_max, n_grid, decades)

    def rows(chunk):
        c = dispersion_coefficients(state, model, delta, nu, ks[chunk][:, None], ls[None, :])
        return c.margin

    workers = workers if workers is not None else int(os.environ.get("RDAFRONT_WORKERS", "1"))
    chunks = np.array_split(np.arange(len(ks)), max(1, workers))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(rows, chunks))
    else:
        parts = [rows(ch) for ch in chunks]
    grid = np.vstack(parts)
    i, j = np.unravel_index(int(np.argmin(grid)), grid.shape)
    best, kb, lb = float(grid[i, j]), float(ks[i]), float(ls[j])
    if refine:
        def f(x):
            kk = min(abs(x[0]), k_max)
            ll = min(abs(x[1]), ell_max)
            return float(dispersion_coefficients(state, model, delta, nu, kk, ll).margin)

        dk = max(ks[min(i + 1, n_grid - 1)] - ks[i], ks[i] - ks[max(i - 1, 0)]) or k_max
        dl = max(ls[min(j + 1, n_grid - 1)] - ls[j], ls[j] - ls[max(j - 1, 0)]) or ell_max
        simplex = np.array([[kb, lb], [kb + dk, lb], [kb, lb + dl]])
        res = minimize(f, [kb, lb], method="Nelder-Mead",
                       options=dict(initial_simplex=simplex, xatol=1e-12, fatol=0.0, maxiter=2000))
        if res.fun < best:
            best, kb, lb = float(res.fun), min(abs(res.x[0]), k_max), min(abs(res.x[1]), ell_max)
    on_boundary = bool(math.isclose(kb, k_max) or math.isclose(lb, ell_max))
    if on_boundary:
        warnings.warn("margin minimum on the edge of the wavenumber window; enlarge it", stacklevel=2)
    return EquilibriumStabilityReport(bool(best > 0), best, kb, lb, (float(k_max), float(ell_max)), n_grid,
                                      on_boundary, float(delta), float(nu))


def stability_boundary_mu3(model: KlausmeierModel, delta: float, nu: float, lo: float, hi: float,
                           rtol: float = 1e-6, **kw) -> float:
    """Bisect in ``mu3`` for the PDE-stability boundary of the upper vegetated state."""

    def stable(mu3):
        m = model.with_params((model.mu1, model.mu2, mu3))
        states = m.vegetated_states()
        if not states:
            raise ValueError(f"no vegetated state at mu3 = {mu3:g}")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return check_equilibrium_stability(states[-1], m, delta, nu, **kw).stable

    s_lo, s_hi = stable(lo), stable(hi)
    if s_lo == s_hi:
        raise ValueError("stability does not change across the bracket")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if stable(mid) == s_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
