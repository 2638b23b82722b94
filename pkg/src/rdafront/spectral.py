"""Transverse stability of a computed front.

The coefficient of ``ell^2`` in the critical eigenvalue is the quotient

    lambda_c2 = -<psi, B phi'> / <psi, phi'>,   B = diag(1, delta^-2),

with ``phi'`` the derivative of the front and ``psi`` the kernel element of
the adjoint. The adjoint is the transpose of the discretised operator, so the
discrete Fredholm condition holds exactly. The oracle instead tracks the
eigenvalue of ``L - ell^2 B`` near zero and fits its ``ell^2`` coefficient.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .front import FrontProfile, build_initial_guess, continue_front, solve_front_bvp
from .kinetics import ReactionModel
from .singular import classify_regime, coefficient_M

__all__ = [
    "AdjointSolution",
    "OracleResult",
    "StabilityReport",
    "SpectralError",
    "stability_operator",
    "solve_adjoint",
    "lambda_c2_exact",
    "lambda_c2_discrete",
    "lambda_c2_oracle",
    "stability_report",
    "LambdaTracker",
    "ContourResult",
    "zero_contour",
]


class SpectralError(RuntimeError):
    pass


def stability_operator(front: FrontProfile, ell: float = 0.0):
    """Interior block of ``L - ell^2 B`` (perturbations vanish at both ends).

    Returns ``(matrix, keep, b)`` where ``keep`` indexes the interior unknowns
    in the stacked ``(u, v)`` vector and ``b`` is the diagonal of ``B`` on them.
    """
    mesh = front.mesh()
    model, u, v, c, d, nu = front.model, front.u, front.v, front.c, front.delta, front.nu
    D1, D2 = mesh.D1, mesh.D2
    n = mesh.n
    Fu, Fv, Gu, Gv = model.partials(u, v)
    J11 = D2 + c * D1 + sp.diags(Fu - ell**2)
    J22 = D2 / d**2 + (nu + c) * D1 + sp.diags(Gv - ell**2 / d**2)
    J = sp.bmat([[J11, sp.diags(Fv)], [sp.diags(Gu), J22]], format="csr")
    keep = np.r_[1 : n - 1, n + 1 : 2 * n - 1]
    b = np.r_[np.ones(n - 2), np.full(n - 2, 1.0 / d**2)]
    return J[keep][:, keep].tocsc(), keep, b


def _inverse_iteration(lu, x0, trans="N", sigma=0.0, maxiter=60, tol=1e-15):
    x = x0 / np.linalg.norm(x0)
    lam = None
    for k in range(1, maxiter + 1):
        y = lu.solve(x, trans=trans)
        mu = float(x @ y)
        new = sigma + 1.0 / mu
        x = y / np.linalg.norm(y)
        if lam is not None and abs(new - lam) <= tol * max(1.0, abs(new)):
            lam = new
            break
        lam = new
    return lam, x, k


def _near_zero_spectrum(L, lu, k: int = 3, iters: int = 25, seed: int = 0) -> np.ndarray:
    """Ritz values of the ``k`` eigenvalues nearest 0 by subspace inverse iteration."""
    rng = np.random.default_rng(seed)
    Q = np.linalg.qr(rng.standard_normal((L.shape[0], k)))[0]
    for _ in range(iters):
        Y = np.column_stack([lu.solve(Q[:, j]) for j in range(k)])
        Q = np.linalg.qr(Y)[0]
    H = Q.T @ (L @ Q)
    ev = np.linalg.eigvals(H)
    return ev[np.argsort(np.abs(ev))]


@dataclass
class AdjointSolution:
    uA: np.ndarray = field(repr=False)
    vA: np.ndarray = field(repr=False)
    #: eigenvalue of the discrete operator closest to 0 (translation eigenvalue)
    eigenvalue: float = 0.0
    #: ||L^T psi - lambda psi|| / ||psi||
    residual: float = 0.0
    #: next eigenvalue nearest 0 (simplicity gap)
    gap: complex = 0.0
    #: raw <phi', psi> / (|phi'| |psi|) before normalisation
    overlap: float = 0.0
    psi: np.ndarray = field(default=None, repr=False)
    right: np.ndarray = field(default=None, repr=False)

    def continuous_residual(self, front: FrontProfile) -> float:
        """Residual of the continuous adjoint equations applied to (uA, vA), relative, interior nodes."""
        mesh = front.mesh()
        D1, D2 = mesh.D1, mesh.D2
        u, v, c, d, nu = front.u, front.v, front.c, front.delta, front.nu
        Fu, Fv, Gu, Gv = front.model.partials(u, v)
        uA, vA = self.uA, self.vA
        r1 = D2 @ uA - c * (D1 @ uA) + Fu * uA + Gu * vA
        r2 = d**2 * ((D2 @ vA) / d**2 - (nu + c) * (D1 @ vA) + Fv * uA + Gv * vA)
        sl = slice(3, -3)
        w = mesh.w[sl]
        num = math.sqrt(np.sum(w * (r1[sl] ** 2 + r2[sl] ** 2)))
        den = math.sqrt(np.sum(w * (uA[sl] ** 2 + vA[sl] ** 2)))
        return num / den


def solve_adjoint(front: FrontProfile, simple_tol: float = 1e-6, check_simple: bool = True) -> AdjointSolution:
    """Kernel element of the discrete adjoint by inverse iteration at shift 0."""
    L, keep, _ = stability_operator(front)
    mesh = front.mesh()
    n = mesh.n
    lu = spla.splu(L)
    phi = np.concatenate([mesh.D1 @ front.u, mesh.D1 @ front.v])[keep]
    lam_l, psi, _ = _inverse_iteration(lu, phi, trans="T")
    lam_r, right, _ = _inverse_iteration(lu, phi)
    res = float(np.linalg.norm(L.T @ psi - lam_l * psi))
    gap = complex("nan")
    if check_simple:
        ev = _near_zero_spectrum(L, lu)
        gap = complex(ev[1])
        if abs(ev[0]) > simple_tol:
            raise SpectralError(f"no eigenvalue within {simple_tol:g} of 0 (nearest {ev[0]:.3g})")
        if abs(ev[1]) <= simple_tol:
            raise SpectralError(f"zero eigenvalue not simple: {ev[0]:.3g}, {ev[1]:.3g}")
    overlap = float(psi @ phi) / (np.linalg.norm(psi) * np.linalg.norm(phi))
    if abs(overlap) < 1e-10:
        raise SpectralError("adjoint kernel is orthogonal to the front derivative")
    full = np.zeros(2 * n)
    full[keep] = psi
    wfull = np.concatenate([mesh.w, mesh.w])
    g = full / wfull
    uA, vA = g[:n], g[n:]
    norm = mesh.integrate((mesh.D1 @ front.u) * uA + (mesh.D1 @ front.v) * vA)
    return AdjointSolution(uA / norm, vA / norm, float(lam_l), res, gap, overlap, psi, right)


def lambda_c2_exact(front: FrontProfile, adjoint: AdjointSolution) -> float:
    mesh = front.mesh()
    up = mesh.D1 @ front.u
    vp = mesh.D1 @ front.v
    den = mesh.integrate(up * adjoint.uA + vp * adjoint.vA)
    if abs(den) < 1e-12:
        raise SpectralError("denominator of the stability quotient vanishes")
    num = mesh.integrate(up * adjoint.uA + vp * adjoint.vA / front.delta**2)
    return float(-num / den)


def lambda_c2_discrete(front: FrontProfile, adjoint: AdjointSolution) -> float:
    """Same quotient with the discrete right eigenvector instead of ``phi'`` (exact ell^2 coefficient of the matrix)."""
    _, keep, b = stability_operator(front)
    r, psi = adjoint.right, adjoint.psi
    return float(-(psi @ (b * r)) / (psi @ r))


@dataclass
class OracleResult:
    value: float
    ells: np.ndarray
    eigenvalues: np.ndarray
    quartic: float
    fit_residual: float
    quadratic_only: float


def lambda_c2_oracle(front: FrontProfile, ells=None, ell0: float | None = None, overlap_tol: float = 0.5,
                     max_halvings: int = 4) -> OracleResult:
    """Fit ``lambda(ell) - lambda(0) = a ell^2 + b ell^4`` to tracked eigenvalues."""
    if ells is None:
        ell0 = ell0 or 1e-2 * min(1.0, front.delta * math.sqrt(front.nu) + front.delta)
    mesh = front.mesh()
    L0, keep, b = stability_operator(front)
    phi = np.concatenate([mesh.D1 @ front.u, mesh.D1 @ front.v])[keep]
    B = sp.diags(b)
    for _ in range(max_halvings + 1):
        ls = np.asarray(ells if ells is not None else [0.0, ell0, 2 * ell0], float)
        if len(ls) < 3:
            raise ValueError("need at least three wavenumbers")
        lams = []
        ok = True
        for ell in ls:
            lu = spla.splu((L0 - ell**2 * B).tocsc())
            lam, x, _ = _inverse_iteration(lu, phi)
            if abs(x @ phi) / np.linalg.norm(phi) < overlap_tol:
                ok = False
                break
            lams.append(lam)
        if ok:
            break
        if ells is not None:
            raise SpectralError("eigenvalue tracking failed for the given wavenumbers")
        ell0 *= 0.5
    else:
        raise SpectralError("eigenvalue tracking failed after halving ell0")
    lams = np.array(lams)
    i0 = int(np.argmin(np.abs(ls)))
    mask = np.arange(len(ls)) != i0
    y = lams[mask] - lams[i0]
    X = np.column_stack([ls[mask] ** 2, ls[mask] ** 4])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.linalg.norm(X @ coef - y) / max(np.linalg.norm(y), 1e-300))
    lmin = np.min(ls[mask])
    quad = float((lams[np.argmin(np.where(mask, ls, np.inf))] - lams[i0]) / lmin**2)
    return OracleResult(float(coef[0]), ls, lams, float(coef[1]), resid, quad)


@dataclass
class StabilityReport:
    delta: float
    nu: float
    regime: str
    c: float
    lambda2_exact: float
    lambda2_oracle: float | None
    lambda2_asymptotic: float | None
    translation_eigenvalue: float
    gap: complex
    oracle_fit_residual: float | None = None

    @property
    def agree_in_sign(self) -> bool | None:
        if self.lambda2_oracle is None:
            return None
        return bool(np.sign(self.lambda2_exact) == np.sign(self.lambda2_oracle))

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "nu": self.nu,
            "regime": self.regime,
            "c": self.c,
            "lambda2_exact": self.lambda2_exact,
            "lambda2_oracle": self.lambda2_oracle,
            "lambda2_asymptotic": self.lambda2_asymptotic,
            "translation_eigenvalue": self.translation_eigenvalue,
            "gap_real": self.gap.real,
            "gap_imag": self.gap.imag,
            "oracle_fit_residual": self.oracle_fit_residual,
            "sign_agreement": self.agree_in_sign,
        }


def stability_report(front: FrontProfile, oracle: bool = True, asymptotic: bool = False) -> StabilityReport:
    adj = solve_adjoint(front)
    lam = lambda_c2_exact(front, adj)
    orc = lambda_c2_oracle(front) if oracle else None
    asym = None
    if asymptotic:
        from .singular import asymptotic_lambda2

        asym = asymptotic_lambda2(front.model, classify_regime(front.delta, front.nu)).lambda2
    return StabilityReport(front.delta, front.nu, classify_regime(front.delta, front.nu).tag, front.c, lam,
                           orc.value if orc else None, asym, adj.eigenvalue, adj.gap,
                           orc.fit_residual if orc else None)


# ---------------------------------------------------------------- lambda along nu and its zero


class LambdaTracker:
    """Evaluates ``nu -> lambda_c2`` at fixed delta, warm-starting from the nearest converged front."""

    def __init__(self, model: ReactionModel, delta: float, start: FrontProfile | None = None, h0: float = 0.1,
                 K: float = 30.0):
        self.model, self.delta, self.K = model, float(delta), K
        if start is None:
            start = solve_front_bvp(build_initial_guess(model, delta, 0.0, h0=h0, K=K))
        self.fronts: dict[float, FrontProfile] = {start.nu: start}
        self.values: dict[float, float] = {}

    def front(self, nu: float) -> FrontProfile:
        nu = float(nu)
        if nu in self.fronts:
            return self.fronts[nu]
        near = min(self.fronts, key=lambda k: abs(math.log1p(k) - math.log1p(nu)))
        branch = continue_front(self.fronts[near], "nu", nu, K=self.K)
        if branch.status != "completed":
            raise SpectralError(f"continuation to nu = {nu:g} failed: {branch.status}")
        self.fronts[nu] = branch.last
        return branch.last

    def __call__(self, nu: float) -> float:
        nu = float(nu)
        if nu not in self.values:
            f = self.front(nu)
            self.values[nu] = lambda_c2_exact(f, solve_adjoint(f, check_simple=False))
        return self.values[nu]

    def find_zero(self, seed: float, factor: float = 1.5, max_expand: int = 30, rtol: float = 1e-7) -> float:
        """Zero of ``lambda_c2(nu)`` bracketed geometrically around ``seed``."""
        a = seed / factor
        fa = self(a)
        b = a
        fb = fa
        for _ in range(max_expand):
            b = a * factor if fa > 0 else a / factor
            fb = self(b)
            if np.sign(fb) != np.sign(fa):
                break
            a, fa = b, fb
        else:
            raise SpectralError(f"no sign change of lambda_c2 near nu = {seed:g}")
        lo, hi = sorted((a, b))
        return brentq(self, lo, hi, xtol=rtol * lo, rtol=1e-12)


@dataclass
class ContourResult:
    deltas: np.ndarray
    nu_star: np.ndarray
    slope: float
    seeds: np.ndarray

    def scaled(self) -> np.ndarray:
        return self.nu_star * self.deltas ** (4 / 3)


def _contour_point(args):
    model, delta, seed, h0, K = args
    return LambdaTracker(model, delta, h0=h0, K=K).find_zero(seed)


def zero_contour(model: ReactionModel, deltas, seeds=None, workers: int | None = None, h0: float = 0.1,
                 K: float = 30.0) -> ContourResult:
    """``nu*`` with ``lambda_c2(nu*, delta) = 0`` for each delta, and the log-log slope."""
    deltas = np.asarray(sorted(float(d) for d in deltas))
    if seeds is None:
        M = coefficient_M(model)["G2"]
        if not M > 0:
            raise SpectralError("no predicted sign change (M <= 0)")
        seeds = M ** (1 / 3) * deltas ** (-4 / 3)
    seeds = np.asarray(seeds, float)
    jobs = [(model, d, s, h0, K) for d, s in zip(deltas, seeds)]
    workers = workers if workers is not None else int(os.environ.get("RDAFRONT_WORKERS", "1"))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            nus = list(ex.map(_contour_point, jobs))
    else:
        nus = [_contour_point(j) for j in jobs]
    nus = np.array(nus)
    slope = float(np.polyfit(np.log(deltas), np.log(nus), 1)[0]) if len(deltas) > 1 else math.nan
    return ContourResult(deltas, nus, slope, seeds)
