"""Planar traveling fronts at finite (delta, nu): Newton BVP solver and continuation.

Unknowns are ``u, v`` on a stretched mesh and the speed ``c``. Interior rows
discretise

    u'' + c u' + F = 0,     delta^-2 v'' + (nu + c) v' + G = 0,

so the Jacobian block in ``(u, v)`` is exactly the linearised operator used
for the transverse stability computation. Each end carries two projection
conditions (the deviation from the rest state has no component along the
wrong eigenspace of the linearisation there) and a single integral phase
condition removes translations.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import PchipInterpolator

from .kinetics import ReactionModel, SteadyState, front_states, get_model
from .mesh import SinhMesh, sinh_mesh
from .singular import (
    LayerFront,
    RegimeParams,
    SlowOrbits,
    _front_branches,
    classify_regime,
    layer_for,
    reduced_slow_orbits,
)

__all__ = [
    "FrontProfile",
    "FrontBranch",
    "NewtonError",
    "HyperbolicityError",
    "NonMonotoneError",
    "boundary_matrix",
    "truncation_lengths",
    "build_initial_guess",
    "solve_front_bvp",
    "refine_front",
    "continue_front",
    "sweep",
    "save_profile",
    "load_profile",
]


class NewtonError(RuntimeError):
    pass


class HyperbolicityError(RuntimeError):
    pass


class NonMonotoneError(RuntimeError):
    pass


@dataclass
class FrontProfile:
    xi: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    c: float
    delta: float
    nu: float
    model: ReactionModel
    L_minus: float
    L_plus: float
    A: float = 20.0
    h0: float = 0.1
    orientation: int = 1
    residual: float = math.nan
    iterations: int = 0
    _mesh: SinhMesh | None = field(default=None, repr=False, compare=False)

    @property
    def mu(self) -> tuple[float, ...]:
        return self.model.params

    def mesh(self) -> SinhMesh:
        if self._mesh is None:
            m = sinh_mesh(self.L_minus, self.L_plus, self.A, self.h0)
            if len(m.xi) != len(self.xi):
                raise ValueError("stored grid does not match its mesh parameters")
            self._mesh = m
        return self._mesh

    @property
    def p(self) -> np.ndarray:
        return self.mesh().D1 @ self.u

    @property
    def q(self) -> np.ndarray:
        return (self.mesh().D1 @ self.v) / self.delta

    def states(self) -> tuple[SteadyState, SteadyState]:
        return _oriented_states(self.model, self.orientation)

    def interface_position(self) -> float:
        """Point where ``u`` crosses the midpoint between its end states (linear interpolation)."""
        sm, sp_ = self.states()
        mid = 0.5 * (sm.U + sp_.U)
        g = self.u - mid
        idx = np.nonzero(np.sign(g[:-1]) != np.sign(g[1:]))[0]
        if idx.size == 0:
            raise NonMonotoneError("u never crosses the interface level")
        i = idx[np.argmin(np.abs(self.xi[idx]))]
        return float(self.xi[i] - g[i] * (self.xi[i + 1] - self.xi[i]) / (g[i + 1] - g[i]))

    def header(self) -> dict:
        return {
            "model": self.model.name,
            "mu": list(self.model.params),
            "c": self.c,
            "delta": self.delta,
            "nu": self.nu,
            "L_minus": self.L_minus,
            "L_plus": self.L_plus,
            "A": self.A,
            "h0": self.h0,
            "orientation": self.orientation,
            "n_nodes": int(len(self.xi)),
            "residual": self.residual,
            "iterations": self.iterations,
        }


@dataclass
class FrontBranch:
    parameter: str
    values: list = field(default_factory=list)
    profiles: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    status: str = "running"

    def append(self, value: float, profile: FrontProfile, step: float) -> None:
        if self.values and not _strictly_monotone(self.values + [value]):
            raise ValueError("branch parameter must be strictly monotone")
        self.values.append(float(value))
        self.profiles.append(profile)
        self.steps.append(float(step))
        self.iterations.append(profile.iterations)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def last(self) -> FrontProfile:
        return self.profiles[-1]


def _strictly_monotone(x) -> bool:
    d = np.diff(np.asarray(x, float))
    return bool(np.all(d > 0) or np.all(d < 0))


def _oriented_states(model: ReactionModel, orientation: int):
    a, b = front_states(model)
    return (a, b) if orientation >= 0 else (b, a)


# ---------------------------------------------------------------- linearisation at the rest states


def boundary_matrix(model: ReactionModel, state: SteadyState, c: float, delta: float, nu: float) -> np.ndarray:
    """Jacobian of the first-order system in ``(u, p, v, q)`` at a rest state, with ``q = v' / delta``."""
    Fu, Fv, Gu, Gv = (float(x) for x in model.partials(np.float64(state.U), np.float64(state.V)))
    return np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [-Fu, -c, -Fv, 0.0],
            [0.0, 0.0, 0.0, delta],
            [-delta * Gu, 0.0, -delta * Gv, -delta**2 * (nu + c)],
        ]
    )


def _split_rates(A: np.ndarray, tol: float = 1e-8):
    ev = np.linalg.eigvals(A)
    if np.any(np.abs(ev.real) < tol):
        raise HyperbolicityError(f"rest state not hyperbolic: eigenvalues {ev}")
    return ev


def truncation_lengths(model, states, c, delta, nu, K: float = 30.0) -> tuple[float, float]:
    """``L = K / slowest decay rate`` at each end."""
    out = []
    for st in states:
        ev = _split_rates(boundary_matrix(model, st, c, delta, nu))
        out.append(K / float(np.min(np.abs(ev.real))))
    return out[0], out[1]


def _projection_rows(model, state, c, delta, nu, keep_sign: int) -> np.ndarray:
    """Two real row vectors annihilating the admissible eigenspace at one end.

    ``keep_sign = +1`` keeps the unstable directions (left end), ``-1`` the
    stable ones (right end); the rows are left eigenvectors of the remaining
    pair.
    """
    A = boundary_matrix(model, state, c, delta, nu)
    ev, W = np.linalg.eig(A.T)
    _split_rates(A)
    bad = np.nonzero(np.sign(ev.real) != keep_sign)[0]
    if len(bad) != 2:
        raise HyperbolicityError(f"expected a 2+2 splitting at {state.U, state.V}, got eigenvalues {ev}")
    rows = []
    if abs(ev[bad[0]].imag) > 0 and np.isclose(ev[bad[0]], np.conj(ev[bad[1]])):
        w = W[:, bad[0]]
        rows = [w.real, w.imag]
    else:
        rows = [W[:, k].real for k in bad]
    out = []
    for r in rows:
        r = r / np.linalg.norm(r)
        k = int(np.argmax(np.abs(r)))
        out.append(r * np.sign(r[k]))
    return np.array(out)


# ---------------------------------------------------------------- initial guess


def _clip_domain(branch, v):
    lo, hi = branch.domain
    return np.clip(v, lo, hi)


def build_initial_guess(
    model: ReactionModel,
    delta: float,
    nu: float,
    layer: LayerFront | None = None,
    slow: SlowOrbits | None = None,
    regime: RegimeParams | None = None,
    K: float = 30.0,
    A: float = 20.0,
    h0: float = 0.1,
) -> FrontProfile:
    """Composite slow/fast profile with the jump at ``xi = 0`` and speed ``c_*``."""
    regime = regime or classify_regime(delta, nu)
    if abs(regime.delta - delta) > 0 or abs(regime.nu - nu) > 0:
        raise ValueError("regime does not match (delta, nu)")
    slow = slow or reduced_slow_orbits(model, regime)
    expected = "eta" if regime.tag == "Strong" else "zeta"
    if slow.scaling != expected:
        raise ValueError(f"slow orbits use {slow.scaling} scaling but the regime is {regime.tag}")
    layer = layer or layer_for(model, slow.v_star)
    if abs(layer.v_star - slow.v_star) > 1e-8 * max(1.0, abs(slow.v_star)):
        raise ValueError("layer front and slow orbits disagree on the jump level")
    states = front_states(model)
    c = layer.c_star
    Lm, Lp = truncation_lengths(model, states, c, delta, nu, K)
    mesh = sinh_mesh(Lm, Lp, A, h0)
    x = mesh.xi
    if slow.scaling == "zeta":
        z = delta * x
    else:
        z = x / nu
    v = np.where(x < 0, slow.v_minus(np.minimum(z, 0.0)), slow.v_plus(np.maximum(z, 0.0)))
    fm, fp = _front_branches(model)
    us, _ = layer.evaluate(x)
    theta = (us - layer.u_minus) / (layer.u_plus - layer.u_minus)
    u = fm(_clip_domain(fm, v)) + theta * (fp(_clip_domain(fp, v)) - fm(_clip_domain(fm, v)))
    u[0], v[0] = states[0].U, states[0].V
    u[-1], v[-1] = states[1].U, states[1].V
    return FrontProfile(x, u, v, float(c), float(delta), float(nu), model, Lm, Lp, A, h0, _mesh=mesh)


# ---------------------------------------------------------------- Newton solver


def _assemble(model, mesh, u, v, c, delta, nu):
    D1, D2 = mesh.D1, mesh.D2
    up, vp = D1 @ u, D1 @ v
    F, G = model.F(u, v), model.G(u, v)
    Fu, Fv, Gu, Gv = model.partials(u, v)
    R1 = D2 @ u + c * up + F
    R2 = (D2 @ v) / delta**2 + (nu + c) * vp + G
    J11 = D2 + c * D1 + sp.diags(Fu)
    J22 = D2 / delta**2 + (nu + c) * D1 + sp.diags(Gv)
    J = sp.bmat([[J11, sp.diags(Fv)], [sp.diags(Gu), J22]], format="csr")
    return R1, R2, J, up, vp


def _boundary_block(model, states, mesh, u, v, c, delta, nu):
    """Residuals, Jacobian rows and c-derivatives of the four projection conditions."""
    n = mesh.n
    D1 = mesh.D1
    rows, vals, c_col = [], [], []
    res = []
    ends = ((0, states[0], 1), (n - 1, states[1], -1))
    hc = 1e-7 * max(1.0, abs(c))
    for i, st, keep in ends:
        P = _projection_rows(model, st, c, delta, nu, keep)
        Pc = (_projection_rows(model, st, c + hc, delta, nu, keep) - _projection_rows(model, st, c - hc, delta, nu, keep)) / (2 * hc)
        d1 = D1.getrow(i)
        Y = np.array([u[i] - st.U, (d1 @ u)[0], v[i] - st.V, (d1 @ v)[0] / delta])
        for k in range(2):
            r = P[k]
            res.append(float(r @ Y))
            c_col.append(float(Pc[k] @ Y))
            row = sp.hstack(
                [
                    r[0] * sp.csr_matrix(([1.0], ([0], [i])), shape=(1, n)) + r[1] * d1,
                    r[2] * sp.csr_matrix(([1.0], ([0], [i])), shape=(1, n)) + (r[3] / delta) * d1,
                ]
            )
            rows.append(row)
    return np.array(res), sp.vstack(rows, format="csr"), np.array(c_col)


def solve_front_bvp(
    guess: FrontProfile,
    tol: float = 1e-9,
    maxiter: int = 50,
    step_tol: float = 1e-10,
    check_monotone: bool = True,
) -> FrontProfile:
    """Newton iteration from ``guess``; the guess also anchors the phase."""
    model, delta, nu = guess.model, guess.delta, guess.nu
    mesh = guess.mesh()
    n = mesh.n
    states = guess.states()
    uref = guess.u.copy()
    w_phase = mesh.w * (mesh.D1 @ uref)
    u, v, c = guess.u.copy(), guess.v.copy(), float(guess.c)
    bidx = np.array([0, n - 1, n, 2 * n - 1])
    mask = np.ones(2 * n)
    mask[bidx] = 0.0
    Mask = sp.diags(mask)
    it = 0
    converged = False
    for it in range(1, maxiter + 1):
        R1, R2, J, up, vp = _assemble(model, mesh, u, v, c, delta, nu)
        bres, brows, bc = _boundary_block(model, states, mesh, u, v, c, delta, nu)
        R = np.concatenate([R1, R2])
        R[bidx] = bres[[0, 2, 1, 3]]
        # boundary rows: order (left k=0 -> row 0, right k=0 -> row n-1, left k=1 -> row n, right k=1 -> row 2n-1)
        order = [0, 2, 1, 3]
        bc_ = brows[order].tocoo()
        Bfull = sp.csr_matrix((bc_.data, (bidx[bc_.row], bc_.col)), shape=(2 * n, 2 * n))
        Jf = Mask @ J + Bfull
        ccol = np.concatenate([up, vp])
        ccol[bidx] = bc[order]
        phase = float(np.dot(w_phase, u - uref))
        K = sp.bmat(
            [
                [Jf, sp.csr_matrix(ccol[:, None])],
                [sp.csr_matrix(np.concatenate([w_phase, np.zeros(n)])[None, :]), None],
            ],
            format="csc",
        )
        rhs = -np.concatenate([R, [phase]])
        dz = spla.spsolve(K, rhs)
        if not np.all(np.isfinite(dz)):
            raise NewtonError("singular Newton system")
        u = u + dz[:n]
        v = v + dz[n : 2 * n]
        c = c + dz[-1]
        size = float(np.max(np.abs(dz)))
        if size > 1e3 * (1.0 + max(np.max(np.abs(u)), np.max(np.abs(v)))):
            raise NewtonError(f"Newton diverged at iteration {it}")
        if size < step_tol * (1.0 + abs(c)):
            converged = True
            break
    if not converged:
        raise NewtonError(f"Newton did not converge in {maxiter} iterations")
    R1, R2, *_ = _assemble(model, mesh, u, v, c, delta, nu)
    # residual of the first-order system: p- and q-equations
    res = max(float(np.max(np.abs(R1[1:-1]))), delta * float(np.max(np.abs(R2[1:-1]))))
    out = FrontProfile(mesh.xi, u, v, float(c), delta, nu, model, guess.L_minus, guess.L_plus, guess.A, guess.h0,
                       guess.orientation, res, it, _mesh=mesh)
    if res > tol:
        warnings.warn(f"front residual {res:.3g} above tolerance {tol:.3g}", RuntimeWarning, stacklevel=2)
    if check_monotone:
        _check_monotone(out)
    return out


def _check_monotone(prof: FrontProfile, frac: float = 0.01) -> None:
    sm, sp_ = prof.states()
    jump = sp_.U - sm.U
    theta = (prof.u - sm.U) / jump
    window = (theta > frac) & (theta < 1 - frac)
    if not np.any(window):
        raise NonMonotoneError("no interface found in u")
    du = prof.p[window] * np.sign(jump)
    if np.any(du <= 0):
        raise NonMonotoneError("u is not monotone across the interface")
    # one connected interface window
    idx = np.nonzero(window)[0]
    if idx[-1] - idx[0] + 1 != idx.size:
        raise NonMonotoneError("u has more than one interface")


# ---------------------------------------------------------------- re-meshing and continuation


def _interp_onto(prof: FrontProfile, x_new: np.ndarray, shift: float):
    sm, sp_ = prof.states()
    x = prof.xi - shift
    out = []
    for f, lo, hi in ((prof.u, sm.U, sp_.U), (prof.v, sm.V, sp_.V)):
        with np.errstate(all="ignore"):
            ip = PchipInterpolator(x, f, extrapolate=False)
            val = ip(np.clip(x_new, x[0], x[-1]))
        val = np.where(x_new < x[0], lo, np.where(x_new > x[-1], hi, val))
        out.append(val)
    return out


def remesh(prof: FrontProfile, model=None, delta=None, nu=None, c=None, K: float = 30.0,
           h0: float | None = None) -> FrontProfile:
    """Move ``prof`` to a new mesh sized for (model, delta, nu, c), re-centred on its interface."""
    model = model or prof.model
    delta = prof.delta if delta is None else delta
    nu = prof.nu if nu is None else nu
    c = prof.c if c is None else c
    h0 = prof.h0 if h0 is None else h0
    states = _oriented_states(model, prof.orientation)
    Lm, Lp = truncation_lengths(model, states, c, delta, nu, K)
    mesh = sinh_mesh(Lm, Lp, prof.A, h0)
    u, v = _interp_onto(prof, mesh.xi, prof.interface_position())
    u[0], v[0] = states[0].U, states[0].V
    u[-1], v[-1] = states[1].U, states[1].V
    return FrontProfile(mesh.xi, u, v, float(c), float(delta), float(nu), model, Lm, Lp, prof.A, h0,
                        prof.orientation, _mesh=mesh)


def refine_front(prof: FrontProfile, factor: float = 0.5, **kw) -> tuple[FrontProfile, float]:
    """Re-solve with ``h0 * factor``; returns the refined front and the change in ``c``."""
    fine = solve_front_bvp(remesh(prof, h0=prof.h0 * factor), **kw)
    return fine, abs(fine.c - prof.c)


_PARAMS = ("nu", "delta", "mu1", "mu2", "mu3")


def _with_param(prof: FrontProfile, name: str, value: float):
    model, delta, nu = prof.model, prof.delta, prof.nu
    if name == "nu":
        nu = value
    elif name == "delta":
        delta = value
    elif name.startswith("mu"):
        k = int(name[2:]) - 1
        mu = list(model.params)
        mu[k] = value
        model = model.with_params(mu)
    else:
        raise ValueError(f"unknown continuation parameter {name!r}; use one of {_PARAMS}")
    return model, delta, nu


def _param_value(prof: FrontProfile, name: str) -> float:
    if name == "nu":
        return prof.nu
    if name == "delta":
        return prof.delta
    return prof.model.params[int(name[2:]) - 1]


def continue_front(
    start: FrontProfile,
    parameter: str,
    target: float,
    step: float | None = None,
    max_step: float | None = None,
    grow: float = 1.3,
    fast_iterations: int = 4,
    K: float = 30.0,
    min_step_rel: float = 1e-10,
    branch: FrontBranch | None = None,
) -> FrontBranch:
    """Natural-parameter continuation with secant predictor and adaptive steps."""
    p = _param_value(start, parameter)
    direction = math.copysign(1.0, target - p)
    scale = max(abs(p), abs(target), 1.0)
    h = abs(step) if step else abs(target - p)
    hmax = abs(max_step) if max_step else math.inf
    h = min(h, hmax)
    if branch is None:
        branch = FrontBranch(parameter)
        branch.append(p, start, 0.0)
    prof, prev, h_prev = start, None, None
    while (target - p) * direction > 0:
        h = min(h, abs(target - p))
        p_new = target if h >= abs(target - p) else p + direction * h
        model, delta, nu = _with_param(prof, parameter, p_new)
        sol = None
        for use_secant in ((True, False) if prev is not None else (False,)):
            guess = remesh(prof, model, delta, nu, K=K)
            if use_secant:
                ratio = h / h_prev
                up, vp = _interp_onto(prev, guess.xi, prev.interface_position())
                guess.u = guess.u + ratio * (guess.u - up)
                guess.v = guess.v + ratio * (guess.v - vp)
                guess.c = prof.c + ratio * (prof.c - prev.c)
            try:
                sol = solve_front_bvp(guess)
                break
            except (NewtonError, NonMonotoneError, HyperbolicityError, np.linalg.LinAlgError, RuntimeError):
                sol = None
        if sol is None:
            h *= 0.5
            if h < min_step_rel * scale:
                branch.status = f"terminated: step underflow at {parameter} = {p:.17g}"
                return branch
            continue
        branch.append(p_new, sol, direction * h)
        prev, prof, h_prev = prof, sol, h
        p = p_new
        if sol.iterations <= fast_iterations:
            h = min(h * grow, hmax)
    branch.status = "completed"
    return branch


def sweep(start: FrontProfile, parameter: str, values, **kw) -> FrontBranch:
    """Continue through each of ``values`` in turn (monotone), recording every converged point."""
    vals = [float(x) for x in values]
    if not vals:
        raise ValueError("empty parameter list")
    branch = FrontBranch(parameter)
    branch.append(_param_value(start, parameter), start, 0.0)
    hits = []
    for t in vals:
        if t == branch.values[-1]:
            hits.append(len(branch) - 1)
            continue
        continue_front(branch.last, parameter, t, branch=branch, **kw)
        if branch.status != "completed":
            break
        hits.append(len(branch) - 1)
    branch.hits = hits
    return branch


# ---------------------------------------------------------------- serialisation


def save_profile(prof: FrontProfile, path) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (xi, u, p, v, q) and ``<stem>.json`` (scalars and mesh)."""
    path = Path(path)
    csv = path.with_suffix(".csv")
    meta = path.with_suffix(".json")
    data = np.column_stack([prof.xi, prof.u, prof.p, prof.v, prof.q])
    np.savetxt(csv, data, fmt="%.17g", delimiter=",", header="xi,u,p,v,q", comments="")
    meta.write_text(json.dumps(prof.header(), indent=2, sort_keys=True))
    return csv, meta


def load_profile(path, model: ReactionModel | None = None) -> FrontProfile:
    path = Path(path)
    hdr = json.loads(path.with_suffix(".json").read_text())
    data = np.loadtxt(path.with_suffix(".csv"), delimiter=",", skiprows=1)
    model = model or get_model(hdr["model"], hdr["mu"])
    prof = FrontProfile(
        data[:, 0].copy(), data[:, 1].copy(), data[:, 3].copy(), hdr["c"], hdr["delta"], hdr["nu"], model,
        hdr["L_minus"], hdr["L_plus"], hdr["A"], hdr["h0"], hdr.get("orientation", 1),
        hdr.get("residual", math.nan), hdr.get("iterations", 0),
    )
    if not np.array_equal(prof.mesh().xi, prof.xi):
        raise ValueError("stored grid does not match its mesh parameters")
    return prof
