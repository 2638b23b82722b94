"""Direct simulation of the comoving-frame system on a strip, periodic in y.

Fields are written as ``(U, V) = (u0, v0) + W`` about a computed front. The
linearisation ``A`` about the front (diffusion, advection and the reaction
Jacobian) is stepped implicitly, mode by mode after an FFT in y; only the
nonlinear remainder of the reaction is explicit. The front itself is then an
exact fixed point of the stepper, and small perturbations evolve by backward
Euler on the same discrete operator that the spectral module analyses.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .front import FrontProfile

__all__ = [
    "SimConfig",
    "SimField",
    "InterfaceDiagnostics",
    "Simulator",
    "SimulationError",
    "NoExponentialWindow",
    "interface_position",
    "run_simulation",
    "fit_growth_rate",
    "growth_rate_check",
    "probe_time_step",
]


class SimulationError(RuntimeError):
    pass


class NoExponentialWindow(RuntimeError):
    pass


@dataclass
class SimConfig:
    front: FrontProfile = field(repr=False)
    Ly: float = 100.0
    Ny: int = 32
    dt: float = 0.1
    t_end: float = 100.0
    order: int = 1
    bc: str = "dirichlet"
    #: list of (mode index, amplitude) pairs; amplitudes are fractions of the U jump
    modes: tuple = ()
    noise: float = 0.0
    noise_modes: int = 8
    seed: int = 0
    snapshot_every: float | None = None
    diag_every: int = 1
    workers: int | None = None

    def __post_init__(self):
        if self.bc not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.Ny < 2 or self.Ly <= 0 or self.dt <= 0 or self.t_end < 0:
            raise ValueError("invalid grid or time settings")

    @property
    def delta(self) -> float:
        return self.front.delta

    @property
    def nu(self) -> float:
        return self.front.nu

    @property
    def c(self) -> float:
        return self.front.c

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.Ny) * self.Ly / self.Ny

    def wavenumber(self, m: int) -> float:
        return 2 * math.pi * m / self.Ly

    def cfl(self) -> dict:
        dxi = np.diff(self.front.xi)
        return {
            "advection_u": abs(self.c) * self.dt / dxi.min(),
            "advection_v": abs(self.nu + self.c) * self.dt / dxi.min(),
            "min_dxi": float(dxi.min()),
            "dy": self.Ly / self.Ny,
        }

    def as_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "front"}
        d["modes"] = [list(m) for m in self.modes]
        d.update(mu=list(self.front.model.params), delta=self.delta, nu=self.nu, c=self.c,
                 L_minus=self.front.L_minus, L_plus=self.front.L_plus, Nxi=len(self.front.xi), cfl=self.cfl())
        return d


@dataclass
class SimField:
    U: np.ndarray
    V: np.ndarray
    t: float = 0.0

    def copy(self) -> "SimField":
        return SimField(self.U.copy(), self.V.copy(), self.t)


@dataclass
class InterfaceDiagnostics:
    t: list = field(default_factory=list)
    mean: list = field(default_factory=list)
    spread: list = field(default_factory=list)
    amplitudes: list = field(default_factory=list)
    multivalued: list = field(default_factory=list)
    min_U: list = field(default_factory=list)

    def record(self, t, h, crossings, U, modes):
        self.t.append(t)
        self.mean.append(float(h.mean()))
        self.spread.append(float(h.max() - h.min()))
        self.amplitudes.append(np.abs(np.fft.rfft(h))[: modes] / len(h))
        self.multivalued.append(bool(np.any(crossings > 1)))
        self.min_U.append(float(U.min()))

    def amplitude(self, m: int) -> np.ndarray:
        return np.array([a[m] for a in self.amplitudes])

    @property
    def ever_multivalued(self) -> bool:
        return any(self.multivalued)

    def write_csv(self, path, modes: int | None = None) -> None:
        A = np.array(self.amplitudes)
        modes = A.shape[1] if modes is None else modes
        cols = ["t", "h_mean", "h_spread", "multivalued", "min_U"] + [f"a{m}" for m in range(modes)]
        data = np.column_stack([self.t, self.mean, self.spread, np.array(self.multivalued, float), self.min_U,
                                A[:, :modes]])
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")


def interface_position(xi: np.ndarray, U: np.ndarray, level: float):
    """Level-set position per row, scanning from the left end, and the number of crossings per row."""
    s = U - level
    sign = np.signbit(s)
    flips = sign[:, 1:] != sign[:, :-1]
    counts = flips.sum(axis=1)
    if np.any(counts == 0):
        raise SimulationError("interface left the domain in some row")
    j = np.argmax(flips, axis=1)
    rows = np.arange(U.shape[0])
    a, b = s[rows, j], s[rows, j + 1]
    h = xi[j] + (xi[j + 1] - xi[j]) * a / (a - b)
    return h, counts


class Simulator:
    """Holds the factorised per-mode operators for one configuration."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        f = cfg.front
        mesh = f.mesh()
        self.xi = mesh.xi
        self.n = mesh.n
        self.u0 = f.u.copy()
        self.v0 = f.v.copy()
        model, d, c, nu = f.model, f.delta, f.c, f.nu
        self.model = model
        Fu, Fv, Gu, Gv = model.partials(self.u0, self.v0)
        self.J0 = (Fu, Fv, Gu, Gv)
        D1, D2 = mesh.D1, mesh.D2
        n = self.n
        A11 = D2 + c * D1 + sp.diags(Fu)
        A22 = D2 / d**2 + (nu + c) * D1 + sp.diags(Gv)
        self.A = sp.bmat([[A11, sp.diags(Fv)], [sp.diags(Gu), A22]], format="lil")
        self.r0 = np.concatenate([D2 @ self.u0 + c * (D1 @ self.u0) + model.F(self.u0, self.v0),
                                  D2 @ self.v0 / d**2 + (nu + c) * (D1 @ self.v0) + model.G(self.u0, self.v0)])
        self.bidx = np.array([0, n - 1, n, 2 * n - 1])
        self.r0[self.bidx] = 0.0
        sm, sp_ = f.states()
        self.level = 0.5 * (sm.U + sp_.U)
        self.jump = abs(sp_.U - sm.U)
        # boundary target for W at (u0 left, u0 right, v0 left, v0 right)
        self.w_bc = np.array([sm.U - self.u0[0], sp_.U - self.u0[-1], sm.V - self.v0[0], sp_.V - self.v0[-1]])
        if cfg.bc == "neumann":
            # zero flux of U = u0 + W, not of W
            du, dv = D1 @ self.u0, D1 @ self.v0
            self.w_bc = -np.array([du[0], du[-1], dv[0], dv[-1]])
        self.D1 = D1
        self.b = np.r_[np.ones(n), np.full(n, 1.0 / d**2)]
        self.nmodes = cfg.Ny // 2 + 1
        self._lu: dict[float, list] = {}
        self.workers = cfg.workers if cfg.workers is not None else int(os.environ.get("RDAFRONT_WORKERS", "1"))

    def _factor(self, dt: float):
        if dt in self._lu:
            return self._lu[dt]
        n = self.n
        I = sp.identity(2 * n, format="lil")
        lus = []
        D1 = self.D1.tolil()
        for m in range(self.nmodes):
            ell = self.cfg.wavenumber(m)
            M = (I - dt * (self.A - ell**2 * sp.diags(self.b))).tolil()
            for k, i in enumerate(self.bidx):
                M.rows[i] = []
                M.data[i] = []
                if self.cfg.bc == "dirichlet":
                    M[i, i] = 1.0
                else:
                    row = D1[0] if k % 2 == 0 else D1[n - 1]
                    off = 0 if k < 2 else n
                    for j, val in zip(row.rows[0], row.data[0]):
                        M[i, j + off] = val
            lus.append(spla.splu(M.tocsc()))
        self._lu[dt] = lus
        return lus

    def initial_field(self) -> SimField:
        cfg = self.cfg
        mesh = cfg.front.mesh()
        up, vp = mesh.D1 @ self.u0, mesh.D1 @ self.v0
        scale = self.jump / np.max(np.abs(up))
        y = cfg.y
        shape = np.zeros(cfg.Ny)
        for m, a in cfg.modes:
            shape += a * np.cos(cfg.wavenumber(m) * y)
        if cfg.noise > 0:
            rng = np.random.default_rng(cfg.seed)
            for m in range(1, cfg.noise_modes + 1):
                amp, ph = rng.standard_normal(2)
                shape += cfg.noise * amp * np.cos(cfg.wavenumber(m) * y + ph)
        U = self.u0[None, :] + scale * shape[:, None] * up[None, :]
        V = self.v0[None, :] + scale * shape[:, None] * vp[None, :]
        return SimField(U, V, 0.0)

    def _remainder(self, W: np.ndarray) -> np.ndarray:
        n = self.n
        Wu, Wv = W[:, :n], W[:, n:]
        U, V = self.u0 + Wu, self.v0 + Wv
        Fu, Fv, Gu, Gv = self.J0
        R = np.empty_like(W)
        R[:, :n] = self.model.F(U, V) - self.model.F(self.u0, self.v0) - Fu * Wu - Fv * Wv
        R[:, n:] = self.model.G(U, V) - self.model.G(self.u0, self.v0) - Gu * Wu - Gv * Wv
        R += self.r0
        R[:, self.bidx] = 0.0
        return R

    def _euler(self, W: np.ndarray, dt: float) -> np.ndarray:
        lus = self._factor(dt)
        rhs = W + dt * self._remainder(W)
        rhs[:, self.bidx] = self.w_bc
        R = np.fft.rfft(rhs, axis=0)
        out = np.empty_like(R)

        def solve(m):
            col = np.column_stack([R[m].real, R[m].imag])
            x = lus[m].solve(col)
            out[m] = x[:, 0] + 1j * x[:, 1]

        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as ex:
                list(ex.map(solve, range(self.nmodes)))
        else:
            for m in range(self.nmodes):
                solve(m)
        return np.fft.irfft(out, n=self.cfg.Ny, axis=0)

    def step(self, state: SimField, dt: float | None = None) -> SimField:
        dt = self.cfg.dt if dt is None else dt
        W = np.hstack([state.U - self.u0, state.V - self.v0])
        if self.cfg.order == 1:
            Wn = self._euler(W, dt)
        else:
            full = self._euler(W, dt)
            half = self._euler(self._euler(W, dt / 2), dt / 2)
            Wn = 2 * half - full
        if not np.all(np.isfinite(Wn)):
            j, i = np.argwhere(~np.isfinite(Wn))[0]
            field_ = "U" if i < self.n else "V"
            raise SimulationError(f"non-finite {field_} at y index {j}, xi = {self.xi[i % self.n]:.6g}, "
                                  f"t = {state.t + dt:.6g}")
        return SimField(self.u0 + Wn[:, : self.n], self.v0 + Wn[:, self.n:], state.t + dt)

    def diagnose(self, state: SimField, diag: InterfaceDiagnostics) -> None:
        h, counts = interface_position(self.xi, state.U, self.level)
        diag.record(state.t, h, counts, state.U, self.nmodes)


@dataclass
class SimResult:
    config: SimConfig
    final: SimField
    diagnostics: InterfaceDiagnostics
    snapshots: list
    steps: int
    boundary_warning: bool = False
    negative_U: int = 0

    def pattern_class(self, flat_tol: float = 1e-3) -> str:
        if self.diagnostics.ever_multivalued:
            return "fingered"
        spread = self.diagnostics.spread
        return "flat" if spread[-1] <= max(flat_tol, spread[0]) else "cusped"


def run_simulation(cfg: SimConfig, state: SimField | None = None, outdir=None) -> SimResult:
    sim = Simulator(cfg)
    state = state or sim.initial_field()
    diag = InterfaceDiagnostics()
    sim.diagnose(state, diag)
    nsteps = int(round(cfg.t_end / cfg.dt))
    snaps, next_snap = [], 0.0
    every = cfg.snapshot_every
    # warn once the interface has covered 90% of its initial distance to either end
    h0 = diag.mean[0]
    room = np.array([h0 - sim.xi[0], sim.xi[-1] - h0])
    warned = False
    neg = 0
    for k in range(1, nsteps + 1):
        state = sim.step(state)
        if np.any(state.U < -1e-6):
            neg += 1
        if k % cfg.diag_every == 0 or k == nsteps:
            sim.diagnose(state, diag)
            h = diag.mean[-1]
            if not warned and np.any(np.array([h - sim.xi[0], sim.xi[-1] - h]) < 0.1 * room):
                warned = True
        if every and state.t >= next_snap - 1e-12:
            snaps.append(state.copy())
            next_snap += every
    res = SimResult(cfg, state, diag, snaps, nsteps, warned, neg)
    if outdir is not None:
        write_outputs(res, outdir)
    return res


def _write_array(path: Path, arr: np.ndarray) -> str:
    data = np.ascontiguousarray(arr, dtype="<f8")
    data.tofile(path)
    return hashlib.sha256(data.tobytes()).hexdigest()


def write_outputs(res: SimResult, outdir) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = res.config
    diag_path = out / "diagnostics.csv"
    res.diagnostics.write_csv(diag_path)
    files = {"diagnostics.csv": hashlib.sha256(diag_path.read_bytes()).hexdigest()}
    snaps = res.snapshots or [res.final]
    for i, s in enumerate(snaps):
        for name, arr in (("U", s.U), ("V", s.V)):
            fn = f"{name}_{i:04d}.bin"
            files[fn] = _write_array(out / fn, arr)
    meta = {
        "config": cfg.as_dict(),
        "grid": {"Ny": cfg.Ny, "Nxi": len(res.final.U[0]), "dtype": "float64 little-endian", "order": "C (y, xi)"},
        "xi": res.final and cfg.front.xi.tolist(),
        "snapshot_times": [s.t for s in snaps],
        "steps": res.steps,
        "boundary_warning": res.boundary_warning,
        "negative_U_steps": res.negative_U,
        "pattern": res.pattern_class(),
        "sha256": files,
    }
    (out / "simulation.json").write_text(json.dumps(meta, indent=2))


def fit_growth_rate(t, a, tol: float = 0.02, min_fraction: float = 0.3):
    """Slope of ``log a`` on the earliest tail window whose exponential fit is within ``tol``."""
    t = np.asarray(t, float)
    la = np.log(np.asarray(a, float))
    n = len(t)
    m = max(3, int(min_fraction * n))
    for i in range(0, n - m + 1):
        tt, yy = t[i:], la[i:]
        p = np.polyfit(tt, yy, 1)
        dev = np.max(np.abs(np.expm1(yy - np.polyval(p, tt))))
        if dev < tol:
            return float(p[0]), float(tt[0]), float(dev)
    raise NoExponentialWindow("no window with an exponential fit inside tolerance")


def growth_rate_check(cfg: SimConfig, m: int = 1, amplitude: float = 1e-3):
    """Growth rate of interface mode ``m`` from a single-mode translation perturbation."""
    run_cfg = SimConfig(**{**{k: getattr(cfg, k) for k in cfg.__dataclass_fields__}, "modes": ((m, amplitude),),
                           "noise": 0.0})
    res = run_simulation(run_cfg)
    diag = res.diagnostics
    series = np.array(diag.mean) if m == 0 else diag.amplitude(m)
    if m == 0:
        rate = float(np.polyfit(diag.t, series, 1)[0])
        return rate, res
    sigma, _, _ = fit_growth_rate(diag.t, series)
    return sigma, res


def probe_time_step(cfg: SimConfig, dt0: float = 1.0, steps: int = 20, growth: float = 10.0, min_dt: float = 1e-4):
    """Largest ``dt0 / 2^k`` for which a short noisy run stays bounded."""
    dt = dt0
    while dt >= min_dt:
        trial = SimConfig(**{**{k: getattr(cfg, k) for k in cfg.__dataclass_fields__}, "dt": dt, "t_end": steps * dt,
                             "noise": max(cfg.noise, 1e-2)})
        sim = Simulator(trial)
        s = sim.initial_field()
        w0 = np.max(np.abs(s.U - sim.u0))
        try:
            for _ in range(steps):
                s = sim.step(s)
            if np.max(np.abs(s.U - sim.u0)) <= growth * max(w0, 1e-12):
                return dt
        except SimulationError:
            pass
        dt /= 2
    raise SimulationError("no stable time step found")
