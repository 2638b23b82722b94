"""Command line entry point: ``rdafront <stage> [config.toml] [-o DIR]``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config

log = logging.getLogger("rdafront")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 2, 3, 4

STAGES = ("steady", "dispersion", "layer", "singular-criteria", "front", "continue", "lambda2", "contour",
          "simulate", "validate")


class MissingArtifact(FileNotFoundError):
    pass


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else str(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_table(path: Path, columns: list[str], rows, cfg: RunConfig, extra: dict | None = None) -> Path:
    """CSV at 17 significant digits plus a JSON sidecar with the resolved config and a content hash."""
    arr = np.atleast_2d(np.asarray(rows, float))
    if arr.size == 0:
        arr = arr.reshape(0, len(columns))
    lines = [",".join(columns)] + [",".join(f"{v:.17g}" for v in r) for r in arr]
    data = ("\n".join(lines) + "\n").encode()
    path.write_bytes(data)
    write_sidecar(path, cfg, extra, hashlib.sha256(data).hexdigest())
    return path


def write_sidecar(path: Path, cfg: RunConfig, extra: dict | None, digest: str | None = None) -> Path:
    if digest is None:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
    meta = {"file": path.name, "sha256": digest, "config": cfg.as_dict(), **(extra or {})}
    side = path.with_name(path.name + ".json")
    side.write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True))
    return side


def write_json(path: Path, payload: dict, cfg: RunConfig) -> Path:
    body = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    digest = hashlib.sha256(body.encode()).hexdigest()
    path.write_text(json.dumps(_jsonable({"result": payload, "config": cfg.as_dict(), "sha256": digest}),
                               indent=2, sort_keys=True))
    return path


def _regime(cfg, nu=None):
    from .singular import classify_regime

    return classify_regime(cfg.params.delta, cfg.params.nu if nu is None else nu, cfg.params.r0)


def _base_front(cfg, model, nu=0.0):
    from .front import build_initial_guess, continue_front, solve_front_bvp

    fr = cfg.front
    prof = solve_front_bvp(build_initial_guess(model, cfg.params.delta, 0.0, K=fr.K, A=fr.A, h0=fr.h0),
                           tol=fr.tol, maxiter=fr.maxiter)
    if nu > 0:
        br = continue_front(prof, "nu", nu, step=fr.step or None, K=fr.K)
        if br.status != "completed":
            raise RuntimeError(br.status)
        prof = br.last
    return prof


def cmd_steady(cfg: RunConfig, out: Path) -> int:
    model = cfg.build_model()
    rows, labels = [], []
    for s in model.steady_states():
        labels.append(s.branch)
        rows.append([s.U, s.V, s.Fu, s.Fv, s.Gu, s.Gv, s.det, float(s.bistable_admissible)])
    write_table(out / "steady_states.csv", ["U", "V", "Fu", "Fv", "Gu", "Gv", "det", "bistable"], rows, cfg,
                {"labels": labels})
    return EXIT_OK


def _select_state(model, label):
    for s in model.steady_states():
        if s.branch == label:
            return s
    raise ConfigError(f"dispersion.state {label!r} not among the steady states")


def cmd_dispersion(cfg: RunConfig, out: Path) -> int:
    from .equilibria import _axis, check_equilibrium_stability, dispersion_coefficients

    model = cfg.build_model()
    d = cfg.dispersion
    state = _select_state(model, d.state)
    p = cfg.params
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = check_equilibrium_stability(state, model, p.delta, p.nu, d.k_max or None, d.ell_max or None, d.n_grid)
    ks = _axis(rep.window[0], d.n_grid, 9.0)
    ls = _axis(rep.window[1], d.n_grid, 9.0)
    K, L = np.meshgrid(ks, ls, indexing="ij")
    co = dispersion_coefficients(state, model, p.delta, p.nu, K, L)
    rows = np.column_stack([K.ravel(), L.ravel(), co.p1.ravel(), co.margin.ravel()])
    write_table(out / "dispersion.csv", ["k", "ell", "p1", "margin"], rows, cfg)
    write_json(out / "dispersion_report.json", {**rep.as_dict(), "state": d.state,
                                                 "warnings": [str(w.message) for w in caught]}, cfg)
    return EXIT_OK


def cmd_layer(cfg: RunConfig, out: Path) -> int:
    from .singular import layer_for, reduced_slow_orbits, weighted_integrals

    model = cfg.build_model()
    slow = reduced_slow_orbits(model, _regime(cfg))
    layer = layer_for(model, slow.v_star)
    F, G, N = weighted_integrals(layer, model)
    write_table(out / "layer_front.csv", ["xi", "u", "p"], np.column_stack([layer.xi, layer.u, layer.p]), cfg,
                {"v_star": layer.v_star, "c_star": layer.c_star, "F_star": F, "G_star": G, "N_star": N})
    return EXIT_OK


def cmd_singular(cfg: RunConfig, out: Path) -> int:
    from .singular import asymptotic_lambda2, critical_advection

    model = cfg.build_model()
    rep = asymptotic_lambda2(model, _regime(cfg))
    crit = critical_advection(model, cfg.params.delta)
    write_json(out / "singular_criteria.json", {**rep.as_dict(), "nu_crit_all": crit}, cfg)
    return EXIT_OK


def cmd_front(cfg: RunConfig, out: Path) -> int:
    from .front import save_profile

    model = cfg.build_model()
    prof = _base_front(cfg, model, cfg.params.nu)
    csv, meta = save_profile(prof, out / "front")
    write_sidecar(csv, cfg, {"c": prof.c, "residual": prof.residual})
    return EXIT_OK


def cmd_continue(cfg: RunConfig, out: Path) -> int:
    from .front import sweep

    model = cfg.build_model()
    nus = cfg.params.nu_values()
    start = _base_front(cfg, model, 0.0)
    br = sweep(start, "nu", nus, K=cfg.front.K)
    rows = [[br.values[i], br.profiles[i].c, br.profiles[i].residual, br.profiles[i].iterations] for i in br.hits]
    write_table(out / "branch.csv", ["nu", "c", "residual", "iterations"], rows, cfg, {"status": br.status})
    return EXIT_OK if br.status == "completed" else EXIT_NUMERIC


def cmd_lambda2(cfg: RunConfig, out: Path) -> int:
    from .front import sweep
    from .singular import asymptotic_lambda2
    from .spectral import lambda_c2_exact, lambda_c2_oracle, solve_adjoint

    model = cfg.build_model()
    nus = cfg.params.nu_values()
    start = _base_front(cfg, model, 0.0)
    br = sweep(start, "nu", nus, K=cfg.front.K)
    rows, tags = [], []
    for i in br.hits:
        f = br.profiles[i]
        lam = lambda_c2_exact(f, solve_adjoint(f, simple_tol=cfg.spectral.simple_tol))
        orc = lambda_c2_oracle(f, ell0=cfg.spectral.ell0 or None).value if cfg.spectral.oracle else math.nan
        reg = _regime(cfg, f.nu)
        try:
            asym = asymptotic_lambda2(model, reg).lambda2
        except (RuntimeError, ArithmeticError, ValueError):
            asym = math.nan
        tags.append(reg.tag)
        rows.append([f.nu, f.c, lam, orc, asym])
    write_table(out / "lambda2.csv", ["nu", "c", "lambda2_exact", "lambda2_oracle", "lambda2_asymptotic"], rows,
                cfg, {"regimes": tags, "status": br.status})
    return EXIT_OK if br.status == "completed" else EXIT_NUMERIC


def cmd_contour(cfg: RunConfig, out: Path) -> int:
    from .spectral import zero_contour

    model = cfg.build_model()
    res = zero_contour(model, cfg.contour.deltas, h0=cfg.front.h0, K=cfg.front.K)
    write_table(out / "contour.csv", ["delta", "nu_star", "seed"],
                np.column_stack([res.deltas, res.nu_star, res.seeds]), cfg, {"slope": res.slope})
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    from .sim2d import SimConfig, run_simulation

    model = cfg.build_model()
    prof = _base_front(cfg, model, cfg.params.nu)
    s = cfg.sim
    sc = SimConfig(front=prof, Ly=s.Ly, Ny=s.Ny, dt=s.dt, t_end=s.t_end, order=s.order, bc=s.bc,
                   modes=tuple((int(m), float(a)) for m, a in s.modes), noise=s.noise, noise_modes=s.noise_modes,
                   seed=s.seed, snapshot_every=s.snapshot_every or None, diag_every=s.diag_every)
    res = run_simulation(sc, outdir=out)
    write_sidecar(out / "diagnostics.csv", cfg, {"pattern": res.pattern_class()})
    return EXIT_OK


def cmd_validate(cfg: RunConfig, out: Path) -> int:
    from .validate import run_all

    results = run_all()
    payload = [r.as_dict() for r in results]
    for r in results:
        print(r.line())
    write_json(out / "acceptance.json", {"criteria": payload}, cfg)
    return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPTANCE


COMMANDS = {
    "steady": cmd_steady,
    "dispersion": cmd_dispersion,
    "layer": cmd_layer,
    "singular-criteria": cmd_singular,
    "front": cmd_front,
    "continue": cmd_continue,
    "lambda2": cmd_lambda2,
    "contour": cmd_contour,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdafront", description=__doc__)
    p.add_argument("stage", choices=STAGES)
    p.add_argument("config", nargs="?", help="TOML run configuration (defaults apply when omitted)")
    p.add_argument("-o", "--output", help="output directory (overrides output.directory)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.output or cfg.output.directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.stage](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
