import hashlib
import json

import numpy as np
import pytest

from rdafront.front import build_initial_guess, continue_front, solve_front_bvp
from rdafront.sim2d import (
    InterfaceDiagnostics,
    NoExponentialWindow,
    SimConfig,
    SimField,
    SimulationError,
    Simulator,
    fit_growth_rate,
    growth_rate_check,
    interface_position,
    run_simulation,
)


def test_homogeneous_state_is_fixed_point(front_d2):
    # the remainder is explicit and linearised about the front, so far from it dt must resolve the kinetics
    cfg = SimConfig(front=front_d2, Ly=50.0, Ny=4, dt=0.01, t_end=1.0, bc="neumann")
    sim = Simulator(cfg)
    top = front_d2.states()[1]
    s = SimField(np.full((4, sim.n), top.U), np.full((4, sim.n), top.V))
    for _ in range(100):
        s = sim.step(s)
    assert np.max(np.abs(s.U - top.U)) < 1e-8
    assert np.max(np.abs(s.V - top.V)) < 1e-8


def test_planar_front_does_not_drift(front_d2):
    cfg = SimConfig(front=front_d2, Ly=50.0, Ny=4, dt=1.0, t_end=1000.0, diag_every=100)
    res = run_simulation(cfg)
    h = np.array(res.diagnostics.mean)
    j = np.searchsorted(front_d2.xi, h[0])
    cell = front_d2.xi[j + 1] - front_d2.xi[j]
    assert np.max(np.abs(h - h[0])) < cell
    assert not res.boundary_warning


def test_worker_count_is_bitwise_irrelevant(front_d2):
    runs = [run_simulation(SimConfig(front=front_d2, Ly=100.0, Ny=8, dt=0.5, t_end=10.0, noise=0.05, workers=w))
            for w in (1, 2)]
    assert np.array_equal(runs[0].final.U, runs[1].final.U)
    assert np.array_equal(runs[0].final.V, runs[1].final.V)


def test_first_run_on_fresh_mesh_matches_repeat(km):
    # a never-used mesh must give the same bits on its first and second use
    f = solve_front_bvp(build_initial_guess(km, 1e-2, 0.0, h0=0.11))
    cfg = SimConfig(front=f, Ly=100.0, Ny=8, dt=0.5, t_end=5.0, noise=0.05)
    assert np.array_equal(run_simulation(cfg).final.U, run_simulation(cfg).final.U)


def test_even_data_stays_even(front_d2):
    cfg = SimConfig(front=front_d2, Ly=100.0, Ny=16, dt=0.5, t_end=20.0, modes=((1, 0.2), (3, 0.1)))
    U = run_simulation(cfg).final.U
    mirror = U[(-np.arange(16)) % 16]
    assert np.max(np.abs(U - mirror)) < 1e-12


def test_uniform_shift_is_neutral(front_d2):
    cfg = SimConfig(front=front_d2, Ly=100.0, Ny=4, dt=1.0, t_end=200.0)
    rate, res = growth_rate_check(cfg, m=0, amplitude=1e-3)
    assert abs(rate) < 1e-6


@pytest.mark.parametrize("nu, sign", [(700.0, 1.0), (3000.0, -1.0)])
def test_growth_rate_sign_follows_lambda2(front_d2, nu, sign):
    f = continue_front(front_d2, "nu", nu).last
    cfg = SimConfig(front=f, Ly=300.0, Ny=4, dt=2.0, t_end=2000.0)
    sigma, _ = growth_rate_check(cfg, m=1)
    assert np.sign(sigma) == sign


def test_fit_growth_rate_recovers_exponent():
    t = np.linspace(0, 10, 50)
    rate, start, dev = fit_growth_rate(t, 1e-3 * np.exp(-0.3 * t))
    assert rate == pytest.approx(-0.3, rel=1e-10)
    assert start == 0.0


def test_fit_growth_rate_rejects_noise():
    rng = np.random.default_rng(3)
    t = np.linspace(0, 10, 60)
    with pytest.raises(NoExponentialWindow):
        fit_growth_rate(t, np.exp(rng.normal(scale=0.5, size=t.size)))


def test_interface_position_and_multivalued_flag():
    xi = np.linspace(-5, 5, 11)
    U = np.vstack([np.clip(xi + 0.25, 0, 1), np.where(np.abs(xi - 1) < 0.5, 1.0, np.clip(xi - 2.5, 0, 1))])
    h, counts = interface_position(xi, U, 0.5)
    assert h[0] == pytest.approx(1 / 3)
    assert counts[0] == 1 and counts[1] == 3
    d = InterfaceDiagnostics()
    d.record(0.0, h, counts, U, 2)
    assert d.ever_multivalued
    with pytest.raises(SimulationError):
        interface_position(xi, np.zeros((1, 11)), 0.5)


def test_config_validation(front_d2):
    with pytest.raises(ValueError):
        SimConfig(front=front_d2, bc="periodic")
    with pytest.raises(ValueError):
        SimConfig(front=front_d2, order=3)
    with pytest.raises(ValueError):
        SimConfig(front=front_d2, dt=0.0)


def test_second_order_option_is_closer_to_fine_reference(front_d2):
    base = dict(front=front_d2, Ly=100.0, Ny=4, t_end=8.0, modes=((1, 0.05),))
    ref = run_simulation(SimConfig(dt=0.0625, order=2, **base)).final.U
    e1 = np.max(np.abs(run_simulation(SimConfig(dt=1.0, order=1, **base)).final.U - ref))
    e2 = np.max(np.abs(run_simulation(SimConfig(dt=1.0, order=2, **base)).final.U - ref))
    assert e2 < e1 / 4


def test_outputs_and_hashes(tmp_path, front_d2):
    cfg = SimConfig(front=front_d2, Ly=60.0, Ny=4, dt=1.0, t_end=4.0, snapshot_every=2.0, modes=((1, 0.01),))
    res = run_simulation(cfg, outdir=tmp_path)
    meta = json.loads((tmp_path / "simulation.json").read_text())
    assert meta["snapshot_times"] == [s.t for s in res.snapshots]
    for name, digest in meta["sha256"].items():
        assert hashlib.sha256((tmp_path / name).read_bytes()).hexdigest() == digest
    U0 = np.fromfile(tmp_path / "U_0000.bin", dtype="<f8").reshape(4, -1)
    assert np.array_equal(U0, res.snapshots[0].U)
    header = (tmp_path / "diagnostics.csv").read_text().splitlines()[0]
    assert header.startswith("t,h_mean,h_spread,multivalued")
