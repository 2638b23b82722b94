import numpy as np
import pytest

from rdafront.mesh import fd_weights, sinh_mesh, uniform_diff_matrices


def test_fd_weights_classic_stencil():
    c = fd_weights(0.0, np.arange(-2, 3, dtype=float), 2)
    assert np.allclose(c[:, 1], [1 / 12, -2 / 3, 0, 2 / 3, -1 / 12])
    assert np.allclose(c[:, 2], [-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12])


def test_uniform_matrices_exact_on_quartics():
    n, h = 20, 0.1
    x = np.arange(n) * h
    D1, D2 = uniform_diff_matrices(n, h)
    f = x**4 - 2 * x**3 + x
    assert np.allclose(D1 @ f, 4 * x**3 - 6 * x**2 + 1, atol=1e-9)
    assert np.allclose(D2 @ f, 12 * x**2 - 12 * x, atol=1e-8)


def test_uniform_needs_enough_nodes():
    with pytest.raises(ValueError):
        uniform_diff_matrices(4, 0.1)


def test_sinh_mesh_fourth_order():
    errs = []
    for h0 in (0.4, 0.2):
        m = sinh_mesh(60.0, 40.0, A=10.0, h0=h0)
        f = np.tanh(m.xi / 3)
        d2 = -2 / 9 * np.tanh(m.xi / 3) / np.cosh(m.xi / 3) ** 2
        errs.append(np.max(np.abs(m.D2 @ f - d2)))
    assert np.log2(errs[0] / errs[1]) > 3.5


def test_sinh_mesh_quadrature():
    m = sinh_mesh(80.0, 80.0, A=20.0, h0=0.1)
    assert m.integrate(np.exp(-m.xi**2)) == pytest.approx(np.sqrt(np.pi), rel=1e-8)
    assert m.xi[0] == pytest.approx(-80.0) and m.xi[-1] == pytest.approx(80.0)
    assert np.min(np.diff(m.xi)) == pytest.approx(0.1, rel=0.05)


def test_sinh_mesh_rejects_bad_lengths():
    with pytest.raises(ValueError):
        sinh_mesh(-1.0, 2.0)
