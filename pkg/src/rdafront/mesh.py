"""Stretched one-dimensional meshes with fourth-order finite-difference operators.

Nodes are ``xi = A sinh(s)`` with ``s`` uniform, so spacing is about ``h0``
near the interface at ``xi = 0`` and grows geometrically in the tails.
Derivatives are taken in ``s`` with Fornberg weights and mapped by the chain
rule.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

__all__ = ["fd_weights", "uniform_diff_matrices", "SinhMesh", "sinh_mesh"]


def fd_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Fornberg's finite-difference weights.

    Returns an array ``c`` of shape ``(len(x), m + 1)`` such that
    ``sum_j c[j, k] f(x[j])`` approximates the k-th derivative at ``z``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


@lru_cache(maxsize=8)
def _stencil_table(order: int):
    # (offsets, weights for d1, weights for d2) for each boundary distance
    half = order // 2
    table = {}
    for pos in range(half):
        st = order + 2
        idx = np.arange(st) - pos
        c = fd_weights(0.0, idx.astype(float), 2)
        table[pos] = (idx, c[:, 1].copy(), c[:, 2].copy())
    idx = np.arange(-half, half + 1)
    c = fd_weights(0.0, idx.astype(float), 2)
    table["interior"] = (idx, c[:, 1].copy(), c[:, 2].copy())
    return table


def uniform_diff_matrices(n: int, ds: float, order: int = 4) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """First and second derivative matrices on a uniform grid of ``n`` points.

    Centred ``order + 1`` point stencils in the interior, one-sided
    ``order + 2`` point stencils near the ends (which keeps the second
    derivative at full order).
    """
    if n < order + 2:
        raise ValueError(f"need at least {order + 2} nodes, got {n}")
    table = _stencil_table(order)
    half = order // 2
    rows, cols, d1, d2 = [], [], [], []
    off, w1, w2 = table["interior"]
    inner = np.arange(half, n - half)
    for k in range(len(off)):
        rows.append(inner)
        cols.append(inner + off[k])
        d1.append(np.full(len(inner), w1[k]))
        d2.append(np.full(len(inner), w2[k]))
    for pos in range(half):
        off, w1, w2 = table[pos]
        rows.append(np.full(len(off), pos))
        cols.append(pos + off)
        d1.append(w1)
        d2.append(w2)
        # mirrored stencil at the right end
        i = n - 1 - pos
        rows.append(np.full(len(off), i))
        cols.append(i - off)
        d1.append(-w1)
        d2.append(w2)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    D1 = sp.csr_matrix((np.concatenate(d1) / ds, (rows, cols)), shape=(n, n))
    D2 = sp.csr_matrix((np.concatenate(d2) / ds**2, (rows, cols)), shape=(n, n))
    for M in (D1, D2):
        M.sum_duplicates()
        M.sort_indices()
    return D1, D2


@dataclass(frozen=True)
class SinhMesh:
    L_minus: float
    L_plus: float
    A: float
    h0: float
    xi: np.ndarray = field(repr=False)
    dxds: np.ndarray = field(repr=False)
    D1: sp.csr_matrix = field(repr=False)
    D2: sp.csr_matrix = field(repr=False)
    #: quadrature weights: trapezoid in s times dxi/ds
    w: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.xi)

    def integrate(self, f: np.ndarray) -> float:
        return float(np.dot(self.w, f))

    def refined(self, factor: float = 0.5) -> "SinhMesh":
        return sinh_mesh(self.L_minus, self.L_plus, self.A, self.h0 * factor)


def sinh_mesh(L_minus: float, L_plus: float, A: float = 20.0, h0: float = 0.1, order: int = 4) -> SinhMesh:
    """Mesh on ``[-L_minus, L_plus]`` with spacing ``~h0`` near ``xi = 0``."""
    if L_minus <= 0 or L_plus <= 0 or A <= 0 or h0 <= 0:
        raise ValueError("mesh lengths and spacings must be positive")
    sL = np.arcsinh(L_minus / A)
    sR = np.arcsinh(L_plus / A)
    ds_target = h0 / A
    n = int(np.ceil((sL + sR) / ds_target)) + 1
    s = np.linspace(-sL, sR, n)
    ds = s[1] - s[0]
    xi = A * np.sinh(s)
    xs = A * np.cosh(s)
    xss = xi
    D1s, D2s = uniform_diff_matrices(n, ds, order)
    D1 = (sp.diags(1.0 / xs) @ D1s).tocsr()
    D2 = (sp.diags(1.0 / xs**2) @ D2s - sp.diags(xss / xs**3) @ D1s).tocsr()
    # canonical form up front; scipy would otherwise sort indices in place on first use,
    # which changes summation order between otherwise identical runs
    for M in (D1, D2):
        M.sum_duplicates()
        M.sort_indices()
    w = np.full(n, ds)
    w[0] = w[-1] = ds / 2
    w *= xs
    return SinhMesh(float(L_minus), float(L_plus), float(A), float(h0), xi, xs, D1, D2, w)
