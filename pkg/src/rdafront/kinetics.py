"""Reaction kinetics: F, G and their partials, nullcline branches, homogeneous states.

The systems handled here are

    U_t = ΔU + F(U, V; mu)
    V_t = δ^-2 ΔV + G(U, V; mu) + ν V_x

with F, G independent of (δ, ν). A model supplies vectorised evaluators for
F and G and (preferably) their analytic partial derivatives.
"""
from __future__ import annotations

import copy
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "ReactionModel",
    "FunctionModel",
    "KlausmeierModel",
    "NullclineBranch",
    "SteadyState",
    "eval_reaction",
    "nullcline_branches",
    "find_steady_states",
    "front_states",
    "get_model",
    "MODEL_REGISTRY",
]


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("reaction evaluators require finite (u, v)")


class ReactionModel:
    """Base class for two-component kinetics.

    Subclasses implement :meth:`F` and :meth:`G`. Analytic partials go in
    :meth:`partials`; the default falls back to centred finite differences
    with step ``1e-6 * max(1, |x|)``, which is fine for exploration but not
    accurate enough for spectral work.
    """

    name = "generic"
    #: names of the parameter vector entries
    param_names: tuple[str, ...] = ()
    analytic_partials = False

    def __init__(self, params: Sequence[float]):
        self.params = tuple(float(p) for p in params)
        if self.param_names and len(self.params) != len(self.param_names):
            raise ValueError(
                f"{self.name} expects {len(self.param_names)} parameters, got {len(self.params)}"
            )

    def __repr__(self) -> str:
        return f"{type(self).__name__}(params={self.params})"

    def with_params(self, params: Sequence[float]) -> "ReactionModel":
        if type(self).__init__ is ReactionModel.__init__ or isinstance(self, KlausmeierModel):
            return type(self)(params)
        new = copy.copy(self)
        new.params = tuple(float(p) for p in params)
        return new

    def F(self, u, v):
        raise NotImplementedError

    def G(self, u, v):
        raise NotImplementedError

    def partials(self, u, v):
        """Return ``(F_u, F_v, G_u, G_v)`` at ``(u, v)``."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        hu = 1e-6 * np.maximum(1.0, np.abs(u))
        hv = 1e-6 * np.maximum(1.0, np.abs(v))
        Fu = (self.F(u + hu, v) - self.F(u - hu, v)) / (2 * hu)
        Fv = (self.F(u, v + hv) - self.F(u, v - hv)) / (2 * hv)
        Gu = (self.G(u + hu, v) - self.G(u - hu, v)) / (2 * hu)
        Gv = (self.G(u, v + hv) - self.G(u, v - hv)) / (2 * hv)
        return Fu, Fv, Gu, Gv

    # Windows used by the generic root searches; models override as needed.
    def state_window(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return (-10.0, 10.0), (-10.0, 10.0)

    def branch_window(self) -> tuple[float, float]:
        return self.state_window()[1]

    def branches(self) -> list["NullclineBranch"]:
        return _numeric_branches(self)

    def steady_states(self) -> list["SteadyState"]:
        return _newton_steady_states(self)


class FunctionModel(ReactionModel):
    """Wrap user supplied callables ``F(u, v, mu)`` and ``G(u, v, mu)``."""

    name = "function"

    def __init__(
        self,
        F: Callable,
        G: Callable,
        params: Sequence[float] = (),
        partials: Callable | None = None,
        u_window: tuple[float, float] = (-10.0, 10.0),
        v_window: tuple[float, float] = (-10.0, 10.0),
    ):
        super().__init__(params)
        self._F, self._G, self._partials = F, G, partials
        self.analytic_partials = partials is not None
        self._window = (tuple(u_window), tuple(v_window))

    def F(self, u, v):
        return self._F(u, v, self.params)

    def G(self, u, v):
        return self._G(u, v, self.params)

    def partials(self, u, v):
        if self._partials is None:
            return super().partials(u, v)
        return self._partials(u, v, self.params)

    def state_window(self):
        return self._window


class KlausmeierModel(ReactionModel):
    """Modified Klausmeier kinetics.

    F = -mu1 U + U^2 V (1 - mu2 U),   G = mu3 - V - U^2 V

    with mortality ``mu1``, inverse soil carrying capacity ``mu2`` and
    rainfall ``mu3``.
    """

    name = "klausmeier"
    param_names = ("mu1", "mu2", "mu3")
    analytic_partials = True

    def __init__(self, params: Sequence[float] = (0.1, 0.1, 2.0)):
        super().__init__(params)
        if min(self.params) <= 0:
            raise ValueError("Klausmeier parameters must be positive")

    @property
    def mu1(self) -> float:
        return self.params[0]

    @property
    def mu2(self) -> float:
        return self.params[1]

    @property
    def mu3(self) -> float:
        return self.params[2]

    def F(self, u, v):
        return -self.mu1 * u + u * u * v * (1.0 - self.mu2 * u)

    def G(self, u, v):
        return self.mu3 - v - u * u * v

    def partials(self, u, v):
        m1, m2 = self.mu1, self.mu2
        Fu = -m1 + 2.0 * u * v - 3.0 * m2 * u * u * v
        Fv = u * u * (1.0 - m2 * u)
        Gu = -2.0 * u * v
        Gv = -1.0 - u * u
        return Fu, Fv, Gu, Gv

    @property
    def fold_v(self) -> float:
        """Fold of the nonzero nullcline, V = 4 mu1 mu2."""
        return 4.0 * self.mu1 * self.mu2

    def upper_branch(self, v):
        """U_F^+(V), defined for V >= 4 mu1 mu2."""
        v = np.asarray(v, dtype=float)
        disc = np.sqrt(np.maximum(1.0 - self.fold_v / v, 0.0))
        return (1.0 + disc) / (2.0 * self.mu2)

    def middle_branch(self, v):
        """U_F^-(V), defined for V >= 4 mu1 mu2."""
        v = np.asarray(v, dtype=float)
        disc = np.sqrt(np.maximum(1.0 - self.fold_v / v, 0.0))
        return (1.0 - disc) / (2.0 * self.mu2)

    def state_window(self):
        return (0.0, 1.0 / self.mu2), (0.0, 1.5 * self.mu3)

    def branch_window(self):
        return (0.0, 1.5 * self.mu3)

    def branches(self):
        lo, hi = self.branch_window()
        zero = NullclineBranch(
            label="S-",
            f=lambda v: np.zeros_like(np.asarray(v, dtype=float)),
            domain=(lo, hi),
            model=self,
        )
        vf = self.fold_v
        upper = NullclineBranch(
            label="S+", f=self.upper_branch, domain=(vf, max(hi, vf)), model=self, folds=(vf,)
        )
        middle = NullclineBranch(
            label="S0", f=self.middle_branch, domain=(vf, max(hi, vf)), model=self, folds=(vf,)
        )
        return [zero, middle, upper]

    def vegetated_states(self) -> list[tuple[float, float]]:
        """Closed-form nonzero states (U_1, V_1), (U_2, V_2); empty below threshold."""
        m1, m2, m3 = self.params
        if m3 / m1 <= 2.0 * (m2 + math.sqrt(1.0 + m2 * m2)):
            return []
        root = math.sqrt(m3 * m3 - 4.0 * m1 * (m1 + m2 * m3))
        out = []
        for sgn in (-1.0, 1.0):
            U = (m3 + sgn * root) / (2.0 * (m1 + m2 * m3))
            V = m3 - m1 * U / (1.0 - m2 * U)
            out.append((U, V))
        return out

    def pde_stable_threshold(self) -> float:
        """Rainfall mu3 above which (U_2, V_2) is stable: mu1 (4 mu2 + 1/mu2)."""
        return self.mu1 * (4.0 * self.mu2 + 1.0 / self.mu2)

    def steady_states(self):
        m1, m2, m3 = self.params
        states = [_make_state(self, 0.0, m3, "S-")]
        veg = self.vegetated_states()
        if not veg:
            warnings.warn(
                f"mu3/mu1 = {m3 / m1:.6g} <= 2(mu2 + sqrt(1 + mu2^2)); only the desert state exists",
                RuntimeWarning,
                stacklevel=2,
            )
            return states
        for U, V in veg:
            label = "S+" if U >= 1.0 / (2.0 * m2) else "S0"
            states.append(_make_state(self, U, V, label))
        return states

    def front_states(self):
        states = self.steady_states()
        if len(states) < 3:
            raise ValueError("no vegetated state: Klausmeier front needs mu3/mu1 above the saddle-node")
        return states[0], states[2]


@dataclass(frozen=True)
class NullclineBranch:
    """Graph u = f(v) of a branch of {F = 0} on a closed interval."""

    label: str
    f: Callable
    domain: tuple[float, float]
    model: ReactionModel = field(repr=False)
    folds: tuple[float, ...] = ()

    def __call__(self, v):
        return self.f(v)

    def contains(self, v: float) -> bool:
        return self.domain[0] <= v <= self.domain[1]

    def derivative(self, v):
        """f'(v) = -F_v / F_u along the branch (inf at a fold)."""
        v = np.asarray(v, dtype=float)
        u = self.f(v)
        Fu, Fv, _, _ = self.model.partials(u, v)
        with np.errstate(divide="ignore"):
            return -Fv / Fu

    def reduced_G(self, v):
        """G restricted to the branch, the slow vector field."""
        return self.model.G(self.f(v), v)


@dataclass(frozen=True)
class SteadyState:
    U: float
    V: float
    branch: str
    Fu: float
    Fv: float
    Gu: float
    Gv: float
    #: rate G_u f' + G_v of the reduced flow on the branch at (U, V)
    kappa: float
    bistable_admissible: bool

    @property
    def det(self) -> float:
        return self.Fu * self.Gv - self.Fv * self.Gu

    @property
    def jacobian(self) -> np.ndarray:
        return np.array([[self.Fu, self.Fv], [self.Gu, self.Gv]])

    def as_dict(self) -> dict:
        return {
            "U": self.U,
            "V": self.V,
            "branch": self.branch,
            "Fu": self.Fu,
            "Fv": self.Fv,
            "Gu": self.Gu,
            "Gv": self.Gv,
            "kappa": self.kappa,
            "bistable_admissible": self.bistable_admissible,
        }


def _make_state(model: ReactionModel, U: float, V: float, label: str) -> SteadyState:
    Fu, Fv, Gu, Gv = (float(x) for x in model.partials(np.float64(U), np.float64(V)))
    fprime = -Fv / Fu if Fu != 0 else math.inf
    kappa = Gu * fprime + Gv
    admissible = Fu < 0 and Gv < 0 and Fu * Gv - Fv * Gu > 0
    return SteadyState(float(U), float(V), label, Fu, Fv, Gu, Gv, kappa, bool(admissible))


def eval_reaction(model: ReactionModel, u, v):
    """Return ``(F(u, v), G(u, v))``; rejects non-finite input."""
    _check_finite(u, v)
    return model.F(u, v), model.G(u, v)


def nullcline_branches(model: ReactionModel) -> list[NullclineBranch]:
    return model.branches()


def find_steady_states(model: ReactionModel) -> list[SteadyState]:
    return model.steady_states()


def front_states(model: ReactionModel) -> tuple[SteadyState, SteadyState]:
    """States (U^-, V^-) at ξ -> -inf and (U^+, V^+) at ξ -> +inf."""
    if hasattr(model, "front_states"):
        return model.front_states()
    ok = [s for s in model.steady_states() if s.bistable_admissible]
    pairs = [(a, b) for a in ok for b in ok if a.branch != b.branch and a.V > b.V]
    if not pairs:
        raise ValueError("no pair of bistable-admissible states on distinct branches")
    return pairs[0]


def _newton_steady_states(model: ReactionModel, n_seeds: int = 25, tol: float = 1e-13) -> list[SteadyState]:
    (u0, u1), (v0, v1) = model.state_window()
    roots: list[np.ndarray] = []
    for us in np.linspace(u0, u1, n_seeds):
        for vs in np.linspace(v0, v1, n_seeds):
            x = np.array([us, vs], dtype=float)
            for _ in range(60):
                Fval, Gval = model.F(x[0], x[1]), model.G(x[0], x[1])
                J = np.array(model.partials(x[0], x[1]), dtype=float).reshape(2, 2)
                try:
                    dx = np.linalg.solve(J, -np.array([Fval, Gval]))
                except np.linalg.LinAlgError:
                    break
                x = x + dx
                if not np.all(np.isfinite(x)):
                    break
                if np.max(np.abs(dx)) < tol * max(1.0, np.max(np.abs(x))):
                    break
            if not np.all(np.isfinite(x)):
                continue
            if abs(model.F(x[0], x[1])) > 1e-12 or abs(model.G(x[0], x[1])) > 1e-12:
                continue
            if not (u0 <= x[0] <= u1 and v0 <= x[1] <= v1):
                continue
            if all(np.linalg.norm(x - r) > 1e-8 for r in roots):
                roots.append(x)
    roots.sort(key=lambda r: (r[0], r[1]))
    branches = model.branches()
    out = []
    for r in roots:
        label = "?"
        for b in branches:
            if b.contains(r[1]) and abs(float(b(r[1])) - r[0]) < 1e-6:
                label = b.label
                break
        out.append(_make_state(model, r[0], r[1], label))
    return out


def _numeric_branches(model: ReactionModel, n_v: int = 400, n_u: int = 800) -> list[NullclineBranch]:
    """Trace the graphs u = f_j(v) of {F = 0} by root bracketing on a grid.

    Branches are cut at folds (where the number of roots changes); each is
    represented by a Newton-polished evaluator seeded from the sampled roots.
    """
    (u0, u1), _ = model.state_window()
    v0, v1 = model.branch_window()
    vs = np.linspace(v0, v1, n_v)
    ug = np.linspace(u0, u1, n_u)
    samples: list[list[float]] = []
    for v in vs:
        vals = model.F(ug, np.full_like(ug, v))
        idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
        rts = []
        for i in idx:
            if vals[i] == 0:
                rts.append(ug[i])
            elif vals[i + 1] != 0:
                rts.append(brentq(lambda s: model.F(s, v), ug[i], ug[i + 1], xtol=1e-14))
        samples.append(sorted(set(np.round(rts, 12))))
    branches: list[NullclineBranch] = []
    start = 0
    for k in range(1, n_v + 1):
        if k == n_v or len(samples[k]) != len(samples[start]):
            seg_v = vs[start:k]
            nroots = len(samples[start])
            if len(seg_v) >= 2 and nroots:
                folds = tuple(x for x in (vs[start] if start > 0 else None, vs[k - 1] if k < n_v else None) if x is not None)
                for j in range(nroots):
                    seg_u = np.array([samples[i][j] for i in range(start, k)])
                    branches.append(
                        NullclineBranch(
                            label=f"S{len(branches)}",
                            f=_polished_graph(model, seg_v, seg_u),
                            domain=(float(seg_v[0]), float(seg_v[-1])),
                            model=model,
                            folds=folds,
                        )
                    )
            start = k
    return branches


def _polished_graph(model: ReactionModel, vs: np.ndarray, us: np.ndarray) -> Callable:
    def f(v):
        v = np.asarray(v, dtype=float)
        u = np.interp(v, vs, us)
        for _ in range(30):
            Fu = model.partials(u, v)[0]
            step = model.F(u, v) / Fu
            u = u - step
            if np.all(np.abs(step) < 1e-14 * np.maximum(1.0, np.abs(u))):
                break
        return u

    return f


MODEL_REGISTRY: dict[str, type[ReactionModel]] = {"klausmeier": KlausmeierModel}


def get_model(name: str, params: Sequence[float]) -> ReactionModel:
    try:
        cls = MODEL_REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; registered: {sorted(MODEL_REGISTRY)}") from None
    return cls(params)
