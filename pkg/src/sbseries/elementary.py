"""Numerical evaluation of elementary differentials and truncated B-series
for concrete SDE problems, plus the finite-difference derivative fallback.

Problems come in two flavors sharing one class:

* partitioned -- coefficient functions indexed by (partition, variant,
  color) acting on the tuple of state blocks; used with the general tree
  family.
* semi-linear -- a linear part ``A(t)`` plus coefficient functions
  ``g_m(x, t)``; the state is the x-block with time as a second block of
  length one; used with the semi-linear tree family.

Directional derivatives use supplied analytic routines when present and
central finite differences otherwise.  Mixed central differences of order
k are exact on polynomials of degree k, which pins the accuracy contracts
of the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from sbseries import expr as ex
from sbseries import trees as T
from sbseries.paths import PathGrid, PathTooShort, eval_weight
from sbseries.series import BSeries
from sbseries.trees import (
    ALabel,
    EmptyLabel,
    GeneralLabel,
    GLabel,
    SemiLinear,
    TLabel,
    Tree,
    TreeError,
    TreeModel,
    WLabel,
    alpha,
)


class ModelMismatch(TreeError):
    """Tree and problem belong to different tree models."""


class DerivativeOrderUnsupported(TreeError):
    """Derivative order above 3 requires analytic derivatives."""


_EPS = float(np.finfo(float).eps)


@dataclass
class SDEProblem:
    """A concrete SDE test problem.

    ``dims`` are the per-partition state dimensions and ``x0`` the flat
    initial state (blocks concatenated in partition order; for the
    semi-linear flavor the last block is the initial time).
    """

    name: str
    model: TreeModel
    dims: tuple[int, ...]
    x0: np.ndarray
    interpretation: str = "stratonovich"
    # partitioned flavor
    coeffs: dict = field(default_factory=dict)
    coeff_derivs: dict = field(default_factory=dict)
    # semi-linear flavor
    A: Callable | None = None
    A_derivs: tuple = ()
    g: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (sum(self.dims),):
            raise ValueError("x0 must be the flat concatenation of the blocks")

    @property
    def is_semilinear(self) -> bool:
        return isinstance(self.model, SemiLinear)

    @property
    def dim(self) -> int:
        """Dimension of the x-block of a semi-linear problem."""
        return self.dims[0]

    @property
    def t0(self) -> float:
        if not self.is_semilinear:
            raise ValueError("t0 is defined for semi-linear problems")
        return float(self.x0[-1])

    @property
    def x0_state(self) -> np.ndarray:
        """x-block of the initial state of a semi-linear problem."""
        return self.x0[:self.dim]

    def blocks(self, x: np.ndarray) -> list[np.ndarray]:
        out, off = [], 0
        for d in self.dims:
            out.append(x[off:off + d])
            off += d
        return out

    def block_offset(self, q: int) -> int:
        return sum(self.dims[:q - 1])

    def coefficient(self, q: int, v: int, m: int) -> Callable:
        """Coefficient as a function of the flat state."""
        if self.is_semilinear:
            if (q, v) != (1, 1) or m not in self.g:
                raise ModelMismatch(f"no coefficient ({q},{v},{m}) on {self.name}")
            gm = self.g[m]
            return lambda x: np.asarray(gm(x[:self.dim], float(x[self.dim])),
                                        dtype=float)
        fn = self.coeffs.get((q, v, m))
        if fn is None:
            raise ModelMismatch(f"no coefficient ({q},{v},{m}) on {self.name}")
        return lambda x: np.asarray(fn(*self.blocks(x)), dtype=float)

    def a_derivative(self, k: int, t: float) -> np.ndarray:
        """k-th time derivative of A (0 = A itself), analytic or central FD."""
        if self.A is None:
            raise ModelMismatch(f"{self.name} has no linear part")
        if k == 0:
            return np.asarray(self.A(t), dtype=float)
        if k <= len(self.A_derivs):
            return np.asarray(self.A_derivs[k - 1](t), dtype=float)
        if k > 3:
            raise DerivativeOrderUnsupported(
                "A-derivatives above order 3 need analytic routines")
        step = _EPS ** (1.0 / (k + 2)) * (1.0 + abs(t))
        if k == 1:
            return (self.a_derivative(0, t + step)
                    - self.a_derivative(0, t - step)) / (2 * step)
        if k == 2:
            return (self.a_derivative(0, t + step) - 2 * self.a_derivative(0, t)
                    + self.a_derivative(0, t - step)) / step ** 2
        return (self.a_derivative(0, t + 2 * step) - 2 * self.a_derivative(0, t + step)
                + 2 * self.a_derivative(0, t - step)
                - self.a_derivative(0, t - 2 * step)) / (2 * step ** 3)


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


def _fd_steps(order: int, x: np.ndarray, directions) -> list[float]:
    base = {1: _EPS ** (1 / 3), 2: 4.0 * _EPS ** (1 / 4), 3: 4.0 * _EPS ** (1 / 5)}[order]
    scale = 1.0 + float(np.max(np.abs(x), initial=0.0))
    return [base * scale / max(1.0, float(np.max(np.abs(u), initial=0.0)))
            for u in directions]


def fd_directional(problem: SDEProblem, q: int, v: int, m: int,
                   x: np.ndarray, directions) -> np.ndarray:
    """Mixed central finite difference of the (q, v, m) coefficient along
    the given (partition, vector) directions; |directions| <= 3."""
    fn = problem.coefficient(q, v, m)
    flat_dirs = []
    for part, vec in directions:
        u = np.zeros_like(problem.x0)
        off = problem.block_offset(part)
        vec = np.asarray(vec, dtype=float)
        u[off:off + vec.size] = vec
        flat_dirs.append(u)
    k = len(flat_dirs)
    if k == 0:
        return fn(x)
    if k > 3:
        raise DerivativeOrderUnsupported(
            "finite differences support mixed derivatives up to order 3")
    eps = _fd_steps(k, x, flat_dirs)
    total = None
    for signs in np.ndindex(*(2,) * k):
        s = [1.0 if b == 0 else -1.0 for b in signs]
        point = x.astype(float).copy()
        for sj, ej, uj in zip(s, eps, flat_dirs):
            point += sj * ej * uj
        value = fn(point) * float(np.prod(s))
        total = value if total is None else total + value
    return total / float(np.prod([2 * e for e in eps]))


def _directional_derivative(problem: SDEProblem, q: int, v: int, m: int,
                            x: np.ndarray, directions, mode: str) -> np.ndarray:
    if mode not in ("auto", "analytic", "fd"):
        raise ValueError(f"unknown derivative mode {mode!r}")
    analytic = problem.coeff_derivs.get((q, v, m))
    if mode == "analytic" and analytic is None:
        raise ModelMismatch(f"{problem.name} has no analytic derivatives "
                            f"for ({q},{v},{m})")
    if analytic is not None and mode != "fd":
        return np.asarray(analytic(problem.blocks(x), list(directions)), dtype=float)
    if len(directions) > 3:
        raise DerivativeOrderUnsupported(
            "derivative order above 3 requires analytic derivatives")
    return fd_directional(problem, q, v, m, x, directions)


# ---------------------------------------------------------------------------
# Elementary differentials
# ---------------------------------------------------------------------------


def value_partition(problem: SDEProblem, label) -> int:
    """Partition of the space a node's elementary differential lives in."""
    if problem.is_semilinear:
        return 2 if isinstance(label, (TLabel, WLabel)) else 1
    return T.partition_of(label)


def eval_elementary(problem: SDEProblem, tau: Tree, x: np.ndarray | None = None,
                    derivatives: str = "auto") -> np.ndarray:
    """The elementary differential of ``tau`` at the flat state ``x``.

    ``derivatives`` selects how bracket nodes differentiate their
    coefficient: "auto" prefers analytic routines, "analytic" requires
    them, "fd" forces central finite differences.
    """
    if x is None:
        x = problem.x0
    x = np.asarray(x, dtype=float)
    label = tau.label
    if isinstance(label, EmptyLabel):
        return problem.blocks(x)[label.q - 1] if not problem.is_semilinear \
            else (x[:problem.dim] if label.q == 1 else x[problem.dim:])
    if isinstance(label, (TLabel, WLabel)):
        return np.ones(1)
    if isinstance(label, ALabel):
        if not problem.is_semilinear:
            raise ModelMismatch(f"{problem.name} has no linear part")
        t = float(x[problem.dim])
        t_children = sum(1 for c in tau.children if isinstance(c.label, TLabel))
        others = [c for c in tau.children if not isinstance(c.label, TLabel)]
        if len(others) > 1:
            raise ModelMismatch("A-node with more than one non-time child")
        if others:
            target = eval_elementary(problem, others[0], x, derivatives)
        else:
            target = x[:problem.dim]
        return problem.a_derivative(t_children, t) @ target
    if isinstance(label, GLabel):
        q, v, m = 1, 1, label.m
    elif isinstance(label, GeneralLabel):
        if problem.is_semilinear:
            raise ModelMismatch(f"{problem.name} is semi-linear")
        q, v, m = label.q, label.v, label.m
    else:
        raise ModelMismatch(f"cannot evaluate {label!r}")
    if tau.is_leaf:
        return problem.coefficient(q, v, m)(x)
    directions = [(value_partition(problem, c.label),
                   eval_elementary(problem, c, x, derivatives))
                  for c in tau.children]
    return _directional_derivative(problem, q, v, m, x, directions, derivatives)


def eval_bseries(problem: SDEProblem, series: BSeries, x: np.ndarray,
                 h: float, path: PathGrid, interp: str | None = None,
                 derivatives: str = "auto") -> np.ndarray:
    """Evaluate the truncated series at state ``x`` over one step of size
    ``h``, reading the weight randomness from ``path`` (which must span at
    least [0, h] on its grid)."""
    if interp is None:
        interp = problem.interpretation
    if path.h < h - 1e-12:
        raise PathTooShort(f"path spans [0, {path.h}], step needs {h}")
    step_path = path if abs(path.h - h) < 1e-12 else path.restrict(h)
    x = np.asarray(x, dtype=float)
    out = eval_weight(series.empty_weight, step_path, interp) * x
    for tree in series.trees():
        weight = series.weight(tree)
        if weight.is_zero:
            continue
        scale = float(alpha(tree)) * eval_weight(weight, step_path, interp)
        if scale == 0.0:
            continue
        part = value_partition(problem, tree.label)
        off = problem.block_offset(part)
        value = eval_elementary(problem, tree, x, derivatives)
        out[off:off + value.size] += scale * value
    return out


# ---------------------------------------------------------------------------
# Built-in problems
# ---------------------------------------------------------------------------


class _Separable:
    """Scalar coefficient of the form c * phi(r) * psi(v) * chi(t) with all
    partial derivatives up to order three available analytically."""

    def __init__(self, c, phi, psi, chi):
        self.c = c
        self.tables = (phi, psi, chi)  # each: [f, f', f'', f''']

    def partial(self, a: int, b: int, d: int, r: float, v: float, t: float):
        phi, psi, chi = self.tables
        return self.c * phi[a](r) * psi[b](v) * chi[d](t)

    def dderiv(self, r, v, t, dirs):
        """Sum over variable assignments of mixed partials times direction
        components; ``dirs`` holds (dr, dv, dt) triples."""
        total = 0.0
        for assign in np.ndindex(*(3,) * len(dirs)):
            counts = [0, 0, 0]
            weight = 1.0
            for j, var in enumerate(assign):
                counts[var] += 1
                weight *= dirs[j][var]
                if weight == 0.0:
                    break
            if weight == 0.0:
                continue
            total += weight * self.partial(counts[0], counts[1], counts[2], r, v, t)
        return total


_MAX_ANALYTIC_ORDER = 8


def _poly(*coeffs):
    """Derivative table of a polynomial given by coefficients (c0, c1, ...)."""
    out = []
    current = list(coeffs)
    for _ in range(_MAX_ANALYTIC_ORDER):
        cur = list(current)
        out.append(lambda s, cur=cur: sum(c * s ** k for k, c in enumerate(cur)))
        current = [k * c for k, c in enumerate(current)][1:] or [0.0]
    return out


_TRIG = [np.sin, np.cos, lambda s: -np.sin(s), lambda s: -np.cos(s)]
_SIN = [_TRIG[k % 4] for k in range(_MAX_ANALYTIC_ORDER)]
_COS = [_TRIG[(k + 1) % 4] for k in range(_MAX_ANALYTIC_ORDER)]
_ONE = _poly(1.0)
_ID = _poly(0.0, 1.0)


def _langevin_scalars(v_dependent: bool):
    """Second components of the Langevin coefficients as separable scalars."""
    f_d = _Separable(-1.0, _SIN, _ONE, _poly(1.0, 1.0))
    friction = _Separable(-1.0, _ONE, _ID, _poly(1.0, 0.0, 0.25))  # -alpha(t) v
    psi = _poly(1.0, 0.0, 0.125) if v_dependent else _ONE
    f_s = _Separable(0.2, _COS, psi, _poly(1.0, 0.5))
    return f_d, friction, f_s


def _make_langevin_partitioned(name: str, v_dependent: bool) -> SDEProblem:
    f_d, friction, f_s = _langevin_scalars(v_dependent)

    def vec2(scalar_fn):
        return lambda x1, x2: np.array([0.0, scalar_fn(x1[0], x1[1], x2[0])])

    coeffs = {
        (1, 1, 0): vec2(lambda r, v, t: f_d.partial(0, 0, 0, r, v, t)),
        (1, 2, 0): lambda x1, x2: np.array(
            [x1[1], friction.partial(0, 0, 0, x1[0], x1[1], x2[0])]),
        (1, 1, 1): vec2(lambda r, v, t: f_s.partial(0, 0, 0, r, v, t)),
        (2, 1, 0): lambda x1, x2: np.array([1.0]),
    }

    def _dirs3(blocks, directions):
        return [(float(vec[0]) if part == 1 else 0.0,
                 float(vec[1]) if part == 1 else 0.0,
                 float(vec[0]) if part == 2 else 0.0)
                for part, vec in directions]

    def deriv_second_component(scalar: _Separable):
        def deriv(blocks, directions):
            r, v = blocks[0]
            t = blocks[1][0]
            return np.array([0.0, scalar.dderiv(r, v, t, _dirs3(blocks, directions))])
        return deriv

    def deriv_friction(blocks, directions):
        r, v = blocks[0]
        t = blocks[1][0]
        dirs = _dirs3(blocks, directions)
        first = dirs[0][1] if len(directions) == 1 else 0.0
        return np.array([first, friction.dderiv(r, v, t, dirs)])

    coeff_derivs = {
        (1, 1, 0): deriv_second_component(f_d),
        (1, 2, 0): deriv_friction,
        (1, 1, 1): deriv_second_component(f_s),
        (2, 1, 0): lambda blocks, directions: np.array([0.0]),
    }
    return SDEProblem(
        name=name,
        model=T.langevin_model(),
        dims=(2, 1),
        x0=np.array([0.5, 0.3, 0.4]),
        interpretation="stratonovich",
        coeffs=coeffs,
        coeff_derivs=coeff_derivs,
    )


def _langevin_alpha(t):
    return 1.0 + 0.25 * t * t


def _make_langevin_semilinear() -> SDEProblem:
    def A(t):
        return np.array([[0.0, 1.0], [0.0, -_langevin_alpha(t)]])

    A1 = lambda t: np.array([[0.0, 0.0], [0.0, -0.5 * t]])
    A2 = lambda t: np.array([[0.0, 0.0], [0.0, -0.5]])
    A3 = lambda t: np.zeros((2, 2))

    def g0(x, t):
        r = x[0]
        return np.stack([np.zeros_like(r), -np.sin(r) * (1.0 + t)])

    def g1(x, t):
        r = x[0]
        return np.stack([np.zeros_like(r), 0.2 * np.cos(r) * (1.0 + 0.5 * t)])

    return SDEProblem(
        name="langevin",
        model=SemiLinear(1),
        dims=(2, 1),
        x0=np.array([0.5, 0.3, 0.4]),
        interpretation="stratonovich",
        A=A, A_derivs=(A1, A2, A3),
        g={0: g0, 1: g1},
    )


def _make_noncommutative() -> SDEProblem:
    def A(t):
        return np.array([[0.0, 1.0 + 0.5 * t],
                         [-1.0 + 0.125 * t * t, -0.5 - 0.25 * t]])

    A1 = lambda t: np.array([[0.0, 0.5], [0.25 * t, -0.25]])
    A2 = lambda t: np.array([[0.0, 0.0], [0.25, 0.0]])
    A3 = lambda t: np.zeros((2, 2))

    def g0(x, t):
        return np.stack([0.3 * np.sin(x[1]),
                         0.2 * np.cos(x[0]) * (1.0 + 0.25 * t)])

    def g1(x, t):
        return np.stack([0.15 * np.cos(x[0]),
                         0.1 * np.sin(x[0] + x[1]) * (1.0 + 0.125 * t)])

    return SDEProblem(
        name="noncomm-2x2",
        model=SemiLinear(1),
        dims=(2, 1),
        x0=np.array([0.6, 0.4, 0.0]),
        interpretation="stratonovich",
        A=A, A_derivs=(A1, A2, A3),
        g={0: g0, 1: g1},
    )


def _make_scalar_semilinear() -> SDEProblem:
    A = lambda t: np.array([[-0.5 - 0.25 * t]])
    A1 = lambda t: np.array([[-0.25]])
    A2 = lambda t: np.zeros((1, 1))
    A3 = lambda t: np.zeros((1, 1))

    def g0(x, t):
        return 0.4 * np.sin(x) * (1.0 + t / 3.0)

    def g1(x, t):
        return 0.25 * np.cos(x) * (1.0 + 0.2 * t)

    return SDEProblem(
        name="scalar-semilinear",
        model=SemiLinear(1),
        dims=(1, 1),
        x0=np.array([0.8, 0.0]),
        interpretation="stratonovich",
        A=A, A_derivs=(A1, A2, A3),
        g={0: g0, 1: g1},
    )


_REGISTRY: dict[str, Callable[[], SDEProblem]] = {
    "langevin": _make_langevin_semilinear,
    "langevin-partitioned": lambda: _make_langevin_partitioned(
        "langevin-partitioned", v_dependent=False),
    "langevin-vdep": lambda: _make_langevin_partitioned(
        "langevin-vdep", v_dependent=True),
    "noncomm-2x2": _make_noncommutative,
    "scalar-semilinear": _make_scalar_semilinear,
}


def problem_names() -> list[str]:
    return sorted(_REGISTRY)


def get_problem(name: str) -> SDEProblem:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {problem_names()}")
    return factory()
