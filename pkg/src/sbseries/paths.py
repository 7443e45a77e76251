"""Wiener path generation and pathwise evaluation of weight expressions.

Paths live on a uniform grid over [0, h].  Color 0 is the time grid; each
stochastic color is an independent one-dimensional Wiener path, sampled by
dyadic midpoint refinement so that the same seed at step counts N and 2N
produces bit-identical values on the shared grid points.  Monte-Carlo
helpers derive one seed per (master seed, path index), so results do not
depend on evaluation order.

Evaluation of an integral atom walks the grid once: color 0 uses the
trapezoidal rule in time, stochastic colors use left-endpoint sums for the
Ito interpretation and trapezoidal integrand averaging for Stratonovich.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sbseries.expr import IntAtom, Mono, WeightExpr


class PathError(Exception):
    pass


class ColorMissing(PathError):
    """The expression references a Wiener color the path does not carry."""


class PathTooShort(PathError):
    """The path does not span the requested horizon."""


ITO = "ito"
STRATONOVICH = "stratonovich"


def normalize_interpretation(name: str) -> str:
    low = name.lower()
    if low in (ITO, "i"):
        return ITO
    if low in (STRATONOVICH, "strat", "s"):
        return STRATONOVICH
    raise ValueError(f"unknown interpretation {name!r}")


@dataclass(frozen=True)
class PathGrid:
    """Cumulative driver values on a uniform grid: row 0 holds the times
    t_k, row m the Wiener value W_m(t_k)."""

    h: float
    n_steps: int
    values: np.ndarray  # shape (M + 1, n_steps + 1)
    seed_record: tuple

    @property
    def n_colors(self) -> int:
        return self.values.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.values[0]

    def wiener(self, m: int) -> np.ndarray:
        if not 1 <= m <= self.n_colors:
            raise ColorMissing(f"path carries colors 1..{self.n_colors}, not {m}")
        return self.values[m]

    def increments(self, m: int) -> np.ndarray:
        return np.diff(self.values[m])

    def restrict(self, h_sub: float) -> "PathGrid":
        """The sub-path over [0, h_sub]; h_sub must lie on the grid."""
        dt = self.h / self.n_steps
        k = int(round(h_sub / dt))
        if k < 1 or abs(k * dt - h_sub) > 1e-12 * max(1.0, self.h):
            raise PathTooShort(f"horizon {h_sub} not on the grid of {self}")
        if k > self.n_steps:
            raise PathTooShort(f"path spans [0, {self.h}], requested {h_sub}")
        return PathGrid(h_sub, k, self.values[:, :k + 1].copy(), self.seed_record)


def _seed_tuple(seed) -> tuple:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def sample_path(h: float, n_steps: int, n_colors: int, seed) -> PathGrid:
    """Draw one path on the uniform grid with ``n_steps`` steps.

    Power-of-two step counts are built by dyadic midpoint refinement, so a
    2N-step path restricted to the N-step grid equals the N-step path for
    the same seed.  Other step counts fall back to sequential increments
    (deterministic, but without the refinement guarantee).
    """
    if n_steps < 1:
        raise ValueError("need at least one step")
    if h <= 0:
        raise ValueError("horizon must be positive")
    base = _seed_tuple(seed)
    values = np.empty((n_colors + 1, n_steps + 1))
    values[0] = np.linspace(0.0, h, n_steps + 1)
    values[0, -1] = h
    for m in range(1, n_colors + 1):
        rng = np.random.default_rng(np.random.SeedSequence(base + (m,)))
        values[m] = _sample_wiener(rng, h, n_steps)
    return PathGrid(h, n_steps, values, base)


def _sample_wiener(rng: np.random.Generator, h: float, n_steps: int) -> np.ndarray:
    w = np.zeros(n_steps + 1)
    if n_steps & (n_steps - 1) == 0:
        # Levy construction: endpoint first, then per level all midpoints
        # left to right; coarse levels draw first, so a refinement consumes
        # the same stream prefix and reproduces the coarse grid exactly.
        w[n_steps] = np.sqrt(h) * rng.standard_normal()
        span = n_steps
        while span > 1:
            half = span // 2
            scale = np.sqrt((span / n_steps) * h / 4.0)
            mids = np.arange(half, n_steps, span)
            z = rng.standard_normal(mids.size)
            w[mids] = 0.5 * (w[mids - half] + w[mids + half]) + scale * z
            span = half
    else:
        dw = np.sqrt(h / n_steps) * rng.standard_normal(n_steps)
        w[1:] = np.cumsum(dw)
    return w


# ---------------------------------------------------------------------------
# Quadrature evaluation
# ---------------------------------------------------------------------------


def eval_weight(expr: WeightExpr, path: PathGrid, interp: str = STRATONOVICH) -> float:
    """Value of the expression over the path's full horizon."""
    interp = normalize_interpretation(interp)
    missing = {m for m in expr.colors() if m > path.n_colors}
    if missing:
        raise ColorMissing(f"path carries {path.n_colors} colors, "
                           f"expression needs {sorted(missing)}")
    total = 0.0
    for coeff, mono in expr.terms:
        total += float(coeff) * _mono_profile(mono, path, interp)[-1]
    return total


def _mono_profile(mono: Mono, path: PathGrid, interp: str) -> np.ndarray:
    """Values of the monomial as a function of the upper limit, on the grid."""
    out = np.ones(path.n_steps + 1)
    if mono.hpow:
        out = out * path.times ** mono.hpow
    for m, p in mono.dws:
        out = out * path.wiener(m) ** p
    for atom, p in mono.ints:
        out = out * _atom_profile(atom, path, interp) ** p
    return out


def _atom_profile(atom: IntAtom, path: PathGrid, interp: str) -> np.ndarray:
    f = _mono_profile(atom.integrand, path, interp)
    out = np.empty(path.n_steps + 1)
    out[0] = 0.0
    if atom.color == 0:
        dt = np.diff(path.times)
        out[1:] = np.cumsum(0.5 * (f[:-1] + f[1:]) * dt)
    else:
        dw = path.increments(atom.color)
        if interp == ITO and not atom.integrand.is_deterministic:
            out[1:] = np.cumsum(f[:-1] * dw)
        else:
            # the calculi agree for deterministic integrands, so both use
            # the better trapezoidal average there (bitwise identical)
            out[1:] = np.cumsum(0.5 * (f[:-1] + f[1:]) * dw)
    return out


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MCStats:
    """Sample statistics of one evaluated quantity."""

    count: int
    mean: float
    variance: float

    @property
    def stderr(self) -> float:
        return float(np.sqrt(self.variance / self.count))


def mc_moments(expr: WeightExpr, h: float, n_steps: int, n_paths: int,
               interp: str = STRATONOVICH, seed=0) -> MCStats:
    """Average the expression over independent paths.

    Per-path seeds are (seed, path index), so the estimate is independent
    of evaluation order; the reduction is numpy's pairwise summation in
    index order, hence bit-reproducible.
    """
    interp = normalize_interpretation(interp)
    n_colors = max(expr.colors(), default=0)
    base = _seed_tuple(seed)
    values = np.empty(n_paths)
    for idx in range(n_paths):
        path = sample_path(h, n_steps, n_colors, base + (idx,))
        values[idx] = eval_weight(expr, path, interp)
    mean = float(np.sum(values) / n_paths)
    if n_paths > 1:
        variance = float(np.sum((values - mean) ** 2) / (n_paths - 1))
    else:
        variance = 0.0
    return MCStats(n_paths, mean, variance)
