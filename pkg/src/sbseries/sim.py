"""Time stepping of semi-linear test SDEs with the exponential midpoint
rule, fine-grid reference solutions, and empirical mean-square convergence
order estimation.

The stepper evaluates the three operator exponentials of the method per
step: the integral of the linear part over each sub-interval is computed
by Simpson quadrature (exact for the polynomial fixtures) and exponentiated
by scaling-and-squaring.  The exponentials depend only on (t, h), never on
the path, so one ladder of step sizes shares them across all Monte-Carlo
paths.  State arrays may carry a trailing batch axis; coefficient
functions of the built-in problems broadcast over it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from sbseries.elementary import SDEProblem
from sbseries.paths import ITO, PathGrid, normalize_interpretation, sample_path


class SimulationError(Exception):
    pass


class StageDivergence(SimulationError):
    """The implicit stage iteration failed to contract; the step size is
    too large for the problem."""


@dataclass(frozen=True)
class ConvergenceReport:
    """Root-mean-square strong errors over a dyadic step ladder and the
    fitted order."""

    h_values: tuple[float, ...]
    rms_errors: tuple[float, ...]
    stderrs: tuple[float, ...]
    slope: float

    def rows(self) -> list[tuple[float, float, float]]:
        return list(zip(self.h_values, self.rms_errors, self.stderrs))


def _simpson_integral_A(problem: SDEProblem, a: float, b: float) -> np.ndarray:
    fa = problem.a_derivative(0, a)
    fm = problem.a_derivative(0, 0.5 * (a + b))
    fb = problem.a_derivative(0, b)
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def midpoint_step_operators(problem: SDEProblem, t: float, h: float):
    """(stage, back, full) exponentials for one step from t to t + h."""
    stage = expm(_simpson_integral_A(problem, t, t + 0.5 * h))
    back = expm(_simpson_integral_A(problem, t + 0.5 * h, t + h))
    full = expm(_simpson_integral_A(problem, t, t + h))
    return stage, back, full


def _solve_stage(problem: SDEProblem, sx: np.ndarray, tm: float, h: float,
                 dw, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Damped fixed-point solve of the implicit midpoint stage."""
    g0, g1 = problem.g[0], problem.g[1]
    damping = 1.0
    state = sx
    prev_delta = np.inf
    stalls = 0
    for _ in range(max_iter):
        proposal = sx + 0.5 * h * g0(state, tm) + 0.5 * dw * g1(state, tm)
        new = state + damping * (proposal - state)
        delta = float(np.max(np.abs(new - state)))
        state = new
        if delta <= tol * (1.0 + float(np.max(np.abs(state)))):
            return state
        if delta > prev_delta:
            stalls += 1
            if stalls >= 3:
                if damping <= 0.26:
                    raise StageDivergence(
                        f"stage iteration diverged at t={tm - 0.5 * h}, h={h}")
                damping *= 0.5
                stalls = 0
        prev_delta = delta
    raise StageDivergence(f"stage iteration did not converge at t={tm - 0.5 * h}")


def exponential_midpoint_step(problem: SDEProblem, t: float, h: float,
                              x: np.ndarray, dw, operators=None) -> np.ndarray:
    """One step of the exponential midpoint rule from state ``x`` at time
    ``t`` with increment ``dw`` over the step."""
    if operators is None:
        operators = midpoint_step_operators(problem, t, h)
    stage_op, back_op, full_op = operators
    tm = t + 0.5 * h
    stage = _solve_stage(problem, stage_op @ x, tm, h, dw)
    g0, g1 = problem.g[0], problem.g[1]
    return full_op @ x + back_op @ (h * g0(stage, tm) + dw * g1(stage, tm))


def integrate_erk(problem: SDEProblem, h: float, n_steps: int, path: PathGrid,
                  method: str = "midpoint", t0: float | None = None,
                  operators: list | None = None) -> np.ndarray:
    """Trajectory of the method over n_steps of size h along the path.

    Returns an array of shape (n_steps + 1, d) for a single path, or
    (n_steps + 1, d, P) for a batched state.  The path grid must resolve
    every step boundary.
    """
    if method != "midpoint":
        raise SimulationError(f"unknown time-stepping method {method!r}")
    if t0 is None:
        t0 = problem.t0
    x = problem.x0_state.copy()
    per_step = int(round(path.n_steps * h / path.h))
    if per_step < 1 or abs(per_step * path.h / path.n_steps - h) > 1e-12:
        raise SimulationError(f"path grid does not resolve steps of {h}")
    w = path.wiener(1)
    out = np.empty((n_steps + 1,) + x.shape)
    out[0] = x
    for k in range(n_steps):
        t = t0 + k * h
        dw = w[(k + 1) * per_step] - w[k * per_step]
        ops = operators[k] if operators is not None else None
        x = exponential_midpoint_step(problem, t, h, x, dw, ops)
        out[k + 1] = x
    return out


def reference_solution(problem: SDEProblem, T: float, n_fine: int,
                       path: PathGrid, t0: float | None = None) -> np.ndarray:
    """Proxy-exact endpoint state on a shared path: Stratonovich problems
    use the Heun predictor-corrector, Ito problems Euler-Maruyama."""
    if t0 is None:
        t0 = problem.t0
    interp = normalize_interpretation(problem.interpretation)
    per_step = int(round(path.n_steps * (T / path.h) / n_fine))
    if per_step < 1 or abs(per_step * n_fine * path.h / path.n_steps - T) > 1e-10:
        raise SimulationError("path grid does not resolve the fine steps")
    dt = T / n_fine
    w = path.wiener(1)
    g0, g1 = problem.g[0], problem.g[1]

    def drift(x, t):
        return problem.a_derivative(0, t) @ x + g0(x, t)

    x = problem.x0_state.copy()
    for k in range(n_fine):
        t = t0 + k * dt
        dw = w[(k + 1) * per_step] - w[k * per_step]
        if interp == ITO:
            x = x + dt * drift(x, t) + dw * g1(x, t)
        else:
            pred = x + dt * drift(x, t) + dw * g1(x, t)
            x = x + 0.5 * dt * (drift(x, t) + drift(pred, t + dt)) \
                + 0.5 * dw * (g1(x, t) + g1(pred, t + dt))
    return x


def _batched_paths(T: float, n_fine: int, n_paths: int, seed) -> np.ndarray:
    """Wiener values of shape (n_paths, n_fine + 1), one seeded stream per
    path so the set is independent of batching."""
    out = np.empty((n_paths, n_fine + 1))
    base = seed if isinstance(seed, tuple) else (int(seed),)
    for idx in range(n_paths):
        out[idx] = sample_path(T, n_fine, 1, base + (idx,)).wiener(1)
    return out


def ms_order_estimate(problem: SDEProblem, h_values, n_paths: int, T: float,
                      seed, n_fine: int = 4096,
                      method: str = "midpoint") -> ConvergenceReport:
    """Empirical mean-square order: RMS endpoint error over shared Brownian
    paths per step size, and the least-squares slope in log2-log2 scale.

    Implementation is batched over paths (state arrays with a trailing
    path axis); the per-path results equal the one-path-at-a-time ones
    because every operator in a step is linear in the batch axis.
    """
    if method != "midpoint":
        raise SimulationError(f"unknown time-stepping method {method!r}")
    h_values = list(h_values)
    if any(h2 >= h1 for h1, h2 in zip(h_values, h_values[1:])):
        raise ValueError("step sizes must be strictly decreasing")
    for h in h_values:
        if abs(round(T / h) - T / h) > 1e-9 or int(round(T / h)) < 1:
            raise ValueError(f"step {h} does not divide the horizon {T}")
        if n_fine % int(round(T / h)) != 0:
            raise ValueError(f"fine grid does not refine step {h}")
    t0 = problem.t0
    w = _batched_paths(T, n_fine, n_paths, seed)  # (P, n_fine + 1)
    g0, g1 = problem.g[0], problem.g[1]

    def drift(x, t):
        return problem.a_derivative(0, t) @ x + g0(x, t)

    # reference: vectorized fine-grid Heun (Stratonovich fixtures)
    interp = normalize_interpretation(problem.interpretation)
    dt = T / n_fine
    x_ref = np.repeat(problem.x0_state[:, None], n_paths, axis=1)
    for k in range(n_fine):
        t = t0 + k * dt
        dw = w[:, k + 1] - w[:, k]
        if interp == ITO:
            x_ref = x_ref + dt * drift(x_ref, t) + dw * g1(x_ref, t)
        else:
            pred = x_ref + dt * drift(x_ref, t) + dw * g1(x_ref, t)
            x_ref = x_ref + 0.5 * dt * (drift(x_ref, t) + drift(pred, t + dt)) \
                + 0.5 * dw * (g1(x_ref, t) + g1(pred, t + dt))

    rms, stderrs = [], []
    for h in h_values:
        steps = int(round(T / h))
        per = n_fine // steps
        operators = [midpoint_step_operators(problem, t0 + k * h, h)
                     for k in range(steps)]
        x = np.repeat(problem.x0_state[:, None], n_paths, axis=1)
        for k in range(steps):
            dw = w[:, (k + 1) * per] - w[:, k * per]
            x = exponential_midpoint_step(problem, t0 + k * h, h, x, dw,
                                          operators[k])
        err_sq = np.sum((x - x_ref) ** 2, axis=0)
        mean_sq = float(np.sum(err_sq) / n_paths)
        rms.append(np.sqrt(mean_sq))
        var_sq = float(np.sum((err_sq - mean_sq) ** 2) / max(n_paths - 1, 1))
        se_sq = np.sqrt(var_sq / n_paths)
        stderrs.append(0.5 * se_sq / rms[-1] if rms[-1] > 0 else 0.0)
    slope = float(np.polyfit(np.log2(h_values), np.log2(rms), 1)[0])
    return ConvergenceReport(tuple(float(h) for h in h_values),
                             tuple(rms), tuple(stderrs), slope)
