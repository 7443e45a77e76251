"""Time stepping and convergence estimation."""

import numpy as np
import pytest

from sbseries.elementary import SDEProblem, get_problem
from sbseries.paths import sample_path
from sbseries.sim import (
    ConvergenceReport,
    StageDivergence,
    exponential_midpoint_step,
    integrate_erk,
    midpoint_step_operators,
    ms_order_estimate,
    reference_solution,
)
from sbseries import trees as T


def _zero_g(problem: SDEProblem) -> SDEProblem:
    problem.g = {0: lambda x, t: np.zeros_like(x),
                 1: lambda x, t: np.zeros_like(x)}
    return problem


class TestStepper:
    def test_pure_linear_flow_matches_exponential(self):
        prob = _zero_g(get_problem("noncomm-2x2"))
        path = sample_path(0.25, 16, 1, 3)
        traj = integrate_erk(prob, 0.25, 1, path)
        _, _, full = midpoint_step_operators(prob, prob.t0, 0.25)
        assert np.max(np.abs(traj[-1] - full @ prob.x0_state)) < 1e-10

    def test_deterministic_reduces_to_implicit_midpoint_order_two(self):
        # A = 0 and drift only: classical implicit midpoint, second order
        prob = get_problem("scalar-semilinear")
        prob.A = lambda t: np.zeros((1, 1))
        prob.A_derivs = (lambda t: np.zeros((1, 1)),) * 3
        prob.g = {0: prob.g[0], 1: lambda x, t: np.zeros_like(x)}
        path = sample_path(1.0, 2 ** 12, 1, 5)
        ref = reference_solution(prob, 1.0, 2 ** 12, path)
        errs = []
        for steps in (8, 16, 32):
            traj = integrate_erk(prob, 1.0 / steps, steps, path)
            errs.append(abs(traj[-1][0] - ref[0]))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.35)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.35)

    def test_one_step_hand_expansion_constant_scalar_part(self):
        # constant scalar linear part: one step agrees with the hand
        # expansion through the h^(3/2)-order terms, so the remainder
        # shrinks like h^2 along a fixed driving draw
        a = -0.4
        prob = get_problem("scalar-semilinear")
        prob.A = lambda t: np.array([[a]])
        prob.A_derivs = (lambda t: np.zeros((1, 1)),) * 3
        x, t = float(prob.x0_state[0]), prob.t0
        g0 = lambda s: 0.4 * np.sin(s) * (1.0 + t / 3.0)
        dg0 = lambda s: 0.4 * np.cos(s) * (1.0 + t / 3.0)
        g1 = lambda s: 0.25 * np.cos(s) * (1.0 + 0.2 * t)
        dg1 = lambda s: -0.25 * np.sin(s) * (1.0 + 0.2 * t)
        d2g1 = lambda s: -0.25 * np.cos(s) * (1.0 + 0.2 * t)
        dtg1 = lambda s: 0.25 * np.cos(s) * 0.2

        def hand(h, dw):
            out = x + a * h * x + h * g0(x) + dw * g1(x)
            out += 0.5 * dw * dw * dg1(x) * g1(x)
            out += 0.5 * h * dw * (a * dg1(x) * x + dg1(x) * g0(x) + dtg1(x)
                                   + a * g1(x) + dg0(x) * g1(x))
            out += dw ** 3 * (d2g1(x) * g1(x) ** 2 / 8
                              + dg1(x) ** 2 * g1(x) / 4)
            return out

        errs, hs = [], [2.0 ** -k for k in range(4, 9)]
        for h in hs:
            path = sample_path(h, 64, 1, (9, 1))
            dw = path.wiener(1)[-1]
            got = exponential_midpoint_step(prob, prob.t0, h, prob.x0_state, dw)
            errs.append(abs(float(got[0]) - hand(h, dw)))
        slope = np.polyfit(np.log2(hs), np.log2(errs), 1)[0]
        assert slope > 1.8

    def test_stage_divergence_raises(self):
        prob = get_problem("scalar-semilinear")
        prob.g = {0: lambda x, t: 50.0 * x, 1: lambda x, t: np.zeros_like(x)}
        path = sample_path(1.0, 4, 1, 1)
        with pytest.raises(StageDivergence):
            integrate_erk(prob, 1.0, 1, path)


class TestReference:
    def test_zero_coefficients_stay_at_x0(self):
        prob = _zero_g(get_problem("scalar-semilinear"))
        prob.A = lambda t: np.zeros((1, 1))
        prob.A_derivs = (lambda t: np.zeros((1, 1)),) * 3
        path = sample_path(1.0, 256, 1, 2)
        assert np.allclose(reference_solution(prob, 1.0, 256, path), prob.x0_state)

    def test_self_refinement_below_method_error(self):
        prob = get_problem("langevin")
        path = sample_path(1.0, 2 ** 13, 1, 21)
        ref_a = reference_solution(prob, 1.0, 2 ** 12, path)
        ref_b = reference_solution(prob, 1.0, 2 ** 13, path)
        self_err = np.max(np.abs(ref_a - ref_b))
        traj = integrate_erk(prob, 2 ** -8, 2 ** 8, path)
        method_err = np.max(np.abs(traj[-1] - ref_b))
        assert self_err < method_err

    def test_deterministic_against_ode(self):
        prob = get_problem("scalar-semilinear")
        prob.g = {0: prob.g[0], 1: lambda x, t: np.zeros_like(x)}
        path = sample_path(1.0, 2 ** 12, 1, 4)
        got = reference_solution(prob, 1.0, 2 ** 12, path)
        from scipy.integrate import solve_ivp
        sol = solve_ivp(
            lambda t, x: prob.a_derivative(0, t) @ x + prob.g[0](x, t),
            (prob.t0, prob.t0 + 1.0), prob.x0_state, rtol=1e-11, atol=1e-12)
        assert abs(got[0] - sol.y[0, -1]) < 1e-6


class TestOrderEstimate:
    def test_langevin_slope_near_one(self):
        prob = get_problem("langevin")
        report = ms_order_estimate(prob, [2 ** -4, 2 ** -5, 2 ** -6],
                                   n_paths=200, T=1.0, seed=77, n_fine=2 ** 11)
        assert 0.85 <= report.slope <= 1.15

    def test_error_monotone_on_dyadic_ladder(self):
        prob = get_problem("scalar-semilinear")
        report = ms_order_estimate(prob, [2 ** -4, 2 ** -5, 2 ** -6, 2 ** -7],
                                   n_paths=200, T=1.0, seed=5, n_fine=2 ** 11)
        assert all(a > b for a, b in zip(report.rms_errors,
                                         report.rms_errors[1:]))

    def test_shared_paths_deterministic(self):
        prob = get_problem("scalar-semilinear")
        kwargs = dict(n_paths=50, T=1.0, seed=9, n_fine=2 ** 10)
        a = ms_order_estimate(prob, [2 ** -4, 2 ** -5], **kwargs)
        b = ms_order_estimate(prob, [2 ** -4, 2 ** -5], **kwargs)
        assert a == b

    def test_step_ladder_shares_one_brownian_path(self):
        # the increments used at every h are partial sums of the fine ones
        path = sample_path(1.0, 2 ** 10, 1, (4, 0))
        w = path.wiener(1)
        fine_increments = np.diff(w)
        for h_exp in (4, 5, 6):
            per = 2 ** 10 // 2 ** h_exp
            coarse = w[::per]
            sums = fine_increments.reshape(-1, per).sum(axis=1)
            assert np.allclose(np.diff(coarse), sums, rtol=0, atol=1e-15)

    def test_validates_ladder(self):
        prob = get_problem("scalar-semilinear")
        with pytest.raises(ValueError):
            ms_order_estimate(prob, [2 ** -5, 2 ** -4], 10, 1.0, 1)
        with pytest.raises(ValueError):
            ms_order_estimate(prob, [0.3], 10, 1.0, 1)

    def test_report_rows(self):
        report = ConvergenceReport((0.5, 0.25), (0.1, 0.05), (0.01, 0.005), 1.0)
        assert report.rows() == [(0.5, 0.1, 0.01), (0.25, 0.05, 0.005)]
