"""Exponential-integrator coefficient series and order-condition residuals."""

from fractions import Fraction

import pytest

from sbseries import expr as E
from sbseries.expr import parse_expr
from sbseries.forest_ops import split_pairs
from sbseries.serk import (
    CapUnsupported,
    NoAdmissibleSplit,
    builtin_exponential_midpoint,
    erk_weight_at,
    erk_weights,
    exp_integral_series,
    is_a_tree,
    method_from_json,
    method_to_json,
    order_residuals,
    residual_at,
    residual_is_pathwise_zero,
    resolve_method,
    semilinear_trees,
)
from sbseries.trees import GLabel, HalfInt, parse_tree, rho

EX4 = "[[[t,t]A,0]1,t]A"


@pytest.fixture(scope="module")
def midpoint():
    return builtin_exponential_midpoint()


class TestSemilinearTrees:
    def test_order_one_set(self):
        got = {str(t) for t in semilinear_trees(1, HalfInt(2))}
        assert got == {"1", "0", "A", "[1]1"}

    def test_example_tree_is_a_member(self):
        member = parse_tree(EX4)
        trees = set(semilinear_trees(1, HalfInt(13), cap=2_000_000))
        assert member in trees

    def test_a_node_arity_respected(self):
        for tree in semilinear_trees(1, HalfInt(6)):
            stack = [tree]
            while stack:
                node = stack.pop()
                if str(node.label) == "ALabel()":
                    non_t = [c for c in node.children
                             if not str(c.label) == "TLabel()"]
                    assert len(non_t) <= 1
                stack.extend(node.children)


class TestSplitUniqueness:
    def test_unique_admissible_split_up_to_seven_halves(self):
        # for every tree with coefficient nodes there is exactly one
        # decomposition with an A-tree prefix and a coefficient-rooted
        # single remainder
        for tau in semilinear_trees(1, HalfInt(7)):
            if is_a_tree(tau):
                continue
            found = [
                (p.subtree, p.remainder[0])
                for p in split_pairs(tau)
                if not p.remainder[0].is_empty
                and isinstance(p.remainder[0].label, GLabel)
                and is_a_tree(p.subtree)
            ]
            assert len(found) == 1, str(tau)


class TestBuiltinMidpoint:
    # the closed-form operator expansions, frozen term by term
    FRONT = {"A": "1/2*h", "[t]A": "1/8*h^2", "[A]A": "1/8*h^2",
             "[t,t]A": "1/48*h^3", "[[t]A]A": "1/32*h^3",
             "[A,t]A": "1/32*h^3", "[[A]A]A": "1/48*h^3"}
    FULL = {"A": "h", "[t]A": "1/2*h^2", "[A]A": "1/2*h^2",
            "[t,t]A": "1/6*h^3", "[[t]A]A": "1/4*h^3",
            "[A,t]A": "1/4*h^3", "[[A]A]A": "1/6*h^3"}
    OUT0 = {"A": "1/2*h^2", "[t]A": "3/8*h^3", "[A]A": "1/8*h^3"}
    OUT1 = {"A": "1/2*h*dW1", "[t]A": "3/8*h^2*dW1", "[A]A": "1/8*h^2*dW1"}

    def test_stage_propagator_terms(self, midpoint):
        assert midpoint.Z0[0].empty_weight == E.ONE
        for ts, want in self.FRONT.items():
            assert midpoint.Z0[0].weight(parse_tree(ts)) == parse_expr(want), ts

    def test_solution_propagator_terms(self, midpoint):
        assert midpoint.z0.empty_weight == E.ONE
        for ts, want in self.FULL.items():
            assert midpoint.z0.weight(parse_tree(ts)) == parse_expr(want), ts

    def test_output_weights(self, midpoint):
        assert midpoint.z[0][0].empty_weight == E.H
        assert midpoint.z[1][0].empty_weight == E.dw(1)
        for ts, want in self.OUT0.items():
            assert midpoint.z[0][0].weight(parse_tree(ts)) == parse_expr(want), ts
        for ts, want in self.OUT1.items():
            assert midpoint.z[1][0].weight(parse_tree(ts)) == parse_expr(want), ts

    def test_stage_inner_coefficients_are_constants(self, midpoint):
        assert midpoint.Z[0][0][0].empty_weight == parse_expr("1/2*h")
        assert midpoint.Z[1][0][0].empty_weight == parse_expr("1/2*dW1")
        assert not midpoint.Z[0][0][0].weights
        assert not midpoint.Z[1][0][0].weights

    def test_noncommutative_orderings_are_distinct_keys(self, midpoint):
        left = midpoint.z0.weight(parse_tree("[[t]A]A"))
        right = midpoint.z0.weight(parse_tree("[A,t]A"))
        assert left == right == parse_expr("1/4*h^3")
        assert parse_tree("[[t]A]A") != parse_tree("[A,t]A")

    def test_cap_limit(self):
        with pytest.raises(CapUnsupported):
            builtin_exponential_midpoint(HalfInt(8))

    def test_resolve_builtin(self):
        assert resolve_method("builtin:midpoint").stages == 1


class TestExpIntegralSeries:
    def test_plain_exponential_of_constant_part(self):
        # over [0, h]: the A-chain of length n carries h^n/n!
        weights = exp_integral_series(Fraction(0), Fraction(1), 3)
        assert weights[parse_tree("A")] == E.H
        assert weights[parse_tree("[A]A")] == parse_expr("1/2*h^2")
        assert weights[parse_tree("[[A]A]A")] == parse_expr("1/6*h^3")

    def test_subinterval_scaling(self):
        weights = exp_integral_series(Fraction(1, 2), Fraction(1), 2)
        assert weights[parse_tree("A")] == parse_expr("1/2*h")
        assert weights[parse_tree("[t]A")] == parse_expr("3/8*h^2")


class TestWeightRecursion:
    def test_empty_and_time_leaf(self, midpoint):
        solution, stages = erk_weights(midpoint, HalfInt(2))
        assert solution.empty_weight == E.ONE
        assert stages[0].empty_weight == E.ONE
        assert solution.weight(parse_tree("t")) == E.H
        assert stages[0].weight(parse_tree("t")) == parse_expr("1/2*h")

    def test_stage_and_solution_base_cases(self, midpoint):
        solution, stages = erk_weights(midpoint, HalfInt(2))
        assert stages[0].weight(parse_tree("0")) == parse_expr("1/2*h")
        assert stages[0].weight(parse_tree("1")) == parse_expr("1/2*dW1")
        assert solution.weight(parse_tree("0")) == E.H
        assert solution.weight(parse_tree("1")) == E.dw(1)

    def test_weight_of_reference_tree(self, midpoint):
        got = erk_weight_at(midpoint, parse_tree(EX4))
        # 3 h^6 dW / 768 in lowest terms
        assert got == parse_expr("1/256*h^6*dW1")

    def test_a_tree_weights_pass_through(self, midpoint):
        solution, stages = erk_weights(midpoint, HalfInt(6))
        assert solution.weight(parse_tree("[t,t]A")) == parse_expr("1/6*h^3")
        assert stages[0].weight(parse_tree("[t,t]A")) == parse_expr("1/48*h^3")

    def test_no_admissible_split_unreachable_on_members(self, midpoint):
        for tau in semilinear_trees(1, HalfInt(6)):
            erk_weight_at(midpoint, tau)  # must not raise


class TestResiduals:
    def test_zero_up_to_order_one(self, midpoint):
        for res in order_residuals(midpoint, HalfInt(2)):
            assert residual_is_pathwise_zero(res.residual,
                                             midpoint.interpretation), \
                str(res.tree)

    def test_symbolic_zero_on_single_nodes(self, midpoint):
        for ts in ["1", "0", "A"]:
            assert residual_at(midpoint, parse_tree(ts)).residual.is_zero

    def test_stochastic_chain_is_pathwise_zero_only(self, midpoint):
        res = residual_at(midpoint, parse_tree("[1]1"))
        assert not res.residual.is_zero
        assert residual_is_pathwise_zero(res.residual, "stratonovich")
        assert not residual_is_pathwise_zero(res.residual, "ito")

    def test_example_tree_residual_nonzero(self, midpoint):
        res = residual_at(midpoint, parse_tree(EX4))
        assert res.tree_order == HalfInt(13)
        assert not res.residual.is_zero
        assert not residual_is_pathwise_zero(res.residual, "stratonovich")

    def test_residuals_appear_above_order_one(self, midpoint):
        rows = order_residuals(midpoint, HalfInt(3))
        some_nonzero = [r for r in rows if r.tree_order == HalfInt(3)
                        and not residual_is_pathwise_zero(
                            r.residual, midpoint.interpretation)]
        assert some_nonzero

    def test_exact_restriction_method_has_zero_a_tree_residuals(self, midpoint):
        # a method whose state propagators carry the exact-flow weights on
        # the A-trees satisfies those order conditions identically
        from sbseries.series import BSeries, exact_weight
        from sbseries.trees import SemiLinear
        model = SemiLinear(1)
        exact_a = {t: exact_weight(t)
                   for t in semilinear_trees(1, HalfInt(6)) if is_a_tree(t)}
        method = builtin_exponential_midpoint()
        method.z0 = BSeries(model, method.cap, exact_a, E.ONE)
        for res in order_residuals(method, HalfInt(6)):
            if is_a_tree(res.tree):
                assert res.residual.is_zero, str(res.tree)

    def test_second_moment_of_order_one_residual_is_machine_zero(self, midpoint):
        # Monte-Carlo second moment of a residual at order <= 1 sits at
        # machine level under the method's calculus
        from sbseries.paths import mc_moments
        res = residual_at(midpoint, parse_tree("[1]1")).residual
        stats = mc_moments(res * res, 0.5, 64, 200, "stratonovich", seed=8)
        assert abs(stats.mean) < 1e-15


class TestMethodJSON:
    def test_round_trip(self, midpoint):
        text = method_to_json(midpoint)
        back = method_from_json(text)
        assert back.stages == midpoint.stages
        assert back.c == midpoint.c
        assert back.cap == midpoint.cap
        assert back.z0.weights == midpoint.z0.weights
        assert back.Z0[0].weights == midpoint.Z0[0].weights
        assert back.z[1][0].weights == midpoint.z[1][0].weights
        assert back.z[1][0].empty_weight == midpoint.z[1][0].empty_weight

    def test_round_trip_preserves_weights_at_example(self, midpoint, tmp_path):
        path = tmp_path / "midpoint.json"
        path.write_text(method_to_json(midpoint), encoding="utf-8")
        method = resolve_method(str(path))
        assert erk_weight_at(method, parse_tree(EX4)) == \
            parse_expr("1/256*h^6*dW1")
