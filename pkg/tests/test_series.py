"""Weight expressions and B-series operations."""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbseries import expr as E
from sbseries import trees as T
from sbseries.expr import ExprParseError, parse_expr
from sbseries.series import (
    BSeries,
    EmptyWeightNotOne,
    EmptyWeightNotZero,
    compose,
    derivative_product,
    exact_solution_series,
    exact_weight,
    function_series,
    identity_weights,
)
from sbseries.trees import HalfInt, Tree, alpha, enumerate_trees, parse_tree

EX2 = "[[[g(2,1,0),g(2,1,0)]g(1,2,0),g(1,1,0)]g(1,1,1),g(2,1,0)]g(1,2,0)"


class TestExprNormalization:
    def test_int0_of_one_is_h(self):
        assert E.integral(0, [E.ONE]) == E.H

    def test_intm_of_one_is_increment(self):
        assert E.integral(1, [E.ONE]) == E.dw(1)

    def test_deterministic_chain_reduces(self):
        expr = E.integral(0, [E.integral(0, [E.integral(0, [E.ONE])])])
        assert expr == E.h_power(3, Fraction(1, 6))

    def test_deterministic_product_reduces(self):
        # int_0^h s * s^2 ds = h^4/4
        expr = E.integral(0, [E.H, E.h_power(2)])
        assert expr == E.h_power(4, Fraction(1, 4))

    def test_sum_distribution(self):
        f = E.H + E.rational(1)
        assert E.integral(0, [f]) == E.h_power(2, Fraction(1, 2)) + E.H

    def test_zero_terms_dropped(self):
        assert (E.H - E.H).is_zero
        assert E.integral(0, [E.ZERO]).is_zero

    def test_merging_like_atoms(self):
        a = E.integral(1, [E.H])
        assert a + a == a.scaled(Fraction(2))

    def test_stochastic_integrand_kept_symbolic(self):
        expr = E.integral(1, [E.dw(1)])
        assert str(expr) == "Int1[dW1]"
        assert not expr.is_deterministic

    def test_text_round_trip(self):
        samples = [
            "1/3*Int0[Int1[s^4],s]",
            "3/8*h^2*dW1",
            "Int1[dW1] - 1/2*dW1^2 + h",
            "dW2^3",
            "Int0[dW1,s^2]^2",
        ]
        for text in samples:
            assert str(parse_expr(text)) == text

    def test_parse_rejects_garbage(self):
        for bad in ["h +", "Int1[", "dW", "1//2", "q"]:
            with pytest.raises(ExprParseError):
                parse_expr(bad)


def _exprs():
    atoms = st.sampled_from([
        E.ONE, E.H, E.h_power(2), E.dw(1), E.dw(2),
        E.rational(Fraction(-2, 3)),
        E.integral(1, [E.H]),
        E.integral(0, [E.dw(1)]),
        E.integral(1, [E.integral(1, [E.ONE])]),
    ])

    def combine(children):
        return st.one_of(
            st.tuples(children, children).map(lambda ab: ab[0] + ab[1]),
            st.tuples(children, children).map(lambda ab: ab[0] * ab[1]),
            children.map(lambda e: e.scaled(Fraction(3, 2))),
        )

    return st.recursive(atoms, combine, max_leaves=6)


class TestExprAlgebraProperties:
    @given(_exprs(), _exprs())
    @settings(max_examples=150, deadline=None)
    def test_commutativity(self, a, b):
        assert a + b == b + a
        assert a * b == b * a

    @given(_exprs(), _exprs(), _exprs())
    @settings(max_examples=100, deadline=None)
    def test_associativity_and_distribution(self, a, b, c):
        assert (a + b) + c == a + (b + c)
        assert (a * b) * c == a * (b * c)
        assert a * (b + c) == a * b + a * c

    @given(_exprs())
    @settings(max_examples=100, deadline=None)
    def test_units_and_cancellation(self, a):
        assert a + E.ZERO == a
        assert a * E.ONE == a
        assert (a - a).is_zero

    @given(_exprs(), _exprs())
    @settings(max_examples=100, deadline=None)
    def test_integral_linearity(self, a, b):
        assert E.integral(1, [a + b]) == E.integral(1, [a]) + E.integral(1, [b])

    @given(_exprs())
    @settings(max_examples=80, deadline=None)
    def test_display_round_trip(self, a):
        assert parse_expr(str(a)) == a


class TestExactWeights:
    def test_leaf_weights(self):
        assert exact_weight(parse_tree("1")) == E.dw(1)
        assert exact_weight(parse_tree("0")) == E.H
        assert exact_weight(parse_tree("A")) == E.H
        assert exact_weight(parse_tree("t")) == E.H
        assert exact_weight(parse_tree("g(1,1,2)")) == E.dw(2)

    def test_example_tree_weight(self):
        phi = exact_weight(parse_tree(EX2))
        assert str(phi) == "1/3*Int0[Int1[s^4],s]"
        assert phi == parse_expr("1/3*Int0[Int1[s^4],s]")

    def test_deterministic_chain(self):
        assert exact_weight(parse_tree("[[0]0]0")) == E.h_power(3, Fraction(1, 6))

    def test_series_includes_adjoined_time_leaf(self):
        series = exact_solution_series(T.SemiLinear(1), HalfInt(2))
        assert series.weight(parse_tree("t")) == E.H
        assert series.weight(T.EMPTY) == E.ONE

    def test_missing_key_is_zero(self):
        series = exact_solution_series(T.SemiLinear(1), HalfInt(2))
        deep = parse_tree("[[[1]1]1]1")
        assert series.weight(deep).is_zero


class TestComposeIdentities:
    @pytest.mark.parametrize("model", [
        T.SemiLinear(1),
        T.langevin_model(),
        T.NonAutonomous.from_table(M=1, l=1, variants={0: 1, 1: 1}),
    ], ids=["semilinear", "langevin", "nonautonomous"])
    def test_identity_laws_exhaustive(self, model):
        cap = HalfInt(6)
        phi = exact_solution_series(model, cap)
        ident = identity_weights(model, cap)
        left = compose(ident, phi)
        right = compose(phi, ident)
        for tree in enumerate_trees(model, cap):
            assert left.weight(tree) == phi.weight(tree), str(tree)
            assert right.weight(tree) == phi.weight(tree), str(tree)
        assert left.empty_weight == E.ONE
        assert right.empty_weight == E.ONE

    def test_empty_weight_hypothesis_enforced(self):
        model = T.SemiLinear(1)
        phi = exact_solution_series(model, HalfInt(2))
        bad = BSeries(model, HalfInt(2), dict(phi.weights), E.ZERO)
        with pytest.raises(EmptyWeightNotOne):
            compose(bad, phi)

    def test_cap_monotonicity(self):
        model = T.SemiLinear(1)
        phi2 = exact_solution_series(model, HalfInt(4))
        phi3 = exact_solution_series(model, HalfInt(6))
        c2 = compose(phi2, phi2)
        c3 = compose(phi3, phi3)
        for tree in enumerate_trees(model, HalfInt(4)):
            assert c2.weight(tree) == c3.weight(tree), str(tree)


def euler_series(model, cap) -> BSeries:
    """One explicit Euler step of size h as a weight map: h on every single
    node, zero deeper."""
    weights = {}
    for tree in enumerate_trees(model, cap):
        if tree.is_leaf:
            weights[tree] = E.H
    return BSeries(model, cap, weights, E.ONE)


def rk_composite_weight(tree: Tree, a, b, step_scale: Fraction) -> E.WeightExpr:
    """Classical elementary-weight recursion for a Runge-Kutta tableau,
    scaled to step H = step_scale * h: the stage derivative weight of a
    bracket is the product over children of A-weighted child weights, and
    the tree weight is b dotted with the stage weights, times H^n."""

    def stage(i: int, t: Tree) -> Fraction:
        out = Fraction(1)
        for child in t.children:
            out *= sum((a[i][j] * stage(j, child) for j in range(len(b))),
                       Fraction(0))
        return out

    n = _node_count(tree)
    total = sum((b[i] * stage(i, tree) for i in range(len(b))), Fraction(0))
    return E.h_power(n, total * step_scale ** n)


def _node_count(tree: Tree) -> int:
    return 1 + sum(_node_count(c) for c in tree.children)


class TestDeterministicSubalgebra:
    def test_euler_composed_with_euler_matches_butcher_product(self):
        # two h-steps of explicit Euler == one 2h-step of the RK scheme
        # with stages at 0 and 1/2 and equal weights 1/2
        model = T.GeneralPartitioned.from_table(Q=1, M=0, table={(0, 1): 1})
        cap = HalfInt(6)
        eul = euler_series(model, cap)
        composite = compose(eul, eul)
        a = [[Fraction(0), Fraction(0)], [Fraction(1, 2), Fraction(0)]]
        b = [Fraction(1, 2), Fraction(1, 2)]
        for tree in enumerate_trees(model, cap):
            want = rk_composite_weight(tree, a, b, Fraction(2))
            assert composite.weight(tree) == want, str(tree)

    def test_exact_flow_self_composition_doubles_step(self):
        # deterministic restriction: exact(h) after exact(h) = exact(2h)
        model = T.GeneralPartitioned.from_table(Q=1, M=0, table={(0, 1): 1})
        cap = HalfInt(8)
        phi = exact_solution_series(model, cap)
        comp = compose(phi, phi)
        for tree in enumerate_trees(model, cap):
            doubled = {p: c * Fraction(2) ** p
                       for p, c in phi.weight(tree).as_rational_hpoly().items()}
            assert comp.weight(tree).as_rational_hpoly() == doubled, str(tree)


class TestDerivativeProduct:
    def test_zero_at_empty(self):
        model = T.SemiLinear(1)
        phi = exact_solution_series(model, HalfInt(4))
        incr = BSeries(model, HalfInt(4), dict(phi.weights), E.ZERO)
        out = derivative_product(incr, phi)
        assert out.empty_weight.is_zero

    def test_single_node_value(self):
        model = T.SemiLinear(1)
        phi = exact_solution_series(model, HalfInt(4))
        incr = BSeries(model, HalfInt(4), dict(phi.weights), E.ZERO)
        out = derivative_product(incr, phi)
        # SP of a single node: only the root-cut pair survives phi_x(empty)=0
        leaf = parse_tree("1")
        assert out.weight(leaf) == phi.empty_weight * incr.weight(leaf)

    def test_requires_zero_empty_weight(self):
        model = T.SemiLinear(1)
        phi = exact_solution_series(model, HalfInt(4))
        with pytest.raises(EmptyWeightNotZero):
            derivative_product(phi, phi)


class TestFunctionSeries:
    def test_constant_term(self):
        model = T.SemiLinear(1)
        phi = exact_solution_series(model, HalfInt(4))
        fs = function_series(phi, HalfInt(4))
        f_root = Tree(T.FLabel())
        assert fs.weight(f_root) == E.ONE
        assert alpha(f_root) == 1

    def test_single_child_collapses_to_input(self):
        model = T.SemiLinear(1)
        phi = exact_solution_series(model, HalfInt(4))
        fs = function_series(phi, HalfInt(4))
        for tree in enumerate_trees(model, HalfInt(4)):
            u = Tree(T.FLabel(), (tree,))
            assert fs.weight(u) == phi.weight(tree)
            assert alpha(u) == alpha(tree)

    def test_beta_of_repeated_children(self):
        u = Tree(T.FLabel(), (parse_tree("1"), parse_tree("1")))
        assert alpha(u) == Fraction(1, 2)

    def test_psi_is_product_of_weights(self):
        model = T.SemiLinear(1)
        phi = exact_solution_series(model, HalfInt(4))
        fs = function_series(phi, HalfInt(4))
        t1, t2 = parse_tree("1"), parse_tree("0")
        u = T.canonicalize(Tree(T.FLabel(), (t1, t2)))
        assert fs.weight(u) == phi.weight(t1) * phi.weight(t2)

    def test_requires_unit_empty_weight(self):
        model = T.SemiLinear(1)
        phi = exact_solution_series(model, HalfInt(4))
        bad = BSeries(model, HalfInt(4), dict(phi.weights), E.ZERO)
        with pytest.raises(EmptyWeightNotOne):
            function_series(bad, HalfInt(4))
