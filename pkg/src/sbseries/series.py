"""B-series as tree-indexed weight maps, and the operations on them:
exact-solution weights, composition, the derivative product, and the
function-of-a-series expansion.

A B-series here is the data (model, order cap, weight map); the series it
denotes is the sum over trees of alpha(tree) * weight(tree) * elementary
differential.  The combinatorial alpha is never folded into the stored
weights.  Missing keys mean weight zero.  For the vertically split models
the child-only time/Wiener leaves carry weights too (they are needed as
remainder lookups in the composition sums); they are stored under their
leaf keys but are not members of the enumerated tree families.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

from sbseries import expr as ex
from sbseries.expr import WeightExpr
from sbseries.forest_ops import split_pairs, subtree_pairs
from sbseries.trees import (
    FLabel,
    GeneralPartitioned,
    HalfInt,
    NonAutonomous,
    SemiLinear,
    Tree,
    TreeError,
    TreeModel,
    alpha,
    canonicalize,
    enumerate_trees,
    label_color,
    rho,
    rho2,
    tree_key,
    w_leaf,
)


class EmptyWeightNotOne(TreeError):
    """An operation requires the empty-tree weight to be identically 1."""


class EmptyWeightNotZero(TreeError):
    """An operation requires the empty-tree weight to be identically 0."""


class ModelMismatch(TreeError):
    """Series over different tree models cannot be combined."""


@dataclass
class BSeries:
    """Finite tree-indexed weight map, truncated at ``order_cap``.

    Treat instances as immutable after construction; they are shared
    freely and hashed weights are cached on the trees.
    """

    model: TreeModel
    order_cap: HalfInt
    weights: dict[Tree, WeightExpr] = field(default_factory=dict)
    empty_weight: WeightExpr = ex.ONE

    def weight(self, tree: Tree) -> WeightExpr:
        if tree.is_empty:
            return self.empty_weight
        return self.weights.get(tree, ex.ZERO)

    def trees(self) -> list[Tree]:
        return sorted(self.weights, key=tree_key)

    def truncated(self, cap: HalfInt) -> "BSeries":
        kept = {t: w for t, w in self.weights.items() if rho2(t) <= cap.twice}
        return BSeries(self.model, cap, kept, self.empty_weight)


def adjoined_leaf_keys(model: TreeModel) -> list[Tree]:
    """Child-only leaves that carry weights in this model's series."""
    return list(model.adjoined_leaves())


def identity_weights(model: TreeModel, order_cap: HalfInt) -> BSeries:
    """Weights of the identity map: 1 at the empty tree, 0 elsewhere."""
    return BSeries(model, order_cap, {}, ex.ONE)


# ---------------------------------------------------------------------------
# Exact solution weights
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def exact_weight(tree: Tree) -> WeightExpr:
    """Weight of a single tree in the exact-flow expansion: leaves map to
    the driver value over the step, brackets to the integral of the product
    of their children's weights against the root's driver."""
    if tree.is_empty:
        return ex.ONE
    color = label_color(tree.label)
    if tree.is_leaf:
        return ex.H if color == 0 else ex.dw(color)
    return ex.integral(color, [exact_weight(c) for c in tree.children])


def exact_solution_series(model: TreeModel, order_cap: HalfInt,
                          cap: int | None = None) -> BSeries:
    """Exact-flow weights for every model tree up to the cap, plus the
    adjoined time/Wiener leaf keys of the vertical models."""
    kwargs = {} if cap is None else {"cap": cap}
    weights: dict[Tree, WeightExpr] = {}
    for tree in enumerate_trees(model, order_cap, **kwargs):
        weights[tree] = exact_weight(tree)
    for leaf_tree in adjoined_leaf_keys(model):
        weights[leaf_tree] = exact_weight(leaf_tree)
    return BSeries(model, order_cap, weights, ex.ONE)


# ---------------------------------------------------------------------------
# Composition and derivative product
# ---------------------------------------------------------------------------


def _require_same_model(a: BSeries, b: BSeries) -> None:
    if a.model != b.model:
        raise ModelMismatch(f"{a.model} vs {b.model}")


def _series_domain(a: BSeries, b: BSeries, cap: HalfInt) -> list[Tree]:
    """All model trees up to the cap (the operands may be sparse), the
    adjoined leaf keys, and any stored keys within the cap."""
    domain = set(enumerate_trees(a.model, cap))
    domain.update(adjoined_leaf_keys(a.model))
    domain.update(t for t in a.weights if rho2(t) <= cap.twice)
    domain.update(t for t in b.weights if rho2(t) <= cap.twice)
    return sorted(domain, key=tree_key)


def compose(phi_x: BSeries, phi_y: BSeries) -> BSeries:
    """Weights of the series of ``phi_y`` evaluated along the map of
    ``phi_x``: for every tree, sum over decompositions (theta, omega) of
    gamma * phi_y(theta) * product of phi_x over omega.

    Requires phi_x(empty) = 1.  The output cap is the smaller of the two.
    """
    _require_same_model(phi_x, phi_y)
    if phi_x.empty_weight != ex.ONE:
        raise EmptyWeightNotOne("composition requires phi_x(empty) = 1")
    cap = min(phi_x.order_cap, phi_y.order_cap)
    out: dict[Tree, WeightExpr] = {}
    for tree in _series_domain(phi_x, phi_y, cap):
        total = ex.ZERO
        for pair in subtree_pairs(tree):
            term = phi_y.weight(pair.subtree)
            if term.is_zero:
                continue
            for delta in pair.remainder:
                term = term * phi_x.weight(delta)
                if term.is_zero:
                    break
            else:
                total = total + term.scaled(pair.coefficient)
        if not total.is_zero:
            out[tree] = total
    return BSeries(phi_x.model, cap, out, phi_y.empty_weight)


def derivative_product(phi_x: BSeries, phi_y: BSeries) -> BSeries:
    """Weights of the derivative of the ``phi_y`` series applied to the
    ``phi_x`` series: sum over single-remainder decompositions of
    gamma * phi_y(theta) * phi_x(delta).  Requires phi_x(empty) = 0;
    the result's empty weight is 0."""
    _require_same_model(phi_x, phi_y)
    if not phi_x.empty_weight.is_zero:
        raise EmptyWeightNotZero("derivative product requires phi_x(empty) = 0")
    cap = min(phi_x.order_cap, phi_y.order_cap)
    out: dict[Tree, WeightExpr] = {}
    for tree in _series_domain(phi_x, phi_y, cap):
        total = ex.ZERO
        for pair in split_pairs(tree):
            delta = pair.remainder[0]
            term = phi_y.weight(pair.subtree) * phi_x.weight(delta)
            total = total + term.scaled(pair.coefficient)
        if not total.is_zero:
            out[tree] = total
    return BSeries(phi_x.model, cap, out, ex.ZERO)


# ---------------------------------------------------------------------------
# Function of a B-series
# ---------------------------------------------------------------------------


def function_series(phi: BSeries, order_cap: HalfInt) -> BSeries:
    """Expansion trees of a smooth function evaluated along the series.

    Keys are f-rooted trees [tau_1, .., tau_k]_f over the model's family
    (the bare f-root is the constant term).  The stored weight of a key is
    the product of phi over its children; the combinatorial coefficient
    beta is exactly :func:`sbseries.trees.alpha` extended to the f-root,
    so callers pair ``alpha(u) * series.weight(u)`` as usual.  The grading
    of an f-rooted tree is the sum of its children's orders.
    """
    if phi.empty_weight != ex.ONE:
        raise EmptyWeightNotOne("function expansion requires phi(empty) = 1")
    pool = sorted((t for t in phi.weights if rho2(t) <= order_cap.twice),
                  key=tree_key)
    weights: dict[Tree, WeightExpr] = {Tree(FLabel()): ex.ONE}

    def extend(start: int, budget: int, acc: list[Tree]):
        for i in range(start, len(pool)):
            w = rho2(pool[i])
            if w > budget:
                break
            acc.append(pool[i])
            tree = Tree(FLabel(), tuple(acc))
            value = ex.ONE
            for child in acc:
                value = value * phi.weight(child)
            if not value.is_zero:
                weights[tree] = value
            extend(i, budget - w, acc)
            acc.pop()

    extend(0, order_cap.twice, [])
    return BSeries(phi.model, order_cap, weights, ex.ZERO)
