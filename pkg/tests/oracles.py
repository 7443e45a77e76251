"""Independent oracles shared by the test modules.

Everything here is computed by a route that does not touch the code under
test: classical Runge-Kutta elementary weights by their textbook recursion,
and closed-form moments of iterated integrals by isometry and Fubini.
"""

from fractions import Fraction

from sbseries import expr as E
from sbseries.trees import Tree


def rk_elementary_weight(tree: Tree, a, b, step_scale: Fraction) -> E.WeightExpr:
    """Elementary weight of a Runge-Kutta tableau scaled to step
    ``step_scale * h``: stage weights multiply A-weighted child weights,
    the tree weight is b dotted with the stage weights times H^n."""

    def stage(i: int, t: Tree) -> Fraction:
        out = Fraction(1)
        for child in t.children:
            out *= sum((a[i][j] * stage(j, child) for j in range(len(b))),
                       Fraction(0))
        return out

    n = _nodes(tree)
    total = sum((b[i] * stage(i, tree) for i in range(len(b))), Fraction(0))
    return E.h_power(n, total * step_scale ** n)


def _nodes(tree: Tree) -> int:
    return 1 + sum(_nodes(c) for c in tree.children)


# Second moment of the weight (1/3) * int_0^h s X(s) ds with
# X(s) = int_0^s u^4 dW(u) (deterministic integrand, so the two stochastic
# calculi agree).  By isometry E[X(s)X(t)] = min(s,t)^9 / 9, and by Fubini
#   E[phi^2] = (1/81) * 2 * int_0^h t int_0^t s * s^9 ds dt
#            = (2/81) * int_0^h t^12 / 11 dt = 2 h^13 / 11583.
EXAMPLE_WEIGHT_SECOND_MOMENT = Fraction(2, 11583)


def example_weight_second_moment(h: float) -> float:
    return float(EXAMPLE_WEIGHT_SECOND_MOMENT) * h ** 13
