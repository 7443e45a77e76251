"""Shaped, colored rooted trees: canonical forms, enumeration, and the
combinatorial coefficients attached to them.

Three tree families are supported, selected by a model object:

* ``GeneralPartitioned(Q, M, nu)`` -- nodes carry a partition index q, a
  variant index v and a color m (m = 0 deterministic, m > 0 one Wiener
  channel each).  Children of a node may be any trees of the family.
* ``NonAutonomous(M, l, nu)`` -- the vertically split family with extra
  time/Wiener leaves ``W0 .. Wl`` that may appear only as children.
* ``SemiLinear(M)`` -- nodes are ``g``-nodes (one per color), a single
  linear node ``A`` and the time leaf ``t``.  An ``A``-node may have at
  most one child that is not the time leaf.

Trees are immutable; all operations expect canonical trees (children
sorted by the total order below) and :func:`canonicalize` produces them.
Tree order ``rho`` is a half-integer: deterministic nodes count 1,
stochastic nodes 1/2, and the empty tree has order 1 by convention.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache


class TreeError(Exception):
    """Base class for tree construction/validation errors."""


class InvalidLabel(TreeError):
    """A node label violates the dimensions of the active tree model."""


class SemiLinearArity(TreeError):
    """An A-node has more than one child that is not the time leaf."""


class CapExceeded(TreeError):
    """Enumeration would produce more trees than the configured safety cap."""


class ParseError(TreeError):
    """A tree string does not conform to the bracket grammar."""


# ---------------------------------------------------------------------------
# Half-integers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class HalfInt:
    """Exact half-integer, stored as twice its value."""

    twice: int

    @classmethod
    def whole(cls, n: int) -> "HalfInt":
        return cls(2 * n)

    @classmethod
    def parse(cls, text: str) -> "HalfInt":
        """Accepts '3', '3.5', '7/2'."""
        text = text.strip()
        if "/" in text:
            num, den = text.split("/")
            frac = Fraction(int(num), int(den))
        else:
            frac = Fraction(text)
        if frac.denominator not in (1, 2):
            raise ValueError(f"not a half-integer: {text!r}")
        return cls(int(frac * 2))

    @property
    def as_fraction(self) -> Fraction:
        return Fraction(self.twice, 2)

    def __add__(self, other: "HalfInt") -> "HalfInt":
        return HalfInt(self.twice + other.twice)

    def __sub__(self, other: "HalfInt") -> "HalfInt":
        return HalfInt(self.twice - other.twice)

    def __float__(self) -> float:
        return self.twice / 2.0

    def __str__(self) -> str:
        if self.twice % 2 == 0:
            return str(self.twice // 2)
        return f"{self.twice}/2"


# ---------------------------------------------------------------------------
# Node labels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneralLabel:
    """Node of shape (q, v) and color m in the general partitioned family."""

    q: int
    v: int
    m: int


@dataclass(frozen=True)
class WLabel:
    """Wiener leaf W_i of the non-autonomous family (i >= 1; W_0 is TLabel)."""

    i: int


@dataclass(frozen=True)
class TLabel:
    """The time leaf (alias of W_0); child-only in its families."""


@dataclass(frozen=True)
class ALabel:
    """The linear-part node of the semi-linear family."""


@dataclass(frozen=True)
class GLabel:
    """Coefficient-function node of color m in the semi-linear family."""

    m: int


@dataclass(frozen=True)
class FLabel:
    """Root marker of function-expansion trees."""


@dataclass(frozen=True)
class EmptyLabel:
    """The empty tree of partition q (a root-only placeholder)."""

    q: int = 1


NodeLabel = GeneralLabel | WLabel | TLabel | ALabel | GLabel | FLabel | EmptyLabel


def label_color(label: NodeLabel) -> int:
    """Driving-process color of a node; deterministic nodes are color 0."""
    if isinstance(label, GeneralLabel):
        return label.m
    if isinstance(label, GLabel):
        return label.m
    if isinstance(label, WLabel):
        return label.i
    return 0


def label_key(label: NodeLabel) -> tuple[int, int, int, int]:
    if isinstance(label, EmptyLabel):
        return (0, label.q, 0, 0)
    if isinstance(label, TLabel):
        return (1, 0, 0, 0)
    if isinstance(label, WLabel):
        return (2, label.i, 0, 0)
    if isinstance(label, ALabel):
        return (3, 0, 0, 0)
    if isinstance(label, GLabel):
        return (4, label.m, 0, 0)
    if isinstance(label, GeneralLabel):
        return (5, label.q, label.v, label.m)
    if isinstance(label, FLabel):
        return (6, 0, 0, 0)
    raise TypeError(f"unknown label {label!r}")


def partition_of(label: NodeLabel) -> int:
    """Partition index of the space a node's value lives in."""
    if isinstance(label, (GeneralLabel, EmptyLabel)):
        return label.q
    return 1


# ---------------------------------------------------------------------------
# Trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Tree:
    """Rooted tree; children are held as an ordered tuple.

    Equality is structural; two canonical trees are equal exactly when
    they represent the same multiset-tree.  Hash and order are cached per
    instance (trees are immutable), which keeps enumeration of large tree
    sets close to linear time.
    """

    label: NodeLabel
    children: tuple["Tree", ...] = ()

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Tree):
            return NotImplemented
        return (hash(self) == hash(other) and self.label == other.label
                and self.children == other.children)

    def __hash__(self) -> int:
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((self.label, self.children))
            object.__setattr__(self, "_hash", h)
        return h

    @property
    def is_empty(self) -> bool:
        return isinstance(self.label, EmptyLabel)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def __str__(self) -> str:
        return format_tree(self)


def leaf(label: NodeLabel) -> Tree:
    return Tree(label)


def node(children, label: NodeLabel) -> Tree:
    """Bracket term: join the given children to a common root."""
    return canonicalize(Tree(label, tuple(children)))


EMPTY = Tree(EmptyLabel(1))


def empty_tree(q: int = 1) -> Tree:
    return EMPTY if q == 1 else Tree(EmptyLabel(q))


T_LEAF = Tree(TLabel())
A_LEAF = Tree(ALabel())


def g_leaf(m: int) -> Tree:
    return Tree(GLabel(m))


def w_leaf(i: int) -> Tree:
    return T_LEAF if i == 0 else Tree(WLabel(i))


def general_leaf(q: int, v: int, m: int) -> Tree:
    return Tree(GeneralLabel(q, v, m))


def tree_key(tree: Tree):
    """Total order key: (2*rho, root label, child keys), cached per instance."""
    k = tree.__dict__.get("_key")
    if k is None:
        k = (rho2(tree), label_key(tree.label),
             tuple(tree_key(c) for c in tree.children))
        object.__setattr__(tree, "_key", k)
    return k


def _canonical_label(label: NodeLabel) -> NodeLabel:
    # Exactly one spelling of the time leaf survives canonicalization.
    if isinstance(label, WLabel) and label.i == 0:
        return TLabel()
    return label


def canonicalize(tree: Tree, model: "TreeModel | None" = None) -> Tree:
    """Canonical form: children canonicalized and sorted at every node.

    Idempotent and invariant under child permutations.  Validates the
    A-node arity rule always, and label dimensions when ``model`` is given.
    """
    label = _canonical_label(tree.label)
    if isinstance(label, EmptyLabel):
        if tree.children:
            raise InvalidLabel("the empty tree cannot have children")
        if model is not None:
            model.validate_label(label)
        return tree if label is tree.label else Tree(label)
    children = tuple(sorted((canonicalize(c, model) for c in tree.children),
                            key=tree_key))
    for child in children:
        if child.is_empty:
            raise InvalidLabel("the empty tree cannot appear as a child")
    if isinstance(label, ALabel):
        non_t = [c for c in children if not isinstance(c.label, TLabel)]
        if len(non_t) > 1:
            raise SemiLinearArity(
                f"A-node with {len(non_t)} children outside the time family")
    if isinstance(label, (TLabel, WLabel)) and children:
        raise InvalidLabel(f"{label!r} is leaf-only")
    if model is not None:
        model.validate_label(label)
    return Tree(label, children)


def rho2(tree: Tree) -> int:
    """Twice the tree order, cached on the instance."""
    r = tree.__dict__.get("_rho2")
    if r is None:
        if tree.is_empty:
            r = 2
        else:
            own = 2 if label_color(tree.label) == 0 else 1
            r = own + sum(rho2(c) for c in tree.children)
        object.__setattr__(tree, "_rho2", r)
    return r


def rho(tree: Tree) -> HalfInt:
    """Tree order: node contributions 1 (color 0) or 1/2 (color > 0),
    summed over all nodes; rho of the empty tree is 1 by convention."""
    return HalfInt(rho2(tree))


@lru_cache(maxsize=None)
def alpha(tree: Tree) -> Fraction:
    """Combinatorial coefficient: product over nodes of inverse factorials
    of the multiplicities of equal child subtrees."""
    if tree.is_empty or tree.is_leaf:
        return Fraction(1)
    out = Fraction(1)
    for _, group in itertools.groupby(tree.children):
        rep = 0
        for child in group:
            rep += 1
            out *= alpha(child)
        out /= Fraction(_factorial(rep))
    return out


@lru_cache(maxsize=None)
def _factorial(n: int) -> int:
    return 1 if n <= 1 else n * _factorial(n - 1)


def child_multiplicities(tree: Tree) -> list[tuple[Tree, int]]:
    """Distinct children with multiplicities, in canonical order."""
    return [(child, len(list(g))) for child, g in itertools.groupby(tree.children)]


# ---------------------------------------------------------------------------
# Tree models
# ---------------------------------------------------------------------------


DEFAULT_ENUMERATION_CAP = 1_000_000


@dataclass(frozen=True)
class GeneralPartitioned:
    """Q partitions, M diffusion colors, nu[(m, q)] variants per (color, partition)."""

    Q: int
    M: int
    nu: tuple[tuple[tuple[int, int], int], ...]  # ((m, q) -> count) as items

    @classmethod
    def from_table(cls, Q: int, M: int, table: dict[tuple[int, int], int]) -> "GeneralPartitioned":
        items = tuple(sorted(((m, q), int(c)) for (m, q), c in table.items()))
        return cls(Q, M, items)

    def variants(self, m: int, q: int) -> int:
        for key, count in self.nu:
            if key == (m, q):
                return count
        return 0

    def validate_label(self, label: NodeLabel) -> None:
        if isinstance(label, EmptyLabel):
            if not 1 <= label.q <= self.Q:
                raise InvalidLabel(f"empty-tree partition {label.q} out of range")
            return
        if not isinstance(label, GeneralLabel):
            raise InvalidLabel(f"{label!r} is not a general-partitioned label")
        if not (1 <= label.q <= self.Q and 0 <= label.m <= self.M
                and 1 <= label.v <= self.variants(label.m, label.q)):
            raise InvalidLabel(f"label {label!r} out of model range")

    def node_labels(self) -> list[NodeLabel]:
        out: list[NodeLabel] = []
        for m in range(self.M + 1):
            for q in range(1, self.Q + 1):
                for v in range(1, self.variants(m, q) + 1):
                    out.append(GeneralLabel(q, v, m))
        return out

    def adjoined_leaves(self) -> list[Tree]:
        return []


@dataclass(frozen=True)
class NonAutonomous:
    """Vertically split family with time/Wiener leaves W_0 .. W_l."""

    M: int
    l: int
    nu: tuple[int, ...]  # variants per color m = 0..M

    @classmethod
    def from_table(cls, M: int, l: int, variants: dict[int, int]) -> "NonAutonomous":
        return cls(M, l, tuple(int(variants.get(m, 0)) for m in range(M + 1)))

    def variants_of(self, m: int) -> int:
        return self.nu[m] if 0 <= m <= self.M else 0

    def validate_label(self, label: NodeLabel) -> None:
        if isinstance(label, EmptyLabel):
            if label.q != 1:
                raise InvalidLabel("vertical model has a single empty tree")
            return
        if isinstance(label, TLabel):
            return
        if isinstance(label, WLabel):
            if not 1 <= label.i <= self.l:
                raise InvalidLabel(f"W-index {label.i} out of range")
            return
        if not isinstance(label, GeneralLabel) or label.q != 1:
            raise InvalidLabel(f"{label!r} is not a non-autonomous label")
        if not (0 <= label.m <= self.M and 1 <= label.v <= self.variants_of(label.m)):
            raise InvalidLabel(f"label {label!r} out of model range")

    def node_labels(self) -> list[NodeLabel]:
        return [GeneralLabel(1, v, m)
                for m in range(self.M + 1)
                for v in range(1, self.variants_of(m) + 1)]

    def adjoined_leaves(self) -> list[Tree]:
        return [w_leaf(i) for i in range(self.l + 1)]


@dataclass(frozen=True)
class SemiLinear:
    """Semi-linear family: g-nodes of color 0..M, the A-node, the time leaf."""

    M: int

    def validate_label(self, label: NodeLabel) -> None:
        if isinstance(label, (EmptyLabel, TLabel, ALabel)):
            if isinstance(label, EmptyLabel) and label.q != 1:
                raise InvalidLabel("semi-linear model has a single empty tree")
            return
        if isinstance(label, GLabel):
            if not 0 <= label.m <= self.M:
                raise InvalidLabel(f"g-node color {label.m} out of range")
            return
        raise InvalidLabel(f"{label!r} is not a semi-linear label")

    def node_labels(self) -> list[NodeLabel]:
        return [GLabel(m) for m in range(self.M + 1)] + [ALabel()]

    def adjoined_leaves(self) -> list[Tree]:
        return [T_LEAF]


TreeModel = GeneralPartitioned | NonAutonomous | SemiLinear


def langevin_model() -> GeneralPartitioned:
    """The two-partition model of the Langevin test problem: partition 1 is
    the (position, velocity) pair with two deterministic variants and one
    stochastic one, partition 2 is time."""
    return GeneralPartitioned.from_table(
        Q=2, M=1, table={(0, 1): 2, (1, 1): 1, (0, 2): 1, (1, 2): 0})


def model_partitions(model: TreeModel) -> int:
    return model.Q if isinstance(model, GeneralPartitioned) else 1


def tree_in_model(tree: Tree, model: TreeModel) -> bool:
    """Does the (canonical) tree belong to the model's family T?"""
    try:
        validate_tree(tree, model)
    except TreeError:
        return False
    return True


def validate_tree(tree: Tree, model: TreeModel) -> None:
    if isinstance(tree.label, (TLabel, WLabel)) and not isinstance(model, GeneralPartitioned):
        # child-only leaves are not members of T themselves
        raise InvalidLabel(f"{tree.label!r} is child-only in this model")
    _validate_rec(tree, model)


def _validate_rec(tree: Tree, model: TreeModel) -> None:
    model.validate_label(tree.label)
    if isinstance(tree.label, ALabel):
        non_t = [c for c in tree.children if not isinstance(c.label, TLabel)]
        if len(non_t) > 1:
            raise SemiLinearArity("A-node with more than one non-time child")
    for child in tree.children:
        if child.is_empty:
            raise InvalidLabel("empty tree as child")
        _validate_rec(child, model)


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


def enumerate_trees(model: TreeModel, rho_max: HalfInt,
                    cap: int = DEFAULT_ENUMERATION_CAP) -> list[Tree]:
    """All distinct canonical trees of the model with rho <= rho_max,
    excluding the empty tree and the child-only time/Wiener leaves,
    sorted by (rho, canonical order).

    Raises :class:`CapExceeded` if more than ``cap`` trees would be produced.
    """
    budget = rho_max.twice
    if budget < 1:
        return []
    members: dict[int, list[Tree]] = {b: [] for b in range(1, budget + 1)}
    count = 0
    # Child candidates, kept sorted by tree_key (whose leading component is
    # 2*rho, so a weight bound is a prefix of the pool).
    pool: list[Tree] = sorted(model.adjoined_leaves(), key=tree_key)

    def pool_prefix(max_weight: int) -> list[Tree]:
        lo, hi = 0, len(pool)
        while lo < hi:
            mid = (lo + hi) // 2
            if rho2(pool[mid]) <= max_weight:
                lo = mid + 1
            else:
                hi = mid
        return pool[:lo]

    for b in range(1, budget + 1):
        for label in model.node_labels():
            cost = 2 if label_color(label) == 0 else 1
            rem = b - cost
            if rem < 0:
                continue
            if rem == 0:
                members[b].append(Tree(label))
                count += 1
                if count > cap:
                    raise CapExceeded(f"more than {cap} trees below order {rho_max}")
                continue
            for combo in _weighted_multisets(pool_prefix(rem), rem):
                tree = Tree(label, combo)
                if isinstance(label, ALabel):
                    non_t = [c for c in combo if not isinstance(c.label, TLabel)]
                    if len(non_t) > 1:
                        continue
                members[b].append(tree)
                count += 1
                if count > cap:
                    raise CapExceeded(f"more than {cap} trees below order {rho_max}")
        pool = sorted(pool + members[b], key=tree_key)
    out = [t for b in range(1, budget + 1) for t in members[b]]
    out.sort(key=tree_key)
    return out


def _weighted_multisets(pool: list[Tree], budget: int):
    """Nondecreasing tuples over ``pool`` whose 2*rho weights sum to budget.

    The pool is sorted by tree_key, whose leading component is the weight,
    so iteration can stop at the first item that no longer fits."""
    weights = [rho2(t) for t in pool]

    def rec(start: int, remaining: int, acc: list[Tree]):
        if remaining == 0:
            yield tuple(acc)
            return
        for i in range(start, len(pool)):
            w = weights[i]
            if w > remaining:
                break
            acc.append(pool[i])
            yield from rec(i, remaining - w, acc)
            acc.pop()

    yield from rec(0, budget, [])


# ---------------------------------------------------------------------------
# Bracket serialization
# ---------------------------------------------------------------------------


def format_label(label: NodeLabel) -> str:
    if isinstance(label, GeneralLabel):
        return f"g({label.q},{label.v},{label.m})"
    if isinstance(label, WLabel):
        return f"W{label.i}"
    if isinstance(label, TLabel):
        return "t"
    if isinstance(label, ALabel):
        return "A"
    if isinstance(label, GLabel):
        if label.m > 9:
            raise ValueError("single-digit grammar: g-node color must be <= 9")
        return str(label.m)
    if isinstance(label, FLabel):
        return "f"
    if isinstance(label, EmptyLabel):
        return "()" if label.q == 1 else f"(){label.q}"
    raise TypeError(f"unknown label {label!r}")


def format_tree(tree: Tree) -> str:
    """Bit-exact ASCII bracket form: ``tree := leaf | "[" tree ("," tree)* "]" leaf``."""
    if tree.is_leaf:
        return format_label(tree.label)
    inner = ",".join(format_tree(c) for c in tree.children)
    return f"[{inner}]{format_label(tree.label)}"


_GENERAL_RE = re.compile(r"g\((\d+),(\d+),(\d+)\)")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str):
        raise ParseError(f"{msg} at position {self.pos} in {self.text!r}")

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _peek_is_ascii_digit(self) -> bool:
        ch = self.peek()
        return len(ch) == 1 and ch in "0123456789"

    def parse_tree(self) -> Tree:
        if self.peek() == "[":
            self.pos += 1
            children = [self.parse_tree()]
            while self.peek() == ",":
                self.pos += 1
                children.append(self.parse_tree())
            if self.peek() != "]":
                self.error("expected ']'")
            self.pos += 1
            label = self.parse_label()
            return Tree(label, tuple(children))
        return Tree(self.parse_label())

    def parse_label(self) -> NodeLabel:
        ch = self.peek()
        if ch == "g":
            match = _GENERAL_RE.match(self.text, self.pos)
            if not match:
                self.error("malformed g(q,v,m) label")
            self.pos = match.end()
            return GeneralLabel(int(match.group(1)), int(match.group(2)),
                                int(match.group(3)))
        if ch == "W":
            self.pos += 1
            start = self.pos
            while self._peek_is_ascii_digit():
                self.pos += 1
            if start == self.pos:
                self.error("W-label needs an index")
            return WLabel(int(self.text[start:self.pos]))
        if ch == "t":
            self.pos += 1
            return TLabel()
        if ch == "A":
            self.pos += 1
            return ALabel()
        if ch == "f":
            self.pos += 1
            return FLabel()
        if ch == "(":
            if self.text.startswith("()", self.pos):
                self.pos += 2
                start = self.pos
                while self._peek_is_ascii_digit():
                    self.pos += 1
                q = int(self.text[start:self.pos]) if self.pos > start else 1
                return EmptyLabel(q)
            self.error("malformed empty-tree token")
        if len(ch) == 1 and ch in "0123456789":
            self.pos += 1
            return GLabel(int(ch))
        self.error(f"unexpected character {ch!r}")


def parse_tree(text: str, model: TreeModel | None = None) -> Tree:
    """Parse the bracket grammar and return the canonical tree."""
    parser = _Parser(text.strip())
    tree = parser.parse_tree()
    if parser.pos != len(parser.text):
        parser.error("trailing input")
    return canonicalize(tree, model)
