"""Command-line interface.

One binary, subcommand style; every stochastic subcommand requires an
explicit seed so runs are reproducible bit for bit.  Exit codes: 0 on
success, 2 on usage/validation errors, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from fractions import Fraction

from sbseries import expr as ex
from sbseries import trees as T
from sbseries.elementary import get_problem, problem_names
from sbseries.expr import ExprError, parse_expr
from sbseries.forest_ops import split_pairs, subtree_pairs
from sbseries.paths import mc_moments, normalize_interpretation
from sbseries.series import exact_solution_series
from sbseries.serk import (
    order_residuals,
    residual_is_pathwise_zero,
    resolve_method,
)
from sbseries.sim import SimulationError, ms_order_estimate
from sbseries.trees import (
    HalfInt,
    TreeError,
    alpha,
    enumerate_trees,
    format_tree,
    parse_tree,
    rho,
)


class CLIError(Exception):
    """Validation failure with a user-facing message."""


def _model_from_flags(args) -> T.TreeModel:
    if args.model == "semilinear":
        return T.SemiLinear(args.M)
    if args.model == "general":
        if args.model_preset == "langevin":
            return T.langevin_model()
        raise CLIError("general model requires --model-preset langevin "
                       "(table-driven models are library-level)")
    if args.model == "nonautonomous":
        return T.NonAutonomous.from_table(
            M=args.M, l=args.l, variants={m: 1 for m in range(args.M + 1)})
    raise CLIError(f"unknown model {args.model!r}")


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", default="semilinear",
                        choices=["semilinear", "general", "nonautonomous"])
    parser.add_argument("--M", type=int, default=1,
                        help="number of Wiener colors")
    parser.add_argument("--l", type=int, default=0,
                        help="highest Wiener index entering coefficients "
                             "(nonautonomous model)")
    parser.add_argument("--model-preset", default=None,
                        help="named general-model table (langevin)")


def _write_rows(out, header, rows) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)


def _float_repr(x: float) -> str:
    return format(float(x), ".17g")


def cmd_trees(args, out) -> int:
    if args.tree_cmd == "enum":
        model = _model_from_flags(args)
        trees = enumerate_trees(model, HalfInt.parse(args.cap))
        _write_rows(out, ["tree", "rho", "alpha"],
                    [[format_tree(t), str(rho(t)), str(alpha(t))] for t in trees])
        return 0
    if args.tree_cmd == "info":
        tree = parse_tree(args.tree)
        _write_rows(out, ["tree", "rho", "alpha"],
                    [[format_tree(tree), str(rho(tree)), str(alpha(tree))]])
        return 0
    if args.tree_cmd == "split":
        return cmd_split(args, out)
    raise CLIError(f"unknown trees subcommand {args.tree_cmd!r}")


def cmd_split(args, out) -> int:
    tree = parse_tree(args.tree)
    pairs = split_pairs(tree) if not args.full else subtree_pairs(tree)
    rows = []
    for p in pairs:
        remainder = ",".join(format_tree(t) for t in p.remainder)
        rows.append([format_tree(p.subtree), f"{{{remainder}}}", str(p.coefficient)])
    _write_rows(out, ["subtree", "remainder", "gamma"], rows)
    return 0


def cmd_series(args, out) -> int:
    if args.series_cmd != "exact":
        raise CLIError(f"unknown series subcommand {args.series_cmd!r}")
    model = _model_from_flags(args)
    series = exact_solution_series(model, HalfInt.parse(args.cap))
    rows = [[format_tree(t), str(rho(t)), str(alpha(t)), str(series.weight(t))]
            for t in series.trees()]
    _write_rows(out, ["tree", "rho", "alpha", "weight"], rows)
    return 0


def cmd_erk(args, out) -> int:
    if args.erk_cmd != "residuals":
        raise CLIError(f"unknown erk subcommand {args.erk_cmd!r}")
    method = resolve_method(args.method)
    residuals = order_residuals(method, HalfInt.parse(args.cap))
    rows = []
    for r in residuals:
        text = str(r.residual)
        if not r.residual.is_zero and not args.no_probe:
            if residual_is_pathwise_zero(r.residual, method.interpretation):
                text = "0"
        rows.append([format_tree(r.tree), str(r.tree_order),
                     str(r.exact_weight), str(r.numeric_weight), text])
    _write_rows(out, ["tree", "rho", "exact", "numeric", "residual"], rows)
    return 0


def cmd_weights(args, out) -> int:
    if args.weights_cmd != "mc":
        raise CLIError(f"unknown weights subcommand {args.weights_cmd!r}")
    expr = parse_expr(args.expr)
    stats = mc_moments(expr, args.h, args.N, args.paths,
                       normalize_interpretation(args.interp), args.seed)
    _write_rows(out, ["mean", "variance", "stderr"],
                [[_float_repr(stats.mean), _float_repr(stats.variance),
                  _float_repr(stats.stderr)]])
    return 0


def cmd_converge(args, out) -> int:
    problem = get_problem(args.problem)
    if args.h_fine < args.h_coarse:
        raise CLIError("--h-fine must not be coarser than --h-coarse")
    h_values = [2.0 ** -k for k in range(args.h_coarse, args.h_fine + 1)]
    report = ms_order_estimate(problem, h_values, args.paths, args.T,
                               args.seed, n_fine=args.n_fine,
                               method=args.method)
    rows = []
    for k, (h, rms_err, se) in enumerate(report.rows()):
        slope = _float_repr(report.slope) if k == len(report.h_values) - 1 else ""
        rows.append([_float_repr(h), _float_repr(rms_err), _float_repr(se), slope])
    buffer = io.StringIO()
    _write_rows(buffer, ["h", "rms_error", "se", "slope"], rows)
    text = buffer.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        out.write(f"wrote {args.out}\n")
    else:
        out.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sbseries",
        description="Stochastic B-series calculus and exponential-integrator "
                    "order conditions for semi-linear SDEs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_trees = sub.add_parser("trees", help="enumerate and inspect trees")
    trees_sub = p_trees.add_subparsers(dest="tree_cmd", required=True)
    p_enum = trees_sub.add_parser("enum", help="list trees up to an order cap")
    _add_model_flags(p_enum)
    p_enum.add_argument("--cap", required=True, help="order bound (e.g. 3, 7/2)")
    p_info = trees_sub.add_parser("info", help="order and coefficient of one tree")
    p_info.add_argument("tree")
    p_tsplit = trees_sub.add_parser("split", help="single-remainder decompositions")
    p_tsplit.add_argument("tree")
    p_tsplit.add_argument("--full", action="store_true",
                          help="print the full decomposition set instead")

    p_split = sub.add_parser("split", help="alias of 'trees split'")
    p_split.add_argument("tree")
    p_split.add_argument("--full", action="store_true")

    p_series = sub.add_parser("series", help="weight series")
    series_sub = p_series.add_subparsers(dest="series_cmd", required=True)
    p_exact = series_sub.add_parser("exact", help="exact-solution weights")
    _add_model_flags(p_exact)
    p_exact.add_argument("--cap", required=True)

    p_erk = sub.add_parser("erk", help="exponential Runge-Kutta analysis")
    erk_sub = p_erk.add_subparsers(dest="erk_cmd", required=True)
    p_res = erk_sub.add_parser("residuals", help="order-condition residuals")
    p_res.add_argument("--method", required=True,
                       help="builtin:midpoint or a JSON method file")
    p_res.add_argument("--cap", required=True)
    p_res.add_argument("--no-probe", action="store_true",
                       help="report symbolic residuals without the pathwise "
                            "zero certificate")

    p_weights = sub.add_parser("weights", help="Monte-Carlo weight statistics")
    weights_sub = p_weights.add_subparsers(dest="weights_cmd", required=True)
    p_mc = weights_sub.add_parser("mc", help="moments of one expression")
    p_mc.add_argument("--expr", required=True)
    p_mc.add_argument("--h", type=float, required=True)
    p_mc.add_argument("--N", type=int, required=True)
    p_mc.add_argument("--paths", type=int, required=True)
    p_mc.add_argument("--seed", type=int, required=True)
    p_mc.add_argument("--interp", default="stratonovich")
    p_mc.add_argument("--threads", type=int, default=1,
                      help="accepted for interface stability; results are "
                           "deterministic and identical for any value")

    p_conv = sub.add_parser("converge", help="mean-square convergence study")
    p_conv.add_argument("--problem", required=True, choices=problem_names())
    p_conv.add_argument("--method", default="midpoint")
    p_conv.add_argument("--paths", type=int, required=True)
    p_conv.add_argument("--seed", type=int, required=True)
    p_conv.add_argument("--T", type=float, default=1.0)
    p_conv.add_argument("--h-coarse", type=int, default=4,
                        help="coarsest step is 2^-this")
    p_conv.add_argument("--h-fine", type=int, default=8,
                        help="finest step is 2^-this")
    p_conv.add_argument("--n-fine", type=int, default=4096)
    p_conv.add_argument("--out", default=None, help="write CSV here")
    p_conv.add_argument("--threads", type=int, default=1,
                        help="accepted for interface stability; results are "
                             "deterministic and identical for any value")
    return parser


def main(argv=None, out=None) -> int:
    out = out if out is not None else sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    handlers = {
        "trees": cmd_trees,
        "split": cmd_split,
        "series": cmd_series,
        "erk": cmd_erk,
        "weights": cmd_weights,
        "converge": cmd_converge,
    }
    try:
        return handlers[args.command](args, out)
    except (CLIError, TreeError, ExprError, ValueError, KeyError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except SimulationError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
