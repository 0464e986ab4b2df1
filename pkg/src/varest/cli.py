"""Command-line interface: ``varest params|compare|simulate|enumerate|search``.

Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 numerical
breakdown under ``--strict``.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .errors import VarestError
from .estimators import ProposedT, parse_specs
from .montecarlo import SimulationConfig, validate_theory
from .mse import Variant, compare_table, default_roster
from .population import derive_params, load_csv, load_params, theta
from .report import csv_text, fmt, json_text, markdown, mse_table
from .sampling import exact_summary
from .tuning import default_grid, load_grid, minimize_t, parse_cd, parse_range, recover

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BREAKDOWN = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _variant(text: str) -> Variant:
    try:
        return Variant(text)
    except ValueError:
        raise argparse.ArgumentTypeError("variant must be 'printed' or 'rederived'") from None


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="varest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, outs, default_out):
        p.add_argument("--out", choices=outs, default=default_out)
        p.add_argument("--full-precision", action="store_true",
                       help="print shortest round-trip decimals instead of 6 significant digits")

    p = sub.add_parser("params", help="dump population parameters")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV file with header y,x")
    src.add_argument("--params", help="JSON parameter file")
    common(p, ("json", "csv"), "json")

    p = sub.add_parser("compare", help="first-order MSE comparison table")
    p.add_argument("--params", required=True)
    p.add_argument("--n", type=int, help="sample size (defaults to the file's n)")
    p.add_argument("--variant", type=_variant, default=Variant.AS_PRINTED)
    p.add_argument("--specs", nargs="+", help="estimator specs (default: the published table roster)")
    p.add_argument("--t", action="append", default=[], metavar="m,w,c,d",
                   help="add a proposed-T row with optimal weights")
    p.add_argument("--strict", action="store_true", help="exit 3 if any row breaks down")
    common(p, ("md", "csv", "json"), "md")

    p = sub.add_parser("simulate", help="Monte Carlo MSE joined with theory")
    p.add_argument("--data", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--specs", nargs="+", required=True)
    p.add_argument("--allow-partial", action="store_true")
    p.add_argument("--variant", type=_variant, default=Variant.AS_PRINTED)
    p.add_argument("--workers", type=int, default=1)
    common(p, ("md", "csv", "json"), "md")

    p = sub.add_parser("enumerate", help="exact MSE over all C(N, n) samples")
    p.add_argument("--data", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--specs", nargs="+", required=True)
    p.add_argument("--allow-partial", action="store_true")
    p.add_argument("--variant", type=_variant, default=Variant.AS_PRINTED)
    common(p, ("md", "csv", "json"), "md")

    p = sub.add_parser("search", help="grid search over the proposed class")
    p.add_argument("--params", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--target", type=float, help="recover grid points matching this MSE")
    p.add_argument("--tolerance", type=float, default=1e-3, help="relative tolerance for --target")
    p.add_argument("--m", help="range a:b:step or list")
    p.add_argument("--w", help="range a:b:step or list")
    p.add_argument("--cd", action="append", default=[], metavar="c,d")
    p.add_argument("--grid", help="JSON grid file")
    p.add_argument("--constrained", action="store_true", help="also evaluate the w1 + w2 = 1 optimum")
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--variant", type=_variant, default=Variant.AS_PRINTED)
    p.add_argument("--top", type=int, default=20)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--strict", action="store_true")
    common(p, ("md", "csv", "json"), "md")
    return parser


def _design_n(args, params) -> int:
    n = args.n if args.n is not None else params.n
    if n is None:
        raise UsageError("--n is required when the parameter file has no n")
    return n


def cmd_params(args) -> tuple[str, int]:
    params = derive_params(load_csv(args.data)) if args.data else load_params(args.params)
    doc = params.to_dict()
    if args.out == "json":
        return json_text(doc), EXIT_OK
    return csv_text(("key", "value"), doc.items(), args.full_precision), EXIT_OK


def cmd_compare(args) -> tuple[str, int]:
    params = load_params(args.params)
    th = theta(_design_n(args, params), params.N)
    if args.specs:
        items = parse_specs(args.specs)
    else:
        items = default_roster()
    for text in args.t:
        parts = text.split(",")
        if len(parts) != 4:
            raise UsageError(f"--t expects m,w,c,d, got {text!r}")
        m, w, c, d = (float(v) for v in parts)
        items.append(ProposedT(m, w, c, d))
    reports = compare_table(params, th, items, args.variant)
    code = EXIT_BREAKDOWN if args.strict and any(r.breakdown_flag for r in reports) else EXIT_OK
    return mse_table(reports, args.out, args.full_precision), code


def cmd_simulate(args) -> tuple[str, int]:
    pop = load_csv(args.data)
    params = derive_params(pop)
    cfg = SimulationConfig(
        replicates=args.reps, n=args.n, seed=args.seed, specs=parse_specs(args.specs),
        allow_partial=args.allow_partial, workers=args.workers, variant=args.variant,
    )
    rows = validate_theory(pop, params, cfg)
    if args.out == "json":
        return json_text([r.to_dict() for r in rows]), EXIT_OK
    header = ("estimator", "empirical_mse", "mc_stderr", "bias", "theoretical_mse", "ratio", "rejected", "used")
    table = [
        (str(r.result.spec), r.result.empirical_mse, r.result.mc_stderr, r.result.empirical_bias,
         r.theoretical, r.ratio, r.result.rejected_samples, r.result.replicates_used)
        for r in rows
    ]
    if args.out == "csv":
        return csv_text(header, table, args.full_precision), EXIT_OK
    out = markdown(header, table, args.full_precision)
    if rows and rows[0].regime_warning:
        out += "\nwarning: theta * max(beta2*) > 0.5; outside the first-order approximation regime\n"
    if rows and rows[0].small_sample:
        out += f"\nwarning: small sample (n = {args.n}); first-order MSE formulas are asymptotic\n"
    return out, EXIT_OK


def cmd_enumerate(args) -> tuple[str, int]:
    pop = load_csv(args.data)
    params = derive_params(pop)
    results = [
        exact_summary(pop, args.n, spec, params, allow_partial=args.allow_partial, variant=args.variant)
        for spec in parse_specs(args.specs)
    ]
    if args.out == "json":
        return json_text([
            {"estimator": str(r.spec), "mse": r.mse, "bias": r.bias, "samples": r.samples, "rejected": r.rejected}
            for r in results
        ]), EXIT_OK
    header = ("estimator", "mse", "bias", "samples", "rejected")
    table = [(str(r.spec), r.mse, r.bias, r.samples, r.rejected) for r in results]
    if args.out == "csv":
        return csv_text(header, table, args.full_precision), EXIT_OK
    return markdown(header, table, args.full_precision), EXIT_OK


def cmd_search(args) -> tuple[str, int]:
    params = load_params(args.params)
    th = theta(_design_n(args, params), params.N)
    grid = load_grid(args.grid, params) if args.grid else default_grid(params)
    if args.m:
        grid.m = parse_range(args.m)
    if args.w:
        grid.w = parse_range(args.w)
    if args.cd:
        grid.cd = [parse_cd(t, params) for t in args.cd]
    if args.target is not None:
        points = recover(params, th, args.target, grid, args.variant, args.tolerance,
                         constrained=args.constrained, workers=args.workers)
    else:
        points = minimize_t(params, th, grid, args.variant, args.constrained,
                            refine=not args.no_refine, workers=args.workers)
    shown = points[: args.top] if args.top > 0 else points
    code = EXIT_OK
    if args.strict and any(p.report.breakdown_flag for p in shown):
        code = EXIT_BREAKDOWN
    if args.out == "json":
        return json_text([
            {**p.report.to_dict(), "constrained": None if p.constrained is None else p.constrained.to_dict()}
            for p in shown
        ]), code
    header = ["spec", "mse", "rel_eff", "breakdown"]
    if args.constrained:
        header += ["constrained_mse", "constrained_breakdown"]
    table = []
    for p in shown:
        row = [str(p.spec), p.report.mse if p.report.error is None else "error", p.report.relative_efficiency,
               p.report.breakdown_flag]
        if args.constrained:
            row += [None if p.constrained is None else p.constrained.mse,
                    None if p.constrained is None else p.constrained.breakdown_flag]
        table.append(row)
    if args.out == "csv":
        return csv_text(header, table, args.full_precision), code
    out = markdown(header, table, args.full_precision)
    if args.target is not None:
        out += f"\n{len(points)} grid point(s) within {fmt(args.tolerance)} relative of {fmt(args.target)}\n"
    return out, code


COMMANDS = {
    "params": cmd_params,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
    "enumerate": cmd_enumerate,
    "search": cmd_search,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        text, code = COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (VarestError, ValueError, ArithmeticError) as exc:
        print(f"varest: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    sys.stdout.write(text)
    if code == EXIT_BREAKDOWN:
        print("varest: numerical breakdown in at least one row (--strict)", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
