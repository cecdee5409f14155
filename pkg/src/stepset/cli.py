"""Command line front end: ``stepset eval | check | plot-data``.

Exit codes: 0 success, 1 a guaranteed property failed (``check`` only),
2 usage/parse/compile errors, 3 unreadable or invalid input data.
"""

import argparse
import csv
import io
import json
import math
import sys
from typing import List, Optional, Sequence, Tuple

from .algebra import (
    Claim,
    CompiledProcedure,
    ExprError,
    Builtin,
    compile,
    eval_compiled,
    resolve_alpha,
)
from .core import Transform, sort_pvalues
from .dsl import format_expr, parse
from .verify import (
    CheckConfig,
    PropertyReport,
    check_condition1_part1,
    check_condition1_part2,
    check_condition2,
    check_monotonicity,
    oracle_equivalence,
)

EVAL_SCHEMA = "stepset.eval/1"
CHECK_SCHEMA = "stepset.check/1"

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3


class DataError(Exception):
    pass


class UsageError(Exception):
    pass


def read_pvalues(path: str, column: Optional[str] = None) -> List[Tuple[str, float]]:
    """Read ``(original text, value)`` pairs from a one-per-line file or a CSV column."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None

    rows: List[Tuple[int, str]] = []
    if column is not None:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise DataError(f"{path}: no column named {column!r}")
        for row in reader:
            rows.append((reader.line_num, (row[column] or "").strip()))
    else:
        lines = [(n, line.strip()) for n, line in enumerate(text.splitlines(), start=1)]
        rows = [(n, line) for n, line in lines if line]
        if rows and rows[0][1].lower() == "p":
            rows = rows[1:]

    out = []
    for lineno, raw in rows:
        try:
            value = float(raw)
        except ValueError:
            raise DataError(f"{path}:{lineno}: not a number: {raw!r}") from None
        if not 0.0 <= value <= 1.0:
            raise DataError(f"{path}:{lineno}: p-value {raw} outside [0, 1]")
        out.append((raw, value))
    if not out:
        raise DataError(f"{path}: no p-values found")
    return out


def _fmt_threshold(x: Optional[float]):
    return None if x is None else float(f"{x:.6g}")


def rank_thresholds(c: CompiledProcedure, p: Sequence[float], alpha: Optional[float]) -> List[Optional[float]]:
    """Threshold each ascending p-value is compared against, on the p scale.

    Output-level procedures have no single threshold and yield ``None``.
    """
    if not c.is_closed_form:
        return [None] * len(p)
    proc = c.procedure
    tbl = proc.threshold.table(resolve_alpha(c, alpha), sorted(p))
    if proc.transform is Transform.ONE_MINUS:
        m = len(p)
        return [1.0 - tbl[m - i] for i in range(1, m + 1)]
    return list(tbl)


def _strategy(c: CompiledProcedure) -> str:
    return "closed-form" if c.is_closed_form else "output-level"


def _claims(c: CompiledProcedure) -> dict:
    return {"monotonic": c.monotonic_claim.value, "well_behaved": c.well_behaved_claim.value}


def _warnings(c: CompiledProcedure) -> List[str]:
    out = []
    if c.monotonic_claim is Claim.NOT_GUARANTEED:
        out.append("procedure is not guaranteed to be monotonic")
    if c.well_behaved_claim is Claim.NOT_GUARANTEED:
        out.append("procedure is not guaranteed to be well-behaved")
    return out


def _parse_expr(text: str):
    try:
        return parse(text)
    except ExprError as exc:
        raise UsageError(_explain(text, exc)) from None


def _explain(text: str, exc: ExprError) -> str:
    msg = str(exc)
    if exc.span is not None and "\n" not in text:
        start, end = exc.span
        msg += f"\n  {text}\n  {' ' * start}{'^' * max(1, end - start)}"
    return msg


def _compile(text, expr, alpha, m=None) -> CompiledProcedure:
    try:
        return compile(expr, alpha, m)
    except ExprError as exc:
        raise UsageError(_explain(text, exc)) from None


def build_eval_report(text: str, values: List[Tuple[str, float]], alpha: Optional[float]) -> dict:
    expr = _parse_expr(text)
    p = [v for _raw, v in values]
    c = _compile(text, expr, alpha, len(p))
    try:
        rejected = eval_compiled(c, p, alpha)
        used_alpha = resolve_alpha(c, alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    view = sort_pvalues(p)
    thresholds = rank_thresholds(c, p, used_alpha)
    ranks = []
    for rank, (idx, thr) in enumerate(zip(view.order, thresholds), start=1):
        ranks.append(
            {
                "rank": rank,
                "p_value": p[idx - 1],
                "p_text": values[idx - 1][0],
                "index": idx,
                "threshold": _fmt_threshold(thr),
                "rejected": idx in rejected,
            }
        )
    report = {
        "schema": EVAL_SCHEMA,
        "expression": format_expr(expr),
        "alpha": used_alpha,
        "m": len(p),
        "strategy": _strategy(c),
        "kind": c.procedure.kind.value if c.is_closed_form else None,
        "claims": _claims(c),
        "rejected": sorted(rejected),
        "ranks": ranks,
        "warnings": _warnings(c),
    }
    return report


def _print_eval_table(report: dict, out) -> None:
    alpha = "-" if report["alpha"] is None else repr(report["alpha"])
    strategy = report["strategy"] + (f" ({report['kind']})" if report["kind"] else "")
    print(f"expression: {report['expression']}", file=out)
    print(f"alpha: {alpha}  m: {report['m']}  strategy: {strategy}", file=out)
    claims = report["claims"]
    print(f"claims: monotonic={claims['monotonic']} well_behaved={claims['well_behaved']}", file=out)
    rej = ", ".join(str(i) for i in report["rejected"]) or "(none)"
    print(f"rejected: {rej}", file=out)
    print(file=out)
    width = max(7, max(len(r["p_text"]) for r in report["ranks"]))
    print(f"{'rank':>4}  {'p_value':>{width}}  {'index':>5}  {'threshold':>10}  rejected", file=out)
    for r in report["ranks"]:
        thr = "-" if r["threshold"] is None else f"{r['threshold']:.6g}"
        flag = "yes" if r["rejected"] else "no"
        print(f"{r['rank']:>4}  {r['p_text']:>{width}}  {r['index']:>5}  {thr:>10}  {flag}", file=out)


def cmd_eval(args, out=sys.stdout, err=sys.stderr) -> int:
    values = read_pvalues(args.input, args.column)
    report = build_eval_report(args.expr, values, args.alpha)
    if args.format == "json":
        report = dict(report)
        report["ranks"] = [{k: v for k, v in r.items() if k != "p_text"} for r in report["ranks"]]
        out.write(json.dumps(report, indent=2) + "\n")
    else:
        for w in report["warnings"]:
            print(f"warning: {w}", file=err)
        _print_eval_table(report, out)
    return EXIT_OK


def _merge(reports: List[PropertyReport], name: str) -> PropertyReport:
    return PropertyReport(
        name,
        sum(r.trials_run for r in reports),
        tuple(v for r in reports for v in r.violations),
        sum(r.skipped for r in reports),
    )


def run_checks(text: str, cfg: CheckConfig) -> Tuple[CompiledProcedure, List[Tuple[Claim, PropertyReport]]]:
    expr = _parse_expr(text)
    c = _compile(text, expr, cfg.alpha)
    try:
        results = [
            (c.monotonic_claim, check_monotonicity(c, cfg)),
            (c.well_behaved_claim, check_condition1_part1(c, cfg)),
            (c.well_behaved_claim, check_condition1_part2(c, cfg)),
        ]
        if c.is_closed_form:
            tau = c.procedure.threshold
            level = cfg.alpha if cfg.alpha is not None else c.pinned_alpha
            lo, hi = max(cfg.m_range[0], c.min_m), cfg.m_range[1]
            cond2 = _merge([check_condition2(tau, m, cfg, level) for m in range(lo, hi + 1)], "condition2")
            results.append((c.well_behaved_claim, cond2))
            if not isinstance(expr, Builtin):
                results.append((Claim.GUARANTEED, oracle_equivalence(expr, cfg, cfg.alpha)))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return c, results


def _witness_json(report: PropertyReport):
    w = report.first_witness
    if w is None:
        return None
    return {
        "p": None if w.p is None else list(w.p),
        "q": None if w.q is None else list(w.q),
        "alpha": w.alpha,
        "alpha_prime": w.alpha_prime,
        "observed": [sorted(s) if isinstance(s, frozenset) else s for s in w.observed],
        "detail": w.detail,
    }


def cmd_check(args, out=sys.stdout, err=sys.stderr) -> int:
    cfg = CheckConfig(trials=args.trials, seed=args.seed, m_range=args.m_range, alpha=args.alpha)
    c, results = run_checks(args.expr, cfg)
    ok = all(r.passed for claim, r in results if claim is Claim.GUARANTEED)
    if args.format == "json":
        doc = {
            "schema": CHECK_SCHEMA,
            "expression": format_expr(parse(args.expr)),
            "alpha": args.alpha,
            "trials": args.trials,
            "seed": args.seed,
            "m_range": list(args.m_range),
            "strategy": _strategy(c),
            "claims": _claims(c),
            "properties": [
                {
                    "property": r.property,
                    "claim": claim.value,
                    "passed": r.passed,
                    "trials_run": r.trials_run,
                    "skipped": r.skipped,
                    "violations": len(r.violations),
                    "first_witness": _witness_json(r),
                }
                for claim, r in results
            ],
            "ok": ok,
        }
        out.write(json.dumps(doc, indent=2) + "\n")
    else:
        print(f"expression: {format_expr(parse(args.expr))}  strategy: {_strategy(c)}", file=out)
        for claim, r in results:
            status = "PASS" if r.passed else "VIOLATED"
            note = "" if r.passed or claim is Claim.NOT_GUARANTEED else "  <-- claimed guaranteed"
            print(f"{r.property:<20} claim={claim.value:<15} {status:<8} trials={r.trials_run}{note}", file=out)
            if r.first_witness is not None:
                print(f"    first witness: {r.first_witness.describe()}", file=out)
    return EXIT_OK if ok else EXIT_FAILED


def cmd_plot_data(args, out=sys.stdout, err=sys.stderr) -> int:
    values = read_pvalues(args.input, args.column)
    expr = _parse_expr(args.expr)
    p = [v for _raw, v in values]
    c = _compile(args.expr, expr, args.alpha, len(p))
    if not c.is_closed_form:
        raise UsageError("no closed-form threshold: the expression is evaluated at output level")
    try:
        rejected = eval_compiled(c, p, args.alpha)
        thresholds = rank_thresholds(c, p, args.alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    view = sort_pvalues(p)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["rank", "sorted_pvalue", "threshold", "rejected"])
    for rank, (idx, thr) in enumerate(zip(view.order, thresholds), start=1):
        w.writerow([rank, values[idx - 1][0], f"{thr:.6g}", int(idx in rejected)])
    return EXIT_OK


def _level(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(v) and 0.0 <= v <= 1.0):
        raise argparse.ArgumentTypeError(f"alpha {text} outside [0, 1]")
    return v


def _m_range(text: str) -> Tuple[int, int]:
    for sep in (":", "-", ","):
        if sep in text:
            lo, _, hi = text.partition(sep)
            break
    else:
        lo = hi = text
    try:
        lo_i, hi_i = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    if not 1 <= lo_i <= hi_i:
        raise argparse.ArgumentTypeError(f"need 1 <= LO <= HI, got {text!r}")
    return lo_i, hi_i


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stepset", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, with_input=True):
        sp.add_argument("--expr", required=True, help="composition expression, e.g. 'intersect(bh(0.05), topk(3))'")
        sp.add_argument("--alpha", type=_level, help="value bound to the symbol alpha")
        if with_input:
            sp.add_argument("--input", required=True, help="p-values, one per line (optional header 'p') or CSV")
            sp.add_argument("--column", help="CSV column holding the p-values")

    ev = sub.add_parser("eval", help="evaluate an expression on a p-value file")
    common(ev)
    ev.add_argument("--format", choices=("table", "json"), default="table")
    ev.set_defaults(func=cmd_eval)

    ck = sub.add_parser("check", help="run randomized property checks on an expression")
    common(ck, with_input=False)
    ck.add_argument("--trials", type=_positive, default=1000)
    ck.add_argument("--seed", type=int, default=0)
    ck.add_argument("--m-range", type=_m_range, default=(1, 8), help="LO:HI number of hypotheses")
    ck.add_argument("--format", choices=("table", "json"), default="table")
    ck.set_defaults(func=cmd_check)

    pd = sub.add_parser("plot-data", help="emit the threshold staircase as CSV")
    common(pd)
    pd.set_defaults(func=cmd_plot_data)
    return parser


def main(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out=out, err=err)
    except UsageError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
