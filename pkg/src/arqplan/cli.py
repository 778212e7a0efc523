"""``arqplan`` command-line interface.

Exit status: 0 on success, 2 on invalid input, 3 when a numerical routine
fails to converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .channel import QuadratureError
from .optimizer import Method, OptimizationRequest, optimize, search_space_size
from .pdp import evaluate_pdp
from .scenario import Scenario, ScenarioError, load_scenario
from .simulator import delay_profile, simulate

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NONCONVERGENCE = 3

CSV_DIGITS = 12


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# formatting


def _json_value(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {str(k): _json_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_value(v) for v in x]
    return x


def _csv_cell(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return format(x, f".{CSV_DIGITS}g")
    if isinstance(x, (list, tuple)):
        return ",".join(_csv_cell(v) for v in x)
    if x is None:
        return ""
    return str(x)


def to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.writer(buf, lineterminator="\n")
        header = list(rows[0])
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(row[h]) for h in header])
    return buf.getvalue()


def envelope(command: str, scenario: Scenario, results: Any) -> dict:
    return {
        "tool": "arqplan",
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "command": command,
        "scenario": scenario.to_dict(),
        "results": _json_value(results),
    }


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _write(command: str, scenario: Scenario, rows: list[dict], args, extra: dict | None = None) -> None:
    if args.format == "csv":
        _emit(to_csv(rows), args.out)
    else:
        results = {"rows": rows, **(extra or {})}
        _emit(json.dumps(envelope(command, scenario, results), indent=2, allow_nan=False) + "\n", args.out)


# ---------------------------------------------------------------------------
# commands


def _parse_allocation(text: str) -> tuple[int, ...]:
    try:
        q = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--allocation must be comma-separated integers, got {text!r}") from None
    if any(x < 0 for x in q):
        raise UsageError("--allocation entries must be non-negative")
    return q


def _allocation(args, scenario: Scenario, required: bool) -> tuple[int, ...] | None:
    if args.allocation:
        q = _parse_allocation(args.allocation)
    elif scenario.allocation is not None:
        q = scenario.allocation
    elif required:
        raise UsageError("an allocation is required (--allocation a,b,c or 'allocation' in the scenario)")
    else:
        return None
    if len(q) != scenario.hops:
        raise UsageError(f"allocation has {len(q)} entries, scenario has {scenario.hops} hops")
    if sum(q) != scenario.budget:
        raise UsageError(f"allocation sums to {sum(q)}, expected q_sum={scenario.budget}")
    return q


def _request(scenario: Scenario, args, q_sum: int | None = None, method: str | None = None):
    method = method or args.method or scenario.optimize.method
    folds = args.folds if args.folds is not None else scenario.optimize.folds
    return OptimizationRequest(
        scenario.layout(), scenario.outage(), q_sum if q_sum is not None else scenario.budget,
        Method(method), folds,
    )


def _link_kind(scenario: Scenario, i: int) -> str:
    if scenario.outage_override is not None:
        return "override"
    if scenario.los[i] >= 1.0:
        return "deterministic"
    return "asymptotic" if scenario.blocklength == "asymptotic" else "finite"


def cmd_outage(scenario: Scenario, args) -> None:
    p = scenario.outage()
    rows = [
        {"hop": i + 1, "los": scenario.los[i] if scenario.los else None, "kind": _link_kind(scenario, i), "p": p[i]}
        for i in range(scenario.hops)
    ]
    _write("outage", scenario, rows, args)


def cmd_pdp(scenario: Scenario, args) -> None:
    q = _allocation(args, scenario, required=True)
    layout = scenario.layout()
    pdp = evaluate_pdp(scenario.outage().p, q, layout)
    rows = [{"strategy": layout.strategy.value, "allocation": list(q), "pdp": pdp}]
    _write("pdp", scenario, rows, args)


def _report_row(req: OptimizationRequest, rep) -> dict:
    return {
        "method": rep.method.value,
        "folds": rep.folds,
        "best_allocation": list(rep.best_allocation),
        "best_pdp": rep.best_pdp,
        "list_size": rep.list_size,
        "evaluations": rep.evaluations,
        "search_space": search_space_size(req.layout, req.q_sum),
    }


def cmd_optimize(scenario: Scenario, args) -> None:
    req = _request(scenario, args)
    rep = optimize(req)
    _write("optimize", scenario, [_report_row(req, rep)], args,
           {"stage_sizes": {str(k): v for k, v in rep.stage_sizes.items()}})


def cmd_simulate(scenario: Scenario, args) -> None:
    q = _allocation(args, scenario, required=False)
    if q is None:
        q = optimize(_request(scenario, args)).best_allocation
    layout = scenario.layout()
    channel = scenario.outage() if (args.fading is False or scenario.outage_override is not None) else scenario.links()
    seed = args.seed if args.seed is not None else scenario.sim.seed
    packets = args.packets if args.packets is not None else scenario.sim.packets
    rep = simulate(layout, q, channel, scenario.delay_model(), packets, seed, bin_width=scenario.sim.bin_width)
    exact = evaluate_pdp(scenario.outage().p, q, layout)
    row = {
        "allocation": list(q),
        "packets": rep.packets,
        "seed": rep.seed,
        "pdp_hat": rep.pdp_hat,
        "pdp_exact": exact,
        "std_error": rep.std_error(),
        "w_drop": rep.w_drop,
        "w_deadline": rep.w_deadline,
        "pdv": rep.pdv,
        "eta": rep.eta,
        "avg_delay": rep.avg_delay,
        "deadline": rep.deadline,
        "nack_on_success": rep.nack_on_success,
    }
    profile = delay_profile(rep)
    prof_rows = [{"delay": d, "mass": m} for d, m in profile.rows]
    _write("simulate", scenario, [row], args,
           {"delay_profile": prof_rows, "p_nd": profile.p_nd, "profile_empty": profile.empty})
    target = args.profile or (str(Path(args.out).with_suffix(".profile.csv")) if args.out else None)
    if target:
        Path(target).write_text(to_csv(prof_rows) or "delay,mass\n", encoding="utf-8", newline="\n")


def _q_range(args, scenario: Scenario) -> range:
    if args.q_range:
        try:
            lo, hi = (int(x) for x in args.q_range.split(":"))
        except ValueError:
            raise UsageError(f"--q-range must look like MIN:MAX, got {args.q_range!r}") from None
    elif scenario.sweep is not None:
        lo, hi = scenario.sweep.q_min, scenario.sweep.q_max
    else:
        raise UsageError("sweep needs --q-range MIN:MAX or a 'sweep' section in the scenario")
    if lo > hi:
        raise UsageError(f"empty q_sum range {lo}:{hi}")
    return range(lo, hi + 1)


def cmd_sweep(scenario: Scenario, args) -> None:
    if args.method:
        methods = [m.strip() for m in args.method.split(",")]
    elif scenario.sweep is not None:
        methods = list(scenario.sweep.methods)
    else:
        methods = [scenario.optimize.method]
    rows = []
    for q_sum in _q_range(args, scenario):
        for m in methods:
            req = _request(scenario, args, q_sum=q_sum, method=m)
            rep = optimize(req)
            rows.append({
                "q_sum": q_sum,
                "method": rep.method.value,
                "pdp": rep.best_pdp,
                "list_size": rep.list_size,
                "allocation": list(rep.best_allocation),
            })
    _write("sweep", scenario, rows, args)


COMMANDS = {
    "outage": cmd_outage,
    "pdp": cmd_pdp,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arqplan", description="ARQ budget planning for multi-hop relays.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--allocation", help="comma-separated ARQ allocation, e.g. 3,1,2")
        p.add_argument("--method", help="exhaustive, one_fold, multi_fold or greedy (sweep: comma list)")
        p.add_argument("--folds", type=int, help="fold count for multi_fold/greedy")
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--format", choices=("csv", "json"), default="json")
        p.add_argument("--seed", type=int, help="simulation seed (overrides the scenario)")
        if name == "simulate":
            p.add_argument("--packets", type=int, help="number of packets (overrides the scenario)")
            p.add_argument("--profile", help="delay-profile CSV path (default: next to --out)")
            p.add_argument("--fading", action=argparse.BooleanOptionalAction, default=False,
                           help="draw a fresh fading SNR per attempt instead of using outage probabilities")
        if name == "sweep":
            p.add_argument("--q-range", help="q_sum range MIN:MAX (inclusive)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.method and args.command != "sweep":
        try:
            Method(args.method)
        except ValueError:
            parser.error(f"unknown method {args.method!r}")
    try:
        scenario = load_scenario(args.scenario)
        COMMANDS[args.command](scenario, args)
    except QuadratureError as exc:
        print(f"arqplan: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ScenarioError, UsageError, ValueError, OverflowError, OSError) as exc:
        print(f"arqplan: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
