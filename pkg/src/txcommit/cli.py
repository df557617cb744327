"""Command-line front end.

Exit codes: 0 success, 1 violation or failed isomorphism check, 2 usage or
configuration error, 3 state limit exceeded, 4 simulation disagrees with
the closed form.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

from . import costsim
from .errors import ConfigError, UnsupportedScenario
from .explorer import explore, random_walk
from .models import MODELS, MUTATIONS, build

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_LIMIT, EXIT_MISMATCH = range(5)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _ballots(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(b) for b in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"ballots must be comma-separated integers: {text!r}")


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--protocol", choices=costsim.PROTOCOLS, default="twophase")
    p.add_argument("--rms", type=int, required=True)
    p.add_argument("--faults", type=int, default=0)
    p.add_argument("--coloc", action="store_true")
    p.add_argument("--spontaneous-prepare", action="store_true")
    p.add_argument("--send-to-all", action="store_true",
                   help="send phase 2a to all 2F+1 acceptors instead of F+1")
    p.add_argument("--no-bundle-2b", action="store_true",
                   help="one phase 2b message per instance")
    p.add_argument("--leader-separate", action="store_true",
                   help="put the leader on its own node (no co-location only)")
    p.add_argument("--abort", action="store_true", help="the last RM aborts")


def _scenario(args) -> costsim.Scenario:
    return costsim.Scenario(args.protocol, args.rms, args.faults, coloc=args.coloc,
                            spontaneous_prepare=args.spontaneous_prepare,
                            send_to_f_plus_1=not args.send_to_all,
                            bundle_2b=not args.no_bundle_2b,
                            leader_on_acceptor=not args.leader_separate, abort=args.abort)


def parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="txcommit", description=__doc__.splitlines()[0])
    sub = top.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("explore", help="exhaustive or random-walk safety checking")
    p.add_argument("--model", choices=MODELS, required=True)
    p.add_argument("--rms", type=int, required=True)
    p.add_argument("--acceptors", type=int, default=3)
    p.add_argument("--ballots", type=_ballots, default=(0, 1), help="e.g. 0,1")
    p.add_argument("--refinement", action=argparse.BooleanOptionalAction, default=None,
                   help="check refinement into tcommit (default: when the model has one)")
    p.add_argument("--mutate", action="append", default=[], choices=sorted(MUTATIONS))
    p.add_argument("--limit", type=int, default=10_000_000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--walks", type=int, default=0, help="random walks instead of BFS")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("cost", help="normal-case cost of one scenario, or the comparison table")
    _add_scenario_flags(p)
    p.add_argument("--table", action="store_true")
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("isocheck", help="2PC versus single-acceptor Paxos Commit")
    p.add_argument("--rms", type=int, required=True)
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("trace", help="stream a scenario's events as JSON lines")
    _add_scenario_flags(p)
    return top


def cmd_explore(args, out) -> int:
    ts = build(args.model, args.rms, args.acceptors, args.ballots, args.mutate)
    refinement = args.refinement
    if refinement is None:
        refinement = ts.abstract_system is not None
    if args.walks:
        report = random_walk(ts, args.seed, args.steps, args.walks, refinement)
    else:
        report = explore(ts, limit=args.limit, workers=args.workers, refinement=refinement)
    report.config["workers"] = args.workers
    data = report.to_json()
    if args.format == "json":
        print(_dump(data), file=out)
    else:
        print(f"config: {_dump(data['config'])}", file=out)
        for note in report.notes:
            print(f"note: {note}", file=out)
        print(f"mode: {report.mode}", file=out)
        print(f"reachableCount: {report.reachable_count}", file=out)
        print(f"diameter: {report.diameter}", file=out)
        print(f"complete: {str(report.complete).lower()}", file=out)
        for v in data["violations"]:
            print(f"violation: {v['name']} ({v['kind']}), trace of {v['length']} states",
                  file=out)
            for i, step in enumerate(v["trace"]):
                print(f"  {i}: {step['action']} {_dump(step['state'])}", file=out)
        if report.ok:
            print("violations: none", file=out)
    if report.violations:
        return EXIT_VIOLATION
    if report.mode == "exhaustive" and not report.complete:
        return EXIT_LIMIT
    return EXIT_OK


def cmd_cost(args, out) -> int:
    if args.table:
        rows = costsim.figure4_table(args.rms, args.faults)
        if args.format == "json":
            for row in rows:
                print(_dump(row), file=out)
        else:
            print(f"N = {args.rms}, F = {args.faults}", file=out)
            print(costsim.format_table(rows), file=out)
        ok = all(row[p]["match"] for row in rows for p in costsim.FIGURE4_COLUMNS)
        return EXIT_OK if ok else EXIT_MISMATCH
    sc = _scenario(args)
    report = costsim.run_normal_commit(sc)
    data = report.summary()
    try:
        formula = costsim.message_formula(sc)
    except UnsupportedScenario:
        formula = None
    data["messageFormula"] = formula
    if args.format == "json":
        print(_dump(data), file=out)
    else:
        print(f"config: {_dump(data['config'])}", file=out)
        for k in ("interNodeMessages", "messageDelays", "stableWrites", "stableWriteDelays",
                  "outcome"):
            print(f"{k}: {data[k]}", file=out)
        print(f"messageFormula: {'n/a' if formula is None else formula}", file=out)
    if formula is not None and formula != report.inter_node_messages:
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_isocheck(args, out) -> int:
    res = costsim.iso_check(args.rms)
    if args.format == "json":
        print(_dump({"rms": res.n, "ok": res.ok, "mismatch": res.mismatch,
                     "counts": res.counts}), file=out)
        for a, b in res.pairs:
            print(_dump({"twophase": a, "paxos": b}), file=out)
    else:
        print(f"rms: {res.n}", file=out)
        for a, b in res.pairs:
            print(f"  {a['from']}->{a['to']} {a['msg']}  <->  "
                  f"{b['from']}->{b['to']} {b['msg']}", file=out)
        print(f"counts: {_dump(res.counts)}", file=out)
        print("bijection: holds" if res.ok else f"bijection: fails at {res.mismatch}",
              file=out)
    return EXIT_OK if res.ok else EXIT_VIOLATION


def cmd_trace(args, out) -> int:
    sc = _scenario(args)
    report = costsim.run_normal_commit(sc)
    print(_dump({"config": asdict(sc), "placement": report.placement}), file=out)
    for ev in report.trace:
        print(_dump(ev.to_json()), file=out)
    return EXIT_OK


COMMANDS = {"explore": cmd_explore, "cost": cmd_cost, "isocheck": cmd_isocheck,
            "trace": cmd_trace}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = parser().parse_args(argv)
    try:
        return COMMANDS[args.cmd](args, out)
    except (ConfigError, UnsupportedScenario) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
