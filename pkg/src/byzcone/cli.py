"""Command-line front end.

One scenario file drives everything; subcommands either run one query
built from flags or (`check`) all queries declared in the scenario.
Exit codes: 0 all assertions pass, 1 assertion failure, 2 usage or
parse error, 3 budget exceeded.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Tuple

from .errors import ByzconeError, ResourceError
from .haps import parse_local, render
from .engine import dump_run, load_run, render_trace
from .causal import Node, dot_export, partition
from .surgery import (brain_in_vat, cone_adjusted_run, verify_vat)
from .logic import (InterpretedSystem, OccurredCorrectly,
                    check_multipede_bounded, check_theorem3_necessary,
                    eval_formula, parse_formula, seeded_runs, truth_table)
from .scenario import Scenario, load_scenario

EXIT_PASS, EXIT_ASSERT, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3


class OutDirs:
    """Fixed output layout: traces/, reports/, graphs/ under --out."""

    def __init__(self, root: str):
        self.root = Path(root)

    def write(self, kind: str, name: str, text: str) -> Path:
        directory = self.root / kind
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / name
        path.write_text(text)
        return path


def parse_theta(text: str) -> Node:
    try:
        agent, time = text.split("@")
        return Node(int(agent), int(time))
    except ValueError:
        raise ByzconeError(f"theta must look like a@t, got {text!r}")


# ---------------------------------------------------------------------------
# Query execution
# ---------------------------------------------------------------------------

def _augmented_system(scn: Scenario, base, augment) -> Tuple[InterpretedSystem, int]:
    """The enumerated universe plus the base run plus any requested
    counterexample runs.  Returns (system, base run id)."""
    sys_ = InterpretedSystem(scn.universe())
    base_id = sys_.add_run(base)
    for spec in augment or ():
        kind, _, at = spec.partition(":")
        node = parse_theta(at)
        if kind == "vat":
            sys_.add_run(brain_in_vat(base, node.agent, node.time))
        elif kind == "cone":
            adjusted, _, _ = cone_adjusted_run(base, node)
            sys_.add_run(adjusted)
        elif kind == "seeded":
            adjusted, _, _ = cone_adjusted_run(base, node)
            for run in seeded_runs(adjusted, node):
                sys_.add_run(run)
        else:
            raise ByzconeError(f"unknown augmentation {spec!r}")
    return sys_, base_id


def run_query(scn: Scenario, q: dict, out: OutDirs,
              length: Optional[int] = None) -> Tuple[bool, str]:
    """Execute one query; returns (passed, report text)."""
    kind = q["kind"]
    base = scn.base_run(length)

    if kind == "simulate":
        trace = render_trace(base)
        out.write("traces", f"{scn.name}.trace", trace)
        out.write("traces", f"{scn.name}.json", dump_run(base))
        return True, trace

    if kind == "enumerate":
        universe = scn.universe()
        text = (f"runs = {len(universe)}\n"
                f"total rounds = {universe.total_rounds()}\n")
        out.write("reports", f"{scn.name}-enumerate.txt", text)
        return True, text

    if kind == "partition":
        theta = parse_theta(q["theta"])
        part = partition(base, theta)
        lines = [f"theta = {theta.render()}"]
        for label, nodes in (("cone", part.cone), ("buffer", part.buffer),
                             ("masses", part.masses)):
            lines.append(f"{label} = " +
                         ", ".join(n.render() for n in sorted(nodes)))
        text = "\n".join(lines) + "\n"
        out.write("reports", f"{scn.name}-partition-{q['theta']}.txt", text)
        return _expect_sets(q, part), text

    if kind == "dot":
        theta = parse_theta(q["theta"])
        part = partition(base, theta)
        text = dot_export(base, part)
        out.write("graphs", f"{scn.name}-{q['theta']}.dot", text)
        return True, text

    if kind == "verify-lemma5":
        thetas = ([parse_theta(q["theta"])] if q.get("theta")
                  else _all_correct_thetas(base))
        chunks, ok = [], True
        for theta in thetas:
            _, _, report = cone_adjusted_run(base, theta)
            ok = ok and report.passed
            chunks.append(f"theta {theta.render()}:\n{report.render()}")
        text = "\n".join(chunks)
        out.write("reports", f"{scn.name}-lemma5.txt", text)
        return ok, text

    if kind == "vat":
        node = parse_theta(q["theta"])
        adjusted = brain_in_vat(base, node.agent, node.time)
        report = verify_vat(adjusted, base, node.agent, node.time)
        text = report.render() + render_trace(adjusted)
        out.write("reports", f"{scn.name}-vat-{q['theta']}.txt", text)
        return report.passed, text

    if kind == "eval":
        formula = parse_formula(q["formula"])
        sys_, base_id = _augmented_system(scn, base, q.get("augment"))
        expect = q.get("expect")
        if "at" in q:
            points = [(base_id, int(q["at"]))]
        else:
            points = list(sys_.points())
        lines, ok = [], True
        for rid, t in points:
            value = eval_formula(sys_, rid, t, formula)
            lines.append(f"run {rid} t={t}: {value}")
            if expect is not None and value != bool(expect):
                ok = False
        text = q["formula"] + "\n" + "\n".join(lines) + "\n"
        out.write("reports", f"{scn.name}-eval.txt", text)
        return ok, text

    if kind == "multipede-bounded":
        theta = parse_theta(q["theta"])
        hap = parse_local(q["hap"])
        sys_, base_id = _augmented_system(scn, base, q.get("augment"))
        value = check_multipede_bounded(sys_, base_id, theta, hap)
        text = (f"multipede-bounded theta={theta.render()} "
                f"hap={render(hap)}: {value}\n")
        out.write("reports", f"{scn.name}-multipede.txt", text)
        expect = q.get("expect")
        return expect is None or value == bool(expect), text

    if kind == "multipede-necessary":
        theta = parse_theta(q["theta"])
        hap = parse_local(q["hap"])
        report = check_theorem3_necessary(base, theta, hap)
        text = report.render()
        out.write("reports", f"{scn.name}-necessary-{q['theta']}.txt", text)
        expect = q.get("expect")
        if expect is None:
            return True, text
        return report.satisfied == (expect in (True, "satisfied")), text

    raise ByzconeError(f"unknown query kind {kind!r}")


def _expect_sets(q: dict, part) -> bool:
    """Optional assertions on a partition query: expected node lists."""
    for label in ("cone", "buffer", "masses"):
        key = f"expect_{label}"
        if key in q:
            expected = frozenset(parse_theta(s) for s in q[key])
            if getattr(part, label) != expected:
                return False
    return True


def _all_correct_thetas(run):
    return [Node(i, t)
            for i in run.ctx.alphabet.agents
            for t in range(1, run.length + 1)
            if run.node_correct(i, t)]


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="byzcone",
        description="byzantine runs-and-systems simulator and analyzers")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("scenario", help="scenario TOML file")
        p.add_argument("--horizon", type=int, default=None,
                       help="override run length (<= declared horizon)")
        p.add_argument("--budget", type=int, default=None,
                       help="enumeration budget in runs")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the adversary seed")
        return p

    scenario_cmd("check", "run every query declared in the scenario")
    scenario_cmd("simulate", "emit the base run's trace and dump")
    scenario_cmd("enumerate", "count the enumerable run universe")
    for name in ("partition", "dot"):
        p = scenario_cmd(name, f"{name} relative to --theta")
        p.add_argument("--theta", required=True, help="node a@t")
    p = scenario_cmd("verify-lemma5", "cone-equivalence report")
    p.add_argument("--theta", default=None, help="node a@t (default: all)")
    p = scenario_cmd("vat", "brain-in-a-vat construction and checks")
    p.add_argument("--theta", required=True, help="victim@t")
    p = scenario_cmd("eval", "evaluate a formula over the universe")
    p.add_argument("--formula", required=True)
    p.add_argument("--expect", choices=("true", "false"), default=None)
    p.add_argument("--augment", action="append", default=[],
                   help="vat:a@t, cone:a@t, or seeded:a@t")
    for name in ("multipede-bounded", "multipede-necessary"):
        p = scenario_cmd(name, f"{name} check")
        p.add_argument("--theta", required=True, help="node a@t")
        p.add_argument("--hap", required=True, help="local hap, e.g. recv(1, m)")
        if name == "multipede-bounded":
            p.add_argument("--augment", action="append", default=[])

    p = sub.add_parser("replay", help="re-load a dumped run and compare")
    p.add_argument("scenario", help="scenario TOML file")
    p.add_argument("dump", help="run dump JSON file")
    p.add_argument("--out", default="out")
    return parser


def _query_from_args(args) -> dict:
    q = {"kind": args.command}
    for key in ("theta", "formula", "hap"):
        if getattr(args, key, None) is not None:
            q[key] = getattr(args, key)
    if getattr(args, "augment", None):
        q["augment"] = args.augment
    if getattr(args, "expect", None) is not None:
        q["expect"] = args.expect == "true"
    return q


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scn = load_scenario(args.scenario)
        if getattr(args, "budget", None):
            scn.budget = args.budget
        if getattr(args, "seed", None) is not None:
            scn.seed, scn.script = args.seed, None
        out = OutDirs(args.out)

        if args.command == "replay":
            original = Path(args.dump).read_text()
            run = load_run(scn.ctx, original)
            replayed = dump_run(run)
            if replayed != original:
                print("replay mismatch")
                return EXIT_ASSERT
            print("replay ok")
            return EXIT_PASS

        if args.command == "check":
            queries = scn.queries
            if not queries:
                queries = [{"kind": "simulate"}]
        else:
            queries = [_query_from_args(args)]

        all_ok = True
        for q in queries:
            ok, text = run_query(scn, q, out,
                                 length=getattr(args, "horizon", None))
            sys.stdout.write(text)
            status = "PASS" if ok else "FAIL"
            print(f"[{status}] {q['kind']}")
            all_ok = all_ok and ok
        return EXIT_PASS if all_ok else EXIT_ASSERT
    except ResourceError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ByzconeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
