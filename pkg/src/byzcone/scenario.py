"""TOML scenario files: one file declares the system, the protocols,
the adversary, and a list of declarative queries.

The grammar is documented in docs/scenario.md.  Hap strings inside the
environment schedule use the global grammar; strings inside agent
protocol tables use the local grammar.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import tomli

from .errors import FormatError, ValidationError
from .haps import Alphabet, parse_global, parse_local
from .protocols import AgentContext, AgentProtocol, EnvProtocol
from .engine import Run, RunUniverse, enumerate_runs, random_script, \
    scripted_run


@dataclass
class Scenario:
    """A fully validated scenario: context, adversary, queries."""

    name: str
    ctx: AgentContext
    script: Optional[List[Tuple[int, Tuple[int, ...]]]] = None
    seed: Optional[int] = None
    budget: int = 20000
    queries: List[dict] = field(default_factory=list)

    def base_run(self, length: Optional[int] = None) -> Run:
        """The scenario's distinguished run: scripted if a script is
        given, seed-derived otherwise, first-offered as a last resort."""
        script = self.script
        if script is None and self.seed is not None:
            script = random_script(self.ctx, self.seed)
        return scripted_run(self.ctx, script=script or (), length=length)

    def universe(self, budget: Optional[int] = None) -> RunUniverse:
        return enumerate_runs(self.ctx, budget or self.budget)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    try:
        return _build(path.stem, doc)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed scenario: {exc}") from exc


def _build(name: str, doc: dict) -> Scenario:
    system = doc["system"]
    n = int(system["agents"])
    ab = Alphabet(
        n_agents=n,
        messages=tuple(system.get("messages", ())),
        max_copies=int(system.get("max_copies", 1)),
        horizon=int(system.get("horizon", 3)),
        ext_events=_per_agent(system.get("ext_events"), n),
        int_actions=_per_agent(system.get("int_actions"), n),
    )
    env = _env_protocol(ab, doc.get("env", {}))
    joint = {i: _agent_protocol(doc.get("agents", {}).get(str(i)))
             for i in ab.agents}
    admissibility = (system.get("admissibility", "none"),)
    if admissibility == ("fair-schedule",):
        admissibility = ("fair-schedule", int(system["fair_window"]))
    ctx = AgentContext(
        alphabet=ab, env=env, joint=joint,
        initial_states=tuple(tuple(s) for s in system["initial"]),
        fault_bound=int(system.get("fault_bound", 0)),
        admissibility=admissibility,
    )
    adversary = doc.get("adversary", {})
    script = adversary.get("script")
    if script is not None:
        script = [(int(env_idx), tuple(int(i) for i in agent_idxs))
                  for env_idx, agent_idxs in script]
    queries = list(doc.get("queries", ()))
    for q in queries:
        if "kind" not in q:
            raise ValidationError(f"query without a kind: {q!r}")
    return Scenario(
        name=name, ctx=ctx, script=script,
        seed=adversary.get("seed"),
        budget=int(adversary.get("budget", 20000)),
        queries=queries,
    )


def _per_agent(value, n: int):
    if value is None:
        return ()
    if len(value) != n:
        raise ValidationError("per-agent label lists must cover every agent")
    return tuple(tuple(labels) for labels in value)


def _env_protocol(ab: Alphabet, doc: dict) -> EnvProtocol:
    schedule = {}
    for key, rng in doc.get("schedule", {}).items():
        schedule[int(key)] = _global_range(ab, rng)
    default = doc.get("default")
    if default is not None:
        default = _global_range(ab, default)
    return EnvProtocol(
        alphabet=ab, schedule=schedule, default=default,
        gullible=frozenset(doc.get("gullible", ())),
        error_prone=frozenset(doc.get("error_prone", ())),
        correctable=frozenset(doc.get("correctable", ())),
        delayable=frozenset(doc.get("delayable", ())),
    )


def _global_range(ab: Alphabet, rng):
    return tuple(frozenset(parse_global(ab, s) for s in choice)
                 for choice in rng)


def _local_range(rng):
    return tuple(frozenset(parse_local(s) for s in choice)
                 for choice in rng)


def _agent_protocol(doc: Optional[dict]) -> AgentProtocol:
    if doc is None:
        return AgentProtocol(default=(frozenset(),))
    table = []
    for entry in doc.get("table", ()):
        records = tuple(frozenset(parse_local(s) for s in rec)
                        for rec in entry["records"])
        table.append((entry.get("initial"), records,
                      _local_range(entry["range"])))
    return AgentProtocol(default=_local_range(doc.get("default", [[]])),
                         table=tuple(table))
