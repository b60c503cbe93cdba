"""Epistemic formulas over bounded run universes.

Knowledge is evaluated over an explicitly enumerated universe of runs,
so positive verdicts are over-approximations of truth over the full
(infinite) run set, while negative verdicts are sound whenever the
universe contains the relevant counterexample runs; the theorem
reproductions inject those runs explicitly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

from .errors import HapParseError, HorizonError, IntegrityError, \
    PreconditionError, ValidationError
from .haps import (LocalExtEvent, LocalHap, agent_of, is_byzantine_event,
                   is_correct_event, localize, parse_local, render)
from .engine import Run, RunUniverse
from .causal import (Node, build_causal_graph, partition,
                     path_exists_avoiding, reliable_cone)
from .surgery import with_round0_failures


# ---------------------------------------------------------------------------
# Formula AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Correct:
    """correct(i): no fault-relevant event of i up to the current time."""
    agent: int


@dataclass(frozen=True)
class CorrectAt:
    """correct(i, t): node (i, t) is correct in the run."""
    agent: int
    time: int


@dataclass(frozen=True)
class FakeAt:
    """fake_(i,t)(o): i records o in round t-1/2 for a byzantine reason."""
    agent: int
    time: int
    hap: LocalHap


@dataclass(frozen=True)
class OccurredCorrectlyAt:
    """occurred-correctly_(i,t)(o): i records o in round t-1/2 for a
    correct reason (a correct event perceived or an action performed)."""
    agent: int
    time: int
    hap: LocalHap


@dataclass(frozen=True)
class OccurredCorrectlyFor:
    """occurred-correctly_i(o): some round so far gave i a correct
    reason to record o."""
    agent: int
    hap: LocalHap


@dataclass(frozen=True)
class OccurredCorrectly:
    """occurred-correctly(o): some agent has a correct reason so far."""
    hap: LocalHap


@dataclass(frozen=True)
class OccurredFor:
    """occurred_i(o): i recorded o so far, for whatever reason."""
    agent: int
    hap: LocalHap


@dataclass(frozen=True)
class CustomAtom:
    """An atom whose truth is supplied by the valuation map."""
    name: str


@dataclass(frozen=True)
class Not:
    sub: "Formula"


@dataclass(frozen=True)
class And:
    subs: Tuple["Formula", ...]


@dataclass(frozen=True)
class K:
    """K_i(sub): sub holds at every indistinguishable point."""
    agent: int
    sub: "Formula"


Formula = object


def Or(*subs) -> Formula:
    return Not(And(tuple(Not(s) for s in subs)))


def Implies(premise, conclusion) -> Formula:
    return Or(Not(premise), conclusion)


def H(agent: int, sub) -> Formula:
    """Hope: correct(i) -> K_i(correct(i) -> sub)."""
    return Implies(Correct(agent),
                   K(agent, Implies(Correct(agent), sub)))


# ---------------------------------------------------------------------------
# Interpreted systems
# ---------------------------------------------------------------------------

@dataclass
class InterpretedSystem:
    """A bounded run universe plus a valuation of custom atoms.

    Points are (run_id, t) pairs with 0 <= t <= the run's length.
    """

    universe: RunUniverse
    valuation: Dict[str, Set[Tuple[int, int]]] = field(default_factory=dict)
    _classes: Optional[Dict[Tuple[int, object], List[Tuple[int, int]]]] = \
        field(default=None, repr=False)
    _k_cache: Dict[Tuple[int, object, object], bool] = \
        field(default_factory=dict, repr=False)

    def run(self, run_id: int) -> Run:
        return self.universe.runs[run_id]

    def points(self):
        for run_id, run in enumerate(self.universe.runs):
            for t in range(run.length + 1):
                yield run_id, t

    def add_run(self, run: Run) -> int:
        """Insert a counterexample run; invalidates the caches."""
        self._classes = None
        self._k_cache.clear()
        return self.universe.add(run)

    def indistinguishable(self, agent: int, run_id: int, t: int):
        """All points whose local state of the agent equals the one at
        (run_id, t), including the point itself."""
        if self._classes is None:
            self._classes = {}
            for rid, tt in self.points():
                run = self.run(rid)
                for i in run.ctx.alphabet.agents:
                    key = (i, run.local_history(i, tt))
                    self._classes.setdefault(key, []).append((rid, tt))
        key = (agent, self.run(run_id).local_history(agent, t))
        return self._classes.get(key, [])


def local_state_equal(run1: Run, t1: int, run2: Run, t2: int,
                      agent: int) -> bool:
    """Whether the agent's local state coincides at the two points."""
    return run1.local_history(agent, t1) == run2.local_history(agent, t2)


# ---------------------------------------------------------------------------
# Atom evaluation
# ---------------------------------------------------------------------------

def _check_time(run: Run, t: int):
    if not 0 <= t <= run.length:
        raise HorizonError(f"t={t} outside 0..{run.length}")


def _fake_at(run: Run, agent: int, t: int, hap: LocalHap) -> bool:
    if t < 1 or t > run.length:
        return False
    from .haps import Fake, FakeAction
    for h in run.beta_env(t - 1):
        if not is_byzantine_event(h) or agent_of(h) != agent:
            continue
        if isinstance(h, Fake):
            perceived = h.inner
        elif isinstance(h, FakeAction) and h.perceived is not None:
            perceived = h.perceived
        else:
            continue
        if localize(run.ctx.alphabet, perceived) == hap:
            return True
    return False


def _occurred_correctly_at(run: Run, agent: int, t: int,
                           hap: LocalHap) -> bool:
    if t < 1 or t > run.length:
        return False
    ab = run.ctx.alphabet
    for h in run.beta_env(t - 1):
        if is_correct_event(h) and agent_of(h) == agent \
                and localize(ab, h) == hap:
            return True
    for h in run.beta_agent(agent, t - 1):
        if localize(ab, h) == hap:
            return True
    return False


def eval_atom(sys: InterpretedSystem, run_id: int, t: int, atom) -> bool:
    run = sys.run(run_id)
    _check_time(run, t)
    if isinstance(atom, Correct):
        return run.node_correct(atom.agent, t)
    if isinstance(atom, CorrectAt):
        _check_time(run, atom.time)
        return run.node_correct(atom.agent, atom.time)
    if isinstance(atom, FakeAt):
        _check_time(run, atom.time)
        return _fake_at(run, atom.agent, atom.time, atom.hap)
    if isinstance(atom, OccurredCorrectlyAt):
        _check_time(run, atom.time)
        return _occurred_correctly_at(run, atom.agent, atom.time, atom.hap)
    if isinstance(atom, OccurredCorrectlyFor):
        return any(_occurred_correctly_at(run, atom.agent, m, atom.hap)
                   for m in range(1, t + 1))
    if isinstance(atom, OccurredCorrectly):
        return any(_occurred_correctly_at(run, i, m, atom.hap)
                   for i in run.ctx.alphabet.agents
                   for m in range(1, t + 1))
    if isinstance(atom, OccurredFor):
        return any(_occurred_correctly_at(run, atom.agent, m, atom.hap)
                   or _fake_at(run, atom.agent, m, atom.hap)
                   for m in range(1, t + 1))
    if isinstance(atom, CustomAtom):
        return (run_id, t) in sys.valuation.get(atom.name, set())
    raise ValidationError(f"not an atom: {atom!r}")


_ATOMS = (Correct, CorrectAt, FakeAt, OccurredCorrectlyAt,
          OccurredCorrectlyFor, OccurredCorrectly, OccurredFor, CustomAtom)


# ---------------------------------------------------------------------------
# Formula evaluation
# ---------------------------------------------------------------------------

def eval_formula(sys: InterpretedSystem, run_id: int, t: int,
                 formula) -> bool:
    if isinstance(formula, _ATOMS):
        return eval_atom(sys, run_id, t, formula)
    if isinstance(formula, Not):
        return not eval_formula(sys, run_id, t, formula.sub)
    if isinstance(formula, And):
        return all(eval_formula(sys, run_id, t, s) for s in formula.subs)
    if isinstance(formula, K):
        return eval_k(sys, run_id, t, formula.agent, formula.sub)
    raise ValidationError(f"not a formula: {formula!r}")


def eval_k(sys: InterpretedSystem, run_id: int, t: int, agent: int,
           sub) -> bool:
    # K_i only depends on the local-state class, so its value is cached
    # per (agent, local state, subformula)
    key = (agent, sys.run(run_id).local_history(agent, t), sub)
    if key not in sys._k_cache:
        sys._k_cache[key] = all(
            eval_formula(sys, rid, tt, sub)
            for rid, tt in sys.indistinguishable(agent, run_id, t))
    return sys._k_cache[key]


def eval_hope(sys: InterpretedSystem, run_id: int, t: int, agent: int,
              sub) -> bool:
    return eval_formula(sys, run_id, t, H(agent, sub))


def check_localized(sys: InterpretedSystem, formula, agent: int) -> bool:
    """Brute-force: the formula takes equal values at every pair of
    points with equal local states of the agent."""
    values = {}
    for rid, t in sys.points():
        key = sys.run(rid).local_history(agent, t)
        value = eval_formula(sys, rid, t, formula)
        if key in values and values[key] != value:
            return False
        values[key] = value
    return True


def truth_table(sys: InterpretedSystem, formula) -> List[Tuple[int, int, bool]]:
    """Per-point truth values, for report output."""
    return [(rid, t, eval_formula(sys, rid, t, formula))
            for rid, t in sys.points()]


# ---------------------------------------------------------------------------
# Multipede conditions
# ---------------------------------------------------------------------------

def _correct_occurrences(run: Run, hap: LocalHap):
    """Nodes (j, m) at which a correct event with the given local form
    occurs in the run's event sets."""
    ab = run.ctx.alphabet
    for m in range(run.length):
        for h in run.beta_env(m):
            if is_correct_event(h) and localize(ab, h) == hap:
                yield Node(agent_of(h), m)


def check_theorem2_premise(run: Run, theta: Node, hap: LocalHap) -> bool:
    """Every correct occurrence of the hap lies outside the reliable
    causal cone of theta."""
    graph = build_causal_graph(run)
    cone = reliable_cone(run, graph, theta)
    return all(node not in cone for node in _correct_occurrences(run, hap))


def check_multipede_bounded(sys: InterpretedSystem, run_id: int, theta: Node,
                            hap: LocalHap) -> bool:
    """Bounded surrogate of the multipede condition: every run in the
    universe indistinguishable to theta's agent at theta's time carries
    a correct occurrence of the hap inside its reliable cone."""
    base = sys.run(run_id)
    for candidate in sys.universe:
        if not local_state_equal(base, theta.time, candidate, theta.time,
                                 theta.agent):
            continue
        graph = build_causal_graph(candidate)
        cone = reliable_cone(candidate, graph, theta)
        if not any(node in cone
                   for node in _correct_occurrences(candidate, hap)):
            return False
    return True


@dataclass
class NecessaryConditionReport:
    """Per-S outcome of the Theorem-3 necessary condition."""

    theta: Node
    byzantine: FrozenSet[int]
    entries: List[Tuple[FrozenSet[int], Optional[Node]]] = \
        field(default_factory=list)

    @property
    def satisfied(self) -> bool:
        return all(witness is not None for _, witness in self.entries)

    def render(self) -> str:
        byz = ", ".join(map(str, sorted(self.byzantine))) or "-"
        lines = [f"theta = {self.theta.render()}",
                 f"byzantine agents = {{{byz}}}"]
        for s, witness in self.entries:
            s_txt = ", ".join(map(str, sorted(s))) or "-"
            if witness is None:
                lines.append(f"S = {{{s_txt}}}: VIOLATED (no witness path)")
            else:
                lines.append(f"S = {{{s_txt}}}: witness {witness.render()}")
        verdict = "satisfied" if self.satisfied else "violated"
        lines.append(f"necessary condition {verdict}")
        return "\n".join(lines) + "\n"


def check_theorem3_necessary(run: Run, theta: Node, hap: LocalHap,
                             f: Optional[int] = None
                             ) -> NecessaryConditionReport:
    """For every admissible blame set S, search for a correct occurrence
    of the hap with a causal path to theta that avoids both S and the
    already-byzantine agents."""
    if f is None:
        f = run.ctx.fault_bound
    if not run.node_correct(theta.agent, theta.time):
        raise PreconditionError(f"theta {theta.render()} is faulty")
    part = partition(run, theta)
    byz = part.byzantine_agents()
    if len(byz) > f:
        raise IntegrityError(
            f"{len(byz)} byzantine agents exceed the fault bound {f}")
    report = NecessaryConditionReport(theta=theta, byzantine=byz)
    graph = build_causal_graph(run)
    occurrences = list(_correct_occurrences(run, hap))
    candidates = sorted(set(run.ctx.alphabet.agents)
                        - {theta.agent} - set(byz))
    for s in _combinations(candidates, f - len(byz)):
        banned = byz | s
        witness = None
        for node in occurrences:
            if node.agent in banned:
                continue
            if path_exists_avoiding(run, graph, node, theta, banned):
                witness = node
                break
        report.entries.append((s, witness))
    return report


def _combinations(items, k):
    from itertools import combinations
    for combo in combinations(items, k):
        yield frozenset(combo)


def seeded_runs(adjusted: Run, theta: Node, f: Optional[int] = None
                ) -> List[Run]:
    """The r^S family: for each admissible blame set S, the adjusted run
    with silent failures of S and the byzantine agents seeded into its
    first round."""
    ctx = adjusted.ctx
    if f is None:
        f = ctx.fault_bound
    byz = adjusted.faulty_agents(theta.time)
    candidates = sorted(set(ctx.alphabet.agents) - {theta.agent} - set(byz))
    return [with_round0_failures(adjusted, byz | s)
            for s in _combinations(candidates, f - len(byz))]


# ---------------------------------------------------------------------------
# Formula parsing (prefix notation)
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r'\(|\)|"[^"]*"|[^()\s"]+')
_LABEL = re.compile(r"[A-Za-z_][A-Za-z0-9_.-]*$")


def parse_formula(text: str):
    """Parse a prefix-notation formula, e.g.
    (H 3 (occurred-correctly "report")) or (not (K 1 (correct 1)))."""
    tokens = _TOKEN.findall(text)
    if not tokens:
        raise HapParseError("empty formula", text)
    formula, rest = _parse(tokens, text)
    if rest:
        raise HapParseError(f"trailing tokens {rest!r}", text)
    return formula


def _parse(tokens, text):
    if tokens[0] != "(":
        raise HapParseError(f"expected '(' before {tokens[0]!r}", text)
    head, rest = tokens[1], tokens[2:]
    args = []
    while rest and rest[0] != ")":
        if rest[0] == "(":
            sub, rest = _parse(rest, text)
            args.append(sub)
        else:
            args.append(rest[0])
            rest = rest[1:]
    if not rest:
        raise HapParseError("unbalanced parentheses", text)
    rest = rest[1:]
    return _build(head, args, text), rest


def _hap_arg(arg, text) -> LocalHap:
    if not isinstance(arg, str):
        raise HapParseError("expected a hap argument", text)
    s = arg.strip('"')
    try:
        return parse_local(s)
    except HapParseError:
        if _LABEL.match(s):
            return LocalExtEvent(s)
        raise


def _int_arg(arg, text) -> int:
    try:
        return int(arg)
    except (TypeError, ValueError):
        raise HapParseError(f"expected an integer, got {arg!r}", text)


def _build(head, args, text):
    if head == "correct" and len(args) == 1:
        return Correct(_int_arg(args[0], text))
    if head == "correct-at" and len(args) == 2:
        return CorrectAt(_int_arg(args[0], text), _int_arg(args[1], text))
    if head == "fake-at" and len(args) == 3:
        return FakeAt(_int_arg(args[0], text), _int_arg(args[1], text),
                      _hap_arg(args[2], text))
    if head == "occurred-correctly-at" and len(args) == 3:
        return OccurredCorrectlyAt(_int_arg(args[0], text),
                                   _int_arg(args[1], text),
                                   _hap_arg(args[2], text))
    if head == "occurred-correctly-for" and len(args) == 2:
        return OccurredCorrectlyFor(_int_arg(args[0], text),
                                    _hap_arg(args[1], text))
    if head == "occurred-correctly" and len(args) == 1:
        return OccurredCorrectly(_hap_arg(args[0], text))
    if head == "occurred-for" and len(args) == 2:
        return OccurredFor(_int_arg(args[0], text), _hap_arg(args[1], text))
    if head == "atom" and len(args) == 1:
        return CustomAtom(str(args[0]).strip('"'))
    if head == "not" and len(args) == 1:
        return Not(args[0])
    if head == "and":
        return And(tuple(args))
    if head == "or":
        return Or(*args)
    if head == "implies" and len(args) == 2:
        return Implies(args[0], args[1])
    if head == "K" and len(args) == 2:
        return K(_int_arg(args[0], text), args[1])
    if head == "H" and len(args) == 2:
        return H(_int_arg(args[0], text), args[1])
    raise HapParseError(f"unrecognized form ({head} ...)", text)


def render_formula(formula) -> str:
    """Inverse of parse_formula up to derived-connective expansion."""
    if isinstance(formula, Correct):
        return f"(correct {formula.agent})"
    if isinstance(formula, CorrectAt):
        return f"(correct-at {formula.agent} {formula.time})"
    if isinstance(formula, FakeAt):
        return (f'(fake-at {formula.agent} {formula.time} '
                f'"{render(formula.hap)}")')
    if isinstance(formula, OccurredCorrectlyAt):
        return (f'(occurred-correctly-at {formula.agent} {formula.time} '
                f'"{render(formula.hap)}")')
    if isinstance(formula, OccurredCorrectlyFor):
        return (f'(occurred-correctly-for {formula.agent} '
                f'"{render(formula.hap)}")')
    if isinstance(formula, OccurredCorrectly):
        return f'(occurred-correctly "{render(formula.hap)}")'
    if isinstance(formula, OccurredFor):
        return f'(occurred-for {formula.agent} "{render(formula.hap)}")'
    if isinstance(formula, CustomAtom):
        return f'(atom "{formula.name}")'
    if isinstance(formula, Not):
        return f"(not {render_formula(formula.sub)})"
    if isinstance(formula, And):
        return "(and " + " ".join(render_formula(s)
                                  for s in formula.subs) + ")"
    if isinstance(formula, K):
        return f"(K {formula.agent} {render_formula(formula.sub)})"
    raise ValidationError(f"not a formula: {formula!r}")
