"""Agent and environment protocols, round coherency, fault-type checks.

Environment protocols are extensional tables of per-timestamp choice
ranges, optionally closed under the fault-type operations (removal of an
agent's events, replacement of them by byzantine ones).  The closure is
represented intensionally: `choices(t)` enumerates only the explicitly
listed base sets, while `contains(t, X)` decides membership in the
closed range.  Exhaustive run enumeration walks the base choices; the
adjustment verifier uses the membership test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import chain, combinations
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from .errors import (FormatError, HorizonError, ResourceError,
                     ValidationError)
from .haps import (Alphabet, Fake, FakeAction, Go, GlobalHap, GRecv, GSend,
                   Hibernate, LocalHap, LocalHistory, Sleep, agent_of, fail,
                   is_correct_event, is_fevent, is_global_event,
                   is_local_action, is_system_event, localize, render,
                   render_set, sigma, validate_global)

AGENT_TYPES = ("correctable", "delayable", "errorProne", "gullible",
               "fullyByzantine")


# ---------------------------------------------------------------------------
# Round coherency
# ---------------------------------------------------------------------------

@dataclass
class CoherenceReport:
    """Violations of the per-round compatibility conditions on an
    environment event set."""

    violations: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def coherent(self) -> bool:
        return not self.violations

    def add(self, clause: str, detail: str):
        self.violations.append((clause, detail))


def _perceived_record(ab: Alphabet, h: GlobalHap):
    """What (agent, local record) a byzantine event makes its agent
    perceive, or None if it leaves no record."""
    if isinstance(h, Fake):
        return h.agent, localize(ab, h.inner)
    if isinstance(h, FakeAction) and h.perceived is not None:
        return h.agent, localize(ab, h.perceived)
    return None


def _byzantine_sends(h: GlobalHap):
    """Sends performed byzantinely inside a fake action."""
    if isinstance(h, FakeAction) and isinstance(h.performed, GSend):
        yield h.performed


def check_t_coherent(ab: Alphabet, events, time: int) -> CoherenceReport:
    """Check the three compatibility conditions for one round:
    (a) at most one system event per agent, (b) no byzantine duplicate of
    a correct event the same agent witnesses, (c) byzantine sends carry
    the id a correct send of the same message would carry this round."""
    report = CoherenceReport()
    events = frozenset(events)
    for h in events:
        if not is_global_event(h):
            raise FormatError(f"{render(h)} is an action, not an event")

    by_agent_sys: Dict[int, list] = {}
    for h in events:
        if is_system_event(h):
            by_agent_sys.setdefault(agent_of(h), []).append(h)
    for i, sys_events in sorted(by_agent_sys.items()):
        if len(sys_events) > 1:
            report.add("a", f"agent {i} has {len(sys_events)} system events: "
                            f"{render_set(sys_events)}")

    correct_records = {}
    for h in events:
        if is_correct_event(h):
            correct_records.setdefault(
                (agent_of(h), localize(ab, h)), []).append(h)
    for h in events:
        perceived = _perceived_record(ab, h)
        if perceived is None or not isinstance(h, Fake):
            continue
        if perceived in correct_records:
            report.add("b", f"{render(h)} duplicates the correct event "
                            f"{render(correct_records[perceived][0])}")

    for h in events:
        for send in _byzantine_sends(h):
            s, r, mu, k, t_enc = ab.decode_gmi(send.gmi)
            expected = ab.encode_gmi(send.sender, send.recipient,
                                     send.payload, k, time)
            if (s, r, mu) != (send.sender, send.recipient, send.payload) \
                    or t_enc != time or send.gmi != expected:
                report.add("c", f"byzantine send {render(send)} carries id "
                                f"#{send.gmi}, a correct send this round "
                                f"would carry #{expected}")
    return report


# ---------------------------------------------------------------------------
# Agent protocols
# ---------------------------------------------------------------------------

Range = Tuple[FrozenSet[LocalHap], ...]


@dataclass
class AgentProtocol:
    """Extensional protocol: explicit table entries plus a default range.

    An entry matches a local history when its records coincide and its
    initial-state pattern (None = wildcard) matches.  Every range is a
    nonempty tuple of action sets.
    """

    default: Range
    table: Tuple[Tuple[Optional[str], Tuple[FrozenSet[LocalHap], ...], Range],
                 ...] = ()

    def __post_init__(self):
        self.default = _check_range(self.default, "default")
        self.table = tuple(
            (init, tuple(frozenset(r) for r in records),
             _check_range(rng, "table entry"))
            for init, records, rng in self.table)

    def lookup(self, history: LocalHistory) -> Range:
        for init, records, rng in self.table:
            if records == history.records and init in (None, history.initial):
                return rng
        return self.default


def _check_range(rng, what) -> Range:
    rng = tuple(frozenset(x) for x in rng)
    if not rng:
        raise ValidationError(f"protocol {what} offers an empty range")
    for choice in rng:
        for a in choice:
            if not is_local_action(a):
                raise ValidationError(
                    f"protocol {what} offers a non-action {render(a)}")
    return rng


# ---------------------------------------------------------------------------
# Environment protocols
# ---------------------------------------------------------------------------

@dataclass
class EnvProtocol:
    """Per-timestamp ranges of coherent event sets, with optional
    fault-type closure flags per agent."""

    alphabet: Alphabet
    schedule: Dict[int, Tuple[FrozenSet[GlobalHap], ...]]
    default: Optional[Tuple[FrozenSet[GlobalHap], ...]] = None
    gullible: FrozenSet[int] = frozenset()
    error_prone: FrozenSet[int] = frozenset()
    correctable: FrozenSet[int] = frozenset()
    delayable: FrozenSet[int] = frozenset()

    def __post_init__(self):
        self.schedule = {t: tuple(frozenset(x) for x in rng)
                         for t, rng in self.schedule.items()}
        if self.default is not None:
            self.default = tuple(frozenset(x) for x in self.default)
        for t, rng in sorted(self.schedule.items()):
            self._check_range(rng, t)
        if self.default is not None:
            # default sets must be coherent at every timestamp they can
            # be offered at; ids in them are checked per use
            for t in range(self.alphabet.horizon):
                if t not in self.schedule:
                    self._check_range(self.default, t)

    def _check_range(self, rng, t):
        if not rng:
            raise ValidationError(f"environment range empty at t={t}")
        for x in rng:
            for h in x:
                validate_global(self.alphabet, h)
            report = check_t_coherent(self.alphabet, x, t)
            if not report.coherent:
                clause, detail = report.violations[0]
                raise ValidationError(
                    f"environment choice {render_set(x)} at t={t} violates "
                    f"t-coherency ({clause}): {detail}")

    def choices(self, t: int) -> Tuple[FrozenSet[GlobalHap], ...]:
        """The explicitly listed range at timestamp t (enumeration basis)."""
        if t in self.schedule:
            return self.schedule[t]
        if self.default is not None:
            return self.default
        raise HorizonError(f"no environment range declared for t={t}")

    # -- closed-range membership -------------------------------------------

    def contains(self, t: int, x) -> bool:
        """Membership of an event set in the range at t, including sets
        derivable from a base choice by the declared closure flags."""
        x = frozenset(x)
        if x in self.choices(t):
            return True
        if not check_t_coherent(self.alphabet, x, t).coherent:
            return False
        correctable = self.correctable | self.error_prone
        delayable = self.delayable | self.gullible
        for base in self.choices(t):
            if self._derivable(x, base, correctable, delayable):
                return True
        return False

    def _derivable(self, x, base, correctable, delayable) -> bool:
        for i in self.alphabet.agents:
            xi = frozenset(h for h in x if agent_of(h) == i)
            bi = frozenset(h for h in base if agent_of(h) == i)
            if xi == bi:
                continue
            keep = frozenset(h for h in bi if not is_fevent(h, i))
            if i in self.gullible and all(is_fevent(h, i) for h in xi):
                continue
            if i in self.error_prone and \
                    frozenset(h for h in xi if not is_fevent(h, i)) == keep:
                continue
            if i in delayable and not xi:
                continue
            if i in correctable and xi == keep:
                continue
            return False
        return True


# ---------------------------------------------------------------------------
# Fault-type predicates (bounded verdicts)
# ---------------------------------------------------------------------------

def relevant_fevents(env: EnvProtocol, agent: int,
                     horizon: Optional[int] = None) -> FrozenSet[GlobalHap]:
    """A small pool of fault-relevant events of the agent used to bound
    the subset quantification in the fault-type checks: every such event
    mentioned in the schedule, byzantine counterparts of the agent's
    scheduled correct events, and the standard silent failures."""
    ab = env.alphabet
    horizon = ab.horizon if horizon is None else horizon
    pool = {fail(agent), Sleep(agent), Hibernate(agent)}
    for t in range(horizon):
        for x in env.choices(t):
            for h in x:
                if is_fevent(h, agent):
                    pool.add(h)
                elif is_correct_event(h) and agent_of(h) == agent:
                    pool.add(Fake(agent, h))
    return frozenset(pool)


def _subsets(pool, cap=12):
    pool = sorted(pool, key=render)
    if len(pool) > cap:
        raise ResourceError(
            f"fault-event pool of size {len(pool)} exceeds the subset "
            f"enumeration cap {cap}", estimate=2 ** len(pool))
    return chain.from_iterable(
        combinations(pool, k) for k in range(len(pool) + 1))


def check_agent_type(env: EnvProtocol, agent: int, kind: str,
                     horizon: Optional[int] = None,
                     pool=None) -> bool:
    """Bounded check of a fault-type closure property of the environment
    protocol for one agent.  Quantification over fault-event subsets is
    restricted to `pool` (default: relevant_fevents); the verdict is a
    bounded approximation of the unbounded definition."""
    ab = env.alphabet
    horizon = ab.horizon if horizon is None else horizon
    if kind == "fullyByzantine":
        return (check_agent_type(env, agent, "errorProne", horizon, pool)
                and check_agent_type(env, agent, "gullible", horizon, pool))
    if kind not in AGENT_TYPES:
        raise ValidationError(f"unknown agent type {kind!r}")
    if pool is None and kind in ("errorProne", "gullible"):
        pool = relevant_fevents(env, agent, horizon)

    for t in range(horizon):
        for x in env.choices(t):
            if kind == "correctable":
                if not env.contains(t, {h for h in x if not is_fevent(h, agent)}):
                    return False
            elif kind == "delayable":
                if not env.contains(t, {h for h in x if agent_of(h) != agent}):
                    return False
            else:
                if kind == "errorProne":
                    base = {h for h in x if not is_fevent(h, agent)}
                else:  # gullible
                    base = {h for h in x if agent_of(h) != agent}
                for y in _subsets(pool):
                    candidate = base | set(y)
                    if not check_t_coherent(ab, candidate, t).coherent:
                        continue
                    if not env.contains(t, candidate):
                        return False
    return True


# ---------------------------------------------------------------------------
# Contexts
# ---------------------------------------------------------------------------

@dataclass
class AgentContext:
    """Everything needed to generate runs: the environment protocol, the
    joint protocol, initial states, the fault bound, the horizon, and a
    prefix-checkable admissibility tag."""

    alphabet: Alphabet
    env: EnvProtocol
    joint: Dict[int, AgentProtocol]
    initial_states: Tuple[Tuple[str, ...], ...]
    fault_bound: int = 0
    admissibility: Tuple = ("none",)

    def __post_init__(self):
        n = self.alphabet.n_agents
        if set(self.joint) != set(self.alphabet.agents):
            raise ValidationError("joint protocol must cover every agent")
        if not 0 <= self.fault_bound <= n:
            raise ValidationError(f"fault bound {self.fault_bound} outside 0..{n}")
        self.initial_states = tuple(tuple(s) for s in self.initial_states)
        if not self.initial_states:
            raise ValidationError("at least one global initial state required")
        for state in self.initial_states:
            if len(state) != n:
                raise ValidationError(
                    "each global initial state needs one local state per agent")
        tag = self.admissibility[0]
        if tag not in ("none", "fair-schedule"):
            raise ValidationError(f"unknown admissibility tag {tag!r}")
        if tag == "fair-schedule" and (
                len(self.admissibility) != 2 or self.admissibility[1] < 1):
            raise ValidationError("fair-schedule needs a window >= 1")

    @property
    def horizon(self) -> int:
        return self.alphabet.horizon

    @property
    def n_agents(self) -> int:
        return self.alphabet.n_agents
