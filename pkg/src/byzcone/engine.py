"""Round transitions: filters, updates, run generation and enumeration.

Each round passes through five phases: the protocols offer ranges, the
adversary picks one option each, agent actions are globalized, causally
impossible events and ungated actions are filtered out, and the
surviving sets are appended to the environment and local histories.
Runs store the per-round sets as ground truth; histories are derived.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from .errors import (ChoiceError, HorizonError, ResourceError,
                     ValidationError)
from .haps import (Alphabet, FakeAction, GlobalHap, Go, GRecv, GSend,
                   LocalHistory, Sleep, agent_of, fail, globalize,
                   is_correct_event, is_fevent, is_system_event, parse_global,
                   render, render_set, sigma)
from .protocols import AgentContext

EventSet = FrozenSet[GlobalHap]


# ---------------------------------------------------------------------------
# Round traces and runs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RoundTrace:
    """What one round attempted and performed.

    alpha_* are the attempted sets after globalization (None for rounds
    produced by surgical adjustment, which prescribe the performed sets
    directly); beta_* are the performed sets.
    """

    beta_env: EventSet
    beta_agents: Tuple[EventSet, ...]
    alpha_env: Optional[EventSet] = None
    alpha_agents: Optional[Tuple[EventSet, ...]] = None
    choice: Optional[Tuple[int, Tuple[int, ...]]] = None
    surgical: bool = False

    def env_record(self) -> EventSet:
        out = set(self.beta_env)
        for acts in self.beta_agents:
            out |= acts
        return frozenset(out)


@dataclass(frozen=True)
class FilterState:
    """The slice of a global state the filters consult: the flattened
    environment record so far and the agents already faulty in it."""

    past: FrozenSet[GlobalHap]
    failed: FrozenSet[int]


class Run:
    """A finite run prefix: an initial global state plus one round trace
    per elapsed round.  Histories and fault sets are derived caches."""

    def __init__(self, ctx: AgentContext, initial: Sequence[str],
                 rounds: Sequence[RoundTrace] = ()):
        self.ctx = ctx
        self.initial = tuple(initial)
        if self.initial not in ctx.initial_states:
            raise ValidationError(
                f"initial state {self.initial} not among the declared ones")
        self.rounds: List[RoundTrace] = list(rounds)
        self._hist_cache: Dict[Tuple[int, int], LocalHistory] = {}

    # -- basic accessors ----------------------------------------------------

    @property
    def length(self) -> int:
        return len(self.rounds)

    def beta_env(self, t: int) -> EventSet:
        return self.rounds[t].beta_env

    def beta_agent(self, i: int, t: int) -> EventSet:
        return self.rounds[t].beta_agents[i - 1]

    def beta_env_agent(self, i: int, t: int) -> EventSet:
        return frozenset(h for h in self.rounds[t].beta_env
                         if agent_of(h) == i)

    def env_history(self, t: int) -> Tuple[EventSet, ...]:
        """One appended record per round, oldest first."""
        if t > self.length:
            raise HorizonError(f"t={t} beyond run length {self.length}")
        return tuple(rnd.env_record() for rnd in self.rounds[:t])

    def local_history(self, i: int, t: int) -> LocalHistory:
        key = (i, t)
        if key not in self._hist_cache:
            if t == 0:
                hist = LocalHistory(self.initial[i - 1])
            else:
                hist = update_agent(self.ctx.alphabet, i,
                                    self.local_history(i, t - 1),
                                    self.beta_agent(i, t - 1),
                                    self.beta_env(t - 1))
            self._hist_cache[key] = hist
        return self._hist_cache[key]

    def faulty_agents(self, t: int) -> FrozenSet[int]:
        """Agents with a fault-relevant event in some round before t."""
        out = set()
        for rnd in self.rounds[:t]:
            for h in rnd.beta_env:
                if is_fevent(h):
                    out.add(agent_of(h))
        return frozenset(out)

    def node_correct(self, i: int, t: int) -> bool:
        return i not in self.faulty_agents(t)

    def filter_state(self, t: int) -> FilterState:
        past = set()
        for rec in self.env_history(t):
            past |= rec
        return FilterState(frozenset(past), self.faulty_agents(t))

    def triggered(self, i: int, t: int) -> bool:
        """Whether round t appended a record to agent i's history."""
        return len(self.local_history(i, t + 1)) > len(self.local_history(i, t))

    def copy(self) -> "Run":
        return Run(self.ctx, self.initial, self.rounds)


# ---------------------------------------------------------------------------
# Filter functions
# ---------------------------------------------------------------------------

def filter_env_leq_f(state: FilterState, x_env, x_agents, f: int) -> EventSet:
    """Stage 1: drop every fault-relevant event if admitting them would
    push the number of faulty agents beyond f."""
    x_env = frozenset(x_env)
    newly = {agent_of(h) for h in x_env if is_fevent(h)}
    if len(state.failed | newly) <= f:
        return x_env
    return frozenset(h for h in x_env if not is_fevent(h))


def filter_env_b(state: FilterState, x_env, x_agents) -> EventSet:
    """Stage 2: drop correct receives with no matching send anywhere —
    neither in the history, nor performed this round (gated by go), nor
    byzantinely faked in the history or this round."""
    x_env = frozenset(x_env)
    out = set()
    for h in x_env:
        if isinstance(h, GRecv) and _orphaned(state, h, x_env, x_agents):
            continue
        out.add(h)
    return frozenset(out)


def _matching_fake_send(h: GlobalHap, send: GSend) -> bool:
    return isinstance(h, FakeAction) and h.performed == send


def _orphaned(state: FilterState, recv: GRecv, x_env, x_agents) -> bool:
    send = GSend(recv.sender, recv.recipient, recv.payload, recv.gmi)
    if send in state.past:
        return False
    if any(_matching_fake_send(h, send) for h in state.past):
        return False
    if send in x_agents[recv.sender - 1] and Go(recv.sender) in x_env:
        return False
    if any(_matching_fake_send(h, send) for h in x_env):
        return False
    return True


def filter_env(state: FilterState, x_env, x_agents, f: int) -> EventSet:
    """Both stages composed, fault-threshold stage first (the opposite
    order could keep a receive grounded only by a send it then drops)."""
    return filter_env_b(state, filter_env_leq_f(state, x_env, x_agents, f),
                        x_agents)


def filter_agent(i: int, x_agents, beta_env) -> EventSet:
    """An agent acts this round only when it was scheduled."""
    return frozenset(x_agents[i - 1]) if Go(i) in beta_env else frozenset()


# ---------------------------------------------------------------------------
# Update functions
# ---------------------------------------------------------------------------

def update_agent(ab: Alphabet, agent: int, history: LocalHistory,
                 x_actions, x_env) -> LocalHistory:
    """Append the localized record of the round to the agent's history,
    or leave it unchanged when nothing triggers an update.  An update is
    triggered by a recordable event or by go/sleep (hibernate is not
    recorded and does not wake the agent)."""
    x_env_i = frozenset(h for h in x_env if agent_of(h) == agent)
    record = sigma(ab, x_env_i)
    if not record and not (Go(agent) in x_env_i or Sleep(agent) in x_env_i):
        return history
    return history.append(sigma(ab, x_env_i | frozenset(x_actions)))


def update_env(env_history: Tuple[EventSet, ...], x_env,
               x_agents) -> Tuple[EventSet, ...]:
    """Always append the union of performed events and actions — exactly
    one record per round, possibly empty."""
    record = set(x_env)
    for acts in x_agents:
        record |= acts
    return env_history + (frozenset(record),)


# ---------------------------------------------------------------------------
# Stepping and enumeration
# ---------------------------------------------------------------------------

def offered_ranges(run: Run):
    """Phase 1: the ranges offered by the environment and each agent at
    the run's current time."""
    t = run.length
    env_range = run.ctx.env.choices(t)
    agent_ranges = tuple(
        run.ctx.joint[i].lookup(run.local_history(i, t))
        for i in run.ctx.alphabet.agents)
    return env_range, agent_ranges


def step_round(run: Run, choice: Tuple[int, Sequence[int]]) -> Run:
    """Execute one full round for the given adversary choice and return
    the extended run.  The input run is not modified."""
    ctx = run.ctx
    ab = ctx.alphabet
    t = run.length
    if t >= ctx.horizon:
        raise HorizonError(f"run already at horizon {ctx.horizon}")
    env_range, agent_ranges = offered_ranges(run)
    env_idx, agent_idxs = choice[0], tuple(choice[1])
    if not 0 <= env_idx < len(env_range):
        raise ChoiceError(f"environment choice {env_idx} out of range "
                          f"0..{len(env_range) - 1} at t={t}")
    if len(agent_idxs) != ab.n_agents:
        raise ChoiceError("need one choice index per agent")
    x_env = env_range[env_idx]
    alpha_agents = []
    for i in ab.agents:
        rng = agent_ranges[i - 1]
        idx = agent_idxs[i - 1]
        if not 0 <= idx < len(rng):
            raise ChoiceError(f"agent {i} choice {idx} out of range "
                              f"0..{len(rng) - 1} at t={t}")
        alpha_agents.append(frozenset(globalize(ab, i, t, a)
                                      for a in rng[idx]))
    alpha_agents = tuple(alpha_agents)

    state = run.filter_state(t)
    beta_env = filter_env(state, x_env, alpha_agents, ctx.fault_bound)
    beta_agents = tuple(filter_agent(i, alpha_agents, beta_env)
                        for i in ab.agents)
    trace = RoundTrace(beta_env=beta_env, beta_agents=beta_agents,
                       alpha_env=x_env, alpha_agents=alpha_agents,
                       choice=(env_idx, agent_idxs))
    return Run(ctx, run.initial, run.rounds + [trace])


def default_choice(run: Run) -> Tuple[int, Tuple[int, ...]]:
    """The all-first-offered adversary choice at the run's current time."""
    return (0, tuple(0 for _ in run.ctx.alphabet.agents))


def scripted_run(ctx: AgentContext, initial_index: int = 0,
                 script: Sequence[Tuple[int, Sequence[int]]] = (),
                 length: Optional[int] = None) -> Run:
    """Build a run from an explicit choice script, padding with the
    first-offered choice up to `length` (default: the horizon)."""
    length = ctx.horizon if length is None else length
    run = Run(ctx, ctx.initial_states[initial_index])
    for t in range(length):
        choice = script[t] if t < len(script) else default_choice(run)
        run = step_round(run, choice)
    return run


def random_script(ctx: AgentContext, seed: int, initial_index: int = 0
                  ) -> List[Tuple[int, Tuple[int, ...]]]:
    """Derive a reproducible choice script from a seed by walking one run."""
    rng = random.Random(seed)
    run = Run(ctx, ctx.initial_states[initial_index])
    script = []
    for _ in range(ctx.horizon):
        env_range, agent_ranges = offered_ranges(run)
        choice = (rng.randrange(len(env_range)),
                  tuple(rng.randrange(len(r)) for r in agent_ranges))
        script.append(choice)
        run = step_round(run, choice)
    return script


@dataclass
class RunUniverse:
    """A bounded universe of runs sharing one agent-context."""

    ctx: AgentContext
    runs: List[Run] = field(default_factory=list)

    def __len__(self):
        return len(self.runs)

    def __iter__(self):
        return iter(self.runs)

    def total_rounds(self) -> int:
        return sum(r.length for r in self.runs)

    def add(self, run: Run) -> int:
        self.runs.append(run)
        return len(self.runs) - 1


def enumerate_runs(ctx: AgentContext, budget: int = 20000) -> RunUniverse:
    """Exhaustively enumerate every weakly consistent run prefix up to
    the horizon, across all initial states and adversary choices, then
    apply the admissibility approximation."""
    universe = RunUniverse(ctx)
    count = 0

    def extend(run: Run):
        nonlocal count
        if run.length == ctx.horizon:
            count += 1
            if count > budget:
                raise ResourceError(
                    f"run enumeration exceeded budget {budget}",
                    estimate=count)
            universe.runs.append(run)
            return
        env_range, agent_ranges = offered_ranges(run)
        for env_idx in range(len(env_range)):
            for agent_idxs in _index_product(agent_ranges):
                extend(step_round(run, (env_idx, agent_idxs)))

    for init_idx in range(len(ctx.initial_states)):
        extend(Run(ctx, ctx.initial_states[init_idx]))

    if ctx.admissibility[0] == "fair-schedule":
        window = ctx.admissibility[1]
        universe.runs = [r for r in universe.runs
                         if check_fair_schedule_prefix(r, window)]
    return universe


def _index_product(ranges):
    if not ranges:
        yield ()
        return
    for head in range(len(ranges[0])):
        for tail in _index_product(ranges[1:]):
            yield (head,) + tail


def check_fair_schedule_prefix(run: Run, window: int) -> bool:
    """Every agent gets a system event within every full window-length
    span of the prefix.  Spans shorter than the window are vacuous."""
    if window < 1:
        raise ValidationError("window must be >= 1")
    n = run.ctx.alphabet.n_agents
    for start in range(run.length - window + 1):
        for i in range(1, n + 1):
            if not any(is_system_event(h) and agent_of(h) == i
                       for t in range(start, start + window)
                       for h in run.beta_env(t)):
                return False
    return True


# ---------------------------------------------------------------------------
# Trace output and replay
# ---------------------------------------------------------------------------

def render_trace(run: Run) -> str:
    """Human-readable per-round trace in the canonical hap grammar."""
    lines = [f"initial: ({', '.join(run.initial)})"]
    for t, rnd in enumerate(run.rounds):
        tag = " [surgical]" if rnd.surgical else ""
        lines.append(f"round {t}+1/2{tag}:")
        lines.append(f"  beta_env    = {render_set(rnd.beta_env)}")
        for i, acts in enumerate(rnd.beta_agents, start=1):
            if acts:
                lines.append(f"  beta_{i}      = {render_set(acts)}")
    return "\n".join(lines) + "\n"


def dump_run(run: Run) -> str:
    """Machine-readable dump of a run's ground truth for replay."""
    doc = {
        "initial": list(run.initial),
        "rounds": [
            {
                "beta_env": sorted(render(h) for h in rnd.beta_env),
                "beta_agents": [sorted(render(h) for h in acts)
                                for acts in rnd.beta_agents],
                "surgical": rnd.surgical,
            }
            for rnd in run.rounds
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_run(ctx: AgentContext, text: str) -> Run:
    """Rebuild a run from a dump.  The result carries the dumped sets as
    ground truth; histories are re-derived from them."""
    doc = json.loads(text)
    ab = ctx.alphabet
    rounds = []
    for rnd in doc["rounds"]:
        beta_env = frozenset(parse_global(ab, s) for s in rnd["beta_env"])
        beta_agents = tuple(frozenset(parse_global(ab, s) for s in acts)
                            for acts in rnd["beta_agents"])
        rounds.append(RoundTrace(beta_env=beta_env, beta_agents=beta_agents,
                                 surgical=rnd.get("surgical", False)))
    return Run(ctx, tuple(doc["initial"]), rounds)
