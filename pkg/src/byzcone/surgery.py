"""Counterfactual run construction: interventions and adjustments.

An intervention prescribes, for one agent and one round, the performed
actions and events directly, bypassing the protocol/filter pipeline.
An adjustment is a per-round sequence of joint interventions; applying
one to a run rebuilds its prefix through the update functions only, so
the result is not automatically transitional — transitionality of the
cone-equivalent adjustment is certified separately against explicitly
constructed witness attempt sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from .errors import (HorizonError, IntegrityError, PreconditionError,
                     ValidationError)
from .haps import (Fake, FakeAction, GlobalHap, Go, GRecv, GSend, Hibernate,
                   Sleep, agent_of, fail, globalize, is_byzantine_event,
                   is_correct_event, localize, render, render_set)
from .engine import (Run, RoundTrace, default_choice, filter_agent,
                     filter_env, filter_env_leq_f, step_round)
from .causal import ConePartition, Node, build_causal_graph, nodes_with_path, \
    partition


# ---------------------------------------------------------------------------
# Interventions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Freeze:
    """Deny the agent all actions and events for the round."""


@dataclass(frozen=True)
class Echo:
    """Reproduce every message the agent sent in the base round, but in
    byzantine form, and mark the agent faulty with a silent failure."""

    agent: int
    time: int


@dataclass(frozen=True)
class Chatter:
    """Replay the agent's base round faithfully, except that receives
    whose send originates outside the focus set of nodes are dropped."""

    agent: int
    time: int
    focus: FrozenSet[Node]


@dataclass(frozen=True)
class Vat:
    """Replace the agent's entire round perception by byzantine
    counterparts: events become fakes, performed actions become
    perceived-only, and a silent failure marks the agent faulty."""

    agent: int
    time: int


@dataclass(frozen=True)
class Custom:
    """Explicitly given performed actions and events."""

    actions: FrozenSet[GlobalHap]
    events: FrozenSet[GlobalHap]


Intervention = object  # union of the five kinds above


@dataclass(frozen=True)
class Adjustment:
    """joints[m][i-1] is the intervention for agent i in round m+1/2."""

    joints: Tuple[Tuple[Intervention, ...], ...]

    def __len__(self):
        return len(self.joints)


def eval_intervention(iv, agent: int, base: Run
                      ) -> Tuple[FrozenSet[GlobalHap], FrozenSet[GlobalHap]]:
    """Evaluate an intervention against a base run, yielding the
    performed (actions, events) pair for its agent slot."""
    if isinstance(iv, Freeze):
        return frozenset(), frozenset()
    if isinstance(iv, Custom):
        return frozenset(iv.actions), frozenset(iv.events)
    if isinstance(iv, Echo):
        events = {fail(iv.agent)}
        for send in _round_sends(base, iv.agent, iv.time):
            events.add(FakeAction(iv.agent, send, None))
        return frozenset(), frozenset(events)
    if isinstance(iv, Chatter):
        ab = base.ctx.alphabet
        events = set()
        for h in base.beta_env_agent(iv.agent, iv.time):
            if isinstance(h, GRecv):
                sender, _, _, _, m = ab.decode_gmi(h.gmi)
                if Node(sender, m) not in iv.focus:
                    continue
            events.add(h)
        return base.beta_agent(iv.agent, iv.time), frozenset(events)
    if isinstance(iv, Vat):
        # fail(i) is included unconditionally so the agent is faulty
        # from the first adjusted round even over an inactive prefix
        events = {fail(iv.agent)}
        for h in base.beta_env_agent(iv.agent, iv.time):
            if is_correct_event(h):
                events.add(Fake(iv.agent, h))
            elif is_byzantine_event(h) or isinstance(h, Sleep):
                events.add(h)
            # go is replaced by sleep below; hibernate leaves no trace
        for a in base.beta_agent(iv.agent, iv.time):
            events.add(FakeAction(iv.agent, None, a))
        if base.triggered(iv.agent, iv.time):
            events.add(Sleep(iv.agent))
        return frozenset(), frozenset(events)
    raise ValidationError(f"unknown intervention {iv!r}")


def _round_sends(run: Run, agent: int, t: int):
    """Correct and byzantine sends performed by the agent in round t."""
    for h in run.beta_agent(agent, t):
        if isinstance(h, GSend):
            yield h
    for h in run.beta_env(t):
        if isinstance(h, FakeAction) and h.agent == agent \
                and isinstance(h.performed, GSend):
            yield h.performed


def render_adjustment(adj: Adjustment) -> str:
    lines = []
    for m, joint in enumerate(adj.joints):
        for i, iv in enumerate(joint, start=1):
            lines.append(f"round {m}: agent {i}: {_render_iv(iv)}")
    return "\n".join(lines) + "\n"


def _render_iv(iv) -> str:
    if isinstance(iv, Freeze):
        return "freeze"
    if isinstance(iv, Echo):
        return f"echo({iv.agent}@{iv.time})"
    if isinstance(iv, Chatter):
        focus = ", ".join(n.render() for n in sorted(iv.focus))
        return f"chatter({iv.agent}@{iv.time}, [{focus}])"
    if isinstance(iv, Vat):
        return f"vat({iv.agent}@{iv.time})"
    if isinstance(iv, Custom):
        return (f"custom(actions={render_set(iv.actions)}, "
                f"events={render_set(iv.events)})")
    return repr(iv)


# ---------------------------------------------------------------------------
# Applying adjustments
# ---------------------------------------------------------------------------

def apply_adjustment(base: Run, adj: Adjustment,
                     continuation: Optional[Sequence] = None,
                     length: Optional[int] = None) -> Run:
    """Rebuild a run: the adjusted prefix is driven directly through the
    update functions, the rest continues transitionally (first-offered
    choices unless a continuation script is given)."""
    ctx = base.ctx
    length = ctx.horizon if length is None else length
    if len(adj) > length:
        raise HorizonError(f"adjustment of length {len(adj)} exceeds {length}")
    run = Run(ctx, base.initial)
    for joint in adj.joints:
        if len(joint) != ctx.n_agents:
            raise ValidationError("joint intervention must cover every agent")
        actions, events = [], set()
        for i, iv in enumerate(joint, start=1):
            a_i, e_i = eval_intervention(iv, i, base)
            actions.append(a_i)
            events |= e_i
        trace = RoundTrace(beta_env=frozenset(events),
                           beta_agents=tuple(actions), surgical=True)
        run = Run(ctx, run.initial, run.rounds + [trace])
    remaining = length - len(adj)
    if continuation is not None and len(continuation) < remaining:
        raise HorizonError(
            f"continuation of length {len(continuation)} too short for "
            f"{remaining} remaining rounds")
    for k in range(remaining):
        choice = continuation[k] if continuation is not None \
            else default_choice(run)
        run = step_round(run, choice)
    return run


def identity_adjustment(run: Run, upto: int) -> Adjustment:
    """Replay a run's own performed sets as explicit interventions."""
    joints = []
    for m in range(upto):
        joints.append(tuple(
            Custom(run.beta_agent(i, m), run.beta_env_agent(i, m))
            for i in run.ctx.alphabet.agents))
    return Adjustment(tuple(joints))


def with_round0_failures(run: Run, agents) -> Run:
    """A copy of the run whose first round additionally carries a silent
    failure for each given agent; imperceptible to every agent."""
    if run.length == 0:
        raise HorizonError("run has no rounds")
    extra = frozenset(fail(j) for j in agents)
    first = run.rounds[0]
    patched = RoundTrace(beta_env=first.beta_env | extra,
                         beta_agents=first.beta_agents,
                         alpha_env=None, alpha_agents=None, surgical=True)
    out = Run(run.ctx, run.initial, [patched] + run.rounds[1:])
    if len(out.faulty_agents(out.length)) > run.ctx.fault_bound:
        raise IntegrityError("seeded failures exceed the fault bound")
    return out


# ---------------------------------------------------------------------------
# Cone-equivalent adjustment
# ---------------------------------------------------------------------------

def cone_adjustment(base: Run, theta: Node,
                    part: Optional[ConePartition] = None) -> Adjustment:
    """The adjustment that preserves the reliable causal cone of theta,
    echoes the fault buffer in byzantine form, and freezes the silent
    masses."""
    if not base.node_correct(theta.agent, theta.time):
        raise PreconditionError(f"theta {theta.render()} is faulty in the "
                                f"base run")
    if part is None:
        part = partition(base, theta)
    focus = part.cone | part.buffer
    joints = []
    for m in range(theta.time):
        joint = []
        for j in base.ctx.alphabet.agents:
            node = Node(j, m)
            if node in part.cone:
                joint.append(Chatter(j, m, focus))
            elif node in part.buffer:
                joint.append(Echo(j, m))
            else:
                joint.append(Freeze())
        joints.append(tuple(joint))
    return Adjustment(tuple(joints))


def construct_witness_alphas(base: Run, theta: Node, adjusted: Run,
                             part: Optional[ConePartition] = None):
    """Attempt sets certifying the adjusted prefix as transitional:
    inside the cone the base choices are repeated; elsewhere the agents
    attempt an arbitrary protocol-conformant choice, and the environment
    set is the fault-threshold-prefiltered base set stripped of all
    events of non-cone agents, with silent failures and byzantine
    echo-sends added for the fault buffer."""
    ctx = base.ctx
    ab = ctx.alphabet
    if part is None:
        part = partition(base, theta)
    alphas = []
    for m in range(theta.time):
        rnd = base.rounds[m]
        if rnd.alpha_env is None or rnd.alpha_agents is None:
            raise PreconditionError(
                f"base round {m} carries no attempt sets (surgical base?)")
        alpha_agents = []
        for j in ab.agents:
            if Node(j, m) in part.cone:
                alpha_agents.append(rnd.alpha_agents[j - 1])
            else:
                x_j = ctx.joint[j].lookup(adjusted.local_history(j, m))[0]
                alpha_agents.append(frozenset(globalize(ab, j, m, a)
                                              for a in x_j))
        silenced = {l for l in ab.agents
                    if Node(l, m) not in part.cone}
        env = set(filter_env_leq_f(base.filter_state(m), rnd.alpha_env,
                                   rnd.alpha_agents, ctx.fault_bound))
        env = {h for h in env if agent_of(h) not in silenced}
        for l in ab.agents:
            if Node(l, m) in part.buffer:
                env.add(fail(l))
                for send in _round_sends(base, l, m):
                    env.add(FakeAction(l, send, None))
        alphas.append((frozenset(env), tuple(alpha_agents)))
    return alphas


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

@dataclass
class EquivalenceReport:
    """Per-property outcome of the cone-equivalence checks."""

    entries: Dict[str, Tuple[bool, str]] = field(default_factory=dict)

    def record(self, name: str, ok: bool, detail: str = ""):
        self.entries[name] = (ok, detail)

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.entries.values())

    def render(self) -> str:
        lines = []
        for name in sorted(self.entries):
            ok, detail = self.entries[name]
            mark = "pass" if ok else "FAIL"
            lines.append(f"({name}) {mark}" + (f": {detail}" if detail else ""))
        return "\n".join(lines) + "\n"


def verify_transitional_prefix(run: Run, alphas, upto: int):
    """Re-run the filter pipeline on given attempt sets and demand that
    it reproduces the run's performed sets, with every attempt set
    offered by the respective protocol.  Returns (ok, detail)."""
    ctx = run.ctx
    ab = ctx.alphabet
    for m in range(upto):
        alpha_env, alpha_agents = alphas[m]
        if not ctx.env.contains(m, alpha_env):
            return False, (f"round {m}: witness event set "
                           f"{render_set(alpha_env)} not offered by the "
                           f"environment protocol")
        for j in ab.agents:
            local_choice = frozenset(localize(ab, a)
                                     for a in alpha_agents[j - 1])
            rng = ctx.joint[j].lookup(run.local_history(j, m))
            if local_choice not in rng:
                return False, (f"round {m}: agent {j} witness actions not "
                               f"offered by its protocol")
            reglobal = frozenset(globalize(ab, j, m, a) for a in local_choice)
            if reglobal != alpha_agents[j - 1]:
                return False, (f"round {m}: agent {j} witness actions carry "
                               f"wrong timestamps")
        state = run.filter_state(m)
        beta_env = filter_env(state, alpha_env, alpha_agents, ctx.fault_bound)
        if beta_env != run.beta_env(m):
            return False, (f"round {m}: filtered events "
                           f"{render_set(beta_env)} != performed "
                           f"{render_set(run.beta_env(m))}")
        for j in ab.agents:
            beta_j = filter_agent(j, alpha_agents, beta_env)
            if beta_j != run.beta_agent(j, m):
                return False, (f"round {m}: agent {j} filtered actions "
                               f"differ from performed ones")
    return True, ""


def verify_cone_equivalence(base: Run, theta: Node, adjusted: Run,
                            part: Optional[ConePartition] = None,
                            alphas=None) -> EquivalenceReport:
    """Check the six cone-equivalence properties of an adjusted run
    against its base."""
    ctx = base.ctx
    ab = ctx.alphabet
    t = theta.time
    if part is None:
        part = partition(base, theta)
    report = EquivalenceReport()

    bad = [n for n in sorted(part.cone)
           if adjusted.local_history(n.agent, n.time)
           != base.local_history(n.agent, n.time)]
    report.record("A", not bad,
                  "" if not bad else f"first divergent cone node "
                                     f"{bad[0].render()}")

    bad_m = [m for m in range(t + 1)
             if adjusted.local_history(theta.agent, m)
             != base.local_history(theta.agent, m)]
    report.record("B", not bad_m,
                  "" if not bad_m else f"agent {theta.agent} history differs "
                                       f"at t={bad_m[0]}")

    graph = build_causal_graph(base)
    reach = nodes_with_path(base, graph, theta)
    c_ok, c_detail = True, ""
    for m in range(1, t + 1):
        for j in ab.agents:
            has_fault = any(agent_of(h) == j for h in adjusted.beta_env(m - 1)
                            if _is_fevent(h))
            expected = (Node(j, m - 1) in reach
                        and not base.node_correct(j, m))
            if has_fault != expected:
                c_ok, c_detail = False, (f"agent {j} round {m - 1}: fault "
                                         f"presence {has_fault}, expected "
                                         f"{expected}")
                break
        if not c_ok:
            break
    report.record("C", c_ok, c_detail)

    d_bad = [(j, m) for m in range(t + 1) for j in ab.agents
             if base.node_correct(j, m) and not adjusted.node_correct(j, m)]
    report.record("D", not d_bad,
                  "" if not d_bad else f"node {d_bad[0]} lost correctness")

    e_ok, e_detail = True, ""
    for m in range(t + 1):
        n_adj = len(adjusted.faulty_agents(m))
        n_base = len(base.faulty_agents(m))
        if n_adj > n_base or n_adj > ctx.fault_bound:
            e_ok, e_detail = False, (f"t={m}: {n_adj} faulty agents "
                                     f"(base {n_base}, bound "
                                     f"{ctx.fault_bound})")
            break
    report.record("E", e_ok, e_detail)

    if alphas is None:
        try:
            alphas = construct_witness_alphas(base, theta, adjusted, part)
        except PreconditionError as exc:
            report.record("F", False, str(exc))
            return report
    f_ok, f_detail = verify_transitional_prefix(adjusted, alphas, t)
    report.record("F", f_ok, f_detail)
    return report


def _is_fevent(h) -> bool:
    return is_byzantine_event(h) or isinstance(h, (Sleep, Hibernate))


def cone_adjusted_run(base: Run, theta: Node,
                      continuation: Optional[Sequence] = None):
    """Convenience: partition, adjust, apply, and verify in one step.
    Returns (adjusted_run, partition, report)."""
    part = partition(base, theta)
    adj = cone_adjustment(base, theta, part)
    adjusted = apply_adjustment(base, adj, continuation)
    report = verify_cone_equivalence(base, theta, adjusted, part)
    return adjusted, part, report


# ---------------------------------------------------------------------------
# Brain in a vat
# ---------------------------------------------------------------------------

def brain_in_vat(base: Run, victim: int, t: int,
                 continuation: Optional[Sequence] = None) -> Run:
    """An adjusted run in which the victim's entire perceived prefix is
    byzantine while every other agent is frozen: the victim's local
    state at t matches the base run, yet nothing correctly occurred."""
    ctx = base.ctx
    if ctx.fault_bound < 1:
        raise PreconditionError("brain-in-a-vat needs a byzantine budget "
                                "(fault bound >= 1)")
    if t > base.length:
        raise HorizonError(f"t={t} beyond base run length {base.length}")
    joints = []
    for m in range(t):
        joints.append(tuple(
            Vat(victim, m) if i == victim else Freeze()
            for i in ctx.alphabet.agents))
    return apply_adjustment(base, Adjustment(tuple(joints)), continuation)


def vat_witness_alphas(adjusted: Run, victim: int, t: int):
    """Attempt sets certifying the vat prefix: the environment attempts
    exactly the performed byzantine events, agents attempt their first
    offered choice (which the missing go then filters away)."""
    ctx = adjusted.ctx
    ab = ctx.alphabet
    alphas = []
    for m in range(t):
        alpha_agents = []
        for j in ab.agents:
            x_j = ctx.joint[j].lookup(adjusted.local_history(j, m))[0]
            alpha_agents.append(frozenset(globalize(ab, j, m, a) for a in x_j))
        alphas.append((adjusted.beta_env(m), tuple(alpha_agents)))
    return alphas


def verify_vat(adjusted: Run, base: Run, victim: int, t: int):
    """Check the vat guarantees: identical victim history, frozen
    others, no correct occurrences, and a transitional prefix."""
    report = EquivalenceReport()
    same = all(adjusted.local_history(victim, m) == base.local_history(victim, m)
               for m in range(t + 1))
    report.record("victim-history", same)
    others_initial = all(
        len(adjusted.local_history(j, t)) == 0
        for j in adjusted.ctx.alphabet.agents if j != victim)
    report.record("others-frozen", others_initial)
    no_correct = all(
        is_byzantine_event(h) or isinstance(h, (Sleep, Hibernate))
        for m in range(t) for h in adjusted.rounds[m].env_record())
    report.record("no-correct-haps", no_correct)
    ok, detail = verify_transitional_prefix(
        adjusted, vat_witness_alphas(adjusted, victim, t), t)
    report.record("F", ok, detail)
    return report
