"""Causal graphs of runs and the cone / fault-buffer / masses partition.

Nodes are (agent, timestamp) pairs.  Edges are either local time steps
(i,t) -> (i,t+1) or message links from the round a message was sent
(correctly or byzantinely) to the node right after it was received.  A
path is reliable when every node along it still has a correct immediate
future and its final node is correct.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, NamedTuple, Set, Tuple

from .errors import HorizonError, IntegrityError, PreconditionError
from .haps import (FakeAction, GRecv, GSend, agent_of, is_byzantine_event,
                   render)
from .engine import Run


class Node(NamedTuple):
    agent: int
    time: int

    def render(self) -> str:
        return f"{self.agent}@{self.time}"


@dataclass
class CausalGraph:
    """Message edges of a run; local edges (i,t) -> (i,t+1) are implicit."""

    horizon: int
    n_agents: int
    message_edges: List[Tuple[Node, Node, int]] = field(default_factory=list)
    _preds: Dict[Node, List[Node]] = field(default_factory=dict)

    def predecessors(self, node: Node) -> List[Node]:
        preds = list(self._preds.get(node, ()))
        if node.time > 0:
            preds.append(Node(node.agent, node.time - 1))
        return preds

    def _index(self):
        self._preds = {}
        for src, dst, _ in self.message_edges:
            self._preds.setdefault(dst, []).append(src)


def build_causal_graph(run: Run) -> CausalGraph:
    """Extract the message edges of a run.  A receive performed in round
    l-1/2 points at node (recipient, l); its source is the node at which
    the matching send — correct or byzantine — was performed."""
    ab = run.ctx.alphabet
    graph = CausalGraph(horizon=run.length, n_agents=ab.n_agents)
    for l_minus_1 in range(run.length):
        for h in run.beta_env(l_minus_1):
            if not isinstance(h, GRecv):
                continue
            sender, recipient, payload, _, m = ab.decode_gmi(h.gmi)
            if (sender, recipient, payload) != (h.sender, h.recipient,
                                                h.payload):
                raise IntegrityError(
                    f"receive {render(h)} carries an id for a different "
                    f"message")
            if m > l_minus_1 or m >= run.length:
                continue  # no send can ground it; the filter bars this
            send = GSend(h.sender, h.recipient, h.payload, h.gmi)
            grounded = send in run.beta_agent(h.sender, m) or any(
                isinstance(b, FakeAction) and b.performed == send
                for b in run.beta_env(m))
            if grounded:
                graph.message_edges.append(
                    (Node(h.sender, m), Node(h.recipient, l_minus_1 + 1),
                     h.gmi))
    graph.message_edges.sort()
    graph._index()
    return graph


def _reach_backward(graph: CausalGraph, theta: Node,
                    admit) -> FrozenSet[Node]:
    """All nodes with a path to theta whose every traversed node passes
    `admit` (theta itself is always included if admit(theta, True))."""
    seen: Set[Node] = set()
    stack = [theta]
    seen.add(theta)
    while stack:
        node = stack.pop()
        for pred in graph.predecessors(node):
            if pred in seen or not admit(pred):
                continue
            seen.add(pred)
            stack.append(pred)
    return frozenset(seen)


def nodes_with_path(run: Run, graph: CausalGraph, theta: Node
                    ) -> FrozenSet[Node]:
    """All nodes with some causal path to theta (including theta)."""
    return _reach_backward(graph, theta, lambda n: True)


def reliable_cone(run: Run, graph: CausalGraph, theta: Node
                  ) -> FrozenSet[Node]:
    """Nodes with a reliable causal path to theta.  Empty when theta is
    itself faulty: the final node of a reliable path must be correct."""
    if not run.node_correct(theta.agent, theta.time):
        return frozenset()
    return _reach_backward(
        graph, theta,
        lambda n: run.node_correct(n.agent, n.time + 1))


def path_exists(run: Run, graph: CausalGraph, frm: Node, to: Node) -> bool:
    return frm in nodes_with_path(run, graph, to)


def reliable_path_exists(run: Run, graph: CausalGraph, frm: Node,
                         to: Node) -> bool:
    return frm in reliable_cone(run, graph, to)


def path_exists_avoiding(run: Run, graph: CausalGraph, frm: Node, to: Node,
                         banned_agents) -> bool:
    """A causal path none of whose nodes belongs to a banned agent."""
    banned = frozenset(banned_agents)
    if to.agent in banned or frm.agent in banned:
        return False
    reach = _reach_backward(graph, to, lambda n: n.agent not in banned)
    return frm in reach


@dataclass(frozen=True)
class ConePartition:
    """Three-way split of the node universe relative to theta: nodes
    that can be relied upon, faulty nodes that can still be heard, and
    everything else."""

    theta: Node
    horizon: int
    n_agents: int
    cone: FrozenSet[Node]
    buffer: FrozenSet[Node]

    @property
    def masses(self) -> FrozenSet[Node]:
        universe = {Node(i, t) for i in range(1, self.n_agents + 1)
                    for t in range(self.horizon + 1)}
        return frozenset(universe - self.cone - self.buffer)

    def classify(self, node: Node) -> str:
        if node in self.cone:
            return "cone"
        if node in self.buffer:
            return "buffer"
        return "masses"

    def byzantine_agents(self) -> FrozenSet[int]:
        return frozenset(n.agent for n in self.buffer)


def partition(run: Run, theta: Node) -> ConePartition:
    """Partition all nodes up to the run's length relative to theta."""
    if theta.time > run.length:
        raise HorizonError(f"theta at t={theta.time} beyond run length "
                           f"{run.length}")
    graph = build_causal_graph(run)
    cone = reliable_cone(run, graph, theta)
    reachable = nodes_with_path(run, graph, theta)
    buffer = frozenset(
        n for n in reachable
        if n.time < theta.time and not run.node_correct(n.agent, n.time + 1))
    return ConePartition(theta=theta, horizon=run.length,
                         n_agents=run.ctx.alphabet.n_agents,
                         cone=cone, buffer=buffer - cone)


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------

_COLORS = {"cone": "palegreen", "buffer": "lightcoral", "masses": "lightgray"}


def dot_export(run: Run, part: ConePartition) -> str:
    """Graphviz rendering: nodes colored by partition class, message
    edges labeled with payload and id, byzantine sends dashed."""
    ab = run.ctx.alphabet
    graph = build_causal_graph(run)
    lines = ["digraph causal {", "  rankdir=LR;",
             "  node [shape=box, style=filled];"]
    for i in ab.agents:
        for t in range(run.length + 1):
            node = Node(i, t)
            cls = part.classify(node)
            shape = ', penwidth=2' if node == part.theta else ''
            lines.append(
                f'  "a{i}t{t}" [label="{node.render()}", '
                f'fillcolor={_COLORS[cls]}{shape}];')
    for i in ab.agents:
        for t in range(run.length):
            lines.append(f'  "a{i}t{t}" -> "a{i}t{t + 1}" [color=gray];')
    for src, dst, gmi in graph.message_edges:
        _, _, payload, _, _ = ab.decode_gmi(gmi)
        send = GSend(src.agent, dst.agent, payload, gmi)
        byz = send not in run.beta_agent(src.agent, src.time)
        style = ", style=dashed" if byz else ""
        lines.append(
            f'  "a{src.agent}t{src.time}" -> "a{dst.agent}t{dst.time}" '
            f'[label="{payload}#{gmi}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
