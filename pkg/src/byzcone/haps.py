"""Hap algebra: local and global formats, message identifiers, conversions.

A "hap" is an action or an event.  Agents record haps in a local format
that carries no timing information; the environment records them in a
global format that additionally distinguishes correct haps from their
byzantine counterparts and attaches a unique id to every sent message.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import FrozenSet, Iterable, Optional, Tuple, Union

from .errors import AlphabetError, FormatError, HapParseError, IntegrityError


# ---------------------------------------------------------------------------
# Finite alphabets and message identifiers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Alphabet:
    """The finite domain a scenario ranges over.

    Agents are numbered 1..n_agents.  Message payloads, external event
    labels, and internal action labels are interned strings.  Copy
    numbers run 0..max_copies-1 and timestamps 0..horizon; together with
    sender, recipient, and payload they determine the mixed-radix
    message id encoding, which is invertible by construction.
    """

    n_agents: int
    messages: Tuple[str, ...] = ()
    max_copies: int = 1
    horizon: int = 1
    ext_events: Tuple[Tuple[str, ...], ...] = ()   # indexed by agent-1
    int_actions: Tuple[Tuple[str, ...], ...] = ()  # indexed by agent-1

    def __post_init__(self):
        if self.n_agents < 1:
            raise AlphabetError("at least one agent is required")
        if self.horizon < 1:
            raise AlphabetError("horizon must be at least 1")
        if self.max_copies < 1:
            raise AlphabetError("max_copies must be at least 1")
        if len(set(self.messages)) != len(self.messages):
            raise AlphabetError("duplicate message payloads")
        for attr in ("ext_events", "int_actions"):
            per_agent = getattr(self, attr)
            if per_agent and len(per_agent) != self.n_agents:
                raise AlphabetError(f"{attr} must list all agents or none")

    @property
    def agents(self) -> range:
        return range(1, self.n_agents + 1)

    def check_agent(self, i: int):
        if not 1 <= i <= self.n_agents:
            raise AlphabetError(f"agent {i} outside 1..{self.n_agents}")

    def ext_events_of(self, i: int) -> Tuple[str, ...]:
        self.check_agent(i)
        return self.ext_events[i - 1] if self.ext_events else ()

    def int_actions_of(self, i: int) -> Tuple[str, ...]:
        self.check_agent(i)
        return self.int_actions[i - 1] if self.int_actions else ()

    # -- message id codec ---------------------------------------------------

    def encode_gmi(self, sender: int, recipient: int, payload: str,
                   copy: int, time: int) -> int:
        """Pack a (sender, recipient, payload, copy, send-time) tuple into
        a single natural number.  Injective over the declared domain."""
        self.check_agent(sender)
        self.check_agent(recipient)
        if payload not in self.messages:
            raise AlphabetError(f"undeclared payload {payload!r}")
        if not 0 <= copy < self.max_copies:
            raise AlphabetError(f"copy {copy} outside 0..{self.max_copies - 1}")
        if not 0 <= time <= self.horizon:
            raise AlphabetError(f"send time {time} outside 0..{self.horizon}")
        n, m = self.n_agents, len(self.messages)
        code = sender - 1
        code = code * n + (recipient - 1)
        code = code * m + self.messages.index(payload)
        code = code * self.max_copies + copy
        code = code * (self.horizon + 1) + time
        return code

    def decode_gmi(self, code: int) -> Tuple[int, int, str, int, int]:
        """Invert encode_gmi.  Raises IntegrityError for codes outside the
        declared domain."""
        n, m = self.n_agents, len(self.messages)
        limit = n * n * m * self.max_copies * (self.horizon + 1)
        if not 0 <= code < limit:
            raise IntegrityError(f"message id {code} outside declared domain")
        code, time = divmod(code, self.horizon + 1)
        code, copy = divmod(code, self.max_copies)
        code, msg_idx = divmod(code, m)
        sender1, recipient1 = divmod(code, n)
        return (sender1 + 1, recipient1 + 1, self.messages[msg_idx],
                copy, time)


# ---------------------------------------------------------------------------
# Local haps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LocalSend:
    recipient: int
    payload: str
    copy: int = 0


@dataclass(frozen=True)
class LocalRecv:
    sender: int
    payload: str


@dataclass(frozen=True)
class LocalExtEvent:
    label: str


@dataclass(frozen=True)
class LocalIntAction:
    label: str


LocalHap = Union[LocalSend, LocalRecv, LocalExtEvent, LocalIntAction]

LOCAL_ACTIONS = (LocalSend, LocalIntAction)
LOCAL_EVENTS = (LocalRecv, LocalExtEvent)


def is_local_action(h) -> bool:
    return isinstance(h, LOCAL_ACTIONS)


def is_local_event(h) -> bool:
    return isinstance(h, LOCAL_EVENTS)


# ---------------------------------------------------------------------------
# Global haps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GSend:
    sender: int
    recipient: int
    payload: str
    gmi: int


@dataclass(frozen=True)
class GRecv:
    recipient: int
    sender: int
    payload: str
    gmi: int


@dataclass(frozen=True)
class GExtEvent:
    agent: int
    label: str


@dataclass(frozen=True)
class GIntAction:
    agent: int
    time: int
    label: str


@dataclass(frozen=True)
class Fake:
    """A byzantine event: agent perceives `inner` although it did not
    happen.  `inner` must be a correct event of the same agent."""

    agent: int
    inner: "GlobalHap"


@dataclass(frozen=True)
class FakeAction:
    """A byzantine action: `performed` is what actually happened (None
    for inaction), `perceived` is what the agent records (None leaves
    no record).  performed == perceived == None is the silent failure."""

    agent: int
    performed: Optional["GlobalHap"] = None
    perceived: Optional["GlobalHap"] = None


@dataclass(frozen=True)
class Go:
    agent: int


@dataclass(frozen=True)
class Sleep:
    agent: int


@dataclass(frozen=True)
class Hibernate:
    agent: int


GlobalHap = Union[GSend, GRecv, GExtEvent, GIntAction,
                  Fake, FakeAction, Go, Sleep, Hibernate]


def fail(agent: int) -> FakeAction:
    """The silent byzantine failure: nothing performed, nothing recorded."""
    return FakeAction(agent, None, None)


def agent_of(h: GlobalHap) -> int:
    if isinstance(h, GSend):
        return h.sender
    if isinstance(h, GRecv):
        return h.recipient
    return h.agent


def is_correct_action(h) -> bool:
    return isinstance(h, (GSend, GIntAction))


def is_correct_event(h) -> bool:
    return isinstance(h, (GRecv, GExtEvent))


def is_byzantine_event(h) -> bool:
    return isinstance(h, (Fake, FakeAction))


def is_system_event(h) -> bool:
    return isinstance(h, (Go, Sleep, Hibernate))


def is_global_event(h) -> bool:
    return is_correct_event(h) or is_byzantine_event(h) or is_system_event(h)


def is_fevent(h, agent: Optional[int] = None) -> bool:
    """Membership in the fault-relevant events: byzantine events plus
    sleep and hibernate (go is not fault-relevant)."""
    if not (is_byzantine_event(h) or isinstance(h, (Sleep, Hibernate))):
        return False
    return agent is None or agent_of(h) == agent


def validate_global(ab: Alphabet, h: GlobalHap):
    """Well-formedness of a global hap against the declared alphabet."""
    if isinstance(h, (GSend, GRecv)):
        ab.check_agent(h.sender)
        ab.check_agent(h.recipient)
        s, r, mu, _, _ = ab.decode_gmi(h.gmi)
        if (s, r, mu) != (h.sender, h.recipient, h.payload):
            raise FormatError(
                f"message id of {render(h)} decodes to a different message")
    elif isinstance(h, GExtEvent):
        if h.label not in ab.ext_events_of(h.agent):
            raise AlphabetError(f"undeclared event label {h.label!r}")
    elif isinstance(h, GIntAction):
        if h.label not in ab.int_actions_of(h.agent):
            raise AlphabetError(f"undeclared action label {h.label!r}")
    elif isinstance(h, Fake):
        if not is_correct_event(h.inner) or agent_of(h.inner) != h.agent:
            raise FormatError(
                f"fake({h.agent}, ...) must wrap a correct event of agent "
                f"{h.agent}")
        validate_global(ab, h.inner)
    elif isinstance(h, FakeAction):
        for part in (h.performed, h.perceived):
            if part is None:
                continue
            if not is_correct_action(part) or agent_of(part) != h.agent:
                raise FormatError(
                    f"fake action of agent {h.agent} must pair actions of "
                    f"agent {h.agent} (or noop)")
            validate_global(ab, part)
    elif isinstance(h, (Go, Sleep, Hibernate)):
        ab.check_agent(h.agent)
    else:
        raise FormatError(f"not a global hap: {h!r}")


# ---------------------------------------------------------------------------
# Format conversions
# ---------------------------------------------------------------------------

def globalize(ab: Alphabet, agent: int, time: int, action: LocalHap) -> GlobalHap:
    """Translate a local action into the global format at the given round."""
    if isinstance(action, LocalSend):
        gmi = ab.encode_gmi(agent, action.recipient, action.payload,
                            action.copy, time)
        return GSend(agent, action.recipient, action.payload, gmi)
    if isinstance(action, LocalIntAction):
        if action.label not in ab.int_actions_of(agent):
            raise AlphabetError(f"undeclared action label {action.label!r}")
        return GIntAction(agent, time, action.label)
    raise FormatError(f"cannot globalize an event: {action!r}")


def localize(ab: Alphabet, h: GlobalHap) -> LocalHap:
    """Strip global decorations off a correct hap.  Reverses globalize
    for actions; for receives, drops the message id."""
    if isinstance(h, GSend):
        _, _, _, copy, _ = ab.decode_gmi(h.gmi)
        return LocalSend(h.recipient, h.payload, copy)
    if isinstance(h, GRecv):
        return LocalRecv(h.sender, h.payload)
    if isinstance(h, GExtEvent):
        return LocalExtEvent(h.label)
    if isinstance(h, GIntAction):
        return LocalIntAction(h.label)
    raise FormatError(f"only correct haps have a local form: {render(h)}")


def sigma(ab: Alphabet, haps: Iterable[GlobalHap]) -> FrozenSet[LocalHap]:
    """Localization of a set of global haps, as recorded by agents.

    Correct haps map through localize; a byzantine event contributes the
    local record of its perceived counterpart; system events and
    unperceived byzantine actions leave no record.  Duplicate local
    records collapse into one set element.
    """
    out = set()
    for h in haps:
        if is_correct_action(h) or is_correct_event(h):
            out.add(localize(ab, h))
        elif isinstance(h, Fake):
            out.add(localize(ab, h.inner))
        elif isinstance(h, FakeAction):
            if h.perceived is not None:
                out.add(localize(ab, h.perceived))
        # system events contribute nothing
    return frozenset(out)


# ---------------------------------------------------------------------------
# Local histories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LocalHistory:
    """An agent's local state: initial state plus the records appended in
    rounds the agent was active in, oldest first."""

    initial: str
    records: Tuple[FrozenSet[LocalHap], ...] = ()

    def append(self, record: FrozenSet[LocalHap]) -> "LocalHistory":
        return LocalHistory(self.initial, self.records + (frozenset(record),))

    def __len__(self):
        return len(self.records)


# ---------------------------------------------------------------------------
# Canonical text rendering
# ---------------------------------------------------------------------------

def render(h) -> str:
    """Stable canonical rendering of any local or global hap."""
    if isinstance(h, LocalSend):
        return f"send({h.recipient}, {h.payload}#{h.copy})"
    if isinstance(h, LocalRecv):
        return f"recv({h.sender}, {h.payload})"
    if isinstance(h, LocalExtEvent):
        return f"ext({h.label})"
    if isinstance(h, LocalIntAction):
        return f"act({h.label})"
    if isinstance(h, GSend):
        return f"gsend({h.sender}->{h.recipient}, {h.payload}, #{h.gmi})"
    if isinstance(h, GRecv):
        return f"grecv({h.recipient}<-{h.sender}, {h.payload}, #{h.gmi})"
    if isinstance(h, GExtEvent):
        return f"gext({h.agent}, {h.label})"
    if isinstance(h, GIntAction):
        return f"gact({h.agent}@{h.time}, {h.label})"
    if isinstance(h, Fake):
        return f"fake({h.agent}, {render(h.inner)})"
    if isinstance(h, FakeAction):
        if h.performed is None and h.perceived is None:
            return f"fail({h.agent})"
        left = "noop" if h.performed is None else render(h.performed)
        right = "noop" if h.perceived is None else render(h.perceived)
        return f"fake({h.agent}, {left} -> {right})"
    if isinstance(h, Go):
        return f"go({h.agent})"
    if isinstance(h, Sleep):
        return f"sleep({h.agent})"
    if isinstance(h, Hibernate):
        return f"hibernate({h.agent})"
    raise FormatError(f"not a hap: {h!r}")


def render_set(haps) -> str:
    return "{" + ", ".join(sorted(render(h) for h in haps)) + "}"


def render_history(hist: LocalHistory) -> str:
    parts = [hist.initial] + [render_set(rec) for rec in hist.records]
    return " | ".join(parts)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_LABEL = r"[A-Za-z_][A-Za-z0-9_.-]*"

_LOCAL_SEND = re.compile(rf"send\(\s*(\d+)\s*,\s*({_LABEL})(?:#(\d+))?\s*\)$")
_LOCAL_RECV = re.compile(rf"recv\(\s*(\d+)\s*,\s*({_LABEL})\s*\)$")
_LOCAL_EXT = re.compile(rf"ext\(\s*({_LABEL})\s*\)$")
_LOCAL_ACT = re.compile(rf"act\(\s*({_LABEL})\s*\)$")

_GSEND = re.compile(
    rf"gsend\(\s*(\d+)\s*->\s*(\d+)\s*,\s*({_LABEL})\s*,\s*"
    rf"(?:#(\d+)|(\d+)@(\d+))\s*\)$")
_GRECV = re.compile(
    rf"grecv\(\s*(\d+)\s*<-\s*(\d+)\s*,\s*({_LABEL})\s*,\s*"
    rf"(?:#(\d+)|(\d+)@(\d+))\s*\)$")
_GEXT = re.compile(rf"gext\(\s*(\d+)\s*,\s*({_LABEL})\s*\)$")
_GACT = re.compile(rf"gact\(\s*(\d+)@(\d+)\s*,\s*({_LABEL})\s*\)$")
_SYS = re.compile(r"(go|sleep|hibernate|fail)\(\s*(\d+)\s*\)$")
_FAKE = re.compile(r"fake\(\s*(\d+)\s*,\s*(.*)\)$")


def parse_local(text: str) -> LocalHap:
    """Parse a local hap in the canonical grammar."""
    s = text.strip()
    m = _LOCAL_SEND.match(s)
    if m:
        return LocalSend(int(m.group(1)), m.group(2), int(m.group(3) or 0))
    m = _LOCAL_RECV.match(s)
    if m:
        return LocalRecv(int(m.group(1)), m.group(2))
    m = _LOCAL_EXT.match(s)
    if m:
        return LocalExtEvent(m.group(1))
    m = _LOCAL_ACT.match(s)
    if m:
        return LocalIntAction(m.group(1))
    raise HapParseError("unrecognized local hap", text)


def _parse_gmi(ab, sender, recipient, payload, raw, copy, time, text):
    if raw is not None:
        return int(raw)
    return ab.encode_gmi(sender, recipient, payload, int(copy), int(time))


def parse_global(ab: Alphabet, text: str) -> GlobalHap:
    """Parse a global hap.  Message ids may be given raw (`#17`) or as
    `copy@sendtime` sugar that is encoded against the alphabet."""
    s = text.strip()
    m = _GSEND.match(s)
    if m:
        snd, rcv, mu = int(m.group(1)), int(m.group(2)), m.group(3)
        gmi = _parse_gmi(ab, snd, rcv, mu, m.group(4), m.group(5), m.group(6), text)
        return GSend(snd, rcv, mu, gmi)
    m = _GRECV.match(s)
    if m:
        rcv, snd, mu = int(m.group(1)), int(m.group(2)), m.group(3)
        gmi = _parse_gmi(ab, snd, rcv, mu, m.group(4), m.group(5), m.group(6), text)
        return GRecv(rcv, snd, mu, gmi)
    m = _GEXT.match(s)
    if m:
        return GExtEvent(int(m.group(1)), m.group(2))
    m = _GACT.match(s)
    if m:
        return GIntAction(int(m.group(1)), int(m.group(2)), m.group(3))
    m = _SYS.match(s)
    if m:
        kind, agent = m.group(1), int(m.group(2))
        if kind == "go":
            return Go(agent)
        if kind == "sleep":
            return Sleep(agent)
        if kind == "hibernate":
            return Hibernate(agent)
        return fail(agent)
    m = _FAKE.match(s)
    if m:
        agent, body = int(m.group(1)), m.group(2).strip()
        arrow = _split_arrow(body)
        if arrow is None:
            return Fake(agent, parse_global(ab, body))
        left, right = arrow
        performed = None if left == "noop" else parse_global(ab, left)
        perceived = None if right == "noop" else parse_global(ab, right)
        return FakeAction(agent, performed, perceived)
    raise HapParseError("unrecognized global hap", text)


def _split_arrow(body: str):
    """Split a fake-action body at its top-level `->`, ignoring the `->`
    inside gsend(...) argument lists."""
    depth = 0
    i = 0
    while i < len(body) - 1:
        c = body[i]
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
        elif depth == 0 and body[i:i + 2] == "->":
            return body[:i].strip(), body[i + 2:].strip()
        i += 1
    return None
