"""Behavior automaton: the mode graph enriched with signature events.

A transition whose source and target lie in different diagnosability
groups is split in two: the original event leads to a fresh
intermediate state, from which the observable signature event of the
target group completes the move. The continuous evidence of a mode
change thus arrives after the change itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .model import HybridModel
from .parity import Group

__all__ = [
    "BehaviorAutomaton",
    "UnknownSignatureError",
    "SignatureMatcher",
    "build_behavior_automaton",
    "signature_event_stream",
    "to_dot",
]


@dataclass(frozen=True, eq=False)
class BehaviorAutomaton:
    states: tuple[str, ...]
    state_mode: Mapping[str, str]
    intermediate: frozenset
    events: tuple[str, ...]
    observable: frozenset
    faults: frozenset
    transitions: Mapping[tuple[str, str], str]
    initial: str
    groups: tuple[Group, ...]
    sig_event: Mapping[str, str]  # group id -> signature event id
    entry_event: Mapping[str, str] = field(default_factory=dict)  # intermediate state -> event leading into it
    fingerprint: str = ""

    @property
    def mode_group(self) -> dict[str, str]:
        return {m: g.id for g in self.groups for m in g.modes}

    @property
    def signature_events(self) -> frozenset:
        return frozenset(self.sig_event.values())

    def outgoing(self, state: str) -> list[tuple[str, str]]:
        return sorted((e, t) for (s, e), t in self.transitions.items() if s == state)


def _fresh(name: str, taken: set[str]) -> str:
    while name in taken:
        name += "'"
    taken.add(name)
    return name


def build_behavior_automaton(model: HybridModel, partition: Sequence[Group]) -> BehaviorAutomaton:
    event_ids = [e.id for e in model.events]
    taken_events = set(event_ids)
    sig_event = {g.id: _fresh(f"sig_{g.id}", taken_events) for g in partition}
    group_of = {m: g.id for g in partition for m in g.modes}

    taken_states = set(model.mode_ids)
    states = list(model.mode_ids)
    state_mode = {m: m for m in model.mode_ids}
    intermediate = set()
    entry_event = {}
    transitions: dict[tuple[str, str], str] = {}
    for t in model.transitions:
        g_src, g_dst = group_of[t.source], group_of[t.target]
        if g_src == g_dst:
            transitions[(t.source, t.event)] = t.target
            continue
        w = _fresh(f"{t.source}~{t.event}", taken_states)
        states.append(w)
        state_mode[w] = t.target
        intermediate.add(w)
        entry_event[w] = t.event
        transitions[(t.source, t.event)] = w
        transitions[(w, sig_event[g_dst])] = t.target

    return BehaviorAutomaton(
        states=tuple(states),
        state_mode=state_mode,
        intermediate=frozenset(intermediate),
        events=tuple(event_ids) + tuple(sig_event[g.id] for g in partition),
        observable=frozenset(e.id for e in model.events if e.observable) | set(sig_event.values()),
        faults=frozenset(model.fault_ids),
        transitions=transitions,
        initial=model.initial_mode,
        groups=tuple(partition),
        sig_event=sig_event,
        entry_event=entry_event,
        fingerprint=model.fingerprint,
    )


def to_dot(ba: BehaviorAutomaton) -> str:
    """Graphviz description of the automaton, deterministic line order."""
    lines = ["digraph behavior {", "  rankdir=LR;"]
    for s in ba.states:
        if s in ba.intermediate:
            lines.append(f'  "{s}" [shape=point, xlabel="{s}"];')
        else:
            group = ba.mode_group.get(s, "")
            peri = 2 if s == ba.initial else 1
            lines.append(f'  "{s}" [shape=circle, peripheries={peri}, label="{s}\\n{group}"];')
    for (s, e), t in sorted(ba.transitions.items()):
        style = "solid" if e in ba.observable else "dashed"
        lines.append(f'  "{s}" -> "{t}" [label="{e}", style={style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


class UnknownSignatureError(Exception):
    """A settled residual tuple matches no mode signature."""

    def __init__(self, bits: tuple[bool, ...]):
        self.bits = bits
        super().__init__("observed signature matches no group: " + "".join("1" if b else "0" for b in bits))


@dataclass
class SignatureMatcher:
    """Turns the stream of filtered residual tuples into signature events.

    A tuple is acted upon once it stayed unchanged for ``settle``
    consecutive ticks. If it then differs from the current group's
    pattern it yields that group's signature event, or raises
    ``UnknownSignatureError`` when no group has this pattern.
    """

    groups: tuple[Group, ...]
    sig_event: Mapping[str, str]
    current: str  # group id
    settle: int = 1
    _candidate: tuple | None = field(default=None, repr=False)
    _count: int = field(default=0, repr=False)

    @classmethod
    def for_automaton(cls, ba: BehaviorAutomaton, settle: int = 1) -> "SignatureMatcher":
        return cls(ba.groups, ba.sig_event, ba.mode_group[ba.initial], settle)

    def update(self, bits: Iterable[bool]) -> str | None:
        bits = tuple(bool(b) for b in bits)
        if bits == self._candidate:
            self._count += 1
        else:
            self._candidate, self._count = bits, 1
        if self._count != self.settle:
            return None
        pattern = next((g for g in self.groups if g.bits == bits), None)
        if pattern is None:
            raise UnknownSignatureError(bits)
        if pattern.id == self.current:
            return None
        self.current = pattern.id
        return self.sig_event[pattern.id]


def signature_event_stream(matcher: SignatureMatcher, bits: Iterable[bool]) -> str | None:
    return matcher.update(bits)
