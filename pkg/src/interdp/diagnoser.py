"""Diagnoser construction over a behavior automaton and on-line tracking.

Diagnoser states are sets of ``(BA state, fault label)`` pairs. The
initial state is the unobservable closure of ``(q0, {})``; each
observable event (model events and signature events alike) moves every
pair along its transition, then closes again over unobservable events,
adding faults to labels as they are crossed.
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .behavior import BehaviorAutomaton
from .parity import Group

__all__ = [
    "Pair",
    "Hypothesis",
    "Diagnoser",
    "DiagnoserTracker",
    "DiagnoserSizeError",
    "DiagnoserFormatError",
    "UnknownModeError",
    "DEFAULT_MAX_STATES",
    "unobservable_closure",
    "build_diagnoser",
    "order_hypotheses",
    "decorate",
    "save_diagnoser",
    "load_diagnoser",
    "dump_text",
]

DEFAULT_MAX_STATES = 1_000_000
MAGIC = b"\x89IDPDIAG"
FORMAT_VERSION = 1

Pair = tuple  # (ba_state: str, label: frozenset[str])


class DiagnoserSizeError(RuntimeError):
    """The diagnoser would exceed the configured number of states."""


class DiagnoserFormatError(ValueError):
    """A persisted diagnoser file is corrupt or of an unsupported version."""


class UnknownModeError(Exception):
    """No diagnoser transition for an observed event."""

    def __init__(self, event: str, state_index: int):
        self.event = event
        self.state_index = state_index
        super().__init__(f"event {event!r} is not possible from diagnoser state {state_index}")


def _pair_key(p: Pair):
    return (p[0], tuple(sorted(p[1])))


def unobservable_closure(ba: BehaviorAutomaton, pairs: Iterable[Pair]) -> frozenset:
    """Least superset of ``pairs`` closed under unobservable transitions."""
    out = set()
    todo = deque(pairs)
    unobs = {}
    for (s, e), t in ba.transitions.items():
        if e not in ba.observable:
            unobs.setdefault(s, []).append((e, t))
    while todo:
        p = todo.popleft()
        if p in out:
            continue
        out.add(p)
        s, label = p
        for e, t in unobs.get(s, ()):
            nl = label | {e} if e in ba.faults else label
            q = (t, frozenset(nl))
            if q not in out:
                todo.append(q)
    return frozenset(out)


def _observable_step(ba: BehaviorAutomaton, pairs: Iterable[Pair], event: str) -> set:
    nxt = set()
    for s, label in pairs:
        t = ba.transitions.get((s, event))
        if t is not None:
            nxt.add((t, label))
    return nxt


@dataclass(frozen=True, eq=False)
class Diagnoser:
    ba: BehaviorAutomaton
    states: tuple[frozenset, ...]
    transitions: Mapping[tuple[int, str], int]
    alphabet: tuple[str, ...]
    initial: int = 0

    @property
    def fingerprint(self) -> str:
        return self.ba.fingerprint

    def successor(self, state: int, event: str) -> int | None:
        return self.transitions.get((state, event))


def build_diagnoser(ba: BehaviorAutomaton, max_states: int = DEFAULT_MAX_STATES) -> Diagnoser:
    """Reachable part of the subset construction, explored breadth first.

    States are numbered in discovery order with events taken in sorted
    order, so the result is canonical for a given automaton.
    """
    alphabet = tuple(sorted(ba.observable))
    start = unobservable_closure(ba, [(ba.initial, frozenset())])
    index = {start: 0}
    states = [start]
    transitions = {}
    todo = deque([start])
    while todo:
        cur = todo.popleft()
        i = index[cur]
        for e in alphabet:
            moved = _observable_step(ba, cur, e)
            if not moved:
                continue
            nxt = unobservable_closure(ba, moved)
            j = index.get(nxt)
            if j is None:
                if len(states) >= max_states:
                    raise DiagnoserSizeError(
                        f"diagnoser exceeds {max_states} states; raise --max-diagnoser-states"
                    )
                j = index[nxt] = len(states)
                states.append(nxt)
                todo.append(nxt)
            transitions[(i, e)] = j
    return Diagnoser(ba, tuple(states), transitions, alphabet)


# ---------------------------------------------------------------------------
# Hypotheses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Hypothesis:
    """One diagnosis: the system is in ``mode`` and ``faults`` occurred.

    ``group`` and ``group_modes`` name the diagnosability group of the
    mode; ``pairs`` are the diagnoser pairs collapsed into it.
    """

    mode: str
    faults: frozenset
    group: str = ""
    group_modes: tuple[str, ...] = ()
    pairs: tuple = field(default=(), compare=False)

    @property
    def key(self) -> tuple[str, frozenset]:
        return (self.mode, self.faults)

    @property
    def confirmed(self) -> bool:
        """Whether some member pair sits on a mode state rather than a pending switch."""
        return any(p[0] == self.mode for p in self.pairs)


def _default_order(h: Hypothesis):
    return (len(h.faults), h.mode, tuple(sorted(h.faults)))


def order_hypotheses(
    hyps: Iterable[Hypothesis], priors: Mapping[tuple, float] | None = None
) -> list[Hypothesis]:
    """Descending prior when given, then fewest faults, then mode id."""
    hyps = list(hyps)
    if priors is None:
        return sorted(hyps, key=_default_order)
    return sorted(hyps, key=lambda h: (-priors.get(h.key, 0.0),) + _default_order(h))


def decorate(ba: BehaviorAutomaton, pairs: Iterable[Pair]) -> list[Hypothesis]:
    groups: dict[str, Group] = {g.id: g for g in ba.groups}
    mode_group = ba.mode_group
    collected: dict[tuple, list] = {}
    for p in pairs:
        mode = ba.state_mode[p[0]]
        collected.setdefault((mode, p[1]), []).append(p)
    out = []
    for (mode, label), members in collected.items():
        g = groups[mode_group[mode]]
        out.append(Hypothesis(mode, label, g.id, g.modes, tuple(sorted(members, key=_pair_key))))
    return order_hypotheses(out)


class DiagnoserTracker:
    """Follows one run through a diagnoser.

    ``step`` returns the new diagnosis vector. After an event the
    diagnoser cannot follow, the tracker freezes on its last state and
    every further ``step`` raises ``UnknownModeError`` again.

    ``last_parents`` maps each pair of the current state to the pairs of
    the previous state it descends from.
    """

    def __init__(self, diagnoser: Diagnoser):
        self.diagnoser = diagnoser
        self.state = diagnoser.initial
        self.frozen = False
        self.last_parents: dict[Pair, list[Pair]] = {p: [p] for p in self.pairs}

    @property
    def pairs(self) -> frozenset:
        return self.diagnoser.states[self.state]

    def diagnosis(self) -> list[Hypothesis]:
        return decorate(self.diagnoser.ba, self.pairs)

    def step(self, event: str) -> list[Hypothesis]:
        if self.frozen:
            raise UnknownModeError(event, self.state)
        nxt = self.diagnoser.successor(self.state, event)
        if nxt is None:
            self.frozen = True
            raise UnknownModeError(event, self.state)
        ba = self.diagnoser.ba
        parents: dict[Pair, list[Pair]] = {}
        for old in sorted(self.pairs, key=_pair_key):
            moved = _observable_step(ba, [old], event)
            if not moved:
                continue
            for new in unobservable_closure(ba, moved):
                parents.setdefault(new, []).append(old)
        self.state = nxt
        self.last_parents = parents
        return self.diagnosis()


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _to_doc(d: Diagnoser) -> dict:
    ba = d.ba
    return {
        "fingerprint": ba.fingerprint,
        "ba": {
            "states": list(ba.states),
            "state_mode": [ba.state_mode[s] for s in ba.states],
            "intermediate": sorted(ba.intermediate),
            "events": list(ba.events),
            "observable": sorted(ba.observable),
            "faults": sorted(ba.faults),
            "transitions": [[s, e, t] for (s, e), t in sorted(ba.transitions.items())],
            "initial": ba.initial,
            "groups": [
                {"id": g.id, "modes": list(g.modes), "bits": "".join("1" if b else "0" for b in g.bits)}
                for g in ba.groups
            ],
            "sig_event": dict(sorted(ba.sig_event.items())),
            "entry_event": dict(sorted(ba.entry_event.items())),
        },
        "alphabet": list(d.alphabet),
        "states": [[[s, sorted(label)] for s, label in sorted(st, key=_pair_key)] for st in d.states],
        "transitions": [[i, e, j] for (i, e), j in sorted(d.transitions.items())],
        "initial": d.initial,
    }


def _from_doc(doc: dict) -> Diagnoser:
    b = doc["ba"]
    ba = BehaviorAutomaton(
        states=tuple(b["states"]),
        state_mode=dict(zip(b["states"], b["state_mode"])),
        intermediate=frozenset(b["intermediate"]),
        events=tuple(b["events"]),
        observable=frozenset(b["observable"]),
        faults=frozenset(b["faults"]),
        transitions={(s, e): t for s, e, t in b["transitions"]},
        initial=b["initial"],
        groups=tuple(Group(g["id"], tuple(g["modes"]), tuple(c == "1" for c in g["bits"])) for g in b["groups"]),
        sig_event=dict(b["sig_event"]),
        entry_event=dict(b["entry_event"]),
        fingerprint=doc["fingerprint"],
    )
    states = tuple(frozenset((s, frozenset(label)) for s, label in st) for st in doc["states"])
    transitions = {(i, e): j for i, e, j in doc["transitions"]}
    return Diagnoser(ba, states, transitions, tuple(doc["alphabet"]), doc["initial"])


def serialize(d: Diagnoser) -> bytes:
    payload = json.dumps(_to_doc(d), sort_keys=True, separators=(",", ":")).encode("utf-8")
    head = MAGIC + struct.pack(">HI", FORMAT_VERSION, len(payload))
    return head + payload + hashlib.sha256(payload).digest()


def deserialize(blob: bytes) -> Diagnoser:
    n_head = len(MAGIC) + 6
    if len(blob) < n_head or blob[: len(MAGIC)] != MAGIC:
        raise DiagnoserFormatError("not an interdp diagnoser file (bad magic)")
    version, size = struct.unpack(">HI", blob[len(MAGIC):n_head])
    if version != FORMAT_VERSION:
        raise DiagnoserFormatError(f"unsupported diagnoser format version {version}")
    payload = blob[n_head:n_head + size]
    digest = blob[n_head + size:]
    if len(payload) != size or digest != hashlib.sha256(payload).digest():
        raise DiagnoserFormatError("diagnoser file is truncated or corrupt")
    return _from_doc(json.loads(payload.decode("utf-8")))


def save_diagnoser(d: Diagnoser, path: str | Path) -> None:
    Path(path).write_bytes(serialize(d))


def load_diagnoser(path: str | Path) -> Diagnoser:
    return deserialize(Path(path).read_bytes())


def _fmt_pairs(st: frozenset) -> str:
    return " ".join(f"({s},{{{','.join(sorted(label))}}})" for s, label in sorted(st, key=_pair_key))


def dump_text(d: Diagnoser) -> str:
    """Deterministic human-readable listing of states and transitions."""
    lines = [
        f"# interdp diagnoser v{FORMAT_VERSION}",
        f"fingerprint {d.fingerprint}",
        f"alphabet {' '.join(d.alphabet)}",
        f"states {len(d.states)}",
    ]
    for i, st in enumerate(d.states):
        lines.append(f"S{i} {_fmt_pairs(st)}")
    lines.append(f"transitions {len(d.transitions)}")
    for (i, e), j in sorted(d.transitions.items()):
        lines.append(f"S{i} {e} S{j}")
    return "\n".join(lines) + "\n"


def replay(d: Diagnoser, events: Sequence[str]) -> int | None:
    """Diagnoser state index after ``events``, or ``None`` if infeasible."""
    i = d.initial
    for e in events:
        i = d.successor(i, e)
        if i is None:
            return None
    return i
