"""Enriched hybrid automaton: data model, JSON loader and validation.

A model is a set of behavioral modes (nominal, faulty, failure), each
carrying discrete-time LTI dynamics and a vector of Weibull aging laws,
one per fault that can still occur from that mode. Modes are linked by
a partial transition function over observable and unobservable events.
The failure condition is a fault tree over fault events.

Everything here is immutable after construction. ``validate`` is the
only place invariants are checked, so a malformed ``HybridModel`` can be
built on purpose (tests do) and inspected.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Union

import numpy as np

__all__ = [
    "EventDef",
    "LinearDynamics",
    "WeibullLaw",
    "ModeDef",
    "TransitionDef",
    "FaultLeaf",
    "FaultGate",
    "FaultTree",
    "HybridModel",
    "DiscreteAutomaton",
    "ModelError",
    "ModelParseError",
    "ModelValidationError",
    "MODE_KINDS",
    "load_model",
    "save_model",
    "model_from_dict",
    "model_to_dict",
    "validate",
    "underlying_des",
    "evaluate_tree",
    "tree_faults",
]

MODE_KINDS = ("nominal", "faulty", "failure")


class ModelError(Exception):
    """Base class for model loading problems."""


class ModelParseError(ModelError):
    """The model file is not well-formed JSON or does not follow the schema."""


class ModelValidationError(ModelError):
    """The model parsed but violates one or more invariants."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class EventDef:
    id: str
    observable: bool
    fault: bool = False


def _frozen_matrix(m) -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim == 1 and a.size == 0:
        a = a.reshape(0, 0)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LinearDynamics:
    """x[k+1] = A x[k] + B u[k],  y[k] = C x[k] + D u[k]."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in "ABCD":
            object.__setattr__(self, name, _frozen_matrix(getattr(self, name)))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1] if self.B.ndim == 2 else 0

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def shape_errors(self) -> list[str]:
        errs = []
        for name in "ABCD":
            if getattr(self, name).ndim != 2:
                errs.append(f"{name} is not a matrix")
        if errs:
            return errs
        n_x = self.A.shape[0]
        if self.A.shape != (n_x, n_x):
            errs.append(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n_x:
            errs.append(f"B has {self.B.shape[0]} rows, expected {n_x}")
        if self.C.shape[1] != n_x:
            errs.append(f"C has {self.C.shape[1]} columns, expected {n_x}")
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            errs.append(
                f"D has shape {self.D.shape}, expected {(self.C.shape[0], self.B.shape[1])}"
            )
        if self.C.shape[0] < 1:
            errs.append("n_y must be >= 1")
        for name in "ABCD":
            if not np.all(np.isfinite(getattr(self, name))):
                errs.append(f"{name} has non-finite entries")
        return errs

    def same_as(self, other: "LinearDynamics") -> bool:
        return all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in "ABCD"
        )

    def to_dict(self) -> dict:
        return {n: getattr(self, n).tolist() for n in "ABCD"}


@dataclass(frozen=True)
class WeibullLaw:
    beta: float
    eta: float
    gamma: float = 0.0

    def with_gamma(self, gamma: float) -> "WeibullLaw":
        return WeibullLaw(self.beta, self.eta, gamma)


@dataclass(frozen=True, eq=False)
class ModeDef:
    id: str
    kind: str
    dynamics: LinearDynamics
    faults: frozenset = frozenset()
    aging: Mapping[str, WeibullLaw] = field(default_factory=dict)
    window: int | None = None


@dataclass(frozen=True)
class TransitionDef:
    source: str
    event: str
    target: str


@dataclass(frozen=True)
class FaultLeaf:
    fault: str


@dataclass(frozen=True)
class FaultGate:
    op: str  # "and" | "or"
    children: tuple


FaultTree = Union[FaultLeaf, FaultGate]


def evaluate_tree(tree: FaultTree, faults: Iterable[str]) -> bool:
    """Whether the failure condition holds once ``faults`` have occurred."""
    faults = set(faults)
    if isinstance(tree, FaultLeaf):
        return tree.fault in faults
    results = (evaluate_tree(c, faults) for c in tree.children)
    return all(results) if tree.op == "and" else any(results)


def tree_faults(tree: FaultTree) -> set[str]:
    if isinstance(tree, FaultLeaf):
        return {tree.fault}
    out: set[str] = set()
    for c in tree.children:
        out |= tree_faults(c)
    return out


@dataclass(frozen=True, eq=False)
class HybridModel:
    events: tuple
    modes: tuple
    transitions: tuple
    initial_mode: str
    initial_state: np.ndarray
    failure_tree: FaultTree
    sampling_period: float = 1.0
    p_max: float = 0.5
    p_max_per_fault: Mapping[str, float] = field(default_factory=dict)
    signature_seed: int | None = None
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        x0 = np.array(self.initial_state, dtype=float).reshape(-1)
        x0.setflags(write=False)
        object.__setattr__(self, "initial_state", x0)

    @cached_property
    def event(self) -> dict[str, EventDef]:
        return {e.id: e for e in self.events}

    @cached_property
    def mode(self) -> dict[str, ModeDef]:
        return {m.id: m for m in self.modes}

    @cached_property
    def mode_ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.modes)

    @cached_property
    def fault_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.events if e.fault)

    @cached_property
    def delta(self) -> dict[tuple[str, str], str]:
        """Transition function as a ``(source, event) -> target`` map."""
        return {(t.source, t.event): t.target for t in self.transitions}

    def successor(self, mode: str, event: str) -> str | None:
        return self.delta.get((mode, event))

    def p_max_for(self, fault: str) -> float:
        return self.p_max_per_fault.get(fault, self.p_max)

    @property
    def n_x(self) -> int:
        return self.modes[0].dynamics.n_x

    @property
    def n_u(self) -> int:
        return self.modes[0].dynamics.n_u

    @property
    def n_y(self) -> int:
        return self.modes[0].dynamics.n_y

    @cached_property
    def fingerprint(self) -> str:
        blob = json.dumps(model_to_dict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# JSON (de)serialization
# ---------------------------------------------------------------------------

_TOP_REQUIRED = {
    "events",
    "modes",
    "transitions",
    "initial",
    "failure_tree",
    "sampling_period",
    "p_max",
}
_TOP_OPTIONAL = {"p_max_per_fault", "signature_seed", "description"}
_EVENT_KEYS = ({"id", "observable"}, {"fault"})
_MODE_KEYS = ({"id", "kind", "dynamics"}, {"faults", "aging", "window"})
_LAW_KEYS = ({"beta", "eta"}, {"gamma"})
_TRANSITION_KEYS = ({"source", "event", "target"}, set())
_INITIAL_KEYS = ({"mode", "state"}, set())


def _check_keys(obj, keys, where: str) -> None:
    required, optional = keys
    if not isinstance(obj, dict):
        raise ModelParseError(f"{where}: expected an object")
    missing = required - obj.keys()
    if missing:
        raise ModelParseError(f"{where}: missing key(s) {sorted(missing)}")
    unknown = obj.keys() - required - optional
    if unknown:
        raise ModelParseError(f"{where}: unknown key(s) {sorted(unknown)}")


def _number(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ModelParseError(f"{where}: expected a number")
    return float(v)


def _matrix(v, where: str) -> np.ndarray:
    if not isinstance(v, list) or not all(isinstance(r, list) for r in v):
        raise ModelParseError(f"{where}: expected a row-major nested array")
    lengths = {len(r) for r in v}
    if len(lengths) > 1:
        raise ModelParseError(f"{where}: ragged rows")
    for r in v:
        for x in r:
            _number(x, where)
    a = np.array(v, dtype=float)
    return a.reshape(len(v), lengths.pop() if lengths else 0)


def _tree_from(obj, where: str = "failure_tree") -> FaultTree:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ModelParseError(f"{where}: expected one of {{'and'|'or'|'fault': ...}}")
    (key, val), = obj.items()
    if key == "fault":
        if not isinstance(val, str):
            raise ModelParseError(f"{where}: fault leaf must name an event")
        return FaultLeaf(val)
    if key in ("and", "or"):
        if not isinstance(val, list):
            raise ModelParseError(f"{where}.{key}: expected a list")
        return FaultGate(key, tuple(_tree_from(c, f"{where}.{key}[{i}]") for i, c in enumerate(val)))
    raise ModelParseError(f"{where}: unknown key {key!r}")


def _tree_to(tree: FaultTree) -> dict:
    if isinstance(tree, FaultLeaf):
        return {"fault": tree.fault}
    return {tree.op: [_tree_to(c) for c in tree.children]}


def model_from_dict(doc: dict) -> HybridModel:
    """Build a model from its JSON document form (no invariant checks)."""
    _check_keys(doc, (_TOP_REQUIRED, _TOP_OPTIONAL), "model")

    events = []
    if not isinstance(doc["events"], list):
        raise ModelParseError("events: expected a list")
    for i, e in enumerate(doc["events"]):
        _check_keys(e, _EVENT_KEYS, f"events[{i}]")
        if not isinstance(e["id"], str) or not isinstance(e["observable"], bool):
            raise ModelParseError(f"events[{i}]: bad field types")
        fault = e.get("fault", False)
        if not isinstance(fault, bool):
            raise ModelParseError(f"events[{i}].fault: expected a boolean")
        events.append(EventDef(e["id"], e["observable"], fault))

    modes = []
    if not isinstance(doc["modes"], list) or not doc["modes"]:
        raise ModelParseError("modes: expected a non-empty list")
    for i, m in enumerate(doc["modes"]):
        where = f"modes[{i}]"
        _check_keys(m, _MODE_KEYS, where)
        if not isinstance(m["id"], str) or not isinstance(m["kind"], str):
            raise ModelParseError(f"{where}: bad field types")
        dyn = m["dynamics"]
        _check_keys(dyn, ({"A", "B", "C", "D"}, set()), f"{where}.dynamics")
        dynamics = LinearDynamics(
            *(_matrix(dyn[n], f"{where}.dynamics.{n}") for n in "ABCD")
        )
        faults = m.get("faults", [])
        if not isinstance(faults, list) or not all(isinstance(f, str) for f in faults):
            raise ModelParseError(f"{where}.faults: expected a list of event ids")
        aging = {}
        raw_aging = m.get("aging", {})
        if not isinstance(raw_aging, dict):
            raise ModelParseError(f"{where}.aging: expected an object")
        for fid, law in raw_aging.items():
            _check_keys(law, _LAW_KEYS, f"{where}.aging.{fid}")
            aging[fid] = WeibullLaw(
                _number(law["beta"], f"{where}.aging.{fid}.beta"),
                _number(law["eta"], f"{where}.aging.{fid}.eta"),
                _number(law.get("gamma", 0.0), f"{where}.aging.{fid}.gamma"),
            )
        window = m.get("window")
        if window is not None and (isinstance(window, bool) or not isinstance(window, int)):
            raise ModelParseError(f"{where}.window: expected an integer")
        modes.append(
            ModeDef(m["id"], m["kind"], dynamics, frozenset(faults), aging, window)
        )

    transitions = []
    if not isinstance(doc["transitions"], list):
        raise ModelParseError("transitions: expected a list")
    for i, t in enumerate(doc["transitions"]):
        _check_keys(t, _TRANSITION_KEYS, f"transitions[{i}]")
        if not all(isinstance(t[k], str) for k in ("source", "event", "target")):
            raise ModelParseError(f"transitions[{i}]: fields must be strings")
        transitions.append(TransitionDef(t["source"], t["event"], t["target"]))

    init = doc["initial"]
    _check_keys(init, _INITIAL_KEYS, "initial")
    if not isinstance(init["mode"], str) or not isinstance(init["state"], list):
        raise ModelParseError("initial: bad field types")
    state = [_number(v, "initial.state") for v in init["state"]]

    per_fault = doc.get("p_max_per_fault", {})
    if not isinstance(per_fault, dict):
        raise ModelParseError("p_max_per_fault: expected an object")
    per_fault = {k: _number(v, f"p_max_per_fault.{k}") for k, v in per_fault.items()}

    seed = doc.get("signature_seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ModelParseError("signature_seed: expected an integer")
    description = doc.get("description", "")
    if not isinstance(description, str):
        raise ModelParseError("description: expected a string")

    return HybridModel(
        events=events,
        modes=modes,
        transitions=transitions,
        initial_mode=init["mode"],
        initial_state=state,
        failure_tree=_tree_from(doc["failure_tree"]),
        sampling_period=_number(doc["sampling_period"], "sampling_period"),
        p_max=_number(doc["p_max"], "p_max"),
        p_max_per_fault=per_fault,
        signature_seed=seed,
        description=description,
    )


def _law_dict(law: WeibullLaw) -> dict:
    return {"beta": law.beta, "eta": law.eta, "gamma": law.gamma}


def model_to_dict(model: HybridModel) -> dict:
    doc = {
        "events": [
            {"id": e.id, "observable": e.observable, "fault": e.fault}
            for e in model.events
        ],
        "modes": [],
        "transitions": [
            {"source": t.source, "event": t.event, "target": t.target}
            for t in model.transitions
        ],
        "initial": {"mode": model.initial_mode, "state": model.initial_state.tolist()},
        "failure_tree": _tree_to(model.failure_tree),
        "sampling_period": model.sampling_period,
        "p_max": model.p_max,
    }
    for m in model.modes:
        md = {
            "id": m.id,
            "kind": m.kind,
            "faults": sorted(m.faults),
            "dynamics": m.dynamics.to_dict(),
            "aging": {f: _law_dict(law) for f, law in m.aging.items()},
        }
        if m.window is not None:
            md["window"] = m.window
        doc["modes"].append(md)
    if model.p_max_per_fault:
        doc["p_max_per_fault"] = dict(model.p_max_per_fault)
    if model.signature_seed is not None:
        doc["signature_seed"] = model.signature_seed
    if model.description:
        doc["description"] = model.description
    return doc


def load_model(path: str | Path, *, check: bool = True) -> HybridModel:
    """Read and validate a model file.

    Raises ``ModelParseError`` on malformed input and
    ``ModelValidationError`` (listing every violation) when ``check`` is
    true and the model breaks an invariant.
    """
    try:
        text = Path(path).read_bytes().decode("utf-8")
        doc = json.loads(text)
    except UnicodeDecodeError as exc:
        raise ModelParseError(f"{path}: not valid UTF-8 ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"{path}: {exc}") from exc
    model = model_from_dict(doc)
    if check:
        problems = validate(model)
        if problems:
            raise ModelValidationError(problems)
    return model


def save_model(model: HybridModel, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(model_to_dict(model), indent=2) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _validate_law(law: WeibullLaw, where: str) -> list[str]:
    out = []
    if not (law.beta > 0 and math.isfinite(law.beta)):
        out.append(f"{where}: beta must be > 0")
    if not (law.eta > 0 and math.isfinite(law.eta)):
        out.append(f"{where}: eta must be > 0")
    if not math.isfinite(law.gamma):
        out.append(f"{where}: gamma must be finite")
    return out


def _validate_tree(tree, faults: set[str], out: list[str]) -> None:
    if isinstance(tree, FaultLeaf):
        if tree.fault not in faults:
            out.append(f"failure tree references unknown fault {tree.fault!r}")
        return
    if tree.op not in ("and", "or"):
        out.append(f"failure tree has unknown gate {tree.op!r}")
    if not tree.children:
        out.append(f"failure tree has an empty {tree.op!r} gate")
    for c in tree.children:
        _validate_tree(c, faults, out)


def validate(model: HybridModel) -> list[str]:
    """All invariant violations of ``model``; empty when the model is valid."""
    out: list[str] = []

    seen = set()
    for e in model.events:
        if e.id in seen:
            out.append(f"duplicate event id {e.id!r}")
        seen.add(e.id)
        if e.fault and e.observable:
            out.append(f"fault must be unobservable: event {e.id!r}")
    faults = {e.id for e in model.events if e.fault}

    if not model.modes:
        out.append("model has no modes")
        return out
    seen = set()
    ref_dims = None
    for m in model.modes:
        where = f"mode {m.id!r}"
        if m.id in seen:
            out.append(f"duplicate mode id {m.id!r}")
        seen.add(m.id)
        if m.kind not in MODE_KINDS:
            out.append(f"{where}: unknown kind {m.kind!r}")
        shape = m.dynamics.shape_errors()
        out.extend(f"{where}: {s}" for s in shape)
        if not shape:
            dims = (m.dynamics.n_x, m.dynamics.n_u, m.dynamics.n_y)
            if ref_dims is None:
                ref_dims = dims
            elif dims != ref_dims:
                out.append(
                    f"{where}: dimensions (n_x, n_u, n_y)={dims} differ from {ref_dims}"
                )
        for f in sorted(m.faults):
            if f not in faults:
                out.append(f"{where}: fault set lists {f!r}, which is not a fault event")
        if m.kind == "nominal" and m.faults:
            out.append(f"{where}: nominal mode must contain no faults")
        if m.kind in ("faulty", "failure") and not m.faults:
            out.append(f"{where}: {m.kind} mode must contain at least one fault")
        if m.window is not None and m.window < 0:
            out.append(f"{where}: window length must be >= 0")
        enabled = {
            t.event for t in model.transitions if t.source == m.id and t.event in faults
        }
        for f, law in sorted(m.aging.items()):
            if f not in faults:
                out.append(f"{where}: aging law for unknown fault {f!r}")
                continue
            if f in m.faults:
                out.append(f"{where}: aging law for contained (permanent) fault {f!r}")
            elif f not in enabled:
                out.append(f"{where}: aging law for {f!r} but no transition on it")
            out.extend(_validate_law(law, f"{where}: law for {f!r}"))
        for f in sorted(enabled - set(m.aging)):
            out.append(f"{where}: no aging law for enabled fault {f!r}")

    # transitions
    pairs = set()
    for t in model.transitions:
        at = f"({t.source} --{t.event}--> {t.target})"
        bad = False
        if t.source not in model.mode:
            out.append(f"transition {at}: unknown source mode")
            bad = True
        if t.target not in model.mode:
            out.append(f"transition {at}: unknown target mode")
            bad = True
        if t.event not in model.event:
            out.append(f"transition {at}: unknown event")
            bad = True
        if (t.source, t.event) in pairs:
            out.append(f"T not a partial function at ({t.source}, {t.event})")
        pairs.add((t.source, t.event))
        if bad:
            continue
        src, dst = model.mode[t.source], model.mode[t.target]
        if t.event in faults:
            if src.kind == "failure":
                out.append(f"unidirectionality violated at {at}: fault leaves a failure mode")
            elif t.event in src.faults:
                out.append(f"unidirectionality violated at {at}: fault already contained in source")
            elif not (src.faults | {t.event}) <= dst.faults:
                out.append(
                    f"unidirectionality violated at {at}: target faults "
                    f"{sorted(dst.faults)} do not contain {sorted(src.faults | {t.event})}"
                )
        elif src.faults != dst.faults:
            out.append(f"fault set changed by non-fault event at {at}")

    # initial condition
    init = model.mode.get(model.initial_mode)
    if init is None:
        out.append(f"initial mode {model.initial_mode!r} does not exist")
    else:
        if init.kind != "nominal":
            out.append(f"initial mode {init.id!r} must be nominal")
        for f, law in sorted(init.aging.items()):
            if law.gamma != 0.0:
                out.append(f"initial mode law for {f!r} must have gamma = 0")
    if ref_dims is not None and model.initial_state.shape != (ref_dims[0],):
        out.append(
            f"initial state has length {model.initial_state.size}, expected n_x={ref_dims[0]}"
        )
    if not np.all(np.isfinite(model.initial_state)):
        out.append("initial state has non-finite entries")

    _validate_tree(model.failure_tree, faults, out)

    if not (model.sampling_period > 0 and math.isfinite(model.sampling_period)):
        out.append("sampling_period must be > 0")
    if not 0.0 < model.p_max < 1.0:
        out.append("p_max must be in (0, 1)")
    for f, p in sorted(model.p_max_per_fault.items()):
        if f not in faults:
            out.append(f"p_max_per_fault names unknown fault {f!r}")
        if not 0.0 < p < 1.0:
            out.append(f"p_max_per_fault[{f!r}] must be in (0, 1)")
    return out


# ---------------------------------------------------------------------------
# Underlying discrete event system
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteAutomaton:
    """Plain finite automaton ``(Q, Sigma, T, q0)`` with observability flags."""

    states: tuple
    events: tuple
    observable: frozenset
    faults: frozenset
    transitions: Mapping[tuple[str, str], str]
    initial: str


def underlying_des(model: HybridModel) -> DiscreteAutomaton:
    return DiscreteAutomaton(
        states=model.mode_ids,
        events=tuple(e.id for e in model.events),
        observable=frozenset(e.id for e in model.events if e.observable),
        faults=frozenset(model.fault_ids),
        transitions=dict(model.delta),
        initial=model.initial_mode,
    )
