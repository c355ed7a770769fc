"""Ground-truth plant simulator driven by a scenario file.

Time advances in ticks ``t_k = k * sampling_period``. At each tick the
scheduled events due by then fire first (switching the true mode), then
the measurement is taken with the dynamics of the resulting mode and
the state is advanced. The continuous state is carried over unchanged
across mode switches.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .engine import ObservationRecord
from .model import HybridModel
from .parity import FilterConfig
from .signals import prbs

__all__ = [
    "InputSignal",
    "Scenario",
    "ScenarioError",
    "GroundTruth",
    "simulate",
    "load_scenario",
    "scenario_from_dict",
    "write_observations",
    "read_observations",
    "write_ground_truth",
]


class ScenarioError(ValueError):
    """Malformed scenario, or an injected event impossible in the true mode."""


@dataclass(frozen=True)
class InputSignal:
    """``constant``, ``step`` (``before`` until ``time``, then ``after``) or ``prbs``."""

    kind: str = "constant"
    value: tuple = ()
    time: float = 0.0
    before: tuple = ()
    after: tuple = ()
    seed: int = 0
    amplitude: float = 1.0
    period: int = 1

    def samples(self, times: np.ndarray, n_u: int) -> np.ndarray:
        n = len(times)
        if self.kind == "constant":
            v = self.value or (0.0,) * n_u
            return np.tile(np.asarray(v, float).reshape(1, n_u), (n, 1))
        if self.kind == "step":
            lo = np.asarray(self.before or (0.0,) * n_u, float)
            hi = np.asarray(self.after or (1.0,) * n_u, float)
            return np.where((times >= self.time)[:, None], hi[None, :], lo[None, :])
        if self.kind == "prbs":
            return prbs(n, n_u, self.seed, self.amplitude, self.period)
        raise ScenarioError(f"unknown input signal kind {self.kind!r}")


@dataclass(frozen=True)
class Scenario:
    duration: float
    input_signal: InputSignal = field(default_factory=InputSignal)
    injected_events: tuple[tuple[float, str], ...] = ()
    noise_std: tuple[float, ...] = ()
    noise_seed: int = 0
    real_time_scale: float = 1.0
    filter: FilterConfig | None = None


@dataclass
class GroundTruth:
    t: np.ndarray
    modes: list[str]
    states: np.ndarray
    faults: list[frozenset]
    noise_seed: int = 0


_SCENARIO_KEYS = {"duration", "input", "events", "noise_std", "noise_seed", "real_time_scale", "filter", "description"}
_INPUT_KEYS = {"kind", "value", "time", "before", "after", "seed", "amplitude", "period"}


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario: expected an object")
    unknown = doc.keys() - _SCENARIO_KEYS
    if unknown:
        raise ScenarioError(f"scenario: unknown key(s) {sorted(unknown)}")
    if "duration" not in doc:
        raise ScenarioError("scenario: missing 'duration'")
    raw_in = doc.get("input", {"kind": "constant"})
    if not isinstance(raw_in, dict) or raw_in.keys() - _INPUT_KEYS:
        raise ScenarioError("scenario.input: bad input signal description")
    sig = InputSignal(
        kind=raw_in.get("kind", "constant"),
        value=tuple(raw_in.get("value", ())),
        time=float(raw_in.get("time", 0.0)),
        before=tuple(raw_in.get("before", ())),
        after=tuple(raw_in.get("after", ())),
        seed=int(raw_in.get("seed", 0)),
        amplitude=float(raw_in.get("amplitude", 1.0)),
        period=int(raw_in.get("period", 1)),
    )
    events = []
    for i, ev in enumerate(doc.get("events", [])):
        if not isinstance(ev, dict) or set(ev) != {"time", "event"}:
            raise ScenarioError(f"scenario.events[{i}]: expected {{'time', 'event'}}")
        events.append((float(ev["time"]), str(ev["event"])))
    noise = doc.get("noise_std", ())
    noise = (float(noise),) if isinstance(noise, (int, float)) else tuple(float(v) for v in noise)
    flt = doc.get("filter")
    if flt is not None:
        if not isinstance(flt, dict) or flt.keys() - {"epsilon", "debounce", "settle"}:
            raise ScenarioError("scenario.filter: expected epsilon/debounce/settle")
        flt = FilterConfig(**flt)
    return Scenario(
        duration=float(doc["duration"]),
        input_signal=sig,
        injected_events=tuple(sorted(events, key=lambda te: te[0])),
        noise_std=noise,
        noise_seed=int(doc.get("noise_seed", 0)),
        real_time_scale=float(doc.get("real_time_scale", 1.0)),
        filter=flt,
    )


def load_scenario(path: str | Path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_bytes().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return scenario_from_dict(doc)


def simulate(model: HybridModel, scenario: Scenario) -> tuple[list[ObservationRecord], GroundTruth]:
    Ts = model.sampling_period
    n = int(math.floor(scenario.duration / Ts + 1e-9)) + 1
    times = np.arange(n) * Ts
    U = scenario.input_signal.samples(times, model.n_u)
    std = np.asarray(scenario.noise_std or (0.0,), float)
    if std.size == 1:
        std = np.full(model.n_y, std.item())
    if std.shape != (model.n_y,):
        raise ScenarioError(f"noise_std has {std.size} entries, expected {model.n_y}")
    rng = np.random.default_rng(scenario.noise_seed)

    pending = list(scenario.injected_events)
    mode = model.initial_mode
    faults = frozenset()
    x = model.initial_state.astype(float).copy()
    records, modes, states, fault_log = [], [], np.empty((n, model.n_x)), []
    for k, t in enumerate(times):
        observed = []
        while pending and pending[0][0] <= t + 1e-9 * Ts:
            _, ev = pending.pop(0)
            target = model.successor(mode, ev)
            if target is None:
                raise ScenarioError(f"event {ev!r} at t={t:g} has no transition from mode {mode!r}")
            mode = target
            if model.event[ev].fault:
                faults = faults | {ev}
            if model.event[ev].observable:
                observed.append(ev)
        dyn = model.mode[mode].dynamics
        u = U[k]
        y = dyn.C @ x + dyn.D @ u
        if np.any(std > 0):
            y = y + rng.normal(0.0, 1.0, model.n_y) * std
        records.append(ObservationRecord(float(t), tuple(u.tolist()), tuple(y.tolist()), tuple(observed)))
        modes.append(mode)
        states[k] = x
        fault_log.append(faults)
        x = dyn.A @ x + dyn.B @ u
    if pending:
        raise ScenarioError(f"event {pending[0][1]!r} scheduled after the end of the scenario")
    return records, GroundTruth(times, modes, states, fault_log, scenario.noise_seed)


def _header(n_u: int, n_y: int) -> list[str]:
    return ["t", *(f"u{i}" for i in range(n_u)), *(f"y{i}" for i in range(n_y)), "events"]


def write_observations(records: Sequence[ObservationRecord], out: str | Path | TextIO) -> None:
    """CSV with columns ``t, u0.., y0.., events`` (events joined by ``;``)."""
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="", encoding="utf-8") as fh:
            write_observations(records, fh)
        return
    n_u = len(records[0].u) if records else 0
    n_y = len(records[0].y) if records else 0
    w = csv.writer(out, lineterminator="\n")
    w.writerow(_header(n_u, n_y))
    for r in records:
        w.writerow([repr(r.t), *map(repr, r.u), *map(repr, r.y), ";".join(r.discrete_events)])


def read_observations(src: str | Path | TextIO) -> list[ObservationRecord]:
    if isinstance(src, (str, Path)):
        with open(src, newline="", encoding="utf-8") as fh:
            return read_observations(fh)
    reader = csv.reader(src)
    header = next(reader, None)
    if not header or header[0] != "t" or header[-1] != "events":
        raise ScenarioError("observation CSV must have columns t, u0.., y0.., events")
    u_cols = [i for i, h in enumerate(header) if h.startswith("u")]
    y_cols = [i for i, h in enumerate(header) if h.startswith("y")]
    out = []
    for row in reader:
        if not row:
            continue
        events = tuple(e for e in row[-1].split(";") if e)
        out.append(
            ObservationRecord(
                float(row[0]),
                tuple(float(row[i]) for i in u_cols),
                tuple(float(row[i]) for i in y_cols),
                events,
            )
        )
    return out


def write_ground_truth(truth: GroundTruth, out: str | Path) -> None:
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "mode", "faults", *(f"x{i}" for i in range(truth.states.shape[1]))])
        for t, m, f, x in zip(truth.t, truth.modes, truth.faults, truth.states):
            w.writerow([repr(float(t)), m, ";".join(sorted(f)), *map(repr, x.tolist())])
