"""The interleaved diagnosis/prognosis loop.

Each observation record is pushed through the residual monitor; a
settled change of signature becomes a signature event, which is fed to
the diagnoser tracker before the record's own discrete events. Whenever
the diagnosis changes or a discrete event was observed, every
hypothesis gets its aging re-based and a dated fault sequence, and an
``InterdpOutput`` is emitted.
"""

from __future__ import annotations

import csv
import itertools
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence, TextIO

from .behavior import SignatureMatcher, UnknownSignatureError
from .diagnoser import Diagnoser, DiagnoserTracker, Hypothesis, UnknownModeError, order_hypotheses
from .model import HybridModel
from .parity import ResidualBank, ResidualMonitor
from .prognoser import (
    PrognosisVector,
    hypothesis_prior,
    initial_aging,
    rebase_aging,
    update_on_diagnosis,
)

__all__ = [
    "ObservationRecord",
    "InterdpOutput",
    "ArtifactMismatchError",
    "Hyp1Violation",
    "run",
    "check_hypothesis1",
    "TRACE_COLUMNS",
    "write_trace",
    "read_trace_timing",
    "format_number",
]

TRACE_COLUMNS = ("t", "hypothesis_rank", "mode", "faults", "next_fault", "next_date", "rul", "ct_p")


class ArtifactMismatchError(ValueError):
    """Diagnoser or residual bank were built from a different model."""


@dataclass(frozen=True)
class ObservationRecord:
    t: float
    u: tuple[float, ...]
    y: tuple[float, ...]
    discrete_events: tuple[str, ...] = ()


@dataclass
class InterdpOutput:
    t: float
    delta: list[Hypothesis]
    pi: PrognosisVector
    rul: tuple
    prognosis_compute_time: float
    events: tuple[str, ...] = ()
    unknown: bool = False
    stale: bool = False
    message: str = ""

    def __post_init__(self):
        assert len(self.pi) == len(self.delta) == len(self.rul)


def _compose(first: dict, second: dict) -> dict:
    return {
        new: sorted({p for mid in mids for p in first.get(mid, [mid])}, key=_pkey)
        for new, mids in second.items()
    }


def _pkey(p):
    return (p[0], tuple(sorted(p[1])))


def _commit(model, ba, aging, pair, t):
    # The switch into an intermediate state is only known to have happened
    # now when an observable event caused it; after an unobservable fault
    # aging stays on the old mode until the signature confirms the change.
    state, label = pair
    if state in ba.intermediate and ba.entry_event[state] not in ba.observable:
        return aging
    return rebase_aging(aging, model, ba.state_mode[state], label, t)


def _representative(h: Hypothesis):
    # a pair sitting on the mode itself beats a not-yet-confirmed switch
    return min(h.pairs, key=lambda p: (p[0] != h.mode,) + _pkey(p))


def run(
    model: HybridModel,
    diagnoser: Diagnoser,
    bank: ResidualBank,
    observations: Iterable[ObservationRecord],
    *,
    p_max: float | None = None,
    emit_every_tick: bool = False,
    timer: Callable[[], float] = time.perf_counter,
) -> Iterator[InterdpOutput]:
    """Stream of outputs for an ordered stream of observations.

    The first output describes the initial belief, at the time of the
    first record (or 0 for an empty stream).
    """
    if not (diagnoser.fingerprint == bank.fingerprint == model.fingerprint):
        raise ArtifactMismatchError("diagnoser, residual bank and model do not match")
    ba = diagnoser.ba
    tracker = DiagnoserTracker(diagnoser)
    monitor = ResidualMonitor(bank)
    matcher = SignatureMatcher.for_automaton(ba, settle=bank.settle)

    observations = iter(observations)
    first = next(observations, None)
    t0 = first.t if first is not None else 0.0
    records = itertools.chain([first], observations) if first is not None else iter(())

    base = initial_aging(model)
    aging: dict = {p: _commit(model, ba, base, p, t0) for p in tracker.pairs}
    stale = False

    def emit(t, events, unknown=False, message=""):
        start = timer()
        delta = tracker.diagnosis()
        reps = {h.key: aging[_representative(h)] for h in delta}
        priors = {k: hypothesis_prior(a, k[1], t) for k, a in reps.items()}
        delta = order_hypotheses(delta, priors)
        _, pi = update_on_diagnosis([reps[h.key] for h in delta], delta, t, model, p_max)
        ct = timer() - start
        return InterdpOutput(t, delta, pi, pi.ruls, ct, tuple(events), unknown, stale, message)

    yield emit(t0, ())

    last_t = -math.inf
    for rec in records:
        if not rec.t > last_t:
            raise ValueError(f"observation times must increase strictly (got {rec.t} after {last_t})")
        last_t = rec.t
        if len(rec.y) != model.n_y or len(rec.u) != model.n_u:
            raise ValueError(f"record at t={rec.t}: expected n_u={model.n_u}, n_y={model.n_y}")

        bits = monitor.push(rec.y, rec.u)
        events: list[str] = []
        unknown, message = False, ""
        if bits is not None and not stale:
            try:
                sig = matcher.update(bits)
            except UnknownSignatureError as exc:
                unknown, message = True, str(exc)
            else:
                if sig is not None:
                    events.append(sig)
        events.extend(rec.discrete_events)

        before = [h.key for h in tracker.diagnosis()]
        lineage = None
        if not stale and not unknown:
            for e in events:
                try:
                    tracker.step(e)
                except UnknownModeError as exc:
                    unknown, message = True, str(exc)
                    break
                parents = tracker.last_parents
                lineage = parents if lineage is None else _compose(lineage, parents)
        if lineage is not None:
            aging = {
                new: _commit(model, ba, aging[min(olds, key=_pkey)], new, rec.t)
                for new, olds in lineage.items()
            }
        if unknown:
            tracker.frozen = True
            stale = True
        changed = [h.key for h in tracker.diagnosis()] != before
        # the initial output already stands for the tick at t0
        tick = emit_every_tick and rec.t != t0
        if changed or rec.discrete_events or tick or unknown:
            yield emit(rec.t, events, unknown, message)


@dataclass(frozen=True)
class Hyp1Violation:
    index: int
    t: float
    t_next: float
    ct_p: float
    interval: float
    reason: str


def check_hypothesis1(
    outputs: Sequence, real_time_scale: float = 1.0
) -> list[Hyp1Violation]:
    """Pairs of consecutive outputs where prognosis took longer than the gap.

    ``outputs`` holds ``InterdpOutput`` objects or ``(t, ct_p)`` pairs;
    ``ct_p`` is wall-clock seconds and ``real_time_scale`` converts it to
    model time (model seconds per wall second).
    """
    pts = [(o.t, o.prognosis_compute_time) if isinstance(o, InterdpOutput) else tuple(o) for o in outputs]
    out = []
    for k, ((t, ct), (t_next, _)) in enumerate(zip(pts, pts[1:])):
        interval = t_next - t
        ct_model = ct * real_time_scale
        if interval <= 0:
            out.append(Hyp1Violation(k, t, t_next, ct_model, interval, "zero interval between outputs"))
        elif ct_model > interval:
            out.append(Hyp1Violation(k, t, t_next, ct_model, interval, "prognosis slower than event interval"))
    return out


def format_number(x: float | None) -> str:
    if x is None:
        return ""
    return repr(round(float(x), 9)) if math.isfinite(x) else str(x)


def trace_rows(outputs: Iterable[InterdpOutput]) -> Iterator[list[str]]:
    for o in outputs:
        for rank, (h, seq, r) in enumerate(zip(o.delta, o.pi.sequences, o.rul), start=1):
            nf, nd = (seq[0].fault, format_number(seq[0].date)) if len(seq) else ("", "")
            yield [
                format_number(o.t),
                str(rank),
                h.mode,
                ";".join(sorted(h.faults)),
                nf,
                nd,
                format_number(r),
                format_number(o.prognosis_compute_time),
            ]


def write_trace(outputs: Iterable[InterdpOutput], out: str | Path | TextIO) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="", encoding="utf-8") as fh:
            write_trace(outputs, fh)
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    w.writerows(trace_rows(outputs))


def read_trace_timing(src: str | Path | TextIO) -> list[tuple[float, float]]:
    """``(t, ct_p)`` per output of a trace file (one output per rank-1 row)."""
    if isinstance(src, (str, Path)):
        with open(src, newline="", encoding="utf-8") as fh:
            return read_trace_timing(fh)
    reader = csv.DictReader(src)
    missing = {"t", "hypothesis_rank", "ct_p"} - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"trace is missing column(s) {sorted(missing)}")
    return [
        (float(row["t"]), float(row["ct_p"]) if row["ct_p"] else 0.0)
        for row in reader
        if row["hypothesis_rank"] == "1"
    ]
