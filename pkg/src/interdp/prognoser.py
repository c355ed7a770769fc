"""Weibull aging, fault-date prediction and RUL.

Each fault carries the Weibull law of the mode the system is (believed
to be) in. When the mode changes, the new mode's law is relocated in
time (its location ``gamma`` is shifted) so that its CDF at the switch
instant equals the probability already accumulated. That relocation is
how past aging is remembered across modes.

All probabilities are computed from the closed-form CDF; the pdf is only
exposed for plotting and for tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .model import FaultTree, HybridModel, WeibullLaw, evaluate_tree

__all__ = [
    "DomainError",
    "ThresholdExceededError",
    "ModelIncompleteError",
    "weibull_pdf",
    "weibull_cdf",
    "weibull_quantile",
    "predict_fault_date",
    "shift_gamma",
    "AgingEntry",
    "PredictedFault",
    "PrognosisSequence",
    "PrognosisVector",
    "initial_aging",
    "rebase_aging",
    "propagate_sequence",
    "rul",
    "update_on_diagnosis",
    "hypothesis_prior",
]


class DomainError(ValueError):
    """Weibull parameters outside their domain (beta <= 0 or eta <= 0)."""


class ThresholdExceededError(ValueError):
    """The accumulated probability already reached the threshold."""


class ModelIncompleteError(ValueError):
    """A predicted mode lacks a fault transition or aging law."""


def _check(law: WeibullLaw) -> None:
    if not (law.beta > 0) or not (law.eta > 0):
        raise DomainError(f"Weibull law needs beta > 0 and eta > 0, got {law}")


def weibull_pdf(law: WeibullLaw, t: float) -> float:
    """Three-parameter Weibull density; 0 before the location ``gamma``.

    For ``beta < 1`` the density is unbounded at ``t = gamma`` and this
    returns ``inf`` there.
    """
    _check(law)
    if t < law.gamma:
        return 0.0
    z = (t - law.gamma) / law.eta
    if z == 0.0:
        if law.beta < 1:
            return math.inf
        return 1.0 / law.eta if law.beta == 1 else 0.0
    return (law.beta / law.eta) * z ** (law.beta - 1) * math.exp(-(z**law.beta))


def weibull_cdf(law: WeibullLaw, t: float) -> float:
    _check(law)
    if t <= law.gamma:
        return 0.0
    z = (t - law.gamma) / law.eta
    return -math.expm1(-(z**law.beta))


def weibull_quantile(law: WeibullLaw, p: float) -> float:
    """Date at which the CDF of ``law`` reaches ``p`` (``0 <= p < 1``)."""
    _check(law)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"probability must be in [0, 1), got {p}")
    return law.gamma + law.eta * (-math.log1p(-p)) ** (1.0 / law.beta)


def predict_fault_date(law: WeibullLaw, p_start: float, p_max: float) -> float:
    """Smallest date where the fault probability reaches ``p_max``.

    ``p_start`` is the probability accumulated so far. It only serves as a
    guard: the law is expected to be already relocated so that it passes
    through ``p_start`` now, in which case integrating from the switch and
    adding ``p_start`` is the same as inverting the CDF directly.
    """
    if not 0.0 <= p_start:
        raise ValueError(f"p_start must be >= 0, got {p_start}")
    if not p_max < 1.0:
        raise ValueError(f"p_max must be < 1, got {p_max}")
    if p_start >= p_max:
        raise ThresholdExceededError(
            f"accumulated probability {p_start} already reached p_max={p_max}"
        )
    return weibull_quantile(law, p_max)


def shift_gamma(reached_p: float, new_law_base: WeibullLaw, switch_date: float) -> WeibullLaw:
    """Relocate ``new_law_base`` so that its CDF at ``switch_date`` is ``reached_p``."""
    if not 0.0 <= reached_p < 1.0:
        raise ValueError(f"reached probability must be in [0, 1), got {reached_p}")
    base = new_law_base.with_gamma(0.0)
    delta = weibull_quantile(base, reached_p)
    return new_law_base.with_gamma(switch_date - delta)


# ---------------------------------------------------------------------------
# Aging state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AgingEntry:
    """Aging of one fault along one hypothesis lineage.

    ``law`` is the law in force, attached to ``mode``. While pending, the
    accumulated probability at any date is ``weibull_cdf(law, date)``.
    """

    fault: str
    law: WeibullLaw | None
    mode: str
    status: str = "pending"  # or "occurred"
    date: float | None = None

    @property
    def pending(self) -> bool:
        return self.status == "pending"

    def accumulated_p(self, now: float) -> float:
        if not self.pending:
            return 1.0
        return weibull_cdf(self.law, now)


AgingState = Mapping[str, AgingEntry]

# p may round to 1.0 for laws far past their life; keep shift_gamma finite.
_P_CEIL = math.nextafter(1.0, 0.0)


def initial_aging(model: HybridModel) -> dict[str, AgingEntry]:
    q0 = model.mode[model.initial_mode]
    return {
        f: AgingEntry(f, q0.aging[f], q0.id)
        for f in model.fault_ids
        if f in q0.aging
    }


def rebase_aging(
    aging: AgingState,
    model: HybridModel,
    mode: str,
    faults: Iterable[str],
    t: float,
) -> dict[str, AgingEntry]:
    """Aging after the system is found in ``mode`` with ``faults`` at ``t``.

    Faults in ``faults`` become occurred at ``t`` (unless they already
    were). Every other pending fault switches to the law of ``mode``,
    relocated to keep its accumulated probability continuous. Entries
    already attached to ``mode`` are left untouched. In a failure mode no
    further fault is anticipated and pending laws are frozen as they are.
    """
    m = model.mode[mode]
    faults = set(faults)
    out: dict[str, AgingEntry] = {}
    for f in model.fault_ids:
        e = aging.get(f)
        if f in faults:
            if e is not None and not e.pending:
                out[f] = e
            else:
                out[f] = AgingEntry(f, e.law if e else None, mode, "occurred", t)
            continue
        if e is None or not e.pending:
            if e is not None:
                out[f] = e
            continue
        if e.mode == mode or m.kind == "failure":
            out[f] = e
            continue
        base = m.aging.get(f)
        if base is None:
            raise ModelIncompleteError(
                f"mode {mode!r} has no aging law for pending fault {f!r}"
            )
        p = e.accumulated_p(t)
        out[f] = AgingEntry(f, shift_gamma(min(p, _P_CEIL), base, t), mode)
    return out


# ---------------------------------------------------------------------------
# Sequence prediction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PredictedFault:
    fault: str
    date: float
    probability: float  # CDF value of the law in force at ``date``
    mode: str  # mode from which the fault is predicted to occur


@dataclass(frozen=True)
class PrognosisSequence:
    entries: tuple[PredictedFault, ...] = ()

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def faults(self) -> tuple[str, ...]:
        return tuple(e.fault for e in self.entries)

    @property
    def dates(self) -> tuple[float, ...]:
        return tuple(e.date for e in self.entries)


@dataclass(frozen=True)
class PrognosisVector:
    sequences: tuple[PrognosisSequence, ...]
    ruls: tuple[float | None, ...]

    def __len__(self):
        return len(self.sequences)


def _threshold(model: HybridModel, fault: str, p_max: float | None) -> float:
    return p_max if p_max is not None else model.p_max_for(fault)


def propagate_sequence(
    model: HybridModel,
    mode: str,
    now: float,
    aging: AgingState,
    p_max: float | None = None,
) -> PrognosisSequence:
    """Greedy most-likely dated fault sequence from ``mode`` at ``now``.

    Pending laws in ``aging`` must already be attached to ``mode`` (see
    ``rebase_aging``). At each stage the fault with the earliest date
    fires (ties broken by fault id), the system moves along its
    transition, and the remaining faults are relocated into the new
    mode's laws at that date. Stops when nothing is pending or a failure
    mode is reached.
    """
    current = model.mode[mode]
    t = now
    state = dict(aging)
    entries: list[PredictedFault] = []
    while True:
        pending = sorted(f for f, e in state.items() if e.pending)
        if not pending or current.kind == "failure":
            break
        dates = {}
        for f in pending:
            e = state[f]
            if e.mode != current.id:
                raise ModelIncompleteError(
                    f"aging law of {f!r} is attached to {e.mode!r}, not {current.id!r}"
                )
            threshold = _threshold(model, f, p_max)
            p_now = e.accumulated_p(t)
            if p_now >= threshold:
                dates[f] = t  # overdue: predicted to happen right away
            else:
                dates[f] = max(predict_fault_date(e.law, p_now, threshold), t)
        f_min = min(pending, key=lambda f: (dates[f], f))
        d_min = dates[f_min]
        law = state[f_min].law
        entries.append(PredictedFault(f_min, d_min, weibull_cdf(law, d_min), current.id))
        target = model.successor(current.id, f_min)
        if target is None:
            raise ModelIncompleteError(
                f"mode {current.id!r} has no transition on fault {f_min!r}"
            )
        state = rebase_aging(state, model, target, model.mode[target].faults | {f_min}, d_min)
        current = model.mode[target]
        t = d_min
    return PrognosisSequence(tuple(entries))


def rul(
    sequence: PrognosisSequence | Sequence[tuple[str, float]],
    already_occurred: Iterable[str],
    tree: FaultTree,
    now: float,
) -> float | None:
    """Time from ``now`` until the failure tree is first satisfied, if ever."""
    occurred = set(already_occurred)
    if evaluate_tree(tree, occurred):
        return 0.0
    items = [(e.fault, e.date) if isinstance(e, PredictedFault) else tuple(e) for e in sequence]
    for fault, date in sorted(items, key=lambda fd: (fd[1], fd[0])):
        occurred.add(fault)
        if evaluate_tree(tree, occurred):
            return date - now
    return None


def hypothesis_prior(aging: AgingState, faults: Iterable[str], t: float) -> float:
    """Independent-fault probability that exactly ``faults`` occurred by ``t``.

    Faults already marked occurred in ``aging`` count as certain.
    """
    faults = set(faults)
    score = 1.0
    for f, e in aging.items():
        if not e.pending:
            if f not in faults:
                return 0.0
            continue
        p = e.accumulated_p(t)
        score *= p if f in faults else 1.0 - p
    return score


def update_on_diagnosis(
    parents: Sequence[AgingState],
    delta: Sequence,
    t_k: float,
    model: HybridModel,
    p_max: float | None = None,
) -> tuple[list[dict[str, AgingEntry]], PrognosisVector]:
    """Re-base aging onto each hypothesis of ``delta`` and predict.

    ``parents[j]`` is the aging state of the lineage that leads to
    hypothesis ``delta[j]`` (anything with ``mode`` and ``faults``
    attributes). Returns the per-hypothesis aging states and the
    prognosis vector, index-aligned with ``delta``.
    """
    if len(parents) != len(delta):
        raise ValueError("one parent aging state is needed per hypothesis")
    states, seqs, ruls = [], [], []
    for parent, hyp in zip(parents, delta):
        aging = rebase_aging(parent, model, hyp.mode, hyp.faults, t_k)
        seq = propagate_sequence(model, hyp.mode, t_k, aging, p_max)
        occurred = {f for f, e in aging.items() if not e.pending} | set(hyp.faults)
        states.append(aging)
        seqs.append(seq)
        ruls.append(rul(seq, occurred, model.failure_tree, t_k))
    return states, PrognosisVector(tuple(seqs), tuple(ruls))
