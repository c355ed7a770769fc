"""Behavior automaton and diagnoser of the two-nominal-mode example.

Faults are unobservable. Changes in continuous behavior show up as
signature events, which the diagnoser uses to narrow down the set of
(mode, fault label) pairs consistent with what has been observed.
"""

from interdp import build_all, data_path, load_model
from interdp.diagnoser import DiagnoserTracker, dump_text

model = load_model(data_path("two_nominal_model.json"))
bank, ba, diag = build_all(model)

print(f"behavior automaton: {len(ba.states)} states, {len(ba.transitions)} transitions")
print(dump_text(diag))

tracker = DiagnoserTracker(diag)


def show(label):
    hyps = ", ".join(f"{h.mode}{{{','.join(sorted(h.faults))}}}" for h in tracker.diagnosis())
    print(f"{label:28s} {hyps}")


show("initial")
for event in ["a1", ba.sig_event[bank.mode_group["q02"]], ba.sig_event[bank.mode_group["qf1"]]]:
    tracker.step(event)
    show(f"after {event}")
