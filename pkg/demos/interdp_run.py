"""Full run: simulate a scenario, then diagnose and prognose online.

The scenario switches from q01 to q02 at t=20 (observable a1), injects
the hidden fault f1 at t=50, and emits a2 at t=90. At each emission the
run prints the ranked hypotheses, the next predicted fault and the
remaining useful life.
"""

from interdp import build_all, data_path, load_model, load_scenario, run, simulate

model = load_model(data_path("two_nominal_model.json"))
scenario = load_scenario(data_path("two_nominal_scenario.json"))
bank, ba, diag = build_all(model)
records, truth = simulate(model, scenario)

for out in run(model, diag, bank, records):
    mode_now = truth.modes[list(truth.t).index(out.t)]
    events = " ".join(out.events) or "-"
    print(f"t={out.t:5.1f}  true={mode_now:5s}  events={events}")
    for h, seq, rul in zip(out.delta, out.pi.sequences, out.rul):
        nxt = f"{seq[0].fault}@{seq[0].date:.2f}" if len(seq) else "none"
        rul_txt = "never" if rul is None else f"{rul:.2f}"
        print(f"    {h.mode:5s} faults={sorted(h.faults)!s:12s} next={nxt:12s} RUL={rul_txt}")
