import io
import math

import numpy as np
import pytest

from interdp import build_all, data_path
from interdp.diagnoser import Hypothesis
from interdp.engine import (
    ArtifactMismatchError,
    ObservationRecord,
    check_hypothesis1,
    read_trace_timing,
    run,
    write_trace,
)
from interdp.model import WeibullLaw, load_model, model_from_dict, model_to_dict
from interdp.prognoser import initial_aging, update_on_diagnosis, weibull_cdf
from interdp.sim import load_scenario, scenario_from_dict, simulate


@pytest.fixture(scope="module")
def two_nominal():
    m = load_model(data_path("two_nominal_model.json"))
    bank, ba, d = build_all(m)
    return m, bank, ba, d


def q(beta, eta, p):
    return eta * (-math.log(1 - p)) ** (1 / beta)


def relocated_p(p, beta, eta, t0, t1):
    """Probability at t1 after relocating a law of (beta, eta) to pass p at t0."""
    g = t0 - q(beta, eta, p)
    return 1 - math.exp(-(((t1 - g) / eta) ** beta))


def scenario(events=(), duration=120.0, seed=7):
    return scenario_from_dict({
        "duration": duration,
        "input": {"kind": "prbs", "seed": seed},
        "events": [{"time": t, "event": e} for t, e in events],
    })


def test_empty_stream(two_nominal):
    m, bank, ba, d = two_nominal
    outs = list(run(m, d, bank, []))
    assert len(outs) == 1
    o = outs[0]
    assert o.t == 0.0
    assert {(h.mode, h.faults) for h in o.delta} == {
        ("q01", frozenset()), ("qf1", frozenset({"f1"})), ("qf2", frozenset({"f2"}))
    }
    assert o.delta[0].mode == "q01"
    _, pv = update_on_diagnosis([initial_aging(m)], [Hypothesis("q01", frozenset())], 0.0, m)
    assert o.pi.sequences[0] == pv.sequences[0]
    assert o.rul[0] == pv.ruls[0]


def test_nominal_run_constant(two_nominal):
    m, bank, ba, d = two_nominal
    recs, _ = simulate(m, scenario(duration=60.0))
    outs = list(run(m, d, bank, recs))
    assert len(outs) == 1
    every = list(run(m, d, bank, recs, emit_every_tick=True))
    assert len(every) == len(recs)
    assert [o.t for o in every] == [r.t for r in recs]

    def by_key(o):
        return {h.key: (seq.dates, r) for h, seq, r in zip(o.delta, o.pi.sequences, o.rul)}

    nominal = ("q01", frozenset())
    first = by_key(every[0])
    for o in every:
        # the ranking follows the priors; the set of hypotheses does not move
        cur = by_key(o)
        assert cur.keys() == first.keys()
        assert cur[nominal][0] == first[nominal][0]
        assert cur[nominal][1] == pytest.approx(first[nominal][1] - o.t, abs=1e-9)
        # an unconfirmed fault is taken as occurring now: direct prognoser call
        for key, (dates, r) in cur.items():
            _, pv = update_on_diagnosis([initial_aging(m)], [Hypothesis(*key)], o.t, m)
            assert dates == pv.sequences[0].dates
            assert r == pv.ruls[0]


def test_fault_injection_collapses_diagnosis(two_nominal):
    m, bank, ba, d = two_nominal
    recs, truth = simulate(m, scenario([(40.0, "f1")], duration=80.0))
    outs = list(run(m, d, bank, recs))
    t_sig = next(o.t for o in outs if "sig_G3" in o.events)
    assert 40.0 < t_sig <= 40.0 + bank.s_max + bank.settle
    after = [o for o in outs if o.t >= t_sig]
    for o in after:
        assert all("f1" in h.faults for h in o.delta)
    before = outs[0]
    assert len(after[0].pi.sequences[0]) < len(before.pi.sequences[0])
    assert after[0].pi.sequences[0].faults == ("f2",)


def test_two_nominal_scenario_three_stage_prognosis(two_nominal):
    """f2 ages under q01 until a1 at 20, then q02 until f1 is confirmed, then qf1."""
    m, bank, ba, d = two_nominal
    recs, _ = simulate(m, load_scenario(data_path("two_nominal_scenario.json")))
    outs = list(run(m, d, bank, recs))
    confirm = next(o for o in outs if "sig_G3" in o.events)
    t_k = confirm.t
    p20 = 1 - math.exp(-((20 / 600) ** 1.5))
    p_tk = relocated_p(p20, 1.5, 300, 20.0, t_k)
    date = t_k - q(1.5, 150, p_tk) + q(1.5, 150, 0.3)
    i = next(j for j, h in enumerate(confirm.delta) if h.mode == "qf1")
    seq = confirm.pi.sequences[i]
    assert seq.faults == ("f2",)
    assert seq.dates[0] == pytest.approx(date, abs=1e-9)
    assert confirm.rul[i] == pytest.approx(date - t_k, abs=1e-9)
    # qfail already failed
    j = next(j for j, h in enumerate(confirm.delta) if h.mode == "qfail")
    assert confirm.rul[j] == 0.0


def test_two_nominal_switch_to_harsher_mode(two_nominal):
    m, bank, ba, d = two_nominal
    recs, _ = simulate(m, load_scenario(data_path("two_nominal_scenario.json")))
    outs = list(run(m, d, bank, recs))
    o0 = outs[0]
    o20 = next(o for o in outs if o.t == 20.0)
    assert [h.mode for h in o20.delta] == ["q02"]
    d0, d20 = o0.pi.sequences[0].dates[0], o20.pi.sequences[0].dates[0]
    assert d20 < d0
    p = 1 - math.exp(-((20 / 400) ** 2))
    assert d20 == pytest.approx(20 - q(2, 200, p) + q(2, 200, 0.3), abs=1e-9)


def test_determinism(two_nominal):
    m, bank, ba, d = two_nominal
    recs, _ = simulate(m, load_scenario(data_path("two_nominal_scenario.json")))

    def text():
        buf = io.StringIO()
        write_trace(run(m, d, bank, recs, timer=lambda: 0.0), buf)
        return buf.getvalue()

    assert text() == text()


def test_alignment(two_nominal):
    m, bank, ba, d = two_nominal
    recs, _ = simulate(m, load_scenario(data_path("two_nominal_scenario.json")))
    for o in run(m, d, bank, recs, emit_every_tick=True):
        assert len(o.delta) == len(o.pi) == len(o.rul) >= 1


def test_true_mode_always_present(two_nominal):
    m, bank, ba, d = two_nominal
    recs, truth = simulate(m, load_scenario(data_path("two_nominal_scenario.json")))
    idx = {t: k for k, t in enumerate(truth.t)}
    for o in run(m, d, bank, recs, emit_every_tick=True):
        k = idx.get(o.t, 0)
        assert any(h.mode == truth.modes[k] and h.faults == truth.faults[k] for h in o.delta)


def test_predicted_date_against_injected_date(two_nominal):
    m, bank, ba, d = two_nominal
    d_f1 = next(iter(run(m, d, bank, []))).pi.sequences[0].dates[0]
    assert d_f1 == pytest.approx(q(2, 400, 0.3), abs=1e-9)
    for t_inj in (math.floor(d_f1), math.ceil(d_f1)):
        p_at_injection = weibull_cdf(WeibullLaw(2.0, 400.0), t_inj)
        assert (t_inj >= d_f1) == (p_at_injection >= 0.3)


def test_unknown_mode_flags_stale(two_nominal):
    m, bank, ba, d = two_nominal
    recs, _ = simulate(m, scenario(duration=30.0))
    # corrupt sensor 1 from t=10 on: matches no mode signature
    bad = [ObservationRecord(r.t, r.u, (r.y[0] + (5.0 if r.t >= 10 else 0.0), r.y[1]), r.discrete_events) for r in recs]
    outs = list(run(m, d, bank, bad))
    unk = [o for o in outs if o.unknown]
    assert len(unk) == 1
    assert "matches no group" in unk[0].message
    assert unk[0].stale
    assert len(unk[0].delta) >= 1


def test_unknown_event_from_diagnoser(two_nominal):
    m, bank, ba, d = two_nominal
    recs, _ = simulate(m, scenario(duration=10.0))
    bad = list(recs)
    bad[5] = ObservationRecord(bad[5].t, bad[5].u, bad[5].y, ("a2",))
    outs = list(run(m, d, bank, bad))
    assert outs[-1].unknown
    assert "not possible" in outs[-1].message


def test_mismatched_artifacts(two_nominal):
    m, bank, ba, d = two_nominal
    doc = model_to_dict(m)
    doc["p_max"] = 0.4
    other = model_from_dict(doc)
    with pytest.raises(ArtifactMismatchError):
        next(run(other, d, bank, []))


def test_bad_records(two_nominal):
    m, bank, ba, d = two_nominal
    with pytest.raises(ValueError, match="increase"):
        list(run(m, d, bank, [ObservationRecord(1.0, (0.0,), (0.0, 0.0)), ObservationRecord(1.0, (0.0,), (0.0, 0.0))]))
    with pytest.raises(ValueError, match="n_y"):
        list(run(m, d, bank, [ObservationRecord(1.0, (0.0,), (0.0,))]))


# -- prognosis time vs event interval ----------------------------------

def test_hyp1_fast_prognosis_passes(two_nominal):
    m, bank, ba, d = two_nominal
    recs, _ = simulate(m, load_scenario(data_path("two_nominal_scenario.json")))
    assert check_hypothesis1(list(run(m, d, bank, recs))) == []


def test_hyp1_throttled_prognosis_flagged(two_nominal):
    m, bank, ba, d = two_nominal
    recs, _ = simulate(m, load_scenario(data_path("two_nominal_scenario.json")))
    clock = iter(np.arange(0.0, 1e6, 5.0))
    outs = list(run(m, d, bank, recs, timer=lambda: float(next(clock))))
    assert all(o.prognosis_compute_time == 5.0 for o in outs)
    v = check_hypothesis1(outs)
    # gaps: 20, 2, 30, 38 ticks; only the 2-tick gap is shorter than 5
    assert [(x.t, x.t_next) for x in v] == [(20.0, 22.0)]
    assert check_hypothesis1(outs, real_time_scale=0.1) == []


def test_hyp1_zero_interval():
    v = check_hypothesis1([(3.0, 0.0), (3.0, 0.0)])
    assert len(v) == 1 and v[0].interval == 0.0 and "zero interval" in v[0].reason


def test_trace_timing_round_trip(two_nominal):
    m, bank, ba, d = two_nominal
    recs, _ = simulate(m, load_scenario(data_path("two_nominal_scenario.json")))
    outs = list(run(m, d, bank, recs))
    buf = io.StringIO()
    write_trace(outs, buf)
    buf.seek(0)
    pts = read_trace_timing(buf)
    assert [t for t, _ in pts] == [o.t for o in outs]
