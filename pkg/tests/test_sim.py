import io

import numpy as np
import pytest

from interdp import build_all, data_path
from interdp.engine import ObservationRecord
from interdp.model import load_model, model_from_dict
from interdp.parity import eval_residuals
from interdp.sim import (
    ScenarioError,
    load_scenario,
    read_observations,
    scenario_from_dict,
    simulate,
    write_ground_truth,
    write_observations,
)


def one_mode(A, B, C, x0, extra_fault_mode=False):
    dyn = {"A": A, "B": B, "C": C, "D": [[0.0] * len(B[0])] * len(C)}
    modes = [{"id": "q0", "kind": "nominal", "dynamics": dyn, "aging": {}}]
    transitions = []
    if extra_fault_mode:
        modes[0]["aging"] = {"f1": {"beta": 1.0, "eta": 100.0}}
        modes.append({"id": "q1", "kind": "failure", "faults": ["f1"], "dynamics": dict(dyn, A=[[0.5]])})
        transitions = [{"source": "q0", "event": "f1", "target": "q1"}]
    return model_from_dict({
        "events": [{"id": "f1", "observable": False, "fault": True}],
        "modes": modes,
        "transitions": transitions,
        "initial": {"mode": "q0", "state": x0},
        "failure_tree": {"fault": "f1"},
        "sampling_period": 1.0,
        "p_max": 0.5,
    })


def test_zero_dynamics():
    m = one_mode([[0.0]], [[0.0]], [[1.0]], [0.0])
    recs, truth = simulate(m, scenario_from_dict({"duration": 20}))
    assert all(r.y == (0.0,) for r in recs)
    assert len(recs) == 21


def test_integrator_step_gives_index():
    m = one_mode([[1.0]], [[1.0]], [[1.0]], [0.0])
    sc = scenario_from_dict({"duration": 10, "input": {"kind": "step", "time": 0, "before": [0.0], "after": [1.0]}})
    recs, _ = simulate(m, sc)
    assert [r.y[0] for r in recs] == [float(k) for k in range(11)]


def test_hidden_fault_not_recorded():
    m = one_mode([[1.0]], [[0.0]], [[1.0]], [1.0], extra_fault_mode=True)
    sc = scenario_from_dict({"duration": 60, "events": [{"time": 40, "event": "f1"}]})
    recs, truth = simulate(m, sc)
    assert not m.event["f1"].observable
    assert all(r.discrete_events == () for r in recs)
    k = list(truth.t).index(40.0)
    assert truth.modes[k - 1] == "q0" and truth.modes[k] == "q1"
    assert truth.faults[k] == {"f1"}
    # state carried over: x stays 1 until the switch, then halves each tick
    assert truth.states[k, 0] == 1.0
    assert truth.states[k + 1, 0] == 0.5


def test_observable_event_recorded():
    m = load_model(data_path("two_nominal_model.json"))
    recs, truth = simulate(m, load_scenario(data_path("two_nominal_scenario.json")))
    seen = {r.t: r.discrete_events for r in recs if r.discrete_events}
    assert seen == {20.0: ("a1",), 90.0: ("a2",)}
    # mode sequence follows the transition function
    for a, b, in zip(truth.modes, truth.modes[1:]):
        assert a == b or any(m.successor(a, e) == b for e in m.event)


def test_invalid_event_rejected():
    m = load_model(data_path("two_nominal_model.json"))
    with pytest.raises(ScenarioError, match="no transition"):
        simulate(m, scenario_from_dict({"duration": 10, "events": [{"time": 3, "event": "a2"}]}))
    with pytest.raises(ScenarioError, match="after the end"):
        simulate(m, scenario_from_dict({"duration": 10, "events": [{"time": 30, "event": "a1"}]}))


def test_scenario_parse_errors():
    with pytest.raises(ScenarioError):
        scenario_from_dict({"duration": 1, "bogus": 2})
    with pytest.raises(ScenarioError):
        scenario_from_dict({})
    with pytest.raises(ScenarioError):
        scenario_from_dict({"duration": 1, "events": [{"t": 1}]})


def test_noise_reproducible():
    m = load_model(data_path("two_nominal_model.json"))
    doc = {"duration": 30, "input": {"kind": "prbs", "seed": 3}, "noise_std": [0.1, 0.2], "noise_seed": 9}
    a, _ = simulate(m, scenario_from_dict(doc))
    b, _ = simulate(m, scenario_from_dict(doc))
    assert a == b
    c, _ = simulate(m, scenario_from_dict(dict(doc, noise_seed=10)))
    assert a != c
    clean, _ = simulate(m, scenario_from_dict(dict(doc, noise_std=0.0)))
    dev = np.array([r.y for r in a]) - np.array([r.y for r in clean])
    assert 0.05 < dev[:, 0].std() < 0.2
    assert 0.1 < dev[:, 1].std() < 0.3


def test_true_mode_residuals_vanish():
    m = load_model(data_path("two_nominal_model.json"))
    bank, _, _ = build_all(m)
    recs, truth = simulate(m, load_scenario(data_path("two_nominal_scenario.json")))
    Y = np.array([r.y for r in recs])
    U = np.array([r.u for r in recs])
    for k in range(len(recs)):
        mode = truth.modes[k]
        s = bank.generators[mode].s
        if k < s or len(set(truth.modes[k - s:k + 1])) > 1:
            continue
        r = eval_residuals(bank.generators[mode], Y[k - s:k + 1], U[k - s:k + 1])
        assert np.max(np.abs(r)) <= 1e-9


def test_csv_round_trip(tmp_path):
    m = load_model(data_path("two_nominal_model.json"))
    recs, truth = simulate(m, load_scenario(data_path("two_nominal_scenario.json")))
    buf = io.StringIO()
    write_observations(recs, buf)
    assert buf.getvalue().splitlines()[0] == "t,u0,y0,y1,events"
    buf.seek(0)
    assert read_observations(buf) == recs
    p = tmp_path / "truth.csv"
    write_ground_truth(truth, p)
    rows = p.read_text().splitlines()
    assert rows[0] == "t,mode,faults,x0"
    assert rows[60].split(",")[1:3] == ["qf1", "f1"]


def test_bad_observation_csv():
    with pytest.raises(ScenarioError):
        read_observations(io.StringIO("a,b\n1,2\n"))


def test_record_equality_is_value_based():
    assert ObservationRecord(1.0, (0.0,), (1.0, 2.0), ("a1",)) == ObservationRecord(1.0, (0.0,), (1.0, 2.0), ("a1",))
