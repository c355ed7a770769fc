"""Interleaved model-based diagnosis and Weibull prognosis of hybrid systems."""

from importlib import resources

from .model import HybridModel, load_model, save_model, validate, underlying_des
from .parity import FilterConfig, ResidualBank, build_residual_bank
from .behavior import BehaviorAutomaton, build_behavior_automaton
from .diagnoser import Diagnoser, DiagnoserTracker, build_diagnoser
from .engine import InterdpOutput, ObservationRecord, check_hypothesis1, run
from .sim import Scenario, load_scenario, simulate

__version__ = "0.1.0"

__all__ = [
    "HybridModel",
    "load_model",
    "save_model",
    "validate",
    "underlying_des",
    "FilterConfig",
    "ResidualBank",
    "build_residual_bank",
    "BehaviorAutomaton",
    "build_behavior_automaton",
    "Diagnoser",
    "DiagnoserTracker",
    "build_diagnoser",
    "InterdpOutput",
    "ObservationRecord",
    "check_hypothesis1",
    "run",
    "Scenario",
    "load_scenario",
    "simulate",
    "data_path",
    "build_all",
]


def data_path(name: str):
    """Path of a model or scenario file shipped with the package."""
    return resources.files(__name__).joinpath("data", name)


def build_all(model: HybridModel, filter_config: FilterConfig | None = None, max_states: int | None = None):
    """Residual bank, behavior automaton and diagnoser for ``model``."""
    bank = build_residual_bank(model, filter_config)
    ba = build_behavior_automaton(model, bank.groups)
    kwargs = {} if max_states is None else {"max_states": max_states}
    return bank, ba, build_diagnoser(ba, **kwargs)
