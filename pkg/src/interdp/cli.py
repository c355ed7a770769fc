"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 unknown mode during a run,
3 prognosis slower than the interval between outputs, 4 model or input validation
error. Machine-readable results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import sys
from typing import Sequence

from . import build_all
from .behavior import build_behavior_automaton, to_dot
from .diagnoser import (
    DiagnoserFormatError,
    DiagnoserSizeError,
    Hypothesis,
    dump_text,
    load_diagnoser,
    save_diagnoser,
)
from .engine import ArtifactMismatchError, check_hypothesis1, format_number, read_trace_timing, run, write_trace
from .model import ModelError, load_model, validate
from .parity import NoRedundancyError, build_residual_bank
from .prognoser import ModelIncompleteError, initial_aging, update_on_diagnosis
from .sim import ScenarioError, load_scenario, read_observations, simulate, write_ground_truth, write_observations

EXIT_OK, EXIT_USAGE, EXIT_UNKNOWN_MODE, EXIT_HYP1, EXIT_INVALID = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _probability(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("must be in (0, 1)")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--p-max", type=_probability, help="override the model's fault probability threshold")
    common.add_argument("--emit-every-tick", action="store_true", help="emit an output for every observation")
    common.add_argument("--max-diagnoser-states", type=_positive_int, help="diagnoser size cap (default 10^6)")

    p = _Parser(prog="interdp", description="Interleaved diagnosis and prognosis of hybrid systems.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("validate", parents=[common], help="check a model file; prints OK or INVALID")
    c.add_argument("model")

    c = sub.add_parser("signatures", parents=[common], help="mode signatures and groups as CSV")
    c.add_argument("model")
    c.add_argument("--scenario", help="take the residual filter settings from this scenario")

    c = sub.add_parser("ba", parents=[common], help="behavior automaton as a dot graph")
    c.add_argument("model")
    c.add_argument("-o", "--out", help="write to this file instead of stdout")

    c = sub.add_parser("build", parents=[common], help="build and persist the diagnoser")
    c.add_argument("model")
    c.add_argument("-o", "--out", help="binary diagnoser file to write")
    c.add_argument("--dump-text", action="store_true", help="print a deterministic text listing")
    c.add_argument("--scenario", help="take the residual filter settings from this scenario")

    c = sub.add_parser("prognose", parents=[common], help="dated fault sequence and RUL from a mode")
    c.add_argument("model")
    c.add_argument("--mode", required=True)
    c.add_argument("--now", type=float, default=0.0)

    c = sub.add_parser("simulate", parents=[common], help="simulate a scenario, write observations CSV")
    c.add_argument("model")
    c.add_argument("--scenario", required=True)
    c.add_argument("--out", help="observation CSV (default stdout)")
    c.add_argument("--truth", help="also write the ground-truth CSV here")

    c = sub.add_parser("run", parents=[common], help="run the diagnosis/prognosis loop, write a trace CSV")
    c.add_argument("model")
    c.add_argument("--scenario", help="scenario to simulate (also supplies filter and time scale)")
    c.add_argument("--replay", help="observation CSV to replay instead of simulating")
    c.add_argument("--diagnoser", help="prebuilt diagnoser file from 'interdp build'")
    c.add_argument("--real-time-scale", type=float, help="model seconds per wall second")
    c.add_argument("--out", help="trace CSV (default stdout)")

    c = sub.add_parser("check-hyp1", parents=[common], help="check prognosis time against event intervals")
    c.add_argument("trace")
    c.add_argument("--real-time-scale", type=float, default=1.0, help="model seconds per wall second")
    return p


def _filter_from(args):
    if getattr(args, "scenario", None):
        return load_scenario(args.scenario).filter
    return None


def _write_text(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_validate(args) -> int:
    try:
        model = load_model(args.model, check=False)
    except ModelError as exc:
        print("INVALID")
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    problems = validate(model)
    if problems:
        print("INVALID")
        for v in problems:
            print(v, file=sys.stderr)
        return EXIT_INVALID
    print("OK")
    return EXIT_OK


def cmd_signatures(args) -> int:
    model = load_model(args.model)
    bank = build_residual_bank(model, _filter_from(args))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["mode", "group", "bits"])
    for m in model.mode_ids:
        w.writerow([m, bank.mode_group[m], "".join("1" if b else "0" for b in bank.signatures[m])])
    return EXIT_OK


def cmd_ba(args) -> int:
    model = load_model(args.model)
    bank = build_residual_bank(model)
    _write_text(to_dot(build_behavior_automaton(model, bank.groups)), args.out)
    return EXIT_OK


def cmd_build(args) -> int:
    model = load_model(args.model)
    _, _, diag = build_all(model, _filter_from(args), args.max_diagnoser_states)
    if not args.out and not args.dump_text:
        raise UsageError("build needs -o/--out and/or --dump-text")
    if args.out:
        save_diagnoser(diag, args.out)
        print(f"wrote {args.out}: {len(diag.states)} states, {len(diag.transitions)} transitions", file=sys.stderr)
    if args.dump_text:
        sys.stdout.write(dump_text(diag))
    return EXIT_OK


def cmd_prognose(args) -> int:
    model = load_model(args.model)
    if args.mode not in model.mode:
        raise UsageError(f"unknown mode {args.mode!r}")
    m = model.mode[args.mode]
    hyp = Hypothesis(m.id, frozenset(m.faults))
    _, pv = update_on_diagnosis([initial_aging(model)], [hyp], args.now, model, args.p_max)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["fault", "date", "cumulative_probability"])
    for e in pv.sequences[0]:
        w.writerow([e.fault, format_number(e.date), format_number(e.probability)])
    w.writerow(["RUL", format_number(pv.ruls[0]), ""])
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    records, truth = simulate(model, load_scenario(args.scenario))
    if args.out:
        write_observations(records, args.out)
    else:
        write_observations(records, sys.stdout)
    if args.truth:
        write_ground_truth(truth, args.truth)
    return EXIT_OK


def cmd_run(args) -> int:
    if not args.scenario and not args.replay:
        raise UsageError("run needs --scenario and/or --replay")
    model = load_model(args.model)
    scenario = load_scenario(args.scenario) if args.scenario else None
    flt = scenario.filter if scenario else None
    bank, _, diag = build_all(model, flt, args.max_diagnoser_states)
    if args.diagnoser:
        diag = load_diagnoser(args.diagnoser)
    records = read_observations(args.replay) if args.replay else simulate(model, scenario)[0]
    outputs = list(run(model, diag, bank, records, p_max=args.p_max, emit_every_tick=args.emit_every_tick))
    if args.out:
        write_trace(outputs, args.out)
    else:
        write_trace(outputs, sys.stdout)

    scale = args.real_time_scale
    if scale is None:
        scale = scenario.real_time_scale if scenario else 1.0
    unknown = [o for o in outputs if o.unknown]
    if unknown:
        print(f"unknown mode at t={format_number(unknown[0].t)}: {unknown[0].message}", file=sys.stderr)
        return EXIT_UNKNOWN_MODE
    violations = check_hypothesis1(outputs, scale)
    if violations:
        for v in violations:
            print(f"prognosis time check failed at t={format_number(v.t)}: {v.reason}", file=sys.stderr)
        return EXIT_HYP1
    return EXIT_OK


def cmd_check_hyp1(args) -> int:
    try:
        points = read_trace_timing(args.trace)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    violations = check_hypothesis1(points, args.real_time_scale)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["index", "t", "t_next", "ct_p", "interval", "reason"])
    for v in violations:
        w.writerow([v.index, format_number(v.t), format_number(v.t_next), format_number(v.ct_p), format_number(v.interval), v.reason])
    return EXIT_HYP1 if violations else EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "signatures": cmd_signatures,
    "ba": cmd_ba,
    "build": cmd_build,
    "prognose": cmd_prognose,
    "simulate": cmd_simulate,
    "run": cmd_run,
    "check-hyp1": cmd_check_hyp1,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"interdp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"interdp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, ScenarioError, NoRedundancyError, ModelIncompleteError,
            DiagnoserSizeError, DiagnoserFormatError, ArtifactMismatchError) as exc:
        print(f"interdp: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
