#!/usr/bin/env python3
"""
Photocount Tool - command-line front end.

Features:
- dist: photon-number distribution of a state
- counts: P(k, t) for the SD and EP models over a gamma*t grid (figures 1-3)
- master: normalized mean photon number under pre-selection (figure 4)
- epd: densities of timed count sequences
- mc: Monte Carlo histograms next to the closed forms
- check: invariant battery with a PASS/FAIL table

Every dataset is CSV with a header row, LF line endings and floats written
with a fixed number of significant digits, so identical inputs give
byte-identical files.

Exit codes: 0 ok, 1 invariant failure, 2 usage or parameter error.
"""

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

import settings as settings_module
from errors import InvalidParameter, PhotocountError, ScenarioError
from fock_operators import ModelKind
from invariant_checks import InvariantChecker
from jump_sampler import run_batch
from master_equation import Trajectory1D, mean_trajectory
from photocount_statistics import CountTimes, epd, epd_dimensionless, prob_counts
from photon_states import StateSpec, make_distribution

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCENARIO_KEYS = {
    "schema", "model", "state", "gamma", "gamma_t", "t", "tau_max", "steps",
    "k", "k_list", "times", "window", "seed", "n_traj", "trunc_tol", "out",
}
STATE_KEYS = {"state", "m", "nbar", "mu", "M", "z", "p"}

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_USAGE = 2


@dataclass(frozen=True)
class Scenario:
    models: Tuple[ModelKind, ...] = (ModelKind.SD, ModelKind.EP)
    state: StateSpec = field(default_factory=lambda: StateSpec.thermal(5.0))
    gamma: float = 1.0
    gamma_t: Tuple[float, ...] = tuple(np.linspace(0.0, 10.0, 101))
    taus: Tuple[float, ...] = tuple(np.linspace(0.0, 10.0, 101))
    k_list: Tuple[int, ...] = tuple(range(11))
    times: Tuple[float, ...] = ()
    window: float = math.inf
    seed: int = 0
    n_traj: int = 10_000
    trunc_tol: Optional[float] = None
    out: Optional[str] = None

    def validated(self) -> "Scenario":
        if not self.gamma > 0:
            raise InvalidParameter(f"gamma must be positive, got {self.gamma}")
        if any(not x >= 0 for x in self.gamma_t):
            raise InvalidParameter("gamma*t values must be >= 0")
        if any(k < 0 for k in self.k_list):
            raise InvalidParameter("k values must be >= 0")
        if self.n_traj < 1:
            raise InvalidParameter(f"n_traj must be >= 1, got {self.n_traj}")
        self.state.validated()
        return self


def parse_models(name: str) -> Tuple[ModelKind, ...]:
    if name.strip().lower() == "both":
        return (ModelKind.SD, ModelKind.EP)
    return (ModelKind.parse(name),)


def parse_grid(text: str) -> Tuple[float, ...]:
    """'a,b,c' lists values; 'start:stop:num' is an inclusive linear grid."""
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            return tuple(float(x) for x in np.linspace(float(start), float(stop), int(num)))
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise InvalidParameter(f"Cannot parse grid '{text}'")


def parse_ints(text: str) -> Tuple[int, ...]:
    try:
        if ":" in text:
            start, stop = text.split(":")
            return tuple(range(int(start), int(stop) + 1))
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise InvalidParameter(f"Cannot parse integer list '{text}'")


def scenario_from_mapping(data: Mapping, base: Optional[Scenario] = None) -> Scenario:
    """Strict scenario parsing: unknown keys and other schema versions are rejected."""
    unknown = set(data) - SCENARIO_KEYS
    if unknown:
        raise ScenarioError(f"Unknown scenario keys: {', '.join(sorted(unknown))}")
    if data.get("schema") != SCHEMA_VERSION:
        raise ScenarioError(f"Scenario must declare \"schema\": {SCHEMA_VERSION}")
    try:
        return _apply_mapping(data, base or Scenario())
    except PhotocountError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"Malformed scenario value: {exc}")


def _apply_mapping(data: Mapping, scenario: Scenario) -> Scenario:
    updates: Dict[str, object] = {}
    if "model" in data:
        updates["models"] = parse_models(str(data["model"]))
    if "state" in data:
        state = data["state"]
        if not isinstance(state, Mapping):
            raise ScenarioError("\"state\" must be an object such as {\"state\": \"thermal\", \"nbar\": 5}")
        extra = set(state) - STATE_KEYS
        if extra:
            raise ScenarioError(f"Unknown state keys: {', '.join(sorted(extra))}")
        updates["state"] = StateSpec.from_mapping(state)
    if "gamma" in data:
        updates["gamma"] = float(data["gamma"])
    if "gamma_t" in data:
        updates["gamma_t"] = tuple(float(x) for x in data["gamma_t"])
    if "t" in data:
        gamma = float(updates.get("gamma", scenario.gamma))
        updates["gamma_t"] = tuple(gamma * float(x) for x in data["t"])
    if "tau_max" in data or "steps" in data:
        tau_max = float(data.get("tau_max", scenario.taus[-1]))
        steps = int(data.get("steps", len(scenario.taus) - 1))
        updates["taus"] = tuple(np.linspace(0.0, tau_max, steps + 1))
    if "k" in data:
        updates["k_list"] = (int(data["k"]),)
    if "k_list" in data:
        updates["k_list"] = tuple(int(k) for k in data["k_list"])
    if "times" in data:
        updates["times"] = tuple(float(x) for x in data["times"])
    if "window" in data:
        updates["window"] = float(data["window"])
    for key in ("seed", "n_traj"):
        if key in data:
            updates[key] = int(data[key])
    if "trunc_tol" in data:
        updates["trunc_tol"] = float(data["trunc_tol"])
    if "out" in data:
        updates["out"] = str(data["out"])
    return replace(scenario, **updates)


def load_scenario_file(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"Cannot read scenario {path}: {exc}")
    if not isinstance(data, Mapping):
        raise ScenarioError("Scenario file must hold a JSON object")
    return scenario_from_mapping(data)


FIGURE_PRESETS = {
    1: {"state": StateSpec.fock(5), "k_list": tuple(range(7))},
    2: {"state": StateSpec.coherent(5.0), "k_list": tuple(range(11))},
    3: {"state": StateSpec.thermal(5.0), "k_list": tuple(range(11))},
}


def scenario_from_args(args: argparse.Namespace) -> Scenario:
    scenario = load_scenario_file(args.scenario) if args.scenario else Scenario()
    updates: Dict[str, object] = {}
    figure = getattr(args, "figure", None)
    if figure in FIGURE_PRESETS:
        updates.update(FIGURE_PRESETS[figure])
    if args.model is not None:
        updates["models"] = parse_models(args.model)
    if args.state is not None:
        mapping = {"state": args.state}
        for key in ("m", "nbar", "mu", "M", "z"):
            value = getattr(args, key)
            if value is not None:
                mapping[key] = value
        if args.probs is not None:
            mapping["p"] = list(parse_grid(args.probs))
        updates["state"] = StateSpec.from_mapping(mapping)
    if args.gamma is not None:
        updates["gamma"] = args.gamma
    if args.gamma_t is not None:
        updates["gamma_t"] = parse_grid(args.gamma_t)
    if args.t is not None:
        gamma = float(updates.get("gamma", scenario.gamma))
        updates["gamma_t"] = tuple(gamma * x for x in parse_grid(args.t))
    if args.tau_max is not None or args.steps is not None:
        tau_max = args.tau_max if args.tau_max is not None else scenario.taus[-1]
        steps = args.steps if args.steps is not None else len(scenario.taus) - 1
        updates["taus"] = tuple(np.linspace(0.0, tau_max, steps + 1))
    if args.k is not None:
        updates["k_list"] = (args.k,)
    if args.k_list is not None:
        updates["k_list"] = parse_ints(args.k_list)
    if args.times is not None:
        updates["times"] = parse_grid(args.times)
    if args.window is not None:
        updates["window"] = args.window
    for key in ("seed", "n_traj", "trunc_tol", "out"):
        value = getattr(args, key)
        if value is not None:
            updates[key] = value
    return replace(scenario, **updates).validated()


def format_value(value: object, digits: int) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if number == 0.0:
            return "0"
        return format(number, f".{digits}g")
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Mapping[str, object]]) -> str:
    digits = settings_module.get_settings().float_digits
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(row[column], digits) for column in header])
    return buffer.getvalue()


def emit(text: str, out: Optional[str]) -> None:
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        print(f"✅ Wrote {text.count(chr(10)) - 1} rows to {path}", file=sys.stderr)
    else:
        sys.stdout.write(text)


def cmd_dist(scenario: Scenario) -> str:
    p = make_distribution(scenario.state, scenario.trunc_tol)
    rows = [{"n": n, "p_n": float(value)} for n, value in enumerate(p.p)]
    return render_csv(["n", "p_n"], rows)


def cmd_counts(scenario: Scenario) -> str:
    p = make_distribution(scenario.state, scenario.trunc_tol)
    gamma = scenario.gamma
    rows = []
    for gamma_t in scenario.gamma_t:
        t = gamma_t / gamma
        for k in scenario.k_list:
            row = {"gamma_t": gamma_t, "k": k, "P_sd": "", "P_ep": ""}
            for model in scenario.models:
                row[f"P_{model.value}"] = prob_counts(p, k, t, gamma, model)
            rows.append(row)
    return render_csv(["gamma_t", "k", "P_sd", "P_ep"], rows)


MASTER_HEADER = ["state", "nbar0", "model", "tau", "nbar_over_nbar0"]


def trajectories_csv(trajectories: Iterable[Trajectory1D]) -> str:
    rows = []
    for trajectory in trajectories:
        rows.extend(trajectory.to_rows(MASTER_HEADER[:3]))
    return render_csv(MASTER_HEADER, rows)


def master_trajectories(specs: Sequence[StateSpec], taus: Sequence[float],
                        models: Sequence[ModelKind]) -> List[Trajectory1D]:
    return [mean_trajectory(spec, taus, model) for spec in specs for model in models]


def cmd_master(scenario: Scenario) -> str:
    return trajectories_csv(master_trajectories([scenario.state], scenario.taus, scenario.models))


def figure_four(scenario: Scenario) -> str:
    """EP curves for Fock, coherent and thermal light at nbar0 = 1, 5, 10 plus the SD reference."""
    trajectories = []
    for nbar0 in (1, 5, 10):
        specs = [StateSpec.fock(nbar0), StateSpec.coherent(float(nbar0)), StateSpec.thermal(float(nbar0))]
        trajectories.extend(master_trajectories(specs, scenario.taus, (ModelKind.EP,)))
    trajectories.extend(master_trajectories([StateSpec.fock(1)], scenario.taus, (ModelKind.SD,)))
    return trajectories_csv(trajectories)


def cmd_epd(scenario: Scenario) -> str:
    p = make_distribution(scenario.state, scenario.trunc_tol)
    times = CountTimes(scenario.times, scenario.window)
    rows = []
    for model in scenario.models:
        rows.append({
            "model": model.value,
            "k": times.k,
            "window": times.window,
            "epd": epd(p, times, scenario.gamma, model),
            "epd_dimensionless": epd_dimensionless(p, times, scenario.gamma, model),
        })
    return render_csv(["model", "k", "window", "epd", "epd_dimensionless"], rows)


def cmd_mc(scenario: Scenario) -> str:
    if len(scenario.gamma_t) != 1:
        raise InvalidParameter("mc needs a single observation time (--gamma-t or --t)")
    gamma = scenario.gamma
    t = scenario.gamma_t[0] / gamma
    p = make_distribution(scenario.state, scenario.trunc_tol)
    header = ["model", "k", "count", "frequency", "ci_low", "ci_high", "closed_form"]
    rows = []
    for model in scenario.models:
        print(f"🎲 Sampling {scenario.n_traj} {model.name} trajectories (seed {scenario.seed})",
              file=sys.stderr)
        summary = run_batch(scenario.state, t, gamma, model, scenario.n_traj, scenario.seed,
                            tail_tol=scenario.trunc_tol)
        for row in summary.to_rows(lambda k, m=model: prob_counts(p, k, t, gamma, m)):
            rows.append({"model": model.value, **row})
    return render_csv(header, rows)


def cmd_check(checker: InvariantChecker, list_only: bool = False) -> int:
    if list_only:
        for name, description in checker.describe():
            print(f"{name:22s} {description}")
        return EXIT_OK
    results = checker.run()
    width = max(len(r.name) for r in results)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{result.name:{width}s}  {status}  {result.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"❌ Failed invariants: {', '.join(failed)}", file=sys.stderr)
        return EXIT_INVARIANT
    print(f"🎉 All {len(results)} invariants pass", file=sys.stderr)
    return EXIT_OK


def _add_scenario_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenario", help="JSON scenario file (\"schema\": 1)")
    parser.add_argument("--model", help="sd, ep or both (default: both)")
    parser.add_argument("--state", help="fock, coherent, thermal, binomial, negbinomial, phase or custom")
    parser.add_argument("--m", type=int, help="Fock photon number")
    parser.add_argument("--nbar", type=float, help="Mean photon number")
    parser.add_argument("--mu", type=float, help="Negative binomial mu")
    parser.add_argument("--M", type=int, help="Binomial M")
    parser.add_argument("--z", type=complex, help="Coherent phase state parameter, |z| < 1")
    parser.add_argument("--probs", help="Custom distribution p_0,p_1,...")
    parser.add_argument("--gamma", type=float, help="Detection rate (default: 1)")
    parser.add_argument("--gamma-t", dest="gamma_t", help="gamma*t grid: a,b,c or start:stop:num")
    parser.add_argument("--t", help="Observation times, same syntax as --gamma-t")
    parser.add_argument("--tau-max", dest="tau_max", type=float, help="Largest slow time")
    parser.add_argument("--steps", type=int, help="Number of slow-time intervals")
    parser.add_argument("--k", type=int, help="Single count number")
    parser.add_argument("--k-list", dest="k_list", help="Count numbers: a,b,c or first:last")
    parser.add_argument("--times", help="Ordered count times for epd")
    parser.add_argument("--window", type=float, help="Observation window for epd (default: inf)")
    parser.add_argument("--trunc-tol", dest="trunc_tol", type=float, help="Tail mass tolerance")
    parser.add_argument("--seed", type=int, help="Base seed for Monte Carlo")
    parser.add_argument("--n-traj", dest="n_traj", type=int, help="Number of trajectories")
    parser.add_argument("--out", help="Output CSV path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Photocount statistics for the SD and EP detector models")
    parser.add_argument("--config", help="Alternative config.ini")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging to stderr")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("dist", "Photon-number distribution"),
                            ("counts", "Count probabilities P(k, t)"),
                            ("master", "Mean photon number under pre-selection"),
                            ("epd", "Density of a timed count sequence"),
                            ("mc", "Monte Carlo count histogram")):
        sub = subparsers.add_parser(name, help=help_text)
        _add_scenario_flags(sub)
        if name == "counts":
            sub.add_argument("--figure", type=int, choices=(1, 2, 3), help="Figure preset (1 Fock, 2 coherent, 3 thermal)")
        if name == "master":
            sub.add_argument("--figure", type=int, choices=(4,), help="Figure 4 dataset")

    check = subparsers.add_parser("check", help="Run the invariant battery")
    check.add_argument("--list", action="store_true", help="List invariant names without running them")
    check.add_argument("--truncation", type=int, help="Cut the reference thermal state to DIM levels")
    return parser


COMMANDS = {
    "dist": cmd_dist,
    "counts": cmd_counts,
    "master": cmd_master,
    "epd": cmd_epd,
    "mc": cmd_mc,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        if args.config:
            settings_module.use_config(args.config)
        verbose = args.verbose or settings_module.get_settings().verbose
        settings_module.configure_logging(verbose)

        if args.command == "check":
            return cmd_check(InvariantChecker(truncation=args.truncation), list_only=args.list)

        scenario = scenario_from_args(args)
        if args.command == "master" and getattr(args, "figure", None) == 4:
            text = figure_four(scenario)
        else:
            text = COMMANDS[args.command](scenario)
        emit(text, scenario.out)
        return EXIT_OK
    except (PhotocountError, FileNotFoundError) as exc:
        print(f"❌ {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
