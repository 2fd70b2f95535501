"""Experiment runner: resolve problems and algorithms by id from a config
file, execute seeded runs, and emit traces, audits, and figures-as-data.

Config files are TOML (or JSON with the same schema):

    problem = "quadratic:M=2,d=3,seed=1"
    algorithms = ["ada-gd", "uniform-gd"]
    eta = "auto"            # or a number; "auto" uses the step-size bound
    epsilon = 0.1           # optional scalar or per-agent array
    delta = 0.05
    max_rounds = 100000
    w0 = [1.0, 1.0]         # or "seeded"
    seed = 7
    outputs = ["json", "csv", "svg"]
    out_dir = "runs/demo"   # default: $DEFECTSIM_OUT or ./defectsim-out

    [probe]                 # probe subcommand only
    x = [-0.5, 1.5, 5]      # linspace lo, hi, count (2-D problems)
    y = [-0.5, 1.5, 5]

Exit codes: 0 all runs completed (audit failures are data, not errors),
2 malformed config or unknown id, 3 unwritable output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .algorithms import (
    RunConfig,
    parse_algorithm_id,
    problem_step_size_bound,
    resolve_epsilons,
)
from .analysis import probe_bad_region, run_standard_audits
from .core import DefectSimError, InvalidInputError, average_loss, evaluate_oracle
from .problems import DataProblem, get_problem, validate_assumptions
from .svg import line_chart
from .traceio import (
    CSV_FLOAT_FORMAT,
    write_audit_json,
    write_trace_csv,
    write_trace_json,
)

DEFAULT_OUT_ENV = "DEFECTSIM_OUT"
KNOWN_OUTPUTS = ("json", "csv", "svg")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_OUTPUT = 3


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """A parsed experiment description (TOML or JSON, same schema).

    ``eta`` may be the string "auto", resolved to the step-size bound before
    any run starts; the resolved number is what lands in every trace's
    config snapshot. ``w0`` may be "seeded" for a deterministic start
    outside every agent's target set.
    """

    problem_id: str
    algorithm_ids: tuple[str, ...]
    eta: float | str = "auto"
    epsilon: float | tuple[float, ...] | None = None
    delta: float = 0.05
    max_rounds: int = 1_000_000
    w0: tuple[float, ...] | str = "seeded"
    seed: int = 0
    outputs: tuple[str, ...] = ("json", "csv")
    out_dir: str | None = None
    probe: dict = field(default_factory=dict)

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        if "problem" not in raw:
            raise ConfigError("config must set 'problem'")
        epsilon = raw.get("epsilon")
        if isinstance(epsilon, (list, tuple)):
            epsilon = tuple(float(e) for e in epsilon)
        elif epsilon is not None:
            epsilon = float(epsilon)
        eta = raw.get("eta", "auto")
        if eta != "auto":
            eta = float(eta)
        w0 = raw.get("w0", "seeded")
        if w0 != "seeded":
            w0 = tuple(float(x) for x in w0)
        outputs = tuple(raw.get("outputs", ("json", "csv")))
        unknown = [fmt for fmt in outputs if fmt not in KNOWN_OUTPUTS]
        if unknown:
            raise ConfigError(f"unknown output formats {unknown}; known: {KNOWN_OUTPUTS}")
        return ExperimentConfig(
            problem_id=str(raw["problem"]),
            algorithm_ids=tuple(str(a) for a in raw.get("algorithms", ())),
            eta=eta,
            epsilon=epsilon,
            delta=float(raw.get("delta", 0.05)),
            max_rounds=int(raw.get("max_rounds", 1_000_000)),
            w0=w0,
            seed=int(raw.get("seed", 0)),
            outputs=outputs,
            out_dir=str(raw["out_dir"]) if raw.get("out_dir") else None,
            probe=dict(raw.get("probe", {})),
        )


def _load_experiment(path: str) -> ExperimentConfig:
    file_path = Path(path)
    if not file_path.exists():
        raise ConfigError(f"config file {path!r} does not exist")
    try:
        if file_path.suffix.lower() == ".json":
            raw = json.loads(file_path.read_text(encoding="utf-8"))
        else:
            with open(file_path, "rb") as handle:
                raw = tomli.load(handle)
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"could not parse {path!r}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path!r} must be a table of settings")
    return ExperimentConfig.from_dict(raw)


def _seeded_start(problem, epsilons, seed: int) -> np.ndarray:
    """Deterministic start outside every agent's target sublevel set."""
    instance = problem.problem if isinstance(problem, DataProblem) else problem
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(instance.dimension)
    direction /= np.linalg.norm(direction)
    radius = 1.0
    for _ in range(40):
        candidate = instance.shared_optimum + radius * direction
        losses = [evaluate_oracle(agent, candidate).value
                  for agent in instance.agents]
        if all(value > 1.2 * eps for value, eps in zip(losses, epsilons)):
            return candidate
        radius *= 2.0
    raise ConfigError("could not find a seeded start outside the target sets")


def _build_run_config(experiment: ExperimentConfig, problem,
                      seed_override: int | None) -> RunConfig:
    instance = problem.problem if isinstance(problem, DataProblem) else problem
    seed = int(seed_override) if seed_override is not None else experiment.seed
    if experiment.eta == "auto":
        eta = problem_step_size_bound(instance, experiment.delta)
    else:
        eta = float(experiment.eta)

    if experiment.w0 == "seeded":
        partial = RunConfig(eta=eta, w0=np.zeros(instance.dimension),
                            delta=experiment.delta, epsilon=experiment.epsilon,
                            max_rounds=experiment.max_rounds, seed=seed)
        epsilons = resolve_epsilons(instance, partial)
        w0 = _seeded_start(problem, epsilons, seed)
    else:
        w0 = np.array(experiment.w0, dtype=np.float64)
    return RunConfig(eta=eta, w0=w0, delta=experiment.delta,
                     epsilon=experiment.epsilon,
                     max_rounds=experiment.max_rounds, seed=seed)


def _resolve_outputs(experiment: ExperimentConfig,
                     formats: list[str] | None) -> tuple[str, ...]:
    if not formats:
        return experiment.outputs
    unknown = [fmt for fmt in formats if fmt not in KNOWN_OUTPUTS]
    if unknown:
        raise ConfigError(f"unknown output formats {unknown}; known: {KNOWN_OUTPUTS}")
    return tuple(formats)


def _resolve_out_dir(experiment: ExperimentConfig, out_flag: str | None) -> Path:
    if out_flag:
        return Path(out_flag)
    if experiment.out_dir:
        return Path(experiment.out_dir)
    return Path(os.environ.get(DEFAULT_OUT_ENV, "defectsim-out"))


def _slug(algorithm_id: str) -> str:
    out = []
    for ch in algorithm_id:
        out.append("-" if ch in ":,= " else ch)
    return "".join(out)


def _instance(problem):
    return problem.problem if isinstance(problem, DataProblem) else problem


def _trace_chart(trace) -> str:
    xs = [record.round for record in trace.rounds]
    ys = [record.average_loss for record in trace.rounds]
    markers = [(record.round, f"m{m}") for record in trace.rounds
               for m in sorted(record.defections)]
    return line_chart([(trace.algorithm_id, xs, ys)],
                      title=f"{trace.problem_id} / {trace.algorithm_id}",
                      y_label="average loss", markers=markers)


def _execute_runs(problem, algorithm_ids, run_config):
    """Run every algorithm and return (id, trace, report) triples."""
    results = []
    instance = _instance(problem)
    for algorithm_id in algorithm_ids:
        runner = parse_algorithm_id(algorithm_id)
        trace = runner(problem, run_config)
        report = run_standard_audits(instance, trace, run_config)
        results.append((algorithm_id, trace, report))
    return results


def _write_run_outputs(results, out_dir: Path, outputs) -> list[Path]:
    written = []
    for algorithm_id, trace, report in results:
        target = out_dir / _slug(algorithm_id)
        target.mkdir(parents=True, exist_ok=True)
        if "json" in outputs:
            write_trace_json(trace, target / "trace.json")
            written.append(target / "trace.json")
        if "csv" in outputs:
            write_trace_csv(trace, target / "trace.csv")
            written.append(target / "trace.csv")
        write_audit_json(report, target / "audit.json")
        written.append(target / "audit.json")
        if "svg" in outputs:
            (target / "chart.svg").write_text(_trace_chart(trace), encoding="utf-8")
            written.append(target / "chart.svg")
    return written


def _comparison_summary(results, instance) -> dict:
    finals = {algorithm_id: average_loss(instance, trace.outcome.point)
              for algorithm_id, trace, _ in results}
    base_id = results[0][0]
    return {
        "problem_id": instance.problem_id,
        "final_F": finals,
        "final_F_delta_vs_first": {algorithm_id: finals[algorithm_id] - finals[base_id]
                                   for algorithm_id, _, _ in results[1:]},
        "defection_rounds": {algorithm_id: trace.defection_rounds
                             for algorithm_id, trace, _ in results},
    }


def cmd_run(args) -> int:
    try:
        experiment = _load_experiment(args.config)
        problem = get_problem(experiment.problem_id)
        if not experiment.algorithm_ids:
            raise ConfigError("config must list at least one algorithm")
        for algorithm_id in experiment.algorithm_ids:
            parse_algorithm_id(algorithm_id)  # fail before any output is written
        outputs = _resolve_outputs(experiment, args.format)
        run_config = _build_run_config(experiment, problem, args.seed)
    except (ConfigError, InvalidInputError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        results = _execute_runs(problem, experiment.algorithm_ids, run_config)
    except DefectSimError as exc:
        print(f"error: run failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = _resolve_out_dir(experiment, args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        written = _write_run_outputs(results, out_dir, outputs)
        if len(results) >= 2:
            summary = _comparison_summary(results, _instance(problem))
            (out_dir / "summary.json").write_text(
                json.dumps(summary, sort_keys=True, indent=2) + "\n",
                encoding="utf-8")
            written.append(out_dir / "summary.json")
    except OSError as exc:
        print(f"error: cannot write to {out_dir}: {exc}", file=sys.stderr)
        return EXIT_OUTPUT

    for algorithm_id, trace, report in results:
        outcome = trace.outcome
        status = "ok" if report.all_passed else "audit-failures"
        print(f"{algorithm_id}: {outcome.kind.value} after {len(trace.rounds)} "
              f"rounds ({status})")
    print(f"wrote {len(written)} files under {out_dir}")
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        problem = get_problem(args.problem_id)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    instance = _instance(problem)
    report = validate_assumptions(instance, samples=int(args.samples),
                                  seed=int(args.seed or 0))
    print(f"assumption report for {instance.problem_id}")
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"  {check.name:14s} {status}  worst violation "
              f"{check.worst_violation:.3e}  ({check.detail})")
    if not report.check("heterogeneity").passed:
        print("  note: heterogeneity is advisory; counterexample problems"
              " violate it by design")
    return EXIT_OK if report.core_passed else 1


def _compare_csv(results, num_agents: int) -> str:
    columns = ["round"]
    for algorithm_id, _, _ in results:
        slug = _slug(algorithm_id)
        columns.append(f"F_avg_{slug}")
        columns += [f"loss_agent_{m}_{slug}" for m in range(num_agents)]
        columns.append(f"defections_{slug}")
    lines = [",".join(columns)]
    longest = max(len(trace.rounds) for _, trace, _ in results)
    for index in range(longest):
        row = [str(index + 1)]
        for _, trace, _ in results:
            if index < len(trace.rounds):
                record = trace.rounds[index]
                row.append(CSV_FLOAT_FORMAT % record.average_loss)
                row += [CSV_FLOAT_FORMAT % x for x in record.per_agent_loss]
                row.append(";".join(str(m) for m in sorted(record.defections)))
            else:
                row += [""] * (num_agents + 2)
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def cmd_compare(args) -> int:
    try:
        experiment = _load_experiment(args.config)
        problem = get_problem(experiment.problem_id)
        algorithm_ids = experiment.algorithm_ids
        if len(algorithm_ids) < 2:
            raise ConfigError("compare needs at least two algorithms")
        for algorithm_id in algorithm_ids:
            parse_algorithm_id(algorithm_id)
        run_config = _build_run_config(experiment, problem, args.seed)
    except (ConfigError, InvalidInputError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        results = _execute_runs(problem, algorithm_ids, run_config)
    except DefectSimError as exc:
        print(f"error: run failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    instance = _instance(problem)
    out_dir = _resolve_out_dir(experiment, args.out)
    summary = _comparison_summary(results, instance)
    series = []
    markers = []
    for algorithm_id, trace, _ in results:
        xs = [record.round for record in trace.rounds]
        ys = [record.average_loss for record in trace.rounds]
        series.append((algorithm_id, xs, ys))
        markers += [(record.round, f"{_slug(algorithm_id)}:m{m}")
                    for record in trace.rounds for m in sorted(record.defections)]
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "compare.csv").write_text(
            _compare_csv(results, instance.num_agents), encoding="utf-8")
        (out_dir / "compare.svg").write_text(
            line_chart(series, title=f"{instance.problem_id}: comparison",
                       y_label="average loss", markers=markers),
            encoding="utf-8")
        (out_dir / "summary.json").write_text(
            json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        _write_run_outputs(results, out_dir, ("json", "csv"))
    except OSError as exc:
        print(f"error: cannot write to {out_dir}: {exc}", file=sys.stderr)
        return EXIT_OUTPUT

    for algorithm_id in algorithm_ids:
        print(f"{algorithm_id}: final F = {summary['final_F'][algorithm_id]:.6g}")
    return EXIT_OK


def _probe_grid(experiment: ExperimentConfig, dimension: int) -> list[np.ndarray]:
    probe = experiment.probe
    if "w0_grid" in probe:
        return [np.array(point, dtype=np.float64) for point in probe["w0_grid"]]
    if "x" in probe and "y" in probe:
        if dimension != 2:
            raise ConfigError("x/y probe grids require a 2-D problem")
        x_lo, x_hi, x_n = probe["x"]
        y_lo, y_hi, y_n = probe["y"]
        xs = np.linspace(float(x_lo), float(x_hi), int(x_n))
        ys = np.linspace(float(y_lo), float(y_hi), int(y_n))
        return [np.array([x, y]) for x in xs for y in ys]
    raise ConfigError("probe config needs either w0_grid or x/y ranges")


def cmd_probe(args) -> int:
    try:
        experiment = _load_experiment(args.config)
        problem = get_problem(experiment.problem_id)
        instance = _instance(problem)
        algorithm_ids = experiment.algorithm_ids
        if not algorithm_ids:
            raise ConfigError("config must list at least one algorithm")
        for algorithm_id in algorithm_ids:
            parse_algorithm_id(algorithm_id)
        grid = _probe_grid(experiment, instance.dimension)
        run_config = _build_run_config(experiment, problem, args.seed)
    except (ConfigError, InvalidInputError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    points = probe_bad_region(instance, grid, algorithm_ids, run_config)
    payload = {
        "problem_id": instance.problem_id,
        "note": ("'empirically_bad' under-approximates a true bad region: it "
                 "only says every probed algorithm was harmful from there"),
        "points": [
            {
                "w0": list(point.w0),
                "labels": {k: v.value for k, v in point.labels.items()},
                "empirically_bad": point.empirically_bad,
                "in_target_set": point.in_target_set,
            }
            for point in points
        ],
    }
    out_dir = _resolve_out_dir(experiment, args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "probe.json").write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        rows = ["w0,empirically_bad,in_target_set," +
                ",".join(_slug(a) for a in algorithm_ids)]
        for point in points:
            coords = ";".join(CSV_FLOAT_FORMAT % x for x in point.w0)
            labels = ",".join(point.labels[a].value for a in algorithm_ids)
            rows.append(f"{coords},{point.empirically_bad},{point.in_target_set},{labels}")
        (out_dir / "probe.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot write to {out_dir}: {exc}", file=sys.stderr)
        return EXIT_OUTPUT

    bad = sum(1 for point in points if point.empirically_bad)
    print(f"probed {len(points)} starts with {len(algorithm_ids)} algorithms; "
          f"{bad} empirically bad")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="defectsim",
        description="Deterministic federated-optimization runs with rational "
                    "agent defection, plus guarantee-level audits.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="execute the configured runs")
    run_parser.add_argument("--config", required=True)
    run_parser.add_argument("--out", help="output directory (overrides config)")
    run_parser.add_argument("--seed", type=int, help="seed override")
    run_parser.add_argument("--format", action="append", choices=KNOWN_OUTPUTS,
                            help="output format (repeatable)")
    run_parser.set_defaults(func=cmd_run)

    check_parser = sub.add_parser("check", help="validate a problem's assumptions")
    check_parser.add_argument("problem_id")
    check_parser.add_argument("--samples", type=int, default=200)
    check_parser.add_argument("--seed", type=int, default=0)
    check_parser.set_defaults(func=cmd_check)

    compare_parser = sub.add_parser("compare", help="aligned comparison of >= 2 algorithms")
    compare_parser.add_argument("--config", required=True)
    compare_parser.add_argument("--out")
    compare_parser.add_argument("--seed", type=int)
    compare_parser.set_defaults(func=cmd_compare)

    probe_parser = sub.add_parser("probe", help="label a grid of starts as harmful/benign")
    probe_parser.add_argument("--config", required=True)
    probe_parser.add_argument("--out")
    probe_parser.add_argument("--seed", type=int)
    probe_parser.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
