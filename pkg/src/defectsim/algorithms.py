"""Execution engines: the generic span-restricted round loop with rational
defection, the uniform-averaging and local-update baselines, and the adaptive
defection-aware aggregation method with its step-size bound.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import (
    AgentObjective,
    CaseLabel,
    DegenerateUpdateError,
    InvalidInputError,
    NonFiniteOracleError,
    OracleOutput,
    Outcome,
    Point,
    PreconditionError,
    ProblemInstance,
    RoundRecord,
    Trace,
    as_point,
    evaluate_oracle,
    wants_to_defect,
)
from .linalg import DEFAULT_RANK_TOL, project_complement
from .problems import DataProblem


class RuleKind(str, Enum):
    UNIFORM_MEAN = "UniformMean"
    WEIGHTED_UNIFORM = "WeightedUniform"
    ADA_GD = "AdaGd"


@dataclass(frozen=True)
class AggregationRule:
    """How the server turns submitted oracles into an update vector.

    Every rule outputs a vector in the span of the received gradients; the
    uniform rules place the same (possibly oracle-dependent) weight on all
    of them.
    """

    kind: RuleKind
    weight_fn: Callable[[Sequence[OracleOutput]], float] | None = None

    @staticmethod
    def uniform_mean() -> "AggregationRule":
        return AggregationRule(RuleKind.UNIFORM_MEAN)

    @staticmethod
    def weighted_uniform(weight_fn) -> "AggregationRule":
        return AggregationRule(RuleKind.WEIGHTED_UNIFORM, weight_fn=weight_fn)

    @staticmethod
    def ada_gd() -> "AggregationRule":
        return AggregationRule(RuleKind.ADA_GD)

    def aggregate(self, outputs: Sequence[OracleOutput]) -> Point:
        if self.kind == RuleKind.ADA_GD:
            raise InvalidInputError(
                "the adaptive rule is stateful; use run_ada_gd")
        if not outputs:
            raise InvalidInputError("cannot aggregate zero oracle outputs")
        mean = np.mean([out.gradient for out in outputs], axis=0)
        if self.kind == RuleKind.WEIGHTED_UNIFORM:
            weight = float(self.weight_fn(outputs)) if self.weight_fn else 1.0
            return weight * mean
        return mean

    @property
    def algorithm_id(self) -> str:
        return {RuleKind.UNIFORM_MEAN: "uniform-gd",
                RuleKind.WEIGHTED_UNIFORM: "weighted-uniform-gd",
                RuleKind.ADA_GD: "ada-gd"}[self.kind]


@dataclass(frozen=True)
class RunConfig:
    """Run parameters shared by all algorithms.

    ``epsilon`` may be a scalar (applied to every agent), a per-agent
    sequence, or ``None`` to use the problem's own precision targets.
    ``delta`` is the prediction slack; adaptive runs require
    0 < delta <= min(epsilon).
    """

    eta: float
    w0: Point
    delta: float = 0.05
    epsilon: float | Sequence[float] | None = None
    max_rounds: int = 1_000_000
    rank_tol: float = DEFAULT_RANK_TOL
    seed: int = 0

    def __post_init__(self):
        if self.eta <= 0:
            raise InvalidInputError("eta must be > 0")
        if self.delta <= 0:
            raise InvalidInputError("delta must be > 0")
        if self.max_rounds < 1:
            raise InvalidInputError("max_rounds must be >= 1")
        if self.rank_tol <= 0:
            raise InvalidInputError("rank_tol must be > 0")
        object.__setattr__(self, "w0", as_point(self.w0))


def resolve_epsilons(problem: ProblemInstance, config: RunConfig) -> tuple[float, ...]:
    if config.epsilon is None:
        return problem.precisions
    if np.isscalar(config.epsilon):
        value = float(config.epsilon)
        if value <= 0:
            raise InvalidInputError("epsilon must be > 0")
        return (value,) * problem.num_agents
    values = tuple(float(e) for e in config.epsilon)
    if len(values) != problem.num_agents:
        raise InvalidInputError("need one epsilon per agent")
    if any(e <= 0 for e in values):
        raise InvalidInputError("epsilon must be > 0")
    return values


def step_size_bound(delta: float, L: float, H: float, M: int) -> float:
    """Largest safe step size min(delta/L, sqrt(delta/(2H)), 1/(M H))."""
    if delta <= 0 or L <= 0 or H <= 0 or M <= 0:
        raise InvalidInputError("step_size_bound needs positive arguments")
    return min(delta / L, math.sqrt(delta / (2.0 * H)), 1.0 / (M * H))


def problem_step_size_bound(problem: ProblemInstance, delta: float) -> float:
    """Step bound using the worst declared constants across agents."""
    h_max = max(agent.smoothness for agent in problem.agents)
    l_max = max(agent.lipschitz for agent in problem.agents)
    return step_size_bound(delta, l_max, h_max, problem.num_agents)


def predict_sets(oracle_outputs: Sequence[OracleOutput], eta: float,
                 epsilons: Sequence[float], delta: float,
                 ids: Sequence[int] | None = None) -> tuple[frozenset[int], frozenset[int]]:
    """Split agents into predicted-defecting and predicted-staying sets.

    Agent m is predicted to defect iff value_m - eta * |grad_m| <= eps_m +
    delta (inclusive). ``ids`` maps each output to its agent id (defaults to
    positional); ``epsilons`` is indexed by agent id.
    """
    if eta <= 0 or delta <= 0:
        raise InvalidInputError("eta and delta must be > 0")
    if ids is None:
        ids = range(len(oracle_outputs))
    defecting = set()
    staying = set()
    for agent_id, out in zip(ids, oracle_outputs):
        descent_estimate = out.value - eta * float(np.linalg.norm(out.gradient))
        if descent_estimate <= epsilons[agent_id] + delta:
            defecting.add(agent_id)
        else:
            staying.add(agent_id)
    return frozenset(defecting), frozenset(staying)


@dataclass(frozen=True)
class StepResult:
    """One adaptive-aggregation decision: either an update or a termination."""

    kind: str  # "update" | "terminate"
    case: CaseLabel
    direction: Point | None = None
    point: Point | None = None
    predicted_defecting: frozenset[int] = frozenset()
    predicted_nondefecting: frozenset[int] = frozenset()
    outputs: Mapping[int, OracleOutput] = field(default_factory=dict)


def ada_gd_step(problem: ProblemInstance, w: Point, active: frozenset[int] | set[int],
                config: RunConfig, epsilons: Sequence[float] | None = None,
                outputs: Mapping[int, OracleOutput] | None = None) -> StepResult:
    """One round of adaptive defection-aware aggregation.

    Collects (or reuses) the active agents' oracles, predicts who is about to
    be satisfied, then:

    * everyone predicted to defect -> terminate with the current model;
    * nobody predicted to defect  -> clamped steepest descent on the average;
    * mixed -> project the staying agents' summed gradient onto the
      orthogonal complement of the predicted defectors' gradient span,
      normalize, and clamp.

    Raises :class:`DegenerateUpdateError` if a normalization denominator
    falls below the rank tolerance, which signals a heterogeneity or
    precondition violation rather than silently dividing.
    """
    if epsilons is None:
        epsilons = resolve_epsilons(problem, config)
    ids = sorted(active)
    if not ids:
        raise InvalidInputError("ada_gd_step needs at least one active agent")
    if outputs is None:
        outputs = {m: evaluate_oracle(problem.agents[m], w) for m in ids}
    defecting, staying = predict_sets([outputs[m] for m in ids], config.eta,
                                      epsilons, config.delta, ids=ids)
    if not staying:
        return StepResult("terminate", CaseLabel.ALL_DEFECTING, point=w,
                          predicted_defecting=defecting,
                          predicted_nondefecting=staying, outputs=outputs)
    if not defecting:
        mean_grad = np.mean([outputs[m].gradient for m in ids], axis=0)
        norm = float(np.linalg.norm(mean_grad))
        if norm <= config.rank_tol:
            raise DegenerateUpdateError(
                "average gradient vanished away from the shared optimum",
                case=CaseLabel.NONE_DEFECTING, predicted_defecting=defecting,
                predicted_nondefecting=staying)
        direction = (-min(norm, 1.0) / norm) * mean_grad
        return StepResult("update", CaseLabel.NONE_DEFECTING, direction=direction,
                          predicted_defecting=defecting,
                          predicted_nondefecting=staying, outputs=outputs)
    staying_sum = np.sum([outputs[m].gradient for m in sorted(staying)], axis=0)
    defector_grads = [outputs[m].gradient for m in sorted(defecting)]
    projected = project_complement(staying_sum, defector_grads, config.rank_tol)
    norm = float(np.linalg.norm(projected))
    scale = max(float(np.linalg.norm(staying_sum)), 1.0)
    if norm <= config.rank_tol * scale:
        raise DegenerateUpdateError(
            "staying agents' gradient lies in the predicted defectors' span",
            case=CaseLabel.MIXED, predicted_defecting=defecting,
            predicted_nondefecting=staying)
    direction = (-min(norm, 1.0) / norm) * projected
    return StepResult("update", CaseLabel.MIXED, direction=direction,
                      predicted_defecting=defecting,
                      predicted_nondefecting=staying, outputs=outputs)


def _base_snapshot(problem: ProblemInstance, config: RunConfig,
                   epsilons: Sequence[float], algorithm_id: str) -> dict:
    return {
        "algorithm_id": algorithm_id,
        "problem_id": problem.problem_id,
        "eta": config.eta,
        "epsilons": list(epsilons),
        "delta": config.delta,
        "max_rounds": config.max_rounds,
        "w0": config.w0.tolist(),
        "rank_tol": config.rank_tol,
        "seed": config.seed,
    }


def _ground_truth_outputs(problem: ProblemInstance, w: Point) -> dict[int, OracleOutput]:
    return {m: evaluate_oracle(agent, w)
            for m, agent in enumerate(problem.agents)}


def _collect_defectors(outputs: Mapping[int, OracleOutput], active: set[int],
                       epsilons: Sequence[float]) -> frozenset[int]:
    return frozenset(m for m in active
                     if wants_to_defect(outputs[m].value, epsilons[m]))


def run_ada_gd(problem: ProblemInstance, config: RunConfig,
               enforce_start: bool = True) -> Trace:
    """Run the adaptive defection-aware method until it returns a model,
    hits the round cap, or halts on a degenerate update.

    Preconditions: the initialization must lie outside every agent's target
    sublevel set (raises :class:`PreconditionError` otherwise) and the slack
    must satisfy 0 < delta <= min(epsilon). Exceeding the step-size bound
    only warns, so counterexample experiments can run. Region probes may
    pass ``enforce_start=False`` to get the literal protocol semantics from
    a disallowed start (satisfied agents simply defect at round one).
    """
    epsilons = resolve_epsilons(problem, config)
    if not config.delta <= min(epsilons):
        raise InvalidInputError(
            f"adaptive runs need delta <= min(epsilon); got delta={config.delta}, "
            f"min epsilon={min(epsilons)}")
    w = as_point(config.w0, problem.dimension)
    if enforce_start:
        initial = _ground_truth_outputs(problem, w)
        satisfied = [m for m in range(problem.num_agents)
                     if initial[m].value <= epsilons[m]]
        if satisfied:
            raise PreconditionError(
                f"initialization already satisfies agents {satisfied}; the "
                f"no-defection guarantee needs a start outside every target set")
    bound = problem_step_size_bound(problem, config.delta)
    snapshot = _base_snapshot(problem, config, epsilons, "ada-gd")
    snapshot["eta_bound"] = bound
    snapshot["eta_exceeds_bound"] = config.eta > bound
    if not enforce_start:
        snapshot["enforce_start"] = False
    if config.eta > bound:
        warnings.warn(
            f"eta={config.eta} exceeds the step-size bound {bound}; the "
            f"no-defection guarantee may not hold", stacklevel=2)

    active = set(range(problem.num_agents))
    rounds: list[RoundRecord] = []
    outcome: Outcome | None = None
    for t in range(1, config.max_rounds + 1):
        try:
            outputs = _ground_truth_outputs(problem, w)
        except NonFiniteOracleError as exc:
            outcome = Outcome.halted(w, f"non-finite oracle: {exc}")
            break
        defectors = _collect_defectors(outputs, active, epsilons)
        active -= defectors
        losses = tuple(outputs[m].value for m in range(problem.num_agents))
        if not active:
            rounds.append(RoundRecord(t, w, losses, frozenset(), frozenset(),
                                      CaseLabel.ALL_DEFECTING, None, config.eta,
                                      defectors))
            outcome = Outcome.returned(w, all_defected=True)
            break
        try:
            step = ada_gd_step(problem, w, active, config, epsilons,
                               outputs={m: outputs[m] for m in active})
        except DegenerateUpdateError as exc:
            rounds.append(RoundRecord(t, w, losses, exc.predicted_defecting,
                                      exc.predicted_nondefecting,
                                      exc.case or CaseLabel.MIXED, None,
                                      config.eta, defectors))
            outcome = Outcome.halted(w, f"degenerate update: {exc}")
            break
        if step.kind == "terminate":
            rounds.append(RoundRecord(t, w, losses, step.predicted_defecting,
                                      step.predicted_nondefecting, step.case,
                                      None, config.eta, defectors))
            outcome = Outcome.returned(step.point)
            break
        rounds.append(RoundRecord(t, w, losses, step.predicted_defecting,
                                  step.predicted_nondefecting, step.case,
                                  step.direction, config.eta, defectors))
        w = w + config.eta * step.direction
    if outcome is None:
        outcome = Outcome.round_cap(w)
    return Trace(problem.problem_id, "ada-gd", snapshot, tuple(rounds), outcome)


def run_icfo(rule: AggregationRule, problem: ProblemInstance,
             config: RunConfig) -> Trace:
    """Generic round loop: broadcast, rational defection, oracle collection,
    span-restricted aggregation, update. Runs exactly ``max_rounds`` rounds
    unless every agent defects first.
    """
    if rule.kind == RuleKind.ADA_GD:
        return run_ada_gd(problem, config)
    epsilons = resolve_epsilons(problem, config)
    w = as_point(config.w0, problem.dimension)
    snapshot = _base_snapshot(problem, config, epsilons, rule.algorithm_id)
    active = set(range(problem.num_agents))
    rounds: list[RoundRecord] = []
    outcome: Outcome | None = None
    for r in range(1, config.max_rounds + 1):
        try:
            outputs = _ground_truth_outputs(problem, w)
        except NonFiniteOracleError as exc:
            outcome = Outcome.halted(w, f"non-finite oracle: {exc}")
            break
        defectors = _collect_defectors(outputs, active, epsilons)
        active -= defectors
        losses = tuple(outputs[m].value for m in range(problem.num_agents))
        if not active:
            rounds.append(RoundRecord(r, w, losses, frozenset(), frozenset(),
                                      CaseLabel.BASELINE_ROUND, None,
                                      config.eta, defectors))
            outcome = Outcome.returned(w, all_defected=True)
            break
        aggregate = rule.aggregate([outputs[m] for m in sorted(active)])
        direction = -aggregate  # w_next = w + eta * direction
        rounds.append(RoundRecord(r, w, losses, frozenset(), frozenset(),
                                  CaseLabel.BASELINE_ROUND, direction,
                                  config.eta, defectors))
        w = w + config.eta * direction
    if outcome is None:
        outcome = Outcome.returned(w)
    return Trace(problem.problem_id, rule.algorithm_id, snapshot,
                 tuple(rounds), outcome)


def run_fedavg(problem_with_data: ProblemInstance | DataProblem, K: int,
               config: RunConfig, stochastic: bool = False) -> Trace:
    """Local-update baseline: each survivor takes K local steps of size
    eta/K from the broadcast model, and the server averages the returned
    iterates over survivors. Defection is checked at round start.

    Full-gradient mode works on any problem; stochastic mode samples one
    data point per local step with the run's seeded generator and therefore
    needs a :class:`DataProblem`.
    """
    if K < 1:
        raise InvalidInputError("K must be >= 1")
    data = problem_with_data if isinstance(problem_with_data, DataProblem) else None
    problem = data.problem if data is not None else problem_with_data
    if stochastic and data is None:
        raise InvalidInputError("stochastic local steps need per-agent datasets")
    epsilons = resolve_epsilons(problem, config)
    w = as_point(config.w0, problem.dimension)
    algorithm_id = f"fedavg:K={K}" + (",stochastic" if stochastic else "")
    snapshot = _base_snapshot(problem, config, epsilons, algorithm_id)
    snapshot["K"] = K
    snapshot["stochastic"] = stochastic
    rng = np.random.default_rng(config.seed)
    local_step = config.eta / K

    active = set(range(problem.num_agents))
    rounds: list[RoundRecord] = []
    outcome: Outcome | None = None
    for r in range(1, config.max_rounds + 1):
        try:
            outputs = _ground_truth_outputs(problem, w)
        except NonFiniteOracleError as exc:
            outcome = Outcome.halted(w, f"non-finite oracle: {exc}")
            break
        defectors = _collect_defectors(outputs, active, epsilons)
        active -= defectors
        losses = tuple(outputs[m].value for m in range(problem.num_agents))
        if not active:
            rounds.append(RoundRecord(r, w, losses, frozenset(), frozenset(),
                                      CaseLabel.BASELINE_ROUND, None,
                                      config.eta, defectors))
            outcome = Outcome.returned(w, all_defected=True)
            break
        try:
            local_models = [
                _local_updates(problem.agents[m], data, m, w, K, local_step,
                               rng, stochastic)
                for m in sorted(active)
            ]
        except NonFiniteOracleError as exc:
            outcome = Outcome.halted(w, f"non-finite oracle: {exc}")
            break
        w_next = np.mean(local_models, axis=0)
        direction = (w_next - w) / config.eta
        rounds.append(RoundRecord(r, w, losses, frozenset(), frozenset(),
                                  CaseLabel.BASELINE_ROUND, direction,
                                  config.eta, defectors))
        w = w_next
    if outcome is None:
        outcome = Outcome.returned(w)
    return Trace(problem.problem_id, algorithm_id, snapshot, tuple(rounds), outcome)


def _local_updates(agent: AgentObjective, data: DataProblem | None, agent_id: int,
                   w: Point, K: int, local_step: float, rng: np.random.Generator,
                   stochastic: bool) -> Point:
    current = np.array(w, dtype=np.float64)
    for _ in range(K):
        if stochastic:
            dataset = data.datasets[agent_id]
            index = int(rng.integers(len(dataset)))
            grad = data.pointwise_grad(current, dataset.features[index],
                                       float(dataset.labels[index]))
            grad = np.asarray(grad, dtype=np.float64)
            if not np.all(np.isfinite(grad)):
                raise NonFiniteOracleError(f"non-finite sample gradient on {agent_id}")
        else:
            grad = evaluate_oracle(agent, current).gradient
        current = current - local_step * grad
    return current


def parse_algorithm_id(algorithm_id: str):
    """Turn a CLI algorithm id into a runner ``f(problem, config) -> Trace``.

    Known ids: ``ada-gd``, ``uniform-gd``, ``fedavg:K=<k>[,stochastic]``.
    """
    spec = algorithm_id.strip()
    if spec == "ada-gd":
        def run(problem, config):
            instance = problem.problem if isinstance(problem, DataProblem) else problem
            return run_ada_gd(instance, config)
        return run
    if spec == "uniform-gd":
        def run(problem, config):
            instance = problem.problem if isinstance(problem, DataProblem) else problem
            return run_icfo(AggregationRule.uniform_mean(), instance, config)
        return run
    if spec.startswith("fedavg:"):
        parts = spec[len("fedavg:"):].split(",")
        stochastic = False
        k_value = None
        for part in parts:
            part = part.strip()
            if part == "stochastic":
                stochastic = True
            elif part.startswith("K="):
                try:
                    k_value = int(part[2:])
                except ValueError as exc:
                    raise InvalidInputError(f"malformed fedavg option {part!r}") from exc
            else:
                raise InvalidInputError(f"unknown fedavg option {part!r}")
        if k_value is None:
            raise InvalidInputError("fedavg ids must carry K=<k>")

        def run(problem, config):
            return run_fedavg(problem, k_value, config, stochastic=stochastic)
        return run
    raise InvalidInputError(f"unknown algorithm id {algorithm_id!r}")


def run_by_id(algorithm_id: str, problem, config: RunConfig) -> Trace:
    return parse_algorithm_id(algorithm_id)(problem, config)
