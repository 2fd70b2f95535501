"""Post-hoc auditors: check each guarantee's conclusion against a stored
trace, classify defections as benign or harmful, and probe bad regions.

Audits run over traces rather than inside the optimizers so counterexample
runs can violate preconditions without crashing, and so stored traces stay
independently re-checkable.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .core import (
    CLAMP_SLACK,
    CaseLabel,
    InvalidInputError,
    OutcomeKind,
    Point,
    ProblemInstance,
    Trace,
    average_loss,
    evaluate_oracle,
)
from .linalg import project_complement
from .algorithms import RunConfig, run_ada_gd, run_by_id
from .core import PreconditionError

# Absolute slack for the prediction-soundness and final-quality bounds.
AUDIT_TOL = 1e-9
ORTHOGONALITY_TOL = 1e-8
SPAN_RESIDUAL_TOL = 1e-8

_ADAPTIVE_CASES = (CaseLabel.MIXED, CaseLabel.NONE_DEFECTING, CaseLabel.ALL_DEFECTING)


@dataclass(frozen=True)
class AuditCheck:
    name: str
    passed: bool
    worst_violation: float
    round: int | None = None
    applicable: bool = True
    detail: str = ""


@dataclass(frozen=True)
class AuditReport:
    """Pass/fail ledger; every named check appears exactly once."""

    checks: tuple[AuditCheck, ...]

    def __post_init__(self):
        names = [c.name for c in self.checks]
        if len(names) != len(set(names)):
            raise InvalidInputError("duplicate check names in audit report")

    def check(self, name: str) -> AuditCheck:
        for entry in self.checks:
            if entry.name == name:
                return entry
        raise KeyError(name)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks if c.applicable)


class DefectionClass(str, Enum):
    NO_DEFECTION = "NoDefection"
    BENIGN = "Benign"
    HARMFUL = "Harmful"


def _trace_epsilons(problem: ProblemInstance, trace: Trace,
                    config: RunConfig | None) -> tuple[float, ...]:
    snap = trace.config_snapshot
    if "epsilons" in snap:
        return tuple(float(e) for e in snap["epsilons"])
    if config is not None and config.epsilon is not None:
        if np.isscalar(config.epsilon):
            return (float(config.epsilon),) * problem.num_agents
        return tuple(float(e) for e in config.epsilon)
    return problem.precisions


def _trace_eta(trace: Trace, config: RunConfig | None) -> float:
    if "eta" in trace.config_snapshot:
        return float(trace.config_snapshot["eta"])
    if config is not None:
        return config.eta
    raise InvalidInputError("trace carries no step size and none was supplied")


def _trace_delta(trace: Trace, config: RunConfig | None) -> float:
    if "delta" in trace.config_snapshot:
        return float(trace.config_snapshot["delta"])
    if config is not None:
        return config.delta
    raise InvalidInputError("trace carries no slack and none was supplied")


def audit_no_defection(trace: Trace) -> AuditCheck:
    """Passes iff no round contains a defection event (vacuously on empty)."""
    for record in trace.rounds:
        if record.defections:
            return AuditCheck("no_defection", False, float(len(record.defections)),
                              round=record.round,
                              detail=f"agents {sorted(record.defections)} defected")
    return AuditCheck("no_defection", True, 0.0)


def audit_prediction_soundness(problem: ProblemInstance, trace: Trace,
                               config: RunConfig | None = None) -> AuditCheck:
    """Check the one-oracle-call defection predictor against its guarantees.

    For every recorded prediction and every member m with a nonzero gradient,
    evaluate the loss after the personalized probe step w - eta * ghat_m: a
    predicted defector must land at or below eps_m + 2 delta, a predicted
    stayer strictly above eps_m + delta (absolute tolerance 1e-9). Members
    with vanishing gradients are skipped (the probe is undefined there).
    """
    eta = _trace_eta(trace, config)
    delta = _trace_delta(trace, config)
    epsilons = _trace_epsilons(problem, trace, config)
    h_max = max(agent.smoothness for agent in problem.agents)
    predictor_eta_ok = eta <= np.sqrt(2.0 * delta / h_max) + 1e-15
    worst = 0.0
    worst_round = None
    checked = 0
    for record in trace.rounds:
        members = [(m, True) for m in record.predicted_defecting]
        members += [(m, False) for m in record.predicted_nondefecting]
        for m, predicted_defector in members:
            out = evaluate_oracle(problem.agents[m], record.iterate)
            norm = float(np.linalg.norm(out.gradient))
            if norm == 0.0:
                continue  # probe direction undefined; vacuous
            probe = record.iterate - eta * out.gradient / norm
            value = evaluate_oracle(problem.agents[m], probe).value
            checked += 1
            if predicted_defector:
                violation = value - (epsilons[m] + 2.0 * delta)
            else:
                violation = (epsilons[m] + delta) - value
            if violation > worst:
                worst = violation
                worst_round = record.round
    detail = f"{checked} membership probes; predictor step condition " \
             f"{'held' if predictor_eta_ok else 'VIOLATED (recorded, not enforced)'}"
    return AuditCheck("prediction_soundness", worst <= AUDIT_TOL, worst,
                      round=worst_round, detail=detail)


def _round_average(record) -> float:
    return float(np.mean(record.per_agent_loss))


def audit_progress(problem: ProblemInstance, trace: Trace) -> AuditCheck:
    """Average loss must strictly decrease across every adaptive update round."""
    worst = -np.inf
    worst_round = None
    applicable = False
    for i, record in enumerate(trace.rounds):
        if record.case not in (CaseLabel.MIXED, CaseLabel.NONE_DEFECTING):
            continue
        if record.update_direction is None:
            continue
        applicable = True
        if i + 1 < len(trace.rounds):
            next_value = _round_average(trace.rounds[i + 1])
        else:
            next_value = average_loss(problem, trace.outcome.point)
        gain = next_value - _round_average(record)
        if gain > worst:
            worst = gain
            worst_round = record.round
    if not applicable:
        return AuditCheck("progress", True, 0.0, applicable=True,
                          detail="no update rounds; vacuous")
    return AuditCheck("progress", worst < 0.0, float(worst), round=worst_round,
                      detail="strict decrease of the average loss")


def audit_final_quality(problem: ProblemInstance, trace: Trace,
                        config: RunConfig | None = None) -> AuditCheck:
    """Returned models must satisfy F(w_hat) <= eps + 3 delta.

    With heterogeneous targets the largest eps_m is used. Not applicable to
    traces that hit the round cap or halted.
    """
    if trace.outcome.kind != OutcomeKind.RETURNED:
        return AuditCheck("final_quality", True, 0.0, applicable=False,
                          detail=f"outcome {trace.outcome.kind.value}; not applicable")
    delta = _trace_delta(trace, config)
    epsilons = _trace_epsilons(problem, trace, config)
    bound = max(epsilons) + 3.0 * delta
    value = average_loss(problem, trace.outcome.point)
    violation = value - bound
    return AuditCheck("final_quality", violation <= AUDIT_TOL, violation,
                      detail=f"F(w_hat)={value!r} vs bound {bound!r}")


def audit_case1_orthogonality(problem: ProblemInstance, trace: Trace) -> AuditCheck:
    """Mixed-round updates must be orthogonal to every predicted defector's
    gradient, within 1e-8 times the gradient norm."""
    worst = 0.0
    worst_round = None
    for record in trace.rounds:
        if record.case != CaseLabel.MIXED or record.update_direction is None:
            continue
        for m in record.predicted_defecting:
            grad = evaluate_oracle(problem.agents[m], record.iterate).gradient
            norm = float(np.linalg.norm(grad))
            if norm == 0.0:
                continue
            overlap = abs(float(grad @ record.update_direction))
            violation = overlap - ORTHOGONALITY_TOL * norm
            if violation > worst:
                worst = violation
                worst_round = record.round
    return AuditCheck("case1_orthogonality", worst <= 0.0, worst, round=worst_round)


def audit_clamp(trace: Trace) -> AuditCheck:
    """Adaptive update directions must have norm at most 1 (+1e-12)."""
    worst = 0.0
    worst_round = None
    for record in trace.rounds:
        if record.case not in (CaseLabel.MIXED, CaseLabel.NONE_DEFECTING):
            continue
        if record.update_direction is None:
            continue
        excess = float(np.linalg.norm(record.update_direction)) - 1.0
        if excess > worst:
            worst = excess
            worst_round = record.round
    return AuditCheck("clamp", worst <= CLAMP_SLACK, worst, round=worst_round)


def audit_span_membership(problem: ProblemInstance, trace: Trace) -> AuditCheck:
    """Every update direction must lie in the span of the gradients the
    surviving agents submitted that round (residual <= 1e-8 of its norm).

    Applicable to single-oracle-call algorithms only; local-update traces
    (K > 1) are aggregates of shifted gradients and are skipped.
    """
    if trace.algorithm_id.startswith("fedavg"):
        snap = trace.config_snapshot
        if int(snap.get("K", 1)) != 1 or bool(snap.get("stochastic", False)):
            return AuditCheck("span_membership", True, 0.0, applicable=False,
                              detail="local/stochastic updates are not span-restricted")
    defected: set[int] = set()
    worst = 0.0
    worst_round = None
    for record in trace.rounds:
        defected |= set(record.defections)
        if record.update_direction is None:
            continue
        direction = record.update_direction
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            continue
        grads = [evaluate_oracle(problem.agents[m], record.iterate).gradient
                 for m in range(problem.num_agents) if m not in defected]
        residual = float(np.linalg.norm(project_complement(direction, grads)))
        violation = residual - SPAN_RESIDUAL_TOL * norm
        if violation > worst:
            worst = violation
            worst_round = record.round
    return AuditCheck("span_membership", worst <= 0.0, worst, round=worst_round)


def audit_defection_permanence(trace: Trace) -> AuditCheck:
    """No agent may defect twice or reappear in a prediction afterwards."""
    defected: set[int] = set()
    for record in trace.rounds:
        repeat = defected & set(record.defections)
        if repeat:
            return AuditCheck("defection_permanence", False, float(len(repeat)),
                              round=record.round,
                              detail=f"agents {sorted(repeat)} defected twice")
        defected |= set(record.defections)
        ghosts = defected & (set(record.predicted_defecting)
                             | set(record.predicted_nondefecting))
        if ghosts:
            return AuditCheck("defection_permanence", False, float(len(ghosts)),
                              round=record.round,
                              detail=f"defected agents {sorted(ghosts)} still predicted")
    return AuditCheck("defection_permanence", True, 0.0)


def audit_prediction_coverage(problem: ProblemInstance, trace: Trace) -> AuditCheck:
    """On adaptive rounds the predicted sets must partition the agents that
    were still active after that round's defections."""
    defected: set[int] = set()
    everyone = set(range(problem.num_agents))
    for record in trace.rounds:
        defected |= set(record.defections)
        if record.case not in _ADAPTIVE_CASES:
            continue
        predicted = set(record.predicted_defecting) | set(record.predicted_nondefecting)
        active = everyone - defected
        if predicted != active and predicted:  # empty sets mark all-defected rounds
            missing = active ^ predicted
            return AuditCheck("prediction_coverage", False, float(len(missing)),
                              round=record.round,
                              detail=f"agents {sorted(missing)} mislabelled")
    return AuditCheck("prediction_coverage", True, 0.0)


def run_standard_audits(problem: ProblemInstance, trace: Trace,
                        config: RunConfig | None = None) -> AuditReport:
    """Run every guarantee-level audit that applies to this trace."""
    return AuditReport((
        audit_no_defection(trace),
        audit_prediction_soundness(problem, trace, config),
        audit_progress(problem, trace),
        audit_final_quality(problem, trace, config),
        audit_case1_orthogonality(problem, trace),
        audit_clamp(trace),
        audit_span_membership(problem, trace),
        audit_defection_permanence(trace),
        audit_prediction_coverage(problem, trace),
    ))


def classify_defections(problem: ProblemInstance, trace: Trace,
                        tol: float = AUDIT_TOL) -> DefectionClass:
    """Label a completed run.

    Harmful: at least one defection and the final model misses some agent's
    target (F_m above eps_m + tol). Benign: defections happened but the
    final model satisfies every agent. NoDefection otherwise.
    """
    epsilons = _trace_epsilons(problem, trace, None)
    any_defection = any(record.defections for record in trace.rounds)
    if not any_defection:
        return DefectionClass.NO_DEFECTION
    final = trace.outcome.point
    losses = [evaluate_oracle(agent, final).value for agent in problem.agents]
    if any(value > eps + tol for value, eps in zip(losses, epsilons)):
        return DefectionClass.HARMFUL
    return DefectionClass.BENIGN


@dataclass(frozen=True)
class ProbePoint:
    """One grid point's labels across the probed algorithms.

    ``empirically_bad`` means every probed algorithm ended harmful from
    here. This under-approximates a true bad region, which quantifies over
    all span-restricted algorithms; no finite probe certifies that.
    """

    w0: tuple[float, ...]
    labels: Mapping[str, DefectionClass]
    empirically_bad: bool
    in_target_set: bool


def probe_bad_region(problem: ProblemInstance, w0_grid: Sequence[Point],
                     algorithm_ids: Sequence[str],
                     config: RunConfig) -> tuple[ProbePoint, ...]:
    """Run each algorithm from each grid point and label the outcomes."""
    if not algorithm_ids:
        raise InvalidInputError("need at least one algorithm to probe")
    if config.epsilon is None:
        epsilons = problem.precisions
    elif np.isscalar(config.epsilon):
        epsilons = (float(config.epsilon),) * problem.num_agents
    else:
        epsilons = tuple(float(e) for e in config.epsilon)
    results = []
    for w0 in w0_grid:
        w0 = np.asarray(w0, dtype=np.float64)
        labels: dict[str, DefectionClass] = {}
        for algorithm_id in algorithm_ids:
            run_config = RunConfig(eta=config.eta, w0=w0, delta=config.delta,
                                   epsilon=config.epsilon,
                                   max_rounds=config.max_rounds,
                                   rank_tol=config.rank_tol, seed=config.seed)
            try:
                trace = run_by_id(algorithm_id, problem, run_config)
            except PreconditionError:
                # Grid points inside a target set: probe the literal protocol
                # semantics (the satisfied agents defect at round one).
                trace = run_ada_gd(problem, run_config, enforce_start=False)
            labels[algorithm_id] = classify_defections(problem, trace)
        in_target = all(
            evaluate_oracle(agent, w0).value <= eps + AUDIT_TOL
            for agent, eps in zip(problem.agents, epsilons))
        bad = all(label == DefectionClass.HARMFUL for label in labels.values())
        results.append(ProbePoint(tuple(float(x) for x in w0), labels, bad, in_target))
    return tuple(results)


def find_harmful_step_scale(problem: ProblemInstance, algorithm_id: str,
                            config: RunConfig,
                            scales: Sequence[float] | None = None):
    """Search a logarithmic grid of step-size scalings for a harmful run.

    Scans c in {1, 1/2, ..., 2^-20} (descending) and returns the first
    (c, trace) whose defections are harmful, or None if none is.
    """
    if scales is None:
        scales = [2.0 ** (-k) for k in range(21)]
    for scale in scales:
        scaled = RunConfig(eta=config.eta * scale, w0=config.w0,
                           delta=config.delta, epsilon=config.epsilon,
                           max_rounds=config.max_rounds,
                           rank_tol=config.rank_tol, seed=config.seed)
        trace = run_by_id(algorithm_id, problem, scaled)
        if classify_defections(problem, trace) == DefectionClass.HARMFUL:
            return scale, trace
    return None
