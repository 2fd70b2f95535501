"""Domain types and first-order-oracle plumbing shared by every other module.

A problem is a collection of agents, each exposing a deterministic oracle
that maps a parameter vector to (loss, gradient).  Agents are rational: an
agent that receives a model whose local loss is at or below its precision
target leaves the protocol permanently.  Everything downstream (algorithms,
audits, the CLI) is built on the value types defined here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Optional

import numpy as np

# A point is a 1-D float64 vector of model parameters. Arrays handed to the
# public API are frozen; internally produced arrays are never mutated.
Point = np.ndarray

REALIZABILITY_TOL = 1e-9


class DefectSimError(Exception):
    """Base class for all simulator errors."""


class InvalidInputError(DefectSimError, ValueError):
    """An argument violates a documented precondition."""


class DimensionMismatchError(InvalidInputError):
    """A vector's dimension does not match the problem's."""


class NonFiniteOracleError(DefectSimError):
    """An oracle produced NaN or Inf. Runs halt instead of propagating it."""


class DegenerateUpdateError(DefectSimError):
    """A normalization denominator fell below the rank tolerance.

    Signals a heterogeneity or precondition violation; the caller decides
    whether to halt the run or surface the error directly.
    """

    def __init__(self, message: str, case: "CaseLabel | None" = None,
                 predicted_defecting: frozenset[int] = frozenset(),
                 predicted_nondefecting: frozenset[int] = frozenset()):
        super().__init__(message)
        self.case = case
        self.predicted_defecting = predicted_defecting
        self.predicted_nondefecting = predicted_nondefecting


class PreconditionError(DefectSimError):
    """A run-level precondition (e.g. the initialization) does not hold."""


def as_point(coords, dim: int | None = None) -> Point:
    """Coerce ``coords`` to a frozen 1-D float64 array with finite entries."""
    arr = np.array(coords, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise InvalidInputError(f"a point must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise DimensionMismatchError(f"expected dimension {dim}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("points must have finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class OracleOutput:
    """The pair (loss value, gradient) reported by one agent at one point."""

    value: float
    gradient: Point


@dataclass(frozen=True)
class AgentObjective:
    """One agent's loss: a pure first-order oracle plus declared constants.

    Parameters
    ----------
    oracle:
        Deterministic map from a parameter vector to :class:`OracleOutput`.
    smoothness:
        Declared curvature bound H (gradient is H-Lipschitz).
    lipschitz:
        Declared bound L on gradient norms over the documented run box.
    optimum_witness:
        A point where this agent's loss is (numerically) zero.
    name:
        Catalog label, used in reports only.
    smoothing_margin:
        Optional map from a point to its distance from the nearest
        smoothing-zone boundary; ``None`` means smooth everywhere. Used by
        gradient checks to exclude points where central differences degrade.
    """

    oracle: Callable[[Point], OracleOutput]
    smoothness: float
    lipschitz: float
    optimum_witness: Point
    name: str = ""
    smoothing_margin: Optional[Callable[[Point], float]] = None

    def __post_init__(self):
        if self.smoothness < 0 or self.lipschitz < 0:
            raise InvalidInputError("smoothness and lipschitz constants must be >= 0")
        object.__setattr__(self, "optimum_witness", as_point(self.optimum_witness))
        witness_value = self.oracle(self.optimum_witness).value
        if not witness_value <= REALIZABILITY_TOL:
            raise InvalidInputError(
                f"objective {self.name!r} has loss {witness_value!r} at its "
                f"optimum witness (must be <= {REALIZABILITY_TOL})")


@dataclass(frozen=True)
class ProblemInstance:
    """A set of agents over a common domain with per-agent precision targets."""

    dimension: int
    agents: tuple[AgentObjective, ...]
    precisions: tuple[float, ...]
    problem_id: str = ""
    notes: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "precisions", tuple(float(e) for e in self.precisions))
        if self.dimension < 1:
            raise InvalidInputError("dimension must be >= 1")
        if not self.agents:
            raise InvalidInputError("a problem needs at least one agent")
        if len(self.precisions) != len(self.agents):
            raise InvalidInputError("need one precision target per agent")
        if any(e <= 0 for e in self.precisions):
            raise InvalidInputError("precision targets must be > 0")
        for agent in self.agents:
            if agent.optimum_witness.size != self.dimension:
                raise DimensionMismatchError(
                    f"agent {agent.name!r} has witness dimension "
                    f"{agent.optimum_witness.size}, problem has {self.dimension}")
        # Realizability: the first agent's witness must satisfy everyone.
        shared = self.agents[0].optimum_witness
        for agent in self.agents:
            value = agent.oracle(shared).value
            if not value <= REALIZABILITY_TOL:
                raise InvalidInputError(
                    f"no shared optimum: agent {agent.name!r} has loss "
                    f"{value!r} at the common witness")

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    @property
    def shared_optimum(self) -> Point:
        return self.agents[0].optimum_witness


@dataclass
class AgentState:
    """Participation bookkeeping for one agent. Defection is permanent."""

    id: int
    active: bool = True
    defected_at_round: int | None = None

    def defect(self, round_index: int) -> None:
        if not self.active:
            raise InvalidInputError(f"agent {self.id} already defected")
        self.active = False
        self.defected_at_round = round_index


class CaseLabel(str, Enum):
    """Which branch produced a round's update (or termination)."""

    MIXED = "Mixed"
    NONE_DEFECTING = "NoneDefecting"
    ALL_DEFECTING = "AllDefecting"
    BASELINE_ROUND = "BaselineRound"


# Update directions from the adaptive algorithm are norm-clamped to 1.
CLAMP_SLACK = 1e-12
_ADAPTIVE_CASES = (CaseLabel.MIXED, CaseLabel.NONE_DEFECTING)


@dataclass(frozen=True)
class RoundRecord:
    """Per-round snapshot, written by every run loop.

    ``iterate`` is the model broadcast at the start of the round and
    ``per_agent_loss`` holds every agent's loss there (including agents that
    already defected -- the simulator records ground truth, the server never
    sees it).  ``defections`` are the agents that left upon receiving this
    iterate.  ``update_direction`` is g with ``w_next = iterate + step * g``.
    """

    round: int
    iterate: Point
    per_agent_loss: tuple[float, ...]
    predicted_defecting: frozenset[int]
    predicted_nondefecting: frozenset[int]
    case: CaseLabel
    update_direction: Point | None
    step: float
    defections: frozenset[int]

    def __post_init__(self):
        if self.round < 1:
            raise InvalidInputError("round indices start at 1")
        if self.predicted_defecting & self.predicted_nondefecting:
            raise InvalidInputError("predicted sets must be disjoint")
        if self.case in _ADAPTIVE_CASES and self.update_direction is not None:
            norm = float(np.linalg.norm(self.update_direction))
            if norm > 1.0 + CLAMP_SLACK:
                raise InvalidInputError(
                    f"adaptive update direction has norm {norm} > 1")

    @property
    def average_loss(self) -> float:
        return float(np.mean(self.per_agent_loss))


class OutcomeKind(str, Enum):
    RETURNED = "Returned"
    ROUND_CAP = "RoundCapReached"
    HALTED = "Halted"


@dataclass(frozen=True)
class Outcome:
    """How a run ended and with which final model."""

    kind: OutcomeKind
    point: Point
    reason: str | None = None
    all_defected: bool = False

    @staticmethod
    def returned(point: Point, all_defected: bool = False) -> "Outcome":
        return Outcome(OutcomeKind.RETURNED, point, all_defected=all_defected)

    @staticmethod
    def round_cap(point: Point) -> "Outcome":
        return Outcome(OutcomeKind.ROUND_CAP, point)

    @staticmethod
    def halted(point: Point, reason: str) -> "Outcome":
        return Outcome(OutcomeKind.HALTED, point, reason=reason)


@dataclass(frozen=True)
class Trace:
    """Full record of one run: config snapshot, per-round records, outcome."""

    problem_id: str
    algorithm_id: str
    config_snapshot: Mapping[str, object]
    rounds: tuple[RoundRecord, ...]
    outcome: Outcome

    def __post_init__(self):
        object.__setattr__(self, "rounds", tuple(self.rounds))
        previous = 0
        for record in self.rounds:
            if record.round <= previous:
                raise InvalidInputError("round indices must increase strictly")
            previous = record.round
        if self.rounds and self.rounds[0].round != 1:
            raise InvalidInputError("round indices must start at 1")

    @property
    def defection_rounds(self) -> dict[int, int]:
        """Map agent id -> round at which it defected."""
        out: dict[int, int] = {}
        for record in self.rounds:
            for agent_id in record.defections:
                out.setdefault(agent_id, record.round)
        return out


def evaluate_oracle(agent: AgentObjective, w: Point) -> OracleOutput:
    """Query an agent's first-order oracle at ``w``.

    Raises :class:`DimensionMismatchError` on shape mismatch and
    :class:`NonFiniteOracleError` if the oracle returns NaN or Inf.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size != agent.optimum_witness.size:
        raise DimensionMismatchError(
            f"point of shape {w.shape} does not match objective dimension "
            f"{agent.optimum_witness.size}")
    out = agent.oracle(w)
    gradient = np.asarray(out.gradient, dtype=np.float64)
    if gradient.shape != w.shape:
        raise DimensionMismatchError(
            f"oracle for {agent.name!r} returned gradient of shape "
            f"{gradient.shape} at a point of shape {w.shape}")
    if not np.isfinite(out.value) or not np.all(np.isfinite(gradient)):
        raise NonFiniteOracleError(f"non-finite oracle output from {agent.name!r}")
    return OracleOutput(float(out.value), gradient)


def wants_to_defect(loss: float, epsilon: float) -> bool:
    """Rational-agent rule: leave iff the received model's loss is <= epsilon.

    The boundary is inclusive: a loss of exactly epsilon defects.
    """
    if epsilon <= 0:
        raise InvalidInputError("epsilon must be > 0")
    return loss <= epsilon


def average_loss(problem: ProblemInstance, w: Point) -> float:
    """Mean loss over all agents, including any that defected.

    The server's objective is fixed when the agents are sampled; defection
    removes an agent from the protocol, not from the objective.
    """
    values = [evaluate_oracle(agent, w).value for agent in problem.agents]
    return float(np.mean(values))
