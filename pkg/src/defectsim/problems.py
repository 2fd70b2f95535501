"""Problem catalog: smoothed counterexamples, random families, validators.

Every catalog objective carries exact constants (H from the smoothing width
or the spectrum, L over a documented run box) and an optimum witness, so the
assumption validator and the step-size bound work without hand tuning.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    AgentObjective,
    InvalidInputError,
    OracleOutput,
    Point,
    ProblemInstance,
    as_point,
    evaluate_oracle,
)
from .linalg import linearly_independent

# Default half-width of the quadratic smoothing cap. Counterexample
# conclusions are asserted with tolerances scaled by this value.
DEFAULT_MU = 1e-3

# Default precision target per agent; runs may override via their config.
DEFAULT_EPSILON = 0.1

# Gradient-norm bounds (the L constants) are declared over a ball of this
# radius around the shared optimum unless a constructor says otherwise.
DEFAULT_BOX_RADIUS = 2.0


@dataclass(frozen=True)
class SmoothingParams:
    """Huber-style smoothing half-width (quadratic cap on [-mu, mu])."""

    mu: float

    def __post_init__(self):
        if self.mu <= 0:
            raise InvalidInputError("mu must be > 0")


def huber_value(t: float, mu: float) -> float:
    """Smoothed |t|: t^2/(2 mu) inside the cap, |t| - mu/2 outside."""
    if abs(t) <= mu:
        return t * t / (2.0 * mu)
    return abs(t) - mu / 2.0


def huber_slope(t: float, mu: float) -> float:
    if abs(t) <= mu:
        return t / mu
    return 1.0 if t > 0 else -1.0


def ramp_value(t: float, mu: float) -> float:
    """Smoothed max(t, 0): 0 for t <= 0, quadratic on [0, mu], linear after."""
    if t <= 0.0:
        return 0.0
    if t <= mu:
        return t * t / (2.0 * mu)
    return t - mu / 2.0


def ramp_slope(t: float, mu: float) -> float:
    if t <= 0.0:
        return 0.0
    if t <= mu:
        return t / mu
    return 1.0


def smooth_abs(a, mu: float, witness=None, name: str = "") -> AgentObjective:
    """Objective w -> huber(a . w) with exact constants H = |a|^2/mu, L = |a|."""
    a = as_point(a)
    norm_a = float(np.linalg.norm(a))
    if norm_a == 0.0:
        raise InvalidInputError("direction a must be nonzero")
    params = SmoothingParams(mu)
    if witness is None:
        witness = np.zeros(a.size)  # a . 0 == 0 sits at the kink center

    def oracle(w: Point) -> OracleOutput:
        t = float(a @ w)
        return OracleOutput(huber_value(t, params.mu), huber_slope(t, params.mu) * a)

    def margin(w: Point) -> float:
        t = float(a @ w)
        return min(abs(t - params.mu), abs(t + params.mu)) / norm_a

    return AgentObjective(
        oracle=oracle,
        smoothness=norm_a ** 2 / params.mu,
        lipschitz=norm_a,
        optimum_witness=witness,
        name=name or f"smooth-abs({a.tolist()})",
        smoothing_margin=margin,
    )


def smooth_hinge(a, b: float, mu: float, witness=None, name: str = "") -> AgentObjective:
    """Objective w -> ramp(a . w + b) with H = |a|^2/mu, L = |a|."""
    a = as_point(a)
    norm_a = float(np.linalg.norm(a))
    if norm_a == 0.0:
        raise InvalidInputError("direction a must be nonzero")
    params = SmoothingParams(mu)
    if witness is None:
        # Solve a . w + b = -1, comfortably inside the flat region.
        witness = -(b + 1.0) * a / norm_a ** 2

    def oracle(w: Point) -> OracleOutput:
        t = float(a @ w) + b
        return OracleOutput(ramp_value(t, params.mu), ramp_slope(t, params.mu) * a)

    def margin(w: Point) -> float:
        t = float(a @ w) + b
        return min(abs(t), abs(t - params.mu)) / norm_a

    return AgentObjective(
        oracle=oracle,
        smoothness=norm_a ** 2 / params.mu,
        lipschitz=norm_a,
        optimum_witness=witness,
        name=name or f"smooth-hinge({a.tolist()},{b})",
        smoothing_margin=margin,
    )


def quadratic_objective(matrix, w_star, box_radius: float = DEFAULT_BOX_RADIUS,
                        name: str = "") -> AgentObjective:
    """Objective w -> (w - w*)' A (w - w*) / 2 for symmetric PSD A."""
    matrix = np.array(matrix, dtype=np.float64)
    w_star = as_point(w_star)
    eigenvalues = np.linalg.eigvalsh(matrix)
    if eigenvalues[0] < -1e-12:
        raise InvalidInputError("quadratic objectives must be positive semidefinite")
    h_const = float(eigenvalues[-1])

    def oracle(w: Point) -> OracleOutput:
        z = w - w_star
        grad = matrix @ z
        return OracleOutput(0.5 * float(z @ grad), grad)

    return AgentObjective(
        oracle=oracle,
        smoothness=h_const,
        lipschitz=h_const * box_radius,
        optimum_witness=w_star,
        name=name or "quadratic",
        smoothing_margin=None,
    )


def band_corridor_objective(a, halfwidth: float, mu: float, witness,
                            name: str = "") -> AgentObjective:
    """Smoothed distance-to-band loss: ramp(a.w - c) + ramp(-a.w - c).

    Zero exactly on the corridor {w : |a . w| <= c}, linear of slope |a|
    outside; the two smoothing zones are disjoint whenever c > 0.
    """
    a = as_point(a)
    norm_a = float(np.linalg.norm(a))
    if norm_a == 0.0:
        raise InvalidInputError("direction a must be nonzero")
    if halfwidth <= 0:
        raise InvalidInputError("halfwidth must be > 0")
    params = SmoothingParams(mu)

    def oracle(w: Point) -> OracleOutput:
        t = float(a @ w)
        value = ramp_value(t - halfwidth, params.mu) + ramp_value(-t - halfwidth, params.mu)
        slope = ramp_slope(t - halfwidth, params.mu) - ramp_slope(-t - halfwidth, params.mu)
        return OracleOutput(value, slope * a)

    def margin(w: Point) -> float:
        t = float(a @ w)
        kinks = (halfwidth, halfwidth + params.mu, -halfwidth, -halfwidth - params.mu)
        return min(abs(t - k) for k in kinks) / norm_a

    return AgentObjective(
        oracle=oracle,
        smoothness=norm_a ** 2 / params.mu,
        lipschitz=norm_a,
        optimum_witness=witness,
        name=name or "band-corridor",
        smoothing_margin=margin,
    )


def disk_quadratic_objective(center, radius: float, box_radius: float,
                             witness, name: str = "") -> AgentObjective:
    """Half squared distance to a closed disk: zero inside, (|w-c|-r)^2/2 out.

    Convex and 1-smooth everywhere (squared distance to a convex set).
    """
    center = as_point(center)
    if radius <= 0:
        raise InvalidInputError("radius must be > 0")

    def oracle(w: Point) -> OracleOutput:
        z = w - center
        dist = float(np.linalg.norm(z))
        gap = dist - radius
        if gap <= 0.0:
            return OracleOutput(0.0, np.zeros_like(z))
        return OracleOutput(0.5 * gap * gap, (gap / dist) * z)

    def margin(w: Point) -> float:
        # Curvature jumps across the disk boundary.
        return abs(float(np.linalg.norm(w - center)) - radius)

    return AgentObjective(
        oracle=oracle,
        smoothness=1.0,
        lipschitz=box_radius + float(np.linalg.norm(center)),
        optimum_witness=witness,
        name=name or "disk-quadratic",
        smoothing_margin=margin,
    )


# ---------------------------------------------------------------------------
# Catalog constructors
# ---------------------------------------------------------------------------

def make_bad_region_example(mu: float = DEFAULT_MU) -> ProblemInstance:
    """Two smoothed absolute-value losses whose union of target sets traps
    any span-restricted method started at (1, 1): the second agent is already
    satisfied there, and the average loss stays near 1/2 on the reachable line.
    """
    origin = np.zeros(2)
    agents = (
        smooth_abs((0.0, 1.0), mu, witness=origin, name="abs-e2"),
        smooth_abs((1.0, -1.0), mu, witness=origin, name="abs-diag"),
    )
    return ProblemInstance(
        dimension=2,
        agents=agents,
        precisions=(DEFAULT_EPSILON, DEFAULT_EPSILON),
        problem_id=f"bad-region:mu={mu:g}",
        notes={"w0": (1.0, 1.0), "mu": mu},
    )


def make_uniform_agg_family(alpha: float, mu: float = DEFAULT_MU) -> ProblemInstance:
    """Member P_alpha of the hinge family that defeats uniform averaging.

    While both hinges are active the average gradient is the constant
    (1/2, 0), so equal-weight aggregation slides along a line until the
    second agent is satisfied and leaves.
    """
    if alpha < 0:
        raise InvalidInputError("alpha must be >= 0")
    witness = as_point((-(alpha + 1.0), 0.0))
    agents = (
        smooth_hinge((0.0, 1.0), 0.0, mu, witness=witness, name="hinge-e2"),
        smooth_hinge((1.0, -1.0), alpha, mu, witness=witness, name="hinge-diag"),
    )
    return ProblemInstance(
        dimension=2,
        agents=agents,
        precisions=(DEFAULT_EPSILON, DEFAULT_EPSILON),
        problem_id=f"uniform-agg:alpha={alpha:g}",
        notes={"w0": (2.0, 1.0), "alpha": alpha, "mu": mu},
    )


def make_benign_example() -> ProblemInstance:
    """Two nested quadratics (F2 = F1 / 2) for which any defection is benign.

    Whichever point satisfies agent 1 automatically satisfies agent 2, so the
    second agent's early exit never pushes the final model out of the target
    intersection. Deliberately degenerate for projection-based aggregation:
    the gradients are parallel everywhere.
    """
    w_star = np.zeros(2)
    agents = (
        quadratic_objective(np.eye(2), w_star, box_radius=4.0, name="quad-full"),
        quadratic_objective(0.5 * np.eye(2), w_star, box_radius=4.0, name="quad-half"),
    )
    return ProblemInstance(
        dimension=2,
        agents=agents,
        precisions=(DEFAULT_EPSILON, DEFAULT_EPSILON),
        problem_id="benign",
        notes={"suggested_radius": (1.0, 3.0)},
    )


def make_nonhetero_bad_example(mu: float = DEFAULT_MU) -> ProblemInstance:
    """A pair with somewhere-parallel gradients where slow descent is harmful.

    Agent 1 owns a horizontal corridor of zero loss through the origin;
    agent 2 owns a disk tangent to the origin from above. Their gradients are
    parallel on the vertical axis below the corridor (see ``parallel_point``
    in the notes). Gradient descent on the average from the documented start
    crosses the corridor on its way to the disk, agent 1 leaves inside it,
    and the remaining flow carries the model far from the corridor.
    """
    w_star = np.zeros(2)
    band_halfwidth = 0.05
    disk_center = (0.0, 1.5)
    disk_radius = 1.5
    agents = (
        band_corridor_objective((0.0, 1.0), band_halfwidth, mu, witness=w_star,
                                name="corridor"),
        disk_quadratic_objective(disk_center, disk_radius, box_radius=6.0,
                                 witness=w_star, name="disk"),
    )
    return ProblemInstance(
        dimension=2,
        agents=agents,
        precisions=(DEFAULT_EPSILON, DEFAULT_EPSILON),
        problem_id=f"nonhetero-bad:mu={mu:g}",
        notes={
            "w0": (4.0, -1.0),
            "parallel_point": (0.0, -1.0),
            "band_halfwidth": band_halfwidth,
            "disk_center": disk_center,
            "disk_radius": disk_radius,
            "mu": mu,
        },
    )


def make_random_quadratics(M: int, d: int, seed: int,
                           box_radius: float = DEFAULT_BOX_RADIUS) -> ProblemInstance:
    """Seeded strongly convex quadratics sharing one optimum.

    Each curvature matrix is B'B + 0.1 I with B standard normal, so the
    constants are finite and the gradients at any common non-optimal point
    are linearly independent almost surely (spot-checked at construction).
    Requires M <= d, otherwise independence is generically impossible.
    """
    if not (1 <= M <= d):
        raise InvalidInputError("need 1 <= M <= d for independent gradients")
    if d > 50:
        raise InvalidInputError("catalog quadratics support d <= 50")
    rng = np.random.default_rng(seed)
    w_star = rng.standard_normal(d)
    agents = []
    for m in range(M):
        b = rng.standard_normal((d, d))
        matrix = b.T @ b + 0.1 * np.eye(d)
        agents.append(quadratic_objective(matrix, w_star, box_radius=box_radius,
                                          name=f"quad-{m}"))
    problem = ProblemInstance(
        dimension=d,
        agents=tuple(agents),
        precisions=(DEFAULT_EPSILON,) * M,
        problem_id=f"quadratic:M={M},d={d},seed={seed}",
        notes={"box_radius": box_radius},
    )
    for point in _sample_box(rng, w_star, box_radius, 10):
        grads = [evaluate_oracle(a, point).gradient for a in problem.agents]
        if not linearly_independent(grads):
            raise InvalidInputError(
                f"seed {seed} produced dependent gradients (measure-zero event)")
    return problem


# ---------------------------------------------------------------------------
# Finite-sum problems (for the local-update baseline)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabeledDataset:
    """One agent's supervised data: feature rows and scalar labels."""

    features: np.ndarray  # shape (n, d)
    labels: np.ndarray    # shape (n,)
    owner: int

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.float64)
        if features.ndim != 2 or labels.ndim != 1 or features.shape[0] != labels.size:
            raise InvalidInputError("features must be (n, d) with n matching labels")
        if not (np.all(np.isfinite(features)) and np.all(np.isfinite(labels))):
            raise InvalidInputError("datasets must be finite")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.size

    def rows(self) -> list[tuple[tuple[float, ...], float]]:
        """Hashable (feature, label) pairs, for multiset comparisons."""
        return [(tuple(x), float(y)) for x, y in zip(self.features, self.labels)]


@dataclass(frozen=True)
class DataProblem:
    """A problem whose agent losses are means of a pointwise loss over data."""

    problem: ProblemInstance
    datasets: tuple[LabeledDataset, ...]
    pointwise_value: Callable[[Point, np.ndarray, float], float]
    pointwise_grad: Callable[[Point, np.ndarray, float], Point]


def squared_error_objective(dataset: LabeledDataset, witness,
                            box_radius: float = DEFAULT_BOX_RADIUS,
                            name: str = "") -> AgentObjective:
    """Least-squares loss (1/2n) sum (x.w - y)^2 over one dataset."""
    x = dataset.features
    y = dataset.labels
    n = len(dataset)
    if n == 0:
        raise InvalidInputError("datasets must be nonempty")
    covariance = x.T @ x / n
    h_const = float(np.linalg.eigvalsh(covariance)[-1])

    def oracle(w: Point) -> OracleOutput:
        residual = x @ w - y
        value = 0.5 * float(residual @ residual) / n
        return OracleOutput(value, x.T @ residual / n)

    return AgentObjective(
        oracle=oracle,
        smoothness=h_const,
        lipschitz=h_const * box_radius,
        optimum_witness=witness,
        name=name or f"lsq-{dataset.owner}",
        smoothing_margin=None,
    )


def make_linear_regression(M: int, n_per: int, d: int, seed: int,
                           q: float = 0.0) -> DataProblem:
    """Realizable least-squares agents over seeded synthetic data.

    Labels are generated from one shared parameter vector, so that vector is
    a common zero-loss witness. ``q`` mixes the per-agent datasets with the
    heterogeneity partitioner before the objectives are built.
    """
    if M < 1 or n_per < 1 or d < 1:
        raise InvalidInputError("M, n_per, d must be >= 1")
    rng = np.random.default_rng(seed)
    w_shared = rng.standard_normal(d) / np.sqrt(d)
    datasets = []
    for m in range(M):
        # Distinct per-agent feature scaling so the data is heterogeneous.
        scales = 0.5 + rng.random(d)
        features = rng.standard_normal((n_per, d)) * scales
        labels = features @ w_shared
        datasets.append(LabeledDataset(features, labels, owner=m))
    if q > 0.0:
        datasets = list(partition_heterogeneity(datasets, q, seed=seed + 1))
    witness = as_point(w_shared)
    agents = tuple(squared_error_objective(ds, witness, name=f"lsq-{m}")
                   for m, ds in enumerate(datasets))
    problem = ProblemInstance(
        dimension=d,
        agents=agents,
        precisions=(DEFAULT_EPSILON,) * M,
        problem_id=f"linreg:M={M},n={n_per},d={d},seed={seed},q={q:g}",
        notes={"q": q},
    )

    def pointwise_value(w: Point, x_row: np.ndarray, y_val: float) -> float:
        r = float(x_row @ w) - y_val
        return 0.5 * r * r

    def pointwise_grad(w: Point, x_row: np.ndarray, y_val: float) -> Point:
        return (float(x_row @ w) - y_val) * x_row

    return DataProblem(problem, tuple(datasets), pointwise_value, pointwise_grad)


def partition_heterogeneity(datasets: Sequence[LabeledDataset], q: float,
                            seed: int) -> tuple[LabeledDataset, ...]:
    """Re-mix datasets so each agent keeps a (1-q) share of its own rows and
    receives an equal 1/n share of the pooled q-shares.

    Inputs are first trimmed to the common minimum size. The output is an
    exact multiset rearrangement of the trimmed rows and every output has the
    trimmed size; q = 0 is the identity on the trimmed inputs.
    """
    if not 0.0 <= q <= 1.0:
        raise InvalidInputError("q must lie in [0, 1]")
    if len(datasets) == 0:
        return ()
    rng = np.random.default_rng(seed)
    size = min(len(ds) for ds in datasets)
    if size == 0:
        raise InvalidInputError("datasets must be nonempty")
    trimmed = [(ds.features[:size], ds.labels[:size], ds.owner) for ds in datasets]
    share = int(round(q * size))

    kept_parts: list[tuple[np.ndarray, np.ndarray]] = []
    pooled_x: list[np.ndarray] = []
    pooled_y: list[np.ndarray] = []
    for features, labels, _ in trimmed:
        perm = rng.permutation(size)
        keep = np.sort(perm[: size - share])
        give = np.sort(perm[size - share:])
        kept_parts.append((features[keep], labels[keep]))
        pooled_x.append(features[give])
        pooled_y.append(labels[give])

    n = len(trimmed)
    pool_features = np.concatenate(pooled_x) if share else np.zeros((0, trimmed[0][0].shape[1]))
    pool_labels = np.concatenate(pooled_y) if share else np.zeros(0)
    order = rng.permutation(n * share) if share else np.zeros(0, dtype=int)

    outputs = []
    for i, (features, labels, owner) in enumerate(trimmed):
        chunk = order[i * share: (i + 1) * share]
        out_features = np.concatenate([kept_parts[i][0], pool_features[chunk]])
        out_labels = np.concatenate([kept_parts[i][1], pool_labels[chunk]])
        outputs.append(LabeledDataset(out_features, out_labels, owner=owner))
    return tuple(outputs)


# ---------------------------------------------------------------------------
# Assumption validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    worst_violation: float
    detail: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    problem_id: str
    checks: tuple[AssumptionCheck, ...]

    def check(self, name: str) -> AssumptionCheck:
        for entry in self.checks:
            if entry.name == name:
                return entry
        raise KeyError(name)

    @property
    def core_passed(self) -> bool:
        """Convexity/smoothness, Lipschitz, and shared-optimum checks."""
        core = ("convexity", "smoothness", "lipschitz", "realizability")
        return all(self.check(name).passed for name in core)

    @property
    def all_passed(self) -> bool:
        return all(entry.passed for entry in self.checks)


def _sample_box(rng: np.random.Generator, center: np.ndarray, radius: float,
                count: int) -> np.ndarray:
    """Uniform-ish samples in the ball of the given radius around center."""
    d = center.size
    directions = rng.standard_normal((count, d))
    directions /= np.maximum(np.linalg.norm(directions, axis=1, keepdims=True), 1e-300)
    radii = radius * rng.random(count) ** (1.0 / d)
    return center + directions * radii[:, None]


def validate_assumptions(problem: ProblemInstance, samples: int = 200,
                         box_radius: float = DEFAULT_BOX_RADIUS, seed: int = 0,
                         tol: float = 1e-9) -> AssumptionReport:
    """Empirically check convexity/smoothness, Lipschitzness, the shared
    optimum, and gradient independence on seeded samples around the optimum.

    Failures are reported, never raised: the counterexample catalog violates
    gradient independence by design.
    """
    if samples < 1:
        raise InvalidInputError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    w_star = problem.shared_optimum
    points = _sample_box(rng, w_star, box_radius, 2 * samples)
    pairs = list(zip(points[:samples], points[samples:]))

    worst_convexity = 0.0
    worst_smooth = 0.0
    worst_lipschitz = 0.0
    for u, v in pairs:
        mid = 0.5 * (u + v)
        gap = float(np.linalg.norm(u - v))
        for agent in problem.agents:
            out_u = evaluate_oracle(agent, u)
            out_v = evaluate_oracle(agent, v)
            out_mid = evaluate_oracle(agent, mid)
            worst_convexity = max(
                worst_convexity,
                out_mid.value - 0.5 * (out_u.value + out_v.value))
            grad_gap = float(np.linalg.norm(out_u.gradient - out_v.gradient))
            worst_smooth = max(worst_smooth, grad_gap - agent.smoothness * gap)
            value_gap = abs(out_u.value - out_v.value)
            worst_lipschitz = max(worst_lipschitz, value_gap - agent.lipschitz * gap)

    worst_realizability = max(
        evaluate_oracle(agent, w_star).value for agent in problem.agents)

    dependent_points = 0
    tested_points = 0
    for point in points[:samples]:
        outputs = [evaluate_oracle(agent, point) for agent in problem.agents]
        if all(out.value <= tol for out in outputs):
            continue  # inside the shared optimum set
        grads = [out.gradient for out in outputs
                 if float(np.linalg.norm(out.gradient)) > 0.0]
        if not grads:
            continue
        tested_points += 1
        if not linearly_independent(grads):
            dependent_points += 1

    slack = tol
    checks = (
        AssumptionCheck("convexity", worst_convexity <= slack, worst_convexity,
                        f"midpoint rule on {samples} pairs"),
        AssumptionCheck("smoothness", worst_smooth <= slack, worst_smooth,
                        "gradient differences vs declared H"),
        AssumptionCheck("lipschitz", worst_lipschitz <= slack, worst_lipschitz,
                        f"value differences vs declared L (box {box_radius:g})"),
        AssumptionCheck("realizability", worst_realizability <= tol,
                        worst_realizability, "losses at the shared witness"),
        AssumptionCheck("heterogeneity", dependent_points == 0,
                        float(dependent_points),
                        f"dependent gradients at {dependent_points}/{tested_points} points"),
    )
    return AssumptionReport(problem.problem_id, checks)


# ---------------------------------------------------------------------------
# String-addressable catalog (CLI surface)
# ---------------------------------------------------------------------------

def _parse_spec(spec: str) -> tuple[str, dict[str, float]]:
    name, _, rest = spec.partition(":")
    params: dict[str, float] = {}
    if rest:
        for item in rest.split(","):
            key, _, raw = item.partition("=")
            if not key or not raw:
                raise InvalidInputError(f"malformed problem id {spec!r}")
            try:
                params[key.strip()] = float(raw)
            except ValueError as exc:
                raise InvalidInputError(f"malformed value in {spec!r}") from exc
    return name.strip(), params


def get_problem(problem_id: str):
    """Resolve a catalog id like ``quadratic:M=3,d=5,seed=7``.

    Returns a :class:`ProblemInstance`, or a :class:`DataProblem` for the
    finite-sum entries. Unknown names raise :class:`InvalidInputError`.
    """
    name, params = _parse_spec(problem_id)
    if name == "bad-region":
        return make_bad_region_example(mu=params.get("mu", DEFAULT_MU))
    if name == "uniform-agg":
        return make_uniform_agg_family(alpha=params.get("alpha", 0.0),
                                       mu=params.get("mu", DEFAULT_MU))
    if name == "benign":
        return make_benign_example()
    if name == "nonhetero-bad":
        return make_nonhetero_bad_example(mu=params.get("mu", DEFAULT_MU))
    if name == "quadratic":
        return make_random_quadratics(M=int(params.get("M", 2)),
                                      d=int(params.get("d", 3)),
                                      seed=int(params.get("seed", 0)))
    if name == "linreg":
        return make_linear_regression(M=int(params.get("M", 2)),
                                      n_per=int(params.get("n", 100)),
                                      d=int(params.get("d", 5)),
                                      seed=int(params.get("seed", 0)),
                                      q=params.get("q", 0.0))
    raise InvalidInputError(f"unknown problem id {problem_id!r}")


def catalog_ids() -> tuple[str, ...]:
    return ("bad-region", "uniform-agg:alpha=<a>", "benign", "nonhetero-bad",
            "quadratic:M=<m>,d=<d>,seed=<s>", "linreg:M=<m>,n=<n>,d=<d>,seed=<s>,q=<q>")
