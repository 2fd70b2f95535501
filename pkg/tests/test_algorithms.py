import math

import numpy as np
import pytest

from defectsim.algorithms import (
    AggregationRule,
    RunConfig,
    ada_gd_step,
    parse_algorithm_id,
    predict_sets,
    problem_step_size_bound,
    resolve_epsilons,
    run_ada_gd,
    run_fedavg,
    run_icfo,
    step_size_bound,
)
from defectsim.analysis import run_standard_audits
from defectsim.core import (
    AgentObjective,
    CaseLabel,
    DegenerateUpdateError,
    InvalidInputError,
    OracleOutput,
    OutcomeKind,
    PreconditionError,
    ProblemInstance,
    average_loss,
    evaluate_oracle,
)
from defectsim.problems import (
    make_bad_region_example,
    make_benign_example,
    make_linear_regression,
    make_random_quadratics,
    make_uniform_agg_family,
    quadratic_objective,
    smooth_abs,
)
from defectsim.traceio import trace_json


class TestStepSizeBound:
    def test_last_term_binds(self):
        assert step_size_bound(0.1, 1.0, 10.0, 5) == pytest.approx(0.02)

    def test_first_term_binds(self):
        assert step_size_bound(0.1, 1.0, 1.0, 2) == pytest.approx(0.1)

    def test_sqrt_scaling(self):
        # With the sqrt term binding, scaling delta by 4 doubles the bound.
        base = step_size_bound(0.1, 0.1, 1.0, 1)
        scaled = step_size_bound(0.4, 0.1, 1.0, 1)
        assert base == pytest.approx(math.sqrt(0.1 / 2.0))
        assert scaled == pytest.approx(2 * base)

    def test_rejects_non_positive(self):
        with pytest.raises(InvalidInputError):
            step_size_bound(0.0, 1.0, 1.0, 1)


class TestPredictSets:
    def test_predicted_defector(self):
        out = OracleOutput(0.045, np.array([0.3]))
        defecting, staying = predict_sets([out], eta=0.05, epsilons=[0.04],
                                          delta=0.01)
        assert defecting == {0} and staying == frozenset()

    def test_predicted_stayer(self):
        out = OracleOutput(10.0, np.array([1.0]))
        defecting, staying = predict_sets([out], eta=0.01, epsilons=[0.1],
                                          delta=0.01)
        assert staying == {0} and defecting == frozenset()

    def test_boundary_is_inclusive(self):
        # value - eta * |grad| lands exactly on eps + delta.
        out = OracleOutput(0.2, np.array([1.0]))
        defecting, _ = predict_sets([out], eta=0.05, epsilons=[0.1], delta=0.05)
        assert defecting == {0}

    def test_per_agent_epsilons_and_ids(self):
        outs = [OracleOutput(0.3, np.array([0.1])), OracleOutput(0.3, np.array([0.1]))]
        defecting, staying = predict_sets(outs, eta=0.1, epsilons=[0.05, 0.5],
                                          delta=0.01, ids=[0, 1])
        assert defecting == {1} and staying == {0}


def projection_problem():
    """At w = (2, 0.02): agent 0 has value 0.015, gradient (0, 1) (will be
    predicted defecting); agent 1 has value ~0.609, gradient (0.3, 0.7)."""
    agents = (
        smooth_abs((0.0, 1.0), 0.01, name="near-target"),
        smooth_abs((0.3, 0.7), 0.01, name="far"),
    )
    return ProblemInstance(2, agents, (0.1, 0.1), problem_id="projection-toy")


class TestAdaGdStep:
    def test_mixed_case_projects_and_clamps(self):
        problem = projection_problem()
        w = np.array([2.0, 0.02])
        config = RunConfig(eta=0.01, w0=w, delta=0.05, epsilon=0.1)
        step = ada_gd_step(problem, w, {0, 1}, config)
        assert step.kind == "update"
        assert step.case == CaseLabel.MIXED
        assert step.predicted_defecting == {0}
        assert step.predicted_nondefecting == {1}
        assert np.allclose(step.direction, [-0.3, 0.0], atol=1e-12)
        assert abs(float(step.direction @ np.array([0.0, 1.0]))) <= 1e-12

    def test_none_defecting_clamped_descent(self):
        problem = ProblemInstance(
            2, (quadratic_objective(np.eye(2), np.zeros(2)),) * 2, (0.1, 0.1))
        w = np.array([3.0, 4.0])
        config = RunConfig(eta=0.001, w0=w, delta=0.05, epsilon=0.1)
        step = ada_gd_step(problem, w, {0, 1}, config)
        assert step.case == CaseLabel.NONE_DEFECTING
        assert np.allclose(step.direction, [-0.6, -0.8])
        assert np.linalg.norm(step.direction) == pytest.approx(1.0, abs=1e-12)

    def test_all_defecting_terminates(self):
        problem = ProblemInstance(
            2, (quadratic_objective(np.eye(2), np.zeros(2)),), (0.1,))
        w = np.array([0.05, 0.0])
        config = RunConfig(eta=0.01, w0=w, delta=0.05, epsilon=0.1)
        step = ada_gd_step(problem, w, {0}, config)
        assert step.kind == "terminate"
        assert step.case == CaseLabel.ALL_DEFECTING
        assert np.array_equal(step.point, w)

    def test_degenerate_projection_raises(self):
        problem = make_benign_example()
        # Agent 1 is close to target, agent 0 far; their gradients are
        # parallel, so the projected direction vanishes.
        w = np.array([0.77, 0.0])
        config = RunConfig(eta=0.001, w0=w, delta=0.05, epsilon=0.1)
        with pytest.raises(DegenerateUpdateError):
            ada_gd_step(problem, w, {0, 1}, config)


def quadratic_run_config(problem, seed=1, radius=1.6, **overrides):
    rng = np.random.default_rng(1000 + seed)
    direction = rng.standard_normal(problem.dimension)
    direction /= np.linalg.norm(direction)
    params = dict(eta=problem_step_size_bound(problem, 0.05),
                  w0=problem.shared_optimum + radius * direction,
                  delta=0.05, epsilon=0.1, max_rounds=10 ** 6)
    params.update(overrides)
    return RunConfig(**params)


class TestRunAdaGd:
    def test_guarantee_conditions_end_to_end(self):
        problem = make_random_quadratics(2, 3, seed=1)
        trace = run_ada_gd(problem, quadratic_run_config(problem))
        assert trace.outcome.kind == OutcomeKind.RETURNED
        assert all(not record.defections for record in trace.rounds)
        assert average_loss(problem, trace.outcome.point) <= 0.25

    def test_precondition_rejects_satisfied_start(self):
        problem = make_random_quadratics(2, 3, seed=1)
        with pytest.raises(PreconditionError):
            run_ada_gd(problem, quadratic_run_config(problem,
                                                     w0=problem.shared_optimum))

    def test_round_cap(self):
        problem = make_random_quadratics(2, 3, seed=1)
        trace = run_ada_gd(problem, quadratic_run_config(problem, max_rounds=1))
        assert trace.outcome.kind == OutcomeKind.ROUND_CAP
        assert len(trace.rounds) == 1

    def test_delta_must_not_exceed_epsilon(self):
        problem = make_random_quadratics(2, 3, seed=1)
        with pytest.raises(InvalidInputError):
            run_ada_gd(problem, quadratic_run_config(problem, delta=0.2))

    def test_eta_above_bound_warns_and_records(self):
        problem = make_random_quadratics(2, 3, seed=1)
        config = quadratic_run_config(problem, max_rounds=50,
                                      eta=10 * problem_step_size_bound(problem, 0.05))
        with pytest.warns(UserWarning):
            trace = run_ada_gd(problem, config)
        assert trace.config_snapshot["eta_exceeds_bound"] is True

    def test_degenerate_update_halts(self):
        problem = make_benign_example()
        config = RunConfig(eta=problem_step_size_bound(problem, 0.05),
                           w0=np.array([1.4, 0.7]), delta=0.05, epsilon=0.1,
                           max_rounds=10 ** 6)
        trace = run_ada_gd(problem, config)
        assert trace.outcome.kind == OutcomeKind.HALTED
        assert "degenerate" in trace.outcome.reason
        assert not trace.defection_rounds

    def test_m_equals_d_can_stall_on_violation(self):
        # With as many agents as dimensions, the mixed-case walk minimizes
        # the staying agents' loss along the predicted defectors' level sets
        # and can converge to a constrained minimum, where (by stationarity)
        # the staying gradient lies in the defectors' gradient span. The
        # nonzero gradients are dependent there, and the run must halt with
        # the diagnostic instead of dividing by a vanishing norm.
        problem = make_random_quadratics(3, 3, seed=3)
        rng = np.random.default_rng(10_003)
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        config = RunConfig(eta=problem_step_size_bound(problem, 0.05),
                           w0=problem.shared_optimum + 1.6 * direction,
                           delta=0.05, epsilon=0.1, max_rounds=10 ** 6)
        trace = run_ada_gd(problem, config)
        assert trace.outcome.kind == OutcomeKind.HALTED
        assert "degenerate" in trace.outcome.reason
        assert not trace.defection_rounds
        last = trace.rounds[-1]
        staying_sum = np.sum([evaluate_oracle(problem.agents[m], last.iterate).gradient
                              for m in sorted(last.predicted_nondefecting)], axis=0)
        defector_grads = [evaluate_oracle(problem.agents[m], last.iterate).gradient
                          for m in sorted(last.predicted_defecting)]
        from defectsim.linalg import project_complement
        residual = np.linalg.norm(project_complement(staying_sum, defector_grads))
        assert np.linalg.norm(staying_sum) > 0.1      # gradient itself is far from zero
        assert residual <= 1e-9 * np.linalg.norm(staying_sum)  # but lies in the span


class TestRunIcfo:
    def test_uniform_aggregate_direction(self):
        problem = make_uniform_agg_family(0.0)
        config = RunConfig(eta=0.01, w0=np.array([2.0, 1.0]), delta=0.05,
                           epsilon=0.1, max_rounds=3)
        trace = run_icfo(AggregationRule.uniform_mean(), problem, config)
        first = trace.rounds[0]
        assert np.allclose(first.update_direction, [-0.5, 0.0])

    def test_bad_region_defection_at_round_one(self):
        problem = make_bad_region_example()
        config = RunConfig(eta=0.01, w0=np.array([1.0, 1.0]), delta=0.05,
                           epsilon=0.1, max_rounds=100)
        trace = run_icfo(AggregationRule.uniform_mean(), problem, config)
        assert trace.defection_rounds[1] == 1

    def test_single_agent_descent_is_monotone(self):
        problem = ProblemInstance(
            2, (quadratic_objective(np.eye(2), np.zeros(2)),), (1e-6,))
        config = RunConfig(eta=0.1, w0=np.array([2.0, 1.0]), delta=1e-7,
                           epsilon=1e-6, max_rounds=50)
        trace = run_icfo(AggregationRule.uniform_mean(), problem, config)
        values = [record.average_loss for record in trace.rounds]
        assert all(b < a for a, b in zip(values, values[1:]))
        assert trace.outcome.kind == OutcomeKind.RETURNED
        assert not trace.outcome.all_defected

    def test_all_defected_flag(self):
        problem = make_benign_example()
        config = RunConfig(eta=0.1, w0=np.array([0.1, 0.0]), delta=0.05,
                           epsilon=0.1, max_rounds=10)
        trace = run_icfo(AggregationRule.uniform_mean(), problem, config)
        assert trace.outcome.kind == OutcomeKind.RETURNED
        assert trace.outcome.all_defected
        assert len(trace.rounds) == 1

    def test_weighted_uniform_scales_mean(self):
        problem = make_uniform_agg_family(0.0)
        config = RunConfig(eta=0.01, w0=np.array([2.0, 1.0]), delta=0.05,
                           epsilon=0.1, max_rounds=1)
        rule = AggregationRule.weighted_uniform(lambda outs: 2.0)
        trace = run_icfo(rule, problem, config)
        assert np.allclose(trace.rounds[0].update_direction, [-1.0, 0.0])

    def test_ada_rule_delegates(self):
        problem = make_random_quadratics(2, 3, seed=1)
        config = quadratic_run_config(problem)
        via_rule = run_icfo(AggregationRule.ada_gd(), problem, config)
        direct = run_ada_gd(problem, config)
        assert trace_json(via_rule) == trace_json(direct)


class TestRunFedavg:
    def test_k1_full_gradient_matches_uniform_icfo(self):
        problem = make_random_quadratics(2, 4, seed=3)
        config = quadratic_run_config(problem, seed=3, eta=0.01, max_rounds=60,
                                      epsilon=1e-3, delta=1e-4)
        fedavg_trace = run_fedavg(problem, 1, config)
        icfo_trace = run_icfo(AggregationRule.uniform_mean(), problem, config)
        assert len(fedavg_trace.rounds) == len(icfo_trace.rounds)
        for mine, theirs in zip(fedavg_trace.rounds, icfo_trace.rounds):
            scale = max(np.linalg.norm(theirs.iterate), 1.0)
            assert np.allclose(mine.iterate, theirs.iterate,
                               atol=1e-12 * scale, rtol=1e-12)
            assert mine.defections == theirs.defections
        assert np.allclose(fedavg_trace.outcome.point, icfo_trace.outcome.point,
                           rtol=1e-12, atol=1e-12)

    def test_deterministic_stochastic_mode(self):
        data = make_linear_regression(2, 60, 4, seed=9)
        config = RunConfig(eta=0.05, w0=np.full(4, 2.0), delta=0.05,
                           epsilon=0.1, max_rounds=40, seed=17)
        first = run_fedavg(data, 5, config, stochastic=True)
        second = run_fedavg(data, 5, config, stochastic=True)
        assert trace_json(first) == trace_json(second)

    def test_all_defections_stop_early(self):
        problem = make_benign_example()
        config = RunConfig(eta=0.05, w0=np.array([0.05, 0.05]), delta=0.05,
                           epsilon=0.1, max_rounds=30)
        trace = run_fedavg(problem, 3, config)
        assert trace.outcome.all_defected
        assert len(trace.rounds) == 1

    def test_rejects_bad_k(self):
        problem = make_benign_example()
        config = RunConfig(eta=0.05, w0=np.array([1.0, 1.0]), delta=0.05,
                           epsilon=0.1, max_rounds=5)
        with pytest.raises(InvalidInputError):
            run_fedavg(problem, 0, config)

    def test_stochastic_requires_datasets(self):
        problem = make_benign_example()
        config = RunConfig(eta=0.05, w0=np.array([1.0, 1.0]), delta=0.05,
                           epsilon=0.1, max_rounds=5)
        with pytest.raises(InvalidInputError):
            run_fedavg(problem, 2, config, stochastic=True)

    def test_local_steps_divide_eta(self):
        # One agent, K=4 local full-gradient steps on a quadratic must match
        # four explicit steps of size eta/4.
        problem = ProblemInstance(
            2, (quadratic_objective(np.eye(2), np.zeros(2)),), (1e-9,))
        eta = 0.2
        config = RunConfig(eta=eta, w0=np.array([1.0, -1.0]), delta=1e-10,
                           epsilon=1e-9, max_rounds=1)
        trace = run_fedavg(problem, 4, config)
        expected = np.array([1.0, -1.0])
        for _ in range(4):
            expected = expected - (eta / 4) * expected
        assert np.allclose(trace.outcome.point, expected, rtol=1e-15)


class TestRunInvariants:
    def test_span_membership_and_clamp_audits(self):
        problem = make_random_quadratics(3, 5, seed=4)
        config = quadratic_run_config(problem, seed=4)
        trace = run_ada_gd(problem, config)
        report = run_standard_audits(problem, trace, config)
        assert report.check("span_membership").passed
        assert report.check("clamp").passed

    def test_uniform_trace_span_membership(self):
        problem = make_bad_region_example()
        config = RunConfig(eta=0.01, w0=np.array([1.0, 1.0]), delta=0.05,
                           epsilon=0.1, max_rounds=200)
        trace = run_icfo(AggregationRule.uniform_mean(), problem, config)
        report = run_standard_audits(problem, trace, config)
        assert report.check("span_membership").passed
        assert report.check("defection_permanence").passed

    def test_determinism_bit_identical(self):
        problem = make_random_quadratics(2, 3, seed=6)
        config = quadratic_run_config(problem, seed=6)
        assert trace_json(run_ada_gd(problem, config)) == \
            trace_json(run_ada_gd(problem, config))


class TestHaltingAndConcurrency:
    def test_non_finite_oracle_halts_run(self):
        def pole_oracle(w):
            radius_sq = float(w @ w)
            if radius_sq >= 4.0:
                return OracleOutput(float("inf"), w)
            return OracleOutput(0.5 * radius_sq, np.array(w))

        agent = AgentObjective(pole_oracle, 1.0, 10.0, np.zeros(2), name="pole")
        problem = ProblemInstance(2, (agent,), (1e-6,))
        # A deliberately unstable step makes plain descent diverge into the pole.
        config = RunConfig(eta=3.0, w0=np.array([1.5, 0.0]), delta=1e-7,
                           epsilon=1e-6, max_rounds=200)
        trace = run_icfo(AggregationRule.uniform_mean(), problem, config)
        assert trace.outcome.kind == OutcomeKind.HALTED
        assert "non-finite" in trace.outcome.reason

    def test_independent_runs_are_thread_safe(self):
        from concurrent.futures import ThreadPoolExecutor

        problem = make_random_quadratics(3, 5, seed=12)
        configs = [quadratic_run_config(problem, seed=s) for s in range(4)]
        sequential = [trace_json(run_ada_gd(problem, c)) for c in configs]
        with ThreadPoolExecutor(max_workers=4) as pool:
            threaded = list(pool.map(lambda c: trace_json(run_ada_gd(problem, c)),
                                     configs))
        assert sequential == threaded

    def test_halted_trace_survives_serialization(self):
        problem = make_benign_example()
        config = RunConfig(eta=problem_step_size_bound(problem, 0.05),
                           w0=np.array([1.4, 0.7]), delta=0.05, epsilon=0.1,
                           max_rounds=10 ** 6)
        trace = run_ada_gd(problem, config)
        assert trace.outcome.kind == OutcomeKind.HALTED
        from defectsim.traceio import trace_from_dict, trace_to_dict
        assert trace_json(trace_from_dict(trace_to_dict(trace))) == trace_json(trace)


class TestDeclaredConstants:
    def test_smoothed_objectives_declare_exact_constants(self):
        a = np.array([3.0, -4.0])
        mu = 0.02
        flat = smooth_abs(a, mu)
        assert flat.smoothness == pytest.approx(np.linalg.norm(a) ** 2 / mu)
        assert flat.lipschitz == pytest.approx(np.linalg.norm(a))
        from defectsim.problems import smooth_hinge
        hinge = smooth_hinge(a, 0.5, mu)
        assert hinge.smoothness == pytest.approx(np.linalg.norm(a) ** 2 / mu)
        assert hinge.lipschitz == pytest.approx(np.linalg.norm(a))


class TestAlgorithmIds:
    def test_known_ids(self):
        for algorithm_id in ("ada-gd", "uniform-gd", "fedavg:K=3",
                             "fedavg:K=1,stochastic"):
            parse_algorithm_id(algorithm_id)

    def test_unknown_id(self):
        with pytest.raises(InvalidInputError):
            parse_algorithm_id("momentum-gd")

    def test_fedavg_requires_k(self):
        with pytest.raises(InvalidInputError):
            parse_algorithm_id("fedavg:stochastic")


class TestResolveEpsilons:
    def test_default_uses_problem_precisions(self):
        problem = make_benign_example()
        config = RunConfig(eta=0.1, w0=np.array([1.0, 1.0]), delta=0.05)
        assert resolve_epsilons(problem, config) == problem.precisions

    def test_scalar_broadcast(self):
        problem = make_benign_example()
        config = RunConfig(eta=0.1, w0=np.array([1.0, 1.0]), delta=0.05,
                           epsilon=0.2)
        assert resolve_epsilons(problem, config) == (0.2, 0.2)

    def test_sequence_length_checked(self):
        problem = make_benign_example()
        config = RunConfig(eta=0.1, w0=np.array([1.0, 1.0]), delta=0.05,
                           epsilon=(0.1, 0.2, 0.3))
        with pytest.raises(InvalidInputError):
            resolve_epsilons(problem, config)
