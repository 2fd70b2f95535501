import numpy as np
import pytest

from defectsim.algorithms import (
    AggregationRule,
    RunConfig,
    predict_sets,
    problem_step_size_bound,
    run_ada_gd,
    run_icfo,
)
from defectsim.analysis import (
    AuditCheck,
    AuditReport,
    DefectionClass,
    audit_case1_orthogonality,
    audit_final_quality,
    audit_no_defection,
    audit_prediction_soundness,
    audit_progress,
    classify_defections,
    find_harmful_step_scale,
    probe_bad_region,
    run_standard_audits,
)
from defectsim.core import (
    CaseLabel,
    InvalidInputError,
    Outcome,
    ProblemInstance,
    RoundRecord,
    Trace,
    as_point,
    evaluate_oracle,
)
from defectsim.problems import (
    make_bad_region_example,
    make_benign_example,
    make_nonhetero_bad_example,
    make_random_quadratics,
    quadratic_objective,
)
from defectsim.traceio import audit_json, load_trace_json, write_trace_json


@pytest.fixture(scope="module")
def guarantee_run():
    problem = make_random_quadratics(3, 5, seed=21)
    rng = np.random.default_rng(1021)
    direction = rng.standard_normal(5)
    direction /= np.linalg.norm(direction)
    config = RunConfig(eta=problem_step_size_bound(problem, 0.05),
                       w0=problem.shared_optimum + 1.6 * direction,
                       delta=0.05, epsilon=0.1, max_rounds=10 ** 6)
    return problem, config, run_ada_gd(problem, config)


@pytest.fixture(scope="module")
def bad_region_run():
    problem = make_bad_region_example()
    config = RunConfig(eta=0.01, w0=np.array([1.0, 1.0]), delta=0.05,
                       epsilon=0.1, max_rounds=500)
    return problem, config, run_icfo(AggregationRule.uniform_mean(), problem, config)


class TestAuditNoDefection:
    def test_guarantee_trace_passes(self, guarantee_run):
        _, _, trace = guarantee_run
        assert audit_no_defection(trace).passed

    def test_bad_region_fails_at_round_one(self, bad_region_run):
        _, _, trace = bad_region_run
        check = audit_no_defection(trace)
        assert not check.passed
        assert check.round == 1

    def test_empty_trace_vacuous(self):
        trace = Trace("p", "a", {}, (), Outcome.returned(as_point([0.0])))
        assert audit_no_defection(trace).passed


class TestAuditPredictionSoundness:
    def test_guarantee_trace_passes(self, guarantee_run):
        problem, config, trace = guarantee_run
        check = audit_prediction_soundness(problem, trace, config)
        assert check.passed

    def test_hand_instance(self):
        # 1-D quadratic w^2/2 at w = 0.3 with eta=0.05, eps=0.04, delta=0.01:
        # predicted defecting, and the probe step lands at 0.25 with loss
        # 0.03125 <= eps + 2 delta = 0.06.
        agent = quadratic_objective(np.eye(1), np.zeros(1))
        out = evaluate_oracle(agent, np.array([0.3]))
        defecting, _ = predict_sets([out], eta=0.05, epsilons=[0.04], delta=0.01)
        assert defecting == {0}
        probe = np.array([0.3]) - 0.05 * out.gradient / np.linalg.norm(out.gradient)
        value = evaluate_oracle(agent, probe).value
        assert value == pytest.approx(0.03125, abs=1e-15)
        assert value <= 0.04 + 2 * 0.01

    def test_zero_gradient_member_is_skipped(self):
        agent = quadratic_objective(np.eye(1), np.zeros(1))
        problem = ProblemInstance(1, (agent,), (0.1,))
        record = RoundRecord(1, as_point([0.0]), (0.0,), frozenset({0}),
                             frozenset(), CaseLabel.ALL_DEFECTING, None, 0.05,
                             frozenset())
        trace = Trace("p", "ada-gd", {"eta": 0.05, "delta": 0.01,
                                      "epsilons": [0.1]},
                      (record,), Outcome.returned(as_point([0.0])))
        check = audit_prediction_soundness(problem, trace)
        assert check.passed  # gradient vanished; probe undefined, vacuous


class TestAuditProgress:
    def test_guarantee_trace_passes(self, guarantee_run):
        problem, _, trace = guarantee_run
        assert audit_progress(problem, trace).passed

    def test_reversed_step_fails(self):
        agent = quadratic_objective(np.eye(1), np.zeros(1))
        problem = ProblemInstance(1, (agent,), (0.1,))
        # A doctored ascent: losses increase across an update round.
        rounds = (
            RoundRecord(1, as_point([1.0]), (0.5,), frozenset(),
                        frozenset({0}), CaseLabel.NONE_DEFECTING,
                        as_point([1.0]), 0.1, frozenset()),
            RoundRecord(2, as_point([1.1]), (0.605,), frozenset(),
                        frozenset({0}), CaseLabel.NONE_DEFECTING,
                        as_point([1.0]), 0.1, frozenset()),
        )
        trace = Trace("p", "ada-gd", {"eta": 0.1, "delta": 0.05,
                                      "epsilons": [0.1]},
                      rounds, Outcome.round_cap(as_point([1.2])))
        assert not audit_progress(problem, trace).passed

    def test_case3_only_trace_vacuous(self):
        agent = quadratic_objective(np.eye(1), np.zeros(1))
        problem = ProblemInstance(1, (agent,), (0.1,))
        record = RoundRecord(1, as_point([0.1]), (0.005,), frozenset({0}),
                             frozenset(), CaseLabel.ALL_DEFECTING, None, 0.1,
                             frozenset())
        trace = Trace("p", "ada-gd", {"eta": 0.1, "delta": 0.05,
                                      "epsilons": [0.1]},
                      (record,), Outcome.returned(as_point([0.1])))
        assert audit_progress(problem, trace).passed


class TestAuditFinalQuality:
    def test_guarantee_bound(self, guarantee_run):
        problem, config, trace = guarantee_run
        check = audit_final_quality(problem, trace, config)
        assert check.passed and check.applicable

    def test_round_cap_not_applicable(self, guarantee_run):
        problem, config, _ = guarantee_run
        capped = run_ada_gd(problem, RunConfig(
            eta=config.eta, w0=config.w0, delta=config.delta,
            epsilon=config.epsilon, max_rounds=2))
        check = audit_final_quality(problem, capped, config)
        assert not check.applicable

    def test_delta_equals_epsilon_gives_four_epsilon_bound(self):
        # The delta = eps configuration reduces the bound to 4 eps.
        epsilon = 0.1
        agent = quadratic_objective(np.eye(1), np.zeros(1))
        problem = ProblemInstance(1, (agent,), (epsilon,))
        final = np.array([np.sqrt(2 * 0.39)])  # loss 0.39 < 0.4 = 4 eps
        record = RoundRecord(1, final, (0.39,), frozenset({0}), frozenset(),
                             CaseLabel.ALL_DEFECTING, None, 0.01, frozenset())
        trace = Trace("p", "ada-gd",
                      {"eta": 0.01, "delta": epsilon, "epsilons": [epsilon]},
                      (record,), Outcome.returned(final))
        check = audit_final_quality(problem, trace)
        assert check.passed
        over = np.array([np.sqrt(2 * 0.41)])  # loss 0.41 > 4 eps
        trace_over = Trace("p", "ada-gd",
                           {"eta": 0.01, "delta": epsilon, "epsilons": [epsilon]},
                           (record,), Outcome.returned(over))
        assert not audit_final_quality(problem, trace_over).passed


class TestClassifyDefections:
    def test_guarantee_run_no_defection(self, guarantee_run):
        problem, _, trace = guarantee_run
        assert classify_defections(problem, trace) == DefectionClass.NO_DEFECTION

    def test_bad_region_harmful(self, bad_region_run):
        problem, _, trace = bad_region_run
        assert classify_defections(problem, trace) == DefectionClass.HARMFUL

    def test_benign_example_benign_or_clean(self):
        problem = make_benign_example()
        config = RunConfig(eta=0.1, w0=np.array([1.2, -0.8]), delta=0.05,
                           epsilon=0.1, max_rounds=2000)
        trace = run_icfo(AggregationRule.uniform_mean(), problem, config)
        label = classify_defections(problem, trace)
        assert label in (DefectionClass.BENIGN, DefectionClass.NO_DEFECTION)
        assert label == DefectionClass.BENIGN  # defections do occur here

    def test_no_defection_implies_audit_passes(self, guarantee_run):
        problem, _, trace = guarantee_run
        if classify_defections(problem, trace) == DefectionClass.NO_DEFECTION:
            assert audit_no_defection(trace).passed


class TestCase1Orthogonality:
    def test_guarantee_trace(self, guarantee_run):
        problem, _, trace = guarantee_run
        assert audit_case1_orthogonality(problem, trace).passed
        assert any(record.case == CaseLabel.MIXED for record in trace.rounds)


class TestAuditReportStructure:
    def test_unique_names_enforced(self):
        check = AuditCheck("x", True, 0.0)
        with pytest.raises(InvalidInputError):
            AuditReport((check, check))

    def test_standard_report_covers_all_checks(self, guarantee_run):
        problem, config, trace = guarantee_run
        report = run_standard_audits(problem, trace, config)
        names = {check.name for check in report.checks}
        assert names == {"no_defection", "prediction_soundness", "progress",
                         "final_quality", "case1_orthogonality", "clamp",
                         "span_membership", "defection_permanence",
                         "prediction_coverage"}
        assert report.all_passed

    def test_reaudit_of_stored_trace_is_identical(self, guarantee_run, tmp_path):
        problem, config, trace = guarantee_run
        report = run_standard_audits(problem, trace, config)
        write_trace_json(trace, tmp_path / "trace.json")
        reloaded = load_trace_json(tmp_path / "trace.json")
        report_again = run_standard_audits(problem, reloaded, config)
        assert audit_json(report) == audit_json(report_again)


class TestPredictionCoverage:
    def test_guarantee_trace_covers_all_agents(self, guarantee_run):
        from defectsim.analysis import audit_prediction_coverage
        problem, _, trace = guarantee_run
        assert audit_prediction_coverage(problem, trace).passed

    def test_mislabelled_round_detected(self):
        from defectsim.analysis import audit_prediction_coverage
        agent = quadratic_objective(np.eye(1), np.zeros(1))
        problem = ProblemInstance(1, (agent, agent), (0.1, 0.1))
        record = RoundRecord(1, as_point([1.0]), (0.5, 0.5), frozenset(),
                             frozenset({0}), CaseLabel.NONE_DEFECTING,
                             as_point([1.0]), 0.1, frozenset())  # agent 1 dropped
        trace = Trace("p", "ada-gd", {"eta": 0.1, "delta": 0.05,
                                      "epsilons": [0.1, 0.1]},
                      (record,), Outcome.round_cap(as_point([1.0])))
        assert not audit_prediction_coverage(problem, trace).passed


class TestSpanMembershipApplicability:
    def test_multi_step_local_updates_not_span_audited(self):
        from defectsim.algorithms import run_fedavg
        from defectsim.analysis import audit_span_membership
        problem = make_random_quadratics(2, 3, seed=2)
        config = RunConfig(eta=0.001, w0=problem.shared_optimum + 1.0,
                           delta=0.05, epsilon=0.1, max_rounds=20)
        multi = run_fedavg(problem, 10, config)
        assert not audit_span_membership(problem, multi).applicable
        single = run_fedavg(problem, 1, config)
        check = audit_span_membership(problem, single)
        assert check.applicable and check.passed


class TestProbeBadRegion:
    def test_bad_region_flags_trap_not_optimum(self):
        problem = make_bad_region_example()
        config = RunConfig(eta=0.01, w0=np.zeros(2), delta=0.05, epsilon=0.1,
                           max_rounds=400)
        grid = [np.array([1.0, 1.0]), np.array([1.0, 0.9]), np.zeros(2)]
        points = probe_bad_region(problem, grid, ["uniform-gd"], config)
        assert points[0].empirically_bad
        assert points[1].empirically_bad
        assert not points[2].empirically_bad
        assert points[2].in_target_set

    def test_adaptive_probe_handles_starts_inside_targets(self):
        # The trap defeats the adaptive rule too: once the satisfied agent is
        # gone, only the remaining agent's direction is available, and the
        # final model still misses the departed agent's target.
        problem = make_bad_region_example()
        config = RunConfig(eta=0.01, w0=np.zeros(2), delta=0.05, epsilon=0.1,
                           max_rounds=2000)
        grid = [np.array([1.0, 1.0]), np.zeros(2)]
        points = probe_bad_region(problem, grid, ["uniform-gd", "ada-gd"], config)
        assert points[0].empirically_bad
        assert points[0].labels["ada-gd"] == DefectionClass.HARMFUL
        assert not points[1].empirically_bad

    def test_benign_grid_has_no_bad_points(self):
        problem = make_benign_example()
        config = RunConfig(eta=0.1, w0=np.zeros(2), delta=0.05, epsilon=0.1,
                           max_rounds=2000)
        grid = [np.array([1.0, 1.0]), np.array([-1.5, 0.5]), np.array([0.8, -1.1])]
        points = probe_bad_region(problem, grid, ["uniform-gd"], config)
        assert not any(point.empirically_bad for point in points)


class TestHarmfulStepScale:
    def test_finds_scale_on_nonhetero_example(self):
        problem = make_nonhetero_bad_example()
        config = RunConfig(eta=0.1, w0=np.array(problem.notes["w0"]),
                           delta=0.05, epsilon=0.1, max_rounds=100000)
        found = find_harmful_step_scale(problem, "uniform-gd", config)
        assert found is not None
        scale, trace = found
        assert scale in [2.0 ** (-k) for k in range(21)]
        assert classify_defections(problem, trace) == DefectionClass.HARMFUL
