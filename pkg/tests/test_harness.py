import math

import numpy as np
import pytest

from earlywarn.harness import (
    POLICY_ORDER,
    XI_SWEEP,
    ConfigError,
    ExperimentConfig,
    RunResult,
    _build_tasks,
    load_results,
    run_grid,
    split_stream,
    summarize,
    summarize_evaluations,
    write_report,
    write_results,
)
from earlywarn.policies import CaseEvaluation
from earlywarn.synthgen import GeneratorConfig, MonotoneCurve, UniformLength, generate_stream

from conftest import make_case, make_stream


def small_config(**overrides):
    base = dict(master_seed=7, lambda_values=(0.0, 0.25), kappa_values=(0.25,),
                alpha_min_values=(1.0,), repetitions=2,
                rl_hyper=__import__("earlywarn.rl", fromlist=["HyperParameters"])
                .HyperParameters(hidden_sizes=(8, 8)))
    base.update(overrides)
    return ExperimentConfig(**base)


def small_stream(n=120, seed=5):
    return generate_stream(GeneratorConfig(
        n_cases=n, deviation_rate=0.35, length_law=UniformLength(2, 6),
        ensemble_size=4, curve=MonotoneCurve(0.6, 0.95), seed=seed))


class TestSplitStream:
    def test_default_proportions(self):
        stream = make_stream([make_case(f"c{i}", [0.1]) for i in range(100)])
        fit, measure = split_stream(stream, 0.33)
        assert len(fit) == 33 and len(measure) == 67
        assert [c.case_id for c in fit.cases] == [f"c{i}" for i in range(33)]

    def test_two_cases(self):
        stream = make_stream([make_case("a", [0.1]), make_case("b", [0.1])])
        fit, measure = split_stream(stream, 0.5)
        assert len(fit) == 1 and len(measure) == 1

    def test_single_case_rejected(self):
        stream = make_stream([make_case("a", [0.1])])
        with pytest.raises(ConfigError):
            split_stream(stream, 0.33)

    def test_order_is_preserved_not_shuffled(self):
        stream = make_stream([make_case(f"c{i}", [0.1]) for i in range(10)])
        fit, measure = split_stream(stream, 0.5)
        assert [c.case_id for c in fit.cases + measure.cases] == \
            [c.case_id for c in stream.cases]


class TestConfig:
    def test_default_grid_is_64_cells(self):
        config = ExperimentConfig(master_seed=1)
        assert len(config.cells()) == 64

    def test_default_cadence_counts(self):
        # 64 cells x (never + first_positive + static + 10 threshold + 10 RL)
        tasks = _build_tasks(ExperimentConfig(master_seed=1))
        assert len(tasks) == 64 * 23

    def test_xi_sweep_multiplies_threshold_runs(self):
        tasks = _build_tasks(ExperimentConfig(master_seed=1, xi_values=XI_SWEEP,
                                              policies=("never", "threshold"),
                                              repetitions=3,
                                              lambda_values=(0.5,), kappa_values=(0.5,),
                                              alpha_min_values=(0.5,)))
        assert len(tasks) == 1 + 4 * 3

    def test_validation(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(master_seed=1, lambda_values=(1.5,))
        with pytest.raises(ConfigError):
            ExperimentConfig(master_seed=1, policies=("nope",))
        with pytest.raises(ConfigError):
            ExperimentConfig(master_seed=1, fit_fraction=1.0)
        with pytest.raises(ConfigError):
            ExperimentConfig(master_seed=1, repetitions=0)


class TestRunGrid:
    def test_row_cadence_and_order(self):
        stream = small_stream()
        config = small_config()
        results = run_grid(stream, config)
        # 2 cells x (1 + 1 + 1 + 2 threshold + 2 rl)
        assert len(results) == 2 * 7
        for cell_rows in (results[:7], results[7:]):
            assert [r.policy for r in cell_rows] == [
                "never", "first_positive", "static",
                "threshold", "threshold", "online_rl", "online_rl"]
        assert all(not r.failed for r in results)

    def test_never_baseline_is_exact(self):
        stream = small_stream()
        config = small_config(policies=("never",))
        _, measure = split_stream(stream, config.fit_fraction)
        for r in run_grid(stream, config):
            assert r.mean_cost == pytest.approx(measure.deviation_rate * 100.0)
            assert r.alarm_rate == 0.0
            assert r.cost_savings == 0.0

    def test_deterministic_and_csv_byte_identical(self, tmp_path):
        stream = small_stream()
        config = small_config()
        a = run_grid(stream, config)
        b = run_grid(stream, config)
        assert a == b
        pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
        write_results(a, pa)
        write_results(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_parallel_matches_serial(self):
        stream = small_stream(120)
        serial = run_grid(stream, small_config(workers=1))
        parallel = run_grid(stream, small_config(workers=2))
        assert serial == parallel

    def test_failed_repetitions_are_recorded(self):
        # a fit slice too small for the static rule (< 30 cases at any prefix)
        stream = small_stream(40)
        config = small_config(policies=("never", "static"))
        results = run_grid(stream, config)
        static_rows = [r for r in results if r.policy == "static"]
        assert static_rows and all(r.failed for r in static_rows)
        never_rows = [r for r in results if r.policy == "never"]
        assert all(not r.failed for r in never_rows)

    def test_curves_written(self, tmp_path):
        stream = small_stream(60)
        config = small_config(policies=("never", "online_rl"), repetitions=1,
                              lambda_values=(0.25,))
        run_grid(stream, config, curves_dir=tmp_path / "curves")
        files = sorted((tmp_path / "curves").iterdir())
        assert len(files) == 1
        header = files[0].read_text().splitlines()[0]
        assert header == ("case_index,rolling_reward,rolling_alarm_rate,"
                          "rolling_accurate_alarm_rate,rolling_earliness")
        n_rows = len(files[0].read_text().splitlines()) - 1
        assert n_rows == 60  # warm-up rows plus measure rows

    def test_seed_changes_stochastic_policies_only(self):
        stream = small_stream()
        r1 = run_grid(stream, small_config(master_seed=1))
        r2 = run_grid(stream, small_config(master_seed=2))
        for a, b in zip(r1, r2):
            if a.policy in ("never", "first_positive", "static"):
                assert a == b


class TestSummarizeEvaluations:
    def test_rates(self):
        evals = [
            CaseEvaluation("a", 1, 4, 25.0, True),
            CaseEvaluation("b", None, 4, 0.0, True),
            CaseEvaluation("c", 2, 4, 50.0, False),
            CaseEvaluation("d", None, 4, 100.0, False),
        ]
        mean_cost, alarm_rate, accurate_rate, mean_earl = summarize_evaluations(evals)
        assert mean_cost == pytest.approx(43.75)
        assert alarm_rate == 0.5
        assert accurate_rate == 0.25  # only case "a" is an accurate alarm
        assert mean_earl == pytest.approx((1.0 + 2 / 3) / 2)

    def test_no_alarms(self):
        evals = [CaseEvaluation("a", None, 3, 0.0, True)]
        assert summarize_evaluations(evals)[3] == 0.0


def result(policy, lam=0.0, kappa=0.0, alpha_min=0.0, rep=0, cost=10.0, earl=0.5,
           savings=0.0, xi=None):
    return RunResult(policy, lam, kappa, alpha_min, xi, rep, cost, 0.5, 0.4, earl,
                     savings)


class TestSummarize:
    def test_single_cell_winner(self):
        results = [result("never", cost=30.0),
                   result("threshold", cost=20.0, savings=1 / 3, xi=0.1),
                   result("threshold", cost=10.0, rep=1, savings=2 / 3, xi=0.1),
                   result("online_rl", cost=25.0, savings=1 / 6)]
        report = summarize(results)
        overview = {o.policy: o for o in report.policy_overview}
        assert overview["threshold"].cells_won == 1
        assert overview["threshold"].win_fraction == 1.0
        assert overview["threshold"].mean_savings == pytest.approx(0.5)
        assert overview["online_rl"].cells_won == 0
        threshold_summary = [s for s in report.cell_summaries
                             if s.policy == "threshold"][0]
        assert threshold_summary.mean_cost == pytest.approx(15.0)
        assert threshold_summary.std_cost == pytest.approx(5.0)
        assert threshold_summary.winner

    def test_cell_where_never_wins_is_excluded(self):
        cell_a = [result("never", cost=30.0), result("threshold", cost=20.0, savings=1 / 3)]
        cell_b = [result("never", lam=0.25, cost=30.0),
                  result("threshold", lam=0.25, cost=35.0, savings=-1 / 6)]
        report = summarize(cell_a + cell_b)
        overview = {o.policy: o for o in report.policy_overview}
        assert overview["threshold"].cells_considered == 1
        assert overview["threshold"].win_fraction == 1.0
        b_rows = [s for s in report.cell_summaries if s.lam == 0.25]
        assert not any(s.winner for s in b_rows)

    def test_tie_breaks_toward_earliness(self):
        results = [result("never", cost=30.0),
                   result("threshold", cost=10.0, earl=0.2),
                   result("online_rl", cost=10.0, earl=0.9)]
        report = summarize(results)
        winners = [s.policy for s in report.cell_summaries if s.winner]
        assert winners == ["online_rl"]

    def test_full_tie_breaks_lexicographically(self):
        results = [result("never", cost=30.0),
                   result("threshold", cost=10.0, earl=0.5),
                   result("online_rl", cost=10.0, earl=0.5)]
        report = summarize(results)
        winners = [s.policy for s in report.cell_summaries if s.winner]
        assert winners == ["online_rl"]  # "online_rl" < "threshold"

    def test_failed_runs_marked(self):
        nan = float("nan")
        results = [result("never", cost=30.0),
                   result("online_rl", cost=20.0, savings=1 / 3),
                   RunResult("online_rl", 0.0, 0.0, 0.0, None, 1, nan, nan, nan, nan,
                             nan)]
        report = summarize(results)
        rl = [s for s in report.cell_summaries if s.policy == "online_rl"][0]
        assert rl.runs == 2 and rl.failed == 1
        assert rl.mean_cost == pytest.approx(20.0)

    def test_missing_never_rejected(self):
        with pytest.raises(ConfigError):
            summarize([result("threshold", cost=10.0)])

    def test_winner_matrix_recomputable_by_independent_scan(self):
        stream = small_stream()
        results = run_grid(stream, small_config(lambda_values=(0.0, 0.25, 1.0)))
        report = summarize(results)

        grouped = {}
        for r in results:
            if not math.isnan(r.mean_cost):
                grouped.setdefault((r.lam, r.kappa, r.alpha_min), {}).setdefault(
                    r.policy, []).append(r)
        expected_winners = {}
        for cell, policies in grouped.items():
            stats = {p: (np.mean([r.mean_cost for r in rs]),
                         np.mean([r.mean_earliness for r in rs]))
                     for p, rs in policies.items()}
            best = min(stats, key=lambda p: (stats[p][0], -stats[p][1], p))
            never_cost = stats["never"][0]
            beaten = any(stats[p][0] < never_cost for p in stats if p != "never")
            expected_winners[cell] = best if beaten else None
        for s in report.cell_summaries:
            cell = (s.lam, s.kappa, s.alpha_min)
            assert s.winner == (expected_winners[cell] == s.policy)

    def test_win_fractions_sum_to_at_most_one(self):
        results = []
        for i, lam in enumerate((0.0, 0.25, 0.75)):
            results.append(result("never", lam=lam, cost=30.0))
            results.append(result("threshold", lam=lam, cost=20.0 + i, savings=0.1))
            results.append(result("online_rl", lam=lam, cost=21.0, savings=0.1))
        report = summarize(results)
        total = sum(o.win_fraction for o in report.policy_overview)
        assert total <= 1.0 + 1e-12


class TestResultsIo:
    def test_round_trip(self, tmp_path):
        stream = small_stream()
        results = run_grid(stream, small_config())
        path = tmp_path / "r.csv"
        write_results(results, path)
        assert load_results(path) == results

    def test_nan_rows_survive_round_trip(self, tmp_path):
        nan = float("nan")
        rows = [result("never", cost=30.0),
                RunResult("online_rl", 0.0, 0.0, 0.0, None, 0, nan, nan, nan, nan, nan)]
        path = tmp_path / "r.csv"
        write_results(rows, path)
        loaded = load_results(path)
        assert loaded[0] == rows[0]
        assert math.isnan(loaded[1].mean_cost)

    def test_report_files(self, tmp_path):
        results = [result("never", cost=30.0), result("threshold", cost=20.0,
                                                      savings=1 / 3)]
        report = summarize(results)
        sp, op = tmp_path / "summary.csv", tmp_path / "winners.csv"
        write_report(report, sp, op)
        assert sp.read_text().splitlines()[0] == (
            "lambda,kappa,alpha_min,policy,runs,failed,mean_cost,std_cost,"
            "alarm_rate,accurate_alarm_rate,mean_earliness,cost_savings,winner")
        assert op.read_text().splitlines()[0] == (
            "policy,cells_won,cells_considered,win_fraction,mean_savings")

    def test_header_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ConfigError):
            load_results(path)
