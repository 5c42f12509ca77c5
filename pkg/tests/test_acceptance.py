"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`. The RL criteria (6-8) share
seeded multi-repetition runs and take a few minutes on one CPU core; the
grids here are scaled so the whole suite stays desk-sized while asserting
every criterion at its stated tolerance.
"""

import math
from functools import partial

import numpy as np
import pytest

from earlywarn.cli import main as cli_main
from earlywarn.costmodel import CostParameters, alpha_at, expected_cost
from earlywarn.harness import split_stream, summarize_evaluations
from earlywarn.metrics import ContingencyCounts, mcc
from earlywarn.policies import (
    AlarmDecision,
    evaluate_policy,
    first_positive_decide,
    fit_static_point,
    fit_threshold,
    mean_cost,
    static_decide,
    threshold_candidates,
    threshold_decide,
)
from earlywarn.rl import CuriosityTracker, HyperParameters, RlAgent
from earlywarn.rl.agent import theta_size
from earlywarn.rl.backend import DEFAULT as ACTIVE_KERNELS
from earlywarn.rl.runner import run_stream
from earlywarn.stream import compute_rho, write_stream
from earlywarn.synthgen import (
    DriftSegment,
    GeneratorConfig,
    MonotoneCurve,
    UniformLength,
    generate_stream,
)

from conftest import make_case, make_stream


def report(criterion, message):
    print(f"\nACCEPTANCE {criterion}: PASS - {message}")


def test_criterion_1_cost_model_oracle():
    """expected_cost reproduces the four closed-form cost cells exactly."""
    rng = np.random.default_rng(1001)
    for _ in range(1000):
        lam = float(rng.uniform(0, 1))
        kappa = float(rng.uniform(0, 1))
        alpha_min = float(rng.uniform(0, 1))
        l = int(rng.integers(1, 61))
        j = int(rng.integers(1, l + 1))
        params = CostParameters(penalty=100.0, lam=lam, kappa=kappa,
                                alpha_min=alpha_min)
        # direct recomputation of the closed forms (same operation order, so
        # float equality is meaningful)
        alpha = 1.0 if l == 1 else 1.0 - (1.0 - alpha_min) * (j - 1) / (l - 1)
        assert alpha_at(j, l, params) == alpha
        assert expected_cost(True, j, l, params) == lam * 100.0 + (1.0 - alpha) * 100.0
        assert expected_cost(False, j, l, params) == lam * 100.0 + alpha * (kappa * 100.0)
        assert expected_cost(True, None, l, params) == 100.0
        assert expected_cost(False, None, l, params) == 0.0
    report(1, "1000 randomized cost tuples match the direct closed forms exactly")


def test_criterion_2_vote_and_mcc_brute_force():
    """compute_rho and mcc agree exactly with naive recomputations."""
    rng = np.random.default_rng(2002)
    for _ in range(10_000):
        deltas = rng.uniform(-1, 1, int(rng.integers(1, 11))).tolist()
        if rng.random() < 0.3:
            deltas[int(rng.integers(0, len(deltas)))] = 0.0
        positive = sum(1 for d in deltas if d > 0)
        non_positive = sum(1 for d in deltas if d <= 0)
        expected = max(positive / len(deltas), non_positive / len(deltas))
        assert compute_rho(deltas) == expected
        assert compute_rho(deltas) >= 0.5
    for _ in range(10_000):
        tp, fp, tn, fn = (int(v) for v in rng.integers(0, 50, 4))
        value = mcc(ContingencyCounts(tp, fp, tn, fn))
        denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
        naive = 0.0 if denom == 0 else (tp * tn - fp * fn) / math.sqrt(denom)
        assert value == naive
        assert value == mcc(ContingencyCounts(tn, fn, tp, fp))  # swap symmetry
    report(2, "10000 vote splits and 10000 contingency tables match naive recomputation")


def _random_fit_slice(rng):
    n = int(rng.integers(20, 501))
    cases = []
    rho_values = 0.5 + 0.05 * np.arange(11)
    for k in range(n):
        length = int(rng.integers(1, 7))
        deltas = rng.uniform(-1, 1, length).tolist()
        rhos = rng.choice(rho_values, length).tolist()
        deviation = bool(rng.random() < rng.uniform(0.1, 0.6))
        cases.append(make_case(f"c{k}", deltas, rhos, deviation=deviation))
    return make_stream(cases)


def test_criterion_3_threshold_optimality():
    """fit_threshold matches an independent exhaustive candidate scan, ties small."""
    rng = np.random.default_rng(3003)
    for trial in range(50):
        stream = _random_fit_slice(rng)
        params = CostParameters(
            lam=float(rng.uniform(0, 1)), kappa=float(rng.uniform(0, 1)),
            alpha_min=float(rng.uniform(0, 1)))
        fitted = fit_threshold(stream, params)
        scanned = [
            (mean_cost(evaluate_policy(stream, params,
                                       partial(threshold_decide, threshold=t))), t)
            for t in threshold_candidates(stream)
        ]
        best_cost = min(cost for cost, _ in scanned)
        assert fitted.training_cost == pytest.approx(best_cost, abs=1e-9)
        smallest_optimal = min(t for cost, t in scanned
                               if cost <= best_cost + 1e-9)
        assert fitted.threshold == smallest_optimal
    report(3, "50 random fit slices: fitted threshold matches the exhaustive scan")


def test_criterion_4_oracle_stream_economics():
    """Perfect-prediction stream: policies cost 7.5 +- 1%, never 30 +- 1%."""
    stream = generate_stream(GeneratorConfig(
        n_cases=4000, deviation_rate=0.3, length_law=UniformLength(2, 8),
        ensemble_size=5, curve=MonotoneCurve(1.0, 1.0), seed=18))
    assert all(p.rho == 1.0 for case in stream.cases for p in case.points)
    fit, measure = split_stream(stream, 0.33)
    params = CostParameters(lam=0.25, kappa=0.5, alpha_min=1.0)

    never = mean_cost(evaluate_policy(measure, params,
                                      lambda p: AlarmDecision.CONTINUE))
    first = mean_cost(evaluate_policy(measure, params, first_positive_decide))
    fitted = fit_threshold(fit, params)
    threshold = mean_cost(evaluate_policy(
        measure, params, partial(threshold_decide, threshold=fitted.threshold)))
    static_config = fit_static_point(fit, 0.9)
    static = mean_cost(evaluate_policy(
        measure, params, partial(static_decide, config=static_config)))

    assert never == pytest.approx(30.0, rel=0.01)
    for cost in (first, threshold, static):
        assert cost == pytest.approx(7.5, rel=0.01)
        assert (never - cost) / never == pytest.approx(0.75, abs=1e-9)
    report(4, f"never {never:.3f}, first/threshold/static "
              f"{first:.3f}/{threshold:.3f}/{static:.3f}, savings 0.75")


def test_criterion_5_gradient_check():
    """Analytic PPO gradients match central finite differences (rel err <= 1e-4)."""
    rng = np.random.default_rng(5005)
    kernels = ACTIVE_KERNELS
    checked = 0
    for probe in range(100):
        h1 = h2 = int(rng.choice([4, 8]))
        actor = rng.normal(scale=0.5, size=theta_size(h1, h2, 2))
        critic = rng.normal(scale=0.5, size=theta_size(h1, h2, 1))
        n = int(rng.integers(1, 7))
        states = np.ascontiguousarray(rng.normal(size=(n, 5)))
        actions = rng.integers(0, 2, n).astype(np.int64)
        probs, values = kernels.probs_values(actor, critic, h1, h2, states)
        old_logp = np.log(probs[np.arange(n), actions]) + rng.normal(scale=0.01, size=n)
        returns = rng.normal(size=n)
        adv = returns - values
        clip, floor = 0.2, 1e-8
        ga, gc, _, _ = kernels.ppo_grads(actor, critic, h1, h2, states, actions,
                                         old_logp, returns, adv, clip, floor)

        def actor_loss(theta):
            p, _ = kernels.probs_values(theta, critic, h1, h2, states)
            pa = np.maximum(p[np.arange(n), actions], floor)
            ratio = np.exp(np.log(pa) - old_logp)
            return float(-np.minimum(ratio * adv,
                                     np.clip(ratio, 1 - clip, 1 + clip) * adv).mean())

        def critic_loss(theta):
            _, v = kernels.probs_values(actor, theta, h1, h2, states)
            return float(np.mean((v - returns) ** 2))

        step = 1e-6
        for grads, theta, loss in ((ga, actor, actor_loss), (gc, critic, critic_loss)):
            for i in range(len(theta)):
                probe_theta = theta.copy()
                probe_theta[i] += step
                up = loss(probe_theta)
                probe_theta[i] -= 2 * step
                down = loss(probe_theta)
                fd = (up - down) / (2 * step)
                assert grads[i] == pytest.approx(fd, rel=1e-4, abs=1e-7)
                checked += 1
    report(5, f"{checked} gradient components across 100 probes within 1e-4 of "
              "finite differences")


LEARNING_MASTER_SEED = 555
LEARNING_CELLS = (CostParameters(lam=0.0, kappa=0.0, alpha_min=1.0),
                  CostParameters(lam=0.25, kappa=0.25, alpha_min=1.0))


@pytest.fixture(scope="module")
def learning_runs():
    """10 seeded RL repetitions per cost cell on the 5000-case learning stream."""
    stream = generate_stream(GeneratorConfig(
        n_cases=5000, deviation_rate=0.3, length_law=UniformLength(3, 12),
        ensemble_size=20, curve=MonotoneCurve(0.55, 0.95), seed=101))
    fit, measure = split_stream(stream, 0.33)
    never_cost = measure.deviation_rate * 100.0
    runs = {}
    for cell_index, params in enumerate(LEARNING_CELLS):
        cell_runs = []
        for rep in range(10):
            rng = np.random.default_rng(np.random.SeedSequence(
                LEARNING_MASTER_SEED, spawn_key=(cell_index, rep)))
            agent = RlAgent.initialize(HyperParameters(), rng)
            tracker = CuriosityTracker()
            rewards = []
            fit_evals, _ = run_stream(fit, agent, tracker, rng, params,
                                      reward_log=rewards)
            measure_evals, _ = run_stream(measure, agent, tracker, rng, params,
                                          reward_log=rewards)
            alarms = [e.alarm_prefix is not None for e in fit_evals + measure_evals]
            cell_runs.append({
                "rewards": rewards,
                "alarms": alarms,
                "measure_cost": np.mean([e.cost for e in measure_evals]),
            })
        runs[cell_index] = cell_runs
    return {"runs": runs, "never_cost": never_cost}


def test_criterion_6_rl_learning(learning_runs):
    """Rewards improve and measured cost beats never-adapt in >= 7/10 seeds per cell."""
    never_cost = learning_runs["never_cost"]
    for cell_index, params in enumerate(LEARNING_CELLS):
        learned = sum(
            np.mean(run["rewards"][2000:3000]) > np.mean(run["rewards"][:600])
            for run in learning_runs["runs"][cell_index])
        cheaper = sum(run["measure_cost"] < never_cost
                      for run in learning_runs["runs"][cell_index])
        assert learned >= 7, f"cell {cell_index}: reward improved in {learned}/10"
        assert cheaper >= 7, f"cell {cell_index}: beat never-adapt in {cheaper}/10"
        report(6, f"cell (lam={params.lam}, kappa={params.kappa}, "
                  f"alpha_min={params.alpha_min}): reward up {learned}/10, "
                  f"cost below never {cheaper}/10")


def test_criterion_7_cold_start(learning_runs):
    """Alarm rate over cases 1-100 exceeds cases 901-1000 in >= 7/10 seeds."""
    for cell_index in range(len(LEARNING_CELLS)):
        declined = sum(
            np.mean(run["alarms"][:100]) > np.mean(run["alarms"][900:1000])
            for run in learning_runs["runs"][cell_index])
        assert declined >= 7, f"cell {cell_index}: cold start declined in {declined}/10"
        report(7, f"cell {cell_index}: early alarm surge declined in {declined}/10 runs")


def test_criterion_8_drift_response():
    """Fitted threshold is frozen; online RL shifts its alarm rate under drift."""
    stream = generate_stream(GeneratorConfig(
        n_cases=4500, deviation_rate=0.3, length_law=UniformLength(3, 12),
        ensemble_size=1, curve=MonotoneCurve(0.9, 0.9), seed=303,
        drift=(DriftSegment(1500, 3000, -0.3),)))
    params = CostParameters(lam=0.25, kappa=0.25, alpha_min=1.0)
    fit, measure = split_stream(stream, 0.33)

    fitted = fit_threshold(fit, params)
    threshold_before = fitted.threshold
    evaluate_policy(measure, params,
                    partial(threshold_decide, threshold=fitted.threshold))
    # one scalar fitted up front and never refitted: constant across the run
    assert fitted.threshold == threshold_before

    responded = 0
    for rep in range(10):
        rng = np.random.default_rng(np.random.SeedSequence(888, spawn_key=(rep,)))
        agent = RlAgent.initialize(HyperParameters(), rng)
        tracker = CuriosityTracker()
        fit_evals, _ = run_stream(fit, agent, tracker, rng, params)
        measure_evals, _ = run_stream(measure, agent, tracker, rng, params)
        alarms = np.array([e.alarm_prefix is not None
                           for e in fit_evals + measure_evals], dtype=float)
        pre_drift = alarms[1100:1500].mean()
        in_drift = alarms[2600:3000].mean()
        if abs(pre_drift - in_drift) >= 0.05:
            responded += 1
    assert responded >= 6, f"alarm rate responded to drift in {responded}/10 seeds"
    report(8, f"threshold constant by construction; RL alarm rate shifted >= 0.05 "
              f"in {responded}/10 seeds")


def test_criterion_9_end_to_end_determinism(tmp_path):
    """Two identical `run` invocations produce byte-identical results CSVs."""
    stream = generate_stream(GeneratorConfig(
        n_cases=600, deviation_rate=0.35, length_law=UniformLength(2, 6),
        ensemble_size=4, curve=MonotoneCurve(0.6, 0.95), seed=77))
    stream_path = tmp_path / "stream.jsonl"
    write_stream(stream, stream_path)
    outputs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        code = cli_main([
            "run", "--stream", str(stream_path), "--seed", "4242",
            "--out", str(out),
            "--lambda-values", "0,0.75", "--kappa-values", "0,0.75",
            "--alpha-min-values", "0,1", "--repetitions", "2",
        ])
        assert code == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    n_rows = len(outputs[0].decode().splitlines()) - 1
    assert n_rows == 8 * 7  # 8 cells x (3 deterministic + 2 threshold + 2 rl)
    report(9, f"two runs produced byte-identical CSVs ({n_rows} rows)")
