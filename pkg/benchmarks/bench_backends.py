"""Benchmark the compiled kernel against the pure-numpy fallback.

Times the three layers that matter for grid runtime: a batched forward pass,
one per-episode PPO update, and the full online loop (act + update per case)
over a synthetic stream. Run as `python benchmarks/bench_backends.py`.
"""

import argparse
import time

import numpy as np

from earlywarn.costmodel import CostParameters
from earlywarn.rl import CuriosityTracker, HyperParameters, RlAgent
from earlywarn.rl.agent import theta_size
from earlywarn.rl.backend import available_backends
from earlywarn.rl.runner import run_stream
from earlywarn.synthgen import GeneratorConfig, MonotoneCurve, UniformLength, generate_stream


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(3):
        start = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - start) / repeats)
    return best


def bench_kernels(kernels, batch, hidden, repeats=2000):
    rng = np.random.default_rng(42)
    h1 = h2 = hidden
    actor = rng.normal(scale=0.2, size=theta_size(h1, h2, 2))
    critic = rng.normal(scale=0.2, size=theta_size(h1, h2, 1))
    states = np.ascontiguousarray(rng.normal(size=(batch, 5)))
    actions = rng.integers(0, 2, batch).astype(np.int64)
    probs, values = kernels.probs_values(actor, critic, h1, h2, states)
    old_logp = np.log(probs[np.arange(batch), actions])
    returns = np.full(batch, 1.5)
    advantages = returns - values
    adam = [np.zeros_like(actor), np.zeros_like(actor),
            np.zeros_like(critic), np.zeros_like(critic)]

    forward = time_call(
        lambda: kernels.probs_values(actor, critic, h1, h2, states), repeats)

    state = {"t": 0}

    def update():
        state["t"] = kernels.ppo_update(
            actor, adam[0], adam[1], critic, adam[2], adam[3], h1, h2,
            states, actions, old_logp, returns, advantages,
            0.2, 1e-8, 3e-4, 0.9, 0.999, 1e-8, 4, state["t"])

    upd = time_call(update, repeats // 4)
    return forward, upd


def bench_online_loop(kernels, stream, repeats=1):
    params = CostParameters(lam=0.25, kappa=0.25, alpha_min=1.0)
    start = time.perf_counter()
    for _ in range(repeats):
        rng = np.random.default_rng(7)
        agent = RlAgent.initialize(HyperParameters(), rng, kernels=kernels)
        run_stream(stream, agent, CuriosityTracker(), rng, params)
    return (time.perf_counter() - start) / repeats / len(stream.cases)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cases", type=int, default=2000,
                        help="stream size for the online-loop benchmark")
    parser.add_argument("--hidden", type=int, default=64)
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends available: {', '.join(sorted(backends))}")
    stream = generate_stream(GeneratorConfig(
        n_cases=args.cases, deviation_rate=0.3, length_law=UniformLength(3, 12),
        ensemble_size=10, curve=MonotoneCurve(0.6, 0.9), seed=1))

    rows = []
    for name in sorted(backends):
        kernels = backends[name]
        fwd, upd = bench_kernels(kernels, batch=20, hidden=args.hidden)
        per_case = bench_online_loop(kernels, stream)
        rows.append((name, fwd * 1e6, upd * 1e6, per_case * 1e6))

    header = f"{'backend':<10} {'forward(20) us':>15} {'ppo_update us':>15} {'online us/case':>15}"
    print(header)
    print("-" * len(header))
    for name, fwd, upd, case in rows:
        print(f"{name:<10} {fwd:>15.1f} {upd:>15.1f} {case:>15.1f}")
    if len(rows) == 2:
        by_name = {r[0]: r for r in rows}
        if "compiled" in by_name and "python" in by_name:
            speedup = by_name["python"][3] / by_name["compiled"][3]
            print(f"\ncompiled backend end-to-end speedup: {speedup:.2f}x")


if __name__ == "__main__":
    main()
