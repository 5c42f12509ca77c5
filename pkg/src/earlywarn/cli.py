"""Command-line interface: generate, aggregate, run, report.

Typical pipeline:

    earlywarn generate --preset bpic12-like --n-cases 5000 --seed 7 \
        --out-matrix base.csv --out-truth truth.csv
    earlywarn aggregate --matrix base.csv --truth truth.csv --out stream.jsonl
    earlywarn run --stream stream.jsonl --seed 42 --out results.csv
    earlywarn report --results results.csv --out-dir report/

Every config-file key has a flag override; flags win. Exit status is 0 on
success and 2 on any usage, validation, or I/O problem.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import harness, stream as stream_mod, synthgen
from .rl import HyperParameters


class CliError(ValueError):
    pass


def parse_kv_file(path) -> dict[str, str]:
    """Plain-text `key = value` file; # starts a comment, blank lines ignored."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
                key, value = line.split("=", 1)
                values[key.strip()] = value.strip()
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from exc
    return values


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip() != "")
    except ValueError as exc:
        raise CliError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError as exc:
        raise CliError(f"expected comma-separated integers, got {text!r}") from exc


CURVE_PARAM_NAMES = {
    "monotone": ("p_start", "p_end"),
    "drop_recover": ("p_hi", "p_lo", "drop_at", "recover_at"),
    "drop_no_recover": ("p_hi", "p_lo", "drop_at"),
    "zigzag": ("p_hi", "p_lo"),
}

CURVE_TYPES = {
    "monotone": synthgen.MonotoneCurve,
    "drop_recover": synthgen.DropRecoverCurve,
    "drop_no_recover": synthgen.DropNoRecoverCurve,
    "zigzag": synthgen.ZigzagCurve,
}


def _build_curve(kind: str, params_text: str):
    if kind not in CURVE_TYPES:
        raise CliError(f"unknown curve {kind!r}; choose from {sorted(CURVE_TYPES)}")
    params = _floats(params_text)
    names = CURVE_PARAM_NAMES[kind]
    if len(params) != len(names):
        raise CliError(f"curve {kind} needs {len(names)} parameters "
                       f"({','.join(names)}), got {len(params)}")
    return CURVE_TYPES[kind](*params)


def _parse_drift(specs) -> tuple[synthgen.DriftSegment, ...]:
    segments = []
    for spec in specs:
        parts = spec.split(":")
        if len(parts) != 3:
            raise CliError(f"drift spec must be start:end:offset, got {spec!r}")
        segments.append(synthgen.DriftSegment(int(parts[0]), int(parts[1]),
                                              float(parts[2])))
    return tuple(segments)


def _generator_config(args) -> synthgen.GeneratorConfig:
    file_values = parse_kv_file(args.config) if args.config else {}

    def pick(flag_value, key, cast, default=None):
        if flag_value is not None:
            return flag_value
        if key in file_values:
            return cast(file_values[key])
        return default

    preset = pick(args.preset, "preset", str)
    n_cases = pick(args.n_cases, "n_cases", int)
    seed = pick(args.seed, "seed", int)
    if n_cases is None or seed is None:
        raise CliError("generate needs --n-cases and --seed (flags or config keys)")
    drift = _parse_drift(args.drift) if args.drift else _parse_drift(
        [s for s in file_values.get("drift", "").split(";") if s])
    ensemble = pick(args.ensemble_size, "ensemble_size", int, 20)

    if preset is not None:
        return synthgen.preset_config(preset, n_cases=n_cases, seed=seed,
                                      ensemble_size=ensemble, drift=drift)

    curve_kind = pick(args.curve, "curve", str)
    curve_params = pick(args.curve_params, "curve_params", str)
    if curve_kind is None or curve_params is None:
        raise CliError("generate needs --preset, or --curve with --curve-params")
    length = pick(args.length, "length", int)
    length_min = pick(args.length_min, "length_min", int)
    length_max = pick(args.length_max, "length_max", int)
    if length is not None:
        law = synthgen.ConstantLength(length)
    elif length_min is not None and length_max is not None:
        law = synthgen.UniformLength(length_min, length_max)
    else:
        raise CliError("generate needs --length, or --length-min with --length-max")
    return synthgen.GeneratorConfig(
        n_cases=n_cases,
        deviation_rate=pick(args.deviation_rate, "deviation_rate", float, 0.3),
        length_law=law,
        ensemble_size=ensemble,
        curve=_build_curve(curve_kind, curve_params),
        seed=seed,
        drift=drift,
        noise_amplitude=pick(args.noise_amplitude, "noise_amplitude", float, 0.25),
        expected_outcome=pick(args.expected_outcome, "expected_outcome", float, 0.5),
    )


def _cmd_generate(args) -> int:
    config = _generator_config(args)
    if args.out_matrix is None and args.out_stream is None:
        raise CliError("generate needs --out-matrix/--out-truth and/or --out-stream")
    if (args.out_matrix is None) != (args.out_truth is None):
        raise CliError("--out-matrix and --out-truth go together")
    matrices, truths = synthgen.generate(config)
    if args.out_matrix is not None:
        stream_mod.write_base_matrix(matrices, truths, args.out_matrix, args.out_truth)
        print(f"wrote {len(matrices)} cases to {args.out_matrix} (+ {args.out_truth})")
    if args.out_stream is not None:
        aggregated = stream_mod.aggregate_stream(matrices, truths)
        stream_mod.write_stream(aggregated, args.out_stream)
        print(f"wrote aggregated stream to {args.out_stream}")
    return 0


def _cmd_aggregate(args) -> int:
    matrices, truths = stream_mod.load_base_matrix(
        args.matrix, args.truth, expected_outcome=args.expected_outcome)
    aggregated = stream_mod.aggregate_stream(matrices, truths)
    stream_mod.write_stream(aggregated, args.out)
    print(f"aggregated {len(matrices)} cases into {args.out}")
    return 0


_RL_KEYS = {
    "rl.learning_rate": ("learning_rate", float),
    "rl.clip_epsilon": ("clip_epsilon", float),
    "rl.update_epochs": ("update_epochs", int),
}


def _experiment_config(args) -> harness.ExperimentConfig:
    file_values = parse_kv_file(args.config) if args.config else {}

    def pick(flag_value, key, cast, default):
        if flag_value is not None:
            return flag_value
        if key in file_values:
            return cast(file_values[key])
        return default

    rl_kwargs = {}
    for key, (field_name, cast) in _RL_KEYS.items():
        if key in file_values:
            rl_kwargs[field_name] = cast(file_values[key])
    if "rl.hidden_sizes" in file_values:
        rl_kwargs["hidden_sizes"] = _ints(file_values["rl.hidden_sizes"])
    if args.rl_learning_rate is not None:
        rl_kwargs["learning_rate"] = args.rl_learning_rate
    if args.rl_clip_epsilon is not None:
        rl_kwargs["clip_epsilon"] = args.rl_clip_epsilon
    if args.rl_update_epochs is not None:
        rl_kwargs["update_epochs"] = args.rl_update_epochs
    if args.rl_hidden_sizes is not None:
        rl_kwargs["hidden_sizes"] = _ints(args.rl_hidden_sizes)

    xi_values = pick(args.xi_values and _floats(args.xi_values), "xi_values", _floats,
                     None)
    if xi_values is None:
        xi_values = pick(None, "policy.threshold.xi_values", _floats,
                         (harness.DEFAULT_XI,))
    if args.xi_sweep:
        xi_values = harness.XI_SWEEP

    policies = pick(args.policies and tuple(args.policies.split(",")), "policies",
                    lambda t: tuple(p.strip() for p in t.split(",")),
                    harness.POLICY_ORDER)

    return harness.ExperimentConfig(
        master_seed=args.seed,
        lambda_values=pick(args.lambda_values and _floats(args.lambda_values),
                           "lambda_values", _floats, harness.COST_VALUE_GRID),
        kappa_values=pick(args.kappa_values and _floats(args.kappa_values),
                          "kappa_values", _floats, harness.COST_VALUE_GRID),
        alpha_min_values=pick(args.alpha_min_values and _floats(args.alpha_min_values),
                              "alpha_min_values", _floats, harness.COST_VALUE_GRID),
        xi_values=tuple(xi_values),
        repetitions=pick(args.repetitions, "repetitions", int, 10),
        fit_fraction=pick(args.fit_fraction, "fit_fraction", float, 0.33),
        policies=policies,
        penalty=pick(args.penalty, "penalty", float, 100.0),
        static_theta=pick(args.static_theta, "policy.static.theta", float, 0.9),
        rl_hyper=HyperParameters(**rl_kwargs),
        workers=pick(args.workers, "workers", int, 1),
    )


def _cmd_run(args) -> int:
    config = _experiment_config(args)
    loaded = stream_mod.load_stream(args.stream)
    results = harness.run_grid(loaded, config, curves_dir=args.curves_dir)
    harness.write_results(results, args.out)
    failed = sum(1 for r in results if r.failed)
    print(f"wrote {len(results)} run rows to {args.out}"
          + (f" ({failed} failed runs recorded)" if failed else ""))
    return 0


def _cmd_report(args) -> int:
    results = harness.load_results(args.results)
    report = harness.summarize(results)
    os.makedirs(args.out_dir, exist_ok=True)
    summary_path = os.path.join(args.out_dir, "summary.csv")
    overview_path = os.path.join(args.out_dir, "winners.csv")
    harness.write_report(report, summary_path, overview_path)
    print(f"wrote {summary_path} and {overview_path}")
    for o in report.policy_overview:
        print(f"  {o.policy}: best in {o.cells_won}/{o.cells_considered} cells "
              f"(win fraction {o.win_fraction:.3f}, mean savings {o.mean_savings:.3f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="earlywarn",
        description="Compare alarm policies on prefix-wise prediction streams.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a synthetic prediction stream")
    gen.add_argument("--config", help="key=value config file")
    gen.add_argument("--preset", help="named generator shape (e.g. bpic12-like)")
    gen.add_argument("--n-cases", type=int)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--deviation-rate", type=float)
    gen.add_argument("--curve", help="monotone | drop_recover | drop_no_recover | zigzag")
    gen.add_argument("--curve-params", help="comma-separated curve parameters")
    gen.add_argument("--length", type=int, help="constant case length")
    gen.add_argument("--length-min", type=int)
    gen.add_argument("--length-max", type=int)
    gen.add_argument("--ensemble-size", type=int)
    gen.add_argument("--noise-amplitude", type=float)
    gen.add_argument("--expected-outcome", type=float)
    gen.add_argument("--drift", action="append",
                     help="start:end:offset, repeatable")
    gen.add_argument("--out-matrix", help="base-model prediction CSV")
    gen.add_argument("--out-truth", help="ground-truth sidecar CSV")
    gen.add_argument("--out-stream", help="aggregated stream (.jsonl or .csv)")
    gen.set_defaults(func=_cmd_generate)

    agg = sub.add_parser("aggregate", help="turn base-model predictions into a stream")
    agg.add_argument("--matrix", required=True)
    agg.add_argument("--truth", required=True)
    agg.add_argument("--expected-outcome", type=float, default=0.5)
    agg.add_argument("--out", required=True, help="output stream (.jsonl or .csv)")
    agg.set_defaults(func=_cmd_aggregate)

    run = sub.add_parser("run", help="run the cost-grid experiment")
    run.add_argument("--stream", required=True)
    run.add_argument("--out", required=True, help="results CSV path")
    run.add_argument("--seed", type=int, required=True, help="master seed")
    run.add_argument("--config", help="key=value config file")
    run.add_argument("--lambda-values")
    run.add_argument("--kappa-values")
    run.add_argument("--alpha-min-values")
    run.add_argument("--xi-values")
    run.add_argument("--xi-sweep", action="store_true",
                     help="sweep xi over the full grid instead of the default 0.1")
    run.add_argument("--repetitions", type=int)
    run.add_argument("--fit-fraction", type=float)
    run.add_argument("--policies", help="comma-separated subset of "
                                        + ",".join(harness.POLICY_ORDER))
    run.add_argument("--penalty", type=float)
    run.add_argument("--static-theta", type=float)
    run.add_argument("--rl-learning-rate", type=float)
    run.add_argument("--rl-clip-epsilon", type=float)
    run.add_argument("--rl-update-epochs", type=int)
    run.add_argument("--rl-hidden-sizes")
    run.add_argument("--workers", type=int)
    run.add_argument("--curves-dir", help="write per-run RL learning curves here")
    run.set_defaults(func=_cmd_run)

    rep = sub.add_parser("report", help="summarize a results CSV")
    rep.add_argument("--results", required=True)
    rep.add_argument("--out-dir", required=True)
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, harness.ConfigError, stream_mod.ParseError,
            stream_mod.ValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
