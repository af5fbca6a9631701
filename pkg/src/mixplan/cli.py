"""Command-line entry points: plan, sample, fit, eval, run-experiment,
verify-lemmas, gen-standin, ingest-ltr, histogram."""

from __future__ import annotations

import argparse
import base64
import json
import sys
from pathlib import Path

import numpy as np

from .concentration import verify_lemmas
from .core import ConfigurationError, ExperimentConfig
from .covariance import RegularizedCovariance
from .environments import (
    RankDatasetSpec,
    generate_standin_file,
    ingest_rank_dataset,
    make_hard_goptimal,
    make_hard_uniform,
    make_rank_instance,
    make_synthetic,
)
from .estimator import RidgeEstimate, evaluate, ridge_fit
from .harness import RunConfig, emit_action_histogram, run_experiment
from .planner import MixturePolicy, plan
from .sampler import dataset_from_csv, dataset_to_csv, dataset_to_npz, sample

_SIMULATED = ("synthetic", "hard_uniform", "hard_goptimal")


def _add_env_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--env", required=True,
                        choices=_SIMULATED + ("rank_dataset",))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--actions", type=int, default=10,
                        help="action count for hard_uniform")
    parser.add_argument("--k", type=int, default=3, help="context count for hard_goptimal")
    parser.add_argument("--data-path", default=None, help="ranking data file or directory")
    parser.add_argument("--raw-dim", type=int, default=700)
    parser.add_argument("--subsampled-dim", type=int, default=300)


def _build_env(args):
    """Returns (instance, offline_context_pool, norm_cap)."""
    if args.env == "synthetic":
        return make_synthetic(args.seed), None, None
    if args.env == "hard_uniform":
        return make_hard_uniform(args.actions), None, 1.0
    if args.env == "hard_goptimal":
        return make_hard_goptimal(args.k), None, 1.0
    if not args.data_path:
        raise ConfigurationError("--data-path is required for rank_dataset")
    spec = RankDatasetSpec(raw_dim=args.raw_dim, subsampled_dim=args.subsampled_dim)
    ingest = ingest_rank_dataset(args.data_path, spec, args.seed)
    pool = ingest.valid if ingest.valid else ingest.train
    instance = make_rank_instance(
        ingest.train,
        order=np.random.default_rng(args.seed).permutation(len(ingest.train)),
    )
    return instance, [rc.context for rc in pool], 1.0


def _cmd_plan(args) -> int:
    instance, pool, norm_cap = _build_env(args)
    config = ExperimentConfig(M=args.M, N=args.N or args.M, lambda_reg=args.lambda_reg,
                              alpha=args.alpha, delta=args.delta, epsilon=args.epsilon,
                              seed=args.seed)
    if pool is None:
        rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(0,)))
        contexts = [instance.context_sampler(rng) for _ in range(config.M)]
    else:
        if len(pool) < config.M:
            raise ConfigurationError(
                f"offline pool has only {len(pool)} contexts, M={config.M}"
            )
        contexts = pool[: config.M]
    policy, trace = plan(contexts, config, norm_cap=norm_cap)
    policy.save(args.out)
    print(f"planned M={config.M} steps, {policy.snapshot_count} snapshot policies -> {args.out}")
    return 0


def _cmd_sample(args) -> int:
    instance, _, _ = _build_env(args)
    policy = MixturePolicy.load(args.policy)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(1,)))
    dataset = sample(policy, instance, args.N, rng)
    dataset_to_csv(dataset, args.out)
    if args.binary:
        dataset_to_npz(dataset, args.binary)
    print(f"collected {len(dataset)} records -> {args.out}")
    return 0


def _cmd_fit(args) -> int:
    dataset = dataset_from_csv(args.dataset)
    estimate = ridge_fit(dataset, args.lambda_reg)
    payload = {
        "d": estimate.d,
        "lambda_reg": args.lambda_reg,
        "n_samples": estimate.n_samples,
        "theta_hat": [float(v) for v in estimate.theta_hat],
        "sigma_prime_b64": base64.b64encode(
            np.ascontiguousarray(estimate.sigma_prime_n.matrix).tobytes()
        ).decode("ascii"),
    }
    Path(args.out).write_text(json.dumps(payload))
    print(f"fit theta_hat on {estimate.n_samples} records -> {args.out}")
    return 0


def _load_estimate(path) -> RidgeEstimate:
    payload = json.loads(Path(path).read_text())
    d = int(payload["d"])
    matrix = np.frombuffer(
        base64.b64decode(payload["sigma_prime_b64"]), dtype=np.float64
    ).reshape(d, d)
    cov = RegularizedCovariance.from_state(matrix, payload["lambda_reg"], alpha=1.0)
    return RidgeEstimate(
        theta_hat=np.array(payload["theta_hat"]),
        sigma_prime_n=cov,
        n_samples=int(payload["n_samples"]),
    )


def _cmd_eval(args) -> int:
    instance, _, _ = _build_env(args)
    estimate = _load_estimate(args.estimate)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(2,)))
    contexts = [instance.context_sampler(rng) for _ in range(args.n_eval)]
    report = evaluate(estimate, instance, contexts)
    echo = {"env": args.env, "seed": args.seed, "n_eval": args.n_eval}
    Path(args.out).write_text(report.to_json(config_echo=echo))
    print(f"policy value {report.policy_value:.4f}, "
          f"suboptimality {report.expected_suboptimality:.4f} -> {args.out}")
    return 0


def _cmd_run_experiment(args) -> int:
    payload = {}
    if args.config:
        payload = json.loads(Path(args.config).read_text())
    overrides = {
        "environment": args.environment,
        "algorithm": args.algorithm,
        "N": args.N,
        "M": args.M,
        "alpha": args.alpha,
        "lambda_reg": args.lambda_reg,
        "seed": args.seed,
        "n_trials": args.n_trials,
        "eval_every": args.eval_every,
        "eval_set_size": args.eval_set_size,
        "output_path": args.out,
        "data_path": args.data_path,
        "workers": args.workers,
    }
    payload.update({k: v for k, v in overrides.items() if v is not None})
    result = run_experiment(RunConfig.from_dict(payload))
    final = result.summary["final"]
    print(f"wrote {result.metrics_path}; final policy value "
          f"{final['policy_value_mean']:.4f} +- {final['policy_value_stderr']:.4f}")
    return 0


def _cmd_verify_lemmas(args) -> int:
    report = verify_lemmas(seed=args.seed, coverage_trials=args.trials,
                           sandwich_trials=args.sandwich_trials,
                           planner_runs=args.planner_runs)
    Path(args.out).write_text(json.dumps(report, indent=2))
    print(f"lemma report ({'PASS' if report['pass'] else 'FAIL'}) -> {args.out}")
    return 0 if report["pass"] else 1


def _cmd_gen_standin(args) -> int:
    out = Path(args.out)
    if args.splits:
        out.mkdir(parents=True, exist_ok=True)
        for i, name in enumerate(("train.txt", "valid.txt", "test.txt")):
            generate_standin_file(out / name, n_queries=args.queries,
                                  seed=args.seed + i, raw_dim=args.raw_dim)
        print(f"stand-in splits -> {out}/")
    else:
        generate_standin_file(out, n_queries=args.queries, seed=args.seed,
                              raw_dim=args.raw_dim)
        print(f"stand-in file -> {out}")
    return 0


def _cmd_ingest_ltr(args) -> int:
    spec = RankDatasetSpec(raw_dim=args.raw_dim, subsampled_dim=args.subsampled_dim)
    ingest = ingest_rank_dataset(args.path, spec, args.seed)
    summary = {
        "n_train": len(ingest.train),
        "n_valid": len(ingest.valid),
        "n_test": len(ingest.test),
        "subsample_indices": [int(i) for i in ingest.subsample_indices],
        "max_actions": spec.max_actions,
    }
    Path(args.out).write_text(json.dumps(summary, indent=2))
    if args.export:
        for name, split in (("train", ingest.train), ("valid", ingest.valid),
                            ("test", ingest.test)):
            if not split:
                continue
            np.savez_compressed(
                f"{args.export}-{name}.npz",
                qids=np.array([rc.context.context_id for rc in split], dtype=np.str_),
                features=np.concatenate([rc.context.features for rc in split]),
                offsets=np.cumsum([0] + [rc.context.n_actions for rc in split]),
                relevance=np.concatenate([rc.relevance for rc in split]),
            )
    print(f"ingested {summary['n_train']}/{summary['n_valid']}/{summary['n_test']} "
          f"train/valid/test queries -> {args.out}")
    return 0


def _cmd_histogram(args) -> int:
    dataset = dataset_from_csv(args.dataset)
    emit_action_histogram(dataset, path=args.out)
    print(f"action histogram -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixplan",
        description="Non-reactive exploration pipeline for linear contextual bandits",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="run the offline planner, write a policy artifact")
    _add_env_flags(p)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--N", type=int, default=None, help="online budget (defaults to M)")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--lambda-reg", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("sample", help="run a policy artifact online, write a dataset CSV")
    _add_env_flags(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--binary", default=None, help="also write a compact npz")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("fit", help="ridge-fit a dataset CSV, write the estimate")
    p.add_argument("--dataset", required=True)
    p.add_argument("--lambda-reg", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("eval", help="evaluate an estimate on fresh contexts")
    _add_env_flags(p)
    p.add_argument("--estimate", required=True)
    p.add_argument("--n-eval", type=int, default=2000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("run-experiment", help="multi-trial experiment driver")
    p.add_argument("--config", default=None, help="JSON file with RunConfig fields")
    p.add_argument("--environment", default=None)
    p.add_argument("--algorithm", default=None)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--lambda-reg", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-trials", type=int, default=None)
    p.add_argument("--eval-every", type=int, default=None)
    p.add_argument("--eval-set-size", type=int, default=None)
    p.add_argument("--data-path", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_run_experiment)

    p = sub.add_parser("verify-lemmas", help="run the concentration verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=4000)
    p.add_argument("--sandwich-trials", type=int, default=40)
    p.add_argument("--planner-runs", type=int, default=25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_verify_lemmas)

    p = sub.add_parser("gen-standin", help="generate a stand-in ranking file")
    p.add_argument("--out", required=True)
    p.add_argument("--queries", type=int, default=200)
    p.add_argument("--raw-dim", type=int, default=700)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--splits", action="store_true",
                   help="write a directory with train/valid/test files")
    p.set_defaults(func=_cmd_gen_standin)

    p = sub.add_parser("ingest-ltr", help="parse and preprocess a ranking dataset")
    p.add_argument("--path", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--raw-dim", type=int, default=700)
    p.add_argument("--subsampled-dim", type=int, default=300)
    p.add_argument("--export", default=None, help="prefix for npz context bundles")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest_ltr)

    p = sub.add_parser("histogram", help="per-action frequency of a dataset CSV")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_histogram)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
