"""Command-line entry point.

Subcommands mirror the pipeline phases so any stage can be run or
re-run on its own; full-run chains them all. Exit codes: 0 success,
2 bad configuration or usage, 3 oracle/transport failure, 4 numeric
failure during training.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .core import LabeledDataset, derive_seed, write_json
from .errors import ConfigError, OracleError, ShapeError, TrainingError, UsageError
from .oracle import check_server
from .runner import (
    PHASE_EVAL,
    PHASE_EXTRACT,
    PHASE_TRAIN,
    PHASE_ATTACK,
    RunConfig,
    artifact_dir,
    build_victim,
    load_config,
    make_test_set,
    run_ablation,
    run_full,
    run_sweep,
    _evaluate,
)
from .sampler import run_extraction, write_stats_jsonl
from .substitute import NetSpec, load_checkpoint, save_checkpoint, train_substitute
from .adversarial import evaluate_transfer

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ORACLE = 3
EXIT_NUMERIC = 4


def _add_common(sub: argparse.ArgumentParser, needs_config: bool = True) -> None:
    if needs_config:
        sub.add_argument("--config", required=True, help="path to the run config JSON")
    sub.add_argument("--seed", type=int, default=None, help="override the master seed")
    sub.add_argument("--out", default=None, help="override the artifact root directory")
    sub.add_argument(
        "--oracle-url", default=None,
        help="query this prediction server instead of the configured victim",
    )


def _resolve(args) -> tuple[RunConfig, str | None]:
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    return config, args.out


def _prepared_out(config: RunConfig, out_root):
    out = artifact_dir(config, out_root)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", config.to_dict())
    return out


def cmd_full_run(args) -> int:
    config, out_root = _resolve(args)
    outcome = run_full(config, out_root, args.oracle_url)
    rep = outcome.report
    print(f"artifacts: {outcome.out_path}")
    print(f"queries: extraction={rep['queries']['extraction']} "
          f"evaluation={rep['queries']['evaluation']}")
    print(f"agreement: {rep['evaluation']['agreement']:.4f}  "
          f"accuracy: {rep['evaluation']['accuracy']:.4f}  "
          f"macro_auc: {rep['evaluation']['macro_auc']:.4f}")
    print(f"attack: transfer={rep['attack']['asr_transfer']:.4f} "
          f"whitebox={rep['attack']['asr_whitebox']:.4f} "
          f"noise={rep['attack']['asr_noise']:.4f}")
    return EXIT_OK


def cmd_train_victim(args) -> int:
    config, out_root = _resolve(args)
    if config.victim.kind != "trained-net":
        raise UsageError(
            f"victim kind {config.victim.kind!r} has nothing to train; "
            "train-victim only applies to trained-net victims"
        )
    out = _prepared_out(config, out_root)
    built = build_victim(config.victim, config.seed, args.oracle_url)
    save_checkpoint(built.model, out / "victim.bamm")
    print(f"victim checkpoint: {out / 'victim.bamm'}")
    print(f"held-out accuracy: {built.heldout_accuracy:.4f}")
    return EXIT_OK


def cmd_extract(args) -> int:
    config, out_root = _resolve(args)
    out = _prepared_out(config, out_root)
    built = build_victim(config.victim, config.seed, args.oracle_url)
    sampler_cfg = dataclasses.replace(
        config.sampler, seed=derive_seed(config.seed, PHASE_EXTRACT)
    )
    result = run_extraction(built.oracle, sampler_cfg, failure_dump_dir=out)
    result.dataset.save(out / "dataset.bamd")
    write_stats_jsonl(result.stats, out / "stats.jsonl")
    print(f"dataset: {out / 'dataset.bamd'} ({len(result.dataset)} records)")
    print(f"queries: {result.queries}")
    print(f"final mean max-prob: {result.stats[-1].mean_max_prob:.4f}")
    return EXIT_OK


def cmd_train_substitute(args) -> int:
    config, out_root = _resolve(args)
    out = _prepared_out(config, out_root)
    dataset_path = args.dataset or (out / "dataset.bamd")
    dataset = LabeledDataset.load(dataset_path)
    net = NetSpec(
        input_dim=config.victim.input_dim,
        hidden=config.hidden,
        class_count=config.victim.class_count,
        seed=derive_seed(config.seed, PHASE_TRAIN),
    )
    train_cfg = dataclasses.replace(
        config.train, shuffle_seed=derive_seed(config.seed, PHASE_TRAIN, 1)
    )
    trained = train_substitute(dataset, net, train_cfg)
    save_checkpoint(trained.model, out / "substitute.bamm")
    write_json(out / "training.json", {
        "train_losses": trained.train_losses,
        "val_losses": trained.val_losses,
        "best_epoch": trained.best_epoch,
        "val_size": trained.val_size,
    })
    print(f"substitute checkpoint: {out / 'substitute.bamm'}")
    last = trained.train_losses[-1] if trained.train_losses else float("nan")
    print(f"best epoch: {trained.best_epoch}  final train loss: {last:.5f}")
    return EXIT_OK


def _load_substitute(args, out):
    path = args.substitute or (out / "substitute.bamm")
    return load_checkpoint(path)


def cmd_evaluate(args) -> int:
    config, out_root = _resolve(args)
    out = _prepared_out(config, out_root)
    model = _load_substitute(args, out)
    built = build_victim(config.victim, config.seed, args.oracle_url)
    x_test, truth = make_test_set(built, config, derive_seed(config.seed, PHASE_EVAL))
    dataset_path = out / "dataset.bamd"
    if args.dataset:
        dataset_path = args.dataset
    try:
        queries = len(LabeledDataset.load(dataset_path))
    except OSError as exc:
        raise UsageError(
            f"cannot read {dataset_path} to account extraction queries "
            "(run extract first or pass --dataset)"
        ) from exc
    report = _evaluate(model, built, x_test, truth, queries, config)
    write_json(out / "evaluation.json", report.to_dict())
    print(f"agreement: {report.agreement:.4f}  accuracy: {report.accuracy:.4f}")
    print(f"macro AUC: {report.macro_auc:.4f}")
    print(f"query ratio: {report.query_ratio:.4f} "
          f"({report.query_count} / {config.evaluation.reference_size})")
    return EXIT_OK


def cmd_attack(args) -> int:
    config, out_root = _resolve(args)
    out = _prepared_out(config, out_root)
    model = _load_substitute(args, out)
    built = build_victim(config.victim, config.seed, args.oracle_url)
    x_test, truth = make_test_set(built, config, derive_seed(config.seed, PHASE_EVAL))
    report = evaluate_transfer(
        model, built.oracle, x_test, config.attack,
        seed=derive_seed(config.seed, PHASE_ATTACK), truth=truth,
    )
    write_json(out / "attack.json", report.to_dict())
    print(f"eligible: {report.eligible_count}/{report.total_count}")
    print(f"ASR transfer: {report.asr_transfer:.4f}  whitebox: {report.asr_whitebox:.4f}  "
          f"noise: {report.asr_noise:.4f}")
    print(f"max |delta|: {report.max_abs_delta:.6f} (budget {report.epsilon:.6f})")
    return EXIT_OK


def cmd_ablation(args) -> int:
    config, out_root = _resolve(args)
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    report = run_ablation(config, modes, out_root, args.oracle_url)
    for mode, arm in report["modes"].items():
        print(f"{mode:10s} queries={arm['queries']:>9d} agreement={arm['agreement']:.4f} "
              f"accuracy={arm['accuracy']:.4f} asr={arm['asr_transfer']:.4f}")
    print(f"ablation report: {artifact_dir(config, out_root) / 'ablation.json'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config, out_root = _resolve(args)
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--values must be comma-separated integers: {exc}") from exc
    rows = run_sweep(config, args.axis, values, out_root, args.oracle_url)
    for row in rows:
        print(f"{row['axis']}={row['value']:>7d} queries={row['queries']:>9d} "
              f"agreement={row['agreement']:.4f} accuracy={row['accuracy']:.4f}")
    print(f"sweep table: {artifact_dir(config, out_root) / 'sweep.csv'}")
    return EXIT_OK


def cmd_serve_check(args) -> int:
    info = check_server(args.oracle_url)
    print(f"server ok: input_dim={info['input_dim']} class_count={info['class_count']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bamkit",
        description="Boundary-sampling model extraction toolkit",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("full-run", help="run every phase and write report.json")
    _add_common(p)
    p.set_defaults(fn=cmd_full_run)

    p = subs.add_parser("train-victim", help="train the victim net and checkpoint it")
    _add_common(p)
    p.set_defaults(fn=cmd_train_victim)

    p = subs.add_parser("extract", help="run the evolutionary extraction")
    _add_common(p)
    p.set_defaults(fn=cmd_extract)

    p = subs.add_parser("train-substitute", help="fit the substitute on a dataset file")
    _add_common(p)
    p.add_argument("--dataset", default=None, help="dataset file (default: artifact dir)")
    p.set_defaults(fn=cmd_train_substitute)

    p = subs.add_parser("evaluate", help="score the substitute against the victim")
    _add_common(p)
    p.add_argument("--substitute", default=None, help="checkpoint (default: artifact dir)")
    p.add_argument("--dataset", default=None, help="dataset used for query accounting")
    p.set_defaults(fn=cmd_evaluate)

    p = subs.add_parser("attack", help="craft PGD examples and measure transfer")
    _add_common(p)
    p.add_argument("--substitute", default=None, help="checkpoint (default: artifact dir)")
    p.set_defaults(fn=cmd_attack)

    p = subs.add_parser("ablation", help="compare fitness-direction variants")
    _add_common(p)
    p.add_argument("--modes", default="LC,HC,HC&LC,half-half",
                   help="comma-separated subset of LC,HC,HC&LC,half-half")
    p.set_defaults(fn=cmd_ablation)

    p = subs.add_parser("sweep", help="vary one sampler axis and tabulate results")
    _add_common(p)
    p.add_argument("--axis", required=True, help="N, k, or I")
    p.add_argument("--values", required=True, help="comma-separated integers")
    p.set_defaults(fn=cmd_sweep)

    p = subs.add_parser("serve-check", help="probe a prediction server's health and info")
    p.add_argument("--oracle-url", required=True, help="server base URL")
    p.set_defaults(fn=cmd_serve_check)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, UsageError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (TrainingError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
