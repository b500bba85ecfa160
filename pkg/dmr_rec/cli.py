from __future__ import annotations

import argparse
import sys
import time
from dataclasses import fields
from pathlib import Path

import pandas as pd

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config, write_config
from .data import scan_log, write_log
from .errors import ConfigError, DataError, NumericError
from .logging_db import init_db, log_epochs, log_report, log_run
from .network import load_neighbor_index, save_neighbor_index
from .pipeline import (
    CHECKPOINT_FILE,
    EPOCHS_FILE,
    NEIGHBORS_FILE,
    REPORT_FILE,
    SWEEP_FILE,
    baseline_report,
    build_index,
    eval_pools,
    evaluate_model,
    fit,
    load_split,
    out_path,
    prepare_split,
    recommend,
    run_sweep,
    save_split,
    trace_frame,
    trend_purity,
    truth_path,
)
from .evaluation import EvalReport, report_frame
from .synthetic import PlantedWorld, generate

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
MAX_VIOLATIONS = 10


def _config(args: argparse.Namespace) -> RunConfig:
    overrides = {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}
    return load_config(args.config, overrides)


def _start_run(config: RunConfig, command: str) -> int:
    write_config(config, config.out_dir)
    init_db(config.db_path)
    return log_run(config.db_path, command, config.config_hash(), config.to_text())


def _log_reports(config: RunConfig, run_id: int, reports: list[EvalReport], neighbors: int | None) -> None:
    for report in reports:
        log_report(
            config.db_path,
            run_id,
            report.label,
            neighbors if report.label != "popularity" else None,
            report.n,
            report.precision,
            report.recall,
            report.f1,
            report.auc,
            report.diversity,
            report.users_evaluated,
        )


def cmd_validate(args: argparse.Namespace) -> None:
    config = _config(args)
    records, violations = scan_log(config.log_path)
    users = {x.user for x in records}
    items = {x.item for x in records}
    print(f"{config.log_path}: users={len(users)} items={len(items)} interactions={len(records)}")
    for line_no, message in violations[:MAX_VIOLATIONS]:
        print(f"line {line_no}: {message}")
    if violations:
        raise DataError(f"{len(violations)} invalid records in {config.log_path}")


def cmd_synth(args: argparse.Namespace) -> None:
    config = _config(args)
    _start_run(config, "synth")
    log, truth = generate(PlantedWorld.from_config(config))
    log_path = write_log(log, config.log_path)
    truth_file = truth_path(config)
    truth.to_csv(truth_file, index=False, lineterminator="\n")
    counts = log.counts()
    print(f"Wrote {counts['interactions']} interactions ({counts['users']} users, {counts['items']} items) to {log_path}")
    print(f"Ground-truth trends written to {truth_file}")


def cmd_split(args: argparse.Namespace) -> None:
    config = _config(args)
    _start_run(config, "split")
    split = prepare_split(config)
    train_path, test_path = save_split(split, config.out_dir)
    print(f"Train: {len(split.train)} interactions -> {train_path}")
    print(f"Test: {len(split.test)} interactions -> {test_path}")
    if split.dropped_users:
        print(f"Dropped {len(split.dropped_users)} users with too few interactions to split.")


def cmd_build_network(args: argparse.Namespace) -> None:
    config = _config(args)
    _start_run(config, "build-network")
    split = load_split(config)
    index = build_index(config, split)
    path = save_neighbor_index(index, out_path(config, NEIGHBORS_FILE))
    sizes = [len(entries) for entries in index.neighbors.values()]
    print(f"Neighbor index for {len(sizes)} users (mean {sum(sizes) / max(len(sizes), 1):.2f} neighbors) -> {path}")


def cmd_train(args: argparse.Namespace) -> None:
    config = _config(args)
    run_id = _start_run(config, "train")
    split = load_split(config)
    index = load_neighbor_index(out_path(config, NEIGHBORS_FILE))
    ckpt_path = out_path(config, CHECKPOINT_FILE)

    params = state = None
    start_epoch = 0
    if args.resume:
        checkpoint = load_checkpoint(ckpt_path)
        params, state, start_epoch = checkpoint.params, checkpoint.state, checkpoint.epochs_done
        print(f"Resuming from epoch {start_epoch} ({ckpt_path})")

    timings: list[tuple[int, float, float | None, float | None]] = []
    started = time.perf_counter()

    def report_epoch(stats) -> None:
        nonlocal started
        elapsed = time.perf_counter() - started
        started = time.perf_counter()
        timings.append((stats.epoch, stats.loss, stats.val_auc, elapsed))
        print(f"epoch {stats.epoch}: loss={stats.loss:.6f} val_auc={stats.val_auc:.4f} ({elapsed:.1f}s)")

    result = fit(
        config, split, index, params=params, state=state, start_epoch=start_epoch,
        validate=args.validate, on_epoch=report_epoch,
    )
    log_epochs(config.db_path, run_id, timings)

    epochs_path = Path(out_path(config, EPOCHS_FILE))
    frame = trace_frame(result.trace)
    if args.resume and epochs_path.exists():
        frame = pd.concat([pd.read_csv(epochs_path), frame], ignore_index=True)
    frame.to_csv(epochs_path, index=False, lineterminator="\n")
    save_checkpoint(result.params, result.state, ckpt_path, result.epochs_done, config.config_hash())
    print(f"Checkpoint ({result.epochs_done} epochs) saved to {ckpt_path}")


def cmd_evaluate(args: argparse.Namespace) -> None:
    config = _config(args)
    run_id = _start_run(config, "evaluate")
    split = load_split(config)
    index = load_neighbor_index(out_path(config, NEIGHBORS_FILE))
    params = load_checkpoint(out_path(config, CHECKPOINT_FILE)).params

    pools = eval_pools(config, split, params)
    reports = [evaluate_model(config, split, index, params, pools)]
    if args.baseline:
        reports.append(baseline_report(config, split, pools))
    _log_reports(config, run_id, reports, index.n_max)

    frame = report_frame(reports)
    purity = trend_purity(config, split, params)
    if purity is not None:
        frame["purity"] = [purity] + [float("nan")] * (len(reports) - 1)
    frame.to_csv(out_path(config, REPORT_FILE), index=False, lineterminator="\n")
    print(frame.to_string(index=False))


def cmd_recommend(args: argparse.Namespace) -> None:
    config = _config(args)
    split = load_split(config)
    index = load_neighbor_index(out_path(config, NEIGHBORS_FILE))
    params = load_checkpoint(out_path(config, CHECKPOINT_FILE)).params
    frame = recommend(params, split, index, args.user, top=args.top, future_cap=config.future_cap)
    print(frame[["rank", "item", "probability", "share"]].to_string(index=False))


def cmd_sweep(args: argparse.Namespace) -> None:
    config = _config(args)
    run_id = _start_run(config, "sweep")
    split = load_split(config)
    frame = run_sweep(config, split, with_baseline=args.baseline)
    for row in frame.itertuples(index=False):
        log_report(
            config.db_path, run_id, row.label, None if row.label == "popularity" else int(row.neighbors),
            int(row.n), row.precision, row.recall, row.f1, row.auc, row.diversity, int(row.users),
        )
    frame.to_csv(out_path(config, SWEEP_FILE), index=False, lineterminator="\n")
    print(frame.to_string(index=False))


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="key=value config file (explicit flags win)")
    group = parser.add_argument_group("run configuration")
    for f in fields(RunConfig):
        group.add_argument(
            f"--{f.name.replace('_', '-')}",
            dest=f.name,
            default=None,
            metavar=f.type.upper() if isinstance(f.type, str) else None,
            help=f"default: {f.default}",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="DMR multi-trend recommender")
    subparsers = parser.add_subparsers(dest="command", required=True)

    commands = {
        "validate": (cmd_validate, "check an interaction log and print counts"),
        "synth": (cmd_synth, "generate a planted-trend interaction log"),
        "split": (cmd_split, "chronological train/test split"),
        "build-network": (cmd_build_network, "build the implicit user network"),
        "train": (cmd_train, "train and checkpoint the model"),
        "evaluate": (cmd_evaluate, "score a checkpoint on the test period"),
        "recommend": (cmd_recommend, "top items for one user"),
        "sweep": (cmd_sweep, "train and evaluate over several neighbor counts"),
    }
    for name, (handler, help_text) in commands.items():
        sub = subparsers.add_parser(name, help=help_text)
        _add_config_flags(sub)
        sub.set_defaults(handler=handler)
        if name == "train":
            sub.add_argument("--resume", action="store_true", help="continue from the saved checkpoint")
            sub.add_argument("--validate", action="store_true", help="test-period AUC after every epoch")
        if name in ("evaluate", "sweep"):
            sub.add_argument("--baseline", action="store_true", help="add a popularity-ranking row")
        if name == "recommend":
            sub.add_argument("--user", required=True)
            sub.add_argument("--top", type=int, default=10)
    return parser


def _fail(code: int, exc: BaseException) -> int:
    message = " ".join(str(exc).split())
    print(f"error code={code} kind={type(exc).__name__} message={message}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        args.handler(args)
    except NumericError as exc:
        return _fail(EXIT_NUMERIC, exc)
    except ConfigError as exc:
        return _fail(EXIT_USAGE, exc)
    except Exception as exc:
        # DataError, FileNotFoundError and any other contract failure
        return _fail(EXIT_DATA, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
