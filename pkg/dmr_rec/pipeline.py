from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import pandas as pd

from .config import RunConfig, rng_for
from .data import ChronoSplit, chrono_split, ingest_log, split_from_logs, write_log
from .errors import ConfigError, DataError
from .evaluation import (
    EvalReport,
    assignment_purity,
    build_candidate_pools,
    evaluate,
    evaluate_rankings,
    relevant_items,
    report_frame,
)
from .features import build_query_example
from .model import ModelParams, candidate_softmax, forward_candidates, init_params, sigmoid
from .network import NeighborIndex, build_neighbor_index
from .synthetic import popularity_baseline
from .training import AdamState, EpochStats, TrainConfig, TrainResult, train

TRAIN_FILE = "train.csv"
TEST_FILE = "test.csv"
NEIGHBORS_FILE = "neighbors.txt"
CHECKPOINT_FILE = "model.ckpt"
EPOCHS_FILE = "epochs.csv"
REPORT_FILE = "report.csv"
SWEEP_FILE = "sweep.csv"
TRUTH_SUFFIX = ".truth.csv"


def out_path(config: RunConfig, filename: str) -> str:
    return str(Path(config.out_dir) / filename)


def prepare_split(config: RunConfig) -> ChronoSplit:
    return chrono_split(ingest_log(config.log_path), config.split_fraction)


def save_split(split: ChronoSplit, out_dir: str) -> tuple[str, str]:
    return (
        write_log(split.train, str(Path(out_dir) / TRAIN_FILE)),
        write_log(split.test, str(Path(out_dir) / TEST_FILE)),
    )


def load_split(config: RunConfig) -> ChronoSplit:
    return split_from_logs(
        ingest_log(out_path(config, TRAIN_FILE)),
        ingest_log(out_path(config, TEST_FILE)),
        config.split_fraction,
    )


def build_index(config: RunConfig, split: ChronoSplit, n_max: int | None = None) -> NeighborIndex:
    n_max = config.n_max if n_max is None else n_max
    return build_neighbor_index(
        split.train,
        k=config.k,
        g=max(config.g, n_max),
        tau=config.tau,
        n_max=n_max,
        similarity=config.similarity,
        n_jobs=config.n_jobs,
    )


def resolve_time_scale(config: RunConfig, split: ChronoSplit) -> float:
    if config.time_scale > 0:
        return config.time_scale
    return float(split.train.time_span()) or 1.0


def new_params(config: RunConfig, split: ChronoSplit) -> ModelParams:
    """Fresh parameters over every item of the split, seeded from the `init` stream."""
    items = sorted(set(split.train.items) | set(split.test.items))
    return init_params(
        items,
        dim=config.dim,
        trends=config.trends,
        rng=rng_for(config.seed, "init"),
        time_scale=resolve_time_scale(config, split),
        time_power=config.time_power,
        neg_weight=config.neg_weight,
    )


def eval_pools(config: RunConfig, split: ChronoSplit, params: ModelParams) -> dict[str, list[str]]:
    return build_candidate_pools(split, params.item_ids, config.candidate_pool, rng_for(config.seed, "eval-pool"))


def evaluate_model(
    config: RunConfig,
    split: ChronoSplit,
    index: NeighborIndex,
    params: ModelParams,
    pools: dict[str, list[str]] | None = None,
) -> EvalReport:
    return evaluate(
        params,
        split,
        index,
        n=config.eval_n,
        pools=pools if pools is not None else eval_pools(config, split, params),
        future_cap=config.future_cap,
        cutoffs=config.diversity_cutoffs,
    )


def truth_path(config: RunConfig) -> Path:
    return Path(config.log_path).with_suffix(TRUTH_SUFFIX)


def trend_purity(config: RunConfig, split: ChronoSplit, params: ModelParams) -> float | None:
    """Purity of the learned trend slots on the training clicks, when the log has a planted-truth sidecar."""
    path = truth_path(config)
    if not path.exists():
        return None
    return assignment_purity(params, split.train, pd.read_csv(path, dtype={"user": str, "item": str}))


def baseline_report(config: RunConfig, split: ChronoSplit, pools: dict[str, list[str]]) -> EvalReport:
    categories = {**split.train.categories(), **split.test.categories()}
    return evaluate_rankings(
        popularity_baseline(split, pools),
        relevant_items(split.test),
        config.eval_n,
        categories,
        config.diversity_cutoffs,
        label="popularity",
    )


def fit(
    config: RunConfig,
    split: ChronoSplit,
    index: NeighborIndex,
    params: ModelParams | None = None,
    state: AdamState | None = None,
    start_epoch: int = 0,
    validate: bool = False,
    on_epoch: Callable[[EpochStats], None] | None = None,
) -> TrainResult:
    params = params if params is not None else new_params(config, split)
    evaluator = None
    if validate:
        pools = eval_pools(config, split, params)
        evaluator = lambda p: evaluate_model(config, split, index, p, pools).auc  # noqa: E731
    return train(
        split,
        index,
        params,
        TrainConfig.from_run_config(config),
        state=state,
        start_epoch=start_epoch,
        evaluator=evaluator,
        on_epoch=on_epoch,
    )


def trace_frame(trace: list[EpochStats]) -> pd.DataFrame:
    return pd.DataFrame(
        [(s.epoch, s.loss, s.objective, s.samples, s.val_auc) for s in trace],
        columns=["epoch", "loss", "objective", "samples", "val_auc"],
    )


@dataclass
class PipelineResult:
    split: ChronoSplit
    index: NeighborIndex
    training: TrainResult
    report: EvalReport
    baseline: EvalReport | None = None


def run_pipeline(config: RunConfig, split: ChronoSplit | None = None, with_baseline: bool = True) -> PipelineResult:
    split = split if split is not None else prepare_split(config)
    index = build_index(config, split)
    result = fit(config, split, index)
    pools = eval_pools(config, split, result.params)
    report = evaluate_model(config, split, index, result.params, pools)
    baseline = baseline_report(config, split, pools) if with_baseline else None
    return PipelineResult(split=split, index=index, training=result, report=report, baseline=baseline)


def run_sweep(
    config: RunConfig,
    split: ChronoSplit,
    settings: tuple[int, ...] | None = None,
    with_baseline: bool = False,
) -> pd.DataFrame:
    """One train-and-evaluate run per neighbor count, each from the same initial parameters."""
    settings = settings or config.sweep_settings
    reports: list[EvalReport] = []
    neighbors: list[object] = []
    pools = None
    for n_max in settings:
        swept = replace(config, n_max=n_max, g=max(config.g, n_max))
        index = build_index(swept, split)
        result = fit(swept, split, index)
        pools = pools or eval_pools(swept, split, result.params)
        reports.append(evaluate_model(swept, split, index, result.params, pools))
        neighbors.append(n_max)
        print(f"sweep n_max={n_max}: auc={reports[-1].auc:.4f} f1={reports[-1].f1:.4f}")
    if with_baseline and pools is not None:
        reports.append(baseline_report(config, split, pools))
        neighbors.append(pd.NA)
    return report_frame(reports, neighbors=neighbors)


def recommend(
    params: ModelParams,
    split: ChronoSplit,
    index: NeighborIndex,
    user: str,
    top: int = 10,
    future_cap: int = 100,
) -> pd.DataFrame:
    """Top items the user never touched in the training log.

    `probability` is the click probability of each item; `share` is its softmax weight over all candidates.
    """
    if user not in split.train.histories:
        raise DataError(f"unknown user {user}")
    if top < 1:
        raise ConfigError("top must be >= 1")
    seen = split.train.histories[user].items()
    candidates = [item for item in params.item_ids if item not in seen]
    example = build_query_example(user, split.train, index, params, future_cap, candidates)
    logits, _ = forward_candidates(
        example.history_pos,
        example.future_pos,
        example.history_neg,
        example.future_neg,
        example.candidates,
        example.query_times,
        params,
    )
    frame = pd.DataFrame(
        {"item": candidates, "logit": logits, "probability": sigmoid(logits), "share": candidate_softmax(logits)}
    )
    frame = frame.sort_values(["logit", "item"], ascending=[False, True], kind="mergesort").head(top)
    frame.insert(0, "rank", range(1, len(frame) + 1))
    return frame.reset_index(drop=True)
