from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.metrics import roc_auc_score

from .config import rng_for
from .data import ChronoSplit, InteractionLog
from .errors import DataError
from .features import build_eval_example
from .model import ModelParams, assignment_weights, forward_candidates
from .network import NeighborIndex, extract_future_sequence

DEFAULT_CUTOFFS = (10, 50, 100)


@dataclass(frozen=True)
class RankedList:
    user: str
    items: tuple[str, ...]
    scores: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.items) != len(self.scores):
            raise ValueError("items and scores differ in length")
        if len(set(self.items)) != len(self.items):
            raise ValueError(f"user {self.user}: ranked items are not unique")
        if any(b > a for a, b in zip(self.scores, self.scores[1:])):
            raise ValueError(f"user {self.user}: scores are not non-increasing")

    @classmethod
    def from_scores(cls, user: str, items: Sequence[str], scores: Iterable[float]) -> "RankedList":
        """Rank by score descending, ties by item id."""
        pairs = sorted(zip(items, (float(s) for s in scores)), key=lambda pair: (-pair[1], pair[0]))
        return cls(user=user, items=tuple(p[0] for p in pairs), scores=tuple(p[1] for p in pairs))

    def top(self, n: int) -> tuple[str, ...]:
        return self.items[:n]

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    auc: float
    diversity: float
    n: int
    users_evaluated: int
    diversity_at: Mapping[int, float] = field(default_factory=dict)
    label: str = "dmr"

    def row(self) -> dict[str, object]:
        row: dict[str, object] = {
            "label": self.label,
            "n": self.n,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
            "diversity": self.diversity,
        }
        for cutoff, value in sorted(self.diversity_at.items()):
            row[f"diversity@{cutoff}"] = value
        row["users"] = self.users_evaluated
        return row


def report_frame(reports: Sequence[EvalReport], **extra: Sequence[object]) -> pd.DataFrame:
    frame = pd.DataFrame([report.row() for report in reports])
    for position, (name, values) in enumerate(extra.items(), start=1):
        frame.insert(position, name, list(values))
    return frame


def _hits(ranked: RankedList, relevant: set[str], n: int) -> int:
    if n < 1:
        raise ValueError("n must be >= 1")
    if not len(ranked):
        raise ValueError(f"user {ranked.user}: empty ranked list")
    return sum(1 for item in ranked.top(n) if item in relevant)


def precision_at_n(ranked: RankedList, relevant: set[str], n: int) -> float:
    # Divides by n even when the list is shorter.
    return _hits(ranked, relevant, n) / n


def recall_at_n(ranked: RankedList, relevant: set[str], n: int) -> float:
    if not relevant:
        raise ValueError(f"user {ranked.user}: recall needs at least one relevant item")
    return _hits(ranked, relevant, n) / len(relevant)


def f1_at_n(p: float, r: float) -> float:
    if p + r == 0:
        return 0.0
    return 2.0 * p * r / (p + r)


def auc(scores_pos: Sequence[float], scores_neg: Sequence[float]) -> float:
    """Probability a positive outscores a negative, ties counted half; NaN without both classes."""
    if not len(scores_pos) or not len(scores_neg):
        return math.nan
    labels = np.concatenate([np.ones(len(scores_pos)), np.zeros(len(scores_neg))])
    scores = np.concatenate([np.asarray(scores_pos, dtype=float), np.asarray(scores_neg, dtype=float)])
    return float(roc_auc_score(labels, scores))


def diversity_at_n(ranked: RankedList, categories: Mapping[str, int], n: int) -> float:
    """Share of category-distinct pairs within the top n."""
    if n < 2:
        raise ValueError("diversity needs n >= 2")
    top = ranked.top(n)
    if len(top) < 2:
        raise ValueError(f"user {ranked.user}: fewer than 2 ranked items")
    missing = [item for item in top if item not in categories]
    if missing:
        raise DataError(f"item {missing[0]} has no category")
    pairs = list(combinations(top, 2))
    return sum(1 for a, b in pairs if categories[a] != categories[b]) / len(pairs)


def _mean(values: list[float]) -> float:
    finite = [v for v in values if not math.isnan(v)]
    return float(np.mean(finite)) if finite else math.nan


def build_candidate_pools(
    split: ChronoSplit, items: Sequence[str], size: int, rng: np.random.Generator
) -> dict[str, list[str]]:
    """Per test user: their test-period items, then `size` items they never touched."""
    pools: dict[str, list[str]] = {}
    for user, history in split.test.histories.items():
        test_items = list(dict.fromkeys(x.item for x in history.interactions))
        seen = set(test_items) | split.train.histories[user].items()
        unseen = [item for item in items if item not in seen]
        picks = rng.choice(len(unseen), size=min(size, len(unseen)), replace=False)
        pools[user] = test_items + [unseen[i] for i in sorted(picks)]
    return pools


def relevant_items(test: InteractionLog) -> dict[str, set[str]]:
    return {user: {x.item for x in h.interactions if x.click} for user, h in test.histories.items()}


def evaluate_rankings(
    rankings: Mapping[str, RankedList],
    relevant: Mapping[str, set[str]],
    n: int,
    categories: Mapping[str, int] | None = None,
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
    label: str = "dmr",
) -> EvalReport:
    """Macro-average every metric over users holding at least one relevant item."""
    precisions, recalls, aucs = [], [], []
    diversities: dict[int, list[float]] = {c: [] for c in sorted({n, *cutoffs})}
    for user, ranked in rankings.items():
        hits = relevant.get(user, set())
        if not hits:
            continue
        precisions.append(precision_at_n(ranked, hits, n))
        recalls.append(recall_at_n(ranked, hits, n))
        pos = [s for item, s in zip(ranked.items, ranked.scores) if item in hits]
        neg = [s for item, s in zip(ranked.items, ranked.scores) if item not in hits]
        aucs.append(auc(pos, neg))
        if categories:
            for cutoff, values in diversities.items():
                if cutoff >= 2 and len(ranked) >= 2:
                    values.append(diversity_at_n(ranked, categories, cutoff))

    precision, recall = _mean(precisions), _mean(recalls)
    diversity_at = {c: _mean(v) for c, v in diversities.items()}
    return EvalReport(
        precision=precision,
        recall=recall,
        f1=f1_at_n(precision, recall) if precisions else math.nan,
        auc=_mean(aucs),
        diversity=diversity_at[n],
        n=n,
        users_evaluated=len(precisions),
        diversity_at={c: diversity_at[c] for c in cutoffs},
        label=label,
    )


def rank_candidates(
    params: ModelParams,
    split: ChronoSplit,
    index: NeighborIndex,
    pools: Mapping[str, list[str]],
    future_cap: int = 100,
) -> dict[str, RankedList]:
    rankings = {}
    for user, pool in pools.items():
        pool = [item for item in pool if params.has_item(item)]
        if not pool:
            continue
        future = extract_future_sequence(user, index, split.train, future_cap)
        example = build_eval_example(user, split, future, params, pool)
        logits, _ = forward_candidates(
            example.history_pos,
            example.future_pos,
            example.history_neg,
            example.future_neg,
            example.candidates,
            example.query_times,
            params,
        )
        rankings[user] = RankedList.from_scores(user, pool, logits)
    return rankings


def evaluate(
    params: ModelParams,
    split: ChronoSplit,
    index: NeighborIndex,
    n: int = 50,
    pools: Mapping[str, list[str]] | None = None,
    candidate_pool: int = 100,
    seed: int = 42,
    future_cap: int = 100,
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
    categories: Mapping[str, int] | None = None,
    label: str = "dmr",
) -> EvalReport:
    if pools is None:
        pools = build_candidate_pools(split, params.item_ids, candidate_pool, rng_for(seed, "eval-pool"))
    if categories is None:
        categories = {**split.train.categories(), **split.test.categories()}
    rankings = rank_candidates(params, split, index, pools, future_cap)
    return evaluate_rankings(rankings, relevant_items(split.test), n, categories, cutoffs, label)


def assignment_purity(params: ModelParams, log: InteractionLog, truth: pd.DataFrame) -> float:
    """Share of clicked items whose argmax trend agrees with the majority planted trend of that slot."""
    labels = {
        (row.user, row.item, int(row.timestamp)): int(row.trend)
        for row in truth.itertuples(index=False)
    }
    agreeing = total = 0
    for user, history in log.histories.items():
        clicked = [x for x in history.interactions if x.click and params.has_item(x.item)]
        keyed = [labels.get((user, x.item, x.timestamp)) for x in clicked]
        rows = [x.item for x, planted in zip(clicked, keyed) if planted is not None]
        planted = [p for p in keyed if p is not None]
        if not rows:
            continue
        slots = np.argmax(assignment_weights(params.embed(rows), params), axis=1)
        for slot in np.unique(slots):
            members = [p for p, s in zip(planted, slots) if s == slot]
            agreeing += max(members.count(p) for p in set(members))
        total += len(rows)
    return agreeing / total if total else math.nan
