from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ChronoSplit, Interaction, InteractionLog
from .model import ModelParams, SequenceIds
from .network import FutureSequence, NeighborIndex, extract_future_sequence


@dataclass(frozen=True)
class UserExample:
    user: str
    origin: int
    history_pos: SequenceIds
    history_neg: SequenceIds
    future_pos: SequenceIds
    future_neg: SequenceIds
    candidates: np.ndarray
    query_times: np.ndarray
    labels: np.ndarray
    max_timestamp: dict[str, int]

    def __len__(self) -> int:
        return len(self.candidates)


def _sequence(params: ModelParams, rows: list[tuple[str, int]], origin: int) -> SequenceIds:
    rows = [(item, ts) for item, ts in rows if params.has_item(item)]
    if not rows:
        return SequenceIds.empty()
    items = params.index_of([item for item, _ in rows])
    times = np.array([float(ts - origin) for _, ts in rows])
    return SequenceIds(items, times)


def _sequences(
    params: ModelParams, history: tuple[Interaction, ...], future: FutureSequence, origin: int
) -> tuple[SequenceIds, SequenceIds, SequenceIds, SequenceIds]:
    return (
        _sequence(params, [(x.item, x.timestamp) for x in history if x.click], origin),
        _sequence(params, [(x.item, x.timestamp) for x in history if not x.click], origin),
        _sequence(params, [(e.item, e.timestamp) for e in future.entries if e.click], origin),
        _sequence(params, [(e.item, e.timestamp) for e in future.entries if not e.click], origin),
    )


def _used_timestamps(user: str, history: tuple[Interaction, ...], future: FutureSequence) -> dict[str, int]:
    latest = {user: max((x.timestamp for x in history), default=-1)}
    for entry in future.entries:
        latest[entry.source] = max(latest.get(entry.source, -1), entry.timestamp)
    return latest


def sample_unobserved(
    rng: np.random.Generator, n_items: int, excluded: set[int], count: int
) -> np.ndarray:
    """Uniform draws (with replacement) from item indices not in `excluded`."""
    if count <= 0 or len(excluded) >= n_items:
        return np.zeros(0, dtype=np.int64)
    out: list[int] = []
    while len(out) < count:
        draws = rng.integers(0, n_items, size=2 * (count - len(out)) + 4)
        out.extend(int(i) for i in draws if int(i) not in excluded)
    return np.array(out[:count], dtype=np.int64)


def build_training_example(
    user: str,
    train: InteractionLog,
    future: FutureSequence,
    params: ModelParams,
    neg_ratio: int,
    rng: np.random.Generator,
) -> UserExample:
    """Score every train interaction of the user plus `neg_ratio` unclicked items per positive."""
    history = train.histories[user].interactions
    origin = future.query_time
    history_pos, history_neg, future_pos, future_neg = _sequences(params, history, future, origin)

    observed = [x for x in history if params.has_item(x.item)]
    candidates = [params.index_of([x.item for x in observed])]
    query_times = [np.array([float(x.timestamp - origin) for x in observed])]
    labels = [np.array([1.0 if x.click else 0.0 for x in observed])]

    clicked = set(params.index_of([x.item for x in observed if x.click]).tolist())
    for x in observed:
        if not x.click:
            continue
        sampled = sample_unobserved(rng, len(params.item_ids), clicked, neg_ratio)
        candidates.append(sampled)
        query_times.append(np.full(len(sampled), float(x.timestamp - origin)))
        labels.append(np.zeros(len(sampled)))

    return UserExample(
        user=user,
        origin=origin,
        history_pos=history_pos,
        history_neg=history_neg,
        future_pos=future_pos,
        future_neg=future_neg,
        candidates=np.concatenate(candidates).astype(np.int64),
        query_times=np.concatenate(query_times),
        labels=np.concatenate(labels),
        max_timestamp=_used_timestamps(user, history, future),
    )


def build_eval_example(
    user: str,
    split: ChronoSplit,
    future: FutureSequence,
    params: ModelParams,
    candidates: list[str],
) -> UserExample:
    """Inputs from the train period only; every candidate is scored at the user's split boundary."""
    history = split.train.histories[user].interactions
    origin = future.query_time
    history_pos, history_neg, future_pos, future_neg = _sequences(params, history, future, origin)
    clicked = {x.item for x in split.test.histories[user].interactions if x.click}
    boundary = float(split.boundary(user) - origin)
    return UserExample(
        user=user,
        origin=origin,
        history_pos=history_pos,
        history_neg=history_neg,
        future_pos=future_pos,
        future_neg=future_neg,
        candidates=params.index_of(candidates),
        query_times=np.full(len(candidates), boundary),
        labels=np.array([1.0 if item in clicked else 0.0 for item in candidates]),
        max_timestamp=_used_timestamps(user, history, future),
    )


def build_query_example(
    user: str, train: InteractionLog, index: NeighborIndex, params: ModelParams, future_cap: int, candidates: list[str]
) -> UserExample:
    """Example for serving: candidates scored at the user's query time."""
    history = train.histories[user].interactions
    future = extract_future_sequence(user, index, train, future_cap)
    origin = future.query_time
    history_pos, history_neg, future_pos, future_neg = _sequences(params, history, future, origin)
    return UserExample(
        user=user,
        origin=origin,
        history_pos=history_pos,
        history_neg=history_neg,
        future_pos=future_pos,
        future_neg=future_neg,
        candidates=params.index_of(candidates),
        query_times=np.zeros(len(candidates)),
        labels=np.zeros(len(candidates)),
        max_timestamp=_used_timestamps(user, history, future),
    )
