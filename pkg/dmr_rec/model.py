from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import NumericError

EPS = 1e-8
TRAINABLE = ("item_embeddings", "trend_init", "coattention", "fusion_projection")


@dataclass(eq=False)
class ModelParams:
    item_embeddings: np.ndarray
    trend_init: np.ndarray
    coattention: np.ndarray
    fusion_projection: np.ndarray
    time_scale: float
    time_power: float
    neg_weight: float
    item_ids: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        v, d = self.item_embeddings.shape
        s = self.trend_init.shape[0]
        if s < 1 or d < 1:
            raise ValueError("trend count and embedding dimension must be >= 1")
        if len(self.item_ids) != v:
            raise ValueError(f"{len(self.item_ids)} item ids for {v} embedding rows")
        expected = {"trend_init": (s, d), "coattention": (d, d), "fusion_projection": (2 * d, d)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        self._index = {item: i for i, item in enumerate(self.item_ids)}

    @property
    def dim(self) -> int:
        return self.item_embeddings.shape[1]

    @property
    def trends(self) -> int:
        return self.trend_init.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TRAINABLE}

    def index_of(self, items: list[str]) -> np.ndarray:
        return np.array([self._index[item] for item in items], dtype=np.int64)

    def has_item(self, item: str) -> bool:
        return item in self._index

    def embed(self, items: list[str]) -> np.ndarray:
        return self.item_embeddings[self.index_of(items)].reshape(len(items), self.dim)

    def copy(self) -> "ModelParams":
        return ModelParams(
            **{name: array.copy() for name, array in self.tensors().items()},
            time_scale=self.time_scale,
            time_power=self.time_power,
            neg_weight=self.neg_weight,
            item_ids=self.item_ids,
        )

    def squared_norm(self) -> float:
        return float(sum(np.sum(array * array) for array in self.tensors().values()))


def init_params(
    item_ids: list[str],
    dim: int,
    trends: int,
    rng: np.random.Generator,
    time_scale: float = 1.0,
    time_power: float = 1.0,
    neg_weight: float = 0.5,
) -> ModelParams:
    scale = 1.0 / math.sqrt(dim)
    return ModelParams(
        item_embeddings=rng.normal(0.0, scale, size=(len(item_ids), dim)),
        trend_init=rng.uniform(-scale, scale, size=(trends, dim)),
        coattention=np.eye(dim),
        fusion_projection=0.5 * np.vstack([np.eye(dim), np.eye(dim)]),
        time_scale=float(time_scale),
        time_power=float(time_power),
        neg_weight=float(neg_weight),
        item_ids=tuple(item_ids),
    )


class EmbeddedSequence(NamedTuple):
    embeddings: np.ndarray  # n x d
    times: np.ndarray  # n

    @classmethod
    def empty(cls, dim: int) -> "EmbeddedSequence":
        return cls(np.zeros((0, dim)), np.zeros(0))


@dataclass(frozen=True)
class TrendGroup:
    """One half of a trend memory: s rows and their mean interaction times (NaN = unassigned)."""

    rows: np.ndarray
    times: np.ndarray

    @property
    def assigned(self) -> np.ndarray:
        return ~np.isnan(self.times)


@dataclass(frozen=True)
class TrendMemory:
    history: TrendGroup
    future: TrendGroup


@dataclass(frozen=True)
class UserRepresentation:
    history_vec: np.ndarray
    future_vec: np.ndarray
    fused: np.ndarray


def check_finite(name: str, array: np.ndarray) -> None:
    if not np.all(np.isfinite(array)):
        raise NumericError(name)


def sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    return np.exp(-np.logaddexp(0.0, -np.asarray(x, dtype=float)))


def _softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    weights = np.exp(shifted)
    return weights / weights.sum(axis=axis, keepdims=True)


def _time_softmax(logits: np.ndarray, scaled: np.ndarray) -> np.ndarray:
    """Row softmax that falls back to the limit distribution when a whole row underflows.

    The limit puts all mass on the smallest scaled gap, split evenly on ties.
    """
    weights = np.empty_like(logits)
    live = np.isfinite(logits).any(axis=1)
    if live.any():
        weights[live] = _softmax(logits[live], axis=1)
    if not live.all():
        gaps = scaled[~live]
        nearest = (gaps == gaps.min(axis=1, keepdims=True)).astype(float)
        weights[~live] = nearest / nearest.sum(axis=1, keepdims=True)
    return weights


def candidate_softmax(logits: np.ndarray) -> np.ndarray:
    """Ranking diagnostic: softmax over a candidate set's logits."""
    return _softmax(np.asarray(logits, dtype=float))


# ---------------------------------------------------------------------------
# Multi-trend routing


@dataclass(frozen=True)
class RouteCache:
    embeddings: np.ndarray
    times: np.ndarray
    keys: np.ndarray
    weights: np.ndarray
    totals: np.ndarray
    means: np.ndarray
    group: TrendGroup


def assignment_weights(embeddings: np.ndarray, params: ModelParams) -> np.ndarray:
    """Stage 1: softmax over trends of x^T C t_j / sqrt(d), one row per item."""
    d = params.dim
    if embeddings.ndim != 2 or embeddings.shape[1] != d:
        raise ValueError(f"embeddings have shape {embeddings.shape}, expected (n, {d})")
    keys = params.coattention @ params.trend_init.T
    return _softmax(embeddings @ keys / math.sqrt(d), axis=1)


def item_level_attention(embeddings: np.ndarray, weights: np.ndarray) -> np.ndarray:
    total = float(np.sum(weights))
    return (weights @ embeddings) / max(total, EPS)


def _route_forward(embeddings: np.ndarray, times: np.ndarray, params: ModelParams) -> RouteCache:
    weights = assignment_weights(embeddings, params)
    totals = weights.sum(axis=0)
    means = np.stack(
        [item_level_attention(embeddings, weights[:, j]) for j in range(params.trends)]
    ).reshape(params.trends, params.dim)
    assigned = totals >= EPS
    trend_times = np.full(params.trends, np.nan)
    trend_times[assigned] = (weights[:, assigned].T @ times) / totals[assigned]
    group = TrendGroup(rows=params.trend_init + means, times=trend_times)
    return RouteCache(
        embeddings=embeddings,
        times=times,
        keys=params.coattention @ params.trend_init.T,
        weights=weights,
        totals=totals,
        means=means,
        group=group,
    )


def route_trends(embeddings: np.ndarray, times: np.ndarray, params: ModelParams) -> TrendGroup:
    return _route_forward(np.asarray(embeddings, dtype=float), np.asarray(times, dtype=float), params).group


def _route_backward(
    d_rows: np.ndarray,
    d_times: np.ndarray,
    cache: RouteCache,
    params: ModelParams,
    grads: dict[str, np.ndarray],
) -> np.ndarray:
    x, w, totals = cache.embeddings, cache.weights, cache.totals
    d = params.dim
    grads["trend_init"] += d_rows

    denom = np.maximum(totals, EPS)
    d_sums = d_rows / denom[:, None]
    d_denom = -np.sum(d_rows * cache.means, axis=1) / denom
    d_totals = np.where(totals > EPS, d_denom, 0.0)
    d_w = x @ d_sums.T + d_totals[None, :]

    assigned = cache.group.assigned
    if assigned.any():
        coef = np.zeros(params.trends)
        coef[assigned] = d_times[assigned] / totals[assigned]
        centre = np.where(assigned, cache.group.times, 0.0)
        d_w += (cache.times[:, None] - centre[None, :]) * coef[None, :]

    d_x = w @ d_sums
    d_logits = w * (d_w - np.sum(w * d_w, axis=1, keepdims=True))
    d_x += d_logits @ cache.keys.T / math.sqrt(d)
    d_keys = x.T @ d_logits / math.sqrt(d)
    grads["coattention"] += d_keys @ params.trend_init
    grads["trend_init"] += d_keys.T @ params.coattention
    return d_x


# ---------------------------------------------------------------------------
# Trend-level time attention


@dataclass(frozen=True)
class AttendCache:
    group: TrendGroup
    weights: np.ndarray
    delta: np.ndarray
    scaled: np.ndarray


def _attend_forward(group: TrendGroup, query_times: np.ndarray, params: ModelParams) -> tuple[np.ndarray, AttendCache]:
    if params.time_scale <= 0:
        raise ValueError(f"time_scale must be > 0, got {params.time_scale}")
    assigned = group.assigned
    weights = np.zeros((len(query_times), params.trends))
    delta = query_times[:, None] - group.times[None, assigned]
    scaled = np.abs(delta) / params.time_scale
    if assigned.any():
        with np.errstate(over="ignore"):
            logits = -(scaled ** params.time_power)
        weights[:, assigned] = _time_softmax(logits, scaled)
    else:
        # no trend carries a time: plain sumpooling of the rows
        weights[:] = 1.0
    return weights @ group.rows, AttendCache(group=group, weights=weights, delta=delta, scaled=scaled)


def trend_time_attention(group: TrendGroup, query_time: float, params: ModelParams) -> np.ndarray:
    out, _ = _attend_forward(group, np.array([float(query_time)]), params)
    return out[0]


def time_attention_weights(group: TrendGroup, query_time: float, params: ModelParams) -> np.ndarray:
    _, cache = _attend_forward(group, np.array([float(query_time)]), params)
    return cache.weights[0]


def _attend_backward(d_out: np.ndarray, cache: AttendCache, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    group, weights = cache.group, cache.weights
    d_rows = weights.T @ d_out
    d_times = np.zeros(params.trends)
    assigned = group.assigned
    if assigned.any():
        active = weights[:, assigned]
        d_active = (d_out @ group.rows.T)[:, assigned]
        d_logits = active * (d_active - np.sum(active * d_active, axis=1, keepdims=True))
        rho, tau = params.time_power, params.time_scale
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            slope = rho / tau * cache.scaled ** (rho - 1.0) * np.sign(cache.delta)
        # saturated entries carry no gradient
        slope = np.where((cache.scaled > 0) & np.isfinite(slope), slope, 0.0)
        d_times[assigned] = np.sum(d_logits * slope, axis=0)
    return d_rows, d_times


# ---------------------------------------------------------------------------
# User representation and scoring


def build_user_representation(
    history: EmbeddedSequence,
    future: EmbeddedSequence,
    query_time: float,
    params: ModelParams,
) -> UserRepresentation:
    if len(history.times) == 0 and len(future.times) == 0:
        raise ValueError("history and future sequences are both empty")
    history_vec = trend_time_attention(route_trends(history.embeddings, history.times, params), query_time, params)
    future_vec = trend_time_attention(route_trends(future.embeddings, future.times, params), query_time, params)
    fused = np.concatenate([history_vec, future_vec]) @ params.fusion_projection
    return UserRepresentation(history_vec=history_vec, future_vec=future_vec, fused=fused)


def build_trend_memory(history: EmbeddedSequence, future: EmbeddedSequence, params: ModelParams) -> TrendMemory:
    return TrendMemory(
        history=route_trends(history.embeddings, history.times, params),
        future=route_trends(future.embeddings, future.times, params),
    )


def score_item(
    user_rep: UserRepresentation,
    item: np.ndarray,
    neg_rep: UserRepresentation | None,
    params: ModelParams,
) -> float:
    logit = float(user_rep.fused @ item)
    if neg_rep is not None:
        logit -= params.neg_weight * float(neg_rep.fused @ item)
    return logit


class SequenceIds(NamedTuple):
    items: np.ndarray  # int item indices
    times: np.ndarray  # float times relative to the user's query time

    @classmethod
    def empty(cls) -> "SequenceIds":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0))


@dataclass(frozen=True)
class FuseCache:
    history: tuple[RouteCache, AttendCache]
    future: tuple[RouteCache, AttendCache]
    joined: np.ndarray
    fused: np.ndarray
    history_items: np.ndarray
    future_items: np.ndarray


@dataclass(frozen=True)
class CandidateCache:
    positive: FuseCache
    negative: FuseCache | None
    candidates: np.ndarray
    candidate_vecs: np.ndarray


def _fuse_forward(history: SequenceIds, future: SequenceIds, query_times: np.ndarray, params: ModelParams) -> FuseCache:
    parts = []
    for seq in (history, future):
        route = _route_forward(params.item_embeddings[seq.items], seq.times, params)
        vec, attend = _attend_forward(route.group, query_times, params)
        parts.append((route, attend, vec))
    joined = np.concatenate([parts[0][2], parts[1][2]], axis=1)
    fused = joined @ params.fusion_projection
    return FuseCache(
        history=parts[0][:2],
        future=parts[1][:2],
        joined=joined,
        fused=fused,
        history_items=history.items,
        future_items=future.items,
    )


def _fuse_backward(d_fused: np.ndarray, cache: FuseCache, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
    d = params.dim
    grads["fusion_projection"] += cache.joined.T @ d_fused
    d_joined = d_fused @ params.fusion_projection.T
    for (route, attend), items, d_vec in (
        (cache.history, cache.history_items, d_joined[:, :d]),
        (cache.future, cache.future_items, d_joined[:, d:]),
    ):
        d_rows, d_times = _attend_backward(d_vec, attend, params)
        d_x = _route_backward(d_rows, d_times, route, params, grads)
        np.add.at(grads["item_embeddings"], items, d_x)


def forward_candidates(
    history_pos: SequenceIds,
    future_pos: SequenceIds,
    history_neg: SequenceIds,
    future_neg: SequenceIds,
    candidates: np.ndarray,
    query_times: np.ndarray,
    params: ModelParams,
) -> tuple[np.ndarray, CandidateCache]:
    """Logits for a user's candidates; each candidate attends to trends at its own query time."""
    positive = _fuse_forward(history_pos, future_pos, query_times, params)
    check_finite("fused", positive.fused)
    vecs = params.item_embeddings[candidates]
    logits = np.sum(positive.fused * vecs, axis=1)
    negative = None
    has_negatives = len(history_neg.items) + len(future_neg.items) > 0
    if has_negatives and params.neg_weight != 0.0:
        negative = _fuse_forward(history_neg, future_neg, query_times, params)
        check_finite("fused_neg", negative.fused)
        logits = logits - params.neg_weight * np.sum(negative.fused * vecs, axis=1)
    check_finite("logits", logits)
    return logits, CandidateCache(positive=positive, negative=negative, candidates=candidates, candidate_vecs=vecs)


def backward_candidates(
    d_logits: np.ndarray, cache: CandidateCache, params: ModelParams, grads: dict[str, np.ndarray]
) -> None:
    g = d_logits[:, None]
    user_vecs = cache.positive.fused
    _fuse_backward(g * cache.candidate_vecs, cache.positive, params, grads)
    if cache.negative is not None:
        user_vecs = user_vecs - params.neg_weight * cache.negative.fused
        _fuse_backward(-params.neg_weight * g * cache.candidate_vecs, cache.negative, params, grads)
    np.add.at(grads["item_embeddings"], cache.candidates, g * user_vecs)
