from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from joblib import Parallel, delayed

from .data import InteractionLog, UserHistory
from .errors import DataError

INDEX_HEADER = "# dmr-neighbors v1"
SINGLE_COMMON_SHARE = 0.2


@dataclass(frozen=True)
class SimilarityScore:
    raw: float
    mapped: float
    common_items: int
    defined: bool = True

    @classmethod
    def undefined(cls, common_items: int) -> "SimilarityScore":
        return cls(raw=math.nan, mapped=math.nan, common_items=common_items, defined=False)

    @classmethod
    def from_raw(cls, raw: float, common_items: int) -> "SimilarityScore":
        return cls(raw=raw, mapped=(raw + 1.0) / 2.0, common_items=common_items)


@dataclass(frozen=True)
class NeighborIndex:
    neighbors: Mapping[str, tuple[tuple[str, SimilarityScore], ...]]
    k: int
    g: int
    tau: float
    n_max: int
    similarity: str = "pcc"

    def __contains__(self, user: str) -> bool:
        return user in self.neighbors

    def of(self, user: str) -> tuple[tuple[str, SimilarityScore], ...]:
        if user not in self.neighbors:
            raise DataError(f"user {user} is not in the neighbor index")
        return self.neighbors[user]


@dataclass(frozen=True)
class FutureEntry:
    item: str
    timestamp: int
    click: bool
    source: str


@dataclass(frozen=True)
class FutureSequence:
    user: str
    query_time: int
    entries: tuple[FutureEntry, ...]
    cap: int

    @property
    def items(self) -> list[tuple[str, int, bool]]:
        return [(e.item, e.timestamp, e.click) for e in self.entries]

    @property
    def sources(self) -> list[str]:
        return [e.source for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def pcc_from_levels(
    levels_i: Mapping[str, float],
    levels_j: Mapping[str, float],
    mean_i: float | None = None,
    mean_j: float | None = None,
) -> SimilarityScore:
    """Pearson correlation over the common items.

    Means default to the common-set means; pass per-user means to centre on
    each user's whole history instead.
    """
    common = sorted(set(levels_i) & set(levels_j))
    if not common:
        return SimilarityScore.undefined(0)
    a = np.array([levels_i[item] for item in common], dtype=float)
    b = np.array([levels_j[item] for item in common], dtype=float)
    da = a - (a.mean() if mean_i is None else mean_i)
    db = b - (b.mean() if mean_j is None else mean_j)
    denom = math.sqrt(float(da @ da)) * math.sqrt(float(db @ db))
    if denom == 0.0:
        return SimilarityScore.undefined(len(common))
    raw = float(da @ db) / denom
    return SimilarityScore.from_raw(min(1.0, max(-1.0, raw)), len(common))


def pcc_similarity(hist_i: UserHistory, hist_j: UserHistory) -> SimilarityScore:
    if not len(hist_i) or not len(hist_j):
        raise ValueError("pcc_similarity needs two nonempty histories")
    return pcc_from_levels(hist_i.levels(), hist_j.levels())


def global_pcc_similarity(hist_i: UserHistory, hist_j: UserHistory) -> SimilarityScore:
    levels_i, levels_j = hist_i.levels(), hist_j.levels()
    return pcc_from_levels(
        levels_i,
        levels_j,
        mean_i=float(np.mean(list(levels_i.values()))),
        mean_j=float(np.mean(list(levels_j.values()))),
    )


def overlap_similarity(hist_i: UserHistory, hist_j: UserHistory) -> SimilarityScore:
    items_i, items_j = hist_i.items(), hist_j.items()
    common = len(items_i & items_j)
    if not common:
        return SimilarityScore.undefined(0)
    mapped = common / math.sqrt(len(items_i) * len(items_j))
    return SimilarityScore(raw=2.0 * mapped - 1.0, mapped=mapped, common_items=common)


SIMILARITY_FUNCTIONS = {
    "pcc": pcc_similarity,
    "pcc-global": global_pcc_similarity,
    "overlap": overlap_similarity,
}


def query_items(history: UserHistory, k: int) -> list[str]:
    return [x.item for x in history.interactions[-k:]]


def query_time(history: UserHistory, k: int) -> int:
    """Timestamp of the earliest of the last k interactions."""
    return history.interactions[-min(k, len(history))].timestamp


def select_neighbors(
    ranked: list[tuple[str, SimilarityScore]], n_max: int
) -> list[tuple[str, SimilarityScore]]:
    """Top n_max of a ranked pool, keeping single-common-item entries to at most 20% of the list."""
    if n_max <= 0:
        return []
    singles = [entry for entry in ranked if entry[1].common_items == 1]
    multi = [entry for entry in ranked if entry[1].common_items != 1]
    singles_in_top = sum(1 for entry in ranked[:n_max] if entry[1].common_items == 1)
    q = min(singles_in_top, math.floor(SINGLE_COMMON_SHARE * n_max))
    while True:
        m = min(len(multi), n_max - q)
        if q <= math.floor(SINGLE_COMMON_SHARE * (m + q)):
            break
        q -= 1
    order = {entry[0]: rank for rank, entry in enumerate(ranked)}
    return sorted(singles[:q] + multi[:m], key=lambda entry: order[entry[0]])


def _neighbors_for_user(
    user: str,
    log: InteractionLog,
    item_users: Mapping[str, list[str]],
    k: int,
    g: int,
    tau: float,
    n_max: int,
    similarity: str,
) -> tuple[str, tuple[tuple[str, SimilarityScore], ...]]:
    history = log.histories[user]
    score_fn = SIMILARITY_FUNCTIONS[similarity]
    candidates: set[str] = set()
    for item in query_items(history, k):
        candidates.update(item_users.get(item, ()))
    candidates.discard(user)

    pool: list[tuple[str, SimilarityScore]] = []
    for other in candidates:
        score = score_fn(history, log.histories[other])
        if score.defined and score.mapped > tau:
            pool.append((other, score))
    pool.sort(key=lambda entry: (-entry[1].mapped, entry[0]))
    return user, tuple(select_neighbors(pool[:g], n_max))


def build_neighbor_index(
    log: InteractionLog,
    k: int = 1,
    g: int = 200,
    tau: float = 0.5,
    n_max: int = 20,
    similarity: str = "pcc",
    n_jobs: int = 1,
) -> NeighborIndex:
    if not log.histories:
        raise DataError("cannot build a neighbor index from an empty log")
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 <= tau < 1.0:
        raise ValueError("tau must be in [0, 1)")
    if not g >= n_max >= 0:
        raise ValueError("require g >= n_max >= 0")
    if similarity not in SIMILARITY_FUNCTIONS:
        raise ValueError(f"unknown similarity {similarity!r}")

    item_users: dict[str, list[str]] = defaultdict(list)
    for user, history in log.histories.items():
        for item in sorted(history.items()):
            item_users[item].append(user)

    rows = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_neighbors_for_user)(user, log, item_users, k, g, tau, n_max, similarity)
        for user in log.histories
    )
    return NeighborIndex(neighbors=dict(rows), k=k, g=g, tau=tau, n_max=n_max, similarity=similarity)


def extract_future_sequence(
    user: str, index: NeighborIndex, log: InteractionLog, cap: int = 100
) -> FutureSequence:
    neighbors = index.of(user)
    if user not in log.histories:
        raise DataError(f"user {user} has no history in the log")
    t_query = query_time(log.histories[user], index.k)

    tagged: list[tuple[int, int, int, FutureEntry]] = []
    for rank, (neighbor, _) in enumerate(neighbors):
        tail = [x for x in log.histories[neighbor].interactions if x.timestamp >= t_query][:cap]
        for position, x in enumerate(tail):
            entry = FutureEntry(item=x.item, timestamp=x.timestamp, click=x.click, source=neighbor)
            tagged.append((x.timestamp, rank, position, entry))
    tagged.sort(key=lambda row: row[:3])
    return FutureSequence(user=user, query_time=t_query, entries=tuple(row[3] for row in tagged), cap=cap)


def save_neighbor_index(index: NeighborIndex, path: str) -> str:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        INDEX_HEADER,
        f"k={index.k} g={index.g} tau={index.tau!r} n_max={index.n_max} "
        f"similarity={index.similarity} users={len(index.neighbors)}",
    ]
    for user, entries in index.neighbors.items():
        if not entries:
            lines.append(user)
        for neighbor, score in entries:
            lines.append(f"{user} {neighbor} {score.mapped!r} {score.common_items}")
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(out)


def load_neighbor_index(path: str) -> NeighborIndex:
    index_path = Path(path)
    if not index_path.exists():
        raise FileNotFoundError(f"Neighbor index not found: {path}")
    lines = index_path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != INDEX_HEADER:
        raise DataError(f"{path}: not a neighbor index (expected header {INDEX_HEADER!r})")
    try:
        params = dict(part.split("=", 1) for part in lines[1].split())
        k, g, n_max, users = (int(params[key]) for key in ("k", "g", "n_max", "users"))
        tau = float(params["tau"])
        similarity = params["similarity"]
    except (IndexError, KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed parameter line") from exc

    neighbors: dict[str, list[tuple[str, SimilarityScore]]] = {}
    for line_no, line in enumerate(lines[2:], start=3):
        parts = line.split()
        if len(parts) == 1:
            neighbors.setdefault(parts[0], [])
            continue
        if len(parts) != 4:
            raise DataError(f"{path}: line {line_no}: expected 'user neighbor mapped_sim common_items'")
        mapped = float(parts[2])
        score = SimilarityScore(raw=2.0 * mapped - 1.0, mapped=mapped, common_items=int(parts[3]))
        neighbors.setdefault(parts[0], []).append((parts[1], score))
    if len(neighbors) != users:
        raise DataError(f"{path}: header declares {users} users, found {len(neighbors)}")
    return NeighborIndex(
        neighbors={user: tuple(entries) for user, entries in neighbors.items()},
        k=k,
        g=g,
        tau=tau,
        n_max=n_max,
        similarity=similarity,
    )
