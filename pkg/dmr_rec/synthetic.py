from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .config import RunConfig, rng_for
from .data import ChronoSplit, Interaction, InteractionLog
from .errors import ConfigError
from .evaluation import RankedList

TRUTH_COLUMNS = ["user", "item", "timestamp", "trend"]
START_WINDOW = 7 * 86400
GAP_RANGE = (60, 7200)


def default_affinity(n_categories: int) -> np.ndarray:
    """One planted trend per category."""
    return np.eye(n_categories)


@dataclass(frozen=True)
class PlantedWorld:
    n_users: int = 500
    n_items: int = 2000
    n_categories: int = 8
    trends_per_user: int = 2
    interactions_per_user: int = 40
    drift_prob: float = 0.1
    click_noise: float = 0.1
    click_rate: float = 0.5
    trend_skew: float = 1.0
    seed: int = 42
    affinity: np.ndarray = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.affinity is None:
            object.__setattr__(self, "affinity", default_affinity(self.n_categories))
        counts = (self.n_users, self.n_items, self.n_categories, self.trends_per_user, self.interactions_per_user)
        if min(counts) < 1:
            raise ValueError("world counts must be >= 1")
        for name in ("drift_prob", "click_noise", "click_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.affinity.ndim != 2 or self.affinity.shape[1] != self.n_categories:
            raise ValueError(f"affinity must have {self.n_categories} columns")
        if np.any(self.affinity < 0) or not np.allclose(self.affinity.sum(axis=1), 1.0):
            raise ValueError("affinity rows must be nonnegative and sum to 1")
        if self.trends_per_user > self.trend_types:
            raise ValueError(f"trends_per_user {self.trends_per_user} exceeds {self.trend_types} planted trends")
        if self.n_items < self.n_categories:
            raise ValueError("need at least one item per category")

    @classmethod
    def from_config(cls, config: RunConfig) -> "PlantedWorld":
        try:
            return cls(
                n_users=config.n_users,
                n_items=config.n_items,
                n_categories=config.n_categories,
                trends_per_user=config.trends_per_user,
                interactions_per_user=config.interactions_per_user,
                drift_prob=config.drift_prob,
                click_noise=config.click_noise,
                click_rate=config.click_rate,
                trend_skew=config.trend_skew,
                seed=config.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def trend_types(self) -> int:
        return self.affinity.shape[0]

    def item_ids(self) -> list[str]:
        width = len(str(self.n_items - 1))
        return [f"i{i:0{width}d}" for i in range(self.n_items)]

    def user_ids(self) -> list[str]:
        width = len(str(self.n_users - 1))
        return [f"u{u:0{width}d}" for u in range(self.n_users)]

    def item_categories(self) -> np.ndarray:
        # Balanced categories, shuffled so ids carry no category signal.
        return rng_for(self.seed, "generator").permutation(np.arange(self.n_items) % self.n_categories)

    def trend_popularity(self) -> np.ndarray:
        weights = 1.0 / np.arange(1, self.trend_types + 1) ** self.trend_skew
        return weights / weights.sum()


def _user_rows(
    world: PlantedWorld,
    user: str,
    items: list[str],
    categories: np.ndarray,
    by_category: list[np.ndarray],
) -> list[tuple[Interaction, int]]:
    rng = rng_for(world.seed, f"generator:{user}")
    trends = rng.choice(world.trend_types, size=world.trends_per_user, replace=False, p=world.trend_popularity())
    active = int(rng.integers(world.trends_per_user))
    timestamp = int(rng.integers(0, START_WINDOW))

    rows = []
    for step in range(world.interactions_per_user):
        if step and world.trends_per_user > 1 and rng.random() < world.drift_prob:
            active = (active + int(rng.integers(1, world.trends_per_user))) % world.trends_per_user
        trend = int(trends[active])
        click = bool(rng.random() < world.click_rate)
        if click and rng.random() >= world.click_noise:
            category = int(rng.choice(world.n_categories, p=world.affinity[trend]))
            index = int(rng.choice(by_category[category]))
        else:
            index = int(rng.integers(world.n_items))
        if step:
            timestamp += int(rng.integers(GAP_RANGE[0], GAP_RANGE[1] + 1))
        x = Interaction(
            timestamp=timestamp, item=items[index], user=user, click=click, category=int(categories[index])
        )
        rows.append((x, trend))
    return rows


def generate(world: PlantedWorld) -> tuple[InteractionLog, pd.DataFrame]:
    """Seed-determined log plus the planted trend active at every interaction."""
    items = world.item_ids()
    categories = world.item_categories()
    by_category = [np.flatnonzero(categories == c) for c in range(world.n_categories)]

    interactions: list[Interaction] = []
    truth: list[tuple[str, str, int, int]] = []
    for user in world.user_ids():
        for x, trend in _user_rows(world, user, items, categories, by_category):
            interactions.append(x)
            truth.append((x.user, x.item, x.timestamp, trend))
    return InteractionLog.from_interactions(interactions), pd.DataFrame(truth, columns=TRUTH_COLUMNS)


def click_counts(log: InteractionLog) -> Counter:
    return Counter(x.item for x in log.interactions() if x.click)


def popularity_baseline(
    split: ChronoSplit, candidates: Mapping[str, Sequence[str]] | None = None
) -> dict[str, RankedList]:
    """Rank each test user's candidates by train click count, ties by item id."""
    counts = click_counts(split.train)
    if candidates is None:
        everything = split.train.items
        candidates = {user: everything for user in split.test.histories}
    return {
        user: RankedList.from_scores(user, list(pool), [float(counts.get(item, 0)) for item in pool])
        for user, pool in candidates.items()
    }
