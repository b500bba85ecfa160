from __future__ import annotations

import numpy as np
import pytest

from dmr_rec.data import Interaction, InteractionLog, UserHistory
from dmr_rec.model import ModelParams, init_params
from dmr_rec.synthetic import PlantedWorld


@pytest.fixture
def write_rows(tmp_path):
    """Write raw CSV lines to a file and return its path."""

    def _write(lines: list[str], name: str = "log.csv") -> str:
        path = tmp_path / name
        path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def make_history():
    """History from (item, click) pairs at timestamps 10, 20, 30, ..."""

    def _make(user: str, clicks: list[tuple[str, bool]], start: int = 10, step: int = 10) -> UserHistory:
        rows = tuple(
            Interaction(timestamp=start + i * step, item=item, user=user, click=click)
            for i, (item, click) in enumerate(clicks)
        )
        return UserHistory(user=user, interactions=rows)

    return _make


@pytest.fixture
def make_log():
    """Log from {user: [(item, timestamp, click), ...]}."""

    def _make(rows: dict[str, list[tuple[str, int, bool]]], categories: dict[str, int] | None = None) -> InteractionLog:
        categories = categories or {}
        return InteractionLog.from_interactions(
            Interaction(timestamp=ts, item=item, user=user, click=click, category=categories.get(item))
            for user, entries in rows.items()
            for item, ts, click in entries
        )

    return _make


def random_log(rng: np.random.Generator, n_users: int, n_items: int, max_len: int = 8) -> InteractionLog:
    rows = []
    for u in range(n_users):
        length = int(rng.integers(2, max_len + 1))
        items = rng.choice(n_items, size=length, replace=False)
        stamps = np.sort(rng.choice(1000, size=length, replace=False))
        for item, ts in zip(items, stamps):
            rows.append(
                Interaction(timestamp=int(ts), item=f"i{item:02d}", user=f"u{u:02d}", click=bool(rng.random() < 0.5))
            )
    return InteractionLog.from_interactions(rows)


@pytest.fixture
def random_logs():
    return random_log


def micro_params(
    seed: int,
    dim: int = 4,
    trends: int = 2,
    n_items: int = 6,
    time_scale: float = 5.0,
    time_power: float = 1.0,
    neg_weight: float = 0.5,
) -> ModelParams:
    rng = np.random.default_rng(seed)
    params = init_params(
        [f"i{i}" for i in range(n_items)],
        dim=dim,
        trends=trends,
        rng=rng,
        time_scale=time_scale,
        time_power=time_power,
        neg_weight=neg_weight,
    )
    params.coattention[...] = rng.normal(0.0, 0.5, size=(dim, dim))
    params.fusion_projection[...] = rng.normal(0.0, 0.5, size=(2 * dim, dim))
    return params


@pytest.fixture
def make_params():
    return micro_params


@pytest.fixture
def tiny_world() -> PlantedWorld:
    return PlantedWorld(
        n_users=40,
        n_items=80,
        n_categories=4,
        trends_per_user=2,
        interactions_per_user=20,
        drift_prob=0.1,
        click_noise=0.1,
        click_rate=0.5,
        seed=7,
    )


@pytest.fixture
def world_inputs():
    """(split, index, params) for a planted world, ready for training or evaluation."""
    from dmr_rec.data import chrono_split
    from dmr_rec.network import build_neighbor_index
    from dmr_rec.synthetic import generate

    def _build(world: PlantedWorld, dim: int = 8, trends: int = 2, n_max: int = 5, seed: int = 0):
        log, _ = generate(world)
        split = chrono_split(log, 0.8)
        index = build_neighbor_index(split.train, k=1, g=50, tau=0.5, n_max=n_max)
        params = init_params(
            sorted(set(split.train.items) | set(split.test.items)),
            dim=dim,
            trends=trends,
            rng=np.random.default_rng(seed),
            time_scale=float(split.train.time_span()),
        )
        return split, index, params

    return _build
