from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import pandas as pd

from .errors import DataError

LOG_COLUMNS = ["user", "item", "timestamp", "click", "category"]
_TRUE = {"1", "true", "yes", "y"}
_FALSE = {"0", "false", "no", "n"}


@dataclass(frozen=True, order=True)
class Interaction:
    # Field order doubles as the canonical sort key within a user: (timestamp, item).
    timestamp: int
    item: str
    user: str
    click: bool
    category: int | None = None


@dataclass(frozen=True)
class UserHistory:
    user: str
    interactions: tuple[Interaction, ...]

    @property
    def positives(self) -> tuple[int, ...]:
        return tuple(i for i, x in enumerate(self.interactions) if x.click)

    @property
    def negatives(self) -> tuple[int, ...]:
        return tuple(i for i, x in enumerate(self.interactions) if not x.click)

    def items(self) -> set[str]:
        return {x.item for x in self.interactions}

    def levels(self) -> dict[str, float]:
        """Click level per item; repeated interactions with one item are averaged."""
        totals: dict[str, list[float]] = defaultdict(list)
        for x in self.interactions:
            totals[x.item].append(1.0 if x.click else 0.0)
        return {item: sum(vals) / len(vals) for item, vals in totals.items()}

    def __len__(self) -> int:
        return len(self.interactions)


@dataclass(frozen=True)
class InteractionLog:
    histories: Mapping[str, UserHistory]

    @classmethod
    def from_interactions(cls, interactions: Iterable[Interaction]) -> "InteractionLog":
        per_user: dict[str, list[Interaction]] = defaultdict(list)
        for x in interactions:
            per_user[x.user].append(x)
        histories = {
            user: UserHistory(user=user, interactions=tuple(sorted(rows)))
            for user, rows in sorted(per_user.items())
        }
        return cls(histories=histories)

    @property
    def users(self) -> list[str]:
        return list(self.histories)

    @property
    def items(self) -> list[str]:
        return sorted({x.item for x in self.interactions()})

    def interactions(self) -> Iterator[Interaction]:
        for history in self.histories.values():
            yield from history.interactions

    def __len__(self) -> int:
        return sum(len(h) for h in self.histories.values())

    def categories(self) -> dict[str, int]:
        return {x.item: x.category for x in self.interactions() if x.category is not None}

    def time_span(self) -> int:
        stamps = [x.timestamp for x in self.interactions()]
        return max(stamps) - min(stamps) if stamps else 0

    def counts(self) -> dict[str, int]:
        return {"users": len(self.histories), "items": len(self.items), "interactions": len(self)}

    def frame(self) -> pd.DataFrame:
        rows = [
            (x.user, x.item, x.timestamp, int(x.click), x.category)
            for x in self.interactions()
        ]
        frame = pd.DataFrame(rows, columns=LOG_COLUMNS)
        frame["category"] = frame["category"].astype("Int64")
        return frame


@dataclass(frozen=True)
class ChronoSplit:
    train: InteractionLog
    test: InteractionLog
    split_fraction: float
    dropped_users: tuple[str, ...] = ()

    def boundary(self, user: str) -> int:
        """Earliest test timestamp of a user; no train interaction of theirs is later."""
        return self.test.histories[user].interactions[0].timestamp


def _parse_click(raw: str) -> bool:
    value = raw.strip().lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise ValueError(f"click must be 0/1 or true/false, got {raw!r}")


def _parse_row(row: list[str]) -> Interaction:
    if len(row) not in (4, 5):
        raise ValueError(f"expected 4 or 5 fields, got {len(row)}")
    user, item = row[0].strip(), row[1].strip()
    if not user or not item:
        raise ValueError("user and item must be nonempty")
    if any(ch.isspace() for ch in user + item):
        raise ValueError(f"user and item ids must not contain whitespace, got {user!r}, {item!r}")
    try:
        timestamp = int(row[2].strip())
    except ValueError as exc:
        raise ValueError(f"timestamp must be an integer, got {row[2]!r}") from exc
    if timestamp < 0:
        raise ValueError(f"negative timestamp {timestamp}")
    category = None
    if len(row) == 5 and row[4].strip():
        try:
            category = int(row[4].strip())
        except ValueError as exc:
            raise ValueError(f"category must be an integer, got {row[4]!r}") from exc
    return Interaction(timestamp=timestamp, item=item, user=user, click=_parse_click(row[3]), category=category)


def _looks_like_header(row: list[str]) -> bool:
    if len(row) < 4:
        return False
    try:
        int(row[2].strip())
        return False
    except ValueError:
        return row[0].strip().lower().startswith("user")


def scan_log(path: str, delimiter: str = ",") -> tuple[list[Interaction], list[tuple[int, str]]]:
    """Parse every record, collecting violations as (line number, message) instead of raising."""
    log_path = Path(path)
    if not log_path.exists():
        raise FileNotFoundError(f"Interaction log not found: {path}")

    records: list[Interaction] = []
    violations: list[tuple[int, str]] = []
    seen: dict[tuple[str, str, int], int] = {}
    with log_path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle, delimiter=delimiter)
        for line_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if line_no == 1 and _looks_like_header(row):
                continue
            try:
                record = _parse_row(row)
            except ValueError as exc:
                violations.append((line_no, str(exc)))
                continue
            key = (record.user, record.item, record.timestamp)
            if key in seen:
                violations.append(
                    (line_no, f"duplicate (user, item, timestamp) {key}, first seen on line {seen[key]}")
                )
                continue
            seen[key] = line_no
            records.append(record)
    return records, violations


def ingest_log(path: str, delimiter: str = ",") -> InteractionLog:
    records, violations = scan_log(path, delimiter=delimiter)
    if violations:
        line_no, message = violations[0]
        raise DataError(f"{path}: line {line_no}: {message}")
    return InteractionLog.from_interactions(records)


def write_log(log: InteractionLog, path: str) -> str:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    log.frame().to_csv(out, index=False, lineterminator="\n")
    return str(out)


def _train_size(n: int, fraction: float) -> int:
    # round() strips float noise such as 0.7 * 10 == 7.000000000000001
    return math.ceil(round(fraction * n, 9))


def chrono_split(log: InteractionLog, fraction: float) -> ChronoSplit:
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"split fraction must be in (0, 1), got {fraction}")

    train_rows: list[Interaction] = []
    test_rows: list[Interaction] = []
    dropped: list[str] = []
    for user, history in log.histories.items():
        n = len(history)
        cut = _train_size(n, fraction)
        if n < 2 or cut >= n:
            dropped.append(user)
            continue
        train_rows.extend(history.interactions[:cut])
        test_rows.extend(history.interactions[cut:])

    return ChronoSplit(
        train=InteractionLog.from_interactions(train_rows),
        test=InteractionLog.from_interactions(test_rows),
        split_fraction=fraction,
        dropped_users=tuple(dropped),
    )


def split_from_logs(train: InteractionLog, test: InteractionLog, fraction: float) -> ChronoSplit:
    """Reassemble a split written to disk; users must appear on both sides."""
    missing = sorted(set(train.histories) ^ set(test.histories))
    if missing:
        raise DataError(f"users present on only one side of the split: {', '.join(missing[:10])}")
    for user, history in train.histories.items():
        if history.interactions[-1].timestamp > test.histories[user].interactions[0].timestamp:
            raise DataError(f"user {user}: train interaction later than a test interaction")
    return ChronoSplit(train=train, test=test, split_fraction=fraction)
