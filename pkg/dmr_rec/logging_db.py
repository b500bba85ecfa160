from __future__ import annotations

import sqlite3
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable


def init_db(db_path: str) -> None:
    Path(db_path).parent.mkdir(parents=True, exist_ok=True)
    with sqlite3.connect(db_path) as conn:
        conn.execute(
            """
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                ts TEXT NOT NULL,
                command TEXT NOT NULL,
                config_hash TEXT NOT NULL,
                config TEXT NOT NULL
            )
            """
        )
        conn.execute(
            """
            CREATE TABLE IF NOT EXISTS epochs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id INTEGER NOT NULL,
                epoch INTEGER NOT NULL,
                loss REAL NOT NULL,
                val_auc REAL,
                seconds REAL
            )
            """
        )
        conn.execute(
            """
            CREATE TABLE IF NOT EXISTS reports (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id INTEGER NOT NULL,
                label TEXT NOT NULL,
                neighbors INTEGER,
                n INTEGER NOT NULL,
                precision REAL,
                recall REAL,
                f1 REAL,
                auc REAL,
                diversity REAL,
                users INTEGER NOT NULL
            )
            """
        )


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def log_run(db_path: str, command: str, config_hash: str, config_text: str) -> int:
    with sqlite3.connect(db_path) as conn:
        cursor = conn.execute(
            "INSERT INTO runs (ts, command, config_hash, config) VALUES (?, ?, ?, ?)",
            (_now(), command, config_hash, config_text),
        )
        return int(cursor.lastrowid)


def _nullable(value: float | None) -> float | None:
    # sqlite stores NaN as NULL anyway; make it explicit.
    if value is None or value != value:
        return None
    return float(value)


def log_epochs(db_path: str, run_id: int, rows: Iterable[tuple[int, float, float | None, float | None]]) -> None:
    with sqlite3.connect(db_path) as conn:
        conn.executemany(
            "INSERT INTO epochs (run_id, epoch, loss, val_auc, seconds) VALUES (?, ?, ?, ?, ?)",
            [(run_id, int(epoch), float(loss), _nullable(auc), _nullable(sec)) for epoch, loss, auc, sec in rows],
        )


def log_report(
    db_path: str,
    run_id: int,
    label: str,
    neighbors: int | None,
    n: int,
    precision: float,
    recall: float,
    f1: float,
    auc: float,
    diversity: float,
    users: int,
) -> None:
    with sqlite3.connect(db_path) as conn:
        conn.execute(
            "INSERT INTO reports (run_id, label, neighbors, n, precision, recall, f1, auc, diversity, users) "
            "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
            (
                run_id,
                label,
                neighbors,
                n,
                _nullable(precision),
                _nullable(recall),
                _nullable(f1),
                _nullable(auc),
                _nullable(diversity),
                users,
            ),
        )


def read_latest_runs(db_path: str, limit: int = 20) -> list[tuple[int, str, str, str]]:
    with sqlite3.connect(db_path) as conn:
        cursor = conn.execute(
            "SELECT id, ts, command, config_hash FROM runs ORDER BY id DESC LIMIT ?",
            (limit,),
        )
        return cursor.fetchall()


def read_epochs(db_path: str, run_id: int) -> list[tuple[int, float, float | None, float | None]]:
    with sqlite3.connect(db_path) as conn:
        cursor = conn.execute(
            "SELECT epoch, loss, val_auc, seconds FROM epochs WHERE run_id = ? ORDER BY epoch",
            (run_id,),
        )
        return cursor.fetchall()


def read_latest_reports(db_path: str, limit: int = 50) -> list[tuple]:
    with sqlite3.connect(db_path) as conn:
        cursor = conn.execute(
            "SELECT r.run_id, runs.ts, r.label, r.neighbors, r.n, r.precision, r.recall, r.f1, r.auc, "
            "r.diversity, r.users FROM reports r JOIN runs ON runs.id = r.run_id ORDER BY r.id DESC LIMIT ?",
            (limit,),
        )
        return cursor.fetchall()
