#!/usr/bin/env python3
from __future__ import annotations

import argparse
import json
from datetime import datetime, timezone
from pathlib import Path
import sys

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from dmr_rec.config import load_config
from dmr_rec.logging_db import init_db, read_epochs, read_latest_reports, read_latest_runs


def main() -> None:
    parser = argparse.ArgumentParser(description="Export the run log to JSON")
    parser.add_argument("--out", default="data/runs_snapshot.json")
    parser.add_argument("--limit", type=int, default=50)
    args = parser.parse_args()

    config = load_config()
    init_db(config.db_path)

    runs = read_latest_runs(config.db_path, limit=args.limit)
    reports = read_latest_reports(config.db_path, limit=args.limit * 4)

    data = {
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "runs": [
            {
                "id": run_id,
                "ts": ts,
                "command": command,
                "config_hash": config_hash,
                "epochs": [
                    {"epoch": row[0], "loss": row[1], "val_auc": row[2], "seconds": row[3]}
                    for row in read_epochs(config.db_path, run_id)
                ],
            }
            for run_id, ts, command, config_hash in runs
        ],
        "reports": [
            {
                "run_id": row[0],
                "ts": row[1],
                "label": row[2],
                "neighbors": row[3],
                "n": row[4],
                "precision": row[5],
                "recall": row[6],
                "f1": row[7],
                "auc": row[8],
                "diversity": row[9],
                "users": row[10],
            }
            for row in reports
        ],
    }

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(data, indent=2), encoding="utf-8")
    print(f"Wrote {len(runs)} runs to {out_path}")


if __name__ == "__main__":
    main()
