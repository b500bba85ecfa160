#!/usr/bin/env python3
from __future__ import annotations

import argparse
import statistics
from pathlib import Path
import sys

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from dmr_rec.config import load_config
from dmr_rec.data import chrono_split
from dmr_rec.evaluation import assignment_purity
from dmr_rec.pipeline import run_pipeline
from dmr_rec.synthetic import PlantedWorld, generate


def run_seed(config, seed: int) -> tuple[float, float, float]:
    seeded = config.with_overrides(seed=seed)
    log, truth = generate(PlantedWorld.from_config(seeded))
    split = chrono_split(log, seeded.split_fraction)
    result = run_pipeline(seeded, split=split)
    purity = assignment_purity(result.training.params, split.train, truth)
    return result.report.auc, result.baseline.auc, purity


def main() -> None:
    parser = argparse.ArgumentParser(description="Compare DMR vs popularity AUC over synthetic worlds")
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5], help="World and training seeds")
    parser.add_argument("--epochs", type=int, default=None, help="Override training epochs")
    args = parser.parse_args()

    config = load_config(args.config, {"epochs": args.epochs})

    model_aucs, baseline_aucs, purities = [], [], []
    for seed in args.seeds:
        print(f"Running seed {seed}...")
        model_auc, baseline_auc, purity = run_seed(config, seed)
        model_aucs.append(model_auc)
        baseline_aucs.append(baseline_auc)
        purities.append(purity)
        print(f"  dmr auc={model_auc:.4f}  popularity auc={baseline_auc:.4f}  trend purity={purity:.4f}")

    gaps = [m - b for m, b in zip(model_aucs, baseline_aucs)]
    std = statistics.pstdev(gaps) if len(gaps) > 1 else 0.0

    print("\nResults")
    print(f"DMR mean AUC:        {statistics.mean(model_aucs):.4f}")
    print(f"Popularity mean AUC: {statistics.mean(baseline_aucs):.4f}")
    print(f"Mean gap:            {statistics.mean(gaps):+.4f} (std: {std:.4f})")
    print(f"Mean trend purity:   {statistics.mean(purities):.4f}")
    print(f"Seeds where DMR wins: {sum(g > 0 for g in gaps)}/{len(gaps)}")


if __name__ == "__main__":
    main()
