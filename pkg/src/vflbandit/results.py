"""Result persistence: per-trial CSV files and a versioned summary JSON."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .experiments import RoundRecord, epoch_means
from .patterns import format_pattern

CSV_COLUMNS = ("t", "arm", "pattern", "reward", "candidate_set_size",
               "cumulative_regret", "queries")
SUMMARY_SCHEMA_VERSION = 1


def write_round_records_csv(path, records: Sequence[RoundRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for record in records:
            writer.writerow(
                [
                    record.round,
                    record.arm,
                    format_pattern(record.pattern) if record.pattern is not None else "",
                    repr(record.reward),
                    record.candidate_set_size,
                    repr(record.cumulative_regret) if record.cumulative_regret is not None else "",
                    record.queries_used if record.queries_used is not None else "",
                ]
            )


def summarize_trials(
    trials: dict[int, Sequence[RoundRecord]],
    n_arms: int,
    epoch_rounds: int,
    mode: str,
) -> dict:
    """Aggregate per-seed trajectories into the summary JSON payload."""
    per_seed = {}
    for seed, records in trials.items():
        rewards = [r.reward for r in records]
        pulls = np.bincount([r.arm for r in records], minlength=n_arms)
        entry = {
            "epoch_mean_reward": epoch_means(rewards, epoch_rounds),
            "per_arm_pulls": pulls.tolist(),
        }
        last = records[-1]
        if last.cumulative_regret is not None:
            entry["final_cumulative_regret"] = last.cumulative_regret
        per_seed[str(seed)] = entry
    summary: dict = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "mode": mode,
        "n_arms": n_arms,
        "epoch_rounds": epoch_rounds,
        "seeds": sorted(trials),
        "per_seed": per_seed,
    }
    epoch_lists = [entry["epoch_mean_reward"] for entry in per_seed.values()]
    if epoch_lists:
        summary["mean_epoch_reward"] = np.mean(epoch_lists, axis=0).tolist()
    regrets = [
        entry["final_cumulative_regret"]
        for entry in per_seed.values()
        if "final_cumulative_regret" in entry
    ]
    if regrets:
        summary["mean_final_cumulative_regret"] = float(np.mean(regrets))
    return summary


def write_summary_json(path, summary: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
