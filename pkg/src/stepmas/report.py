"""Offline inspection of run logs.

Works on the JSONL files written by `stepmas run --log`. Provides entry
filtering for the CLI plus a stats path that writes one delimited summary
file and renders matplotlib figures next to it.
"""

from __future__ import annotations

import csv
from collections import Counter
from pathlib import Path
from typing import Any, Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def filter_entries(
    entries: list[dict[str, Any]],
    agent: Optional[str] = None,
    task: Optional[str] = None,
) -> list[dict[str, Any]]:
    out = entries
    if agent is not None:
        out = [
            e
            for e in out
            if agent in (e.get("agent_id"), e.get("sender_id"), e.get("receiver_id"))
        ]
    if task is not None:
        out = [e for e in out if e.get("task_id") == task]
    return out


def summarize(entries: list[dict[str, Any]]) -> dict[str, Any]:
    kind_counts: Counter[str] = Counter(e["kind"] for e in entries)
    executor_counts: Counter[str] = Counter()
    actions_per_tick: Counter[int] = Counter()
    status_counts: Counter[str] = Counter()
    for e in entries:
        if e["kind"] != "action":
            continue
        executor_counts[e.get("executor") or "(none)"] += 1
        status_counts[e.get("step_status") or "(none)"] += 1
        if e.get("tick") is not None:
            actions_per_tick[int(e["tick"])] += 1
    lock_spans = _lock_spans(entries)
    return {
        "kind_counts": dict(sorted(kind_counts.items())),
        "executor_counts": dict(sorted(executor_counts.items())),
        "status_counts": dict(sorted(status_counts.items())),
        "actions_per_tick": dict(sorted(actions_per_tick.items())),
        "lock_spans": lock_spans,
    }


def _lock_spans(entries: list[dict[str, Any]]) -> list[dict[str, Any]]:
    """Pair lock_acquired with lock_released; span length counted in log
    sequence numbers (no wall clock in deterministic logs)."""
    open_locks: dict[str, dict[str, Any]] = {}
    spans = []
    for e in entries:
        wait_id = e.get("wait_id")
        if not wait_id:
            continue
        if e["kind"] == "lock_acquired":
            open_locks[wait_id] = e
        elif e["kind"] == "lock_released" and wait_id in open_locks:
            start = open_locks.pop(wait_id)
            spans.append(
                {
                    "wait_id": wait_id,
                    "agent_id": start.get("agent_id"),
                    "acquired_seq": start["seq"],
                    "released_seq": e["seq"],
                    "span": e["seq"] - start["seq"],
                }
            )
    for wait_id, start in open_locks.items():
        spans.append(
            {
                "wait_id": wait_id,
                "agent_id": start.get("agent_id"),
                "acquired_seq": start["seq"],
                "released_seq": None,
                "span": None,
            }
        )
    return spans


def write_stats(entries: list[dict[str, Any]], out_dir: str | Path) -> list[Path]:
    """Write stats.csv plus rendered figures into out_dir. Returns the
    list of files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats = summarize(entries)
    written = []

    csv_path = out / "stats.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["section", "key", "value"])
        for section in ("kind_counts", "executor_counts", "status_counts", "actions_per_tick"):
            for key, value in stats[section].items():
                writer.writerow([section, key, value])
        for span in stats["lock_spans"]:
            writer.writerow(
                ["lock_span", span["wait_id"], "" if span["span"] is None else span["span"]]
            )
    written.append(csv_path)

    written.append(
        _bar_figure(
            out / "actions_per_tick.png",
            stats["actions_per_tick"],
            "Actions per tick",
            "tick",
        )
    )
    written.append(
        _bar_figure(
            out / "executor_counts.png",
            stats["executor_counts"],
            "Actions per executor",
            "executor",
        )
    )
    return written


def _bar_figure(path: Path, counts: dict[Any, int], title: str, xlabel: str) -> Path:
    fig, ax = plt.subplots(figsize=(8, 4))
    keys = [str(k) for k in counts]
    ax.bar(keys, list(counts.values()), color="#4878a8")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    if keys and max(len(k) for k in keys) > 6:
        ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def format_entry(entry: dict[str, Any]) -> str:
    parts = [f"#{entry['seq']:05d}", entry["kind"]]
    for key in ("tick", "agent_id", "executor", "step_id", "step_status", "task_id", "stage_id"):
        if entry.get(key) is not None:
            parts.append(f"{key}={entry[key]}")
    return "  ".join(str(p) for p in parts)
