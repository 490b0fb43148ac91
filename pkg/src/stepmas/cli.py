"""Command line entry points.

`run` executes a scenario deterministically and checks its assertions,
`serve` exposes a live system through the HTTP gateway, `inspect` reads
a JSONL run log back for filtering and stats reporting.

Exit codes for `run`: 0 all assertions pass, 1 an assertion failed,
2 the scenario could not be loaded.
"""

from __future__ import annotations

import random
import sys
from pathlib import Path

import click

from .events import read_jsonl
from .report import filter_entries, format_entry, write_stats
from .scenario import (
    ScenarioError,
    build_system,
    bundled_scenario_path,
    list_bundled_scenarios,
    load_scenario,
    run_scenario,
)


def _resolve_scenario(name_or_path: str) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    try:
        return bundled_scenario_path(name_or_path)
    except ScenarioError:
        raise ScenarioError(
            f"no scenario file or bundled scenario named {name_or_path!r}; "
            f"bundled: {', '.join(list_bundled_scenarios())}"
        )


@click.group()
def main() -> None:
    """Step-granular multi-agent runtime."""


@main.command("run")
@click.argument("scenario")
@click.option("--ticks", type=int, default=None, help="Override the tick budget.")
@click.option("--log", "log_path", type=click.Path(), default=None, help="Write the event log as JSONL.")
@click.option("--seed", type=int, default=None, help="Seed the process RNG before the run.")
def run_cmd(scenario: str, ticks, log_path, seed) -> None:
    """Run a scenario to completion and evaluate its assertions."""
    if seed is not None:
        random.seed(seed)
    try:
        path = _resolve_scenario(scenario)
        result = run_scenario(path, max_ticks=ticks)
    except ScenarioError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    if log_path:
        result.log.write(log_path)
    for assertion in result.assertions:
        mark = "PASS" if assertion.ok else "FAIL"
        line = f"[{mark}] {assertion.description}"
        if assertion.detail:
            line += f" ({assertion.detail})"
        click.echo(line)
    click.echo(f"{result.name}: {len(result.log)} events")
    sys.exit(0 if result.ok else 1)


@main.command("serve")
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), required=True,
              help="Scenario file defining agents, servers, and scripted rules.")
def serve_cmd(port: int, host: str, config_path: str) -> None:
    """Serve a live system over the HTTP gateway."""
    from .gateway import serve

    try:
        spec = load_scenario(config_path)
        mas = build_system(spec)
    except ScenarioError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"serving on http://{host}:{port}")
    try:
        serve(mas, host=host, port=port)
    finally:
        mas.close()


@main.command("inspect")
@click.argument("log_file", type=click.Path(exists=True))
@click.option("--agent", default=None, help="Only entries touching this agent.")
@click.option("--task", default=None, help="Only entries for this task.")
@click.option("--stats", is_flag=True, help="Write stats.csv and figures instead of listing entries.")
@click.option("--out", "out_dir", type=click.Path(), default="report",
              show_default=True, help="Output directory for --stats.")
def inspect_cmd(log_file: str, agent, task, stats: bool, out_dir: str) -> None:
    """Inspect a JSONL run log."""
    entries = read_jsonl(log_file)
    entries = filter_entries(entries, agent=agent, task=task)
    if stats:
        for path in write_stats(entries, out_dir):
            click.echo(f"wrote {path}")
        return
    for entry in entries:
        click.echo(format_entry(entry))


if __name__ == "__main__":
    main()
