"""Self-contained reproducible scenarios.

A scenario file bundles agent configs, scripted backend rules, tasks,
timed human interventions, and assertions over the finished run. Files
are YAML-compatible (plain JSON parses too). Bundled scenarios ship as
package data.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .backend import ScriptedBackend
from .events import EventLog
from .orchestrator import MultiAgentSystem


class ScenarioError(Exception):
    pass


@dataclass
class AssertionResult:
    description: str
    ok: bool
    detail: str = ""


@dataclass
class ScenarioResult:
    name: str
    mas: MultiAgentSystem
    log: EventLog
    assertions: list[AssertionResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(a.ok for a in self.assertions)


def load_scenario(source: str | Path | dict[str, Any]) -> dict[str, Any]:
    if isinstance(source, dict):
        return source
    path = Path(source)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"cannot parse scenario {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"scenario {path} must be a mapping")
    return data


def bundled_scenario_path(name: str) -> Path:
    resource = importlib.resources.files("stepmas") / "scenarios" / f"{name}.json"
    with importlib.resources.as_file(resource) as path:
        if not path.exists():
            raise ScenarioError(f"no bundled scenario named {name!r}")
        return Path(str(path))


def list_bundled_scenarios() -> list[str]:
    resource = importlib.resources.files("stepmas") / "scenarios"
    return sorted(p.name.removesuffix(".json") for p in resource.iterdir() if p.name.endswith(".json"))


def build_system(spec: dict[str, Any]) -> MultiAgentSystem:
    if "agents" not in spec:
        raise ScenarioError("scenario missing required key 'agents'")
    backend = ScriptedBackend(spec.get("scripted_rules", []), default=spec.get("default_reply"))
    mas = MultiAgentSystem(
        backend=backend,
        server_config=spec.get("servers", {}),
        deterministic=True,
        max_exchanges=int(spec.get("max_exchanges", 16)),
    )
    for agent_config in spec["agents"]:
        mas.spawn_agent(agent_config)
    for task in spec.get("tasks", []):
        mas.start_task(task["instruction"], task["manager"], list(task.get("members", [])))
    return mas


def run_scenario(
    source: str | Path | dict[str, Any], max_ticks: Optional[int] = None
) -> ScenarioResult:
    spec = load_scenario(source)
    mas = build_system(spec)
    budget = max_ticks if max_ticks is not None else int(spec.get("max_ticks", 100))
    interventions = sorted(spec.get("interventions", []), key=lambda i: i.get("at_tick", 0))
    pending = list(interventions)
    try:
        for tick in range(budget):
            while pending and pending[0].get("at_tick", 0) <= tick:
                mas.intervene(pending.pop(0)["command"])
            if not mas.registry.tasks and not pending:
                break
            mas.tick_round()
        else:
            if mas.registry.tasks:
                mas.log.emit("tick_budget_exhausted", tick=mas.engine.tick)
        result = ScenarioResult(spec.get("name", "scenario"), mas, mas.log)
        for assertion in spec.get("assertions", []):
            result.assertions.append(evaluate_assertion(mas, assertion))
        return result
    finally:
        mas.tool_client.close()


def _subset_match(entry: dict[str, Any], wanted: dict[str, Any]) -> bool:
    return all(entry.get(k) == v for k, v in wanted.items())


def evaluate_assertion(mas: MultiAgentSystem, assertion: dict[str, Any]) -> AssertionResult:
    kind = assertion.get("kind")
    entries = mas.log.entries()
    if kind == "all_tasks_finished":
        finished = any(e["kind"] == "task_finished" for e in entries)
        remaining = sorted(mas.registry.tasks)
        ok = finished and not remaining
        return AssertionResult(
            "all tasks finished", ok, f"remaining={remaining}" if remaining else ""
        )
    if kind == "event_present":
        wanted = assertion["event"]
        ok = any(_subset_match(e, wanted) for e in entries)
        return AssertionResult(f"event present: {wanted}", ok)
    if kind == "event_absent":
        wanted = assertion["event"]
        hits = [e for e in entries if _subset_match(e, wanted)]
        return AssertionResult(
            f"event absent: {wanted}", not hits, f"{len(hits)} matches" if hits else ""
        )
    if kind == "min_events":
        count = sum(1 for e in entries if e["kind"] == assertion["event_kind"])
        ok = count >= int(assertion["count"])
        return AssertionResult(
            f"at least {assertion['count']} {assertion['event_kind']} events",
            ok,
            f"saw {count}",
        )
    if kind == "memory_contains":
        agent = mas.registry.agents.get(assertion["agent"])
        values = list(agent.persistent_memory.values()) if agent else []
        ok = any(assertion["substring"] in v for v in values)
        return AssertionResult(
            f"memory of {assertion['agent']} contains {assertion['substring']!r}", ok
        )
    if kind == "no_reference_violations":
        violations = mas.registry.check_references()
        return AssertionResult(
            "no reference violations", not violations, "; ".join(violations)
        )
    return AssertionResult(f"unknown assertion kind {kind!r}", False)
