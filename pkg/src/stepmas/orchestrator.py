"""Top-level runtime container.

Owns the registry, backends, tool client, dispatcher, sync facade, and
the scheduler. Deterministic mode runs round-robin agent ticks followed
by one dispatch per round, so two runs of the same scenario produce
identical event logs. Live mode runs the same loop on a background
thread with a periodic dispatcher for the gateway to supervise.
"""

from __future__ import annotations

import logging
import threading
import time
from typing import Any, Callable, Optional

from .engine import StepEngine
from .events import EventLog
from .messaging import DEFAULT_MAX_EXCHANGES, MessageDispatcher
from .model import (
    HUMAN_SENDER,
    NO_STAGE,
    AgentState,
    RegistrationError,
    Registry,
    StageStatus,
    ValidationError,
)
from .prompts import load_templates
from .skills import SKILLS, SkillContext
from .steps import StepDraft, SyncInstruction, append_steps
from .sync import ApplyResult, SyncState
from .tools import ToolClient, UnknownServerError

logger = logging.getLogger(__name__)

LIVE_DISPATCH_PERIOD = 0.2  # seconds

INTERVENTION_KINDS = {
    "inject_message",
    "edit_agent_state",
    "pause_agent",
    "resume_agent",
    "end_stage",
    "cancel_task",
}


class MultiAgentSystem:
    def __init__(
        self,
        backend: Any,
        server_config: Optional[dict[str, dict[str, Any]]] = None,
        deterministic: bool = True,
        max_exchanges: int = DEFAULT_MAX_EXCHANGES,
        templates_dir: Optional[str] = None,
    ) -> None:
        self.log = EventLog()
        self.registry = Registry(log=self.log, deterministic=deterministic)
        self.dispatcher = MessageDispatcher(self.registry)
        self.sync = SyncState(self.registry, self.dispatcher)
        self.tool_client = ToolClient(server_config or {})
        self.skill_ctx = SkillContext(
            registry=self.registry,
            backend=backend,
            templates=load_templates(templates_dir),
            max_exchanges=max_exchanges,
        )
        self.engine = StepEngine(
            self.registry,
            self.sync,
            self.skill_ctx,
            tool_client=self.tool_client,
            deterministic=deterministic,
        )
        self.sync.spawn_hook = self._spawn_from_config
        self.deterministic = deterministic
        self.paused: set[str] = set()
        self._live_thread: Optional[threading.Thread] = None
        self._live_stop = threading.Event()
        self._mutate_lock = threading.Lock()

    # -- agents -------------------------------------------------------

    def spawn_agent(self, config: dict[str, Any]) -> str:
        with self._mutate_lock:
            return self._spawn_from_config(config)

    def _spawn_from_config(self, config: dict[str, Any]) -> str:
        name = config.get("name")
        if not name:
            raise ValidationError("agent config requires a name")
        if not config.get("role"):
            raise ValidationError("agent config requires a role")
        skills = set(config.get("skills", []))
        unknown_skills = sorted(skills - set(SKILLS))
        if unknown_skills:
            raise ValidationError(f"unknown skills in config: {unknown_skills}")
        tools = set(config.get("tools", []))
        try:
            self.tool_client.check_permissions(tools)
        except UnknownServerError as exc:
            raise ValidationError(str(exc)) from exc
        agent = AgentState(
            agent_id=config.get("agent_id", name),
            name=name,
            role=config["role"],
            profile=config.get("profile", ""),
            llm_config_ref=config.get("llm_config_ref", "default"),
            skill_permissions=skills,
            tool_permissions=tools,
        )
        self.registry.register_agent(agent)
        self.tool_client.ensure_sessions(agent)
        self.log.emit("agent_spawned", agent_id=agent.agent_id, role=agent.role)
        return agent.agent_id

    # -- tasks --------------------------------------------------------

    def start_task(self, instruction: str, manager_agent_id: str, member_ids: list[str]) -> str:
        with self._mutate_lock:
            manager = self.registry.agent(manager_agent_id)
            if "task_manager" not in manager.skill_permissions:
                raise ValidationError(
                    f"manager {manager_agent_id} lacks the task_manager skill"
                )
            group = list(dict.fromkeys([manager_agent_id, *member_ids]))
            task = self.registry.new_task(instruction, group)
            draft = StepDraft(
                step_intent="break the task into stages and start it",
                executor="task_manager",
                text_content=f"Task instruction: {instruction}\nTask group: {group}",
                stage_id=NO_STAGE,
            )
            append_steps(self.registry, manager, [draft], task.task_id)
            return task.task_id

    # -- scheduling ---------------------------------------------------

    def tick_round(self) -> dict[str, Any]:
        """One deterministic round: every unpaused agent acts once, then
        the dispatcher drains every task queue."""
        with self._mutate_lock:
            reports = []
            for agent in list(self.registry.agents.values()):
                if agent.agent_id in self.paused:
                    continue
                reports.append(self.engine.next_action(agent))
            dispatched = self.dispatcher.dispatch_all()
            self.engine.tick += 1
            return {
                "executed": sum(1 for r in reports if r.status == "executed"),
                "dispatched": dispatched,
            }

    def run(
        self,
        mode: str = "deterministic",
        until: Optional[Callable[["MultiAgentSystem"], bool]] = None,
        max_ticks: int = 200,
    ) -> EventLog:
        if not self.registry.tasks and until is None:
            raise ValidationError("run requires at least one task")
        predicate = until if until is not None else (lambda mas: not mas.registry.tasks)
        for _ in range(max_ticks):
            if predicate(self):
                return self.log
            stats = self.tick_round()
            if mode == "live":
                time.sleep(LIVE_DISPATCH_PERIOD)
            if stats["executed"] == 0 and stats["dispatched"] == 0 and not predicate(self):
                if self._quiescent():
                    self.log.emit("run_stalled", tick=self.engine.tick)
                    return self.log
        if not predicate(self):
            self.log.emit("tick_budget_exhausted", tick=self.engine.tick)
        return self.log

    def _quiescent(self) -> bool:
        for agent in self.registry.agents.values():
            if agent.agent_id in self.paused:
                continue
            if agent.step_queue.todo and not agent.step_locks:
                return False
        for task in self.registry.tasks.values():
            if task.comm_queue:
                return False
        return True

    # -- live mode ----------------------------------------------------

    def start_live(self) -> None:
        if self._live_thread is not None:
            return
        self._live_stop.clear()

        def loop() -> None:
            while not self._live_stop.is_set():
                try:
                    self.tick_round()
                except Exception:
                    logger.exception("live round failed")
                self._live_stop.wait(LIVE_DISPATCH_PERIOD)

        self._live_thread = threading.Thread(target=loop, name="mas-live", daemon=True)
        self._live_thread.start()

    def stop_live(self) -> None:
        if self._live_thread is None:
            return
        self._live_stop.set()
        self._live_thread.join(timeout=5)
        self._live_thread = None

    # -- human oversight ----------------------------------------------

    def intervene(self, command: dict[str, Any]) -> list[ApplyResult]:
        kind = command.get("kind")
        if kind not in INTERVENTION_KINDS:
            raise ValidationError(f"unknown intervention kind {kind!r}")
        self.log.emit("intervention", command=command)
        handler = getattr(self, f"_intervene_{kind}")
        with self._mutate_lock:
            return handler(command)

    def _intervene_inject_message(self, command: dict[str, Any]) -> list[ApplyResult]:
        receivers = command.get("receiver_ids") or [command["receiver_id"]]
        body = {
            "receiver_ids": receivers,
            "content": command.get("content", ""),
            "stage_relative": command.get("stage_relative", NO_STAGE),
            "need_reply": bool(command.get("need_reply", False)),
        }
        instruction = SyncInstruction(
            "send_message", {"task_id": command["task_id"], "message": body}
        )
        return self.sync.apply([instruction], HUMAN_SENDER)

    def _intervene_edit_agent_state(self, command: dict[str, Any]) -> list[ApplyResult]:
        instruction = SyncInstruction(
            "modify_agent",
            {"agent_id": command["agent_id"], "changes": command.get("changes", {})},
        )
        return self.sync.apply([instruction], HUMAN_SENDER)

    def _intervene_pause_agent(self, command: dict[str, Any]) -> list[ApplyResult]:
        agent = self.registry.agent(command["agent_id"])
        self.paused.add(agent.agent_id)
        self.log.emit("agent_paused", agent_id=agent.agent_id)
        return [ApplyResult("pause_agent", True, agent.agent_id)]

    def _intervene_resume_agent(self, command: dict[str, Any]) -> list[ApplyResult]:
        agent = self.registry.agent(command["agent_id"])
        self.paused.discard(agent.agent_id)
        self.log.emit("agent_resumed", agent_id=agent.agent_id)
        return [ApplyResult("resume_agent", True, agent.agent_id)]

    def _intervene_end_stage(self, command: dict[str, Any]) -> list[ApplyResult]:
        stage = self.registry.stage(command["stage_id"])
        if stage.status is not StageStatus.RUNNING:
            return [ApplyResult("end_stage", False, f"stage {stage.stage_id} not running")]
        # Fill in completions for agents that never reported, then close.
        for agent_id in stage.agent_allocation:
            if agent_id not in stage.completion_summaries:
                stage.completion_summaries[agent_id] = "(ended by operator)"
        return self.sync.apply(
            [SyncInstruction("finish_stage", {"stage_id": stage.stage_id})], HUMAN_SENDER
        )

    def _intervene_cancel_task(self, command: dict[str, Any]) -> list[ApplyResult]:
        task_id = command["task_id"]
        self.registry.task(task_id)
        self.registry.clear_task(task_id)
        return [ApplyResult("cancel_task", True, task_id)]

    # -- inspection ---------------------------------------------------

    def snapshot(self) -> dict[str, Any]:
        snap = self.registry.snapshot()
        snap["paused"] = sorted(self.paused)
        return snap

    def snapshot_json(self) -> str:
        import json

        return json.dumps(self.snapshot(), sort_keys=True, indent=2)

    def close(self) -> None:
        self.stop_live()
        self.tool_client.close()
