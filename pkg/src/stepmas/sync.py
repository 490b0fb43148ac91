"""Global state-synchronization facade.

Executors never mutate task-level state directly; they emit
SyncInstruction lists and this facade applies them, one instruction at a
time, against the registry. Each instruction is atomic: a rejected
instruction leaves the registry untouched and later instructions still
run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Optional

from .messaging import MessageDispatcher, enqueue, new_message
from .model import (
    HUMAN_SENDER,
    NO_STAGE,
    PermissionViolation,
    Registry,
    SequencingError,
    StageState,
    StageStatus,
    StateError,
    TaskStatus,
    ValidationError,
)
from .steps import StepDraft, SyncInstruction, append_steps, release_stage_steps

REQUIRED_KEYS: dict[str, set[str]] = {
    "send_message": {"task_id", "message"},
    "update_stage_completion": {"stage_id", "summary"},
    "finish_stage": {"stage_id"},
    "next_stage": {"task_id"},
    "add_stage": {"task_id", "objective", "agent_allocation"},
    "update_task": {"task_id"},
    "finish_task": {"task_id"},
    "create_agent": {"config"},
    "modify_agent": {"agent_id", "changes"},
    "query_info": {"task_id", "query"},
}

TASK_MANAGER_KINDS = {"add_stage", "update_task", "finish_task"}
AGENT_MANAGER_KINDS = {"create_agent", "modify_agent"}


@dataclass
class ApplyResult:
    kind: str
    ok: bool
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "ok": self.ok, "detail": self.detail}


class SyncState:
    """Single serialized entry point for registry mutation."""

    def __init__(self, registry: Registry, dispatcher: MessageDispatcher) -> None:
        self.registry = registry
        self.dispatcher = dispatcher
        # Installed by the orchestrator: create_agent needs config validation
        # that lives above this layer.
        self.spawn_hook: Optional[Callable[[dict[str, Any]], str]] = None

    # -- application --------------------------------------------------

    def apply(self, instructions: list[SyncInstruction], origin_agent_id: str) -> list[ApplyResult]:
        if origin_agent_id != HUMAN_SENDER:
            self.registry.agent(origin_agent_id)
        results = []
        for instruction in instructions:
            try:
                self._validate(instruction, origin_agent_id)
                detail = self._dispatch(instruction, origin_agent_id)
                result = ApplyResult(instruction.kind, True, detail)
            except StateError as exc:
                result = ApplyResult(instruction.kind, False, str(exc))
            self.registry.log.emit(
                "sync_applied",
                origin=origin_agent_id,
                instruction_kind=instruction.kind,
                ok=result.ok,
                detail=result.detail,
            )
            results.append(result)
        return results

    def _validate(self, instruction: SyncInstruction, origin: str) -> None:
        if instruction.kind not in REQUIRED_KEYS:
            raise ValidationError(f"unknown sync instruction kind {instruction.kind!r}")
        missing = REQUIRED_KEYS[instruction.kind] - set(instruction.payload)
        if missing:
            raise ValidationError(
                f"{instruction.kind}: missing payload keys {sorted(missing)}"
            )
        if origin == HUMAN_SENDER:
            return
        agent = self.registry.agent(origin)
        if instruction.kind in TASK_MANAGER_KINDS and "task_manager" not in agent.skill_permissions:
            raise PermissionViolation(
                f"{instruction.kind} requires the task_manager skill (origin {origin})"
            )
        if instruction.kind in AGENT_MANAGER_KINDS and "agent_manager" not in agent.skill_permissions:
            raise PermissionViolation(
                f"{instruction.kind} requires the agent_manager skill (origin {origin})"
            )

    def _dispatch(self, instruction: SyncInstruction, origin: str) -> str:
        handler = getattr(self, f"_apply_{instruction.kind}")
        return handler(instruction.payload, origin)

    # -- handlers -----------------------------------------------------

    def _apply_send_message(self, payload: dict[str, Any], origin: str) -> str:
        body = payload["message"]
        message = new_message(
            self.registry,
            task_id=payload["task_id"],
            sender_id=origin,
            receiver_ids=list(body["receiver_ids"]),
            content=body.get("content", ""),
            stage_relative=body.get("stage_relative", NO_STAGE),
            need_reply=bool(body.get("need_reply", False)),
            waiting=body.get("waiting"),
            return_waiting_id=body.get("return_waiting_id"),
            category=body.get("category", "agent"),
            exchange_depth=int(body.get("exchange_depth", 0)),
        )
        enqueue(self.registry, message)
        return message.message_id

    def _apply_update_stage_completion(self, payload: dict[str, Any], origin: str) -> str:
        stage = self.registry.stage(payload["stage_id"])
        if origin != HUMAN_SENDER and origin not in stage.agent_allocation:
            raise ValidationError(f"agent {origin} is not allocated to {stage.stage_id}")
        stage.completion_summaries[origin] = payload["summary"]
        return f"{len(stage.completion_summaries)}/{len(stage.agent_allocation)} reported"

    def _apply_finish_stage(self, payload: dict[str, Any], origin: str) -> str:
        stage = self.registry.stage(payload["stage_id"])
        if stage.status is not StageStatus.RUNNING:
            raise SequencingError(
                f"stage {stage.stage_id} is {stage.status.value}, expected running"
            )
        if not stage.all_agents_reported():
            missing = set(stage.agent_allocation) - set(stage.completion_summaries)
            raise ValidationError(
                f"stage {stage.stage_id} missing completion summaries from {sorted(missing)}"
            )
        stage.status = StageStatus.FINISHED
        self.registry.log.emit(
            "stage_finished", stage_id=stage.stage_id, task_id=stage.task_id
        )
        for agent_id in stage.agent_allocation:
            agent = self.registry.agents.get(agent_id)
            if agent is not None:
                release_stage_steps(agent, stage.stage_id, self.registry.log)
        # Finishing the current stage advances the task: next stage starts
        # (seeding its agents) or the task finishes and disbands.
        task = self.registry.task(stage.task_id)
        next_stage = self.registry.advance_stage(task)
        if next_stage is not None:
            self._seed_stage(next_stage)
            return f"advanced to {next_stage.stage_id}"
        return "task complete" if stage.task_id not in self.registry.tasks else "task halted"

    def _apply_next_stage(self, payload: dict[str, Any], origin: str) -> str:
        task = self.registry.task(payload["task_id"])
        stage = self.registry.advance_stage(task)
        if stage is None:
            return "no stages remain"
        self._seed_stage(stage)
        return stage.stage_id

    def _apply_add_stage(self, payload: dict[str, Any], origin: str) -> str:
        stage = self.registry.add_stage(
            payload["task_id"], payload["objective"], dict(payload["agent_allocation"])
        )
        return stage.stage_id

    def _apply_update_task(self, payload: dict[str, Any], origin: str) -> str:
        task = self.registry.task(payload["task_id"])
        task.shared_info.update(payload.get("shared_info", {}))
        return f"{len(payload.get('shared_info', {}))} keys"

    def _apply_finish_task(self, payload: dict[str, Any], origin: str) -> str:
        task = self.registry.task(payload["task_id"])
        current = self.registry.current_stage(task)
        if current is not None and current.status is StageStatus.RUNNING:
            raise ValidationError(
                f"task {task.task_id} still has running stage {current.stage_id}"
            )
        task.status = TaskStatus.FINISHED
        self.registry.log.emit("task_finished", task_id=task.task_id)
        self.registry.clear_task(task.task_id)
        return task.task_id

    def _apply_create_agent(self, payload: dict[str, Any], origin: str) -> str:
        if self.spawn_hook is None:
            raise ValidationError("agent creation is not wired in this runtime")
        return self.spawn_hook(dict(payload["config"]))

    def _apply_modify_agent(self, payload: dict[str, Any], origin: str) -> str:
        agent = self.registry.agent(payload["agent_id"])
        changes = payload["changes"]
        applied = []
        if "profile" in changes:
            agent.profile = str(changes["profile"])
            applied.append("profile")
        for key, attr in (("add_skills", "skill_permissions"), ("add_tools", "tool_permissions")):
            if changes.get(key):
                getattr(agent, attr).update(changes[key])
                applied.append(key)
        for key, attr in (
            ("remove_skills", "skill_permissions"),
            ("remove_tools", "tool_permissions"),
        ):
            if changes.get(key):
                getattr(agent, attr).difference_update(changes[key])
                applied.append(key)
        if not applied:
            raise ValidationError("modify_agent: no recognized changes")
        return ",".join(applied)

    def _apply_query_info(self, payload: dict[str, Any], origin: str) -> str:
        query = payload["query"]
        answer = self._answer_query(query)
        message = new_message(
            self.registry,
            task_id=payload["task_id"],
            sender_id=origin,
            receiver_ids=[origin],
            content=answer,
            category="info_reply",
            need_reply=False,
        )
        enqueue(self.registry, message)
        return message.message_id

    def _answer_query(self, query: dict[str, Any]) -> str:
        kind = query.get("kind")
        target = query.get("id", "")
        try:
            if kind == "task":
                task = self.registry.task(target)
                return (
                    f"task {task.task_id}: status={task.status.value}, "
                    f"stages={task.stage_ids}, agents={task.agent_ids}, "
                    f"shared_info={task.shared_info}"
                )
            if kind == "stage":
                stage = self.registry.stage(target)
                return (
                    f"stage {stage.stage_id}: status={stage.status.value}, "
                    f"objective={stage.objective!r}, "
                    f"allocation={stage.agent_allocation}"
                )
            if kind == "agent_profile":
                agent = self.registry.agent(target)
                return f"agent {agent.agent_id}: name={agent.name}, role={agent.role}, profile={agent.profile!r}"
        except StateError as exc:
            return f"query error: {exc}"
        return f"query error: unknown query kind {kind!r}"

    # -- stage kickoff ------------------------------------------------

    def _seed_stage(self, stage: StageState) -> None:
        """Hand every allocated agent a planning step for its sub-goal."""
        for agent_id, subgoal in stage.agent_allocation.items():
            agent = self.registry.agents.get(agent_id)
            if agent is None or "planning" not in agent.skill_permissions:
                self.registry.log.emit(
                    "stage_seed_skipped", stage_id=stage.stage_id, agent_id=agent_id
                )
                continue
            draft = StepDraft(
                step_intent=f"plan work for stage {stage.stage_id}",
                executor="planning",
                text_content=(
                    f"Stage objective: {stage.objective}\nYour sub-goal: {subgoal}"
                ),
                stage_id=stage.stage_id,
            )
            append_steps(self.registry, agent, [draft], stage.task_id)
