"""Step queue operations: drafts, append/insert, release, and step locks.

Executors never touch the queue directly; they return drafts inside an
ExecutorOutput and the engine applies them here. Appends are atomic per
batch: one unpermitted draft rejects the whole batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from .events import EventLog
from .model import (
    NO_STAGE,
    AgentState,
    PermissionViolation,
    Registry,
    StepState,
    ValidationError,
)


@dataclass
class StepDraft:
    step_intent: str
    executor: str
    step_type: str = "skill"
    text_content: str = ""
    stage_id: Optional[str] = None  # None inherits the creating step's stage
    instruction_content: Optional[dict[str, Any]] = None


@dataclass
class SyncInstruction:
    kind: str
    payload: dict[str, Any] = field(default_factory=dict)


@dataclass
class ExecutorOutput:
    """Everything an executor may hand back from one step execution."""

    result_text: str = ""
    append_steps: list[StepDraft] = field(default_factory=list)
    insert_steps: list[StepDraft] = field(default_factory=list)
    sync_instructions: list[SyncInstruction] = field(default_factory=list)
    memory_ops: list[dict[str, str]] = field(default_factory=list)
    failed: bool = False


@dataclass
class ActionReport:
    status: str  # "executed" | "blocked" | "idle"
    agent_id: str
    step_id: Optional[str] = None
    executor: Optional[str] = None
    step_type: Optional[str] = None
    step_status: Optional[str] = None
    sync_instruction_kinds: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "agent_id": self.agent_id,
            "step_id": self.step_id,
            "executor": self.executor,
            "step_type": self.step_type,
            "step_status": self.step_status,
            "sync_instruction_kinds": list(self.sync_instruction_kinds),
        }


def materialize_steps(
    registry: Registry,
    agent: AgentState,
    drafts: list[StepDraft],
    task_id: str,
    default_stage: str = NO_STAGE,
) -> list[StepState]:
    """Build StepStates from drafts, rejecting the whole batch on any
    permission violation."""
    for draft in drafts:
        if not agent.is_permitted(draft.executor, draft.step_type):
            raise PermissionViolation(
                f"agent {agent.agent_id} lacks permission for executor "
                f"{draft.executor!r} ({draft.step_type})"
            )
    steps = []
    for draft in drafts:
        steps.append(
            StepState(
                step_id=registry.ids.next("step"),
                task_id=task_id,
                stage_id=draft.stage_id if draft.stage_id is not None else default_stage,
                agent_id=agent.agent_id,
                step_intent=draft.step_intent,
                step_type=draft.step_type,
                executor=draft.executor,
                text_content=draft.text_content,
                instruction_content=draft.instruction_content,
            )
        )
    return steps


def append_steps(
    registry: Registry,
    agent: AgentState,
    drafts: list[StepDraft],
    task_id: str,
    default_stage: str = NO_STAGE,
) -> list[str]:
    steps = materialize_steps(registry, agent, drafts, task_id, default_stage)
    agent.step_queue.todo.extend(steps)
    agent.recompute_working_state()
    return [s.step_id for s in steps]


def insert_steps(
    registry: Registry,
    agent: AgentState,
    drafts: list[StepDraft],
    task_id: str,
    default_stage: str = NO_STAGE,
) -> list[str]:
    steps = materialize_steps(registry, agent, drafts, task_id, default_stage)
    agent.step_queue.todo[0:0] = steps
    agent.recompute_working_state()
    return [s.step_id for s in steps]


def release_stage_steps(agent: AgentState, stage_id: str, log: EventLog) -> int:
    """Drop all queued steps bound to the stage; history and "no_stage"
    steps stay. A matching running step is left to finish on its own."""
    count = agent.step_queue.release_matching(lambda s: s.stage_id == stage_id)
    agent.recompute_working_state()
    if count:
        log.emit("steps_released", agent_id=agent.agent_id, stage_id=stage_id, count=count)
    return count


def acquire_locks(agent: AgentState, wait_ids: list[str], log: EventLog) -> None:
    stale = [w for w in wait_ids if w in agent.step_locks]
    if stale:
        raise ValidationError(f"wait ids already held: {stale}")
    for wait_id in wait_ids:
        agent.step_locks.add(wait_id)
        log.emit("lock_acquired", agent_id=agent.agent_id, wait_id=wait_id)
    agent.recompute_working_state()


def release_lock(agent: AgentState, wait_id: str, log: EventLog) -> bool:
    """Idempotent: releasing an unknown id is a warning, not an error."""
    if wait_id not in agent.step_locks:
        log.emit("lock_release_ignored", agent_id=agent.agent_id, wait_id=wait_id)
        return False
    agent.step_locks.discard(wait_id)
    log.emit("lock_released", agent_id=agent.agent_id, wait_id=wait_id)
    agent.recompute_working_state()
    return True


def apply_memory_ops(
    registry: Registry, agent: AgentState, ops: list[dict[str, str]]
) -> None:
    """Apply persistent-memory commands in listed order. Adds get a fresh
    compact-ISO key; deletes of unknown keys are warnings."""
    for op in ops:
        if "add" in op:
            key = registry.clock.next_key()
            while key in agent.persistent_memory:
                key = registry.clock.next_key()
            agent.persistent_memory[key] = op["add"]
            registry.log.emit("memory_added", agent_id=agent.agent_id, key=key)
        elif "delete" in op:
            if op["delete"] in agent.persistent_memory:
                del agent.persistent_memory[op["delete"]]
                registry.log.emit("memory_deleted", agent_id=agent.agent_id, key=op["delete"])
            else:
                registry.log.emit(
                    "memory_delete_ignored", agent_id=agent.agent_id, key=op["delete"]
                )
