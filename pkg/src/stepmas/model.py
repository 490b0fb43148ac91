"""Four-tier state hierarchy: Task, Stage, Agent, Step.

Tasks own sequential stages and a communication queue; agents own their
step queues and persistent memory. The cross-reference rules are
bidirectional between Task/Stage/Agent, one-way from Step up to the other
three, and only the owning agent points back at its steps.
``check_references`` audits the whole registry against that graph.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from .events import EventLog
from .ids import IdGenerator, LogicalClock

NO_STAGE = "no_stage"
HUMAN_SENDER = "human-operator"


class StateError(Exception):
    """Base class for registry rule violations."""


class RegistrationError(StateError):
    pass


class SequencingError(StateError):
    pass


class PermissionViolation(StateError):
    pass


class ValidationError(StateError):
    pass


class TaskStatus(str, Enum):
    INIT = "init"
    RUNNING = "running"
    FINISHED = "finished"
    FAILED = "failed"


class StageStatus(str, Enum):
    INIT = "init"
    RUNNING = "running"
    FINISHED = "finished"
    FAILED = "failed"


class StepStatus(str, Enum):
    INIT = "init"
    PENDING = "pending"
    RUNNING = "running"
    FINISHED = "finished"
    FAILED = "failed"


class WorkingState(str, Enum):
    IDLE = "idle"
    WORKING = "working"
    WAITING = "waiting"


STEP_TRANSITIONS = {
    StepStatus.INIT: {StepStatus.PENDING},
    StepStatus.PENDING: {StepStatus.RUNNING},
    StepStatus.RUNNING: {StepStatus.FINISHED, StepStatus.FAILED},
    StepStatus.FINISHED: set(),
    StepStatus.FAILED: set(),
}


@dataclass
class StepState:
    step_id: str
    task_id: str
    stage_id: str
    agent_id: str
    step_intent: str
    step_type: str  # "skill" | "tool"
    executor: str
    text_content: str = ""
    instruction_content: Optional[dict[str, Any]] = None
    execute_result: Optional[str] = None
    status: StepStatus = StepStatus.INIT

    def advance(self, new_status: StepStatus) -> None:
        if new_status not in STEP_TRANSITIONS[self.status]:
            raise SequencingError(
                f"step {self.step_id}: illegal transition {self.status.value} -> {new_status.value}"
            )
        self.status = new_status

    def to_dict(self) -> dict[str, Any]:
        return {
            "step_id": self.step_id,
            "task_id": self.task_id,
            "stage_id": self.stage_id,
            "agent_id": self.agent_id,
            "step_intent": self.step_intent,
            "step_type": self.step_type,
            "executor": self.executor,
            "text_content": self.text_content,
            "instruction_content": self.instruction_content,
            "execute_result": self.execute_result,
            "status": self.status.value,
        }


@dataclass
class Message:
    """Inter-agent envelope, relayed through the owning task's queue."""

    message_id: str
    task_id: str
    sender_id: str
    receiver_ids: list[str]
    content: str
    stage_relative: str = NO_STAGE
    need_reply: bool = False
    waiting: Optional[list[str]] = None
    return_waiting_id: Optional[str] = None
    delivered: bool = False
    category: str = "agent"  # "agent" | "tool_result" | "info_reply"
    exchange_depth: int = 0

    def validate(self) -> None:
        if not self.receiver_ids:
            raise ValidationError(f"message {self.message_id}: no receivers")
        if self.waiting is not None and len(self.waiting) != len(self.receiver_ids):
            raise ValidationError(
                f"message {self.message_id}: waiting must carry one id per receiver"
            )
        if not self.need_reply and self.waiting is not None:
            raise ValidationError(
                f"message {self.message_id}: waiting requires need_reply=true"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "message_id": self.message_id,
            "task_id": self.task_id,
            "sender_id": self.sender_id,
            "receiver_ids": list(self.receiver_ids),
            "content": self.content,
            "stage_relative": self.stage_relative,
            "need_reply": self.need_reply,
            "waiting": self.waiting,
            "return_waiting_id": self.return_waiting_id,
            "delivered": self.delivered,
            "category": self.category,
            "exchange_depth": self.exchange_depth,
        }


@dataclass
class AgentStep:
    """Per-agent execution step manager: pending queue plus history."""

    todo: list[StepState] = field(default_factory=list)
    history: list[StepState] = field(default_factory=list)
    current: Optional[StepState] = None

    def release_matching(self, predicate) -> int:
        kept, released = [], []
        for step in self.todo:
            (released if predicate(step) else kept).append(step)
        self.todo = kept
        return len(released)

    def to_dict(self) -> dict[str, Any]:
        return {
            "todo": [s.to_dict() for s in self.todo],
            "history": [s.to_dict() for s in self.history],
            "current": self.current.to_dict() if self.current else None,
        }


@dataclass
class AgentState:
    agent_id: str
    name: str
    role: str
    profile: str = ""
    llm_config_ref: str = "default"
    skill_permissions: set[str] = field(default_factory=set)
    tool_permissions: set[str] = field(default_factory=set)
    persistent_memory: dict[str, str] = field(default_factory=dict)
    step_queue: AgentStep = field(default_factory=AgentStep)
    step_locks: set[str] = field(default_factory=set)
    task_refs: set[str] = field(default_factory=set)
    stage_refs: set[str] = field(default_factory=set)
    working_state: WorkingState = WorkingState.IDLE

    def recompute_working_state(self) -> None:
        if self.step_locks:
            self.working_state = WorkingState.WAITING
        elif self.step_queue.todo or self.step_queue.current is not None:
            self.working_state = WorkingState.WORKING
        else:
            self.working_state = WorkingState.IDLE

    def is_permitted(self, executor: str, step_type: str) -> bool:
        if step_type == "tool":
            return executor in self.tool_permissions
        return executor in self.skill_permissions

    def to_dict(self) -> dict[str, Any]:
        return {
            "agent_id": self.agent_id,
            "name": self.name,
            "role": self.role,
            "profile": self.profile,
            "llm_config_ref": self.llm_config_ref,
            "skill_permissions": sorted(self.skill_permissions),
            "tool_permissions": sorted(self.tool_permissions),
            "persistent_memory": dict(self.persistent_memory),
            "step_queue": self.step_queue.to_dict(),
            "step_locks": sorted(self.step_locks),
            "task_refs": sorted(self.task_refs),
            "stage_refs": sorted(self.stage_refs),
            "working_state": self.working_state.value,
        }


@dataclass
class StageState:
    stage_id: str
    task_id: str
    objective: str
    agent_allocation: dict[str, str] = field(default_factory=dict)
    completion_summaries: dict[str, str] = field(default_factory=dict)
    status: StageStatus = StageStatus.INIT

    def all_agents_reported(self) -> bool:
        return set(self.completion_summaries) >= set(self.agent_allocation)

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage_id": self.stage_id,
            "task_id": self.task_id,
            "objective": self.objective,
            "agent_allocation": dict(self.agent_allocation),
            "completion_summaries": dict(self.completion_summaries),
            "status": self.status.value,
        }


@dataclass
class TaskState:
    task_id: str
    instruction: str
    agent_ids: list[str]
    stage_ids: list[str] = field(default_factory=list)
    current_stage_index: Optional[int] = None
    comm_queue: list[Message] = field(default_factory=list)
    status: TaskStatus = TaskStatus.INIT
    shared_info: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "instruction": self.instruction,
            "agent_ids": list(self.agent_ids),
            "stage_ids": list(self.stage_ids),
            "current_stage_index": self.current_stage_index,
            "comm_queue": [m.to_dict() for m in self.comm_queue],
            "status": self.status.value,
            "shared_info": dict(self.shared_info),
        }


class Registry:
    """In-memory registry of all four state tiers for one runtime."""

    def __init__(self, log: EventLog | None = None, deterministic: bool = True) -> None:
        self.tasks: dict[str, TaskState] = {}
        self.stages: dict[str, StageState] = {}
        self.agents: dict[str, AgentState] = {}
        self.ids = IdGenerator()
        self.clock = LogicalClock(deterministic=deterministic)
        self.log = log if log is not None else EventLog()

    # -- agents -------------------------------------------------------

    def register_agent(self, agent: AgentState) -> None:
        if agent.agent_id in self.agents:
            raise RegistrationError(f"agent {agent.agent_id} already registered")
        if any(a.name == agent.name for a in self.agents.values()):
            raise RegistrationError(f"agent name {agent.name!r} already in use")
        self.agents[agent.agent_id] = agent

    def agent(self, agent_id: str) -> AgentState:
        try:
            return self.agents[agent_id]
        except KeyError:
            raise RegistrationError(f"unknown agent {agent_id}") from None

    def task(self, task_id: str) -> TaskState:
        try:
            return self.tasks[task_id]
        except KeyError:
            raise RegistrationError(f"unknown task {task_id}") from None

    def stage(self, stage_id: str) -> StageState:
        try:
            return self.stages[stage_id]
        except KeyError:
            raise RegistrationError(f"unknown stage {stage_id}") from None

    # -- tasks --------------------------------------------------------

    def new_task(self, instruction: str, agent_ids: list[str]) -> TaskState:
        if not agent_ids:
            raise RegistrationError("task group must have at least one agent")
        if not instruction:
            raise ValidationError("task instruction must not be empty")
        for agent_id in agent_ids:
            self.agent(agent_id)
        task = TaskState(
            task_id=self.ids.next("task"),
            instruction=instruction,
            agent_ids=list(dict.fromkeys(agent_ids)),
        )
        self.tasks[task.task_id] = task
        for agent_id in task.agent_ids:
            self.agents[agent_id].task_refs.add(task.task_id)
        self.log.emit("task_started", task_id=task.task_id, agent_ids=task.agent_ids)
        return task

    def add_stage(
        self, task_id: str, objective: str, agent_allocation: dict[str, str]
    ) -> StageState:
        task = self.task(task_id)
        unknown = [a for a in agent_allocation if a not in task.agent_ids]
        if unknown:
            raise ValidationError(f"allocation names agents outside task group: {unknown}")
        if not agent_allocation:
            raise ValidationError("stage needs at least one allocated agent")
        stage = StageState(
            stage_id=self.ids.next("stage"),
            task_id=task_id,
            objective=objective,
            agent_allocation=dict(agent_allocation),
        )
        self.stages[stage.stage_id] = stage
        task.stage_ids.append(stage.stage_id)
        for agent_id in agent_allocation:
            self.agents[agent_id].stage_refs.add(stage.stage_id)
        self.log.emit("stage_added", task_id=task_id, stage_id=stage.stage_id)
        return stage

    def current_stage(self, task: TaskState) -> Optional[StageState]:
        if task.current_stage_index is None:
            return None
        return self.stages[task.stage_ids[task.current_stage_index]]

    def advance_stage(self, task: TaskState) -> Optional[StageState]:
        """Move the task to its next stage; finish the task when none remain."""
        current = self.current_stage(task)
        if current is not None and current.status not in (
            StageStatus.FINISHED,
            StageStatus.FAILED,
        ):
            raise SequencingError(
                f"stage {current.stage_id} is {current.status.value}, cannot advance"
            )
        if current is not None and current.status is StageStatus.FAILED:
            task.status = TaskStatus.FAILED
            self.log.emit("task_failed", task_id=task.task_id, stage_id=current.stage_id)
            return None
        next_index = 0 if task.current_stage_index is None else task.current_stage_index + 1
        if next_index >= len(task.stage_ids):
            task.status = TaskStatus.FINISHED
            self.log.emit("task_finished", task_id=task.task_id)
            self.clear_task(task.task_id)
            return None
        task.current_stage_index = next_index
        task.status = TaskStatus.RUNNING
        stage = self.stages[task.stage_ids[next_index]]
        stage.status = StageStatus.RUNNING
        self.log.emit("stage_started", task_id=task.task_id, stage_id=stage.stage_id)
        return stage

    def clear_task(self, task_id: str) -> None:
        """Drop the task and its stages; release member agents' queued steps."""
        task = self.task(task_id)
        stage_ids = set(task.stage_ids)
        for agent_id in task.agent_ids:
            agent = self.agents.get(agent_id)
            if agent is None:
                continue
            released = agent.step_queue.release_matching(lambda s: s.task_id == task_id)
            agent.task_refs.discard(task_id)
            agent.stage_refs -= stage_ids
            agent.recompute_working_state()
            if released:
                self.log.emit(
                    "steps_released", agent_id=agent_id, task_id=task_id, count=released
                )
        for stage_id in task.stage_ids:
            self.stages.pop(stage_id, None)
        del self.tasks[task_id]
        self.log.emit("task_cleared", task_id=task_id)

    # -- auditing -----------------------------------------------------

    def check_references(self) -> list[str]:
        """Audit the registry against the cross-reference graph."""
        violations: list[str] = []
        for task in self.tasks.values():
            running = 0
            for stage_id in task.stage_ids:
                stage = self.stages.get(stage_id)
                if stage is None:
                    violations.append(f"task {task.task_id} references missing stage {stage_id}")
                    continue
                if stage.task_id != task.task_id:
                    violations.append(
                        f"stage {stage_id} back-reference {stage.task_id} != {task.task_id}"
                    )
                if stage.status is StageStatus.RUNNING:
                    running += 1
            if running > 1:
                violations.append(f"task {task.task_id} has {running} running stages")
            for agent_id in task.agent_ids:
                agent = self.agents.get(agent_id)
                if agent is None:
                    violations.append(f"task {task.task_id} references missing agent {agent_id}")
                elif task.task_id not in agent.task_refs:
                    violations.append(
                        f"agent {agent_id} missing task_ref for {task.task_id}"
                    )
        for stage in self.stages.values():
            task = self.tasks.get(stage.task_id)
            if task is None:
                violations.append(f"stage {stage.stage_id} references missing task {stage.task_id}")
                continue
            if stage.stage_id not in task.stage_ids:
                violations.append(f"stage {stage.stage_id} absent from task {task.task_id}")
            for agent_id in stage.agent_allocation:
                if agent_id not in task.agent_ids:
                    violations.append(
                        f"stage {stage.stage_id} allocates non-member agent {agent_id}"
                    )
                agent = self.agents.get(agent_id)
                if agent is not None and stage.stage_id not in agent.stage_refs:
                    violations.append(
                        f"agent {agent_id} missing stage_ref for {stage.stage_id}"
                    )
        for agent in self.agents.values():
            for task_id in agent.task_refs:
                if task_id not in self.tasks:
                    violations.append(f"agent {agent.agent_id} has stale task_ref {task_id}")
            allocated = {
                s.stage_id for s in self.stages.values() if agent.agent_id in s.agent_allocation
            }
            if agent.stage_refs != allocated:
                violations.append(
                    f"agent {agent.agent_id} stage_refs {sorted(agent.stage_refs)} "
                    f"!= allocated {sorted(allocated)}"
                )
            queued = list(agent.step_queue.todo)
            if agent.step_queue.current is not None:
                queued.append(agent.step_queue.current)
            for step in queued:
                if step.agent_id != agent.agent_id:
                    violations.append(f"step {step.step_id} queued under wrong agent")
                if step.task_id not in self.tasks:
                    violations.append(
                        f"step {step.step_id} references missing task {step.task_id}"
                    )
                if step.stage_id != NO_STAGE:
                    stage = self.stages.get(step.stage_id)
                    if stage is None:
                        violations.append(
                            f"step {step.step_id} references missing stage {step.stage_id}"
                        )
                    elif stage.task_id != step.task_id:
                        violations.append(
                            f"step {step.step_id} stage {step.stage_id} belongs to foreign task"
                        )
        return violations

    # -- snapshots ----------------------------------------------------

    def snapshot(self) -> dict[str, Any]:
        """Consistent structured view of all four tiers (steps under agents)."""
        return copy.deepcopy(
            {
                "tasks": {t.task_id: t.to_dict() for t in self.tasks.values()},
                "stages": {s.stage_id: s.to_dict() for s in self.stages.values()},
                "agents": {a.agent_id: a.to_dict() for a in self.agents.values()},
            }
        )

    def snapshot_json(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True, indent=2)
