"""Per-agent action loop.

One action = take the head pending step, route it to its executor, apply
the executor's output (queue edits, memory ops), then invoke the sync
facade exactly once. A locked agent performs no action; an empty queue is
an idle no-op.
"""

from __future__ import annotations

import logging
from typing import Optional

from .backend import BackendError
from .model import (
    AgentState,
    PermissionViolation,
    Registry,
    StepState,
    StepStatus,
)
from .skills import SKILLS, SkillContext, SkillParseError
from .steps import (
    ActionReport,
    ExecutorOutput,
    append_steps,
    apply_memory_ops,
    insert_steps,
)
from .sync import SyncState
from .tools import ToolClient, run_tool_step

logger = logging.getLogger(__name__)

BACKEND_ATTEMPTS = 3  # initial call + 2 retries on parse/backend failure


class StepEngine:
    def __init__(
        self,
        registry: Registry,
        sync: SyncState,
        skill_ctx: SkillContext,
        tool_client: Optional[ToolClient] = None,
        deterministic: bool = True,
    ) -> None:
        self.registry = registry
        self.sync = sync
        self.skill_ctx = skill_ctx
        self.tool_client = tool_client
        self.deterministic = deterministic
        self.tick = 0

    def next_action(self, agent: AgentState) -> ActionReport:
        if agent.step_locks:
            return ActionReport(status="blocked", agent_id=agent.agent_id)
        queue = agent.step_queue
        if not queue.todo:
            return ActionReport(status="idle", agent_id=agent.agent_id)

        step = queue.todo.pop(0)
        queue.current = step
        step.advance(StepStatus.PENDING)
        step.advance(StepStatus.RUNNING)
        agent.recompute_working_state()

        output = self._execute(step, agent)

        step.execute_result = output.result_text
        step.advance(StepStatus.FAILED if output.failed else StepStatus.FINISHED)
        queue.history.append(step)
        queue.current = None

        if not output.failed:
            try:
                if output.append_steps:
                    append_steps(
                        self.registry, agent, output.append_steps, step.task_id, step.stage_id
                    )
                if output.insert_steps:
                    insert_steps(
                        self.registry, agent, output.insert_steps, step.task_id, step.stage_id
                    )
            except PermissionViolation as exc:
                self.registry.log.emit(
                    "draft_batch_rejected", agent_id=agent.agent_id, step_id=step.step_id,
                    reason=str(exc),
                )
            apply_memory_ops(self.registry, agent, output.memory_ops)
        agent.recompute_working_state()

        # The sync facade is invoked exactly once, at action end.
        self.sync.apply(output.sync_instructions, agent.agent_id)

        report = ActionReport(
            status="executed",
            agent_id=agent.agent_id,
            step_id=step.step_id,
            executor=step.executor,
            step_type=step.step_type,
            step_status=step.status.value,
            sync_instruction_kinds=[i.kind for i in output.sync_instructions],
        )
        self.registry.log.emit("action", tick=self.tick, **report.to_dict())
        return report

    def _execute(self, step: StepState, agent: AgentState) -> ExecutorOutput:
        if not agent.is_permitted(step.executor, step.step_type):
            return ExecutorOutput(
                result_text=(
                    f"permission denied: executor {step.executor!r} is not in "
                    f"agent {agent.agent_id}'s {step.step_type} permissions"
                ),
                failed=True,
            )
        if step.step_type == "tool":
            if self.tool_client is None:
                return ExecutorOutput(result_text="no tool client configured", failed=True)
            return run_tool_step(
                step, agent, self.tool_client, self.registry, self.deterministic
            )
        skill_fn = SKILLS.get(step.executor)
        if skill_fn is None:
            return ExecutorOutput(
                result_text=f"unknown executor {step.executor!r}", failed=True
            )
        last_error = ""
        for attempt in range(BACKEND_ATTEMPTS):
            try:
                return skill_fn(step, agent, self.skill_ctx)
            except (SkillParseError, BackendError) as exc:
                last_error = str(exc)
                logger.debug(
                    "skill %s attempt %d failed: %s", step.executor, attempt + 1, exc
                )
        if step.executor == "tool_decision":
            # Ambiguous tool decisions default to stopping the loop.
            return ExecutorOutput(result_text=f"tool call terminated (default: {last_error})")
        return ExecutorOutput(
            result_text=f"executor {step.executor} failed after {BACKEND_ATTEMPTS} attempts: {last_error}",
            failed=True,
        )
