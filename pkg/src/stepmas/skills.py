"""The LLM-driven skill executors.

Each skill assembles a prompt bundle, calls the backend, parses the
tagged structured blocks out of the reply, and returns an ExecutorOutput
describing queue edits, memory operations, and sync instructions. Skills
are stateless: everything flows in through parameters and out through
the returned output.

Reply grammar (all blocks optional unless a skill requires one):
  <planned_step>[{...step drafts...}]</planned_step>
  <persistent_memory>[{"add":...}|{"delete":...}]</persistent_memory>
  <message>{...preliminary message...}</message>
  <control>{...skill-specific fields...}</control>
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .backend import BackendRequest
from .events import EventLog
from .messaging import extract_reply_context
from .model import NO_STAGE, AgentState, Registry, StepState
from .prompts import PromptBundle, build_bundle
from .steps import ExecutorOutput, StepDraft, SyncInstruction


class SkillParseError(Exception):
    """Raised when the backend reply lacks a structure the skill requires;
    the engine retries the backend call before failing the step."""


_BLOCK_RES: dict[str, re.Pattern[str]] = {}


def extract_block(text: str, tag: str) -> Optional[str]:
    pattern = _BLOCK_RES.get(tag)
    if pattern is None:
        pattern = re.compile(rf"<{tag}>(.*?)</{tag}>", re.DOTALL)
        _BLOCK_RES[tag] = pattern
    match = pattern.search(text)
    return match.group(1).strip() if match else None


def strip_blocks(text: str) -> str:
    return re.sub(r"<(\w+)>.*?</\1>", "", text, flags=re.DOTALL).strip()


def parse_memory_ops(text: str, log: Optional[EventLog] = None) -> list[dict[str, str]]:
    """Extract persistent-memory commands. A malformed block yields an
    empty list plus a warning; it never fails the step."""
    block = extract_block(text, "persistent_memory")
    if block is None:
        return []
    try:
        ops = json.loads(block)
        if not isinstance(ops, list):
            raise ValueError("expected a JSON array")
        for op in ops:
            if not isinstance(op, dict) or not ({"add", "delete"} & set(op)):
                raise ValueError(f"unrecognized memory op {op!r}")
    except (json.JSONDecodeError, ValueError) as exc:
        if log is not None:
            log.emit("memory_parse_warning", detail=str(exc))
        return []
    return ops


def parse_planned_steps(text: str) -> list[StepDraft]:
    block = extract_block(text, "planned_step")
    if block is None:
        return []
    try:
        raw = json.loads(block)
        if not isinstance(raw, list):
            raise ValueError("expected a JSON array")
    except (json.JSONDecodeError, ValueError) as exc:
        raise SkillParseError(f"bad planned_step block: {exc}") from exc
    drafts = []
    for item in raw:
        try:
            drafts.append(
                StepDraft(
                    step_intent=item["step_intent"],
                    executor=item["executor"],
                    step_type=item.get("step_type", "skill"),
                    text_content=item.get("text_content", ""),
                    stage_id=item.get("stage_id"),
                    instruction_content=item.get("instruction_content"),
                )
            )
        except KeyError as exc:
            raise SkillParseError(f"planned step missing key {exc}") from exc
    return drafts


def parse_control(text: str, required: bool = False) -> dict[str, Any]:
    block = extract_block(text, "control")
    if block is None:
        if required:
            raise SkillParseError("missing <control> block")
        return {}
    try:
        control = json.loads(block)
        if not isinstance(control, dict):
            raise ValueError("expected a JSON object")
    except (json.JSONDecodeError, ValueError) as exc:
        raise SkillParseError(f"bad control block: {exc}") from exc
    return control


def parse_message_draft(text: str) -> Optional[dict[str, Any]]:
    block = extract_block(text, "message")
    if block is None:
        return None
    try:
        draft = json.loads(block)
        if not isinstance(draft, dict):
            raise ValueError("expected a JSON object")
    except (json.JSONDecodeError, ValueError) as exc:
        raise SkillParseError(f"bad message block: {exc}") from exc
    return draft


@dataclass
class SkillContext:
    """Everything a skill may read; mutation happens only via the
    returned ExecutorOutput."""

    registry: Registry
    backend: Any  # anything with .complete(BackendRequest) -> BackendResponse
    templates: dict[str, str]
    max_exchanges: int = 16

    def complete(self, skill: str, agent: AgentState, bundle: PromptBundle) -> str:
        request = BackendRequest(
            system_text=bundle.system_text,
            context_text=bundle.context_text,
            instruction_text=bundle.instruction_text,
            agent_id=agent.agent_id,
            skill_name=skill,
        )
        return self.backend.complete(request).text


SkillFn = Callable[[StepState, AgentState, SkillContext], ExecutorOutput]


def _base_output(ctx: SkillContext, reply: str) -> ExecutorOutput:
    return ExecutorOutput(
        result_text=strip_blocks(reply) or reply,
        memory_ops=parse_memory_ops(reply, ctx.registry.log),
    )


# -- planning family -----------------------------------------------------


def planning(step: StepState, agent: AgentState, ctx: SkillContext) -> ExecutorOutput:
    bundle = build_bundle(ctx.templates, "planning", agent, step)
    reply = ctx.complete("planning", agent, bundle)
    drafts = parse_planned_steps(reply)
    kept = [d for d in drafts if d.executor != "summary"]
    if len(kept) != len(drafts):
        ctx.registry.log.emit(
            "plan_summary_stripped", agent_id=agent.agent_id, step_id=step.step_id
        )
    output = _base_output(ctx, reply)
    output.append_steps = kept
    if not output.result_text:
        output.result_text = f"planned {len(kept)} steps"
    return output


def reflection(step: StepState, agent: AgentState, ctx: SkillContext) -> ExecutorOutput:
    # Stage objective comes from the stage's planning step, not StageState.
    planning_steps = [
        h
        for h in agent.step_queue.history
        if h.executor == "planning" and h.stage_id == step.stage_id
    ]
    if not planning_steps:
        return ExecutorOutput(
            result_text=f"no planning step found in history for stage {step.stage_id}",
            failed=True,
        )
    objective = planning_steps[-1].text_content
    bundle = build_bundle(
        ctx.templates,
        "reflection",
        agent,
        step,
        extra_context=f"objective (from planning step):\n{objective}",
    )
    reply = ctx.complete("reflection", agent, bundle)
    control = parse_control(reply, required=True)
    verdict = control.get("verdict")
    output = _base_output(ctx, reply)
    if verdict == "done":
        output.append_steps = [
            StepDraft(
                step_intent=f"summarize stage {step.stage_id}",
                executor="summary",
                text_content=objective,
            )
        ]
        output.result_text = output.result_text or "objective met; summarizing"
    elif verdict == "adjust":
        output.append_steps = parse_planned_steps(reply)
        output.result_text = output.result_text or (
            f"adjusting plan with {len(output.append_steps)} steps"
        )
    else:
        raise SkillParseError(f"reflection verdict must be done/adjust, got {verdict!r}")
    return output


def summary(step: StepState, agent: AgentState, ctx: SkillContext) -> ExecutorOutput:
    if step.stage_id == NO_STAGE:
        return ExecutorOutput(result_text="summary step requires a stage", failed=True)
    stage = ctx.registry.stage(step.stage_id)
    bundle = build_bundle(ctx.templates, "summary", agent, step)
    reply = ctx.complete("summary", agent, bundle)
    output = _base_output(ctx, reply)
    text = output.result_text or f"stage {step.stage_id} work completed"
    output.result_text = text
    output.sync_instructions = [
        SyncInstruction(
            "update_stage_completion", {"stage_id": step.stage_id, "summary": text}
        )
    ]
    reported_after = set(stage.completion_summaries) | {agent.agent_id}
    if reported_after >= set(stage.agent_allocation):
        output.sync_instructions.append(
            SyncInstruction("finish_stage", {"stage_id": step.stage_id})
        )
    return output


def instruction_generation(
    step: StepState, agent: AgentState, ctx: SkillContext
) -> ExecutorOutput:
    todo = agent.step_queue.todo
    if not todo or todo[0].step_type != "tool":
        return ExecutorOutput(
            result_text="instruction generation requires the next step to be a tool step",
            failed=True,
        )
    tool_step = todo[0]
    bundle = build_bundle(
        ctx.templates,
        "instruction_generation",
        agent,
        step,
        extra_context=(
            f"next tool step: server={tool_step.executor}\n"
            f"tool step content:\n{tool_step.text_content}"
        ),
    )
    reply = ctx.complete("instruction_generation", agent, bundle)
    control = parse_control(reply, required=True)
    if control.get("action") not in ("list_capabilities", "call"):
        raise SkillParseError(f"unusable tool instruction {control!r}")
    tool_step.instruction_content = control
    output = _base_output(ctx, reply)
    output.result_text = f"instruction written to {tool_step.step_id}: {json.dumps(control, sort_keys=True)}"
    return output


# -- thinking ------------------------------------------------------------


def _think(with_history: bool) -> SkillFn:
    skill = "think" if with_history else "quick_think"

    def run(step: StepState, agent: AgentState, ctx: SkillContext) -> ExecutorOutput:
        bundle = build_bundle(ctx.templates, skill, agent, step, with_history=with_history)
        reply = ctx.complete(skill, agent, bundle)
        return _base_output(ctx, reply)

    return run


think = _think(with_history=True)
quick_think = _think(with_history=False)


# -- messaging -----------------------------------------------------------


def send_message(step: StepState, agent: AgentState, ctx: SkillContext) -> ExecutorOutput:
    bundle = build_bundle(ctx.templates, "send_message", agent, step)
    reply = ctx.complete("send_message", agent, bundle)
    control = parse_control(reply, required=True)
    output = _base_output(ctx, reply)

    if not control.get("sufficient", True):
        # Information Retrieval Branch: gather first, then retry this send.
        retry = StepDraft(
            step_intent=step.step_intent,
            executor="send_message",
            text_content=step.text_content,
        )
        gather = StepDraft(
            step_intent="gather information needed before sending",
            executor="decision",
            text_content=control.get("reason", "missing information for pending message"),
        )
        output.insert_steps = [gather, retry]
        output.result_text = "insufficient information; inserted decision step and re-queued send"
        return output

    draft = parse_message_draft(reply)
    if draft is None:
        raise SkillParseError("sufficient send_message reply must carry a <message> block")
    receiver_ids = list(draft.get("receiver_ids", []))
    if not receiver_ids:
        raise SkillParseError("message draft names no receivers")
    task = ctx.registry.task(step.task_id)
    outside = [r for r in receiver_ids if r not in task.agent_ids]
    if outside:
        return ExecutorOutput(
            result_text=f"protocol error: receivers {outside} are outside task {task.task_id}",
            failed=True,
        )

    return_wait_id, depth = extract_reply_context(step.text_content)
    need_reply = bool(draft.get("need_reply", False))
    wants_waiting = bool(draft.get("waiting", False))
    if depth >= ctx.max_exchanges and need_reply:
        ctx.registry.log.emit(
            "exchange_depth_capped", agent_id=agent.agent_id, depth=depth
        )
        need_reply = False
        wants_waiting = False
    waiting_ids = None
    if need_reply and wants_waiting:
        waiting_ids = [ctx.registry.ids.next_wait_id(r) for r in receiver_ids]

    message_body = {
        "receiver_ids": receiver_ids,
        "content": draft.get("content", ""),
        "stage_relative": draft.get("stage_relative", step.stage_id),
        "need_reply": need_reply,
        "waiting": waiting_ids,
        "return_waiting_id": return_wait_id,
        "exchange_depth": depth,
    }
    output.sync_instructions = [
        SyncInstruction("send_message", {"task_id": step.task_id, "message": message_body})
    ]
    output.result_text = (
        f"message to {','.join(receiver_ids)} "
        f"(need_reply={need_reply}, waiting={bool(waiting_ids)})"
    )
    return output


def process_message(step: StepState, agent: AgentState, ctx: SkillContext) -> ExecutorOutput:
    bundle = build_bundle(ctx.templates, "process_message", agent, step)
    reply = ctx.complete("process_message", agent, bundle)
    control = parse_control(reply)
    output = _base_output(ctx, reply)
    if control.get("reaction"):
        output.insert_steps = [
            StepDraft(
                step_intent="react to processed message",
                executor="decision",
                text_content=output.result_text or step.text_content,
            )
        ]
    if not output.result_text:
        output.result_text = "message processed"
    return output


# -- management ----------------------------------------------------------

_TASK_COMMAND_KINDS = {
    "add_stage",
    "finish_stage",
    "next_stage",
    "update_task",
    "finish_task",
    "send_message",
}


def task_manager(step: StepState, agent: AgentState, ctx: SkillContext) -> ExecutorOutput:
    bundle = build_bundle(ctx.templates, "task_manager", agent, step)
    reply = ctx.complete("task_manager", agent, bundle)
    control = parse_control(reply, required=True)
    commands = control.get("commands")
    if not isinstance(commands, list):
        raise SkillParseError("task_manager control must carry a commands list")
    instructions = []
    for command in commands:
        kind = command.get("kind")
        if kind not in _TASK_COMMAND_KINDS:
            raise SkillParseError(f"task_manager cannot issue {kind!r}")
        payload = {k: v for k, v in command.items() if k != "kind"}
        payload.setdefault("task_id", step.task_id)
        instructions.append(SyncInstruction(kind, payload))
    output = _base_output(ctx, reply)
    output.sync_instructions = instructions
    output.result_text = output.result_text or f"issued {len(instructions)} task commands"
    return output


def agent_manager(step: StepState, agent: AgentState, ctx: SkillContext) -> ExecutorOutput:
    bundle = build_bundle(ctx.templates, "agent_manager", agent, step)
    reply = ctx.complete("agent_manager", agent, bundle)
    control = parse_control(reply, required=True)
    commands = control.get("commands")
    if not isinstance(commands, list):
        raise SkillParseError("agent_manager control must carry a commands list")
    instructions = []
    for command in commands:
        kind = command.get("kind")
        if kind not in ("create_agent", "modify_agent"):
            raise SkillParseError(f"agent_manager cannot issue {kind!r}")
        payload = {k: v for k, v in command.items() if k != "kind"}
        instructions.append(SyncInstruction(kind, payload))
    output = _base_output(ctx, reply)
    output.sync_instructions = instructions
    output.result_text = output.result_text or f"issued {len(instructions)} agent commands"
    return output


def ask_info(step: StepState, agent: AgentState, ctx: SkillContext) -> ExecutorOutput:
    bundle = build_bundle(ctx.templates, "ask_info", agent, step)
    reply = ctx.complete("ask_info", agent, bundle)
    control = parse_control(reply, required=True)
    query = control.get("query")
    if not isinstance(query, dict):
        raise SkillParseError("ask_info control must carry a query object")
    output = _base_output(ctx, reply)
    output.sync_instructions = [
        SyncInstruction("query_info", {"task_id": step.task_id, "query": query})
    ]
    output.result_text = output.result_text or f"queried {query.get('kind')}"
    return output


# -- tool loop -----------------------------------------------------------

_CAPS_MARKER = "capabilities_list_description:"


def tool_decision(step: StepState, agent: AgentState, ctx: SkillContext) -> ExecutorOutput:
    bundle = build_bundle(ctx.templates, "tool_decision", agent, step)
    reply = ctx.complete("tool_decision", agent, bundle)
    control = parse_control(reply, required=True)
    decision = control.get("decision")
    output = _base_output(ctx, reply)
    if decision == "stop":
        output.result_text = output.result_text or "tool call terminated"
        return output
    if decision != "continue":
        raise SkillParseError(f"tool decision must be continue/stop, got {decision!r}")
    next_tool = control.get("next_tool") or {}
    server = next_tool.get("server")
    if not server:
        raise SkillParseError("continue decision must name next_tool.server")
    tool_text = next_tool.get("text", "")
    ig_text = f"Generate the invocation for the next tool step.\n{tool_text}"
    if _CAPS_MARKER in step.text_content:
        # Forward the capability description verbatim into the next
        # instruction-generation step.
        caps = step.text_content[step.text_content.index(_CAPS_MARKER):]
        ig_text = f"{ig_text}\n{caps}"
    output.append_steps = [
        StepDraft(
            step_intent="generate next tool instruction",
            executor="instruction_generation",
            text_content=ig_text,
        ),
        StepDraft(
            step_intent=f"execute tool on {server}",
            executor=server,
            step_type="tool",
            text_content=tool_text,
        ),
    ]
    output.result_text = output.result_text or f"continuing tool call on {server}"
    return output


def decision(step: StepState, agent: AgentState, ctx: SkillContext) -> ExecutorOutput:
    bundle = build_bundle(ctx.templates, "decision", agent, step)
    reply = ctx.complete("decision", agent, bundle)
    output = _base_output(ctx, reply)
    output.insert_steps = parse_planned_steps(reply)
    if not output.result_text:
        output.result_text = f"inserted {len(output.insert_steps)} immediate steps"
    return output


SKILLS: dict[str, SkillFn] = {
    "planning": planning,
    "reflection": reflection,
    "summary": summary,
    "instruction_generation": instruction_generation,
    "think": think,
    "quick_think": quick_think,
    "send_message": send_message,
    "process_message": process_message,
    "task_manager": task_manager,
    "agent_manager": agent_manager,
    "ask_info": ask_info,
    "tool_decision": tool_decision,
    "decision": decision,
}
