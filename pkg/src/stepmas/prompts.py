"""Prompt assembly for skill executors.

Each skill builds a three-part bundle: role framing, gathered context
(persistent memory plus a window of recent same-stage history), and the
skill directive with its output-format contract. Every directive carries
the persistent-memory management contract so any step can add or delete
memory entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .model import NO_STAGE, AgentState, StepState

HISTORY_WINDOW = 20

MEMORY_CONTRACT = """You may manage your persistent memory in any reply.
Append a new entry:
<persistent_memory>
[{"add":"Persistent memory content to append"}]
</persistent_memory>
Delete an entry by its timestamp key:
<persistent_memory>
[{"delete":"Timestamps for permanent memory deletion"}]
</persistent_memory>"""

DEFAULT_TEMPLATES: dict[str, str] = {
    "planning": (
        "Produce a multi-step execution plan for your sub-goal. Return the steps as\n"
        '<planned_step>[{"step_intent":"...","executor":"...","step_type":"skill","text_content":"..."}]</planned_step>\n'
        "Never plan a summary step; reflection decides when to summarize."
    ),
    "reflection": (
        "Evaluate whether the executed steps meet the objective. Reply with\n"
        '<control>{"verdict":"done"}</control> when the objective is met, or\n'
        '<control>{"verdict":"adjust"}</control> plus a <planned_step> block with corrective steps.'
    ),
    "summary": (
        "Consolidate the stage's executed steps into a completion summary. "
        "Reply with the summary text; it is recorded against the stage, not delivered anywhere."
    ),
    "instruction_generation": (
        "Generate the concrete invocation instruction for the next tool step. Reply with\n"
        '<control>{"action":"list_capabilities"}</control> or\n'
        '<control>{"action":"call","capability":"...","params":{...}}</control>'
    ),
    "think": "Work through the request using the provided history context and reply with your result.",
    "quick_think": "Reply directly to the request; no history context is provided.",
    "send_message": (
        "Decide whether you hold enough information to send this message. If not, reply with\n"
        '<control>{"sufficient":false,"reason":"..."}</control>\n'
        "If sufficient, reply with\n"
        '<control>{"sufficient":true}</control> and\n'
        '<message>{"receiver_ids":["..."],"content":"...","need_reply":false,"waiting":false}</message>'
    ),
    "process_message": (
        "Digest the incoming message. Record important parts in persistent memory. If the message "
        'demands action, reply with <control>{"reaction":true}</control> and describe the needed reaction.'
    ),
    "task_manager": (
        "Manage task progress. Reply with\n"
        '<control>{"commands":[{"kind":"add_stage","objective":"...","agent_allocation":{"agent":"subgoal"}}, '
        '{"kind":"next_stage"}]}</control>\n'
        "Valid kinds: add_stage, next_stage, finish_stage, update_task, finish_task, send_message."
    ),
    "agent_manager": (
        "Direct other agents. Reply with\n"
        '<control>{"commands":[{"kind":"create_agent","config":{...}},'
        '{"kind":"modify_agent","agent_id":"...","changes":{...}}]}</control>'
    ),
    "ask_info": (
        "Request system or task information. Reply with\n"
        '<control>{"query":{"kind":"task|stage|agent_profile","id":"..."}}</control>\n'
        "The answer arrives later as a message."
    ),
    "tool_decision": (
        "The tool result is in your step content. Decide whether to continue the tool call:\n"
        '<control>{"decision":"continue","next_tool":{"server":"...","text":"..."}}</control> or\n'
        '<control>{"decision":"stop"}</control>'
    ),
    "decision": (
        "Plan immediate short-term steps to react to the situation. Return them as a\n"
        "<planned_step> block; they will run before everything already queued."
    ),
}


@dataclass
class PromptBundle:
    system_text: str
    context_text: str
    instruction_text: str


def load_templates(config_dir: str | Path | None) -> dict[str, str]:
    """Defaults, overridden per skill by <skill>.txt files in config_dir."""
    templates = dict(DEFAULT_TEMPLATES)
    if config_dir:
        for path in sorted(Path(config_dir).glob("*.txt")):
            templates[path.stem] = path.read_text()
    return templates


def format_memory(agent: AgentState) -> str:
    if not agent.persistent_memory:
        return "persistent_memory: (empty)"
    lines = [f"  {key}: {value}" for key, value in agent.persistent_memory.items()]
    return "persistent_memory:\n" + "\n".join(lines)


def format_history(agent: AgentState, step: StepState, limit: int = HISTORY_WINDOW) -> str:
    """Recent finished/failed steps, restricted to the step's stage when it
    has one."""
    history = agent.step_queue.history
    if step.stage_id != NO_STAGE:
        history = [h for h in history if h.stage_id == step.stage_id]
    history = history[-limit:]
    if not history:
        return "history: (empty)"
    lines = [
        f"  [{h.executor}] {h.step_intent}: {h.execute_result or '(no result)'}"
        for h in history
    ]
    return "history:\n" + "\n".join(lines)


def build_bundle(
    templates: dict[str, str],
    skill: str,
    agent: AgentState,
    step: StepState,
    *,
    with_history: bool = True,
    extra_context: str = "",
) -> PromptBundle:
    system_text = f"You are {agent.name}, role: {agent.role}. {agent.profile}".strip()
    context_parts = [format_memory(agent)]
    if with_history:
        context_parts.append(format_history(agent, step))
    if extra_context:
        context_parts.append(extra_context)
    instruction_text = "\n\n".join(
        [templates.get(skill, ""), f"Step content:\n{step.text_content}", MEMORY_CONTRACT]
    )
    return PromptBundle(system_text, "\n".join(context_parts), instruction_text)
