"""Relayed point-to-point messaging with wait-lock accounting.

All messages travel through the owning task's communication queue; a
broadcast to k receivers is delivered as k one-to-one deliveries. A
sender that asked for replies holds one wait lock per receiver and stops
executing steps until every correlated return_waiting_id comes back.
"""

from __future__ import annotations

import re
from typing import Optional

from .model import (
    HUMAN_SENDER,
    NO_STAGE,
    AgentState,
    Message,
    PermissionViolation,
    Registry,
    StepState,
    TaskState,
    ValidationError,
)
from .steps import StepDraft, acquire_locks, append_steps, insert_steps, release_lock

DEFAULT_MAX_EXCHANGES = 16

_WAIT_ID_RE = re.compile(r"\[return_waiting_id:\s*([^\]]+)\]")
_DEPTH_RE = re.compile(r"\[exchange_depth:\s*(\d+)\]")


def embed_reply_context(text: str, wait_id: Optional[str], depth: int) -> str:
    """Tack the wait id to echo (and the dialogue depth) onto the end of a
    reply step's text_content."""
    parts = [text]
    if wait_id:
        parts.append(f"[return_waiting_id: {wait_id}]")
    parts.append(f"[exchange_depth: {depth}]")
    return "\n".join(parts)


def extract_reply_context(text: str) -> tuple[Optional[str], int]:
    wait = _WAIT_ID_RE.search(text)
    depth = _DEPTH_RE.search(text)
    return (wait.group(1).strip() if wait else None, int(depth.group(1)) if depth else 0)


def new_message(
    registry: Registry,
    task_id: str,
    sender_id: str,
    receiver_ids: list[str],
    content: str,
    *,
    stage_relative: str = NO_STAGE,
    need_reply: bool = False,
    waiting: Optional[list[str]] = None,
    return_waiting_id: Optional[str] = None,
    category: str = "agent",
    exchange_depth: int = 0,
) -> Message:
    return Message(
        message_id=registry.ids.next("msg"),
        task_id=task_id,
        sender_id=sender_id,
        receiver_ids=list(receiver_ids),
        content=content,
        stage_relative=stage_relative,
        need_reply=need_reply,
        waiting=waiting,
        return_waiting_id=return_waiting_id,
        category=category,
        exchange_depth=exchange_depth,
    )


def enqueue(registry: Registry, message: Message) -> None:
    """Validate and append to the owning task's queue; a waiting sender
    acquires its locks immediately."""
    message.validate()
    task = registry.task(message.task_id)
    if message.sender_id != HUMAN_SENDER and message.sender_id not in task.agent_ids:
        raise ValidationError(
            f"sender {message.sender_id} is not in task group {task.task_id}"
        )
    outside = [r for r in message.receiver_ids if r not in task.agent_ids]
    if outside:
        raise ValidationError(
            f"receivers {outside} are not in task group {task.task_id}"
        )
    task.comm_queue.append(message)
    registry.log.emit("message_enqueued", message=message.to_dict())
    if message.waiting and message.sender_id != HUMAN_SENDER:
        sender = registry.agent(message.sender_id)
        acquire_locks(sender, list(message.waiting), registry.log)


class MessageDispatcher:
    """Periodically drains task communication queues and delivers
    messages to receivers, splitting broadcasts into one-to-one deliveries."""

    def __init__(self, registry: Registry) -> None:
        self.registry = registry
        self._seen: set[tuple[str, str]] = set()

    def dispatch_pending(self, task: TaskState) -> int:
        pending = [m for m in task.comm_queue if not m.delivered]
        for message in pending:
            for receiver_id in message.receiver_ids:
                agent = self.registry.agents.get(receiver_id)
                if agent is None:
                    self.registry.log.emit(
                        "delivery_failed",
                        message_id=message.message_id,
                        receiver_id=receiver_id,
                        reason="receiver not registered",
                    )
                    continue
                try:
                    self.receive(agent, message)
                except PermissionViolation as exc:
                    self.registry.log.emit(
                        "delivery_failed",
                        message_id=message.message_id,
                        receiver_id=receiver_id,
                        reason=str(exc),
                    )
            message.delivered = True
        task.comm_queue = [m for m in task.comm_queue if not m.delivered]
        return len(pending)

    def dispatch_all(self) -> int:
        return sum(self.dispatch_pending(t) for t in list(self.registry.tasks.values()))

    def receive(self, agent: AgentState, message: Message) -> Optional[StepState]:
        """Deliver one message to one receiver: release a correlated wait
        lock, then append the reply/processing step."""
        if agent.agent_id not in message.receiver_ids:
            raise ValidationError(
                f"agent {agent.agent_id} is not a receiver of {message.message_id}"
            )
        key = (agent.agent_id, message.message_id)
        if key in self._seen:
            return None
        self._seen.add(key)

        if message.return_waiting_id:
            release_lock(agent, message.return_waiting_id, self.registry.log)

        registry = self.registry
        if message.category == "tool_result":
            # Long-tail loop: the tool's result re-enters the owning agent
            # as a Tool Decision step at the head of the queue.
            draft = StepDraft(
                step_intent="decide whether to continue the tool call",
                executor="tool_decision",
                text_content=message.content,
                stage_id=message.stage_relative,
            )
            step_ids = insert_steps(registry, agent, [draft], message.task_id)
        elif message.need_reply:
            wait_id = None
            if message.waiting:
                wait_id = message.waiting[message.receiver_ids.index(agent.agent_id)]
            text = embed_reply_context(
                f"Reply to {message.sender_id}. Inbound message:\n{message.content}",
                wait_id,
                message.exchange_depth + 1,
            )
            draft = StepDraft(
                step_intent=f"reply to message from {message.sender_id}",
                executor="send_message",
                text_content=text,
                stage_id=message.stage_relative,
            )
            step_ids = append_steps(registry, agent, [draft], message.task_id)
        else:
            text = f"Message from {message.sender_id}:\n{message.content}"
            draft = StepDraft(
                step_intent=f"process message from {message.sender_id}",
                executor="process_message",
                text_content=text,
                stage_id=message.stage_relative,
            )
            step_ids = append_steps(registry, agent, [draft], message.task_id)

        registry.log.emit(
            "message_delivered",
            message_id=message.message_id,
            task_id=message.task_id,
            sender_id=message.sender_id,
            receiver_id=agent.agent_id,
            need_reply=message.need_reply,
            category=message.category,
            step_id=step_ids[0],
        )
        step = agent.step_queue.todo[0] if message.category == "tool_result" else agent.step_queue.todo[-1]
        return step
