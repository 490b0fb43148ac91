import pytest

from stepmas.messaging import (
    MessageDispatcher,
    embed_reply_context,
    enqueue,
    extract_reply_context,
    new_message,
)
from stepmas.model import HUMAN_SENDER, ValidationError

from conftest import make_agent


def setup_task(registry, member_ids):
    for agent_id in member_ids:
        make_agent(registry, agent_id)
    return registry.new_task("shared work", list(member_ids))


class TestReplyContext:
    def test_round_trip(self):
        text = embed_reply_context("reply please", "wid-3-b1", 2)
        assert extract_reply_context(text) == ("wid-3-b1", 2)

    def test_absent_markers(self):
        assert extract_reply_context("plain text") == (None, 0)

    def test_no_wait_id(self):
        text = embed_reply_context("reply please", None, 5)
        assert extract_reply_context(text) == (None, 5)


class TestEnqueue:
    def test_sender_must_be_member(self, registry):
        task = setup_task(registry, ["a1", "b1"])
        make_agent(registry, "outsider")
        msg = new_message(registry, task.task_id, "outsider", ["a1"], "hi")
        with pytest.raises(ValidationError):
            enqueue(registry, msg)

    def test_receivers_must_be_members(self, registry):
        task = setup_task(registry, ["a1", "b1"])
        make_agent(registry, "outsider")
        msg = new_message(registry, task.task_id, "a1", ["outsider"], "hi")
        with pytest.raises(ValidationError):
            enqueue(registry, msg)

    def test_cross_task_rejected(self, registry):
        task_a = setup_task(registry, ["a1", "a2"])
        task_b = setup_task(registry, ["b1", "b2"])
        msg = new_message(registry, task_b.task_id, "a1", ["b1"], "hi")
        with pytest.raises(ValidationError):
            enqueue(registry, msg)
        assert task_a.comm_queue == [] and task_b.comm_queue == []

    def test_human_sender_exempt(self, registry):
        task = setup_task(registry, ["a1"])
        msg = new_message(registry, task.task_id, HUMAN_SENDER, ["a1"], "note")
        enqueue(registry, msg)
        assert len(task.comm_queue) == 1

    def test_waiting_sender_locks_immediately(self, registry):
        task = setup_task(registry, ["a1", "b1"])
        msg = new_message(
            registry,
            task.task_id,
            "a1",
            ["b1"],
            "hi",
            need_reply=True,
            waiting=["wid-1-b1"],
        )
        enqueue(registry, msg)
        assert registry.agents["a1"].step_locks == {"wid-1-b1"}


class TestDispatch:
    def test_need_reply_appends_send_message_step(self, registry):
        task = setup_task(registry, ["a1", "b1"])
        msg = new_message(
            registry,
            task.task_id,
            "a1",
            ["b1"],
            "question?",
            need_reply=True,
            waiting=["wid-1-b1"],
        )
        enqueue(registry, msg)
        MessageDispatcher(registry).dispatch_pending(task)
        queue = registry.agents["b1"].step_queue.todo
        assert [s.executor for s in queue] == ["send_message"]
        wait_id, depth = extract_reply_context(queue[0].text_content)
        assert wait_id == "wid-1-b1"
        assert depth == 1
        assert task.comm_queue == []

    def test_one_way_appends_process_message_step(self, registry):
        task = setup_task(registry, ["a1", "b1"])
        enqueue(registry, new_message(registry, task.task_id, "a1", ["b1"], "fyi"))
        MessageDispatcher(registry).dispatch_pending(task)
        queue = registry.agents["b1"].step_queue.todo
        assert [s.executor for s in queue] == ["process_message"]
        assert "fyi" in queue[0].text_content

    def test_tool_result_inserts_tool_decision_at_head(self, registry):
        task = setup_task(registry, ["a1"])
        from stepmas.steps import StepDraft, append_steps

        append_steps(
            registry,
            registry.agents["a1"],
            [StepDraft(step_intent="later", executor="think")],
            task.task_id,
        )
        enqueue(
            registry,
            new_message(
                registry, task.task_id, "a1", ["a1"], "42", category="tool_result"
            ),
        )
        MessageDispatcher(registry).dispatch_pending(task)
        queue = registry.agents["a1"].step_queue.todo
        assert [s.executor for s in queue] == ["tool_decision", "think"]
        assert queue[0].text_content == "42"

    def test_broadcast_splits_per_receiver(self, registry):
        task = setup_task(registry, ["a1", "b1", "b2", "b3"])
        enqueue(
            registry, new_message(registry, task.task_id, "a1", ["b1", "b2", "b3"], "ping")
        )
        MessageDispatcher(registry).dispatch_pending(task)
        for receiver in ("b1", "b2", "b3"):
            assert len(registry.agents[receiver].step_queue.todo) == 1
        delivered = [e for e in registry.log.entries() if e["kind"] == "message_delivered"]
        assert len(delivered) == 3
        assert {e["receiver_id"] for e in delivered} == {"b1", "b2", "b3"}

    def test_reply_releases_sender_lock(self, registry):
        task = setup_task(registry, ["a1", "b1"])
        enqueue(
            registry,
            new_message(
                registry,
                task.task_id,
                "a1",
                ["b1"],
                "question?",
                need_reply=True,
                waiting=["wid-1-b1"],
            ),
        )
        dispatcher = MessageDispatcher(registry)
        dispatcher.dispatch_pending(task)
        assert registry.agents["a1"].step_locks == {"wid-1-b1"}
        enqueue(
            registry,
            new_message(
                registry,
                task.task_id,
                "b1",
                ["a1"],
                "answer",
                return_waiting_id="wid-1-b1",
            ),
        )
        dispatcher.dispatch_pending(task)
        assert registry.agents["a1"].step_locks == set()
        released = [e for e in registry.log.entries() if e["kind"] == "lock_released"]
        assert len(released) == 1

    def test_unknown_wait_id_is_warned_not_fatal(self, registry):
        task = setup_task(registry, ["a1", "b1"])
        enqueue(
            registry,
            new_message(
                registry, task.task_id, "b1", ["a1"], "late", return_waiting_id="wid-9-b1"
            ),
        )
        MessageDispatcher(registry).dispatch_pending(task)
        ignored = [e for e in registry.log.entries() if e["kind"] == "lock_release_ignored"]
        assert len(ignored) == 1

    def test_duplicate_delivery_idempotent(self, registry):
        task = setup_task(registry, ["a1", "b1"])
        msg = new_message(registry, task.task_id, "a1", ["b1"], "once")
        enqueue(registry, msg)
        dispatcher = MessageDispatcher(registry)
        dispatcher.dispatch_pending(task)
        dispatcher.receive(registry.agents["b1"], msg)
        assert len(registry.agents["b1"].step_queue.todo) == 1

    def test_unpermitted_receiver_logs_delivery_failure(self, registry):
        make_agent(registry, "a1")
        make_agent(registry, "b1", skills={"think"})
        task = registry.new_task("shared work", ["a1", "b1"])
        enqueue(registry, new_message(registry, task.task_id, "a1", ["b1"], "fyi"))
        MessageDispatcher(registry).dispatch_pending(task)
        failed = [e for e in registry.log.entries() if e["kind"] == "delivery_failed"]
        assert len(failed) == 1
        assert registry.agents["b1"].step_queue.todo == []
