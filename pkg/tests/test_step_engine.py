from stepmas.backend import BackendError, BackendResponse
from stepmas.model import StepStatus
from stepmas.steps import StepDraft, append_steps

from conftest import Harness


def queue_step(harness, agent, executor="quick_think", text="hello", **kwargs):
    task = harness.registry.tasks.get("task-1") or harness.registry.new_task(
        "engine test", [agent.agent_id]
    )
    draft = StepDraft(step_intent="test step", executor=executor, text_content=text, **kwargs)
    append_steps(harness.registry, agent, [draft], task.task_id)
    return agent.step_queue.todo[-1]


class CountingBackend:
    """Fails the first n completions, then returns a fixed reply."""

    def __init__(self, failures, reply="ok"):
        self.failures = failures
        self.reply = reply
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        if self.calls <= self.failures:
            raise BackendError("transient")
        return BackendResponse(self.reply)


def test_idle_on_empty_queue(harness):
    agent = harness.agent("a1")
    report = harness.engine.next_action(agent)
    assert report.status == "idle"


def test_blocked_while_locked(harness):
    agent = harness.agent("a1")
    queue_step(harness, agent)
    agent.step_locks.add("wid-1-a1")
    report = harness.engine.next_action(agent)
    assert report.status == "blocked"
    assert len(agent.step_queue.todo) == 1  # nothing consumed


def test_executes_head_step():
    harness = Harness(default="the answer")
    agent = harness.agent("a1")
    queue_step(harness, agent)
    report = harness.engine.next_action(agent)
    assert report.status == "executed"
    assert report.executor == "quick_think"
    assert report.step_status == "finished"
    done = agent.step_queue.history[-1]
    assert done.status is StepStatus.FINISHED
    assert done.execute_result == "the answer"


def test_permission_denied_fails_step():
    harness = Harness(default="irrelevant")
    agent = harness.agent("a1", skills={"quick_think"})
    # bypass append-side permission check to exercise the engine-side one
    harness.registry.new_task("engine test", ["a1"])
    agent.skill_permissions.add("think")
    queue_step(harness, agent, executor="think")
    agent.skill_permissions.discard("think")
    report = harness.engine.next_action(agent)
    assert report.step_status == "failed"
    assert "permission denied" in agent.step_queue.history[-1].execute_result


def test_unknown_executor_fails():
    harness = Harness(default="irrelevant")
    agent = harness.agent("a1")
    agent.skill_permissions.add("alchemy")
    queue_step(harness, agent, executor="alchemy")
    report = harness.engine.next_action(agent)
    assert report.step_status == "failed"


def test_backend_retry_then_success(harness):
    backend = CountingBackend(failures=2)
    harness.ctx.backend = backend
    agent = harness.agent("a1")
    queue_step(harness, agent)
    report = harness.engine.next_action(agent)
    assert report.step_status == "finished"
    assert backend.calls == 3


def test_backend_exhaustion_fails_step(harness):
    backend = CountingBackend(failures=10)
    harness.ctx.backend = backend
    agent = harness.agent("a1")
    queue_step(harness, agent)
    report = harness.engine.next_action(agent)
    assert report.step_status == "failed"
    assert backend.calls == 3


def test_tool_decision_defaults_to_stop_on_parse_failure():
    # an unparseable tool decision must terminate the loop, not fail
    harness = Harness(default="no control block here")
    agent = harness.agent("a1")
    queue_step(harness, agent, executor="tool_decision", text="result: 42")
    report = harness.engine.next_action(agent)
    assert report.step_status == "finished"
    assert "terminated" in agent.step_queue.history[-1].execute_result
    assert agent.step_queue.todo == []


def test_decision_inserts_before_existing_queue():
    rules = [
        {
            "skill": "decision",
            "match": "react now",
            "reply": '<planned_step>[{"step_intent":"urgent","executor":"quick_think","text_content":"urgent"}]</planned_step>',
        }
    ]
    harness = Harness(rules)
    agent = harness.agent("a1")
    queue_step(harness, agent, executor="decision", text="react now")
    queue_step(harness, agent, executor="quick_think", text="later")
    harness.engine.next_action(agent)
    assert [s.text_content for s in agent.step_queue.todo] == ["urgent", "later"]


def test_memory_ops_applied_only_on_success():
    rules = [
        {
            "skill": "quick_think",
            "match": "remember",
            "reply": '<persistent_memory>[{"add":"a fact"}]</persistent_memory>\nnoted',
        }
    ]
    harness = Harness(rules)
    agent = harness.agent("a1")
    queue_step(harness, agent, text="remember this")
    harness.engine.next_action(agent)
    assert list(agent.persistent_memory.values()) == ["a fact"]


def test_action_event_carries_tick_and_step_type():
    harness = Harness(default="ok")
    agent = harness.agent("a1")
    queue_step(harness, agent)
    harness.engine.tick = 7
    harness.engine.next_action(agent)
    actions = [e for e in harness.log.entries() if e["kind"] == "action"]
    assert actions[-1]["tick"] == 7
    assert actions[-1]["step_type"] == "skill"


def test_failed_step_discards_queue_edits():
    # reflection with no planning step in history fails; nothing is queued
    harness = Harness(default="ok")
    agent = harness.agent("a1")
    queue_step(harness, agent, executor="reflection", text="check done")
    report = harness.engine.next_action(agent)
    assert report.step_status == "failed"
    assert agent.step_queue.todo == []
