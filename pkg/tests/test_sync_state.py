import pytest

from stepmas.model import HUMAN_SENDER, StageStatus, TaskStatus
from stepmas.steps import SyncInstruction

from conftest import Harness


def build(skills=None):
    harness = Harness(default="ok")
    manager = harness.agent("mgr", skills=skills)
    worker = harness.agent("w1")
    task = harness.registry.new_task("sync test", ["mgr", "w1"])
    return harness, manager, worker, task


def apply_one(harness, kind, payload, origin="mgr"):
    results = harness.sync.apply([SyncInstruction(kind, payload)], origin)
    assert len(results) == 1
    return results[0]


class TestValidation:
    def test_unknown_kind_rejected(self):
        harness, *_ = build()
        result = apply_one(harness, "launch_rockets", {})
        assert not result.ok
        assert "unknown sync instruction" in result.detail

    def test_missing_payload_keys(self):
        harness, *_ = build()
        result = apply_one(harness, "add_stage", {"task_id": "task-1"})
        assert not result.ok
        assert "missing payload keys" in result.detail

    def test_rejected_instruction_does_not_block_others(self):
        harness, _, _, task = build()
        results = harness.sync.apply(
            [
                SyncInstruction("bogus", {}),
                SyncInstruction(
                    "add_stage",
                    {"task_id": task.task_id, "objective": "o", "agent_allocation": {"w1": "s"}},
                ),
            ],
            "mgr",
        )
        assert [r.ok for r in results] == [False, True]
        assert len(task.stage_ids) == 1

    def test_task_manager_kinds_gated(self):
        harness, _, _, task = build(skills={"send_message"})
        result = apply_one(
            harness,
            "add_stage",
            {"task_id": task.task_id, "objective": "o", "agent_allocation": {"w1": "s"}},
        )
        assert not result.ok
        assert "task_manager" in result.detail

    def test_agent_manager_kinds_gated(self):
        harness, *_ = build(skills={"task_manager"})
        result = apply_one(harness, "modify_agent", {"agent_id": "w1", "changes": {}})
        assert not result.ok
        assert "agent_manager" in result.detail

    def test_human_origin_bypasses_skill_gates(self):
        harness, _, _, task = build(skills={"send_message"})
        result = apply_one(
            harness,
            "add_stage",
            {"task_id": task.task_id, "objective": "o", "agent_allocation": {"w1": "s"}},
            origin=HUMAN_SENDER,
        )
        assert result.ok


class TestStageFlow:
    def start(self):
        harness, manager, worker, task = build()
        apply_one(
            harness,
            "add_stage",
            {"task_id": task.task_id, "objective": "first", "agent_allocation": {"w1": "sub"}},
        )
        apply_one(harness, "next_stage", {"task_id": task.task_id})
        return harness, worker, task

    def test_next_stage_seeds_planning(self):
        harness, worker, task = self.start()
        stage = harness.registry.current_stage(task)
        assert stage.status is StageStatus.RUNNING
        assert [s.executor for s in worker.step_queue.todo] == ["planning"]
        assert worker.step_queue.todo[0].stage_id == stage.stage_id
        assert "sub" in worker.step_queue.todo[0].text_content

    def test_completion_requires_allocation(self):
        harness, _, task = self.start()
        stage = harness.registry.current_stage(task)
        result = apply_one(
            harness,
            "update_stage_completion",
            {"stage_id": stage.stage_id, "summary": "done"},
            origin="mgr",  # mgr is not allocated to this stage
        )
        assert not result.ok

    def test_finish_requires_all_summaries(self):
        harness, _, task = self.start()
        stage = harness.registry.current_stage(task)
        result = apply_one(harness, "finish_stage", {"stage_id": stage.stage_id}, origin="w1")
        assert not result.ok
        assert "missing completion summaries" in result.detail

    def test_finish_last_stage_finishes_task(self):
        harness, _, task = self.start()
        stage = harness.registry.current_stage(task)
        apply_one(
            harness,
            "update_stage_completion",
            {"stage_id": stage.stage_id, "summary": "done"},
            origin="w1",
        )
        result = apply_one(harness, "finish_stage", {"stage_id": stage.stage_id}, origin="w1")
        assert result.ok
        assert task.task_id not in harness.registry.tasks
        kinds = [e["kind"] for e in harness.log.entries()]
        assert "stage_finished" in kinds
        assert "task_finished" in kinds
        assert "task_cleared" in kinds

    def test_finish_stage_advances_and_seeds_next(self):
        harness, worker, task = self.start()
        apply_one(
            harness,
            "add_stage",
            {"task_id": task.task_id, "objective": "second", "agent_allocation": {"w1": "more"}},
        )
        first = harness.registry.current_stage(task)
        apply_one(
            harness,
            "update_stage_completion",
            {"stage_id": first.stage_id, "summary": "done"},
            origin="w1",
        )
        apply_one(harness, "finish_stage", {"stage_id": first.stage_id}, origin="w1")
        second = harness.registry.current_stage(task)
        assert second.objective == "second"
        assert second.status is StageStatus.RUNNING
        planning = [s for s in worker.step_queue.todo if s.executor == "planning"]
        assert any(s.stage_id == second.stage_id for s in planning)

    def test_finish_stage_releases_stale_stage_steps(self):
        harness, worker, task = self.start()
        stage = harness.registry.current_stage(task)
        assert len(worker.step_queue.todo) == 1  # the seeded planning step
        apply_one(
            harness,
            "update_stage_completion",
            {"stage_id": stage.stage_id, "summary": "done"},
            origin="w1",
        )
        apply_one(harness, "finish_stage", {"stage_id": stage.stage_id}, origin="w1")
        assert worker.step_queue.todo == []

    def test_finish_task_rejected_while_stage_running(self):
        harness, _, task = self.start()
        result = apply_one(harness, "finish_task", {"task_id": task.task_id})
        assert not result.ok
        assert "running stage" in result.detail


class TestAgentManagement:
    def test_modify_agent(self):
        harness, _, worker, _ = build()
        result = apply_one(
            harness,
            "modify_agent",
            {
                "agent_id": "w1",
                "changes": {"profile": "careful", "add_skills": ["extra"], "remove_skills": ["think"]},
            },
        )
        assert result.ok
        assert worker.profile == "careful"
        assert "extra" in worker.skill_permissions
        assert "think" not in worker.skill_permissions

    def test_modify_agent_requires_recognized_change(self):
        harness, *_ = build()
        result = apply_one(harness, "modify_agent", {"agent_id": "w1", "changes": {"x": 1}})
        assert not result.ok

    def test_create_agent_without_hook_rejected(self):
        harness, *_ = build()
        result = apply_one(harness, "create_agent", {"config": {"name": "n", "role": "r"}})
        assert not result.ok


class TestQueries:
    def test_query_info_replies_by_message(self):
        harness, manager, _, task = build()
        result = apply_one(
            harness, "query_info", {"task_id": task.task_id, "query": {"kind": "task", "id": task.task_id}}
        )
        assert result.ok
        harness.dispatcher.dispatch_all()
        todo = manager.step_queue.todo
        assert [s.executor for s in todo] == ["process_message"]
        assert "status=init" in todo[0].text_content

    def test_unknown_query_kind_answered_with_error_text(self):
        harness, manager, _, task = build()
        apply_one(
            harness, "query_info", {"task_id": task.task_id, "query": {"kind": "weather"}}
        )
        harness.dispatcher.dispatch_all()
        assert "query error" in manager.step_queue.todo[0].text_content


class TestSharedInfo:
    def test_update_task_merges(self):
        harness, _, _, task = build()
        apply_one(harness, "update_task", {"task_id": task.task_id, "shared_info": {"k": "v"}})
        apply_one(harness, "update_task", {"task_id": task.task_id, "shared_info": {"k2": "v2"}})
        assert task.shared_info == {"k": "v", "k2": "v2"}
