import json

from click.testing import CliRunner

from stepmas.cli import main
from stepmas.scenario import bundled_scenario_path, load_scenario


def invoke(*args):
    return CliRunner().invoke(main, list(args))


class TestRun:
    def test_bundled_scenario(self, tmp_path):
        log_path = tmp_path / "run.jsonl"
        result = invoke("run", "one_way_note", "--log", str(log_path))
        assert result.exit_code == 0, result.output
        assert "[PASS] all tasks finished" in result.output
        entries = [json.loads(l) for l in log_path.read_text().splitlines()]
        assert entries[0]["seq"] == 0

    def test_scenario_file_path(self, tmp_path):
        spec = load_scenario(bundled_scenario_path("one_way_note"))
        path = tmp_path / "copy.json"
        path.write_text(json.dumps(spec))
        result = invoke("run", str(path))
        assert result.exit_code == 0, result.output

    def test_unknown_scenario_exits_2(self):
        result = invoke("run", "no_such_scenario")
        assert result.exit_code == 2
        assert "bundled:" in result.output

    def test_unparseable_file_exits_2(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("- not\n- a mapping\n")
        assert invoke("run", str(path)).exit_code == 2

    def test_failed_assertion_exits_1(self, tmp_path):
        spec = load_scenario(bundled_scenario_path("one_way_note"))
        spec["assertions"] = [{"kind": "min_events", "event_kind": "tool_call", "count": 99}]
        path = tmp_path / "failing.json"
        path.write_text(json.dumps(spec))
        result = invoke("run", str(path))
        assert result.exit_code == 1
        assert "[FAIL]" in result.output

    def test_ticks_override(self, tmp_path):
        result = invoke("run", "two_agent_handoff", "--ticks", "2")
        assert result.exit_code == 1  # budget too small, assertions fail


class TestInspect:
    def make_log(self, tmp_path):
        log_path = tmp_path / "run.jsonl"
        assert invoke("run", "two_agent_handoff", "--log", str(log_path)).exit_code == 0
        return log_path

    def test_listing(self, tmp_path):
        log_path = self.make_log(tmp_path)
        result = invoke("inspect", str(log_path))
        assert result.exit_code == 0
        assert "task_started" in result.output

    def test_agent_filter(self, tmp_path):
        log_path = self.make_log(tmp_path)
        result = invoke("inspect", str(log_path), "--agent", "worker2")
        assert result.exit_code == 0
        assert "worker2" in result.output
        assert "agent_id=worker1" not in result.output

    def test_stats_writes_csv_and_figures(self, tmp_path):
        log_path = self.make_log(tmp_path)
        out_dir = tmp_path / "report"
        result = invoke("inspect", str(log_path), "--stats", "--out", str(out_dir))
        assert result.exit_code == 0
        names = sorted(p.name for p in out_dir.iterdir())
        assert names == ["actions_per_tick.png", "executor_counts.png", "stats.csv"]
        header = (out_dir / "stats.csv").read_text().splitlines()[0]
        assert header == "section,key,value"
        # PNG magic bytes
        assert (out_dir / "executor_counts.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
