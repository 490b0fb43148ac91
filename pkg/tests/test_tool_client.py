import threading
import time

import pytest

from stepmas.model import AgentState
from stepmas.tools import (
    CapabilityExecutionError,
    ParameterError,
    SchedulerDownError,
    ToolClient,
    UnknownCapabilityError,
    UnknownServerError,
    build_calculator_server,
    build_delay_server,
    build_kvstore_server,
)


def make_agent(tools):
    return AgentState(agent_id="a1", name="a1", role="worker", tool_permissions=set(tools))


@pytest.fixture
def client():
    instance = ToolClient(
        {
            "calc": {"transport": "in_process", "server_type": "calculator"},
            "kvstore": {"transport": "in_process", "server_type": "kvstore"},
            "delay": {"transport": "in_process", "server_type": "delay"},
        }
    )
    yield instance
    instance.close()


class TestPermissionsAndSessions:
    def test_permissions_must_be_configured(self, client):
        with pytest.raises(UnknownServerError):
            client.check_permissions({"calc", "ghost"})
        client.check_permissions({"calc"})

    def test_sessions_subset_of_config(self, client):
        client.ensure_sessions(make_agent(["calc"]))
        assert set(client.server_sessions) <= set(client.server_config)
        assert set(client.server_sessions) == {"calc"}

    def test_descriptions_fetched_once(self, client):
        agent = make_agent(["calc"])
        client.ensure_sessions(agent)
        client.ensure_sessions(agent)
        client.list_capabilities("calc")
        assert client.server_sessions["calc"].describe_count == 1

    def test_explicit_instance_config(self):
        server = build_kvstore_server("store")
        client = ToolClient({"store": {"transport": "in_process", "instance": server}})
        try:
            client.ensure_sessions(make_agent(["store"]))
            assert client.server_sessions["store"] is server
        finally:
            client.close()

    def test_non_in_process_transport_skipped(self):
        client = ToolClient({"remote": {"transport": "sse", "url": "http://nowhere"}})
        try:
            connected = client.ensure_sessions(make_agent(["remote"]))
            assert connected == []
        finally:
            client.close()


class TestExecution:
    def test_calculator(self, client):
        client.ensure_sessions(make_agent(["calc"]))
        assert client.execute_capability("calc", "add", {"a": 40, "b": 2}) == 42
        assert client.execute_capability("calc", "sub", {"a": 5, "b": 7}) == -2

    def test_division_by_zero(self, client):
        client.ensure_sessions(make_agent(["calc"]))
        with pytest.raises(CapabilityExecutionError):
            client.execute_capability("calc", "div", {"a": 1, "b": 0})

    def test_missing_parameters(self, client):
        client.ensure_sessions(make_agent(["calc"]))
        with pytest.raises(ParameterError):
            client.execute_capability("calc", "add", {"a": 1})

    def test_unlisted_capability_rejected(self, client):
        client.ensure_sessions(make_agent(["calc"]))
        with pytest.raises(UnknownCapabilityError):
            client.execute_capability("calc", "pow", {"a": 2, "b": 3})

    def test_kvstore_round_trip(self, client):
        client.ensure_sessions(make_agent(["kvstore"]))
        client.execute_capability("kvstore", "put", {"key": "k", "value": [1, 2]})
        assert client.execute_capability("kvstore", "get", {"key": "k"}) == [1, 2]
        with pytest.raises(CapabilityExecutionError):
            client.execute_capability("kvstore", "get", {"key": "missing"})

    def test_submit_after_close(self):
        client = ToolClient({"calc": {"server_type": "calculator"}})
        client.ensure_sessions(make_agent(["calc"]))
        client.close()
        session = build_calculator_server()
        with pytest.raises(SchedulerDownError):
            client.submit(session.call("add", {"a": 1, "b": 2}))


class TestConcurrency:
    def test_two_agents_overlap(self, client):
        client.ensure_sessions(make_agent(["delay"]))
        results = {}

        def call(tag):
            results[tag] = client.execute_capability("delay", "wait", {"ms": 100})

        start = time.monotonic()
        threads = [threading.Thread(target=call, args=(t,)) for t in ("x", "y")]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        elapsed = time.monotonic() - start
        assert elapsed < 0.15, f"calls serialized: {elapsed:.3f}s"
        assert results == {"x": "waited 100ms", "y": "waited 100ms"}

    def test_batch_preserves_input_order(self, client):
        client.ensure_sessions(make_agent(["delay"]))
        session = client.server_sessions["delay"]
        coros = [
            session.call("wait", {"ms": 60}),
            session.call("wait", {"ms": 10}),
            session.call("wait", {"ms": 30}),
        ]
        start = time.monotonic()
        results = client.submit_batch(coros)
        elapsed = time.monotonic() - start
        assert results == ["waited 60ms", "waited 10ms", "waited 30ms"]
        assert elapsed < 0.15  # concurrent, not summed
