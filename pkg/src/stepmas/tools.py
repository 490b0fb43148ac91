"""Layered tool-protocol client and the tool step executor.

The client keeps three of the four permission/connection layers: server
configs, live sessions, and cached capability descriptions (the fourth
layer, per-agent tool permissions, lives in AgentState). One client
instance serves the whole runtime: every call goes through a synchronous
submit facade backed by a dedicated event-loop thread, so a blocking
agent never stalls the rest of the system and calls from different
agents interleave.
"""

from __future__ import annotations

import asyncio
import json
import threading
import time
from typing import Any, Awaitable, Callable, Optional

from .model import AgentState, Registry, StepState
from .steps import ExecutorOutput, SyncInstruction


class ToolError(Exception):
    pass


class UnknownServerError(ToolError):
    pass


class UnknownCapabilityError(ToolError):
    pass


class ParameterError(ToolError):
    pass


class CapabilityExecutionError(ToolError):
    pass


class SchedulerDownError(ToolError):
    pass


# -- in-process mock servers ---------------------------------------------


class InProcessServer:
    """A capability server living in-process, speaking the same
    {name, description, input_schema} wire shape as remote servers."""

    def __init__(self, name: str) -> None:
        self.name = name
        self.describe_count = 0
        self._capabilities: dict[str, dict[str, Any]] = {}

    def add_capability(
        self,
        name: str,
        description: str,
        input_schema: dict[str, Any],
        handler: Callable[..., Awaitable[Any]],
    ) -> None:
        self._capabilities[name] = {
            "name": name,
            "description": description,
            "input_schema": input_schema,
            "handler": handler,
        }

    async def describe(self) -> list[dict[str, Any]]:
        self.describe_count += 1
        return [
            {k: v for k, v in cap.items() if k != "handler"}
            for cap in self._capabilities.values()
        ]

    async def call(self, capability: str, params: dict[str, Any]) -> Any:
        if capability not in self._capabilities:
            raise UnknownCapabilityError(f"{self.name} has no capability {capability!r}")
        cap = self._capabilities[capability]
        required = cap["input_schema"].get("required", [])
        missing = [k for k in required if k not in params]
        if missing:
            raise ParameterError(f"{self.name}.{capability}: missing parameters {missing}")
        return await cap["handler"](**params)


def _num_schema(*names: str) -> dict[str, Any]:
    return {
        "type": "object",
        "properties": {n: {"type": "number"} for n in names},
        "required": list(names),
    }


def build_calculator_server(name: str = "calc") -> InProcessServer:
    server = InProcessServer(name)

    async def add(a: float, b: float) -> float:
        return a + b

    async def sub(a: float, b: float) -> float:
        return a - b

    async def div(a: float, b: float) -> float:
        if b == 0:
            raise CapabilityExecutionError("division by zero")
        return a / b

    server.add_capability("add", "Add two numbers", _num_schema("a", "b"), add)
    server.add_capability("sub", "Subtract b from a", _num_schema("a", "b"), sub)
    server.add_capability("div", "Divide a by b", _num_schema("a", "b"), div)
    return server


def build_kvstore_server(name: str = "kvstore") -> InProcessServer:
    server = InProcessServer(name)
    store: dict[str, Any] = {}

    async def put(key: str, value: Any) -> str:
        store[key] = value
        return f"stored {key}"

    async def get(key: str) -> Any:
        if key not in store:
            raise CapabilityExecutionError(f"no value for key {key!r}")
        return store[key]

    server.add_capability(
        "put",
        "Store a value under a key",
        {
            "type": "object",
            "properties": {"key": {"type": "string"}, "value": {}},
            "required": ["key", "value"],
        },
        put,
    )
    server.add_capability(
        "get",
        "Fetch the value stored under a key",
        {"type": "object", "properties": {"key": {"type": "string"}}, "required": ["key"]},
        get,
    )
    return server


def build_delay_server(name: str = "delay") -> InProcessServer:
    server = InProcessServer(name)

    async def wait(ms: float) -> str:
        await asyncio.sleep(ms / 1000.0)
        return f"waited {ms}ms"

    server.add_capability("wait", "Sleep for the given milliseconds", _num_schema("ms"), wait)
    return server


MOCK_SERVER_BUILDERS = {
    "calculator": build_calculator_server,
    "kvstore": build_kvstore_server,
    "delay": build_delay_server,
}


# -- event loop thread ---------------------------------------------------


class AsyncLoopThread:
    """Dedicated event-loop thread; agent threads submit coroutines and
    block only themselves on the result."""

    def __init__(self) -> None:
        self.loop = asyncio.new_event_loop()
        self._thread = threading.Thread(target=self._run, name="tool-loop", daemon=True)
        self._started = threading.Event()
        self._thread.start()
        self._started.wait()

    def _run(self) -> None:
        asyncio.set_event_loop(self.loop)
        self.loop.call_soon(self._started.set)
        self.loop.run_forever()

    @property
    def running(self) -> bool:
        return self.loop.is_running()

    def submit(self, coro: Awaitable[Any]) -> Any:
        if not self.running:
            coro.close()
            raise SchedulerDownError("tool scheduler is not running")
        future = asyncio.run_coroutine_threadsafe(coro, self.loop)
        return future.result()

    def close(self) -> None:
        if self.running:
            self.loop.call_soon_threadsafe(self.loop.stop)
            self._thread.join(timeout=5)


# -- the client ----------------------------------------------------------


class ToolClient:
    """Globally unique client: config, sessions, and description cache."""

    def __init__(self, server_config: dict[str, dict[str, Any]] | None = None) -> None:
        self.server_config: dict[str, dict[str, Any]] = dict(server_config or {})
        self.server_sessions: dict[str, InProcessServer] = {}
        self.server_descriptions: dict[str, dict[str, dict[str, Any]]] = {}
        self._loop_thread = AsyncLoopThread()
        self._closed = False

    def configure_server(self, name: str, config: dict[str, Any]) -> None:
        self.server_config[name] = dict(config)

    def check_permissions(self, tool_permissions: set[str]) -> None:
        unknown = sorted(set(tool_permissions) - set(self.server_config))
        if unknown:
            raise UnknownServerError(f"tool permissions name unconfigured servers: {unknown}")

    def _connect(self, name: str) -> InProcessServer:
        config = self.server_config[name]
        transport = config.get("transport", "in_process")
        if transport != "in_process":
            raise UnknownServerError(
                f"server {name}: transport {transport!r} has no live driver in this build"
            )
        server_type = config.get("server_type", name)
        if "instance" in config:
            return config["instance"]
        builder = MOCK_SERVER_BUILDERS.get(server_type)
        if builder is None:
            raise UnknownServerError(f"server {name}: unknown server_type {server_type!r}")
        return builder(name)

    def ensure_sessions(self, agent: AgentState) -> list[str]:
        """Connect every permitted server; cache descriptions on first
        connect. Unreachable servers are skipped, not fatal."""
        self.check_permissions(agent.tool_permissions)
        connected = []
        for name in sorted(agent.tool_permissions):
            if name not in self.server_sessions:
                try:
                    self.server_sessions[name] = self._connect(name)
                except ToolError:
                    continue
            if name not in self.server_descriptions:
                self.refresh_descriptions(name)
            connected.append(name)
        return connected

    def refresh_descriptions(self, server: str) -> None:
        session = self._session(server)
        caps = self.submit(session.describe())
        self.server_descriptions[server] = {c["name"]: c for c in caps}

    def _session(self, server: str) -> InProcessServer:
        if server not in self.server_sessions:
            raise UnknownServerError(f"no session for server {server!r}")
        return self.server_sessions[server]

    def list_capabilities(self, server: str) -> list[dict[str, Any]]:
        self._session(server)
        if server not in self.server_descriptions:
            self.refresh_descriptions(server)
        return list(self.server_descriptions[server].values())

    def execute_capability(self, server: str, capability: str, params: dict[str, Any]) -> Any:
        session = self._session(server)
        listed = self.server_descriptions.get(server, {})
        if capability not in listed:
            raise UnknownCapabilityError(f"{server} has no listed capability {capability!r}")
        return self.submit(session.call(capability, dict(params)))

    def submit(self, coro: Awaitable[Any]) -> Any:
        if self._closed:
            coro.close()
            raise SchedulerDownError("tool client is shut down")
        return self._loop_thread.submit(coro)

    def submit_batch(self, coros: list[Awaitable[Any]]) -> list[Any]:
        """Run a batch concurrently on the shared loop; results come back
        in input order."""

        async def gather_all() -> list[Any]:
            return list(await asyncio.gather(*coros))

        return self.submit(gather_all())

    def close(self) -> None:
        self._closed = True
        self._loop_thread.close()


# -- tool step executor --------------------------------------------------


def run_tool_step(
    step: StepState,
    agent: AgentState,
    client: ToolClient,
    registry: Registry,
    deterministic: bool = True,
) -> ExecutorOutput:
    """Execute one tool step per its instruction_content and route the
    result back to the owning agent as a tool_result message (which makes
    the dispatcher insert a Tool Decision step)."""
    if not step.instruction_content:
        return ExecutorOutput(
            result_text="tool step has no instruction_content (instruction generation missing)",
            failed=True,
        )
    server = step.executor
    action = step.instruction_content.get("action")
    started = time.monotonic()
    error: Optional[str] = None
    result_text = ""
    try:
        if action == "list_capabilities":
            caps = client.list_capabilities(server)
            result_text = "capabilities_list_description: " + json.dumps(caps, sort_keys=True)
        elif action == "call":
            capability = step.instruction_content.get("capability", "")
            params = step.instruction_content.get("params", {})
            value = client.execute_capability(server, capability, params)
            result_text = json.dumps(value, sort_keys=True)
        else:
            raise ParameterError(f"unknown tool action {action!r}")
    except ToolError as exc:
        error = str(exc)
        result_text = f"tool error: {error}"
    latency_ms = None if deterministic else round((time.monotonic() - started) * 1000, 3)
    registry.log.emit(
        "tool_call",
        agent_id=agent.agent_id,
        step_id=step.step_id,
        server=server,
        action=action,
        ok=error is None,
        latency_ms=latency_ms,
    )
    message_body = {
        "receiver_ids": [agent.agent_id],
        "content": result_text,
        "stage_relative": step.stage_id,
        "need_reply": False,
        "category": "tool_result",
    }
    return ExecutorOutput(
        result_text=result_text,
        sync_instructions=[
            SyncInstruction("send_message", {"task_id": step.task_id, "message": message_body})
        ],
        failed=False,  # tool errors flow to Tool Decision, not step failure
    )
