"""HTTP gateway over a running system.

Thin FastAPI layer: a snapshot endpoint that mirrors the registry JSON
byte for byte, a server-sent event stream of the run log, and command
endpoints for task submission and human interventions. All state lives in
the wrapped MultiAgentSystem; the gateway never mutates it directly.
"""

from __future__ import annotations

import asyncio
import json
from typing import Any, Optional

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field

from .model import RegistrationError, StateError, ValidationError
from .orchestrator import MultiAgentSystem

EVENT_POLL_PERIOD = 0.05  # seconds between event stream polls


class TaskRequest(BaseModel):
    instruction: str
    manager: str
    members: list[str] = Field(default_factory=list)


class InterveneRequest(BaseModel):
    kind: str
    params: dict[str, Any] = Field(default_factory=dict)


def _agent_view(mas: MultiAgentSystem, agent_id: str) -> dict[str, Any]:
    snap = mas.snapshot()
    try:
        return snap["agents"][agent_id]
    except KeyError:
        raise HTTPException(status_code=404, detail=f"no agent {agent_id!r}")


def create_app(mas: MultiAgentSystem) -> FastAPI:
    app = FastAPI(title="stepmas gateway", version="0.1.0")
    app.state.mas = mas

    @app.get("/api/snapshot")
    def snapshot() -> Response:
        return Response(content=mas.snapshot_json(), media_type="application/json")

    @app.get("/api/events")
    async def events(
        request: Request, since: int = 0, follow: bool = True
    ) -> StreamingResponse:
        # follow=false replays the buffered log and closes the stream
        async def stream():
            cursor = since
            while True:
                if await request.is_disconnected():
                    return
                for entry in mas.log.entries(since_seq=cursor):
                    cursor = entry["seq"] + 1
                    yield f"data: {json.dumps(entry, sort_keys=True)}\n\n"
                if not follow:
                    return
                await asyncio.sleep(EVENT_POLL_PERIOD)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/api/tasks")
    def create_task(body: TaskRequest) -> dict[str, str]:
        try:
            task_id = mas.start_task(body.instruction, body.manager, body.members)
        except (ValidationError, RegistrationError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"task_id": task_id}

    @app.post("/api/intervene")
    def intervene(body: InterveneRequest) -> dict[str, Any]:
        command = {"kind": body.kind, **body.params}
        try:
            results = mas.intervene(command)
        except (ValidationError, RegistrationError, KeyError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except StateError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"results": [r.to_dict() for r in results]}

    @app.get("/api/agents/{agent_id}")
    def agent(agent_id: str) -> dict[str, Any]:
        return _agent_view(mas, agent_id)

    return app


def serve(
    mas: MultiAgentSystem, host: str = "127.0.0.1", port: int = 8000
) -> None:
    import uvicorn

    mas.start_live()
    try:
        uvicorn.run(create_app(mas), host=host, port=port, log_level="warning")
    finally:
        mas.stop_live()
