"""Language-model backends.

The scripted backend is a pure rule table used by tests and replayable
scenarios: first matching (skill, pattern) rule wins, so identical
requests always get identical replies. The HTTP backend talks to a
chat-completion endpoint for live runs, and the record/replay wrapper
captures live traffic so a scenario can be re-run with zero network
access.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional


class BackendError(Exception):
    pass


@dataclass
class BackendRequest:
    system_text: str
    context_text: str
    instruction_text: str
    agent_id: str
    skill_name: str

    def combined_text(self) -> str:
        return "\n".join([self.system_text, self.context_text, self.instruction_text])

    def to_dict(self) -> dict[str, Any]:
        return {
            "system_text": self.system_text,
            "context_text": self.context_text,
            "instruction_text": self.instruction_text,
            "agent_id": self.agent_id,
            "skill_name": self.skill_name,
        }


@dataclass
class BackendResponse:
    text: str
    usage_note: str = ""


def request_hash(request: BackendRequest) -> str:
    canonical = json.dumps(request.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class ScriptedRule:
    skill: str  # skill name or "*"
    match: str  # substring, or regex when regex=True
    reply: str
    regex: bool = False

    def matches(self, request: BackendRequest) -> bool:
        if self.skill not in ("*", request.skill_name):
            return False
        text = request.combined_text()
        if self.regex:
            return re.search(self.match, text) is not None
        return self.match in text


class ScriptedBackend:
    """Deterministic backend: declaration-ordered rule lookup."""

    def __init__(
        self, rules: list[ScriptedRule] | list[dict[str, Any]], default: Optional[str] = None
    ) -> None:
        self.rules = [r if isinstance(r, ScriptedRule) else ScriptedRule(**r) for r in rules]
        self.default = default

    def complete(self, request: BackendRequest) -> BackendResponse:
        for rule in self.rules:
            if rule.matches(request):
                return BackendResponse(rule.reply, usage_note="scripted")
        if self.default is not None:
            return BackendResponse(self.default, usage_note="scripted-default")
        raise BackendError(
            f"no scripted rule matches skill={request.skill_name!r} "
            f"agent={request.agent_id!r}"
        )


class HttpBackend:
    """Chat-completion backend for live runs. Config keys: endpoint,
    model, api_key_env, timeout."""

    def __init__(self, config: dict[str, Any]) -> None:
        self.endpoint = config["endpoint"]
        self.model = config.get("model", "default")
        self.api_key_env = config.get("api_key_env", "")
        self.timeout = float(config.get("timeout", 60.0))

    def complete(self, request: BackendRequest) -> BackendResponse:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.context_text + "\n\n" + request.instruction_text},
            ],
        }
        try:
            response = httpx.post(
                self.endpoint, json=payload, headers=headers, timeout=self.timeout
            )
            response.raise_for_status()
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except Exception as exc:  # transport, status, and shape errors alike
            raise BackendError(f"http backend failure: {exc}") from exc
        return BackendResponse(text, usage_note="http")


class RecordReplayBackend:
    """Wraps another backend in record mode; serves a frozen store in
    replay mode. The store is append-only JSON lines keyed by request hash."""

    def __init__(self, mode: str, store_path: str | Path, inner: Any = None) -> None:
        if mode not in ("record", "replay"):
            raise ValueError(f"mode must be record or replay, got {mode!r}")
        self.mode = mode
        self.store_path = Path(store_path)
        self.inner = inner
        self._store: dict[str, str] = {}
        if self.store_path.exists():
            for line in self.store_path.read_text().splitlines():
                if line.strip():
                    entry = json.loads(line)
                    self._store[entry["hash"]] = entry["response"]

    def complete(self, request: BackendRequest) -> BackendResponse:
        digest = request_hash(request)
        if self.mode == "replay":
            if digest not in self._store:
                raise BackendError(f"replay miss for request hash {digest}")
            return BackendResponse(self._store[digest], usage_note="replay")
        if digest in self._store:
            return BackendResponse(self._store[digest], usage_note="record-cache")
        if self.inner is None:
            raise BackendError("record mode requires an inner backend")
        response = self.inner.complete(request)
        self._store[digest] = response.text
        with self.store_path.open("a") as fh:
            fh.write(
                json.dumps(
                    {"hash": digest, "request": request.to_dict(), "response": response.text},
                    sort_keys=True,
                )
                + "\n"
            )
        return response
