"""Step-granular multi-agent orchestration runtime."""

from .backend import (
    BackendError,
    BackendRequest,
    BackendResponse,
    HttpBackend,
    RecordReplayBackend,
    ScriptedBackend,
    ScriptedRule,
)
from .events import EventLog, read_jsonl
from .messaging import MessageDispatcher
from .model import (
    AgentState,
    Message,
    Registry,
    StageState,
    StepState,
    StepStatus,
    TaskState,
)
from .orchestrator import MultiAgentSystem
from .scenario import (
    ScenarioError,
    ScenarioResult,
    bundled_scenario_path,
    list_bundled_scenarios,
    load_scenario,
    run_scenario,
)
from .sync import SyncState
from .tools import ToolClient

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "BackendError",
    "BackendRequest",
    "BackendResponse",
    "EventLog",
    "HttpBackend",
    "Message",
    "MessageDispatcher",
    "MultiAgentSystem",
    "RecordReplayBackend",
    "Registry",
    "ScenarioError",
    "ScenarioResult",
    "ScriptedBackend",
    "ScriptedRule",
    "StageState",
    "StepState",
    "StepStatus",
    "SyncState",
    "TaskState",
    "ToolClient",
    "bundled_scenario_path",
    "list_bundled_scenarios",
    "load_scenario",
    "read_jsonl",
    "run_scenario",
]
