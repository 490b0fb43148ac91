import pytest

from stepmas.backend import ScriptedBackend
from stepmas.engine import StepEngine
from stepmas.events import EventLog
from stepmas.messaging import MessageDispatcher
from stepmas.model import AgentState, Registry
from stepmas.prompts import load_templates
from stepmas.skills import SKILLS, SkillContext
from stepmas.sync import SyncState

ALL_SKILLS = set(SKILLS)


def make_agent(registry, agent_id, skills=None, tools=None, role="worker"):
    agent = AgentState(
        agent_id=agent_id,
        name=agent_id,
        role=role,
        skill_permissions=set(ALL_SKILLS if skills is None else skills),
        tool_permissions=set(tools or ()),
    )
    registry.register_agent(agent)
    return agent


@pytest.fixture
def registry():
    return Registry(log=EventLog())


class Harness:
    """Registry + engine wired to a scripted backend, without the
    orchestrator on top."""

    def __init__(self, rules=None, default=None, tool_client=None):
        self.log = EventLog()
        self.registry = Registry(log=self.log)
        self.dispatcher = MessageDispatcher(self.registry)
        self.sync = SyncState(self.registry, self.dispatcher)
        self.backend = ScriptedBackend(rules or [], default=default)
        self.ctx = SkillContext(
            registry=self.registry, backend=self.backend, templates=load_templates(None)
        )
        self.engine = StepEngine(
            self.registry, self.sync, self.ctx, tool_client=tool_client
        )

    def agent(self, agent_id, **kwargs):
        return make_agent(self.registry, agent_id, **kwargs)


@pytest.fixture
def harness():
    return Harness()
