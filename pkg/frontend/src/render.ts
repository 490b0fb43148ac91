import { AgentNode, ConsoleStore, QueueItem, Thread } from './readModel';

function esc(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

function renderQueueItem(item: QueueItem): string {
  const marker = item.pending ? ' class="pending"' : '';
  return `<li${marker}>${esc(item.stepId)} ${esc(item.executor)} [${esc(item.status)}] ${esc(item.intent)}</li>`;
}

function renderAgent(agent: AgentNode): string {
  const flags: string[] = [];
  if (agent.paused) flags.push('paused');
  if (agent.locks.length > 0) flags.push(`locked:${agent.locks.join(',')}`);
  const suffix = flags.length > 0 ? ` (${flags.join(', ')})` : '';
  const queue = agent.queue.map(renderQueueItem).join('');
  return [
    `<li class="agent" data-agent="${esc(agent.agentId)}">`,
    `<span class="agent-head">${esc(agent.agentId)} [${esc(agent.workingState)}]${esc(suffix)}</span>`,
    `<div class="sub-goal">${esc(agent.subGoal)}</div>`,
    `<ul class="queue">${queue}</ul>`,
    '</li>',
  ].join('');
}

export function renderHierarchy(store: ConsoleStore): string {
  const tasks = store.hierarchy();
  if (tasks.length === 0) return '<p class="empty">no active tasks</p>';
  const parts: string[] = ['<ul class="tasks">'];
  for (const node of tasks) {
    parts.push(
      `<li class="task" data-task="${esc(node.task.task_id)}">`,
      `<span class="task-head">${esc(node.task.task_id)} [${esc(node.task.status)}] ${esc(node.task.instruction)}</span>`,
      '<ul class="stages">',
    );
    for (const stageNode of node.stages) {
      const cls = stageNode.running ? 'stage running' : 'stage';
      parts.push(
        `<li class="${cls}" data-stage="${esc(stageNode.stage.stage_id)}">`,
        `<span class="stage-head">${esc(stageNode.stage.stage_id)} [${esc(stageNode.stage.status)}] ${esc(stageNode.stage.objective)}</span>`,
        '<ul class="agents">',
        ...stageNode.agents.map(renderAgent),
        '</ul></li>',
      );
    }
    parts.push('</ul></li>');
  }
  parts.push('</ul>');
  return parts.join('');
}

export function renderTimeline(threads: Thread[]): string {
  if (threads.length === 0) return '<p class="empty">no messages yet</p>';
  const parts: string[] = ['<ol class="timeline">'];
  for (const thread of threads) {
    const cls = thread.multiTurn ? 'thread multi-turn' : 'thread one-way';
    const label = thread.multiTurn ? 'multi-turn' : 'one-way';
    parts.push(
      `<li class="${cls}">`,
      `<span class="thread-kind">${label}</span>`,
      `<div class="msg">${esc(thread.root.senderId)} to ${esc(thread.root.receiverIds.join(', '))}: ${esc(thread.root.content)}</div>`,
    );
    for (const reply of thread.replies) {
      parts.push(
        `<div class="msg reply">${esc(reply.senderId)} to ${esc(reply.receiverIds.join(', '))}: ${esc(reply.content)}</div>`,
      );
    }
    parts.push('</li>');
  }
  parts.push('</ol>');
  return parts.join('');
}

const INTERVENTION_KINDS = [
  'inject_message',
  'edit_agent_state',
  'pause_agent',
  'resume_agent',
  'end_stage',
  'cancel_task',
];

export function renderInterventionForm(agentIds: string[]): string {
  const kindOptions = INTERVENTION_KINDS.map(
    (kind) => `<option value="${kind}">${kind}</option>`,
  ).join('');
  const agentOptions = agentIds
    .map((agentId) => `<option value="${esc(agentId)}">${esc(agentId)}</option>`)
    .join('');
  return [
    '<form id="intervention-form">',
    `<select name="kind">${kindOptions}</select>`,
    `<select name="agent_id">${agentOptions}</select>`,
    '<textarea name="params" placeholder="extra params as JSON"></textarea>',
    '<button type="submit">apply</button>',
    '</form>',
  ].join('');
}
