import { RunEvent, Snapshot, Stage, Step, Task } from './types';

export interface StageNode {
  stage: Stage;
  running: boolean;
  agents: AgentNode[];
}

export interface AgentNode {
  agentId: string;
  role: string;
  workingState: string;
  paused: boolean;
  locks: string[];
  subGoal: string;
  queue: QueueItem[];
}

export interface QueueItem {
  stepId: string;
  executor: string;
  intent: string;
  status: string;
  pending?: boolean; // seen on the stream but not yet in a snapshot
}

export interface TaskNode {
  task: Task;
  stages: StageNode[];
}

export interface MessageEntry {
  messageId: string;
  taskId: string;
  senderId: string;
  receiverIds: string[];
  content: string;
  needReply: boolean;
  waiting: string[] | null;
  returnWaitingId: string | null;
  category: string;
}

export interface Thread {
  root: MessageEntry;
  replies: MessageEntry[];
  multiTurn: boolean;
}

interface EnqueuedMessage {
  message_id: string;
  task_id: string;
  sender_id: string;
  receiver_ids: string[];
  content: string;
  need_reply: boolean;
  waiting: string[] | null;
  return_waiting_id: string | null;
  category: string;
}

export class ConsoleStore {
  snapshot: Snapshot | null = null;
  events: RunEvent[] = [];
  private messages: MessageEntry[] = [];
  // delivered steps not yet reflected in the last snapshot fetch
  private inbox = new Map<string, QueueItem[]>();

  applySnapshot(snapshot: Snapshot): void {
    this.snapshot = snapshot;
    this.inbox.clear();
  }

  applyEvent(event: RunEvent): void {
    this.events.push(event);
    if (event.kind === 'message_enqueued') {
      const msg = (event as unknown as { message: EnqueuedMessage }).message;
      this.messages.push({
        messageId: msg.message_id,
        taskId: msg.task_id,
        senderId: msg.sender_id,
        receiverIds: msg.receiver_ids,
        content: msg.content,
        needReply: msg.need_reply,
        waiting: msg.waiting,
        returnWaitingId: msg.return_waiting_id,
        category: msg.category,
      });
    }
    if (event.kind === 'message_delivered') {
      const e = event as unknown as {
        receiver_id: string;
        sender_id: string;
        step_id: string;
        need_reply: boolean;
      };
      const items = this.inbox.get(e.receiver_id) ?? [];
      items.push({
        stepId: e.step_id,
        executor: e.need_reply ? 'send_message' : 'process_message',
        intent: `message from ${e.sender_id}`,
        status: 'init',
        pending: true,
      });
      this.inbox.set(e.receiver_id, items);
    }
  }

  hierarchy(): TaskNode[] {
    if (!this.snapshot) return [];
    const snap = this.snapshot;
    return Object.values(snap.tasks).map((task) => ({
      task,
      stages: task.stage_ids
        .map((stageId) => snap.stages[stageId])
        .filter((stage): stage is Stage => Boolean(stage))
        .map((stage) => ({
          stage,
          running: stage.status === 'running',
          agents: Object.entries(stage.agent_allocation).map(([agentId, subGoal]) =>
            this.agentNode(agentId, subGoal),
          ),
        })),
    }));
  }

  private agentNode(agentId: string, subGoal: string): AgentNode {
    const snap = this.snapshot!;
    const agent = snap.agents[agentId];
    return {
      agentId,
      role: agent?.role ?? '(unknown)',
      workingState: agent?.working_state ?? '(unknown)',
      paused: snap.paused.includes(agentId),
      locks: agent?.step_locks ?? [],
      subGoal,
      queue: this.agentQueue(agentId),
    };
  }

  agentQueue(agentId: string): QueueItem[] {
    const agent = this.snapshot?.agents[agentId];
    const fromSnapshot: QueueItem[] = (agent?.step_queue.todo ?? []).map(
      (step: Step) => ({
        stepId: step.step_id,
        executor: step.executor,
        intent: step.step_intent,
        status: step.status,
      }),
    );
    const known = new Set(fromSnapshot.map((item) => item.stepId));
    const pending = (this.inbox.get(agentId) ?? []).filter(
      (item) => !known.has(item.stepId),
    );
    return [...fromSnapshot, ...pending];
  }

  // Conversation timeline: reply messages attach to the request whose
  // waiting list contains their return id; a thread with replies or a
  // reply-required root is multi-turn, everything else is one-way.
  timeline(): Thread[] {
    const byWaitId = new Map<string, MessageEntry>();
    for (const msg of this.messages) {
      for (const waitId of msg.waiting ?? []) byWaitId.set(waitId, msg);
    }
    const parents = new Map<string, MessageEntry>();
    for (const msg of this.messages) {
      if (msg.returnWaitingId) {
        const parent = byWaitId.get(msg.returnWaitingId);
        if (parent) parents.set(msg.messageId, parent);
      }
    }
    const threads = new Map<string, Thread>();
    for (const msg of this.messages) {
      if (parents.has(msg.messageId)) continue;
      threads.set(msg.messageId, { root: msg, replies: [], multiTurn: msg.needReply });
    }
    for (const msg of this.messages) {
      const parent = parents.get(msg.messageId);
      if (!parent) continue;
      const thread = threads.get(parent.messageId);
      if (thread) {
        thread.replies.push(msg);
        thread.multiTurn = true;
      }
    }
    return [...threads.values()];
  }
}
