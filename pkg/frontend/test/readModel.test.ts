import { describe, expect, it } from 'vitest';
import { ConsoleStore } from '../src/readModel';
import { EventSchema } from '../src/types';
import { loadEvents, loadSnapshot } from './fixtures';

function storeWithRun(): ConsoleStore {
  const store = new ConsoleStore();
  store.applySnapshot(loadSnapshot('snapshot_midrun.json'));
  for (const event of loadEvents()) store.applyEvent(event);
  return store;
}

describe('hierarchy', () => {
  it('builds the task tree from a mid-run snapshot', () => {
    const store = new ConsoleStore();
    store.applySnapshot(loadSnapshot('snapshot_midrun.json'));
    const tasks = store.hierarchy();
    expect(tasks).toHaveLength(1);
    expect(tasks[0].task.task_id).toBe('task-1');
    expect(tasks[0].stages.map((s) => s.stage.stage_id)).toEqual([
      'stage-1',
      'stage-2',
    ]);
  });

  it('marks exactly one stage as running mid-run', () => {
    const store = new ConsoleStore();
    store.applySnapshot(loadSnapshot('snapshot_midrun.json'));
    const running = store
      .hierarchy()[0]
      .stages.filter((stageNode) => stageNode.running);
    expect(running).toHaveLength(1);
    expect(running[0].stage.stage_id).toBe('stage-1');
  });

  it('is empty once all tasks are cleared', () => {
    const store = new ConsoleStore();
    store.applySnapshot(loadSnapshot('snapshot_final.json'));
    expect(store.hierarchy()).toEqual([]);
  });

  it('is empty before the first snapshot arrives', () => {
    expect(new ConsoleStore().hierarchy()).toEqual([]);
  });
});

describe('agent queue view', () => {
  it('lists todo steps from the snapshot', () => {
    const store = new ConsoleStore();
    store.applySnapshot(loadSnapshot('snapshot_midrun.json'));
    expect(store.agentQueue('worker1').map((item) => item.stepId)).toEqual([
      'step-10',
      'step-11',
    ]);
  });

  it('shows a delivered message as a pending step before the next snapshot', () => {
    const store = new ConsoleStore();
    store.applySnapshot(loadSnapshot('snapshot_midrun.json'));
    store.applyEvent(
      EventSchema.parse({
        seq: 99,
        kind: 'message_delivered',
        message_id: 'msg-9',
        task_id: 'task-1',
        sender_id: 'human-operator',
        receiver_id: 'worker2',
        need_reply: false,
        category: 'agent',
        step_id: 'step-77',
      }),
    );
    const queue = store.agentQueue('worker2');
    expect(queue).toHaveLength(1);
    expect(queue[0]).toMatchObject({
      stepId: 'step-77',
      executor: 'process_message',
      pending: true,
    });
  });

  it('drops the pending marker once a snapshot includes the step', () => {
    const store = new ConsoleStore();
    store.applySnapshot(loadSnapshot('snapshot_midrun.json'));
    store.applyEvent(
      EventSchema.parse({
        seq: 99,
        kind: 'message_delivered',
        message_id: 'msg-9',
        task_id: 'task-1',
        sender_id: 'manager',
        receiver_id: 'worker2',
        need_reply: true,
        category: 'agent',
        step_id: 'step-77',
      }),
    );
    expect(store.agentQueue('worker2')).toHaveLength(1);
    store.applySnapshot(loadSnapshot('snapshot_midrun.json'));
    expect(store.agentQueue('worker2')).toHaveLength(0);
  });
});

describe('conversation timeline', () => {
  it('groups the replayed run into three threads', () => {
    const threads = storeWithRun().timeline();
    expect(threads).toHaveLength(3);
    expect(threads.map((t) => t.root.messageId)).toEqual([
      'msg-1',
      'msg-3',
      'msg-4',
    ]);
  });

  it('attaches the reply to its reply-required request', () => {
    const thread = storeWithRun()
      .timeline()
      .find((t) => t.root.messageId === 'msg-1')!;
    expect(thread.multiTurn).toBe(true);
    expect(thread.replies.map((r) => r.messageId)).toEqual(['msg-2']);
    expect(thread.replies[0].content).toBe('Figures verified, all good.');
  });

  it('keeps tool result notes as one-way threads', () => {
    const threads = storeWithRun()
      .timeline()
      .filter((t) => t.root.category === 'tool_result');
    expect(threads).toHaveLength(2);
    for (const thread of threads) {
      expect(thread.multiTurn).toBe(false);
      expect(thread.replies).toEqual([]);
    }
  });

  it('treats an unanswered reply-required message as multi-turn', () => {
    const store = new ConsoleStore();
    store.applyEvent(
      EventSchema.parse({
        seq: 1,
        kind: 'message_enqueued',
        message: {
          message_id: 'msg-1',
          task_id: 'task-1',
          sender_id: 'a',
          receiver_ids: ['b'],
          content: 'ping',
          need_reply: true,
          waiting: ['wid-1-b'],
          return_waiting_id: null,
          category: 'agent',
        },
      }),
    );
    const threads = store.timeline();
    expect(threads).toHaveLength(1);
    expect(threads[0].multiTurn).toBe(true);
  });
});
