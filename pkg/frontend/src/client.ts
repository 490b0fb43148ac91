import { EventSchema, Snapshot, SnapshotSchema, RunEvent } from './types';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface InterventionCommand {
  kind: string;
  params: Record<string, unknown>;
}

export interface TaskRequest {
  instruction: string;
  manager: string;
  members: string[];
}

export const DEFAULT_POLL_MS = 200; // matches the runtime's dispatch period

export class GatewayClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async fetchSnapshot(): Promise<Snapshot> {
    const res = await this.fetchFn(`${this.baseUrl}/api/snapshot`);
    if (!res.ok) throw new Error(`snapshot failed: ${res.status}`);
    return SnapshotSchema.parse(await res.json());
  }

  async fetchAgent(agentId: string): Promise<unknown> {
    const res = await this.fetchFn(`${this.baseUrl}/api/agents/${agentId}`);
    if (!res.ok) throw new Error(`agent ${agentId} failed: ${res.status}`);
    return res.json();
  }

  async createTask(task: TaskRequest): Promise<string> {
    const res = await this.fetchFn(`${this.baseUrl}/api/tasks`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(task),
    });
    if (!res.ok) throw new Error(`task create failed: ${res.status}`);
    const body = (await res.json()) as { task_id: string };
    return body.task_id;
  }

  async intervene(command: InterventionCommand): Promise<{ ok: boolean; detail: string }[]> {
    const res = await this.fetchFn(`${this.baseUrl}/api/intervene`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(command),
    });
    if (!res.ok) throw new Error(`intervention failed: ${res.status}`);
    const body = (await res.json()) as { results: { ok: boolean; detail: string }[] };
    return body.results;
  }

  // One catch-up fetch of the event stream starting at `since`.
  async fetchEvents(since = 0): Promise<RunEvent[]> {
    const res = await this.fetchFn(
      `${this.baseUrl}/api/events?follow=false&since=${since}`,
    );
    if (!res.ok) throw new Error(`events failed: ${res.status}`);
    return parseSse(await res.text());
  }

  // Poll the stream until stopped; hands each new event to the handler.
  startPolling(
    handler: (event: RunEvent) => void,
    periodMs = DEFAULT_POLL_MS,
  ): () => void {
    let since = 0;
    let stopped = false;
    const tick = async () => {
      if (stopped) return;
      try {
        const events = await this.fetchEvents(since);
        for (const event of events) {
          since = event.seq + 1;
          handler(event);
        }
      } catch {
        // transient fetch errors: retry on the next tick
      }
      if (!stopped) setTimeout(tick, periodMs);
    };
    void tick();
    return () => {
      stopped = true;
    };
  }
}

export function parseSse(payload: string): RunEvent[] {
  const events: RunEvent[] = [];
  for (const line of payload.split('\n')) {
    if (!line.startsWith('data: ')) continue;
    events.push(EventSchema.parse(JSON.parse(line.slice('data: '.length))));
  }
  return events;
}
