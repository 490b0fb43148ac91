import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { EventSchema, RunEvent, Snapshot, SnapshotSchema } from '../src/types';

const here = dirname(fileURLToPath(import.meta.url));

export function loadSnapshot(name: string): Snapshot {
  const raw = readFileSync(join(here, 'fixtures', name), 'utf-8');
  return SnapshotSchema.parse(JSON.parse(raw));
}

export function loadEvents(): RunEvent[] {
  const raw = readFileSync(join(here, 'fixtures', 'events.jsonl'), 'utf-8');
  return raw
    .split('\n')
    .filter((line) => line.trim() !== '')
    .map((line) => EventSchema.parse(JSON.parse(line)));
}
