import { z } from 'zod';

export const StepSchema = z.object({
  step_id: z.string(),
  task_id: z.string(),
  stage_id: z.string(),
  agent_id: z.string(),
  step_intent: z.string(),
  step_type: z.string(),
  executor: z.string(),
  text_content: z.string(),
  instruction_content: z.record(z.unknown()).nullable(),
  execute_result: z.string().nullable(),
  status: z.string(),
});

export const AgentSchema = z.object({
  agent_id: z.string(),
  name: z.string(),
  role: z.string(),
  profile: z.string(),
  llm_config_ref: z.string(),
  skill_permissions: z.array(z.string()),
  tool_permissions: z.array(z.string()),
  persistent_memory: z.record(z.string()),
  step_queue: z.object({
    todo: z.array(StepSchema),
    history: z.array(StepSchema),
    current: StepSchema.nullable(),
  }),
  step_locks: z.array(z.string()),
  task_refs: z.array(z.string()),
  stage_refs: z.array(z.string()),
  working_state: z.string(),
});

export const StageSchema = z.object({
  stage_id: z.string(),
  task_id: z.string(),
  objective: z.string(),
  agent_allocation: z.record(z.string()),
  completion_summaries: z.record(z.string()),
  status: z.string(),
});

export const TaskSchema = z.object({
  task_id: z.string(),
  instruction: z.string(),
  agent_ids: z.array(z.string()),
  stage_ids: z.array(z.string()),
  current_stage_index: z.number().nullable(),
  comm_queue: z.array(z.record(z.unknown())),
  status: z.string(),
  shared_info: z.record(z.string()),
});

export const SnapshotSchema = z.object({
  tasks: z.record(TaskSchema),
  stages: z.record(StageSchema),
  agents: z.record(AgentSchema),
  paused: z.array(z.string()).default([]),
});

// Events carry arbitrary extra fields per kind; only seq/kind are fixed.
export const EventSchema = z
  .object({ seq: z.number(), kind: z.string() })
  .passthrough();

export type Step = z.infer<typeof StepSchema>;
export type Agent = z.infer<typeof AgentSchema>;
export type Stage = z.infer<typeof StageSchema>;
export type Task = z.infer<typeof TaskSchema>;
export type Snapshot = z.infer<typeof SnapshotSchema>;
export type RunEvent = z.infer<typeof EventSchema>;
