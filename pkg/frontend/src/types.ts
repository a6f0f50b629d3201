/** Wire types of the session service (versioned JSON, /api/v1). */

export interface SessionSummary {
  schema_version: number;
  session_id: string;
  phase: string;
  alpha: number;
  seed: number;
  template_version: number;
  path_count: number;
  population_size: number;
  iteration: number;
  event_seq: number;
}

export interface MemberDoc {
  id: number;
  mask: string;
  accuracy: number | null;
  iteration_evaluated?: number | null;
  origin?: string;
}

export interface StateDoc {
  schema_version: number;
  phase: string;
  iteration: number;
  template_version: number;
  population: MemberDoc[];
  loss_history: number[][];
  pruned: number[];
  fixed: number[];
  region_member_ids: number[] | null;
  fitness_digest: string;
  digest: string;
}

export interface FitnessDoc {
  schema_version: number;
  alpha: number;
  fitness: number[];
  frequency: number[];
  groups: number[][];
  digest: string;
}

export interface EmbeddingDoc {
  schema_version: number;
  ids: number[];
  masks: string[];
  mask_length: number;
  template_version: number;
  coords: [number, number][];
  colors: (number | null)[];
  seed: number;
  method: string;
  matrix_digest: string;
  digest: string;
}

export interface OpDoc {
  tag: string;
  name?: string;
  params?: Record<string, number | string>;
}

export interface TemplateDoc {
  schema_version: number;
  version: number;
  dataset_tag: string;
  cells: {
    cell_id: number;
    kind: string;
    nodes: { node_id: number; inputs: { source: number; ops: OpDoc[] }[] }[];
  }[];
}

export interface AppEvent {
  seq: number;
  kind:
    | "loss_tick"
    | "iteration_done"
    | "fitness_updated"
    | "embedding_ready"
    | "constraint_changed"
    | "phase_changed"
    | "error";
  payload: any;
}

export type RectShape = ["rect", number, number, number, number];

export interface RegionCommand {
  shape: RectShape;
  embedding_digest: string;
}
