/** Wire types matching the server's JSON schemas. */

export interface UpdateOptionsDto {
  steps: 1 | 2;
  binarise: boolean;
  overwrite: boolean;
  epsilon: number;
}

export interface BuildConfigDto {
  patch_side: number;
  branching: number;
  layers: number;
  iterations: number;
  seed: number;
  n_classes: number;
  subsample: number;
}

export interface StrokeDto {
  points: [number, number][];
  radius: number;
  /** 1..C, or 0 for the eraser. */
  cls: number;
}

export interface SessionCreated {
  session_id: string;
  width: number;
  height: number;
  channels: number;
  n_classes: number;
}

export interface SessionStatus {
  session_id: string;
  ready: boolean;
  error: string | null;
  revision: number;
  computed_revision: number;
  width: number;
  height: number;
  channels: number;
  n_classes: number;
  n_marked: number;
  options: UpdateOptionsDto;
  stats: Record<string, unknown>;
  can_undo: boolean;
  can_redo: boolean;
}

export type ServerEvent =
  | { type: "ready"; revision: number; timing: Record<string, number>; nnz: number }
  | { type: "update"; revision: number; timing_ms: number }
  | { type: "error"; message: string };

export interface BatchStatus {
  job_id: string;
  state: "running" | "done" | "error";
  done: number;
  total: number;
  error: string | null;
}

export const DEFAULT_OPTIONS: UpdateOptionsDto = {
  steps: 2,
  binarise: true,
  overwrite: true,
  epsilon: 1e-6,
};

export const DEFAULT_CONFIG: BuildConfigDto = {
  patch_side: 9,
  branching: 5,
  layers: 4,
  iterations: 10,
  seed: 0,
  n_classes: 2,
  subsample: 15000,
};
