// Payload shapes of the packscan session API.

export type StepName =
  | "align"
  | "subsample"
  | "thresholds"
  | "tiers"
  | "grid"
  | "extract"
  | "surface";

export type StepStatus = "pending" | "done";

export interface SessionView {
  steps: Record<StepName, StepStatus>;
  scan_id: string;
  tiers: { index: number; n_rows: number; n_cols: number; occupied: number }[];
  occupied_total: number;
  slice_count: number;
}

export interface HistogramView {
  bins: number;
  edges: number[];
  counts: number[];
}

export interface AlignmentDecision {
  angle_deg: number;
  row_range: [number, number];
  col_range: [number, number];
}

export interface ThresholdDecision {
  a_divider: number;
  b_divider: number;
  a_object: number;
  b_object?: number | null;
}

export interface PeakCandidate {
  position: number;
  prominence: number;
  width: number;
}

export interface ZProfileView {
  profile: number[];
  candidates?: PeakCandidate[];
  cuts?: number[];
  slabs?: { z_start: number; z_stop: number }[];
  ratified?: boolean;
  error?: ApiError;
}

export interface GridView {
  tier_index: number;
  n_rows: number;
  n_cols: number;
  rotation_deg: number;
  row_cuts?: number[];
  col_cuts?: number[];
  row_mode?: string;
  col_mode?: string;
  ratified?: boolean;
  projections: { rows: number[]; cols: number[] };
  error?: ApiError;
}

export interface ApiError {
  type: string;
  message: string;
}

export interface RunReport {
  steps_run: string[];
  timings_s: Record<string, number>;
  objects: number;
  failures: { identifier: string; error: string; message: string }[];
  peak_tracked_bytes: number;
  out_dir: string;
}
