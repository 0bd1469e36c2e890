/** Response shapes of the segmentation service, mirrored verbatim. */

export interface CenterRow {
  id: number;
  x_c: number;
  y_c: number;
  z_c: number;
  t_c: number;
  p_c: number | null;
  f_c: number | null;
  n_points: number;
  n_fields: number;
  p_std: number | null;
  f_std: number | null;
  bbox_min: number[] | null;
  bbox_max: number[] | null;
}

export interface CentersResponse {
  centers: CenterRow[];
  page: number;
  page_size: number;
  n_total: number;
}

export interface Polyline {
  trajectory_id: number;
  t: number[];
  xyz: number[][];
  values: number[];
}

export interface VoxelPayload {
  timestep: number | null;
  axis: string | null;
  index: number | null;
  cells: number[][];
  values: number[];
}

export interface FeatureStats {
  bbox_min: number[];
  bbox_max: number[];
  p_mean: number | null;
  p_std: number | null;
  f_mean: number | null;
  f_std: number | null;
  n_points: number;
  n_fields: number;
}

export interface FeatureResponse {
  id: number;
  member_clusters: number[];
  polylines: Polyline[];
  voxels: VoxelPayload;
  stats: FeatureStats | null;
}

export interface JobState {
  id: number;
  kind: string;
  status: "queued" | "running" | "done" | "failed";
  progress: { iteration: number; max_delta: number | null };
  error: string | null;
}

export interface FieldMeta {
  dims: number[];
  origin: number[];
  spacing: number[];
  times: number[];
}

export interface DatasetMeta {
  field: FieldMeta | null;
  points: {
    n_samples: number;
    n_trajectories: number;
    t_min: number | null;
    t_max: number | null;
  } | null;
  has_segmentation: boolean;
  params?: Record<string, unknown>;
  iterations_used?: number;
  converged?: boolean;
}

export interface MergeResponse {
  eps_m: number;
  merge_map: Record<string, number>;
  centers: Omit<CenterRow, "p_std" | "f_std" | "bbox_min" | "bbox_max">[];
}

export interface SegmentRequest {
  k: number[];
  c_f: number;
  w_d: number;
  w_p: number;
  w_f: number;
  eps_c: number;
  eps_m: number;
  max_iterations: number;
  normalize: boolean;
  workers: number;
  chunk_size: number | null;
}
