import { colorForFeature } from "./color.js";
import type {
  CenterRow,
  CentersResponse,
  FeatureResponse,
  FieldMeta,
} from "./types.js";
import type { SliceAxis } from "./state.js";

/** Center-table column order; mirrors the service row fields. */
export const TABLE_COLUMNS = [
  "id", "x_c", "y_c", "z_c", "t_c", "p_c", "f_c",
  "n_points", "n_fields", "p_std", "f_std",
] as const;

export interface TableModel {
  columns: readonly string[];
  rows: { id: number; selected: boolean; cells: (string | number)[] }[];
  nTotal: number;
}

const fmt = (v: number | null): string | number =>
  v === null ? "—" : Number.isInteger(v) ? v : Number(v.toFixed(4));

/** Rows exactly as the service returned them, formatted for display. */
export function tableModel(resp: CentersResponse, selected: number[]): TableModel {
  return {
    columns: TABLE_COLUMNS,
    rows: resp.centers.map((row) => ({
      id: row.id,
      selected: selected.includes(row.id),
      cells: TABLE_COLUMNS.map((col) => fmt(row[col as keyof CenterRow] as number | null)),
    })),
    nTotal: resp.n_total,
  };
}

/** The two in-plane cell axes for a given slice axis. */
const PLANE: Record<SliceAxis, [number, number]> = {
  x: [1, 2], // (j, k)
  y: [0, 2], // (i, k)
  z: [0, 1], // (i, j)
};

export interface SliceLayer {
  featureId: number;
  color: string;
  cells: { u: number; v: number; value: number }[];
}

export interface ProjectedPolyline {
  featureId: number;
  color: string;
  trajectoryId: number;
  points: { u: number; v: number }[];
}

export interface LegendEntry {
  featureId: number;
  color: string;
}

/** One colored voxel layer per selected feature from its slice payload. */
export function sliceLayers(features: FeatureResponse[], axis: SliceAxis): SliceLayer[] {
  return features.map((f) => ({
    featureId: f.id,
    color: colorForFeature(f.id),
    cells: f.voxels.cells.map((ijk, n) => ({
      u: ijk[PLANE[axis][0]]!,
      v: ijk[PLANE[axis][1]]!,
      value: f.voxels.values[n]!,
    })),
  }));
}

/**
 * Trajectory polylines projected onto the slice plane, in cell units so they
 * composite directly over the voxel layers.
 */
export function projectPolylines(
  features: FeatureResponse[],
  axis: SliceAxis,
  field: FieldMeta,
): ProjectedPolyline[] {
  const [ua, va] = PLANE[axis];
  const toCell = (coord: number, a: number) =>
    (coord - field.origin[a]!) / field.spacing[a]! - 0.5;
  const out: ProjectedPolyline[] = [];
  for (const f of features) {
    for (const line of f.polylines) {
      out.push({
        featureId: f.id,
        color: colorForFeature(f.id),
        trajectoryId: line.trajectory_id,
        points: line.xyz.map((p) => ({
          u: toCell(p[ua]!, ua),
          v: toCell(p[va]!, va),
        })),
      });
    }
  }
  return out;
}

export function legend(features: FeatureResponse[]): LegendEntry[] {
  return features
    .map((f) => ({ featureId: f.id, color: colorForFeature(f.id) }))
    .sort((a, b) => a.featureId - b.featureId);
}

/** Composite the layers into a standalone SVG string (1 unit per cell). */
export function renderSliceSvg(
  layers: SliceLayer[],
  polylines: ProjectedPolyline[],
  planeDims: [number, number],
): string {
  const [w, h] = planeDims;
  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${w} ${h}">`,
  ];
  for (const layer of layers) {
    for (const c of layer.cells) {
      parts.push(
        `<rect x="${c.u}" y="${c.v}" width="1" height="1" ` +
        `fill="${layer.color}" data-feature="${layer.featureId}"/>`,
      );
    }
  }
  for (const line of polylines) {
    const pts = line.points.map((p) => `${p.u + 0.5},${p.v + 0.5}`).join(" ");
    parts.push(
      `<polyline points="${pts}" fill="none" stroke="${line.color}" ` +
      `stroke-width="0.15" data-feature="${line.featureId}"/>`,
    );
  }
  parts.push("</svg>");
  return parts.join("\n");
}
