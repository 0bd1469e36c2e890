import type { CenterRow, DatasetMeta } from "./types.js";

export type SliceAxis = "x" | "y" | "z";

/** Center-table range filters as entered; empty strings mean "no bound". */
export type TableFilters = Record<string, { min: string; max: string }>;

/**
 * Client view state. Timestep/slice clamp to dataset metadata; selections
 * are pruned whenever a new center table arrives.
 */
export class ViewState {
  meta: DatasetMeta | null = null;
  selected: number[] = [];
  timestep = 0;
  sliceAxis: SliceAxis = "z";
  sliceIndex = 0;
  windowLo = 0;
  windowHi = 0;
  epsM = 0;
  hideLargest = false;
  filters: TableFilters = {};
  private rows: CenterRow[] = [];

  setMeta(meta: DatasetMeta): void {
    this.meta = meta;
    if (meta.points) {
      this.windowLo = meta.points.t_min ?? 0;
      this.windowHi = meta.points.t_max ?? 0;
    } else if (meta.field) {
      this.windowLo = meta.field.times[0] ?? 0;
      this.windowHi = meta.field.times[meta.field.times.length - 1] ?? 0;
    }
    this.setTimestep(this.timestep);
    this.setSlice(this.sliceAxis, this.sliceIndex);
  }

  setTimestep(t: number): void {
    const n = this.meta?.field?.times.length ?? 0;
    this.timestep = n === 0 ? 0 : Math.min(Math.max(Math.trunc(t), 0), n - 1);
  }

  setSlice(axis: SliceAxis, index: number): void {
    this.sliceAxis = axis;
    const dims = this.meta?.field?.dims ?? [1, 1, 1];
    const n = dims[{ x: 0, y: 1, z: 2 }[axis]] ?? 1;
    this.sliceIndex = Math.min(Math.max(Math.trunc(index), 0), n - 1);
  }

  setWindow(lo: number, hi: number): void {
    this.windowLo = Math.min(lo, hi);
    this.windowHi = Math.max(lo, hi);
  }

  /** New table arrived: keep only selections that still exist. */
  setCenters(rows: CenterRow[]): void {
    this.rows = rows;
    const ids = new Set(rows.map((r) => r.id));
    this.selected = this.selected.filter((id) => ids.has(id));
  }

  toggleSelect(id: number): void {
    if (this.selected.includes(id)) {
      this.selected = this.selected.filter((s) => s !== id);
    } else {
      this.selected = [...this.selected, id];
    }
  }

  /** Feature ids to show, honoring the hide-largest toggle (view-side only). */
  visibleSelection(): number[] {
    if (!this.hideLargest || this.rows.length === 0) return this.selected;
    let largest: CenterRow | null = null;
    for (const r of this.rows) {
      const n = r.n_points + r.n_fields;
      if (largest === null || n > largest.n_points + largest.n_fields) {
        largest = r;
      }
    }
    return this.selected.filter((id) => id !== largest!.id);
  }

  /** Filters -> the service's `prop=min:max` query parameters. */
  filterParams(): Record<string, string> {
    const out: Record<string, string> = {};
    for (const [prop, { min, max }] of Object.entries(this.filters)) {
      if (min === "" && max === "") continue;
      const lo = min === "" ? "-1e308" : min;
      const hi = max === "" ? "1e308" : max;
      out[prop] = `${lo}:${hi}`;
    }
    return out;
  }

  windowParam(): string {
    return `${this.windowLo}:${this.windowHi}`;
  }

  sliceParam(): string {
    return `${this.sliceAxis}:${this.sliceIndex}`;
  }
}
