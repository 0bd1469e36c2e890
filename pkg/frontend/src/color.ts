/** Deterministic feature-id -> categorical color assignment. */

export const PALETTE = [
  "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
  "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
] as const;

/** 32-bit integer hash (Knuth multiplicative) for stable palette indexing. */
export function colorForFeature(id: number): string {
  const h = (id * 2654435761) >>> 0;
  return PALETTE[h % PALETTE.length]!;
}
