import type { SegmentRequest } from "./types.js";

/** Parameter form values as the inputs hold them (strings for numerics). */
export interface ParamsFormValues {
  k: string; // "kx,ky,kz,kt"
  c_f: string;
  w_d: string;
  w_p: string;
  w_f: string;
  eps_c: string;
  eps_m: string;
  max_iterations: string;
  normalize: boolean;
  workers: string;
  chunk_size: string; // empty = all at once
}

export const DEFAULT_FORM: ParamsFormValues = {
  k: "2,2,2,2",
  c_f: "1",
  w_d: "1",
  w_p: "1",
  w_f: "1",
  eps_c: "0.01",
  eps_m: "0",
  max_iterations: "50",
  normalize: true,
  workers: "1",
  chunk_size: "",
};

export type FieldErrors = Partial<Record<keyof ParamsFormValues, string>>;

/** Field-level validation mirroring the service's constraints. */
export function validateForm(form: ParamsFormValues): FieldErrors {
  const errors: FieldErrors = {};
  const k = form.k.split(",").map((s) => Number(s.trim()));
  if (k.length !== 4 || k.some((v) => !Number.isInteger(v) || v < 1)) {
    errors.k = "four positive integers, e.g. 2,2,2,2";
  }
  const positive: (keyof ParamsFormValues)[] = ["c_f", "eps_c"];
  for (const name of positive) {
    if (!(Number(form[name]) > 0)) errors[name] = "must be > 0";
  }
  const nonNegative: (keyof ParamsFormValues)[] = ["w_d", "w_p", "w_f", "eps_m"];
  for (const name of nonNegative) {
    if (!(Number(form[name]) >= 0)) errors[name] = "must be >= 0";
  }
  if (!errors.w_d && !errors.w_p && Number(form.w_d) + Number(form.w_p) <= 0) {
    errors.w_p = "w_d + w_p must be > 0";
  }
  if (!errors.w_d && !errors.w_f && Number(form.w_d) + Number(form.w_f) <= 0) {
    errors.w_f = "w_d + w_f must be > 0";
  }
  if (!(Number(form.max_iterations) >= 1) ||
      !Number.isInteger(Number(form.max_iterations))) {
    errors.max_iterations = "positive integer";
  }
  if (!(Number(form.workers) >= 1) || !Number.isInteger(Number(form.workers))) {
    errors.workers = "positive integer";
  }
  if (form.chunk_size !== "" &&
      (!Number.isInteger(Number(form.chunk_size)) || Number(form.chunk_size) < 1)) {
    errors.chunk_size = "positive integer or empty";
  }
  return errors;
}

/** Build the request body; only valid forms may be submitted. */
export function toRequest(form: ParamsFormValues): SegmentRequest {
  return {
    k: form.k.split(",").map((s) => Number(s.trim())),
    c_f: Number(form.c_f),
    w_d: Number(form.w_d),
    w_p: Number(form.w_p),
    w_f: Number(form.w_f),
    eps_c: Number(form.eps_c),
    eps_m: Number(form.eps_m),
    max_iterations: Number(form.max_iterations),
    normalize: form.normalize,
    workers: Number(form.workers),
    chunk_size: form.chunk_size === "" ? null : Number(form.chunk_size),
  };
}

/** Re-populate the form from the params a completed run reports back. */
export function fromReportedParams(params: Record<string, unknown>,
                                   prev: ParamsFormValues): ParamsFormValues {
  const num = (v: unknown) => String(v as number);
  return {
    ...prev,
    k: (params.k as number[]).join(","),
    c_f: num(params.c_f),
    w_d: num(params.w_d),
    w_p: num(params.w_p),
    w_f: num(params.w_f),
    eps_c: num(params.eps_c),
    eps_m: num(params.eps_m),
    max_iterations: num(params.max_iterations),
    normalize: Boolean(params.normalize),
  };
}
