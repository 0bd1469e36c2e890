import type {
  CentersResponse,
  DatasetMeta,
  FeatureResponse,
  JobState,
  MergeResponse,
  SegmentRequest,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;
export type SleepLike = (ms: number) => Promise<void>;

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

const realSleep: SleepLike = (ms) => new Promise((r) => setTimeout(r, ms));

/** Thin typed client over the service routes; fetch/sleep injectable for tests. */
export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: FetchLike = (...a) => fetch(...a),
    private sleep: SleepLike = realSleep,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.base + path, init);
    const body = await resp.json();
    if (!resp.ok) {
      const detail =
        typeof body?.detail === "string" ? body.detail : JSON.stringify(body);
      throw new ApiError(resp.status, detail);
    }
    return body as T;
  }

  meta(): Promise<DatasetMeta> {
    return this.request("/api/dataset/meta");
  }

  submitSegment(req: SegmentRequest): Promise<{ job_id: number }> {
    return this.request("/api/segment", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
  }

  job(id: number): Promise<JobState> {
    return this.request(`/api/jobs/${id}`);
  }

  /** Poll every `cadenceMs` until the job settles; reports progress en route. */
  async pollJob(
    id: number,
    onProgress?: (job: JobState) => void,
    cadenceMs = 500,
  ): Promise<JobState> {
    for (;;) {
      const job = await this.job(id);
      onProgress?.(job);
      if (job.status === "done" || job.status === "failed") return job;
      await this.sleep(cadenceMs);
    }
  }

  centers(filters: Record<string, string> = {}, page = 1, pageSize = 50):
    Promise<CentersResponse> {
    const qs = new URLSearchParams({
      ...filters,
      page: String(page),
      page_size: String(pageSize),
    });
    return this.request(`/api/centers?${qs}`);
  }

  feature(
    id: number,
    opts: { t?: number; slice?: string; window?: string } = {},
  ): Promise<FeatureResponse> {
    const qs = new URLSearchParams();
    if (opts.t !== undefined) qs.set("t", String(opts.t));
    if (opts.slice !== undefined) qs.set("slice", opts.slice);
    if (opts.window !== undefined) qs.set("window", opts.window);
    const suffix = qs.size ? `?${qs}` : "";
    return this.request(`/api/features/${id}${suffix}`);
  }

  merge(epsM: number): Promise<MergeResponse> {
    return this.request("/api/merge", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ eps_m: epsM }),
    });
  }
}

/**
 * Discards responses that finish after a newer request started, so stale
 * payloads never overwrite fresher view state.
 */
export class LatestOnly {
  private seq = 0;

  async run<T>(work: () => Promise<T>): Promise<T | undefined> {
    const ticket = ++this.seq;
    const result = await work();
    return ticket === this.seq ? result : undefined;
  }
}
