// Typed client for the session API. The UI never computes pipeline math;
// everything displayed comes from these calls, and every decision goes back
// through them, so UI-entered decisions land in the same sidecars the
// headless pipeline reads.

import type {
  AlignmentDecision,
  GridView,
  HistogramView,
  RunReport,
  SessionView,
  StepName,
  ThresholdDecision,
  ZProfileView,
} from "./types";

export class ApiRequestError extends Error {
  constructor(
    readonly status: number,
    readonly errorType: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseOrThrow<T>(resp: Response): Promise<T> {
  const body = await resp.json();
  if (!resp.ok) {
    const err = body?.error ?? { type: "HttpError", message: resp.statusText };
    throw new ApiRequestError(resp.status, err.type, err.message);
  }
  return body as T;
}

export class SessionClient {
  constructor(readonly base: string = "") {}

  private async get<T>(path: string): Promise<T> {
    return parseOrThrow<T>(await fetch(`${this.base}${path}`));
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await fetch(`${this.base}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return parseOrThrow<T>(resp);
  }

  session(): Promise<SessionView> {
    return this.get("/api/session");
  }

  histogram(): Promise<HistogramView> {
    return this.get("/api/histogram");
  }

  zProfile(): Promise<ZProfileView> {
    return this.get("/api/zprofile");
  }

  grid(tier: number): Promise<GridView> {
    return this.get(`/api/grid?tier=${tier}`);
  }

  sliceUrl(k: number, maxPx: number, align?: AlignmentDecision): string {
    let url = `${this.base}/api/slice?k=${k}&max_px=${maxPx}`;
    if (align) {
      url +=
        `&angle=${align.angle_deg}` +
        `&r0=${align.row_range[0]}&r1=${align.row_range[1]}` +
        `&c0=${align.col_range[0]}&c1=${align.col_range[1]}`;
    }
    return url;
  }

  dividerMaskUrl(tier: number): string {
    return `${this.base}/api/divider_mask?tier=${tier}`;
  }

  postAlign(decision: AlignmentDecision) {
    return this.post<{ ok: boolean }>("/api/align", decision);
  }

  postThresholds(decision: ThresholdDecision) {
    return this.post<{ ok: boolean }>("/api/thresholds", decision);
  }

  postTierCuts(cuts: number[]) {
    return this.post<{ ok: boolean }>("/api/tier_cuts", { cuts });
  }

  postGridCuts(decision: {
    tier: number;
    rotation_deg?: number;
    row_cuts?: number[];
    col_cuts?: number[];
  }) {
    return this.post<{ ok: boolean }>("/api/grid_cuts", decision);
  }

  runThrough(step: StepName) {
    return this.post<{ ok: boolean; report: RunReport }>("/api/run", {
      through: step,
    });
  }
}
