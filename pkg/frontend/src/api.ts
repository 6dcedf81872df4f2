/** Typed client for the annotation service (/v1). */
import { GridPayload } from "./rle.js";

export interface RegionPayload {
  expert: number;
  mask: GridPayload;
  pixel_count: number;
}

export interface SessionSummary {
  session_id: string;
  state: string;
  expert_count: number;
  shape: number[];
  has_truth: boolean;
  base_prediction: GridPayload;
  model_region: GridPayload;
  regions: RegionPayload[];
  heatmap: GridPayload;
  corrected_experts: number[];
  previews: Record<string, string>;
}

export interface SessionListEntry {
  session_id: string;
  state: string;
  has_truth: boolean;
  corrected_experts: number[];
}

export interface BranchScores {
  dsc: number | null;
  jaccard: number | null;
  sensitivity: number | null;
  pixels: number;
}

export interface FuseMetrics {
  system: BranchScores;
  expert: BranchScores;
  model: BranchScores;
  risk01: number;
  workload: number[];
}

export interface FuseResult {
  session_id: string;
  state: string;
  system_mask: GridPayload;
  source: GridPayload;
  corrected_experts: number[];
  metrics?: FuseMetrics;
}

export interface CorrectionResult {
  session_id: string;
  expert: number;
  accepted_pixels: number;
  state: string;
}

export interface CreateSessionRequest {
  image?: GridPayload;
  image_pgm_b64?: string;
  truth?: GridPayload;
  expert_count?: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export class AnnotationApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(0, "network", `service unreachable: ${err}`);
    }
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const detail = (body as { detail?: { code?: string; message?: string } }).detail;
      throw new ApiError(resp.status, detail?.code ?? "error",
        detail?.message ?? `HTTP ${resp.status}`);
    }
    return body as T;
  }

  health(): Promise<{ status: string; expert_count: number; shape: number[] }> {
    return this.request("/healthz");
  }

  listSessions(): Promise<{ sessions: SessionListEntry[] }> {
    return this.request("/v1/sessions");
  }

  createSession(req: CreateSessionRequest): Promise<SessionSummary> {
    return this.request("/v1/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
  }

  getSession(id: string): Promise<SessionSummary> {
    return this.request(`/v1/sessions/${id}`);
  }

  submitCorrection(id: string, expert: number, mask: GridPayload): Promise<CorrectionResult> {
    return this.request(`/v1/sessions/${id}/corrections/${expert}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ mask }),
    });
  }

  fuse(id: string): Promise<FuseResult> {
    return this.request(`/v1/sessions/${id}/fuse`, { method: "POST" });
  }

  result(id: string): Promise<FuseResult> {
    return this.request(`/v1/sessions/${id}/result`);
  }
}
