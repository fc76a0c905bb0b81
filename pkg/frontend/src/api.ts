/** Typed client for the generation service. All UI data comes through here. */

export interface Candidate {
  spec_text: string;
  score: number;
  language_valid: boolean;
  visualization_valid: boolean;
  phantom_fields: string[];
}

export interface SchemaField {
  name: string;
  kind: string;
}

export interface GenerateResponse {
  candidates: Candidate[];
  schema: SchemaField[];
  checkpoint_id: string;
  dataset_name: string;
  row_index: number;
}

export interface RandomDataset {
  name: string;
  data: Record<string, unknown>[];
}

export interface HealthResponse {
  status: string;
  model_loaded: boolean;
  checkpoint_id: string;
}

export interface GenerateRequest {
  data?: Record<string, unknown>[];
  dataset?: string;
  beam_width: number;
  max_candidates?: number;
  row_index?: number;
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`service answered ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function errorDetail(res: Response): Promise<string> {
  try {
    const body = (await res.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    return JSON.stringify(body);
  } catch {
    return res.statusText || "unreadable error body";
  }
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(this.base + path, init);
    if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
    return (await res.json()) as T;
  }

  generate(req: GenerateRequest, signal?: AbortSignal): Promise<GenerateResponse> {
    return this.request<GenerateResponse>("/generate", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
      signal,
    });
  }

  randomDataset(signal?: AbortSignal): Promise<RandomDataset> {
    return this.request<RandomDataset>("/datasets/random", { signal });
  }

  health(signal?: AbortSignal): Promise<HealthResponse> {
    return this.request<HealthResponse>("/health", { signal });
  }
}
