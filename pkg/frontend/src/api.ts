// Typed client for the recommendation service. Response shapes mirror the
// HTTP API one to one; nothing here recomputes or reorders what the server
// sent.

export interface UploadResponse {
  image_id: string;
  memorability: number;
}

export interface Recommendation {
  seed_id: string;
  predicted_gap: number;
  thumbnail_url: string;
}

export interface RecommendationsResponse {
  image_id: string;
  keep_original: boolean;
  recommendations: Recommendation[];
}

export interface SynthesizeResponse {
  result_id: string;
  measured_memorability: number;
  predicted_gap: number;
  result_url: string;
}

export interface SeedInfo {
  seed_id: string;
  memorability: number;
  thumbnail_url: string;
}

export interface HealthResponse {
  status: string;
  seeds: number;
  version: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

async function errorDetail(resp: Response): Promise<string> {
  try {
    const body: unknown = await resp.json();
    if (
      typeof body === "object" &&
      body !== null &&
      typeof (body as { detail?: unknown }).detail === "string"
    ) {
      return (body as { detail: string }).detail;
    }
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return `request failed with status ${resp.status}`;
}

export class ApiClient {
  // base "" means same-origin, which is how the server mounts the UI
  constructor(readonly base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.base + path, init);
    if (!resp.ok) {
      throw new ApiError(resp.status, await errorDetail(resp));
    }
    return (await resp.json()) as T;
  }

  health(): Promise<HealthResponse> {
    return this.request("/health");
  }

  uploadImage(file: Blob, filename: string): Promise<UploadResponse> {
    const form = new FormData();
    form.append("file", file, filename);
    return this.request("/images", { method: "POST", body: form });
  }

  recommendations(imageId: string, q?: number): Promise<RecommendationsResponse> {
    const query = q === undefined ? "" : `?q=${q}`;
    return this.request(`/images/${encodeURIComponent(imageId)}/recommendations${query}`);
  }

  synthesize(imageId: string, seedId: string, alpha?: number): Promise<SynthesizeResponse> {
    const body: Record<string, unknown> = { seed_id: seedId };
    if (alpha !== undefined) {
      body.alpha = alpha;
    }
    return this.request(`/images/${encodeURIComponent(imageId)}/synthesize`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  seeds(): Promise<{ seeds: SeedInfo[] }> {
    return this.request("/seeds");
  }

  imageFileUrl(imageId: string): string {
    return `${this.base}/images/${encodeURIComponent(imageId)}/file`;
  }

  // result_url and thumbnail_url arrive server-relative; prefix the base only
  absoluteUrl(serverRelative: string): string {
    return this.base + serverRelative;
  }
}
