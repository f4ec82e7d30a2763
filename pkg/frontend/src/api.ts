/**
 * Typed client for the delay-prediction service.
 *
 * Every number the UI shows comes out of one of these response payloads;
 * the shapes mirror the service's committed JSON schemas.
 */

export interface AirportInfo {
  code: string;
  lat: number;
  lon: number;
}

export interface AirportsResponse {
  schema_version: number;
  airports: AirportInfo[];
}

export interface ModelInfoResponse {
  schema_version: number;
  service_version: string;
  config: {
    n_airports: number;
    history_steps: number;
    horizon_steps: number;
    relations: number;
    diffusion_order: number;
    heads: number;
    hidden_widths: number[];
    slots_per_day: number;
    [key: string]: unknown;
  };
  metadata: Record<string, unknown>;
}

export interface InterveneRequest {
  window_start: string;
  airports: string[];
}

/** delta[airport][step][channel], channel 0 = arrival, 1 = departure. */
export interface InterveneResponse {
  schema_version: number;
  kind: "intervention_result";
  window_start: string;
  input_times: string[];
  horizon_times: (string | null)[];
  airports: string[];
  intervened_airports: string[];
  delta: number[][][];
  factual: number[][][];
  intervened: number[][][];
}

export interface ProblemDoc {
  code: string;
  message: string;
}

/** Service error with the problem document's stable code, surfaced verbatim. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  airports(): Promise<AirportsResponse> {
    return this.request<AirportsResponse>("GET", "/api/airports");
  }

  model(): Promise<ModelInfoResponse> {
    return this.request<ModelInfoResponse>("GET", "/api/model");
  }

  intervene(req: InterveneRequest, signal?: AbortSignal): Promise<InterveneResponse> {
    return this.request<InterveneResponse>("POST", "/api/intervene", req, signal);
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    signal?: AbortSignal,
  ): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      signal,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let code = "internal";
      let message = `HTTP ${response.status}`;
      try {
        const problem = (await response.json()) as ProblemDoc;
        code = problem.code ?? code;
        message = problem.message ?? message;
      } catch {
        // non-JSON error body; keep the fallback code
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }
}
