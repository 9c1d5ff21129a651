/** Thin typed client over the service's JSON API. Every console feature
 * goes through these calls and nothing else. */

import type {
  HostRecord,
  RequestForm,
  RequestRecord,
  SimulateResult,
  VmImage,
} from "./model.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly body: Record<string, unknown> = {},
  ) {
    super(message);
  }
}

export interface ApiOptions {
  baseUrl: string;
  token?: string;
  /** Injectable for tests; defaults to the global fetch. */
  fetchFn?: typeof fetch;
}

interface ErrorBody {
  error?: { code?: string; message?: string };
  [key: string]: unknown;
}

export class VitlApi {
  private readonly baseUrl: string;
  private readonly token: string;
  private readonly fetchFn: typeof fetch;

  constructor(options: ApiOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, "");
    this.token = options.token ?? "";
    this.fetchFn = options.fetchFn ?? fetch;
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) {
      headers["X-Auth-Token"] = this.token;
    }
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = (await response.json()) as ErrorBody;
    if (!response.ok) {
      throw new ApiError(
        response.status,
        payload.error?.code ?? "unknown",
        payload.error?.message ?? `HTTP ${response.status}`,
        payload,
      );
    }
    return payload as T;
  }

  listImages(): Promise<{ images: VmImage[] }> {
    return this.call("GET", "/images");
  }

  listHosts(): Promise<{ hosts: HostRecord[]; now: number }> {
    return this.call("GET", "/hosts");
  }

  getRequest(jobId: number): Promise<{ request: RequestRecord; now: number }> {
    return this.call("GET", `/requests/${jobId}`);
  }

  submitRequest(form: RequestForm): Promise<{ job_id: number; request: RequestRecord }> {
    return this.call("POST", "/requests", form);
  }

  stopRequest(jobId: number): Promise<{ request: RequestRecord }> {
    return this.call("POST", `/requests/${jobId}:stop`, {});
  }

  simulatePlacement(body: {
    cpu_model: string;
    required_mem?: number;
    request_type?: string;
    excluded_nodes?: number[];
    k?: number;
  }): Promise<SimulateResult> {
    return this.call("POST", "/placements:simulate", body);
  }

  tailEvents(after = 0, limit = 100): Promise<{ events: Array<Record<string, unknown>> }> {
    return this.call("GET", `/events?after=${after}&limit=${limit}`);
  }
}
