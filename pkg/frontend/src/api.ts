/** API client. Every call the workbench makes goes through here, and the
 * paths are declared up front so contract tests can diff them against the
 * server's documented route table. */

import type {
  ApiErrorBody,
  ClusterSnapshot,
  ExperimentRecord,
  ExperimentSummary,
  TemplateWire,
} from "./model.js";

/** (method, path template) pairs this client is allowed to touch. */
export const USED_ROUTES: ReadonlyArray<readonly [string, string]> = [
  ["GET", "/api/v1/experiment"],
  ["GET", "/api/v1/experiment/{experiment_id}"],
  ["GET", "/api/v1/experiment/{experiment_id}/logs"],
  ["POST", "/api/v1/experiment/{experiment_id}/kill"],
  ["POST", "/api/v1/experiment/from-template/{template_name}"],
  ["GET", "/api/v1/template"],
  ["GET", "/api/v1/template/{template_name}"],
  ["GET", "/api/v1/cluster"],
] as const;

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public details?: unknown,
  ) {
    super(message);
  }
}

export interface Settings {
  server: string; // origin, e.g. http://127.0.0.1:8000 (empty = same origin)
  token: string; // empty = no Authorization header (insecure server)
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private settings: Settings,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private headers(json: boolean): Record<string, string> {
    const headers: Record<string, string> = {};
    if (this.settings.token) headers["Authorization"] = `Bearer ${this.settings.token}`;
    if (json) headers["Content-Type"] = "application/json";
    return headers;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(this.settings.server + path, {
      method,
      headers: this.headers(body !== undefined),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const contentType = response.headers.get("content-type") ?? "";
    const payload = contentType.includes("application/json")
      ? await response.json()
      : await response.text();
    if (!response.ok) {
      const err = payload as ApiErrorBody;
      throw new ApiError(
        response.status,
        typeof err === "object" && err?.code ? err.code : String(response.status),
        typeof err === "object" && err?.message ? err.message : String(payload),
        typeof err === "object" ? err?.details : undefined,
      );
    }
    return payload as T;
  }

  listExperiments(): Promise<{ experiments: ExperimentSummary[] }> {
    return this.request("GET", "/api/v1/experiment");
  }

  getExperiment(id: string): Promise<ExperimentRecord> {
    return this.request("GET", `/api/v1/experiment/${id}`);
  }

  getLogs(id: string): Promise<string> {
    return this.request("GET", `/api/v1/experiment/${id}/logs`);
  }

  killExperiment(id: string): Promise<ExperimentRecord> {
    return this.request("POST", `/api/v1/experiment/${id}/kill`);
  }

  createFromTemplate(
    name: string,
    params: Record<string, string>,
  ): Promise<ExperimentRecord> {
    return this.request("POST", `/api/v1/experiment/from-template/${name}`, { params });
  }

  listTemplates(): Promise<{ templates: { name: string; description: string }[] }> {
    return this.request("GET", "/api/v1/template");
  }

  getTemplate(name: string): Promise<TemplateWire> {
    return this.request("GET", `/api/v1/template/${name}`);
  }

  clusterSnapshot(): Promise<ClusterSnapshot> {
    return this.request("GET", "/api/v1/cluster");
  }
}

const SETTINGS_KEY = "controltower.settings";

export function loadSettings(storage: Pick<Storage, "getItem">): Settings {
  try {
    const raw = storage.getItem(SETTINGS_KEY);
    if (raw) {
      const parsed = JSON.parse(raw);
      return { server: parsed.server ?? "", token: parsed.token ?? "" };
    }
  } catch {
    /* fall through to defaults */
  }
  return { server: "", token: "" };
}

export function saveSettings(storage: Pick<Storage, "setItem">, settings: Settings): void {
  storage.setItem(SETTINGS_KEY, JSON.stringify(settings));
}
