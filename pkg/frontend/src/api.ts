// Thin typed client over the service API. The fetch implementation is
// injectable so tests can run without a browser.

import type { AlertFilters } from "./filterState.js";
import { filtersToParams } from "./filterState.js";
import type {
  AlertPage,
  AlertRecord,
  ContextRecord,
  HealthInfo,
  JudgmentResult,
  QueuePage,
  RankedPanel,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public retryable: boolean,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      // network failure: the caller may retry and must not show stale data as fresh
      throw new ApiError(0, "network", `service unreachable: ${String(err)}`, true);
    }
    if (!response.ok) {
      let code = `http_${response.status}`;
      let message = response.statusText;
      try {
        const body = (await response.json()) as { detail?: { code?: string; message?: string } };
        if (body.detail?.code) code = body.detail.code;
        if (body.detail?.message) message = body.detail.message;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, code, message, response.status >= 500);
    }
    return (await response.json()) as T;
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>("/health");
  }

  alerts(filters: AlertFilters): Promise<AlertPage> {
    const params = filtersToParams(filters);
    const text = params.toString();
    return this.request<AlertPage>(`/alerts${text ? `?${text}` : ""}`);
  }

  alert(alertId: number): Promise<AlertRecord> {
    return this.request<AlertRecord>(`/alerts/${alertId}`);
  }

  alertTweets(alertId: number, contextId: string | null, n: number): Promise<RankedPanel> {
    const params = new URLSearchParams({ n: String(n) });
    if (contextId) params.set("context", contextId);
    return this.request<RankedPanel>(`/alerts/${alertId}/tweets?${params.toString()}`);
  }

  labelQueue(page = 1, pageSize = 20): Promise<QueuePage> {
    return this.request<QueuePage>(`/labels/queue?page=${page}&page_size=${pageSize}`);
  }

  submitJudgment(taskId: string, workerId: string, label: string): Promise<JudgmentResult> {
    return this.request<JudgmentResult>(`/labels/${encodeURIComponent(taskId)}/judgment`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ worker_id: workerId, label }),
    });
  }

  contexts(): Promise<{ contexts: ContextRecord[] }> {
    return this.request<{ contexts: ContextRecord[] }>("/contexts");
  }

  createContext(body: {
    start: string;
    end: string;
    conditions: string[];
    locations: string[];
  }): Promise<{ context_id: string }> {
    return this.request<{ context_id: string }>("/contexts", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }
}
