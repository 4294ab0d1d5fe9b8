// Thin fetch wrapper over the service endpoints. The fetch implementation
// is injectable so tests can script responses without a server.

import type { Bundle, ChatMessage, SessionInfo, TelemetryEvent } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let code = "unknown_error";
  let message = response.statusText;
  try {
    const body = await response.json();
    code = body.code ?? code;
    message = body.message ?? message;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, code, message);
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private token: string,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private headers(): Record<string, string> {
    return {
      Authorization: `Bearer ${this.token}`,
      "Content-Type": "application/json",
    };
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      throw await parseError(response);
    }
    if (response.status === 204) {
      return undefined as T;
    }
    return (await response.json()) as T;
  }

  getBundle(recommendationId: string): Promise<Bundle> {
    return this.request("GET", `/api/bundle/${recommendationId}`);
  }

  createSession(recommendationId: string): Promise<SessionInfo> {
    return this.request("POST", "/api/chat/sessions", {
      recommendation_id: recommendationId,
    });
  }

  postMessage(
    sessionId: string,
    recipients: string[],
    content: string,
  ): Promise<{ messages: ChatMessage[] }> {
    return this.request("POST", `/api/chat/sessions/${sessionId}/messages`, {
      recipients,
      content,
    });
  }

  pollMessages(sessionId: string, after: number): Promise<{ messages: ChatMessage[] }> {
    return this.request("GET", `/api/chat/sessions/${sessionId}/messages?after=${after}`);
  }

  postEvents(events: TelemetryEvent[]): Promise<void> {
    return this.request("POST", "/api/events", { events });
  }

  postSurvey(dimension: string, itemId: string, rating: number): Promise<void> {
    return this.request("POST", "/api/survey", {
      dimension,
      item_id: itemId,
      rating,
    });
  }
}
