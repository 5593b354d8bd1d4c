// Typed client for the chat service's JSON routes. The base URL is a
// runtime setting so the same build can point at any server.

export interface Candidate {
  text: string;
  mtld: number;
  mattr: number;
  combined: number;
}

export interface MessageResponse {
  candidates: Candidate[];
  selected_index: number;
  reply: string;
}

export interface HistoryTurn {
  speaker: "user" | "agent";
  text: string;
}

export interface HealthInfo {
  status: string;
  model_info: { variant: string; d_latent: number; checkpoint_hash: string };
}

export type SelectStrategy = "lexdiv" | "first" | "random";

export class ServiceError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class ChatApi {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let res: Response;
    try {
      res = await this.fetchImpl(this.baseUrl.replace(/\/$/, "") + path, init);
    } catch (e) {
      throw new ServiceError(0, `service unreachable: ${e}`);
    }
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = await res.json();
        if (body.detail) detail = String(body.detail);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ServiceError(res.status, detail);
    }
    return res.json() as Promise<T>;
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>("/health");
  }

  async createSession(): Promise<string> {
    const body = await this.request<{ session_id: string }>("/sessions", {
      method: "POST",
    });
    return body.session_id;
  }

  sendMessage(
    sessionId: string,
    text: string,
    options: { n?: number; select?: SelectStrategy } = {},
  ): Promise<MessageResponse> {
    return this.request<MessageResponse>(`/sessions/${sessionId}/message`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text, ...options }),
    });
  }

  async history(sessionId: string): Promise<HistoryTurn[]> {
    const body = await this.request<{ turns: HistoryTurn[] }>(
      `/sessions/${sessionId}/history`,
    );
    return body.turns;
  }
}
