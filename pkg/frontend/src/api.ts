// Typed client for the planmix session API. The UI is a thin client: every
// artifact it shows comes from these endpoints, never from local audio math.

export interface PlanStepView {
  description: string;
  start_time: number;
  end_time: number;
  volume?: number | null;
}

export interface PlanView {
  steps: PlanStepView[];
  total_duration: number;
}

export interface TurnView {
  index: number;
  status: 'ok' | 'plan_rejected' | 'agent_failed';
  user_message: string;
  plan: PlanView | null;
  audio_url: string | null;
  created_at: number;
}

export interface SessionView {
  id: string;
  total_duration: number;
  sample_rate: number;
  variant: string;
  turns: TurnView[];
}

export class ApiError extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly status: number,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

async function parseProblem(response: Response): Promise<ApiError> {
  let code = 'HttpError';
  let message = `${response.status} ${response.statusText}`;
  try {
    const body = (await response.json()) as { code?: string; message?: string };
    if (body.code) code = body.code;
    if (body.message) message = body.message;
  } catch {
    // non-JSON error body; keep the generic message
  }
  return new ApiError(code, message, response.status);
}

export class PlanmixClient {
  constructor(private readonly baseUrl: string = '') {}

  private async requestJson<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, init);
    if (!response.ok) throw await parseProblem(response);
    return (await response.json()) as T;
  }

  startSession(totalDuration = 10, variant = 'standard'): Promise<SessionView> {
    return this.requestJson<SessionView>('/sessions', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ total_duration: totalDuration, variant }),
    });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.requestJson<SessionView>(`/sessions/${sessionId}`);
  }

  sendMessage(sessionId: string, message: string): Promise<TurnView> {
    return this.requestJson<TurnView>(`/sessions/${sessionId}/turns`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ message }),
    });
  }

  audioUrl(sessionId: string, turnIndex: number): string {
    return `${this.baseUrl}/sessions/${sessionId}/turns/${turnIndex}/audio`;
  }

  async fetchTurnAudio(sessionId: string, turnIndex: number): Promise<ArrayBuffer> {
    const response = await fetch(this.audioUrl(sessionId, turnIndex));
    if (!response.ok) throw await parseProblem(response);
    return response.arrayBuffer();
  }
}
