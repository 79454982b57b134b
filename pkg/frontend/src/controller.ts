// Session flow state, DOM-free so it can drive both the page and the tests.
// One request in flight per session; the server stays the single source of
// truth (every mutation goes through the conversational turn API, including
// volume changes).

import { PlanmixClient, type PlanView, type SessionView, type TurnView } from './api.js';

export class SessionController {
  session: SessionView | null = null;
  busy = false;

  constructor(
    private readonly client: PlanmixClient,
    private readonly onChange: () => void = () => {},
  ) {}

  private async withLock<T>(work: () => Promise<T>): Promise<T> {
    if (this.busy) throw new Error('a request is already in flight');
    this.busy = true;
    this.onChange();
    try {
      return await work();
    } finally {
      this.busy = false;
      this.onChange();
    }
  }

  async start(totalDuration = 10, variant = 'standard'): Promise<SessionView> {
    return this.withLock(async () => {
      this.session = await this.client.startSession(totalDuration, variant);
      return this.session;
    });
  }

  private requireSession(): SessionView {
    if (!this.session) throw new Error('no active session');
    return this.session;
  }

  async send(message: string): Promise<TurnView> {
    return this.withLock(async () => {
      const session = this.requireSession();
      const turn = await this.client.sendMessage(session.id, message);
      // Refresh the whole view so the UI always mirrors server state.
      this.session = await this.client.getSession(session.id);
      return turn;
    });
  }

  /** Re-render with a new loudness target by talking to the planner. */
  setStepVolume(stepIndex: number, db: number): Promise<TurnView> {
    return this.send(volumeMessage(stepIndex, db));
  }

  latestTurn(): TurnView | null {
    const turns = this.session?.turns ?? [];
    return turns.length ? turns[turns.length - 1] : null;
  }

  latestPlan(): PlanView | null {
    const turns = this.session?.turns ?? [];
    for (let i = turns.length - 1; i >= 0; i--) {
      if (turns[i].plan) return turns[i].plan;
    }
    return null;
  }

  audioUrl(turnIndex: number): string {
    return this.client.audioUrl(this.requireSession().id, turnIndex);
  }
}

/** Volume adjustments ride the conversational channel as plain revisions. */
export function volumeMessage(stepIndex: number, db: number): string {
  return `set the volume of step ${stepIndex + 1} to ${db} dB`;
}
