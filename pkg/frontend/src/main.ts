import { ApiError, PlanmixClient, type TurnView } from './api.js';
import { SessionController } from './controller.js';
import { renderTimeline } from './timeline.js';

const client = new PlanmixClient('');
const controller = new SessionController(client, syncBusyState);

const chatLog = document.getElementById('chat-log') as HTMLDivElement;
const chatForm = document.getElementById('chat-form') as HTMLFormElement;
const chatInput = document.getElementById('chat-input') as HTMLInputElement;
const sendButton = document.getElementById('chat-send') as HTMLButtonElement;
const timelineBox = document.getElementById('timeline') as HTMLDivElement;
const sessionLabel = document.getElementById('session-label') as HTMLSpanElement;
const errorBanner = document.getElementById('error-banner') as HTMLDivElement;
const durationInput = document.getElementById('duration') as HTMLInputElement;
const variantSelect = document.getElementById('variant') as HTMLSelectElement;
const newSessionButton = document.getElementById('new-session') as HTMLButtonElement;

function syncBusyState(): void {
  const busy = controller.busy;
  sendButton.disabled = busy || !controller.session;
  chatInput.disabled = busy || !controller.session;
  newSessionButton.disabled = busy;
  document.body.classList.toggle('busy', busy);
}

function showError(message: string | null): void {
  errorBanner.textContent = message ?? '';
  errorBanner.hidden = !message;
}

function appendBubble(role: 'user' | 'engine', text: string): HTMLDivElement {
  const bubble = document.createElement('div');
  bubble.className = `bubble ${role}`;
  bubble.textContent = text;
  chatLog.appendChild(bubble);
  chatLog.scrollTop = chatLog.scrollHeight;
  return bubble;
}

function describeTurn(turn: TurnView): string {
  if (turn.status === 'plan_rejected') return 'The planner could not produce a valid plan.';
  if (turn.status === 'agent_failed') return 'Synthesis failed for this plan.';
  const steps = turn.plan?.steps.length ?? 0;
  return `Rendered ${steps} step${steps === 1 ? '' : 's'}.`;
}

function appendTurnResult(turn: TurnView): void {
  const bubble = appendBubble('engine', describeTurn(turn));
  if (turn.status !== 'ok' || !turn.audio_url) {
    bubble.classList.add('failed');
    return;
  }
  const audio = document.createElement('audio');
  audio.controls = true;
  audio.preload = 'none';
  audio.src = controller.audioUrl(turn.index);
  bubble.appendChild(audio);
}

function refreshTimeline(): void {
  const plan = controller.latestPlan();
  if (!plan) {
    timelineBox.textContent = 'No plan yet.';
    return;
  }
  renderTimeline(timelineBox, plan, (stepIndex, db) => {
    void adjustVolume(stepIndex, db);
  });
}

async function adjustVolume(stepIndex: number, db: number): Promise<void> {
  showError(null);
  try {
    appendBubble('user', `set the volume of step ${stepIndex + 1} to ${db} dB`);
    const turn = await controller.setStepVolume(stepIndex, db);
    appendTurnResult(turn);
    refreshTimeline();
  } catch (error) {
    showError(errorText(error));
  }
}

function errorText(error: unknown): string {
  if (error instanceof ApiError) return `${error.code}: ${error.message}`;
  return error instanceof Error ? error.message : String(error);
}

async function startSession(): Promise<void> {
  showError(null);
  chatLog.textContent = '';
  timelineBox.textContent = 'No plan yet.';
  try {
    const session = await controller.start(
      Number(durationInput.value) || 10,
      variantSelect.value,
    );
    sessionLabel.textContent = `session ${session.id} · ${session.total_duration}s`;
  } catch (error) {
    showError(errorText(error));
  }
  syncBusyState();
}

chatForm.addEventListener('submit', (event) => {
  event.preventDefault();
  const message = chatInput.value.trim();
  if (!message || controller.busy) return;
  chatInput.value = '';
  appendBubble('user', message);
  showError(null);
  void controller
    .send(message)
    .then((turn) => {
      appendTurnResult(turn);
      refreshTimeline();
    })
    .catch((error) => showError(errorText(error)));
});

newSessionButton.addEventListener('click', () => {
  void startSession();
});

void startSession();
