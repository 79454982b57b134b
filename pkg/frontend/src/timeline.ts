// Timeline lanes for a plan: overlapping steps never share a row, and a
// valid plan (server-enforced concurrency <= 2) never needs more than two
// rows. Assignment is deterministic for a given plan.

import type { PlanView } from './api.js';

export interface TimelineLane {
  stepIndex: number;
  label: string;
  start: number;
  end: number;
  volume: number | null;
  lane: number;
}

export function assignLanes(plan: PlanView): TimelineLane[] {
  const order = plan.steps
    .map((step, index) => ({ step, index }))
    .sort(
      (a, b) =>
        a.step.start_time - b.step.start_time ||
        a.step.end_time - b.step.end_time ||
        a.index - b.index,
    );
  const laneEnds: number[] = [];
  const lanes: TimelineLane[] = [];
  for (const { step, index } of order) {
    // Half-open intervals: a step may start exactly where another ended.
    let lane = laneEnds.findIndex((end) => end <= step.start_time);
    if (lane === -1) {
      lane = laneEnds.length;
      laneEnds.push(0);
    }
    laneEnds[lane] = step.end_time;
    lanes.push({
      stepIndex: index,
      label: step.description,
      start: step.start_time,
      end: step.end_time,
      volume: step.volume ?? null,
      lane,
    });
  }
  lanes.sort((a, b) => a.stepIndex - b.stepIndex);
  return lanes;
}

export function laneCount(lanes: TimelineLane[]): number {
  return lanes.reduce((max, l) => Math.max(max, l.lane + 1), 0);
}

export function renderTimeline(
  container: HTMLElement,
  plan: PlanView,
  onVolumeChange: ((stepIndex: number, db: number) => void) | null,
): void {
  container.textContent = '';
  const lanes = assignLanes(plan);
  const rows = laneCount(lanes);
  const track = document.createElement('div');
  track.className = 'timeline-track';
  track.style.height = `${rows * 3.4}rem`;
  for (const lane of lanes) {
    const bar = document.createElement('div');
    bar.className = 'timeline-bar';
    bar.style.left = `${(lane.start / plan.total_duration) * 100}%`;
    bar.style.width = `${((lane.end - lane.start) / plan.total_duration) * 100}%`;
    bar.style.top = `${lane.lane * 3.4}rem`;
    bar.title = `${lane.label} [${lane.start}-${lane.end}s]`;

    const label = document.createElement('span');
    label.className = 'timeline-label';
    label.textContent =
      lane.volume !== null ? `${lane.label} (${lane.volume} dB)` : lane.label;
    bar.appendChild(label);

    if (onVolumeChange) {
      const slider = document.createElement('input');
      slider.type = 'range';
      slider.min = '-70';
      slider.max = '0';
      slider.step = '1';
      slider.value = String(lane.volume ?? -20);
      slider.className = 'timeline-volume';
      slider.title = 'volume (dB)';
      slider.addEventListener('change', () => {
        onVolumeChange(lane.stepIndex, Number(slider.value));
      });
      bar.appendChild(slider);
    }
    track.appendChild(bar);
  }
  const scale = document.createElement('div');
  scale.className = 'timeline-scale';
  scale.textContent = `0s - ${plan.total_duration}s  (${rows} lane${rows === 1 ? '' : 's'})`;
  container.appendChild(track);
  container.appendChild(scale);
}
