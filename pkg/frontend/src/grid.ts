// Rating grid: 0 to 9 in steps of 0.5. Every value that can leave the
// client goes through snapToGrid / buildSubmission, so off-grid or
// out-of-range submissions are impossible by construction.

export const RATING_MIN = 0;
export const RATING_MAX = 9;
export const RATING_STEP = 0.5;

export function isOnGrid(value: number): boolean {
  if (!Number.isFinite(value) || value < RATING_MIN || value > RATING_MAX) {
    return false;
  }
  const steps = value / RATING_STEP;
  return Math.abs(steps - Math.round(steps)) < 1e-9;
}

/** Clamp into [0, 9] and round to the nearest 0.5 step. */
export function snapToGrid(raw: number): number {
  if (!Number.isFinite(raw)) {
    throw new Error(`cannot snap non-finite value ${raw}`);
  }
  const clamped = Math.min(RATING_MAX, Math.max(RATING_MIN, raw));
  return Math.round(clamped / RATING_STEP) * RATING_STEP;
}

export interface TrialView {
  pair: [string, string];
  playedA: boolean;
  playedB: boolean;
  replayCountA: number;
  replayCountB: number;
  value: number | null;
}

export function freshTrialView(pair: [string, string]): TrialView {
  return { pair, playedA: false, playedB: false, replayCountA: 0, replayCountB: 0, value: null };
}

/** Both sounds heard at least once and the slider touched. */
export function canSubmit(view: TrialView): boolean {
  return view.playedA && view.playedB && view.value !== null && isOnGrid(view.value);
}

export interface RatingSubmission {
  trial_index: number;
  rating: number;
  replay_count_a: number;
  replay_count_b: number;
}

/** The only constructor of rating submissions; throws on any gate violation. */
export function buildSubmission(view: TrialView, trialIndex: number): RatingSubmission {
  if (!view.playedA || !view.playedB) {
    throw new Error("play both sounds before rating");
  }
  if (view.value === null) {
    throw new Error("move the slider before submitting");
  }
  if (!isOnGrid(view.value)) {
    throw new Error(`rating ${view.value} is off the 0.5 grid`);
  }
  return {
    trial_index: trialIndex,
    rating: view.value,
    replay_count_a: view.replayCountA,
    replay_count_b: view.replayCountB,
  };
}
