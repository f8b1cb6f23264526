// Typed client for the experiment service. Network failures retry with
// exponential backoff; 4xx responses are surfaced immediately.

import { RatingSubmission } from "./grid.js";
import { SessionInfo } from "./flow.js";

const MAX_RETRIES = 5;
const BASE_DELAY_MS = 500;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export async function fetchWithRetry(
  input: string,
  init?: RequestInit,
  fetchImpl: typeof fetch = fetch,
): Promise<Response> {
  let lastError: unknown;
  for (let attempt = 0; attempt < MAX_RETRIES; attempt++) {
    try {
      const response = await fetchImpl(input, init);
      if (response.status >= 500) {
        throw new Error(`server error ${response.status}`);
      }
      return response;
    } catch (error) {
      lastError = error;
      await sleep(BASE_DELAY_MS * 2 ** attempt);
    }
  }
  throw lastError;
}

interface SessionPayload {
  session_id: string;
  stimuli: string[];
  schedule: [string, string][];
  screening_trials: number;
  screening_status: SessionInfo["screeningStatus"];
  next_trial_index: number;
  trial_count: number;
}

function toSessionInfo(payload: SessionPayload): SessionInfo {
  return {
    sessionId: payload.session_id,
    stimuli: payload.stimuli,
    schedule: payload.schedule,
    screeningTrials: payload.screening_trials,
    screeningStatus: payload.screening_status,
    nextTrialIndex: payload.next_trial_index,
  };
}

async function parse<T>(response: Response): Promise<T> {
  if (!response.ok) {
    throw new ApiError(response.status, await response.text());
  }
  return (await response.json()) as T;
}

export async function createSession(): Promise<SessionInfo> {
  const response = await fetchWithRetry("/api/sessions", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({}),
  });
  return toSessionInfo(await parse<SessionPayload>(response));
}

export async function getSession(sessionId: string): Promise<SessionInfo> {
  const response = await fetchWithRetry(`/api/sessions/${sessionId}`);
  return toSessionInfo(await parse<SessionPayload>(response));
}

export async function submitScreening(
  sessionId: string,
  answers: number[],
): Promise<"passed" | "failed"> {
  const response = await fetchWithRetry(`/api/sessions/${sessionId}/screening`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ answers }),
  });
  const body = await parse<{ result: "passed" | "failed" }>(response);
  return body.result;
}

export interface RatingAck {
  status: number;
  nextTrialIndex?: number;
}

/** 409 means the client is out of step; callers resync from the server. */
export async function submitRating(
  sessionId: string,
  submission: RatingSubmission,
): Promise<RatingAck> {
  const response = await fetchWithRetry(`/api/sessions/${sessionId}/ratings`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(submission),
  });
  if (response.status === 409) {
    return { status: 409 };
  }
  const body = await parse<{ next_trial_index: number }>(response);
  return { status: response.status, nextTrialIndex: body.next_trial_index };
}

export function stimulusUrl(stimulusId: string): string {
  return `/api/stimuli/${stimulusId}.wav`;
}

export function screeningUrl(sessionId: string, trial: number): string {
  return `/api/screening/${sessionId}/${trial}.wav`;
}
