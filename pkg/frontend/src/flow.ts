// Experiment flow as a pure state machine. The server is the source of
// truth for the schedule and progress; the client holds no randomization
// logic and only advances on acknowledged events.

import { TrialView, freshTrialView, snapToGrid } from "./grid.js";

export interface SessionInfo {
  sessionId: string;
  stimuli: string[];
  schedule: [string, string][];
  screeningTrials: number;
  screeningStatus: "pending" | "passed" | "failed";
  nextTrialIndex: number;
}

export type Screen =
  | { kind: "intro" }
  | { kind: "audio-check" }
  | { kind: "screening"; trial: number }
  | { kind: "screening-failed" }
  | { kind: "familiarization" }
  | { kind: "trial"; index: number; view: TrialView }
  | { kind: "complete" };

export interface FlowState {
  screen: Screen;
  session: SessionInfo;
  screeningAnswers: number[];
}

export type FlowEvent =
  | { type: "BEGIN" }
  | { type: "AUDIO_OK" }
  | { type: "SCREENING_ANSWERED"; answer: number }
  | { type: "SCREENING_RESULT"; result: "passed" | "failed" }
  | { type: "FAMILIARIZATION_DONE" }
  | { type: "PLAYED"; which: "a" | "b" }
  | { type: "SLIDER_MOVED"; raw: number }
  | { type: "SUBMIT_ACKED"; nextTrialIndex: number }
  | { type: "RESYNC"; nextTrialIndex: number; screeningStatus: SessionInfo["screeningStatus"] };

export function initialState(session: SessionInfo): FlowState {
  return { screen: { kind: "intro" }, session, screeningAnswers: [] };
}

export function screeningComplete(state: FlowState): boolean {
  return state.screeningAnswers.length >= state.session.screeningTrials;
}

function trialScreen(session: SessionInfo, index: number): Screen {
  if (index >= session.schedule.length) {
    return { kind: "complete" };
  }
  const pair = session.schedule[index]!;
  return { kind: "trial", index, view: freshTrialView(pair) };
}

/** Where a (re)loaded session belongs, given server-reported progress. */
export function resumeScreen(session: SessionInfo): Screen {
  if (session.screeningStatus === "failed") {
    return { kind: "screening-failed" };
  }
  if (session.screeningStatus === "pending") {
    return { kind: "intro" };
  }
  if (session.nextTrialIndex === 0) {
    return { kind: "familiarization" };
  }
  return trialScreen(session, session.nextTrialIndex);
}

export function reduce(state: FlowState, event: FlowEvent): FlowState {
  const { screen, session } = state;
  switch (event.type) {
    case "BEGIN":
      return screen.kind === "intro" ? { ...state, screen: { kind: "audio-check" } } : state;

    case "AUDIO_OK":
      if (screen.kind !== "audio-check") return state;
      if (session.screeningStatus === "passed") {
        return { ...state, screen: resumeScreen(session) };
      }
      return { ...state, screen: { kind: "screening", trial: 0 } };

    case "SCREENING_ANSWERED": {
      if (screen.kind !== "screening") return state;
      const answers = [...state.screeningAnswers, event.answer];
      const next = screen.trial + 1;
      const screenAfter: Screen =
        next < session.screeningTrials ? { kind: "screening", trial: next } : screen;
      return { ...state, screeningAnswers: answers, screen: screenAfter };
    }

    case "SCREENING_RESULT": {
      if (screen.kind !== "screening") return state;
      if (event.result === "failed") {
        return {
          ...state,
          session: { ...session, screeningStatus: "failed" },
          screen: { kind: "screening-failed" },
        };
      }
      return {
        ...state,
        session: { ...session, screeningStatus: "passed" },
        screen: { kind: "familiarization" },
      };
    }

    case "FAMILIARIZATION_DONE":
      if (screen.kind !== "familiarization") return state;
      return { ...state, screen: trialScreen(session, session.nextTrialIndex) };

    case "PLAYED": {
      if (screen.kind !== "trial") return state;
      const view = { ...screen.view };
      if (event.which === "a") {
        view.playedA = true;
        view.replayCountA += 1;
      } else {
        view.playedB = true;
        view.replayCountB += 1;
      }
      return { ...state, screen: { ...screen, view } };
    }

    case "SLIDER_MOVED": {
      if (screen.kind !== "trial") return state;
      if (!Number.isFinite(event.raw)) return state;
      const view = { ...screen.view, value: snapToGrid(event.raw) };
      return { ...state, screen: { ...screen, view } };
    }

    case "SUBMIT_ACKED": {
      if (screen.kind !== "trial") return state;
      const updated = { ...session, nextTrialIndex: event.nextTrialIndex };
      return { ...state, session: updated, screen: trialScreen(updated, event.nextTrialIndex) };
    }

    case "RESYNC": {
      const updated = {
        ...session,
        nextTrialIndex: event.nextTrialIndex,
        screeningStatus: event.screeningStatus,
      };
      if (updated.screeningStatus === "failed") {
        return { ...state, session: updated, screen: { kind: "screening-failed" } };
      }
      if (updated.screeningStatus === "passed") {
        return { ...state, session: updated, screen: trialScreen(updated, updated.nextTrialIndex) };
      }
      return { ...state, session: updated, screen: { kind: "intro" } };
    }
  }
}
