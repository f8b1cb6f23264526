import * as api from "./api.js";
import { Player } from "./audio.js";
import { FlowEvent, FlowState, initialState, reduce, resumeScreen, screeningComplete } from "./flow.js";
import { RATING_MAX, RATING_MIN, RATING_STEP, buildSubmission, canSubmit } from "./grid.js";

const SESSION_KEY = "timbrelab-session";
const app = document.getElementById("app")!;
const player = new Player();

let state: FlowState;

function dispatch(event: FlowEvent): void {
  state = reduce(state, event);
  render();
}

async function boot(): Promise<void> {
  const saved = localStorage.getItem(SESSION_KEY);
  if (saved) {
    try {
      const session = await api.getSession(saved);
      state = initialState(session);
      state = { ...state, screen: resumeScreen(session) };
      render();
      return;
    } catch {
      localStorage.removeItem(SESSION_KEY);
    }
  }
  const session = await api.createSession();
  localStorage.setItem(SESSION_KEY, session.sessionId);
  state = initialState(session);
  render();
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function button(label: string, onClick: () => void, enabled = true): HTMLButtonElement {
  const node = el("button", "button", label) as HTMLButtonElement;
  node.disabled = !enabled;
  node.addEventListener("click", onClick);
  return node;
}

function render(): void {
  app.replaceChildren();
  const screen = state.screen;
  switch (screen.kind) {
    case "intro": {
      app.append(
        el("h1", "title", "Timbre similarity study"),
        el("p", "copy",
          "You will hear pairs of short synthesized sounds and rate how " +
          "dissimilar they are. The session takes about 25 minutes. " +
          "Please use headphones in a quiet room."),
        el("p", "copy placeholder",
          "[Participant information and consent text to be supplied by the lab.]"),
        button("I consent — begin", () => dispatch({ type: "BEGIN" })),
      );
      break;
    }
    case "audio-check": {
      app.append(
        el("h1", "title", "Audio check"),
        el("p", "copy", "Play the test sound and set a comfortable volume."),
        button("Play test sound", () => {
          const first = state.session.stimuli[0];
          if (first) player.play(api.stimulusUrl(first));
        }),
        button("My audio works", () => dispatch({ type: "AUDIO_OK" })),
      );
      break;
    }
    case "screening": {
      const trial = screen.trial;
      app.append(
        el("h1", "title", `Headphone check ${trial + 1} / ${state.session.screeningTrials}`),
        el("p", "copy", "You will hear three tones. Which one was the quietest?"),
        button("Play tones", () =>
          player.play(api.screeningUrl(state.session.sessionId, trial))),
      );
      const row = el("div", "choice-row");
      ["First", "Second", "Third"].forEach((label, index) => {
        row.append(button(label, () => void answerScreening(index)));
      });
      app.append(row);
      break;
    }
    case "screening-failed": {
      app.append(
        el("h1", "title", "Thank you"),
        el("p", "copy",
          "The headphone check did not pass, so this session ends here. " +
          "Headphones are required for the listening conditions the study " +
          "needs. We appreciate your time!"),
      );
      localStorage.removeItem(SESSION_KEY);
      break;
    }
    case "familiarization": {
      app.append(
        el("h1", "title", "Meet the sounds"),
        el("p", "copy",
          "Play any of the sounds below to get familiar with the set. " +
          "Continue whenever you are ready."),
      );
      const grid = el("div", "stim-grid");
      state.session.stimuli.forEach((sid, index) => {
        grid.append(button(`Sound ${index + 1}`, () => player.play(api.stimulusUrl(sid))));
      });
      app.append(grid, button("Start the trials", () =>
        dispatch({ type: "FAMILIARIZATION_DONE" })));
      break;
    }
    case "trial": {
      const { index, view } = screen;
      const [stimA, stimB] = view.pair;
      app.append(
        el("h1", "title", `Trial ${index + 1} / ${state.session.schedule.length}`),
        el("p", "copy", "Listen to both sounds (replay as often as you like), " +
          "then rate how dissimilar they are."),
      );
      const row = el("div", "choice-row");
      row.append(
        button(view.playedA ? `Replay A (${view.replayCountA})` : "Play A", () => {
          player.play(api.stimulusUrl(stimA));
          dispatch({ type: "PLAYED", which: "a" });
        }),
        button(view.playedB ? `Replay B (${view.replayCountB})` : "Play B", () => {
          player.play(api.stimulusUrl(stimB));
          dispatch({ type: "PLAYED", which: "b" });
        }),
      );
      app.append(row);

      const slider = document.createElement("input");
      slider.type = "range";
      slider.min = String(RATING_MIN);
      slider.max = String(RATING_MAX);
      slider.step = String(RATING_STEP);
      slider.value = view.value === null ? "4.5" : String(view.value);
      slider.className = view.value === null ? "slider untouched" : "slider";
      slider.addEventListener("input", () =>
        dispatch({ type: "SLIDER_MOVED", raw: Number(slider.value) }));
      const labels = el("div", "slider-labels");
      labels.append(el("span", "", "0 — identical"), el("span", "", "9 — very dissimilar"));
      const readout = el("p", "readout",
        view.value === null ? "move the slider to rate" : `rating: ${view.value}`);
      app.append(slider, labels, readout,
        button("Submit rating", () => void submitCurrent(), canSubmit(view)));
      break;
    }
    case "complete": {
      app.append(
        el("h1", "title", "All done — thank you!"),
        el("p", "copy", `Completion code: ${state.session.sessionId.slice(0, 8)}`),
      );
      localStorage.removeItem(SESSION_KEY);
      break;
    }
  }
}

async function answerScreening(answer: number): Promise<void> {
  dispatch({ type: "SCREENING_ANSWERED", answer });
  if (screeningComplete(state)) {
    const result = await api.submitScreening(state.session.sessionId, state.screeningAnswers);
    dispatch({ type: "SCREENING_RESULT", result });
  }
}

async function submitCurrent(): Promise<void> {
  const screen = state.screen;
  if (screen.kind !== "trial" || !canSubmit(screen.view)) {
    return;
  }
  const submission = buildSubmission(screen.view, screen.index);
  const ack = await api.submitRating(state.session.sessionId, submission);
  if (ack.status === 409) {
    // out of step with the server; resync silently to its progress
    const session = await api.getSession(state.session.sessionId);
    dispatch({ type: "RESYNC", nextTrialIndex: session.nextTrialIndex,
               screeningStatus: session.screeningStatus });
    return;
  }
  if (ack.nextTrialIndex !== undefined) {
    dispatch({ type: "SUBMIT_ACKED", nextTrialIndex: ack.nextTrialIndex });
  }
}

void boot();
