import { describe, expect, it } from "vitest";

import type { SessionView } from "../src/api.js";
import {
  applyView,
  canAnswer,
  canStart,
  initialState,
  stageReport,
  stagedReports,
  transcript,
} from "../src/state.js";

const SYMPTOMS = ["cough", "fever", "rash"];

function makeView(overrides: Partial<SessionView> = {}): SessionView {
  return {
    id: "s1",
    turn: 0,
    max_turns: 5,
    done: false,
    reports: [],
    history: [],
    next: { symptom: "fever" },
    diagnosis: null,
    ...overrides,
  };
}

describe("staging self-reports", () => {
  it("starts on the picker with no reports staged", () => {
    const state = initialState(SYMPTOMS);
    expect(state.phase).toBe("picker");
    expect(stagedReports(state)).toEqual([]);
    expect(canStart(state)).toBe(true);
    expect(canAnswer(state)).toBe(false);
  });

  it("stages, overwrites and clears individual reports", () => {
    const state = initialState(SYMPTOMS);
    stageReport(state, "cough", true);
    stageReport(state, "rash", false);
    stageReport(state, "cough", false);
    expect(stagedReports(state)).toEqual([
      { symptom: "cough", present: false },
      { symptom: "rash", present: false },
    ]);
    stageReport(state, "rash", null);
    expect(stagedReports(state)).toEqual([
      { symptom: "cough", present: false },
    ]);
  });

  it("rejects symptoms that are not in the catalog", () => {
    const state = initialState(SYMPTOMS);
    expect(() => stageReport(state, "telepathy", true)).toThrow(
      /unknown symptom/,
    );
  });
});

describe("accepting server views", () => {
  it("moves to the active phase when a question is pending", () => {
    const state = initialState(SYMPTOMS);
    state.error = "old error";
    applyView(state, makeView());
    expect(state.phase).toBe("active");
    expect(state.session?.next?.symptom).toBe("fever");
    expect(state.error).toBeNull();
    expect(canAnswer(state)).toBe(true);
  });

  it("moves to the concluded phase when a diagnosis arrives", () => {
    const state = initialState(SYMPTOMS);
    applyView(
      state,
      makeView({
        done: true,
        next: null,
        diagnosis: [{ disease: "flu", prob: 1.0 }],
      }),
    );
    expect(state.phase).toBe("concluded");
    expect(canAnswer(state)).toBe(false);
  });

  it("rejects views with neither a question nor a diagnosis", () => {
    const state = initialState(SYMPTOMS);
    expect(() => applyView(state, makeView({ next: null }))).toThrow(
      /exactly one of question or diagnosis/,
    );
  });

  it("rejects views with both a question and a diagnosis", () => {
    const state = initialState(SYMPTOMS);
    expect(() =>
      applyView(
        state,
        makeView({ diagnosis: [{ disease: "flu", prob: 1.0 }] }),
      ),
    ).toThrow(/exactly one of question or diagnosis/);
  });

  it("rejects views whose done flag disagrees with the payload", () => {
    const state = initialState(SYMPTOMS);
    expect(() => applyView(state, makeView({ done: true }))).toThrow(
      /done flag disagrees/,
    );
    expect(() =>
      applyView(
        state,
        makeView({ next: null, diagnosis: [{ disease: "flu", prob: 1.0 }] }),
      ),
    ).toThrow(/done flag disagrees/);
  });
});

describe("guards and the transcript", () => {
  it("blocks answering while a request is in flight", () => {
    const state = initialState(SYMPTOMS);
    applyView(state, makeView());
    state.inFlight = true;
    expect(canAnswer(state)).toBe(false);
    expect(canStart(state)).toBe(false);
  });

  it("replays the history in server order", () => {
    const state = initialState(SYMPTOMS);
    applyView(
      state,
      makeView({
        turn: 2,
        history: [
          { symptom: "fever", answer: "yes" },
          { symptom: "cough", answer: "no" },
        ],
        next: { symptom: "rash" },
      }),
    );
    expect(transcript(state)).toEqual([
      { symptom: "fever", answer: "yes" },
      { symptom: "cough", answer: "no" },
    ]);
  });

  it("has an empty transcript before any session exists", () => {
    expect(transcript(initialState(SYMPTOMS))).toEqual([]);
  });
});
