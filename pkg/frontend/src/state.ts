/** Client-side consultation state machine.
 *
 * The server view is authoritative: nothing renders optimistically, and a
 * session view is accepted only if exactly one of {pending question,
 * ranked diagnosis} is set. Answering is guarded three ways: a question
 * must be pending, the session must not be concluded, and no other
 * request may be in flight.
 */

import type { SessionView, SymptomReport } from "./api.js";

export type Phase = "picker" | "active" | "concluded";

export interface TranscriptEntry {
  symptom: string;
  answer: "yes" | "no";
}

export interface ConsultState {
  phase: Phase;
  symptoms: string[];
  staged: Map<string, boolean>;
  session: SessionView | null;
  inFlight: boolean;
  error: string | null;
}

export function initialState(symptoms: string[]): ConsultState {
  return {
    phase: "picker",
    symptoms: [...symptoms],
    staged: new Map(),
    session: null,
    inFlight: false,
    error: null,
  };
}

/** Stage a self-report on the picker screen; ``present: null`` clears it. */
export function stageReport(
  state: ConsultState,
  symptom: string,
  present: boolean | null,
): void {
  if (!state.symptoms.includes(symptom)) {
    throw new Error(`unknown symptom ${symptom}`);
  }
  if (present === null) {
    state.staged.delete(symptom);
  } else {
    state.staged.set(symptom, present);
  }
}

export function stagedReports(state: ConsultState): SymptomReport[] {
  return [...state.staged.entries()].map(([symptom, present]) => ({
    symptom,
    present,
  }));
}

/** Accept a server session view after validating its shape invariant. */
export function applyView(state: ConsultState, view: SessionView): void {
  const hasQuestion = view.next !== null;
  const hasDiagnosis = view.diagnosis !== null;
  if (hasQuestion === hasDiagnosis) {
    throw new Error(
      "invalid session view: expected exactly one of question or diagnosis",
    );
  }
  if (hasQuestion !== !view.done) {
    throw new Error("invalid session view: done flag disagrees with payload");
  }
  state.session = view;
  state.phase = view.done ? "concluded" : "active";
  state.error = null;
}

export function transcript(state: ConsultState): TranscriptEntry[] {
  if (state.session === null) return [];
  return state.session.history.map((entry) => ({
    symptom: entry.symptom,
    answer: entry.answer,
  }));
}

export function canAnswer(state: ConsultState): boolean {
  return (
    state.phase === "active" &&
    state.session !== null &&
    state.session.next !== null &&
    !state.inFlight
  );
}

export function canStart(state: ConsultState): boolean {
  return state.phase === "picker" && !state.inFlight;
}
