/** DOM rendering. The whole view re-renders from state on every change;
 * at consultation scale that is simpler and safer than incremental
 * updates, and it keeps the markup a pure function of the state. */

import type { ConsultState } from "./state.js";
import { canAnswer, canStart, transcript } from "./state.js";

export interface Handlers {
  onStage(symptom: string, present: boolean | null): void;
  onStart(): void;
  onAnswer(answer: "yes" | "no"): void;
  onRetry(): void;
  onRestart(): void;
}

function el(
  tag: string,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

function errorBanner(state: ConsultState, handlers: Handlers): HTMLElement[] {
  if (state.error === null) return [];
  const retry = el("button", { "data-testid": "retry" }, ["Retry"]);
  retry.addEventListener("click", handlers.onRetry);
  return [
    el("div", { "data-testid": "error", class: "error", role: "alert" }, [
      state.error,
      retry,
    ]),
  ];
}

function pickerScreen(state: ConsultState, handlers: Handlers): HTMLElement {
  const rows = state.symptoms.map((symptom) => {
    const staged = state.staged.has(symptom)
      ? state.staged.get(symptom)!
      : null;
    const options: [string, boolean | null][] = [
      ["have it", true],
      ["don't have it", false],
      ["skip", null],
    ];
    const buttons = options.map(([label, value]) => {
      const selected = staged === value;
      const button = el(
        "button",
        {
          "data-testid": `stage-${symptom}-${value === null ? "skip" : value}`,
          "aria-pressed": String(selected),
          class: selected ? "selected" : "",
        },
        [label],
      );
      button.addEventListener("click", () => handlers.onStage(symptom, value));
      return button;
    });
    return el("li", { "data-testid": `symptom-row-${symptom}` }, [
      el("span", { class: "symptom-name" }, [symptom]),
      ...buttons,
    ]);
  });
  const start = el(
    "button",
    { "data-testid": "start", ...(canStart(state) ? {} : { disabled: "" }) },
    ["Start consultation"],
  );
  start.addEventListener("click", handlers.onStart);
  return el("section", { "data-testid": "picker" }, [
    el("h2", {}, ["What brings you in today?"]),
    el("p", {}, [
      "Mark any symptoms you know about, or start straight away.",
    ]),
    el("ul", { class: "symptom-list" }, rows),
    start,
    ...errorBanner(state, handlers),
  ]);
}

function transcriptList(state: ConsultState): HTMLElement {
  const items = transcript(state).map((entry) =>
    el("li", { "data-testid": "transcript-entry" }, [
      el("span", { class: "question" }, [`Do you have ${entry.symptom}?`]),
      el("span", { class: `answer answer-${entry.answer}` }, [entry.answer]),
    ]),
  );
  return el("ol", { "data-testid": "transcript", class: "transcript" }, items);
}

function progress(state: ConsultState): HTMLElement {
  const session = state.session!;
  return el("div", { "data-testid": "progress", class: "progress" }, [
    `question ${session.turn} of ${session.max_turns}`,
  ]);
}

function activeScreen(state: ConsultState, handlers: Handlers): HTMLElement {
  const session = state.session!;
  const enabled = canAnswer(state);
  const answerButton = (answer: "yes" | "no") => {
    const button = el(
      "button",
      {
        "data-testid": `answer-${answer}`,
        ...(enabled ? {} : { disabled: "" }),
      },
      [answer === "yes" ? "Yes" : "No"],
    );
    button.addEventListener("click", () => handlers.onAnswer(answer));
    return button;
  };
  return el("section", { "data-testid": "consultation" }, [
    progress(state),
    transcriptList(state),
    el("div", { "data-testid": "question", class: "pending" }, [
      `Do you have ${session.next!.symptom}?`,
    ]),
    answerButton("yes"),
    answerButton("no"),
    sessionLink(session.id),
    ...errorBanner(state, handlers),
  ]);
}

function concludedScreen(state: ConsultState, handlers: Handlers): HTMLElement {
  const session = state.session!;
  const items = session.diagnosis!.map((entry) =>
    el("li", { "data-testid": "diagnosis-entry" }, [
      el("span", { class: "disease" }, [entry.disease]),
      el("span", { class: "prob", "data-prob": String(entry.prob) }, [
        `${(100 * entry.prob).toFixed(1)}%`,
      ]),
    ]),
  );
  const restart = el("button", { "data-testid": "restart" }, [
    "New consultation",
  ]);
  restart.addEventListener("click", handlers.onRestart);
  return el("section", { "data-testid": "consultation" }, [
    progress(state),
    transcriptList(state),
    el("h2", {}, ["Likely causes"]),
    el("ol", { "data-testid": "diagnosis", class: "diagnosis" }, items),
    restart,
    sessionLink(session.id),
    ...errorBanner(state, handlers),
  ]);
}

function sessionLink(id: string): HTMLElement {
  return el("p", { class: "session-link" }, [
    "Resume link: ",
    el("a", { "data-testid": "session-link", href: `#/s/${id}` }, [id]),
  ]);
}

export function render(
  root: HTMLElement,
  state: ConsultState,
  handlers: Handlers,
): void {
  root.replaceChildren(
    state.phase === "picker"
      ? pickerScreen(state, handlers)
      : state.phase === "active"
        ? activeScreen(state, handlers)
        : concludedScreen(state, handlers),
  );
}

/** Shown when the very first health/catalog fetch fails and there is no
 * consultation state to fall back on. */
export function renderUnavailable(
  root: HTMLElement,
  message: string,
  onRetry: () => void,
): void {
  const retry = el("button", { "data-testid": "retry" }, ["Retry"]);
  retry.addEventListener("click", onRetry);
  root.replaceChildren(
    el("section", { "data-testid": "unavailable" }, [
      el("div", { "data-testid": "error", class: "error", role: "alert" }, [
        message,
        retry,
      ]),
    ]),
  );
}
