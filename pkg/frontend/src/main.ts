/** Application controller: wires the API client, the state machine and
 * the renderer together, and owns the URL hash for deep-link resume.
 *
 * Rules enforced here rather than in the renderer:
 *  - at most one request in flight per session; actions are ignored
 *    while one is pending,
 *  - nothing renders until the server confirms it (no optimistic UI),
 *  - a conflict (another client advanced the session) triggers a
 *    refetch of the authoritative view before the buttons re-enable.
 */

import { ApiClient, isConflict } from "./api.js";
import { render, renderUnavailable } from "./render.js";
import type { Handlers } from "./render.js";
import {
  applyView,
  canAnswer,
  canStart,
  initialState,
  stageReport,
  stagedReports,
} from "./state.js";
import type { ConsultState } from "./state.js";

export interface AppOptions {
  root: HTMLElement;
  /** Service origin; discovered from the page when omitted. */
  baseUrl?: string;
  fetchFn?: typeof fetch;
  window?: Window;
}

/** Service base URL: explicit option, then a `window.CONSULT_SERVICE_URL`
 * override, then a `?service=` query parameter, then same-origin. */
export function resolveBaseUrl(win: Window, explicit?: string): string {
  if (explicit !== undefined) return explicit;
  const override = (win as unknown as Record<string, unknown>)
    .CONSULT_SERVICE_URL;
  if (typeof override === "string") return override;
  const param = new URLSearchParams(win.location.search).get("service");
  if (param !== null) return param;
  return "";
}

export function sessionIdFromHash(hash: string): string | null {
  const match = /^#\/s\/([^/]+)$/.exec(hash);
  return match ? decodeURIComponent(match[1]) : null;
}

function describe(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}

export class ConsultApp {
  readonly client: ApiClient;
  state: ConsultState | null = null;
  private unavailable = "loading";
  private lastAction: (() => Promise<void>) | null = null;
  private readonly root: HTMLElement;
  private readonly win: Window;

  constructor(options: AppOptions) {
    this.root = options.root;
    this.win = options.window ?? window;
    this.client = new ApiClient(
      resolveBaseUrl(this.win, options.baseUrl),
      options.fetchFn,
    );
  }

  /** Fetch the symptom catalog and, if the URL names a session, resume it. */
  async start(): Promise<void> {
    this.win.addEventListener("hashchange", () => {
      void this.onHashChange();
    });
    await this.load();
  }

  private async load(): Promise<void> {
    try {
      const health = await this.client.health();
      const catalog = await this.client.catalog(health.catalog);
      this.state = initialState(catalog.symptoms);
    } catch (err) {
      this.unavailable = describe(err);
      this.renderNow();
      return;
    }
    const sid = sessionIdFromHash(this.win.location.hash);
    if (sid !== null) {
      await this.resume(sid);
    } else {
      this.renderNow();
    }
  }

  private resume(id: string): Promise<void> {
    return this.perform(async () => {
      const view = await this.client.getSession(id);
      applyView(this.state!, view);
    });
  }

  /** Run one server-confirmed action with the in-flight guard held. */
  private async perform(action: () => Promise<void>): Promise<void> {
    const state = this.state;
    if (state === null || state.inFlight) return;
    state.inFlight = true;
    state.error = null;
    this.renderNow();
    this.lastAction = action;
    try {
      await action();
      this.lastAction = null;
    } catch (err) {
      if (isConflict(err) && state.session !== null) {
        await this.refreshAfterConflict(state, state.session.id);
      } else {
        state.error = describe(err);
      }
    } finally {
      state.inFlight = false;
      this.renderNow();
    }
  }

  private async refreshAfterConflict(
    state: ConsultState,
    id: string,
  ): Promise<void> {
    try {
      const view = await this.client.getSession(id);
      applyView(state, view);
      state.error =
        "This consultation moved ahead in another window; showing the latest state.";
      this.lastAction = null;
    } catch (err) {
      state.error = describe(err);
    }
  }

  private async onHashChange(): Promise<void> {
    const state = this.state;
    if (state === null || state.inFlight) return;
    const sid = sessionIdFromHash(this.win.location.hash);
    if (sid === null) {
      if (state.session !== null) {
        this.state = initialState(state.symptoms);
        this.renderNow();
      }
    } else if (state.session === null || state.session.id !== sid) {
      await this.resume(sid);
    }
  }

  private startConsultation(): Promise<void> {
    const state = this.state;
    if (state === null || !canStart(state)) return Promise.resolve();
    return this.perform(async () => {
      const view = await this.client.createSession(stagedReports(state));
      applyView(state, view);
      this.setHash(view.id);
    });
  }

  private answer(answer: "yes" | "no"): Promise<void> {
    const state = this.state;
    if (state === null || !canAnswer(state)) return Promise.resolve();
    const session = state.session!;
    return this.perform(async () => {
      const view = await this.client.answer(session.id, answer, session.turn);
      applyView(state, view);
    });
  }

  private async retry(): Promise<void> {
    if (this.state === null) {
      await this.load();
      return;
    }
    const action = this.lastAction;
    if (action !== null) {
      await this.perform(action);
      return;
    }
    this.state.error = null;
    this.renderNow();
  }

  private restart(): void {
    const state = this.state;
    if (state === null || state.inFlight) return;
    this.setHash(null);
    this.state = initialState(state.symptoms);
    this.renderNow();
  }

  private setHash(id: string | null): void {
    const { location, history } = this.win;
    if (id === null) {
      // replaceState clears the fragment without firing hashchange.
      history.replaceState(null, "", location.pathname + location.search);
    } else {
      location.hash = `#/s/${encodeURIComponent(id)}`;
    }
  }

  private handlers(): Handlers {
    return {
      onStage: (symptom, present) => {
        const state = this.state;
        if (state === null || state.inFlight) return;
        stageReport(state, symptom, present);
        this.renderNow();
      },
      onStart: () => {
        void this.startConsultation();
      },
      onAnswer: (answer) => {
        void this.answer(answer);
      },
      onRetry: () => {
        void this.retry();
      },
      onRestart: () => {
        this.restart();
      },
    };
  }

  private renderNow(): void {
    if (this.state === null) {
      renderUnavailable(this.root, this.unavailable, () => {
        void this.retry();
      });
      return;
    }
    render(this.root, this.state, this.handlers());
  }
}

export async function bootstrap(options: AppOptions): Promise<ConsultApp> {
  const app = new ConsultApp(options);
  await app.start();
  return app;
}
