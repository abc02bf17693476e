/** Console state machine.
 *
 * The console trusts the service for every displayed number. Each state
 * below wraps the latest server snapshot (or the view built from it); the
 * only local additions are the user's per-card level picks and transient
 * error banners. Transitions happen exclusively in response to a server
 * reply, so the screen can never drift ahead of the session.
 */

import {
  NetworkFailure,
  ServiceFailure,
  getBatch,
  getStatus,
  submitLabels,
  type Transport,
} from "./api";
import {
  labelPayload,
  makeView,
  offendingCardIds,
  setCardLevel,
  submitEnabled,
} from "./state";
import type { Level, SessionSnapshot, SessionView } from "./types";

export type ConsoleState =
  | { kind: "token_entry"; error: string | null }
  | { kind: "loading" }
  | {
      kind: "labeling";
      view: SessionView;
      banner: string | null;
      offending: number[];
    }
  | { kind: "retraining"; token: string; snapshot: SessionSnapshot }
  | { kind: "complete"; view: SessionView }
  | { kind: "failed_submit"; view: SessionView; message: string };

export type Scheduler = (fn: () => void, ms: number) => void;

export interface ConsoleOptions {
  /** Delay between status polls while the service is retraining. */
  pollMs?: number;
  /** Injected timer, so tests can drive polling by hand. */
  schedule?: Scheduler;
  /** Called after every state change. */
  onChange?: (state: ConsoleState) => void;
}

const DEFAULT_POLL_MS = 2000;

export class AnnotationConsole {
  readonly pollMs: number;
  state: ConsoleState = { kind: "token_entry", error: null };

  private readonly transport: Transport;
  private readonly schedule: Scheduler;
  private readonly onChange?: (state: ConsoleState) => void;

  constructor(transport: Transport, options?: ConsoleOptions) {
    this.transport = transport;
    this.pollMs = options?.pollMs ?? DEFAULT_POLL_MS;
    this.schedule = options?.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.onChange = options?.onChange;
  }

  /** Fetch the session behind a token and land on the matching screen. */
  async open(token: string): Promise<void> {
    this.setState({ kind: "loading" });
    let snapshot: SessionSnapshot;
    try {
      snapshot = await getStatus(this.transport, token);
    } catch (err) {
      if (err instanceof ServiceFailure && err.code === "not_found") {
        this.setState({ kind: "token_entry", error: err.message });
        return;
      }
      if (err instanceof NetworkFailure) {
        this.setState({ kind: "token_entry", error: err.message });
        return;
      }
      throw err;
    }
    await this.enterFromSnapshot(snapshot);
  }

  /** Record the user's pick on one card. Purely local until submit. */
  label(poolId: number, level: Level): void {
    if (this.state.kind === "labeling") {
      this.setState({
        ...this.state,
        view: setCardLevel(this.state.view, poolId, level),
      });
    } else if (this.state.kind === "failed_submit") {
      this.setState({
        kind: "labeling",
        view: setCardLevel(this.state.view, poolId, level),
        banner: null,
        offending: [],
      });
    }
  }

  /** Send the current batch. Refuses silently while any card is unlabeled. */
  async submit(): Promise<void> {
    if (this.state.kind !== "labeling") {
      return;
    }
    const view = this.state.view;
    if (!submitEnabled(view)) {
      return;
    }
    await this.performSubmit(view);
  }

  /** Resend the labels that a network failure stranded. */
  async retry(): Promise<void> {
    if (this.state.kind !== "failed_submit") {
      return;
    }
    await this.performSubmit(this.state.view);
  }

  /** One polling step while the service retrains. */
  async poll(): Promise<void> {
    if (this.state.kind !== "retraining") {
      return;
    }
    const token = this.state.token;
    let snapshot: SessionSnapshot;
    try {
      snapshot = await getStatus(this.transport, token);
    } catch {
      // Transient hiccup: keep the spinner up and try again later.
      this.schedule(() => {
        void this.poll();
      }, this.pollMs);
      return;
    }
    await this.enterFromSnapshot(snapshot);
  }

  private async performSubmit(view: SessionView): Promise<void> {
    let snapshot: SessionSnapshot;
    try {
      snapshot = await submitLabels(this.transport, view.token, labelPayload(view));
    } catch (err) {
      if (err instanceof NetworkFailure) {
        this.setState({ kind: "failed_submit", view, message: err.message });
        return;
      }
      if (err instanceof ServiceFailure) {
        if (err.code === "validation") {
          this.setState({
            kind: "labeling",
            view,
            banner: err.message,
            offending: offendingCardIds(err.message, view.cards),
          });
          return;
        }
        if (err.code === "conflict") {
          // Another writer got there first, or the session moved on.
          // Re-sync from the server instead of guessing.
          let fresh: SessionSnapshot;
          try {
            fresh = await getStatus(this.transport, view.token);
          } catch (statusErr) {
            const message =
              statusErr instanceof Error ? statusErr.message : err.message;
            this.setState({ kind: "failed_submit", view, message });
            return;
          }
          await this.enterFromSnapshot(fresh);
          return;
        }
      }
      throw err;
    }
    await this.enterFromSnapshot(snapshot);
  }

  private async enterFromSnapshot(snapshot: SessionSnapshot): Promise<void> {
    if (snapshot.status === "complete") {
      this.setState({ kind: "complete", view: makeView(snapshot) });
      return;
    }
    if (snapshot.status === "retraining") {
      this.enterRetraining(snapshot);
      return;
    }
    try {
      const batch = await getBatch(this.transport, snapshot.token);
      this.setState({
        kind: "labeling",
        view: makeView(snapshot, batch),
        banner: null,
        offending: [],
      });
    } catch (err) {
      if (err instanceof ServiceFailure && err.code === "conflict") {
        // The session slid into retraining between the two calls.
        this.enterRetraining(snapshot);
        return;
      }
      throw err;
    }
  }

  private enterRetraining(snapshot: SessionSnapshot): void {
    this.setState({ kind: "retraining", token: snapshot.token, snapshot });
    this.schedule(() => {
      void this.poll();
    }, this.pollMs);
  }

  private setState(state: ConsoleState): void {
    this.state = state;
    this.onChange?.(state);
  }
}
