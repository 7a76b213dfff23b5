/** DOM-free annotation flow: one leased test on screen at a time, forced
 * choice, idempotent submit, progress reconciled against the service.
 *
 * The service is authoritative for everything: reloading the page (a fresh
 * flow over the same session token) re-fetches the same leased test, and
 * retrying a submit after a network failure can never duplicate an answer.
 */

import { ApiClient, ServiceError, TestItem } from "./api.js";

export type FlowState =
  | { kind: "loading" }
  | { kind: "test"; testId: string; items: TestItem[]; selected: number | null }
  | { kind: "complete" }
  | { kind: "error"; message: string; retryable: boolean };

export class AnnotationFlow {
  state: FlowState = { kind: "loading" };
  token = "";
  answered = 0;
  target = 0;
  private inFlight = false;
  private listeners: Array<() => void> = [];

  constructor(
    private api: ApiClient,
    private submitRetries = 2,
  ) {}

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  private setState(s: FlowState): void {
    this.state = s;
    this.notify();
  }

  /** Create a session (or adopt an existing token) and fetch the first test. */
  async start(existingToken?: string): Promise<void> {
    try {
      if (existingToken) {
        this.token = existingToken;
      } else {
        const session = await this.api.createSession();
        this.token = session.token;
        this.target = session.target;
      }
      await this.refresh();
    } catch (e) {
      this.setState({ kind: "error", message: String(e), retryable: true });
    }
  }

  /** Re-fetch lease and progress; used on start, after submit, and when a
   * lease expires under us. */
  async refresh(): Promise<void> {
    const progress = await this.api.progress(this.token);
    this.answered = progress.answered;
    this.target = progress.target;
    const next = await this.api.nextTest(this.token);
    if (next.complete) {
      this.setState({ kind: "complete" });
    } else {
      this.setState({
        kind: "test",
        testId: next.test_id!,
        items: next.items!,
        selected: null,
      });
    }
  }

  /** Exactly-one selection; selecting again moves it. */
  select(index: number): void {
    if (this.state.kind !== "test") return;
    if (index < 0 || index >= this.state.items.length) return;
    this.setState({ ...this.state, selected: index });
  }

  canSubmit(): boolean {
    return this.state.kind === "test" && this.state.selected !== null && !this.inFlight;
  }

  /** Submit the current choice; retries the identical payload on network
   * failure (the service deduplicates), then advances to the next test. */
  async submit(): Promise<void> {
    if (!this.canSubmit() || this.state.kind !== "test") return;
    const { testId, selected } = this.state;
    this.inFlight = true;
    try {
      let lastError: unknown = null;
      for (let attempt = 0; attempt <= this.submitRetries; attempt++) {
        try {
          await this.api.submitAnswer(this.token, testId, selected!);
          lastError = null;
          break;
        } catch (e) {
          if (e instanceof ServiceError) throw e; // real rejection, don't retry
          lastError = e;
        }
      }
      if (lastError !== null) throw lastError;
      this.answered += 1; // optimistic; reconciled in refresh()
      await this.refresh();
    } catch (e) {
      if (e instanceof ServiceError && e.status === 404) {
        // lease vanished (e.g. expired and answered elsewhere): refetch
        await this.refresh();
      } else {
        this.setState({ kind: "error", message: String(e), retryable: true });
      }
    } finally {
      this.inFlight = false;
    }
  }

  progressFraction(): number {
    return this.target > 0 ? this.answered / this.target : 0;
  }
}
