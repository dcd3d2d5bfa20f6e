/** The live-view loop: one in-flight read-only poll per view, a connection
 * banner on failure with automatic retries, and a fetch timestamp so stale
 * data is always labeled. */

export interface PollState<T> {
  data: T | null;
  fetchedAt: number | null; // ms epoch of the last successful poll
  error: string | null; // connection banner text, null when healthy
}

export class Poller<T> {
  private timer: ReturnType<typeof setInterval> | null = null;
  private inFlight = false;
  readonly state: PollState<T> = { data: null, fetchedAt: null, error: null };

  constructor(
    private readonly fetchFn: () => Promise<T>,
    private readonly onChange: (state: PollState<T>) => void,
    private readonly intervalMs = 2000,
    private readonly now: () => number = () => Date.now(),
  ) {}

  start(): void {
    if (this.timer !== null) return;
    void this.tick();
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** One poll cycle; concurrent ticks collapse (at most one in flight). */
  async tick(): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    try {
      const data = await this.fetchFn();
      this.state.data = data;
      this.state.fetchedAt = this.now();
      this.state.error = null;
    } catch (err) {
      // keep the stale data (still labeled with its fetch time), show a banner
      this.state.error = err instanceof Error ? err.message : String(err);
    } finally {
      this.inFlight = false;
    }
    this.onChange(this.state);
  }
}
