/** Interval polling with coalescing: if a fetch is still in flight when
 * the next tick arrives, the tick is skipped rather than stacked. */

export class CoalescedPoller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private inFlight = false;

  constructor(
    private readonly poll: () => Promise<void>,
    private readonly intervalMs: number,
  ) {}

  /** Fire once immediately, then on the interval. */
  start(): void {
    if (this.timer !== null) {
      return;
    }
    void this.tick();
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  get running(): boolean {
    return this.timer !== null;
  }

  async tick(): Promise<void> {
    if (this.inFlight) {
      return;
    }
    this.inFlight = true;
    try {
      await this.poll();
    } catch {
      // the page renders stale data plus a banner; polling keeps going
    } finally {
      this.inFlight = false;
    }
  }
}
