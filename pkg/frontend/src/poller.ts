/** Interval polling with stale-data tracking for connection-loss banners. */

export const DEFAULT_INTERVAL_MS = 2000;

export class Poller {
  private timer: ReturnType<typeof setInterval> | null = null;
  lastSync: number | null = null;
  lastError: string | null = null;

  constructor(
    private readonly tick: () => Promise<void>,
    readonly intervalMs: number = DEFAULT_INTERVAL_MS,
    private readonly now: () => number = () => Date.now(),
  ) {}

  async poll(): Promise<void> {
    try {
      await this.tick();
      this.lastSync = this.now();
      this.lastError = null;
    } catch (err) {
      this.lastError = err instanceof Error ? err.message : String(err);
    }
  }

  start(): void {
    if (this.timer !== null) return;
    void this.poll();
    this.timer = setInterval(() => void this.poll(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  isStale(): boolean {
    if (this.lastSync === null) return this.lastError !== null;
    return this.lastError !== null || this.now() - this.lastSync > this.intervalMs * 3;
  }

  staleText(): string {
    if (!this.isStale()) return "";
    const since = this.lastSync === null ? "never" : new Date(this.lastSync).toLocaleTimeString();
    return `connection lost — showing stale data (last sync: ${since})`;
  }
}
