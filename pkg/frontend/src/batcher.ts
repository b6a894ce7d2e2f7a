import type { ServiceClient } from "./api.js";
import { ServiceError } from "./api.js";
import type { GazeSample } from "./types.js";

export interface BatcherOptions {
  flushMs?: number;      // timer-driven flush period
  maxBatch?: number;     // flush immediately at this size
  retryMs?: number;      // delay before retrying a failed send
  maxRetryMs?: number;   // backoff cap
}

/**
 * Buffers gaze samples and ships them to the service in ordered batches.
 *
 * Samples stay in the local queue until the service acknowledges them, so a
 * network outage costs latency, never data. One request is in flight at a
 * time, which preserves per-session ordering. A 409 (session closed) stops
 * the stream for good.
 */
export class GazeBatcher {
  private queue: GazeSample[] = [];
  private inFlight = false;
  private stopped = false;
  private timer: ReturnType<typeof setInterval> | null = null;
  private retryDelay: number;
  private acceptedCount = 0;
  private failureCount = 0;

  constructor(
    private readonly client: ServiceClient,
    private readonly sessionId: string,
    private readonly opts: BatcherOptions = {},
  ) {
    this.retryDelay = opts.retryMs ?? 250;
  }

  get pending(): number {
    return this.queue.length;
  }

  get accepted(): number {
    return this.acceptedCount;
  }

  get failures(): number {
    return this.failureCount;
  }

  get isStopped(): boolean {
    return this.stopped;
  }

  start(): void {
    const period = this.opts.flushMs ?? 500;
    this.timer = setInterval(() => void this.flush(), period);
  }

  push(sample: GazeSample): void {
    if (this.stopped) return;
    this.queue.push(sample);
    if (this.queue.length >= (this.opts.maxBatch ?? 50)) {
      void this.flush();
    }
  }

  /** Attempt to send everything queued; safe to call at any time. */
  async flush(): Promise<void> {
    if (this.inFlight || this.stopped || this.queue.length === 0) return;
    this.inFlight = true;
    const batch = this.queue.slice();
    try {
      const accepted = await this.client.appendGaze(this.sessionId, batch);
      this.acceptedCount += accepted;
      // the service applies whole batches atomically
      this.queue = this.queue.slice(batch.length);
      this.retryDelay = this.opts.retryMs ?? 250;
    } catch (err) {
      this.failureCount += 1;
      if (err instanceof ServiceError && err.status === 409) {
        this.stopped = true; // session closed elsewhere: stop streaming
      } else {
        // transient failure: keep the samples, back off, retry
        const delay = this.retryDelay;
        this.retryDelay = Math.min(delay * 2, this.opts.maxRetryMs ?? 4000);
        setTimeout(() => void this.flush(), delay);
      }
    } finally {
      this.inFlight = false;
    }
  }

  /** Flush until the queue drains (or the session closes), then stop. */
  async drain(timeoutMs = 15000): Promise<void> {
    const deadline = Date.now() + timeoutMs;
    while (this.queue.length > 0 && !this.stopped) {
      await this.flush();
      if (this.queue.length === 0) break;
      if (Date.now() > deadline) throw new Error(`drain timed out with ${this.queue.length} samples pending`);
      await new Promise((resolve) => setTimeout(resolve, Math.min(this.retryDelay, 200)));
    }
    this.stop();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
