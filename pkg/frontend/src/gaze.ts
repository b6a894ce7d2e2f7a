import type { GazeSample } from "./types.js";

/**
 * A source of gaze estimates. The real implementation wraps the in-browser
 * webcam gaze estimation library (treated as a black box); tests and the
 * scripted session use MockGazeSource.
 */
export interface GazeSource {
  /** May reject, e.g. when camera permission is denied. */
  start(): Promise<void>;
  stop(): void;
  subscribe(listener: (sample: GazeSample) => void): () => void;
  /** Most recent estimate, if any. */
  current(): GazeSample | null;
}

export class PermissionDeniedError extends Error {}

/** Deterministic scripted source for tests and demos. */
export class MockGazeSource implements GazeSource {
  private listeners = new Set<(sample: GazeSample) => void>();
  private last: GazeSample | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;
  private cursor = 0;

  constructor(
    private readonly script: GazeSample[] = [],
    private readonly opts: { intervalMs?: number; denyPermission?: boolean } = {},
  ) {}

  async start(): Promise<void> {
    if (this.opts.denyPermission) {
      throw new PermissionDeniedError("camera permission denied");
    }
    const interval = this.opts.intervalMs ?? 0;
    if (interval > 0 && this.script.length > 0) {
      this.timer = setInterval(() => {
        if (this.cursor >= this.script.length) {
          this.stop();
          return;
        }
        this.emit(this.script[this.cursor++]);
      }, interval);
    }
  }

  stop(): void {
    if (this.timer) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** Push one estimate to subscribers (used by manual test scripts). */
  emit(sample: GazeSample): void {
    this.last = sample;
    for (const listener of this.listeners) listener(sample);
  }

  subscribe(listener: (sample: GazeSample) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  current(): GazeSample | null {
    return this.last;
  }

  get finished(): boolean {
    return this.cursor >= this.script.length;
  }
}
