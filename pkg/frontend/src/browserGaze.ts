import type { GazeSource } from "./gaze.js";
import { PermissionDeniedError } from "./gaze.js";
import type { GazeSample } from "./types.js";

/**
 * Shape of the in-browser gaze estimation library we delegate to. Gaze
 * estimation from camera frames is a black box here; anything exposing
 * this surface (e.g. the usual webcam gaze trackers) plugs in.
 */
export interface GazeEstimatorLib {
  begin(): Promise<unknown> | unknown;
  end?(): void;
  pause?(): void;
  setGazeListener(cb: (data: { x: number; y: number } | null, timestamp: number) => void): unknown;
}

export class BrowserGazeSource implements GazeSource {
  private listeners = new Set<(sample: GazeSample) => void>();
  private last: GazeSample | null = null;
  private t0: number | null = null;

  constructor(private readonly lib: GazeEstimatorLib) {}

  async start(): Promise<void> {
    try {
      this.lib.setGazeListener((data, timestamp) => {
        if (!data) return;
        if (this.t0 === null) this.t0 = timestamp;
        const sample = { t: timestamp - this.t0, x: data.x, y: data.y };
        this.last = sample;
        for (const listener of this.listeners) listener(sample);
      });
      await this.lib.begin();
    } catch (err) {
      throw new PermissionDeniedError(err instanceof Error ? err.message : "camera unavailable");
    }
  }

  stop(): void {
    this.lib.pause?.();
    this.lib.end?.();
  }

  subscribe(listener: (sample: GazeSample) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  current(): GazeSample | null {
    return this.last;
  }
}
