import { ServiceClient, serviceUrlFromLocation } from "./api.js";
import { GazeBatcher } from "./batcher.js";
import { CalibrationController, type CalibrationOptions } from "./calibration.js";
import type { GazeSource } from "./gaze.js";
import { ReaderView } from "./reader.js";
import type { LayoutJson, Prediction } from "./types.js";

export interface ReaderAppOptions {
  userId: string;
  layout: LayoutJson;
  container: HTMLElement;
  gazeSource: GazeSource;
  client?: ServiceClient;
  serviceUrl?: string;
  calibration?: CalibrationOptions;
  flushMs?: number;
}

/**
 * Orchestrates the live loop: calibrate, read while streaming gaze, mark
 * unknown words, close, and show the model's flags as underlines.
 */
export class ReaderApp {
  readonly client: ServiceClient;
  readonly calibration: CalibrationController;
  readonly view: ReaderView;
  sessionId: string | null = null;
  private batcher: GazeBatcher | null = null;
  private unsubscribe: (() => void) | null = null;
  private sessionStart = 0;
  private sampleCount = 0;

  constructor(private readonly opts: ReaderAppOptions) {
    const base = opts.serviceUrl ?? serviceUrlFromLocation(globalThis.location?.search ?? "");
    this.client = opts.client ?? new ServiceClient(base);
    this.calibration = new CalibrationController(opts.gazeSource, opts.calibration);
    this.view = new ReaderView(opts.container, {
      onMark: () => void this.pushMarks(),
    });
  }

  async calibrate(clicks: number): Promise<void> {
    await this.calibration.begin();
    for (let i = 0; i < clicks; i++) {
      this.calibration.recordClick();
    }
  }

  /** Create the session and start streaming; requires a clean calibration. */
  async startSession(): Promise<string> {
    if (!this.calibration.sessionAllowed) {
      const state = this.calibration.state();
      throw new Error(state.error ?? (state.needsRedo ? "calibration residual too high; redo" : "calibration incomplete"));
    }
    this.view.render(this.opts.layout);
    this.sessionId = await this.client.createSession(this.opts.userId, this.opts.layout);
    this.batcher = new GazeBatcher(this.client, this.sessionId, { flushMs: this.opts.flushMs ?? 500 });
    this.batcher.start();
    this.sessionStart = Date.now();
    this.unsubscribe = this.opts.gazeSource.subscribe((sample) => {
      this.sampleCount += 1;
      this.batcher?.push(sample);
    });
    return this.sessionId;
  }

  private async pushMarks(): Promise<void> {
    if (!this.sessionId) return;
    await this.client.markWords(this.sessionId, this.view.markedWords);
  }

  markWord(wordIndex: number): void {
    this.view.toggleMark(wordIndex);
  }

  get samplesSeen(): number {
    return this.sampleCount;
  }

  get samplesPending(): number {
    return this.batcher?.pending ?? 0;
  }

  get samplesAccepted(): number {
    return this.batcher?.accepted ?? 0;
  }

  /** Stop streaming, drain the buffer, close, and render highlights. */
  async finish(): Promise<Prediction[]> {
    if (!this.sessionId || !this.batcher) throw new Error("no open session");
    this.unsubscribe?.();
    this.unsubscribe = null;
    this.opts.gazeSource.stop();
    await this.batcher.drain();
    const predictions = await this.client.closeSession(this.sessionId);
    this.view.renderHighlights(predictions);
    return predictions;
  }
}
