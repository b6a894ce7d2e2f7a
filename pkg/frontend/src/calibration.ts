import type { GazeSource } from "./gaze.js";

export interface CalibrationPoint {
  target: { x: number; y: number };
  estimate: { x: number; y: number };
}

export interface CalibrationState {
  points: CalibrationPoint[];
  complete: boolean;
  residualPx: number | null; // mean target-vs-estimate distance
  needsRedo: boolean;
  error: string | null; // e.g. camera permission denied
}

export interface CalibrationOptions {
  pointCount?: number;   // clicks required before a session may start
  thresholdPx?: number;  // residual above this prompts a redo
  targets?: { x: number; y: number }[];
}

const DEFAULT_POINTS = 9;
const DEFAULT_THRESHOLD_PX = 160;

/** 3x3 grid of click targets over the viewport. */
export function gridTargets(width: number, height: number, count = DEFAULT_POINTS): { x: number; y: number }[] {
  const cols = Math.ceil(Math.sqrt(count));
  const rows = Math.ceil(count / cols);
  const targets: { x: number; y: number }[] = [];
  for (let r = 0; r < rows && targets.length < count; r++) {
    for (let c = 0; c < cols && targets.length < count; c++) {
      targets.push({
        x: ((c + 1) * width) / (cols + 1),
        y: ((r + 1) * height) / (rows + 1),
      });
    }
  }
  return targets;
}

/**
 * Click-driven calibration: the user fixates and clicks each target; the
 * gaze estimator's current output is paired with the target. The residual
 * decides whether reading may start or calibration must be redone.
 */
export class CalibrationController {
  private readonly pointCount: number;
  private readonly thresholdPx: number;
  readonly targets: { x: number; y: number }[];
  private points: CalibrationPoint[] = [];
  private error: string | null = null;
  private started = false;

  constructor(private readonly gaze: GazeSource, opts: CalibrationOptions = {}) {
    this.pointCount = opts.pointCount ?? DEFAULT_POINTS;
    this.thresholdPx = opts.thresholdPx ?? DEFAULT_THRESHOLD_PX;
    this.targets = opts.targets ?? gridTargets(1280, 960, this.pointCount);
  }

  async begin(): Promise<CalibrationState> {
    try {
      await this.gaze.start();
      this.started = true;
    } catch (err) {
      this.error = err instanceof Error ? err.message : String(err);
    }
    return this.state();
  }

  /** Record one click on the next pending target. */
  recordClick(): CalibrationState {
    if (this.error) return this.state();
    if (!this.started) {
      this.error = "calibration not started";
      return this.state();
    }
    const index = this.points.length;
    if (index >= this.targets.length) return this.state();
    const estimate = this.gaze.current();
    if (!estimate) {
      return this.state(); // no estimate yet: the click does not count
    }
    this.points.push({
      target: this.targets[index],
      estimate: { x: estimate.x, y: estimate.y },
    });
    return this.state();
  }

  reset(): CalibrationState {
    this.points = [];
    return this.state();
  }

  state(): CalibrationState {
    const complete = this.points.length >= this.pointCount && this.error === null;
    let residual: number | null = null;
    if (this.points.length > 0) {
      let total = 0;
      for (const p of this.points) {
        total += Math.hypot(p.target.x - p.estimate.x, p.target.y - p.estimate.y);
      }
      residual = total / this.points.length;
      if (!Number.isFinite(residual)) {
        residual = null;
      }
    }
    return {
      points: this.points.slice(),
      complete,
      residualPx: residual,
      needsRedo: complete && residual !== null && residual > this.thresholdPx,
      error: this.error,
    };
  }

  /** A reading session may start only after a clean calibration. */
  get sessionAllowed(): boolean {
    const s = this.state();
    return s.complete && !s.needsRedo && s.error === null;
  }
}
