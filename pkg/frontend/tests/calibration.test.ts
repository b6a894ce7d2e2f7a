import { describe, expect, it } from "vitest";
import { CalibrationController, gridTargets } from "../src/calibration.js";
import { MockGazeSource } from "../src/gaze.js";

function clickThrough(controller: CalibrationController, source: MockGazeSource, offset = 4) {
  for (const target of controller.targets) {
    source.emit({ t: 0, x: target.x + offset, y: target.y - offset });
    controller.recordClick();
  }
}

describe("grid targets", () => {
  it("produces the requested number of points inside the viewport", () => {
    const targets = gridTargets(1280, 960, 9);
    expect(targets).toHaveLength(9);
    for (const t of targets) {
      expect(t.x).toBeGreaterThan(0);
      expect(t.x).toBeLessThan(1280);
      expect(t.y).toBeGreaterThan(0);
      expect(t.y).toBeLessThan(960);
    }
  });
});

describe("calibration", () => {
  it("nine clicks complete calibration and allow the session", async () => {
    const source = new MockGazeSource();
    const controller = new CalibrationController(source, { pointCount: 9 });
    await controller.begin();
    clickThrough(controller, source);
    const state = controller.state();
    expect(state.complete).toBe(true);
    expect(state.points).toHaveLength(9);
    expect(state.residualPx).toBeCloseTo(Math.hypot(4, 4), 6);
    expect(state.needsRedo).toBe(false);
    expect(controller.sessionAllowed).toBe(true);
  });

  it("session blocked before enough points", async () => {
    const source = new MockGazeSource();
    const controller = new CalibrationController(source, { pointCount: 9 });
    await controller.begin();
    source.emit({ t: 0, x: 100, y: 100 });
    controller.recordClick();
    expect(controller.sessionAllowed).toBe(false);
  });

  it("high residual prompts a redo and blocks the session", async () => {
    const source = new MockGazeSource();
    const controller = new CalibrationController(source, { pointCount: 9, thresholdPx: 50 });
    await controller.begin();
    clickThrough(controller, source, 300); // 300 px systematic error
    const state = controller.state();
    expect(state.complete).toBe(true);
    expect(state.needsRedo).toBe(true);
    expect(controller.sessionAllowed).toBe(false);
    controller.reset();
    clickThrough(controller, source, 2);
    expect(controller.sessionAllowed).toBe(true);
  });

  it("camera permission denied is a blocking error", async () => {
    const source = new MockGazeSource([], { denyPermission: true });
    const controller = new CalibrationController(source);
    const state = await controller.begin();
    expect(state.error).toMatch(/permission/);
    controller.recordClick();
    expect(controller.sessionAllowed).toBe(false);
  });

  it("clicks without a gaze estimate do not count", async () => {
    const source = new MockGazeSource();
    const controller = new CalibrationController(source, { pointCount: 3 });
    await controller.begin();
    controller.recordClick(); // no estimate yet
    expect(controller.state().points).toHaveLength(0);
  });
});
