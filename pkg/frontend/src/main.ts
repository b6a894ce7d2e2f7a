import { serviceUrlFromLocation } from "./api.js";
import { ReaderApp } from "./app.js";
import { BrowserGazeSource, type GazeEstimatorLib } from "./browserGaze.js";
import { READER_CSS } from "./reader.js";
import type { LayoutJson } from "./types.js";

/**
 * Page bootstrap: load an article layout, calibrate, read, finish.
 *
 * URL parameters:
 *   ?service=http://host:port   session service base URL
 *   ?doc=<url>                  article layout JSON to load
 *   ?user=<id>                  reader id
 */
export async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const serviceUrl = serviceUrlFromLocation(location.search);
  const docUrl = params.get("doc") ?? "./article.json";
  const userId = params.get("user") ?? "reader";

  const style = document.createElement("style");
  style.textContent = READER_CSS;
  document.head.appendChild(style);

  const layout = (await (await fetch(docUrl)).json()) as LayoutJson;
  const container = document.getElementById("reader") ?? document.body;
  container.style.position = "relative";

  const estimator = (globalThis as Record<string, unknown>).webgazer as GazeEstimatorLib | undefined;
  if (!estimator) {
    container.textContent = "No gaze estimation library found on the page.";
    return;
  }
  const app = new ReaderApp({
    userId,
    layout,
    container,
    gazeSource: new BrowserGazeSource(estimator),
    serviceUrl,
  });

  const status = document.createElement("div");
  status.id = "status";
  document.body.prepend(status);

  // calibration overlay: click each target in turn
  const state = await app.calibration.begin();
  if (state.error) {
    status.textContent = `Calibration blocked: ${state.error}`;
    return;
  }
  status.textContent = "Calibration: click each dot while looking at it.";
  await new Promise<void>((resolve) => {
    const overlay = document.createElement("div");
    overlay.style.position = "fixed";
    overlay.style.inset = "0";
    document.body.appendChild(overlay);

    const showNext = () => {
      const index = app.calibration.state().points.length;
      overlay.innerHTML = "";
      if (index >= app.calibration.targets.length) {
        const s = app.calibration.state();
        if (s.needsRedo) {
          status.textContent = `Residual ${s.residualPx?.toFixed(0)} px too high; starting over.`;
          app.calibration.reset();
          showNext();
          return;
        }
        overlay.remove();
        resolve();
        return;
      }
      const target = app.calibration.targets[index];
      const dot = document.createElement("button");
      dot.textContent = "+";
      dot.style.position = "absolute";
      dot.style.left = `${target.x - 12}px`;
      dot.style.top = `${target.y - 12}px`;
      dot.addEventListener("click", () => {
        app.calibration.recordClick();
        showNext();
      });
      overlay.appendChild(dot);
    };
    showNext();
  });

  status.textContent = "Reading. Click words you do not know; press Finish when done.";
  await app.startSession();

  const finish = document.createElement("button");
  finish.textContent = "Finish";
  finish.addEventListener("click", async () => {
    finish.disabled = true;
    status.textContent = "Scoring...";
    const predictions = await app.finish();
    status.textContent = predictions.length
      ? `Underlined ${predictions.length} possibly unknown words.`
      : "No unknown words flagged.";
  });
  document.body.prepend(finish);
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  void boot();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", () => void boot());
}
