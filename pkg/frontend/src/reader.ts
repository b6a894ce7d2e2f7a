import type { LayoutJson, Prediction, WordBoxJson } from "./types.js";

export interface ReaderCallbacks {
  onMark?: (wordIndex: number) => void;
}

/**
 * Renders an article from its layout JSON and owns per-word geometry.
 *
 * Words are positioned absolutely at the layout's box coordinates, so the
 * geometry reported to the service and the geometry used for rendering are
 * the same object (single source of truth). Model predictions show up as
 * underline highlights; nothing modal ever appears over the text.
 */
export class ReaderView {
  private spans = new Map<number, HTMLElement>();
  private marked = new Set<number>();
  private layout: LayoutJson | null = null;

  constructor(private readonly container: HTMLElement, private readonly callbacks: ReaderCallbacks = {}) {}

  render(layout: LayoutJson): void {
    this.layout = layout;
    this.spans.clear();
    this.marked.clear();
    this.container.innerHTML = "";
    const doc = this.container.ownerDocument;
    for (const word of layout.words) {
      const span = doc.createElement("span");
      span.textContent = word.text;
      span.className = "word";
      span.dataset.wordIndex = String(word.index);
      span.dataset.page = String(word.page ?? 0);
      const style = span.style as CSSStyleDeclaration;
      style.position = "absolute";
      style.left = `${word.x - word.w / 2}px`;
      style.top = `${word.y - word.h / 2}px`;
      style.width = `${word.w}px`;
      style.height = `${word.h}px`;
      span.addEventListener("click", () => this.toggleMark(word.index));
      this.container.appendChild(span);
      this.spans.set(word.index, span);
    }
  }

  /** Word geometry as rendered, read back from the DOM styles. */
  reportedGeometry(): WordBoxJson[] {
    if (!this.layout) return [];
    const out: WordBoxJson[] = [];
    for (const word of this.layout.words) {
      const span = this.spans.get(word.index)!;
      const left = parseFloat(span.style.left);
      const top = parseFloat(span.style.top);
      const w = parseFloat(span.style.width);
      const h = parseFloat(span.style.height);
      out.push({
        index: word.index,
        text: span.textContent ?? "",
        x: left + w / 2,
        y: top + h / 2,
        w,
        h,
        page: Number(span.dataset.page ?? 0),
      });
    }
    return out;
  }

  toggleMark(wordIndex: number): void {
    const span = this.spans.get(wordIndex);
    if (!span) return;
    if (this.marked.has(wordIndex)) {
      this.marked.delete(wordIndex);
      span.classList.remove("marked");
    } else {
      this.marked.add(wordIndex);
      span.classList.add("marked");
    }
    this.callbacks.onMark?.(wordIndex);
  }

  get markedWords(): number[] {
    return [...this.marked].sort((a, b) => a - b);
  }

  /** Underline the model's flagged words; zero predictions change nothing. */
  renderHighlights(predictions: Prediction[]): void {
    for (const p of predictions) {
      const span = this.spans.get(p.word);
      if (span) {
        span.classList.add("flagged");
        span.title = `possibly unknown (score ${p.score.toFixed(2)})`;
      }
    }
  }

  highlightedWords(): number[] {
    const out: number[] = [];
    for (const [index, span] of this.spans) {
      if (span.classList.contains("flagged")) out.push(index);
    }
    return out.sort((a, b) => a - b);
  }
}

/** Stylesheet for marks and highlights; underlines only, never modal. */
export const READER_CSS = `
.word { cursor: pointer; white-space: nowrap; }
.word.marked { background: rgba(255, 200, 0, 0.35); }
.word.flagged { text-decoration: underline wavy; text-underline-offset: 3px; }
`;
