"""Gaze-to-text alignment and context-window extraction.

Under the uniform-reading-speed assumption each word gets an anticipated
timestamp from its ordinal position in the session span. A context window
pairs the tokens read within one second around a candidate word with the
gaze recorded in the same interval; negatives re-pair a real gaze segment
with content the reader was looking at some other time.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import DocumentLayout, TokenizedDocument, word_token_spans
from .errors import AlignmentError
from .signal import GazeSample, GazeTrace

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlignmentConfig:
    """Windowing parameters shared by dataset building and live scoring.

    ``gaze_lag_ms`` registers the conditioned gaze against the text
    timeline: the causal smoothing filter delays the signal by its group
    delay (~(window - 1) / 2 raw sample intervals), so the gaze that
    reflects the second around a word arrives that much later in the
    trace. The token slice stays anchored at the word's anticipated time;
    only the gaze segment shifts.
    """

    context_ms: float = 1000.0
    n_gaze: int = 20
    n_txt: int = 64
    rate_hz: float = 20.0
    neg_ratio: int = 1
    unmarked_factor: int = 2
    seed: int = 0
    gaze_lag_ms: float = 0.0


def smoothing_group_delay_ms(window: int, raw_rate_hz: float) -> float:
    """Group delay a trailing ``window``-sample average adds at a raw rate."""
    if raw_rate_hz <= 0:
        raise AlignmentError(f"raw rate must be positive, got {raw_rate_hz}")
    return 1000.0 * (window - 1) / (2.0 * raw_rate_hz)


@dataclass(frozen=True)
class ReadingSession:
    """One conditioned reading of a document with user-marked unknown words."""

    doc_id: str
    trace: GazeTrace
    t_start: float
    t_end: float
    marked_words: frozenset[int]
    user_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "marked_words", frozenset(self.marked_words))
        if not self.t_start < self.t_end:
            raise AlignmentError(f"t_start {self.t_start} must precede t_end {self.t_end}")

    @property
    def session_id(self) -> str:
        return self.trace.session_id


@dataclass(frozen=True)
class ContextWindow:
    """One training or inference example.

    ``token_slice`` is the half-open token range into the document's
    tokenization; the resolved per-token arrays make the record trainable
    without re-tokenizing. ``knowledge`` feature ids are attached by a
    separate enrichment step and may be absent.
    """

    doc_id: str
    session_id: str
    user_id: str
    anchor_word: int
    is_negative: bool
    token_slice: tuple[int, int]
    token_ids: np.ndarray
    word_indices: np.ndarray
    token_labels: np.ndarray
    positions: np.ndarray
    gaze: np.ndarray
    knowledge: dict[str, np.ndarray] | None = field(default=None)

    def __post_init__(self):
        n = len(self.token_ids)
        if self.token_slice[1] - self.token_slice[0] != n:
            raise AlignmentError("token_slice extent must match token count")
        if not (len(self.word_indices) == n and len(self.token_labels) == n and len(self.positions) == n):
            raise AlignmentError("per-token arrays must have equal length")
        if n == 0:
            raise AlignmentError("context window must contain at least one token")
        labels = set(np.unique(self.token_labels).tolist())
        if not labels <= {0, 1}:
            raise AlignmentError(f"labels must be binary, got {sorted(labels)}")
        if self.is_negative and self.token_labels.any():
            raise AlignmentError("negative windows must have all-zero labels")
        if self.gaze.ndim != 2 or self.gaze.shape[1] != 2:
            raise AlignmentError("gaze segment must be an (n_gaze, 2) array")

    def __len__(self):
        return len(self.token_ids)


def anticipate_word_times(session: ReadingSession, doc: DocumentLayout) -> np.ndarray:
    """Anticipated reading time per word ordinal, assuming uniform speed.

    Word ``i`` of ``N`` maps to ``t_start + (i + 0.5) * span / N``.
    """
    n = len(doc)
    if n == 0:
        raise AlignmentError("document has no words")
    span = session.t_end - session.t_start
    return session.t_start + (np.arange(n, dtype=np.float64) + 0.5) * (span / n)


def chunk_gaze(trace: GazeTrace, boundaries: list[float]) -> list[tuple[GazeSample, ...]]:
    """Partition samples into half-open time intervals split at ``boundaries``.

    Segment ``k`` holds samples with ``boundaries[k-1] <= t < boundaries[k]``;
    concatenating all segments reproduces the trace.
    """
    for a, b in zip(boundaries, boundaries[1:]):
        if b < a:
            raise AlignmentError("boundaries must be sorted")
    segments: list[list[GazeSample]] = [[] for _ in range(len(boundaries) + 1)]
    for sample in trace.samples:
        k = int(np.searchsorted(boundaries, sample.t, side="right"))
        segments[k].append(sample)
    return [tuple(seg) for seg in segments]


def _covered_token_range(
    times: np.ndarray,
    spans: dict[int, tuple[int, int]],
    word: int,
    half_ms: float,
    n_txt: int,
) -> tuple[int, int]:
    """Token range of all words anticipated within +-half_ms of ``word``,
    symmetrically truncated around the word's own tokens to at most n_txt."""
    t_w = times[word]
    inside = np.nonzero(np.abs(times - t_w) <= half_ms)[0]
    first, last = int(inside[0]), int(inside[-1])
    start, end = spans[first][0], spans[last][1]
    a_start, a_end = spans[word]
    center = (a_start + a_end) / 2.0
    while end - start > n_txt:
        can_left = start < a_start
        can_right = end > a_end
        if can_left and (not can_right or center - start >= end - center):
            start += 1
        elif can_right:
            end -= 1
        else:
            # anchor word alone exceeds n_txt; keep its head
            end -= 1
    return start, end


def _clip_gaze_segment(trace: GazeTrace, lo: float, hi: float, t_center: float, n_gaze: int) -> np.ndarray:
    t = trace.times()
    mask = (t >= lo) & (t <= hi)
    if not mask.any():
        raise AlignmentError(f"no gaze samples in [{lo}, {hi}]")
    xy = trace.xy()[mask]
    tt = t[mask]
    while len(xy) > n_gaze:
        # trim whichever end is farther from the anchor time
        if t_center - tt[0] >= tt[-1] - t_center:
            xy, tt = xy[1:], tt[1:]
        else:
            xy, tt = xy[:-1], tt[:-1]
    if len(xy) < n_gaze:
        pad = np.repeat(xy[-1:], n_gaze - len(xy), axis=0)
        xy = np.concatenate([xy, pad], axis=0)
    return xy


def extract_context(
    session: ReadingSession,
    doc: DocumentLayout,
    tdoc: TokenizedDocument,
    word: int,
    config: AlignmentConfig = AlignmentConfig(),
) -> ContextWindow:
    """Build the window for one candidate word.

    Requires the session trace to be resampled at the configured rate so a
    one-second window carries a predictable number of samples.
    """
    if word < 0 or word >= len(doc):
        raise AlignmentError(f"word ordinal {word} out of range for {len(doc)}-word document")
    if session.trace.rate_hz is None:
        raise AlignmentError("session trace must be resampled to a uniform rate first")
    times = anticipate_word_times(session, doc)
    spans = word_token_spans(tdoc)
    half = config.context_ms / 2.0
    start, end = _covered_token_range(times, spans, word, half, config.n_txt)
    t_gaze = times[word] + config.gaze_lag_ms
    gaze = _clip_gaze_segment(session.trace, t_gaze - half, t_gaze + half, t_gaze, config.n_gaze)

    tokens = tdoc.tokens[start:end]
    widx = np.array([t[2] for t in tokens], dtype=np.int64)
    labels = np.array([1 if t[2] in session.marked_words else 0 for t in tokens], dtype=np.int64)
    positions = np.array([[doc.words[t[2]].x, doc.words[t[2]].y] for t in tokens], dtype=np.float64)
    return ContextWindow(
        doc_id=doc.doc_id,
        session_id=session.session_id,
        user_id=session.user_id,
        anchor_word=word,
        is_negative=False,
        token_slice=(start, end),
        token_ids=np.array([t[0] for t in tokens], dtype=np.int64),
        word_indices=widx,
        token_labels=labels,
        positions=positions,
        gaze=gaze,
    )


def make_negatives(
    positives: list[ContextWindow],
    session: ReadingSession,
    doc: DocumentLayout,
    tdoc: TokenizedDocument,
    ratio: int = 1,
    config: AlignmentConfig = AlignmentConfig(),
    rng: np.random.Generator | None = None,
) -> list[ContextWindow]:
    """Pair each positive's gaze with marked-word content read at another time.

    A substitute word is eligible only when its own one-second window is
    disjoint from the positive's, so the negative's text was provably not
    being read while that gaze was recorded. Labels are all zero.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    times = anticipate_word_times(session, doc)
    spans = word_token_spans(tdoc)
    marked = sorted(session.marked_words)
    out: list[ContextWindow] = []
    for pos in positives:
        eligible = [m for m in marked if abs(times[m] - times[pos.anchor_word]) > config.context_ms]
        if not eligible:
            logger.warning(
                "no eligible negative content for anchor %d in %s", pos.anchor_word, session.session_id
            )
            continue
        take = min(ratio, len(eligible))
        chosen = rng.choice(len(eligible), size=take, replace=False)
        for k in sorted(chosen.tolist()):
            m = eligible[k]
            start, end = _covered_token_range(times, spans, m, config.context_ms / 2.0, config.n_txt)
            tokens = tdoc.tokens[start:end]
            out.append(
                ContextWindow(
                    doc_id=doc.doc_id,
                    session_id=session.session_id,
                    user_id=session.user_id,
                    anchor_word=m,
                    is_negative=True,
                    token_slice=(start, end),
                    token_ids=np.array([t[0] for t in tokens], dtype=np.int64),
                    word_indices=np.array([t[2] for t in tokens], dtype=np.int64),
                    token_labels=np.zeros(len(tokens), dtype=np.int64),
                    positions=np.array(
                        [[doc.words[t[2]].x, doc.words[t[2]].y] for t in tokens], dtype=np.float64
                    ),
                    gaze=pos.gaze.copy(),
                )
            )
    return out


def build_dataset(
    sessions: list[ReadingSession],
    docs: dict[str, tuple[DocumentLayout, TokenizedDocument]],
    config: AlignmentConfig = AlignmentConfig(),
) -> list[ContextWindow]:
    """Windows for every marked word, sampled unmarked words, and negatives.

    Deterministic for a given seed: per-session extraction order is fixed and
    the final shuffle uses the config seed.
    """
    rng = np.random.default_rng(config.seed)
    windows: list[ContextWindow] = []
    for session in sessions:
        if session.doc_id not in docs:
            raise AlignmentError(f"session {session.session_id} references unknown doc {session.doc_id}")
        doc, tdoc = docs[session.doc_id]
        positives = []
        for word in sorted(session.marked_words):
            try:
                positives.append(extract_context(session, doc, tdoc, word, config))
            except AlignmentError as exc:
                logger.warning("skipping marked word %d in %s: %s", word, session.session_id, exc)
        unmarked = [w for w in range(len(doc)) if w not in session.marked_words]
        n_unmarked = min(len(unmarked), config.unmarked_factor * len(positives))
        sampled = []
        if n_unmarked:
            picks = rng.choice(len(unmarked), size=n_unmarked, replace=False)
            for k in sorted(picks.tolist()):
                try:
                    sampled.append(extract_context(session, doc, tdoc, unmarked[k], config))
                except AlignmentError as exc:
                    logger.warning("skipping unmarked word %d in %s: %s", unmarked[k], session.session_id, exc)
        negatives = make_negatives(positives, session, doc, tdoc, config.neg_ratio, config, rng)
        windows.extend(positives)
        windows.extend(sampled)
        windows.extend(negatives)
    order = rng.permutation(len(windows))
    return [windows[i] for i in order]


def window_to_dict(win: ContextWindow) -> dict:
    rec = {
        "doc_id": win.doc_id,
        "session_id": win.session_id,
        "user_id": win.user_id,
        "anchor_word": win.anchor_word,
        "is_negative": win.is_negative,
        "token_slice": list(win.token_slice),
        "token_ids": win.token_ids.tolist(),
        "word_indices": win.word_indices.tolist(),
        "token_labels": win.token_labels.tolist(),
        "positions": [[float(x), float(y)] for x, y in win.positions],
        "gaze": [[float(x), float(y)] for x, y in win.gaze],
    }
    if win.knowledge is not None:
        rec["knowledge"] = {k: v.tolist() for k, v in win.knowledge.items()}
    return rec


def window_from_dict(rec: dict) -> ContextWindow:
    knowledge = None
    if rec.get("knowledge") is not None:
        knowledge = {k: np.asarray(v, dtype=np.int64) for k, v in rec["knowledge"].items()}
    return ContextWindow(
        doc_id=rec["doc_id"],
        session_id=rec["session_id"],
        user_id=rec["user_id"],
        anchor_word=int(rec["anchor_word"]),
        is_negative=bool(rec["is_negative"]),
        token_slice=tuple(rec["token_slice"]),
        token_ids=np.asarray(rec["token_ids"], dtype=np.int64),
        word_indices=np.asarray(rec["word_indices"], dtype=np.int64),
        token_labels=np.asarray(rec["token_labels"], dtype=np.int64),
        positions=np.asarray(rec["positions"], dtype=np.float64).reshape(-1, 2),
        gaze=np.asarray(rec["gaze"], dtype=np.float64).reshape(-1, 2),
        knowledge=knowledge,
    )


def write_dataset(path, windows: list[ContextWindow]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for win in windows:
            f.write(json.dumps(window_to_dict(win), separators=(",", ":")) + "\n")


def read_dataset(path) -> list[ContextWindow]:
    windows = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                windows.append(window_from_dict(json.loads(line)))
    return windows


def attach_knowledge(
    windows: list[ContextWindow],
    features_by_doc: dict[str, "np.ndarray | object"],
) -> list[ContextWindow]:
    """Slice per-document knowledge features into each window.

    ``features_by_doc`` maps doc_id to a KnowledgeFeatures over the whole
    document's tokens.
    """
    out = []
    for win in windows:
        feats = features_by_doc.get(win.doc_id)
        if feats is None:
            raise AlignmentError(f"no knowledge features for doc {win.doc_id}")
        start, end = win.token_slice
        out.append(
            replace(
                win,
                knowledge={
                    "tf": feats.tf[start:end].copy(),
                    "pos": feats.pos[start:end].copy(),
                    "ner": feats.ner[start:end].copy(),
                },
            )
        )
    return out
