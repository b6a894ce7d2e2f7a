"""Synthetic reading sessions with planted unknown words.

Ground truth for desk-scale testing: articles are generated from a zipfian
word bank, each simulated reader carries an unknown vocabulary drawn from
the rare tail, and the gaze simulator dwells longer (and sometimes
regresses) on unknown words before webcam-grade noise is added. Everything
is deterministic under a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alignment import ReadingSession
from .corpus import DocumentLayout, WordBox
from .errors import GenerationError
from .signal import GazeTrace

_SAMPLE_RATE_HZ = 30.0
_JITTER = 0.2

# -- word bank -------------------------------------------------------------

FUNCTION_WORDS = (
    "the of and to a in is that it for as with on are this by from or an be "
    "at which not can but their more has its they also have was one such "
    "these may most some when than into other each between during both "
    "about through while where often however because many must under over "
    "after before within without will would could should very so no only "
    "then them we our who what if since although unless several few same "
    "first second new large small"
).split()

COMMON_WORDS = (
    "water time system energy process result study form change part group "
    "light level area rate line point work way life earth heat food cell "
    "body plant animal rock land sea air state place case fact idea kind "
    "word name number order power course field force matter period region "
    "source species structure surface theory value growth method model "
    "nature pattern range scale effect example layer material motion "
    "object ocean planet pressure river sample season signal soil sound "
    "space star stone storm stream summer temperature tissue valley volume "
    "wave weather winter show make use find take give hold keep grow move "
    "turn call become remain include provide produce occur develop follow "
    "allow require describe explain suggest lead bring begin leave carry "
    "reach depend contain support"
).split()

_ROOTS = (
    "bran cul dorm fen gal hem jur kel lum mor nav pol quin ras sil tav "
    "vor wex zan ful gren har lin mas nec ost pel rud sab tor vel yar"
).split()

_MID_SUFFIXES = ("tion", "ness", "ment", "ity", "ism", "ize", "ate", "ify",
                 "ous", "ive", "al", "ic", "ly")

#: Suffix pool for rare-tail words; single class when a uniform POS is needed.
_TAIL_SUFFIXES = ("tion", "ment", "ity", "ism", "ness")

ENTITIES = (
    ("Veluna Bay", "LOC"),
    ("North Pelmora", "LOC"),
    ("Silvane Coast", "LOC"),
    ("Kanter Institute", "ORG"),
    ("Tavrin Council", "ORG"),
    ("Maris Corvale", "PER"),
    ("Doran Wex", "PER"),
    ("Lumen Accord", "MISC"),
)


def mid_frequency_words() -> list[str]:
    return [root + suffix for root in _ROOTS for suffix in _MID_SUFFIXES]


def tail_words(count: int, uniform_pos: bool = False) -> list[str]:
    """Long two-root rare words; with ``uniform_pos`` all share one suffix."""
    suffixes = _TAIL_SUFFIXES[:1] if uniform_pos else _TAIL_SUFFIXES
    out = []
    for i, a in enumerate(_ROOTS):
        for b in _ROOTS[i + 1 :]:
            for suffix in suffixes:
                out.append(a + b + "a" + suffix)
                if len(out) == count:
                    return out
    raise GenerationError(f"cannot build {count} tail words from the root bank")


def word_bank() -> list[tuple[str, float]]:
    """(word, zipf weight) by rank; function words first, pseudo words last."""
    ranked = FUNCTION_WORDS + COMMON_WORDS + mid_frequency_words()
    return [(w, 1.0 / (r + 2) ** 1.05) for r, w in enumerate(ranked)]


def build_default_vocab(size: int = 8192) -> list[str]:
    """Train the shipped tokenizer vocabulary from the synthetic word bank.

    Counts are zipf-scaled bank words plus the rare-tail and entity words,
    so everything the generator can emit tokenizes into few pieces.
    """
    from .corpus import train_vocab

    counts: dict[str, int] = {}
    for word, weight in word_bank():
        counts[word] = max(1, int(round(weight * 200000)))
        for suffix in ("s", "ing", "ed"):
            counts[word + suffix] = counts.get(word + suffix, 0) + max(1, int(round(weight * 20000)))
    for a in _ROOTS:
        for b in _ROOTS:
            if a == b:
                continue
            for suffix in _TAIL_SUFFIXES:
                word = a + b + "a" + suffix
                counts[word] = counts.get(word, 0) + 3
    for phrase, _ in ENTITIES:
        for word in phrase.split():
            counts[word] = counts.get(word, 0) + 20
    return train_vocab(counts, size)


# -- profiles and sessions ---------------------------------------------------

@dataclass(frozen=True)
class ReaderProfile:
    reader_id: str
    unknown_vocab: frozenset[str]
    base_dwell_ms: float = 250.0
    dwell_multiplier_unknown: float = 2.5
    p_regression: float = 0.4
    noise_sigma_px: float = 130.0

    def __post_init__(self):
        object.__setattr__(self, "unknown_vocab", frozenset(w.casefold() for w in self.unknown_vocab))
        if not self.dwell_multiplier_unknown > 1.0:
            raise GenerationError("dwell multiplier must exceed 1")
        if not 0.0 <= self.p_regression <= 1.0:
            raise GenerationError("regression probability must lie in [0, 1]")
        if self.noise_sigma_px < 0:
            raise GenerationError("noise sigma must be non-negative")


@dataclass(frozen=True)
class SynthSession:
    """Raw simulated trace plus the planted truth."""

    reader_id: str
    doc_id: str
    raw_trace: GazeTrace
    t_start: float
    t_end: float
    marked_words: frozenset[int]

    def reading_session(self, conditioned: GazeTrace) -> ReadingSession:
        return ReadingSession(
            doc_id=self.doc_id,
            trace=conditioned,
            t_start=self.t_start,
            t_end=self.t_end,
            marked_words=self.marked_words,
            user_id=self.reader_id,
        )


def _lognormal_ms(rng: np.random.Generator, mean_ms: float, sigma: float) -> float:
    # parameterized so the distribution mean equals mean_ms
    mu = np.log(mean_ms) - 0.5 * sigma**2
    return float(rng.lognormal(mu, sigma))


def simulate_session(
    doc: DocumentLayout,
    profile: ReaderProfile,
    seed: int,
    dwell_sigma: float = 0.25,
    pacing_words: int = 8,
) -> SynthSession:
    """Simulate one reading of ``doc``.

    Words are visited in order; dwell is lognormal around the profile base,
    multiplied for unknown words; an unknown word is revisited after the
    next word with the profile's regression probability. Readers compensate
    pace locally (linger on a hard word, skim its neighbors), modeled by
    rescaling each consecutive ``pacing_words``-visit block to the uniform
    time budget; this preserves the dwell contrast inside a block while
    keeping overall reading speed steady (``pacing_words=0`` disables it).
    Raw samples come out at ~30 Hz with +-20% timestamp jitter, positioned
    at the visited word's box center plus isotropic Gaussian noise.
    """
    if len(doc) == 0:
        raise GenerationError("cannot simulate over an empty document")
    rng = np.random.default_rng(seed)
    unknown = profile.unknown_vocab
    marked = frozenset(i for i, w in enumerate(doc.words) if w.text.casefold() in unknown)

    visits: list[tuple[int, float]] = []
    pending: tuple[int, float] | None = None
    for i, word in enumerate(doc.words):
        is_unknown = i in marked
        dwell = _lognormal_ms(rng, profile.base_dwell_ms, dwell_sigma)
        if is_unknown:
            dwell *= profile.dwell_multiplier_unknown
        visits.append((i, dwell))
        if pending is not None:
            visits.append(pending)
            pending = None
        if is_unknown and rng.random() < profile.p_regression:
            pending = (i, _lognormal_ms(rng, profile.base_dwell_ms, dwell_sigma))
    if pending is not None:
        visits.append(pending)

    if pacing_words > 0:
        paced: list[tuple[int, float]] = []
        for lo in range(0, len(visits), pacing_words):
            block = visits[lo : lo + pacing_words]
            budget = profile.base_dwell_ms * len(block)
            total = sum(d for _, d in block)
            scale = budget / total if total > 0 else 1.0
            paced.extend((w, d * scale) for w, d in block)
        visits = paced

    base_dt = 1000.0 / _SAMPLE_RATE_HZ
    t = 0.0
    times: list[float] = []
    points: list[tuple[float, float]] = []
    for word_idx, dwell in visits:
        box = doc.words[word_idx]
        elapsed = 0.0
        emitted = 0
        while elapsed < dwell or emitted == 0:
            dt = base_dt * rng.uniform(1.0 - _JITTER, 1.0 + _JITTER)
            t += dt
            elapsed += dt
            noise = rng.normal(0.0, profile.noise_sigma_px, size=2) if profile.noise_sigma_px > 0 else (0.0, 0.0)
            times.append(t)
            points.append((box.x + noise[0], box.y + noise[1]))
            emitted += 1

    trace = GazeTrace.from_arrays(f"{profile.reader_id}-{doc.doc_id}-{seed}", times, points)
    return SynthSession(
        reader_id=profile.reader_id,
        doc_id=doc.doc_id,
        raw_trace=trace,
        t_start=0.0,
        t_end=times[-1],
        marked_words=marked,
    )


def dwell_sample_counts(trace: GazeTrace, doc: DocumentLayout) -> np.ndarray:
    """Raw samples assigned to each word by nearest box center."""
    centers = np.array([[w.x, w.y] for w in doc.words])
    counts = np.zeros(len(doc), dtype=np.int64)
    for p in trace.xy():
        counts[int(np.argmin(((centers - p) ** 2).sum(axis=1)))] += 1
    return counts


# -- corpus generation -------------------------------------------------------

@dataclass(frozen=True)
class DifficultyConfig:
    """Knobs that set how separable the planted signal is.

    Defaults are calibrated so that slow academic reading (long dwells,
    locally compensated pace) leaves a learnable dwell contrast in the
    conditioned signal at webcam noise levels.
    """

    words_per_doc: int = 150
    sentence_words: tuple[int, int] = (8, 18)
    tail_size: int = 60
    tail_per_doc: int = 18
    tail_occurrences: tuple[int, int] = (1, 2)
    unknown_per_reader: int = 25
    jaccard_band: tuple[float, float] = (0.15, 0.35)
    min_tail_separation: int = 5
    entity_prob: float = 0.05
    base_dwell_ms: float = 550.0
    dwell_sigma: float = 0.12
    dwell_multiplier_unknown: float = 2.5
    p_regression: float = 0.4
    noise_sigma_px: float = 130.0
    pacing_words: int = 8
    gaze_only: bool = False

    def __post_init__(self):
        if self.tail_per_doc > self.tail_size:
            raise GenerationError("tail_per_doc cannot exceed tail_size")
        if self.unknown_per_reader > self.tail_size:
            raise GenerationError("unknown_per_reader cannot exceed tail_size")


@dataclass(frozen=True)
class SynthCorpus:
    docs: dict[str, DocumentLayout]
    profiles: tuple[ReaderProfile, ...]
    sessions: tuple[SynthSession, ...]
    tail: tuple[str, ...] = field(default_factory=tuple)


def layout_article(
    words: list[str],
    doc_id: str,
    page_width: float = 1280.0,
    page_height: float = 960.0,
    margin: float = 60.0,
    char_px: float = 16.0,
    gap_px: float = 16.0,
    line_height: float = 56.0,
    font_px: float = 28.0,
) -> DocumentLayout:
    """Wrap words into lines and pages, producing box centers.

    Defaults model a large-font reading view (the kind the browser reader
    renders for ESL study), where word pitch comfortably exceeds the
    smoothed webcam noise.
    """
    boxes = []
    x = margin
    y = margin + line_height / 2.0
    page = 0
    for i, word in enumerate(words):
        width = max(char_px, char_px * len(word))
        if x + width > page_width - margin:
            x = margin
            y += line_height
            if y > page_height - margin:
                y = margin + line_height / 2.0
                page += 1
        boxes.append(WordBox(index=i, text=word, x=x + width / 2.0, y=y, w=width, h=font_px, page=page))
        x += width + gap_px
    return DocumentLayout.from_words(doc_id, boxes)


def _generate_article_words(
    rng: np.random.Generator, difficulty: DifficultyConfig, doc_tail: list[str]
) -> list[str]:
    bank = word_bank()
    words = [w for w, _ in bank]
    weights = np.array([p for _, p in bank])
    weights /= weights.sum()

    planned = difficulty.words_per_doc
    body: list[str] = []
    while len(body) < planned:
        n = int(rng.integers(difficulty.sentence_words[0], difficulty.sentence_words[1] + 1))
        sentence = [words[int(k)] for k in rng.choice(len(words), size=n, p=weights)]
        if not difficulty.gaze_only and rng.random() < difficulty.entity_prob:
            phrase = ENTITIES[int(rng.integers(len(ENTITIES)))][0].split()
            pos = int(rng.integers(1, max(2, len(sentence))))
            sentence[pos:pos] = phrase
        body.extend(sentence)
    body = body[:planned]

    # plant tail occurrences at scattered non-initial slots; keep planted
    # words separated so two long dwells never share one pacing block
    lo, hi = difficulty.tail_occurrences
    slots = []
    for tail_word in doc_tail:
        occurrences = 2 if difficulty.gaze_only else int(rng.integers(lo, hi + 1))
        slots.extend([tail_word] * occurrences)
    # skip the document edges: the first word starts the trace and the last
    # words' gaze windows run past its end
    candidates = rng.permutation(np.arange(1, max(2, len(body) - 3)))
    positions: list[int] = []
    for pos in candidates.tolist():
        if len(positions) == len(slots):
            break
        if all(abs(pos - q) >= difficulty.min_tail_separation for q in positions):
            positions.append(pos)
    rng.shuffle(slots)
    for word, pos in zip(slots, sorted(positions)):
        body[pos] = word
    return body


def make_corpus(
    n_docs: int = 36,
    n_readers: int = 12,
    difficulty: DifficultyConfig = DifficultyConfig(),
    seed: int = 0,
) -> SynthCorpus:
    """Documents, reader profiles, and one session per reader x document.

    Reader unknown vocabularies are sampled from the shared rare tail; the
    resulting mean pairwise Jaccard must land inside the configured band or
    generation aborts as infeasible.
    """
    from .evalharness import jaccard_matrix, mean_offdiagonal

    if n_docs < 1 or n_readers < 1:
        raise GenerationError("need at least one document and one reader")
    rng = np.random.default_rng(seed)
    tail = tail_words(difficulty.tail_size, uniform_pos=difficulty.gaze_only)

    docs: dict[str, DocumentLayout] = {}
    for d in range(n_docs):
        doc_id = f"doc{d:03d}"
        doc_tail_idx = rng.choice(difficulty.tail_size, size=difficulty.tail_per_doc, replace=False)
        doc_tail = [tail[int(i)] for i in sorted(doc_tail_idx.tolist())]
        body = _generate_article_words(rng, difficulty, doc_tail)
        docs[doc_id] = layout_article(body, doc_id)

    profiles = []
    for r in range(n_readers):
        picks = rng.choice(difficulty.tail_size, size=difficulty.unknown_per_reader, replace=False)
        profiles.append(
            ReaderProfile(
                reader_id=f"reader{r:02d}",
                unknown_vocab=frozenset(tail[int(i)] for i in picks.tolist()),
                base_dwell_ms=difficulty.base_dwell_ms,
                dwell_multiplier_unknown=difficulty.dwell_multiplier_unknown,
                p_regression=difficulty.p_regression,
                noise_sigma_px=difficulty.noise_sigma_px,
            )
        )
    if n_readers > 1:
        mean_j = mean_offdiagonal(jaccard_matrix([set(p.unknown_vocab) for p in profiles]))
        lo, hi = difficulty.jaccard_band
        if not lo <= mean_j <= hi:
            raise GenerationError(
                f"profile Jaccard mean {mean_j:.3f} outside the configured band [{lo}, {hi}]; "
                f"adjust unknown_per_reader/tail_size"
            )

    sessions = []
    for profile in profiles:
        for doc_id in sorted(docs):
            sub_seed = int(rng.integers(0, 2**31 - 1))
            sessions.append(simulate_session(docs[doc_id], profile, sub_seed, difficulty.dwell_sigma, difficulty.pacing_words))
    return SynthCorpus(docs=docs, profiles=tuple(profiles), sessions=tuple(sessions), tail=tuple(tail))
