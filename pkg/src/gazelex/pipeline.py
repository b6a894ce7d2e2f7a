"""End-to-end plumbing that ties the pipeline stages together.

These helpers are what the CLI, the service, and the synthetic end-to-end
evaluation share: condition traces, tokenize and featurize documents,
build enriched training windows, and score a session with a checkpoint.
"""

from __future__ import annotations

import logging

import numpy as np

from .alignment import (
    AlignmentConfig,
    ContextWindow,
    ReadingSession,
    attach_knowledge,
    build_dataset,
    extract_context,
    smoothing_group_delay_ms,
)
from .corpus import DocumentLayout, SubwordTokenizer, TokenizedDocument, tokenize
from .errors import AlignmentError
from .knowledge import FrequencyTable, KnowledgeFeatures, build_frequency_table, featurize
from .model import ModelConfig, predict_batch
from .signal import DEFAULT_RESAMPLE_HZ, DEFAULT_SMOOTH_WINDOW, condition
from .synthgen import SynthCorpus

logger = logging.getLogger(__name__)


class CorpusAssets:
    """Tokenized documents plus frequency table and per-doc knowledge."""

    def __init__(
        self,
        layouts: dict[str, DocumentLayout],
        tokenizer: SubwordTokenizer | None = None,
        freq_table: FrequencyTable | None = None,
        pos_tagger=None,
        ner_tagger=None,
    ):
        self.tokenizer = tokenizer or SubwordTokenizer.default()
        self.layouts = dict(layouts)
        self.tokenized: dict[str, TokenizedDocument] = {
            doc_id: tokenize(doc, self.tokenizer) for doc_id, doc in self.layouts.items()
        }
        self.freq_table = freq_table or build_frequency_table(list(self.layouts.values()))
        self.features: dict[str, KnowledgeFeatures] = {
            doc_id: featurize(self.tokenized[doc_id], doc, self.freq_table, pos_tagger, ner_tagger)
            for doc_id, doc in self.layouts.items()
        }

    @property
    def doc_pairs(self) -> dict[str, tuple[DocumentLayout, TokenizedDocument]]:
        return {doc_id: (self.layouts[doc_id], self.tokenized[doc_id]) for doc_id in self.layouts}


def estimate_rate_hz(trace) -> float:
    """Effective sample rate of a (possibly uneven) trace, from median gap."""
    gaps = np.diff(trace.times())
    if len(gaps) == 0:
        raise AlignmentError("trace too short to estimate a rate")
    return 1000.0 / float(np.median(gaps))


def condition_corpus(
    corpus: SynthCorpus,
    window: int = DEFAULT_SMOOTH_WINDOW,
    rate_hz: float = DEFAULT_RESAMPLE_HZ,
) -> list[ReadingSession]:
    """Smooth-then-resample every synthetic session's raw trace."""
    return [s.reading_session(condition(s.raw_trace, window, rate_hz)) for s in corpus.sessions]


def alignment_for_corpus(corpus: SynthCorpus, window: int = DEFAULT_SMOOTH_WINDOW, **kwargs) -> AlignmentConfig:
    """Alignment config with the gaze lag matching the conditioning filter."""
    raw_rate = estimate_rate_hz(corpus.sessions[0].raw_trace)
    return AlignmentConfig(gaze_lag_ms=smoothing_group_delay_ms(window, raw_rate), **kwargs)


def build_training_windows(
    sessions: list[ReadingSession],
    assets: CorpusAssets,
    align_config: AlignmentConfig = AlignmentConfig(),
) -> list[ContextWindow]:
    """Aligned dataset with knowledge features attached."""
    windows = build_dataset(sessions, assets.doc_pairs, align_config)
    return attach_knowledge(windows, assets.features)


def windows_for_all_words(
    session: ReadingSession,
    assets: CorpusAssets,
    align_config: AlignmentConfig = AlignmentConfig(),
) -> list[ContextWindow]:
    """One inference window per word the trace covers (labels from marks)."""
    doc, tdoc = assets.doc_pairs[session.doc_id]
    windows = []
    for word in range(len(doc)):
        try:
            windows.append(extract_context(session, doc, tdoc, word, align_config))
        except AlignmentError:
            continue
    return attach_knowledge(windows, assets.features)


def score_session(
    session: ReadingSession,
    assets: CorpusAssets,
    params: dict,
    config: ModelConfig,
    align_config: AlignmentConfig | None = None,
    embedding_store=None,
) -> dict[int, float]:
    """Flagged words with scores for one conditioned session.

    Every covered word gets an inference window; a word is flagged when any
    of its tokens crosses the threshold in its own anchor window.
    """
    if align_config is None:
        align_config = AlignmentConfig(n_gaze=config.n_gaze, n_txt=config.n_txt)
    windows = windows_for_all_words(session, assets, align_config)
    flagged: dict[int, float] = {}
    results = predict_batch(windows, params, config, embedding_store)
    for win, (words, scores, _) in zip(windows, results):
        if win.anchor_word in words:
            flagged[win.anchor_word] = max(flagged.get(win.anchor_word, 0.0), scores[win.anchor_word])
    return flagged
