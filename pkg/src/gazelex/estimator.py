"""Scikit-learn style facade over the detector.

``UnknownWordDetector`` follows the estimator contract (constructor args
stored verbatim, ``fit``/``predict``/``get_params``), so it clones and
composes with the wider ecosystem. X is a list of context windows (the
dataclass or its JSON dict form); labels ride inside the windows, with an
optional ``y`` override.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .alignment import ContextWindow, window_from_dict
from .errors import ModelError
from .evalharness import EvalReport, metrics, window_truth
from .model import ModelConfig, predict_batch, train


def validate_windows(X, use_knowledge: bool = True, n_gaze: int | None = None) -> list[ContextWindow]:
    """Coerce dict records to ContextWindow and check model preconditions."""
    if not isinstance(X, (list, tuple)):
        raise ModelError("X must be a list of context windows")
    windows = []
    for i, item in enumerate(X):
        win = window_from_dict(item) if isinstance(item, dict) else item
        if not isinstance(win, ContextWindow):
            raise ModelError(f"X[{i}] is not a context window")
        if use_knowledge and win.knowledge is None:
            raise ModelError(f"X[{i}] lacks knowledge features; run the enrichment step first")
        if n_gaze is not None and win.gaze.shape[0] != n_gaze:
            raise ModelError(f"X[{i}] gaze length {win.gaze.shape[0]} != n_gaze {n_gaze}")
        windows.append(win)
    return windows


class UnknownWordDetector(BaseEstimator, ClassifierMixin):
    """Detects unknown words from gaze, context, and knowledge features."""

    def __init__(
        self,
        n_p=16,
        n_k=32,
        dim=64,
        n_gaze=20,
        n_txt=64,
        vocab_size=8192,
        encoder_kind="toy_transformer",
        encoder_layers=2,
        encoder_heads=2,
        ffn_mult=4,
        knowledge_feat_dim=8,
        attention_activation="softmax",
        threshold=0.5,
        lr_encoder=8e-5,
        lr_lstm=0.1,
        epochs=5,
        batch_size=16,
        seed=0,
        use_gaze=True,
        use_context=True,
        use_knowledge=True,
        local_scale_px=250.0,
        lstm_grad_clip=1.0,
        embedding_store=None,
    ):
        self.n_p = n_p
        self.n_k = n_k
        self.dim = dim
        self.n_gaze = n_gaze
        self.n_txt = n_txt
        self.vocab_size = vocab_size
        self.encoder_kind = encoder_kind
        self.encoder_layers = encoder_layers
        self.encoder_heads = encoder_heads
        self.ffn_mult = ffn_mult
        self.knowledge_feat_dim = knowledge_feat_dim
        self.attention_activation = attention_activation
        self.threshold = threshold
        self.lr_encoder = lr_encoder
        self.lr_lstm = lr_lstm
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.use_gaze = use_gaze
        self.use_context = use_context
        self.use_knowledge = use_knowledge
        self.local_scale_px = local_scale_px
        self.lstm_grad_clip = lstm_grad_clip
        self.embedding_store = embedding_store

    def build_config(self) -> ModelConfig:
        return ModelConfig(
            n_p=self.n_p,
            n_k=self.n_k,
            dim=self.dim,
            n_gaze=self.n_gaze,
            n_txt=self.n_txt,
            vocab_size=self.vocab_size,
            encoder_kind=self.encoder_kind,
            encoder_layers=self.encoder_layers,
            encoder_heads=self.encoder_heads,
            ffn_mult=self.ffn_mult,
            knowledge_feat_dim=self.knowledge_feat_dim,
            attention_activation=self.attention_activation,
            threshold=self.threshold,
            lr_encoder=self.lr_encoder,
            lr_lstm=self.lr_lstm,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            use_gaze=self.use_gaze,
            use_context=self.use_context,
            use_knowledge=self.use_knowledge,
            local_scale_px=self.local_scale_px,
            lstm_grad_clip=self.lstm_grad_clip,
        )

    def fit(self, X, y=None):
        windows = validate_windows(X, self.use_knowledge, self.n_gaze)
        if y is not None:
            if len(y) != len(windows):
                raise ModelError(f"y has {len(y)} entries for {len(windows)} windows")
            windows = [
                replace(w, token_labels=np.asarray(labels, dtype=np.int64), is_negative=False)
                for w, labels in zip(windows, y)
            ]
        self.config_ = self.build_config()
        self.params_, self.history_ = train(
            windows, self.config_, embedding_store=self.embedding_store
        )
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("this UnknownWordDetector is not fitted yet; call fit first")

    def predict(self, X) -> list[set[int]]:
        """Flagged word-ordinal set per window."""
        self._check_fitted()
        windows = validate_windows(X, self.use_knowledge, self.n_gaze)
        return [r[0] for r in predict_batch(windows, self.params_, self.config_, self.embedding_store)]

    def predict_proba(self, X) -> list[np.ndarray]:
        """Per-token activations per window (variable length, unpadded)."""
        self._check_fitted()
        windows = validate_windows(X, self.use_knowledge, self.n_gaze)
        return [r[2] for r in predict_batch(windows, self.params_, self.config_, self.embedding_store)]

    def word_scores(self, X) -> list[dict[int, float]]:
        """Max token activation per word ordinal, per window."""
        self._check_fitted()
        windows = validate_windows(X, self.use_knowledge, self.n_gaze)
        return [r[1] for r in predict_batch(windows, self.params_, self.config_, self.embedding_store)]

    def evaluate(self, X) -> EvalReport:
        """Word-level micro P/R/F1 and token accuracy against window labels."""
        self._check_fitted()
        windows = validate_windows(X, self.use_knowledge, self.n_gaze)
        results = predict_batch(windows, self.params_, self.config_, self.embedding_store)
        predicted = [r[0] for r in results]
        flags = [(r[2] >= self.config_.threshold).astype(int) for r in results]
        labels = [w.token_labels for w in windows]
        truth = [window_truth(w) for w in windows]
        return metrics(
            predicted, truth, flags, labels,
            config_fingerprint=self.config_.fingerprint(), seed=self.seed,
        )

    def score(self, X, y=None) -> float:
        """Word-level micro F1 in [0, 1] (sklearn-style score)."""
        return self.evaluate(X).f1 / 100.0
