"""Training loop and prediction.

Two learning-rate groups, as the training recipe calls for: the context
encoder, knowledge embeddings, and classifier are updated with adaptive
first/second-moment estimates (lr 8e-5 by default), the recurrent gaze and
position encoders with plain gradient descent (lr 0.1 by default).
"""

from __future__ import annotations

import logging
import math
import os

import numpy as np

from ..alignment import ContextWindow
from ..errors import TrainingDiverged
from .config import ModelConfig
from .network import Batch, batch_forward, batch_loss, loss_and_grad, prepare_batch
from .params import init_params, param_group, save_checkpoint

logger = logging.getLogger(__name__)

_ADAM_B1 = 0.9
_ADAM_B2 = 0.999
_ADAM_EPS = 1e-8


class TwoGroupOptimizer:
    """Adam for the encoder/linear group, SGD for the recurrent group.

    The recurrent group's gradient is clipped by global norm: at lr 0.1 an
    unclipped spike saturates the gates, after which the encoders never
    recover (standard recurrent-training practice).
    """

    def __init__(self, params: dict[str, np.ndarray], config: ModelConfig):
        self.lr_encoder = config.lr_encoder
        self.lr_lstm = config.lr_lstm
        self.clip = config.lstm_grad_clip
        self.m = {n: np.zeros_like(t) for n, t in params.items() if param_group(n) == "encoder"}
        self.v = {n: np.zeros_like(t) for n, t in params.items() if param_group(n) == "encoder"}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - _ADAM_B1**self.t
        bc2 = 1.0 - _ADAM_B2**self.t
        scale = 1.0
        if self.clip > 0:
            sq = sum(float((g * g).sum()) for n, g in grads.items() if param_group(n) == "lstm")
            norm = np.sqrt(sq)
            if norm > self.clip:
                scale = self.clip / norm
        for name, g in grads.items():
            if param_group(name) == "lstm":
                params[name] -= self.lr_lstm * scale * g
            else:
                m = self.m[name]
                v = self.v[name]
                m *= _ADAM_B1
                m += (1.0 - _ADAM_B1) * g
                v *= _ADAM_B2
                v += (1.0 - _ADAM_B2) * g * g
                params[name] -= self.lr_encoder * (m / bc1) / (np.sqrt(v / bc2) + _ADAM_EPS)


def train(
    windows: list[ContextWindow],
    config: ModelConfig,
    out_dir: str | None = None,
    val_windows: list[ContextWindow] | None = None,
    embedding_store=None,
    epoch_callback=None,
):
    """Train from scratch; deterministic for a given config seed.

    Returns (params, per-epoch metrics). Checkpoints are saved per epoch
    when ``out_dir`` is given. A non-finite loss aborts with the parameters
    of the last completed epoch attached to the raised error.
    """
    if not windows:
        raise TrainingDiverged("training set is empty")
    rng = np.random.default_rng(config.seed)
    params = init_params(config, rng)
    opt = TwoGroupOptimizer(params, config)
    metrics: list[dict] = []
    last_good = {n: t.copy() for n, t in params.items()}

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    for epoch in range(config.epochs):
        order = rng.permutation(len(windows))
        losses = []
        for lo in range(0, len(windows), config.batch_size):
            chunk = [windows[i] for i in order[lo : lo + config.batch_size]]
            batch = prepare_batch(chunk, config, embedding_store)
            loss, grads = loss_and_grad(params, batch, config)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch + 1}, batch {lo // config.batch_size}",
                    params=last_good,
                    metrics=metrics,
                )
            opt.step(params, grads)
            losses.append(loss)
        record = {"epoch": epoch + 1, "train_loss": float(np.mean(losses))}
        if val_windows:
            record["val_loss"] = evaluate_loss(val_windows, params, config, embedding_store)
        metrics.append(record)
        last_good = {n: t.copy() for n, t in params.items()}
        if out_dir:
            save_checkpoint(os.path.join(out_dir, f"epoch_{epoch + 1:03d}.npz"), params, config)
        logger.info("epoch %d: %s", epoch + 1, record)
        if epoch_callback is not None:
            epoch_callback(epoch + 1, params, record)
    return params, metrics


def evaluate_loss(
    windows: list[ContextWindow],
    params: dict,
    config: ModelConfig,
    embedding_store=None,
) -> float:
    total, count = 0.0, 0
    for lo in range(0, len(windows), config.batch_size):
        chunk = windows[lo : lo + config.batch_size]
        batch = prepare_batch(chunk, config, embedding_store)
        out, _ = batch_forward(params, batch, config)
        total += batch_loss(out, batch) * len(chunk)
        count += len(chunk)
    return total / max(count, 1)


def predict_batch(
    windows: list[ContextWindow],
    params: dict,
    config: ModelConfig,
    embedding_store=None,
):
    """Flag unknown words per window.

    A token is flagged when its activation reaches the configured threshold;
    a word is flagged when any of its tokens is. Returns per window a
    (flagged word set, word -> max token score dict, token activations).
    """
    results = []
    for lo in range(0, len(windows), config.batch_size):
        chunk = windows[lo : lo + config.batch_size]
        batch = prepare_batch(chunk, config, embedding_store)
        out, _ = batch_forward(params, batch, config)
        for b, win in enumerate(chunk):
            n = len(win)
            probs = out["a"][b, :n]
            flagged = set()
            scores: dict[int, float] = {}
            for i, word in enumerate(win.word_indices.tolist()):
                scores[word] = max(scores.get(word, 0.0), float(probs[i]))
                if probs[i] >= config.threshold:
                    flagged.add(word)
            results.append((flagged, scores, probs.copy()))
    return results


def predict(window: ContextWindow, params: dict, config: ModelConfig, embedding_store=None) -> set[int]:
    """Word ordinals flagged unknown in one window."""
    flagged, _, _ = predict_batch([window], params, config, embedding_store)[0]
    return flagged
