"""Unknown-word detector: configuration, network, training, checkpoints."""

from .config import ModelConfig
from .embeddings import EmbeddingStore
from .network import (
    Batch,
    ForwardTrace,
    batch_forward,
    bce_loss,
    classify,
    encode_context,
    encode_gaze,
    encode_positions,
    forward,
    gaze_text_attention,
    knowledge_embed,
    loss_and_grad,
    prepare_batch,
)
from .params import init_params, load_checkpoint, param_group, save_checkpoint
from .train import TwoGroupOptimizer, evaluate_loss, predict, predict_batch, train

__all__ = [
    "Batch",
    "EmbeddingStore",
    "ForwardTrace",
    "ModelConfig",
    "TwoGroupOptimizer",
    "batch_forward",
    "bce_loss",
    "classify",
    "encode_context",
    "encode_gaze",
    "encode_positions",
    "evaluate_loss",
    "forward",
    "gaze_text_attention",
    "init_params",
    "knowledge_embed",
    "load_checkpoint",
    "loss_and_grad",
    "param_group",
    "predict",
    "predict_batch",
    "prepare_batch",
    "save_checkpoint",
    "train",
]
