"""Model configuration: dimensions, encoder choice, and training settings."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

from ..errors import ModelError
from ..knowledge import N_TF_BUCKETS, NER_TAGS, POS_TAGS

ENCODER_KINDS = ("toy_transformer", "embedding_file")
ATTENTION_ACTIVATIONS = ("softmax", "tanh")
FEATURE_BLOCKS = ("gaze", "context", "knowledge")


@dataclass(frozen=True)
class ModelConfig:
    n_p: int = 16
    n_k: int = 32
    dim: int = 64
    n_gaze: int = 20
    n_txt: int = 64
    vocab_size: int = 8192
    encoder_kind: str = "toy_transformer"
    encoder_layers: int = 2
    encoder_heads: int = 2
    ffn_mult: int = 4
    knowledge_feat_dim: int = 8
    attention_activation: str = "tanh"
    threshold: float = 0.5
    lr_encoder: float = 8e-5
    lr_lstm: float = 0.1
    lstm_grad_clip: float = 1.0
    epochs: int = 5
    batch_size: int = 16
    seed: int = 0
    use_gaze: bool = True
    use_context: bool = True
    use_knowledge: bool = True
    local_scale_px: float = 250.0

    def __post_init__(self):
        for name in ("n_p", "n_k", "dim", "n_gaze", "n_txt", "vocab_size",
                     "encoder_heads", "ffn_mult", "knowledge_feat_dim",
                     "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.encoder_layers < 0:
            raise ModelError("encoder_layers must be >= 0")
        if not 0.0 < self.threshold < 1.0:
            raise ModelError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.encoder_kind not in ENCODER_KINDS:
            raise ModelError(f"encoder_kind must be one of {ENCODER_KINDS}")
        if self.attention_activation not in ATTENTION_ACTIVATIONS:
            raise ModelError(f"attention_activation must be one of {ATTENTION_ACTIVATIONS}")
        if self.dim % self.encoder_heads != 0:
            raise ModelError(f"dim {self.dim} must be divisible by heads {self.encoder_heads}")
        if not (self.use_gaze or self.use_context or self.use_knowledge):
            raise ModelError("at least one feature block must be enabled")

    @property
    def classifier_width(self) -> int:
        width = 0
        if self.use_gaze:
            width += self.n_gaze
        if self.use_context:
            width += self.dim
        if self.use_knowledge:
            width += self.n_k
        return width

    @property
    def n_pos_tags(self) -> int:
        return len(POS_TAGS)

    @property
    def n_ner_tags(self) -> int:
        return len(NER_TAGS)

    @property
    def n_tf_buckets(self) -> int:
        return N_TF_BUCKETS

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(raw: dict) -> "ModelConfig":
        known = {f for f in ModelConfig.__dataclass_fields__}
        return ModelConfig(**{k: v for k, v in raw.items() if k in known})

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]

    def with_overrides(self, **kwargs) -> "ModelConfig":
        return replace(self, **kwargs)
