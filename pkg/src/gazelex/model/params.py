"""Parameter initialization, grouping, and checkpoint files.

Parameters live in an ordered name -> float64 array mapping. Names are
stable so checkpoints are self-describing and the two optimizer groups can
be selected by prefix: the recurrent position/gaze encoders form one group,
everything else (context encoder, knowledge embeddings, classifier) the
other.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import ModelError
from .config import ModelConfig

LSTM_PREFIXES = ("gaze_lstm.", "pos_lstm.")


def init_params(config: ModelConfig, rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
    """Fresh parameters for the configured architecture.

    Feature blocks that are switched off get no tensors at all, so ablated
    models genuinely drop the corresponding encoder from the graph.

    The gaze and position encoders start from a matched spatial-kernel
    point: both get the same candidate-gate ramp basis over the 2-D input,
    the forget gate biased shut and the input gate open (so hidden states
    initially reflect the current coordinate, not the running history),
    and magnitudes in the tanh linear range. The product of the two
    encodings then starts out as a position-similarity kernel, which is
    what gives the gaze-text attention a usable gradient within a short
    training budget; gradient descent remains free to open the gates.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    p: dict[str, np.ndarray] = {}

    if config.use_gaze:
        n = config.n_p
        Wx = np.zeros((4 * n, 2))
        Wx[2 * n : 3 * n] = rng.normal(0.0, 4.0, size=(n, 2))  # shared ramp basis
        b = np.zeros(4 * n)
        b[0:n] = 3.0       # input gate open
        b[n : 2 * n] = -3.0  # forget gate shut: memoryless start
        b[2 * n : 3 * n] = rng.uniform(-2.0, 2.0, size=n)  # ramp offsets
        for prefix in ("gaze_lstm.", "pos_lstm."):
            p[prefix + "Wx"] = Wx.copy()
            p[prefix + "Wh"] = rng.normal(0.0, 0.02, size=(4 * n, n))
            p[prefix + "b"] = b.copy()

    if config.use_context and config.encoder_kind == "toy_transformer":
        d = config.dim
        p["ctx.tok_emb"] = rng.normal(0.0, 0.02, size=(config.vocab_size, d))
        p["ctx.pos_emb"] = rng.normal(0.0, 0.02, size=(config.n_txt, d))
        for layer in range(config.encoder_layers):
            pre = f"ctx.L{layer}."
            for name in ("Wq", "Wk", "Wv", "Wo"):
                p[pre + name] = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d))
            for name in ("bq", "bk", "bv", "bo"):
                p[pre + name] = np.zeros(d)
            ffn = config.ffn_mult * d
            p[pre + "W1"] = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, ffn))
            p[pre + "b1"] = np.zeros(ffn)
            p[pre + "W2"] = rng.normal(0.0, 1.0 / np.sqrt(ffn), size=(ffn, d))
            p[pre + "b2"] = np.zeros(d)
            p[pre + "ln1.g"] = np.ones(d)
            p[pre + "ln1.b"] = np.zeros(d)
            p[pre + "ln2.g"] = np.ones(d)
            p[pre + "ln2.b"] = np.zeros(d)

    if config.use_knowledge:
        de = config.knowledge_feat_dim
        p["know.tf_emb"] = rng.normal(0.0, 0.1, size=(config.n_tf_buckets, de))
        p["know.pos_emb"] = rng.normal(0.0, 0.1, size=(config.n_pos_tags, de))
        p["know.ner_emb"] = rng.normal(0.0, 0.1, size=(config.n_ner_tags, de))
        p["know.W"] = rng.normal(0.0, 1.0 / np.sqrt(3 * de), size=(3 * de, config.n_k))
        p["know.b"] = np.zeros(config.n_k)

    p["clf.w"] = rng.normal(0.0, 0.01, size=config.classifier_width)
    p["clf.b"] = np.zeros(1)
    return p


def param_group(name: str) -> str:
    """Which learning-rate group a tensor belongs to: 'lstm' or 'encoder'."""
    return "lstm" if name.startswith(LSTM_PREFIXES) else "encoder"


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(t) for name, t in params.items()}


def check_finite(params: dict[str, np.ndarray]) -> None:
    for name, t in params.items():
        if not np.isfinite(t).all():
            raise ModelError(f"parameter {name} contains non-finite values")


def save_checkpoint(path, params: dict[str, np.ndarray], config: ModelConfig) -> None:
    """Write a self-describing .npz: a JSON config header plus named tensors."""
    payload = {"__config__": np.frombuffer(json.dumps(config.to_dict()).encode("utf-8"), dtype=np.uint8)}
    for name, t in params.items():
        payload["t." + name] = t
    with open(path, "wb") as f:
        np.savez(f, **payload)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], ModelConfig]:
    try:
        with np.load(path) as data:
            if "__config__" not in data:
                raise ModelError(f"{path}: not a checkpoint (missing config header)")
            config = ModelConfig.from_dict(json.loads(bytes(data["__config__"]).decode("utf-8")))
            params = {
                key[2:]: np.array(data[key], dtype=np.float64)
                for key in data.files
                if key.startswith("t.")
            }
    except (OSError, ValueError) as exc:
        raise ModelError(f"{path}: cannot read checkpoint: {exc}") from exc
    expected = set(init_params(config).keys())
    if set(params.keys()) != expected:
        missing = expected - set(params.keys())
        extra = set(params.keys()) - expected
        raise ModelError(f"{path}: tensor names mismatch (missing {sorted(missing)}, extra {sorted(extra)})")
    return params, config
