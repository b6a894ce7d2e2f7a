"""The unknown-word detector network: forward pass, loss, and gradients.

Per window the model couples three per-token feature blocks:

* a gaze-text attention row: recurrent encodings of the 2-D gaze sequence
  and of the token position sequence, multiplied and squashed row-wise;
* a context row from the token encoder (built-in small transformer, or an
  adapter over precomputed per-token embedding files);
* a knowledge row embedding frequency/POS/NER ids.

The concatenated row goes through an affine map and a sigmoid to a
per-token activation; training minimizes summed binary cross-entropy over
the real (non-padding) tokens, averaged over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..alignment import ContextWindow
from ..errors import ModelError
from .config import ModelConfig
from .layers import (
    gelu,
    gelu_grad,
    layernorm_backward,
    layernorm_forward,
    lstm_backward,
    lstm_forward,
    mha_backward,
    mha_forward,
    sigmoid,
    softmax_last,
    softmax_last_backward,
)
from .params import zero_grads

_CLAMP = 1e-12
_SIGMOID_EPS = 1e-15


@dataclass
class Batch:
    """Model-ready arrays for a list of windows (all padded to n_txt)."""

    ids: np.ndarray        # (B, n_txt) int64
    mask: np.ndarray       # (B, n_txt) float64, 1 = real token
    positions: np.ndarray  # (B, n_txt, 2) normalized
    gaze: np.ndarray       # (B, n_gaze, 2) normalized
    labels: np.ndarray     # (B, n_txt) float64
    tf: np.ndarray         # (B, n_txt) int64
    pos_tags: np.ndarray   # (B, n_txt) int64
    ner: np.ndarray        # (B, n_txt) int64
    context_z: np.ndarray | None = None  # (B, n_txt, dim) for embedding_file mode

    def __len__(self):
        return self.ids.shape[0]


def prepare_batch(
    windows: list[ContextWindow],
    config: ModelConfig,
    embedding_store=None,
    width: int | None = None,
) -> Batch:
    """Pad, normalize, and stack windows into model input arrays.

    By default sequences are padded only to the batch's longest window
    rather than to n_txt: trailing padding is masked out of the attention
    keys and the loss and sits after the real steps of the recurrent
    encoders, so loss and gradients are identical at any padded width (the
    test suite asserts this). Pass ``width=config.n_txt`` for the
    documented full-width tensor shapes.

    Coordinates are window-relative: both token positions and gaze are
    centered on the window's token centroid and divided by
    ``local_scale_px``. Only relative gaze-to-text geometry matters to the
    detector, and the window-local frame keeps word-scale structure
    resolvable by the spatial encoders wherever the window sits on screen.
    """
    if not windows:
        raise ModelError("empty batch")
    if width is None:
        width = min(config.n_txt, max(len(w) for w in windows))
    if width > config.n_txt:
        raise ModelError(f"width {width} exceeds n_txt {config.n_txt}")
    B, T, G = len(windows), width, config.n_gaze
    ids = np.zeros((B, T), dtype=np.int64)
    mask = np.zeros((B, T))
    positions = np.zeros((B, T, 2))
    gaze = np.zeros((B, G, 2))
    labels = np.zeros((B, T))
    tf = np.zeros((B, T), dtype=np.int64)
    pos_tags = np.zeros((B, T), dtype=np.int64)
    ner = np.zeros((B, T), dtype=np.int64)

    for b, win in enumerate(windows):
        n = len(win)
        if n > T:
            raise ModelError(f"window has {n} tokens but n_txt is {T}")
        if win.gaze.shape[0] != G:
            raise ModelError(f"window gaze length {win.gaze.shape[0]} != n_gaze {G}")
        if win.token_ids.max() >= config.vocab_size:
            raise ModelError(f"token id {win.token_ids.max()} out of range for vocab {config.vocab_size}")
        ids[b, :n] = win.token_ids
        mask[b, :n] = 1.0
        center = win.positions.mean(axis=0)
        positions[b, :n] = (win.positions - center) / config.local_scale_px
        gaze[b] = (win.gaze - center) / config.local_scale_px
        labels[b, :n] = win.token_labels
        if config.use_knowledge:
            if win.knowledge is None:
                raise ModelError("window lacks knowledge features but use_knowledge is set")
            tf[b, :n] = win.knowledge["tf"]
            pos_tags[b, :n] = win.knowledge["pos"]
            ner[b, :n] = win.knowledge["ner"]

    context_z = None
    if config.use_context and config.encoder_kind == "embedding_file":
        if embedding_store is None:
            raise ModelError("embedding_file encoder needs an embedding store")
        context_z = np.zeros((B, T, config.dim))
        for b, win in enumerate(windows):
            rows = embedding_store.lookup(win.doc_id, win.token_slice)
            context_z[b, : rows.shape[0]] = rows
    return Batch(ids, mask, positions, gaze, labels, tf, pos_tags, ner, context_z)


def _encoder_forward(params: dict, ids: np.ndarray, mask: np.ndarray, config: ModelConfig):
    T = ids.shape[1]
    x = params["ctx.tok_emb"][ids] + params["ctx.pos_emb"][None, :T]
    layer_caches = []
    for layer in range(config.encoder_layers):
        pre = f"ctx.L{layer}."
        attn_out, mha_cache = mha_forward(x, params, pre, config.encoder_heads, mask)
        r1 = x + attn_out
        n1, ln1_cache = layernorm_forward(r1, params[pre + "ln1.g"], params[pre + "ln1.b"])
        h1 = n1 @ params[pre + "W1"] + params[pre + "b1"]
        hact = gelu(h1)
        f_out = hact @ params[pre + "W2"] + params[pre + "b2"]
        r2 = n1 + f_out
        n2, ln2_cache = layernorm_forward(r2, params[pre + "ln2.g"], params[pre + "ln2.b"])
        layer_caches.append((mha_cache, ln1_cache, n1, h1, hact, ln2_cache))
        x = n2
    return x, (ids, layer_caches)


def _encoder_backward(params: dict, config: ModelConfig, cache, dZ: np.ndarray, grads: dict):
    ids, layer_caches = cache
    d = config.dim
    dx = dZ
    for layer in range(config.encoder_layers - 1, -1, -1):
        pre = f"ctx.L{layer}."
        mha_cache, ln1_cache, n1, h1, hact, ln2_cache = layer_caches[layer]
        dr2, dg2, db2 = layernorm_backward(ln2_cache, params[pre + "ln2.g"], dx)
        grads[pre + "ln2.g"] += dg2
        grads[pre + "ln2.b"] += db2

        ffn = params[pre + "W1"].shape[1]
        grads[pre + "W2"] += hact.reshape(-1, ffn).T @ dr2.reshape(-1, d)
        grads[pre + "b2"] += dr2.sum(axis=(0, 1))
        dhact = dr2 @ params[pre + "W2"].T
        dh1 = dhact * gelu_grad(h1)
        grads[pre + "W1"] += n1.reshape(-1, d).T @ dh1.reshape(-1, ffn)
        grads[pre + "b1"] += dh1.sum(axis=(0, 1))
        dn1 = dr2 + dh1 @ params[pre + "W1"].T

        dr1, dg1, db1 = layernorm_backward(ln1_cache, params[pre + "ln1.g"], dn1)
        grads[pre + "ln1.g"] += dg1
        grads[pre + "ln1.b"] += db1
        dx_attn = mha_backward(mha_cache, params, pre, config.encoder_heads, dr1, grads)
        dx = dr1 + dx_attn
    np.add.at(grads["ctx.tok_emb"], ids.reshape(-1), dx.reshape(-1, d))
    grads["ctx.pos_emb"][: ids.shape[1]] += dx.sum(axis=0)


def _knowledge_forward(params: dict, batch: Batch):
    e = np.concatenate(
        [params["know.tf_emb"][batch.tf], params["know.pos_emb"][batch.pos_tags], params["know.ner_emb"][batch.ner]],
        axis=-1,
    )
    K = e @ params["know.W"] + params["know.b"]
    return K, e


def _knowledge_backward(params: dict, batch: Batch, e: np.ndarray, dK: np.ndarray, grads: dict):
    de_dim = params["know.tf_emb"].shape[1]
    n_k = dK.shape[-1]
    grads["know.W"] += e.reshape(-1, 3 * de_dim).T @ dK.reshape(-1, n_k)
    grads["know.b"] += dK.sum(axis=(0, 1))
    de = dK @ params["know.W"].T
    flat = de.reshape(-1, 3 * de_dim)
    np.add.at(grads["know.tf_emb"], batch.tf.reshape(-1), flat[:, :de_dim])
    np.add.at(grads["know.pos_emb"], batch.pos_tags.reshape(-1), flat[:, de_dim : 2 * de_dim])
    np.add.at(grads["know.ner_emb"], batch.ner.reshape(-1), flat[:, 2 * de_dim :])


def batch_forward(params: dict, batch: Batch, config: ModelConfig, need_cache: bool = False):
    """Run the full network over a batch.

    Returns an outputs dict (H_g, H_d, A, Z, K, O, logits, a) and, when
    requested, the cache for :func:`batch_backward`. Disabled blocks appear
    as None.
    """
    out: dict = {"H_g": None, "H_d": None, "A": None, "Z": None, "K": None}
    cache: dict = {}
    blocks = []

    if config.use_gaze:
        H_g, cache_g = lstm_forward(params["gaze_lstm.Wx"], params["gaze_lstm.Wh"], params["gaze_lstm.b"], batch.gaze)
        H_d, cache_d = lstm_forward(params["pos_lstm.Wx"], params["pos_lstm.Wh"], params["pos_lstm.b"], batch.positions)
        S = np.einsum("btp,bgp->btg", H_d, H_g)
        if config.attention_activation == "softmax":
            A = softmax_last(S)
        else:
            A = np.tanh(S)
        out["H_g"], out["H_d"], out["A"] = H_g, H_d, A
        cache["gaze"] = (cache_g, cache_d, A)
        blocks.append(A)

    if config.use_context:
        if config.encoder_kind == "toy_transformer":
            Z, ctx_cache = _encoder_forward(params, batch.ids, batch.mask, config)
            cache["ctx"] = ctx_cache
        else:
            if batch.context_z is None:
                raise ModelError("batch has no precomputed context embeddings")
            Z = batch.context_z
        out["Z"] = Z
        blocks.append(Z)

    if config.use_knowledge:
        K, e = _knowledge_forward(params, batch)
        out["K"] = K
        cache["know_e"] = e
        blocks.append(K)

    O = np.concatenate(blocks, axis=-1)
    logits = O @ params["clf.w"] + params["clf.b"][0]
    a = np.clip(sigmoid(logits), _SIGMOID_EPS, 1.0 - _SIGMOID_EPS)
    out["O"], out["logits"], out["a"] = O, logits, a
    return (out, cache) if need_cache else (out, None)


def batch_backward(params: dict, batch: Batch, config: ModelConfig, out: dict, cache: dict, dlogits: np.ndarray):
    """Gradients of a scalar objective with given d(objective)/d(logits)."""
    grads = zero_grads(params)
    O = out["O"]
    grads["clf.w"] += np.einsum("bt,btw->w", dlogits, O)
    grads["clf.b"] += dlogits.sum(keepdims=True).reshape(1)
    dO = dlogits[..., None] * params["clf.w"][None, None, :]

    offset = 0
    if config.use_gaze:
        dA = dO[..., offset : offset + config.n_gaze]
        offset += config.n_gaze
        cache_g, cache_d, A = cache["gaze"]
        if config.attention_activation == "softmax":
            dS = softmax_last_backward(A, dA)
        else:
            dS = dA * (1.0 - A**2)
        dH_d = np.einsum("btg,bgp->btp", dS, out["H_g"])
        dH_g = np.einsum("btg,btp->bgp", dS, out["H_d"])
        dWx, dWh, db = lstm_backward(params["gaze_lstm.Wx"], params["gaze_lstm.Wh"], cache_g, dH_g)
        grads["gaze_lstm.Wx"] += dWx
        grads["gaze_lstm.Wh"] += dWh
        grads["gaze_lstm.b"] += db
        dWx, dWh, db = lstm_backward(params["pos_lstm.Wx"], params["pos_lstm.Wh"], cache_d, dH_d)
        grads["pos_lstm.Wx"] += dWx
        grads["pos_lstm.Wh"] += dWh
        grads["pos_lstm.b"] += db

    if config.use_context:
        dZ = dO[..., offset : offset + config.dim]
        offset += config.dim
        if config.encoder_kind == "toy_transformer":
            _encoder_backward(params, config, cache["ctx"], dZ, grads)

    if config.use_knowledge:
        dK = dO[..., offset : offset + config.n_k]
        _knowledge_backward(params, batch, cache["know_e"], dK, grads)
    return grads


def bce_loss(a: np.ndarray, labels: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Summed binary cross-entropy over tokens; log arguments clamped at 1e-12."""
    a = np.asarray(a, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if a.shape != labels.shape:
        raise ModelError(f"activation/label length mismatch: {a.shape} vs {labels.shape}")
    terms = (1.0 - labels) * np.log(np.maximum(1.0 - a, _CLAMP)) + labels * np.log(np.maximum(a, _CLAMP))
    if mask is not None:
        terms = terms * mask
    return float(-terms.sum())


def batch_loss(out: dict, batch: Batch) -> float:
    """Mean over windows of the per-window summed token loss."""
    total = 0.0
    for b in range(len(batch)):
        total += bce_loss(out["a"][b], batch.labels[b], batch.mask[b])
    return total / len(batch)


def loss_and_grad(params: dict, batch: Batch, config: ModelConfig):
    """Loss plus exact gradients of the mean batch loss for every tensor."""
    out, cache = batch_forward(params, batch, config, need_cache=True)
    loss = batch_loss(out, batch)
    dlogits = batch.mask * (out["a"] - batch.labels) / len(batch)
    grads = batch_backward(params, batch, config, out, cache, dlogits)
    return loss, grads


@dataclass(frozen=True)
class ForwardTrace:
    """All intermediate tensors of one window, in documented orientation."""

    H_g: np.ndarray | None  # (n_p, n_gaze)
    H_d: np.ndarray | None  # (n_p, n_txt)
    A_p: np.ndarray | None  # (n_txt, n_gaze)
    Z: np.ndarray | None    # (n_txt, dim)
    K: np.ndarray | None    # (n_txt, n_k)
    O: np.ndarray           # (n_txt, classifier width)
    a: np.ndarray           # (n_txt,)
    token_mask: np.ndarray  # (n_txt,)

    def validate(self, config: ModelConfig) -> None:
        def expect(t, shape, name):
            if t is None:
                raise ModelError(f"{name} missing from trace")
            if t.shape != shape:
                raise ModelError(f"{name} has shape {t.shape}, expected {shape}")

        if config.use_gaze:
            expect(self.H_g, (config.n_p, config.n_gaze), "H_g")
            expect(self.H_d, (config.n_p, config.n_txt), "H_d")
            expect(self.A_p, (config.n_txt, config.n_gaze), "A_p")
        if config.use_context:
            expect(self.Z, (config.n_txt, config.dim), "Z")
        if config.use_knowledge:
            expect(self.K, (config.n_txt, config.n_k), "K")
        expect(self.O, (config.n_txt, config.classifier_width), "O")
        expect(self.a, (config.n_txt,), "a")
        if not ((self.a > 0.0).all() and (self.a < 1.0).all()):
            raise ModelError("activations must lie strictly inside (0, 1)")
        for name in ("H_g", "H_d", "A_p", "Z", "K", "O"):
            t = getattr(self, name)
            if t is not None and not np.isfinite(t).all():
                raise ModelError(f"{name} contains non-finite values")


def forward(window: ContextWindow, params: dict, config: ModelConfig, embedding_store=None) -> ForwardTrace:
    """Run one window through the network and expose every intermediate."""
    batch = prepare_batch([window], config, embedding_store, width=config.n_txt)
    out, _ = batch_forward(params, batch, config)
    tr = lambda t: None if t is None else t[0]
    return ForwardTrace(
        H_g=None if out["H_g"] is None else out["H_g"][0].T.copy(),
        H_d=None if out["H_d"] is None else out["H_d"][0].T.copy(),
        A_p=tr(out["A"]),
        Z=tr(out["Z"]),
        K=tr(out["K"]),
        O=out["O"][0],
        a=out["a"][0],
        token_mask=batch.mask[0],
    )


# Single-example views of the individual stages; thin wrappers over the
# batched kernels so tests can pin each stage against independent oracles.

def encode_gaze(gaze_segment: np.ndarray, params: dict, prefix: str = "gaze_lstm.") -> np.ndarray:
    """Encode a (2, n_gaze) gaze segment to (n_p, n_gaze) hidden states."""
    seg = np.asarray(gaze_segment, dtype=np.float64)
    if seg.ndim != 2 or seg.shape[0] != 2:
        raise ModelError(f"gaze segment must be (2, T), got {seg.shape}")
    if not np.isfinite(seg).all():
        raise ModelError("gaze segment contains non-finite values")
    H, _ = lstm_forward(params[prefix + "Wx"], params[prefix + "Wh"], params[prefix + "b"], seg.T[None])
    return H[0].T


def encode_positions(positions: np.ndarray, params: dict) -> np.ndarray:
    """Encode a (2, n_txt) token-position sequence to (n_p, n_txt)."""
    return encode_gaze(positions, params, prefix="pos_lstm.")


def gaze_text_attention(H_d: np.ndarray, H_g: np.ndarray, activation: str = "softmax") -> np.ndarray:
    """Row-activated product of encoded positions and encoded gaze."""
    if H_d.shape[0] != H_g.shape[0]:
        raise ModelError(f"inner dimensions disagree: {H_d.shape} vs {H_g.shape}")
    S = H_d.T @ H_g
    if activation == "softmax":
        return softmax_last(S)
    if activation == "tanh":
        return np.tanh(S)
    raise ModelError(f"unknown attention activation {activation!r}")


def encode_context(
    token_ids: np.ndarray,
    params: dict,
    config: ModelConfig,
    embedding_store=None,
    doc_id: str | None = None,
    token_slice: tuple[int, int] | None = None,
) -> np.ndarray:
    """Context rows (n_txt, dim); inputs shorter than n_txt are padded."""
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.shape[0] > config.n_txt:
        raise ModelError(f"token ids must be a vector of at most n_txt={config.n_txt}")
    if config.encoder_kind == "embedding_file":
        if embedding_store is None or doc_id is None or token_slice is None:
            raise ModelError("embedding_file context needs a store, doc_id, and token_slice")
        rows = embedding_store.lookup(doc_id, token_slice)
        Z = np.zeros((config.n_txt, config.dim))
        Z[: rows.shape[0]] = rows
        return Z
    if ids.size and (ids.min() < 0 or ids.max() >= config.vocab_size):
        raise ModelError("token id out of vocabulary range")
    padded = np.zeros((1, config.n_txt), dtype=np.int64)
    padded[0, : ids.shape[0]] = ids
    mask = np.zeros((1, config.n_txt))
    mask[0, : ids.shape[0]] = 1.0
    Z, _ = _encoder_forward(params, padded, mask, config)
    return Z[0]


def knowledge_embed(tf: np.ndarray, pos_tags: np.ndarray, ner: np.ndarray, params: dict) -> np.ndarray:
    """Embed per-token knowledge ids to (T, n_k) rows."""
    for name, ids, table in (
        ("tf", tf, params["know.tf_emb"]),
        ("pos", pos_tags, params["know.pos_emb"]),
        ("ner", ner, params["know.ner_emb"]),
    ):
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
            raise ModelError(f"{name} feature id out of range")
    e = np.concatenate(
        [params["know.tf_emb"][tf], params["know.pos_emb"][pos_tags], params["know.ner_emb"][ner]],
        axis=-1,
    )
    return e @ params["know.W"] + params["know.b"]


def classify(A_p: np.ndarray | None, Z: np.ndarray | None, K: np.ndarray | None, params: dict) -> np.ndarray:
    """Per-token sigmoid activations from the concatenated feature blocks."""
    blocks = [b for b in (A_p, Z, K) if b is not None]
    if not blocks:
        raise ModelError("classify needs at least one feature block")
    rows = {b.shape[0] for b in blocks}
    if len(rows) != 1:
        raise ModelError(f"feature blocks disagree on token count: {sorted(rows)}")
    O = np.concatenate(blocks, axis=-1)
    if O.shape[1] != params["clf.w"].shape[0]:
        raise ModelError(f"classifier width {params['clf.w'].shape[0]} != feature width {O.shape[1]}")
    return np.clip(sigmoid(O @ params["clf.w"] + params["clf.b"][0]), _SIGMOID_EPS, 1.0 - _SIGMOID_EPS)
