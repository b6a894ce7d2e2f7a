"""Numerical primitives with explicit forward/backward passes.

Everything runs in float64. Backward functions return exact gradients of
their forward counterparts, which is what makes the finite-difference
checks in the test suite meaningful.
"""

from __future__ import annotations

import numpy as np

_NEG_INF = -1e9
_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
_GELU_C = 0.044715


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax_last(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_last_backward(p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    return p * (dp - (dp * p).sum(axis=-1, keepdims=True))


def gelu(x: np.ndarray) -> np.ndarray:
    """tanh-approximated GELU; smooth, so finite differences stay honest."""
    inner = _SQRT_2_OVER_PI * (x + _GELU_C * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(inner))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    inner = _SQRT_2_OVER_PI * (x + _GELU_C * x * x * x)
    t = np.tanh(inner)
    dinner = _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_C * x * x)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner


def lstm_forward(Wx: np.ndarray, Wh: np.ndarray, b: np.ndarray, x: np.ndarray):
    """Single-layer LSTM over a batch.

    x: (B, T, D_in). Gate order in the stacked weight rows is i, f, g, o.
    Returns H (B, T, n) and the cache needed for backprop.
    """
    B, T, _ = x.shape
    n = Wh.shape[1]
    H = np.zeros((B, T, n))
    gates_i = np.zeros((B, T, n))
    gates_f = np.zeros((B, T, n))
    gates_g = np.zeros((B, T, n))
    gates_o = np.zeros((B, T, n))
    cells = np.zeros((B, T, n))
    tanh_c = np.zeros((B, T, n))
    h = np.zeros((B, n))
    c = np.zeros((B, n))
    for t in range(T):
        z = x[:, t] @ Wx.T + h @ Wh.T + b
        zi, zf, zg, zo = np.split(z, 4, axis=1)
        i = sigmoid(zi)
        f = sigmoid(zf)
        g = np.tanh(zg)
        o = sigmoid(zo)
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        H[:, t] = h
        gates_i[:, t] = i
        gates_f[:, t] = f
        gates_g[:, t] = g
        gates_o[:, t] = o
        cells[:, t] = c
        tanh_c[:, t] = tc
    cache = (x, H, gates_i, gates_f, gates_g, gates_o, cells, tanh_c)
    return H, cache


def lstm_backward(Wx: np.ndarray, Wh: np.ndarray, cache, dH: np.ndarray):
    """Backprop through time. Returns (dWx, dWh, db)."""
    x, H, gi, gf, gg, go, cells, tanh_c = cache
    B, T, n = H.shape
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(Wx.shape[0])
    dh_next = np.zeros((B, n))
    dc_next = np.zeros((B, n))
    for t in range(T - 1, -1, -1):
        dh = dH[:, t] + dh_next
        i, f, g, o = gi[:, t], gf[:, t], gg[:, t], go[:, t]
        tc = tanh_c[:, t]
        c_prev = cells[:, t - 1] if t > 0 else np.zeros((B, n))
        h_prev = H[:, t - 1] if t > 0 else np.zeros((B, n))

        do = dh * tc
        dc = dh * o * (1.0 - tc**2) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f

        dzi = di * i * (1.0 - i)
        dzf = df * f * (1.0 - f)
        dzg = dg * (1.0 - g**2)
        dzo = do * o * (1.0 - o)
        dz = np.concatenate([dzi, dzf, dzg, dzo], axis=1)

        dWx += dz.T @ x[:, t]
        dWh += dz.T @ h_prev
        db += dz.sum(axis=0)
        dh_next = dz @ Wh
    return dWx, dWh, db


def layernorm_forward(x: np.ndarray, g: np.ndarray, b: np.ndarray, eps: float = 1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    return xhat * g + b, (xhat, inv_std)


def layernorm_backward(cache, g: np.ndarray, dy: np.ndarray):
    xhat, inv_std = cache
    n = xhat.shape[-1]
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    dx = inv_std / n * (
        n * dxhat
        - dxhat.sum(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
    )
    return dx, dg, db


def mha_forward(x: np.ndarray, p: dict, prefix: str, heads: int, key_mask: np.ndarray):
    """Multi-head scaled dot-product self-attention.

    x: (B, T, D); key_mask: (B, T) with 1 for real tokens. Padding keys are
    masked out so real-token outputs do not depend on padding content.
    """
    B, T, D = x.shape
    dk = D // heads
    q = x @ p[prefix + "Wq"] + p[prefix + "bq"]
    k = x @ p[prefix + "Wk"] + p[prefix + "bk"]
    v = x @ p[prefix + "Wv"] + p[prefix + "bv"]

    def split(m):
        return m.reshape(B, T, heads, dk).transpose(0, 2, 1, 3)

    qh, kh, vh = split(q), split(k), split(v)
    logits = qh @ kh.transpose(0, 1, 3, 2) / np.sqrt(dk)
    logits = logits + (1.0 - key_mask)[:, None, None, :] * _NEG_INF
    attn = softmax_last(logits)
    ctx = attn @ vh
    merged = ctx.transpose(0, 2, 1, 3).reshape(B, T, D)
    out = merged @ p[prefix + "Wo"] + p[prefix + "bo"]
    cache = (x, qh, kh, vh, attn, merged)
    return out, cache


def mha_backward(cache, p: dict, prefix: str, heads: int, dout: np.ndarray, grads: dict):
    x, qh, kh, vh, attn, merged = cache
    B, T, D = x.shape
    dk = D // heads

    grads[prefix + "Wo"] += merged.reshape(-1, D).T @ dout.reshape(-1, D)
    grads[prefix + "bo"] += dout.sum(axis=(0, 1))
    dmerged = dout @ p[prefix + "Wo"].T
    dctx = dmerged.reshape(B, T, heads, dk).transpose(0, 2, 1, 3)

    dattn = dctx @ vh.transpose(0, 1, 3, 2)
    dvh = attn.transpose(0, 1, 3, 2) @ dctx
    dlogits = softmax_last_backward(attn, dattn) / np.sqrt(dk)
    dqh = dlogits @ kh
    dkh = dlogits.transpose(0, 1, 3, 2) @ qh

    def merge(m):
        return m.transpose(0, 2, 1, 3).reshape(B, T, D)

    dq, dkm, dv = merge(dqh), merge(dkh), merge(dvh)
    x_flat = x.reshape(-1, D)
    grads[prefix + "Wq"] += x_flat.T @ dq.reshape(-1, D)
    grads[prefix + "bq"] += dq.sum(axis=(0, 1))
    grads[prefix + "Wk"] += x_flat.T @ dkm.reshape(-1, D)
    grads[prefix + "bk"] += dkm.sum(axis=(0, 1))
    grads[prefix + "Wv"] += x_flat.T @ dv.reshape(-1, D)
    grads[prefix + "bv"] += dv.sum(axis=(0, 1))
    dx = dq @ p[prefix + "Wq"].T + dkm @ p[prefix + "Wk"].T + dv @ p[prefix + "Wv"].T
    return dx
