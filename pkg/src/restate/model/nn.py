"""Numpy building blocks with explicit forward/backward pairs.

Everything runs in float64 so finite-difference gradient checks are
meaningful. Shapes follow the (batch, heads, length, head_dim)
convention inside attention; masks are additive (0 keeps a key,
-1e9 removes it).

Flag-aware cross-attention: for query j and key i, the raw score is
q_j . (k_i + E_k[M(i,j)]) scaled by sqrt(head_dim), and the output is
sum_i alpha_ij (v_i + E_v[M(i,j)]). The flag tables are materialized
per head as (3, heads, head_dim) slices; the M-dependent gather is
expressed through a one-hot tensor so the backward pass stays a couple
of einsums instead of a scatter loop.
"""

from __future__ import annotations

import numpy as np

NEG_INF = -1e9


class ShapeMismatch(ValueError):
    """Raised when attention inputs disagree on their shared dimensions."""


def linear(x, w):
    return x @ w


def linear_bwd(x, w, dy):
    dx = dy @ w.T
    dw = x.reshape(-1, x.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])
    return dx, dw


def relu(x):
    return np.maximum(x, 0.0)


def relu_bwd(x, dy):
    return dy * (x > 0.0)


def layer_norm(x, g, b, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return g * xhat + b, (xhat, inv, g)


def layer_norm_bwd(cache, dy):
    xhat, inv, g = cache
    dxhat = dy * g
    dg = (dy * xhat).reshape(-1, dy.shape[-1]).sum(axis=0)
    db = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dg, db


def softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def split_heads(x, heads):
    # (B, L, D) -> (B, H, L, D/H)
    b, l, d = x.shape
    return x.reshape(b, l, heads, d // heads).transpose(0, 2, 1, 3)


def merge_heads(x):
    # (B, H, L, Dh) -> (B, L, D)
    b, h, l, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * dh)


def attention(q, k, v, mask=None):
    """Scaled dot-product attention. q,k,v: (B,H,L,Dh)."""
    dh = q.shape[-1]
    scale = np.sqrt(dh)
    logits = q @ k.swapaxes(-1, -2) / scale
    if mask is not None:
        logits = logits + mask
    alpha = softmax(logits)
    ctx = alpha @ v
    return ctx, (q, k, v, alpha, scale)


def attention_bwd(cache, dctx):
    q, k, v, alpha, scale = cache
    dalpha = dctx @ v.swapaxes(-1, -2)
    dv = alpha.swapaxes(-1, -2) @ dctx
    dlogits = alpha * (dalpha - (dalpha * alpha).sum(axis=-1, keepdims=True))
    draw = dlogits / scale
    dq = draw @ k
    dk = draw.swapaxes(-1, -2) @ q
    return dq, dk, dv


def flag_onehot(m):
    """(B, Lenc, Ldec) int flags -> (B, Ldec, Lenc, 3) float one-hot."""
    mt = np.transpose(np.asarray(m), (0, 2, 1))
    return (mt[..., None] == np.arange(3)).astype(np.float64)


def flagged_attention(q, k, v, onehot, ek3, ev3, mask=None):
    """Cross-attention with additive flag key/value embeddings.

    q: (B,H,Lq,Dh); k,v: (B,H,Lk,Dh); onehot: (B,Lq,Lk,3);
    ek3, ev3: (3,H,Dh), per-head slices of the 3 x dim flag tables.
    """
    b, h, lq, dh = q.shape
    lk = k.shape[2]
    if onehot.shape != (b, lq, lk, 3):
        raise ShapeMismatch("flag tensor %s does not match (%d,%d,%d,3)"
                            % (onehot.shape, b, lq, lk))
    scale = np.sqrt(dh)
    base = q @ k.swapaxes(-1, -2)
    # tf[b,h,j,f] = q_j . ek[f]; gathered per key via the one-hot
    tf = np.einsum("bhjd,fhd->bhjf", q, ek3)
    tflag = np.einsum("bhjf,bjif->bhji", tf, onehot, optimize=True)
    logits = (base + tflag) / scale
    if mask is not None:
        logits = logits + mask
    alpha = softmax(logits)
    # amass[b,h,j,f] = total attention mass on keys flagged f
    amass = np.einsum("bhji,bjif->bhjf", alpha, onehot, optimize=True)
    ctx = alpha @ v + np.einsum("bhjf,fhd->bhjd", amass, ev3)
    cache = (q, k, v, onehot, ek3, ev3, alpha, amass, scale)
    return ctx, cache


def flagged_attention_bwd(cache, dctx):
    q, k, v, onehot, ek3, ev3, alpha, amass, scale = cache
    dev3 = np.einsum("bhjf,bhjd->fhd", amass, dctx)
    damass = np.einsum("bhjd,fhd->bhjf", dctx, ev3)
    dalpha = dctx @ v.swapaxes(-1, -2) \
        + np.einsum("bhjf,bjif->bhji", damass, onehot, optimize=True)
    dv = alpha.swapaxes(-1, -2) @ dctx
    dlogits = alpha * (dalpha - (dalpha * alpha).sum(axis=-1, keepdims=True))
    draw = dlogits / scale
    dtf = np.einsum("bhji,bjif->bhjf", draw, onehot, optimize=True)
    dq = draw @ k + np.einsum("bhjf,fhd->bhjd", dtf, ek3)
    dk = draw.swapaxes(-1, -2) @ q
    dek3 = np.einsum("bhjf,bhjd->fhd", dtf, q)
    return dq, dk, dv, dek3, dev3


def cross_entropy(logits, targets, mask, label_smoothing=0.0):
    """Mean per-token loss over masked positions, plus dlogits.

    logits: (B,L,V); targets: (B,L) int; mask: (B,L) float 0/1.
    """
    b, l, vsz = logits.shape
    logp = log_softmax(logits)
    p = np.exp(logp)
    n = mask.sum()
    if n == 0:
        raise ValueError("loss mask selects no positions")
    eps = label_smoothing
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    per_pos = -(1.0 - eps) * picked - (eps / vsz) * logp.sum(axis=-1)
    loss = float((per_pos * mask).sum() / n)
    tdist = np.full_like(logits, eps / vsz)
    np.put_along_axis(tdist, targets[..., None], eps / vsz + (1.0 - eps), axis=-1)
    dlogits = (p - tdist) * mask[..., None] / n
    return loss, dlogits


def causal_mask(l):
    """(1,1,L,L) additive mask hiding future positions."""
    m = np.triu(np.ones((l, l)), k=1) * NEG_INF
    return m[None, None]


def padding_mask(real):
    """(B,L) boolean of real tokens -> (B,1,1,L) additive key mask."""
    return np.where(real[:, None, None, :], 0.0, NEG_INF)


def global_norm(arrays):
    return float(np.sqrt(sum(float((a * a).sum()) for a in arrays)))
