"""Differentiable operations.

Each op computes its forward value with numpy and registers a closure that
maps the output gradient to one gradient per parent.  Attention, the GRU
recurrence, layer norm and cross-entropy are fused: one graph node each,
with hand-derived backward passes.
"""

from __future__ import annotations

import math

import numpy as np

from seqstruct.diffcore.tensor import ShapeError, Tensor, as_tensor, make_node

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return make_node(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return make_node(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data
    return make_node(
        ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)), "mul"
    )


def scale(a: Tensor, c: float) -> Tensor:
    return make_node(a.data * c, (a,), lambda g: (g * c,), "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for 2-D or batched 3-D ``a`` and 2-D or batched 3-D ``b``."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        if bd.ndim == 2 and ad.ndim > 2:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return _unbroadcast(ga, ad.shape), gb

    return make_node(ad @ bd, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def embedding(weight: Tensor, indices) -> Tensor:
    """Gather rows of ``weight`` (V, D) at integer ``indices`` of any shape."""
    idx = np.asarray(indices)
    if idx.dtype.kind not in "iu":
        raise ShapeError(f"embedding: indices must be integers, got {idx.dtype}")
    if weight.ndim != 2:
        raise ShapeError(f"embedding: weight must be 2-D, got shape {weight.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= weight.shape[0]):
        raise ShapeError(f"embedding: index out of range for table of {weight.shape[0]} rows")
    wshape = weight.shape

    def backward(g):
        gw = np.zeros(wshape, dtype=g.dtype)
        np.add.at(gw, idx.ravel(), g.reshape(-1, wshape[1]))
        return (gw,)

    return make_node(weight.data[idx], (weight,), backward, "embedding")


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return make_node(np.where(pos, x.data, 0).astype(x.dtype), (x,), lambda g: (g * pos,), "relu")


def gelu(x: Tensor) -> Tensor:
    """Tanh approximation of GELU."""
    xd = x.data
    inner = _SQRT_2_OVER_PI * (xd + 0.044715 * xd**3)
    t = np.tanh(inner)
    out = 0.5 * xd * (1.0 + t)

    def backward(g):
        dinner = _SQRT_2_OVER_PI * (1.0 + 3 * 0.044715 * xd**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * dinner),)

    return make_node(out, (x,), backward, "gelu")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return make_node(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return make_node(t, (x,), lambda g: (g * (1.0 - t * t),), "tanh")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: gamma/beta must have shape ({d},), got {gamma.shape}, {beta.shape}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * rstd
    gd = gamma.data

    def backward(g):
        dxhat = g * gd
        dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_node(xhat * gd + beta.data, (x, gamma, beta), backward, "layer_norm")


def _softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    y = _softmax(x.data, axis)
    return make_node(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),), "softmax")


def attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    n_heads: int,
    causal: bool = True,
    key_mask: np.ndarray | None = None,
    return_weights: bool = False,
):
    """Multi-head scaled dot-product attention on (B, T, D) inputs.

    Query ``i`` may attend to key ``j`` when ``j <= i`` (if causal) and
    ``key_mask[b, j]`` is true.  A query always sees itself, so fully padded
    rows stay finite.  Masked weights are exactly zero.
    """
    if q.ndim != 3 or q.shape != k.shape or q.shape != v.shape:
        raise ShapeError(f"attention: q, k, v must share one (B, T, D) shape, got {q.shape}, {k.shape}, {v.shape}")
    b, t, d = q.shape
    if d % n_heads:
        raise ShapeError(f"attention: width {d} not divisible by {n_heads} heads")
    dh = d // n_heads
    scale_ = 1.0 / math.sqrt(dh)

    def split(x):
        return x.reshape(b, t, n_heads, dh).transpose(0, 2, 1, 3)

    qh, kh, vh = split(q.data), split(k.data), split(v.data)
    allowed = np.ones((b, 1, t, t), dtype=bool)
    if causal:
        allowed &= np.tri(t, dtype=bool)[None, None]
    if key_mask is not None:
        km = np.asarray(key_mask, dtype=bool)
        if km.shape != (b, t):
            raise ShapeError(f"attention: key_mask must have shape {(b, t)}, got {km.shape}")
        allowed &= km[:, None, None, :]
    allowed |= np.eye(t, dtype=bool)[None, None]

    scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale_
    scores = np.where(allowed, scores, -np.inf)
    p = np.exp(scores - scores.max(axis=-1, keepdims=True))
    p /= p.sum(axis=-1, keepdims=True)
    out = (p @ vh).transpose(0, 2, 1, 3).reshape(b, t, d)

    def backward(g):
        gh = split(g)
        dv = p.transpose(0, 1, 3, 2) @ gh
        dp = gh @ vh.transpose(0, 1, 3, 2)
        ds = p * (dp - (dp * p).sum(axis=-1, keepdims=True)) * scale_
        dq = ds @ kh
        dk = ds.transpose(0, 1, 3, 2) @ qh

        def merge(x):
            return x.transpose(0, 2, 1, 3).reshape(b, t, d)

        return merge(dq), merge(dk), merge(dv)

    node = make_node(out.astype(q.dtype, copy=False), (q, k, v), backward, "attention")
    return (node, p) if return_weights else node


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``p == 0``."""
    if not training or p <= 0:
        return x
    if not 0 < p < 1:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return make_node(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]} on axis {axis}") from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return make_node(out, tuple(tensors), lambda g: tuple(np.split(g, sizes, axis=axis)), "concat")


def getitem(x: Tensor, index) -> Tensor:
    """Basic or advanced indexing; repeated indices accumulate gradient."""
    if isinstance(index, np.ndarray) and index.dtype == bool:
        index = np.nonzero(index)
    out = x.data[index]
    xshape = x.shape

    def backward(g):
        gx = np.zeros(xshape, dtype=g.dtype)
        np.add.at(gx, index, g)
        return (gx,)

    return make_node(np.array(out, copy=True), (x,), backward, "slice")


def reshape(x: Tensor, shape) -> Tensor:
    xshape = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {xshape} to {shape}") from None
    return make_node(out, (x,), lambda g: (g.reshape(xshape),), "reshape")


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    return make_node(np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),), "transpose")


def sum_(x: Tensor, axis=None) -> Tensor:
    xshape = x.shape

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, xshape).copy(),)

    return make_node(np.asarray(x.data.sum(axis=axis)), (x,), backward, "sum")


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else x.shape[axis]
    return scale(sum_(x, axis), 1.0 / n)


def cross_entropy_logits(logits: Tensor, targets, ignore_index: int | None = None) -> Tensor:
    """Mean negative log-softmax of the target logit over non-ignored rows."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy_logits: logits must be (N, C), got {logits.shape}")
    tg = np.asarray(targets).reshape(-1)
    if tg.shape[0] != logits.shape[0]:
        raise ShapeError(f"cross_entropy_logits: {tg.shape[0]} targets for {logits.shape[0]} rows")
    valid = np.ones(len(tg), dtype=bool) if ignore_index is None else tg != ignore_index
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("cross_entropy_logits: every position is ignored")
    c = logits.shape[1]
    if tg[valid].max() >= c or tg[valid].min() < 0:
        raise ShapeError(f"cross_entropy_logits: target outside catalog of size {c}")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    se = e.sum(axis=1, keepdims=True)
    rows = np.nonzero(valid)[0]
    lse = (np.log(se[:, 0]) + zmax[:, 0])[rows]
    loss = (lse - z[rows, tg[rows]]).sum() / n_valid

    def backward(g):
        p = e / se
        p[~valid] = 0
        p[rows, tg[rows]] -= 1
        return (p * (g / n_valid),)

    return make_node(np.asarray(loss, dtype=logits.dtype), (logits,), backward, "cross_entropy")


def gru(
    x: Tensor,
    w_ih: Tensor,
    w_hh: Tensor,
    b_ih: Tensor,
    b_hh: Tensor,
    mask: np.ndarray | None = None,
) -> Tensor:
    """Single-layer gated recurrent unit over a (B, T, D) batch, zero initial state.

    Gate layout along the 3H axis is (reset, update, candidate):

        r = sigmoid(x Wr + br + h Ur + cr)
        z = sigmoid(x Wz + bz + h Uz + cz)
        n = tanh(x Wn + bn + r * (h Un + cn))
        h' = (1 - z) * n + z * h

    Where ``mask[b, t]`` is false the state is carried through unchanged.
    Returns every step's state, shape (B, T, H).
    """
    if x.ndim != 3:
        raise ShapeError(f"gru: input must be (B, T, D), got {x.shape}")
    bsz, steps, dim = x.shape
    hid = w_hh.shape[0]
    if w_ih.shape != (dim, 3 * hid) or w_hh.shape != (hid, 3 * hid) or b_ih.shape != (3 * hid,) or b_hh.shape != (3 * hid,):
        raise ShapeError(
            f"gru: weight shapes {w_ih.shape}, {w_hh.shape}, {b_ih.shape}, {b_hh.shape} "
            f"do not fit input width {dim} and hidden {hid}"
        )
    dtype = x.dtype
    m = np.ones((bsz, steps, 1), dtype=dtype) if mask is None else np.asarray(mask, dtype=dtype).reshape(bsz, steps, 1)
    xd, wh, bh = x.data, w_hh.data, b_hh.data
    gi = xd @ w_ih.data + b_ih.data
    outs = np.empty((bsz, steps, hid), dtype=dtype)
    rs = np.empty_like(outs)
    zs = np.empty_like(outs)
    ns = np.empty_like(outs)
    ghn = np.empty_like(outs)
    h = np.zeros((bsz, hid), dtype=dtype)
    for t in range(steps):
        gh = h @ wh + bh
        r = _sigmoid(gi[:, t, :hid] + gh[:, :hid])
        z = _sigmoid(gi[:, t, hid:2 * hid] + gh[:, hid:2 * hid])
        n = np.tanh(gi[:, t, 2 * hid:] + r * gh[:, 2 * hid:])
        hn = (1.0 - z) * n + z * h
        mt = m[:, t]
        h = mt * hn + (1.0 - mt) * h
        outs[:, t], rs[:, t], zs[:, t], ns[:, t], ghn[:, t] = h, r, z, n, gh[:, 2 * hid:]

    def backward(g):
        dgi = np.empty((bsz, steps, 3 * hid), dtype=dtype)
        dwh = np.zeros_like(wh)
        dbh = np.zeros_like(bh)
        dh_next = np.zeros((bsz, hid), dtype=dtype)
        for t in range(steps - 1, -1, -1):
            h_prev = outs[:, t - 1] if t > 0 else np.zeros((bsz, hid), dtype=dtype)
            r, z, n, mt = rs[:, t], zs[:, t], ns[:, t], m[:, t]
            dh = g[:, t] + dh_next
            dhn = mt * dh
            dan = dhn * (1.0 - z) * (1.0 - n * n)
            daz = dhn * (h_prev - n) * z * (1.0 - z)
            dar = dan * ghn[:, t] * r * (1.0 - r)
            dgi[:, t, :hid] = dar
            dgi[:, t, hid:2 * hid] = daz
            dgi[:, t, 2 * hid:] = dan
            dgh = np.concatenate([dar, daz, dan * r], axis=1)
            dwh += h_prev.T @ dgh
            dbh += dgh.sum(axis=0)
            dh_next = dhn * z + (1.0 - mt) * dh + dgh @ wh.T
        flat = dgi.reshape(-1, 3 * hid)
        dx = dgi @ w_ih.data.T
        dwi = xd.reshape(-1, dim).T @ flat
        return dx, dwi, dwh, flat.sum(axis=0), dbh

    return make_node(outs, (x, w_ih, w_hh, b_ih, b_hh), backward, "gru")
