"""Minimal reverse-mode autodiff tensor core.

Everything both networks need and nothing else: dense and conv2d layers,
relu/sigmoid, nearest-neighbour upsampling, concatenation, Dice loss,
diagonal-Gaussian log-prob/entropy, and Adam. Arrays are numpy, float32 for
training; building the same graph from float64 inputs gives the 64-bit
replay mode used by the gradient checks.
"""
from __future__ import annotations

import struct

import numpy as np

from . import kernels

LOG_2PI = float(np.log(2.0 * np.pi))


class Tensor:
    """A numpy array plus a gradient buffer and a backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw")

    def __init__(self, data, requires_grad=False, parents=(), bw=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._bw = bw if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, grad=None):
        """Reverse-mode sweep from this tensor (defaults to d(self)=1)."""
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.accumulate(np.ones_like(self.data) if grad is None else np.asarray(grad))
        for node in reversed(topo):
            if node._bw is not None and node.grad is not None:
                node._bw(node.grad)


def _wrap(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g, shape):
    """Sum gradient over axes that were broadcast in the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a = _wrap(a, None if isinstance(b, Tensor) else np.float64)
    b = _wrap(b, a.dtype)
    out = Tensor(a.data + b.data, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.shape))
    out._bw = bw
    return out


def sub(a, b):
    return add(a, neg(b))


def neg(a):
    out = Tensor(-a.data, parents=(a,))
    out._bw = lambda g: a.accumulate(-g)
    return out


def mul(a, b):
    a = _wrap(a, None if isinstance(b, Tensor) else np.float64)
    b = _wrap(b, a.dtype)
    out = Tensor(a.data * b.data, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.shape))
    out._bw = bw
    return out


def scale(a, s):
    s = float(s)
    out = Tensor(a.data * np.asarray(s, dtype=a.dtype), parents=(a,))
    out._bw = lambda g: a.accumulate(g * s)
    return out


def square(a):
    out = Tensor(a.data * a.data, parents=(a,))
    out._bw = lambda g: a.accumulate(g * 2.0 * a.data)
    return out


def exp(a):
    val = np.exp(a.data)
    out = Tensor(val, parents=(a,))
    out._bw = lambda g: a.accumulate(g * val)
    return out


def relu(a):
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, 0), parents=(a,))
    out._bw = lambda g: a.accumulate(g * mask)
    return out


def sigmoid(a):
    val = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    out = Tensor(val, parents=(a,))
    out._bw = lambda g: a.accumulate(g * val * (1.0 - val))
    return out


def clip(a, lo, hi):
    """Clamp values; gradient is 1 strictly inside the bounds, 0 outside."""
    mask = (a.data > lo) & (a.data < hi)
    out = Tensor(np.clip(a.data, lo, hi), parents=(a,))
    out._bw = lambda g: a.accumulate(g * mask)
    return out


def minimum(a, b):
    take_a = a.data <= b.data
    out = Tensor(np.where(take_a, a.data, b.data), parents=(a, b))

    def bw(g):
        if a.requires_grad:
            a.accumulate(g * take_a)
        if b.requires_grad:
            b.accumulate(g * ~take_a)
    out._bw = bw
    return out


def tsum(a, axis=None):
    out = Tensor(a.data.sum(axis=axis), parents=(a,))

    def bw(g):
        if axis is None:
            a.accumulate(np.broadcast_to(g, a.shape).astype(a.dtype, copy=False))
        else:
            a.accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape))
    out._bw = bw
    return out


def tmean(a, axis=None):
    n = a.data.size if axis is None else a.shape[axis]
    return scale(tsum(a, axis=axis), 1.0 / n)


def reshape(a, shape):
    out = Tensor(a.data.reshape(shape), parents=(a,))
    out._bw = lambda g: a.accumulate(g.reshape(a.shape))
    return out


def concat(tensors, axis=1):
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), parents=tuple(tensors))
    sizes = [t.shape[axis] for t in tensors]

    def bw(g):
        start = 0
        for t, n in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, start + n)
            if t.requires_grad:
                t.accumulate(g[tuple(sl)])
            start += n
    out._bw = bw
    return out


def dense_forward(x, w, b=None):
    """x[B,I] @ w[I,O] + b[O], with exact accumulation into all grads."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"dense shape mismatch: input {x.shape} vs weights {w.shape}")
    val = x.data @ w.data
    if b is not None:
        if b.shape != (w.shape[1],):
            raise ValueError(f"dense bias shape {b.shape} does not match weights {w.shape}")
        val = val + b.data
    parents = (x, w) if b is None else (x, w, b)
    out = Tensor(val, parents=parents)

    def bw(g):
        if x.requires_grad:
            x.accumulate(g @ w.data.T)
        if w.requires_grad:
            w.accumulate(x.data.T @ g)
        if b is not None and b.requires_grad:
            b.accumulate(g.sum(axis=0))
    out._bw = bw
    return out


def conv2d_forward(x, k, b=None, stride=1, pad=0):
    """Cross-correlation of x[B,C,H,W] with k[OC,C,KH,KW].

    Valid (zero) padding by default; stride and pad may be ints or pairs.
    """
    sh, sw = (stride, stride) if np.isscalar(stride) else stride
    ph, pw = (pad, pad) if np.isscalar(pad) else pad
    if x.data.ndim != 4 or k.data.ndim != 4 or x.shape[1] != k.shape[1]:
        raise ValueError(f"conv shape mismatch: input {x.shape} vs kernel {k.shape}")
    bsz, c, h, w = x.shape
    oc, _, kh, kw = k.shape
    if kh > h + 2 * ph or kw > w + 2 * pw:
        raise ValueError(f"kernel {k.shape} larger than padded input {x.shape}")
    if sh < 1 or sw < 1:
        raise ValueError("stride must be >= 1")

    cols = kernels.im2col(np.ascontiguousarray(x.data), kh, kw, sh, sw, ph, pw)
    oh, ow = cols.shape[1], cols.shape[2]
    w2 = k.data.reshape(oc, -1).T
    val = (cols.reshape(-1, w2.shape[0]) @ w2).reshape(bsz, oh, ow, oc).transpose(0, 3, 1, 2)
    if b is not None:
        val = val + b.data.reshape(1, oc, 1, 1)
    parents = (x, k) if b is None else (x, k, b)
    out = Tensor(np.ascontiguousarray(val), parents=parents)

    def bw(g):
        gflat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, oc)
        if x.requires_grad:
            gcols = (gflat @ w2.T).reshape(bsz, oh, ow, -1)
            x.accumulate(kernels.col2im_add(np.ascontiguousarray(gcols), c, h, w, kh, kw, sh, sw, ph, pw))
        if k.requires_grad:
            dw = cols.reshape(-1, w2.shape[0]).T @ gflat
            k.accumulate(dw.T.reshape(k.shape))
        if b is not None and b.requires_grad:
            b.accumulate(gflat.sum(axis=0))
    out._bw = bw
    return out


def upsample2(x):
    """Nearest-neighbour 2x upsampling of x[B,C,H,W]."""
    val = x.data.repeat(2, axis=2).repeat(2, axis=3)
    out = Tensor(val, parents=(x,))

    def bw(g):
        b, c, h2, w2 = g.shape
        x.accumulate(g.reshape(b, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5)))
    out._bw = bw
    return out


def dice_loss(pred, target, eps=1.0):
    """1 - Dice overlap with +eps smoothing (empty-vs-empty scores 0)."""
    target = _wrap(target, pred.dtype)
    if pred.shape != target.shape:
        raise ValueError(f"dice shape mismatch: pred {pred.shape} vs target {target.shape}")
    inter = tsum(mul(pred, target))
    denom = add(tsum(pred), tsum(target))
    num = add(scale(inter, 2.0), Tensor(np.asarray(eps, dtype=pred.dtype)))
    den = add(denom, Tensor(np.asarray(eps, dtype=pred.dtype)))
    inv = Tensor(1.0 / den.data, parents=(den,))
    inv._bw = lambda g: den.accumulate(-g / (den.data * den.data))
    return sub(Tensor(np.asarray(1.0, dtype=pred.dtype)), mul(num, inv))


class GaussianPolicyHead:
    """Diagonal Gaussian: per-sample mean plus a state-independent log-std."""

    def __init__(self, mean: Tensor, log_std: Tensor):
        self.mean = mean
        self.log_std = log_std


def gaussian_logprob_entropy(head: GaussianPolicyHead, action):
    """Log-density of `action` under the head, and the (mean-free) entropy.

    Returns (log_prob, entropy): log_prob has one value per batch row,
    entropy is a scalar depending on log_std only.
    """
    mean, log_std = head.mean, head.log_std
    act = np.asarray(action, dtype=mean.dtype)
    if act.shape[-1] != mean.shape[-1]:
        raise ValueError(f"action dim {act.shape} does not match mean {mean.shape}")
    if not (np.isfinite(act).all() and np.isfinite(mean.data).all() and np.isfinite(log_std.data).all()):
        raise FloatingPointError("non-finite inputs to gaussian_logprob_entropy")
    diff = sub(Tensor(act), mean)
    inv_var = exp(scale(log_std, -2.0))
    quad = scale(tsum(mul(square(diff), inv_var), axis=-1), -0.5)
    d = mean.shape[-1]
    const = -0.5 * d * LOG_2PI
    logp = add(sub(quad, tsum(log_std)), Tensor(np.asarray(const, dtype=mean.dtype)))
    entropy = add(tsum(log_std), Tensor(np.asarray(0.5 * d * (1.0 + LOG_2PI), dtype=mean.dtype)))
    return logp, entropy


class Parameter:
    """A trainable tensor with its Adam moment buffers."""

    def __init__(self, data):
        self.value = Tensor(np.asarray(data), requires_grad=True)
        self.adam_m = Tensor(np.zeros_like(self.value.data))
        self.adam_v = Tensor(np.zeros_like(self.value.data))
        self.step_count = 0

    @property
    def data(self):
        return self.value.data

    @property
    def grad(self):
        return self.value.grad


def adam_step(params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Standard bias-corrected Adam, in place; gradients are then zeroed."""
    for p in params:
        g = p.value.grad
        if g is None:
            continue
        p.step_count += 1
        p.adam_m.data *= beta1
        p.adam_m.data += (1.0 - beta1) * g
        p.adam_v.data *= beta2
        p.adam_v.data += (1.0 - beta2) * g * g
        mhat = p.adam_m.data / (1.0 - beta1 ** p.step_count)
        vhat = p.adam_v.data / (1.0 - beta2 ** p.step_count)
        p.value.data -= lr * mhat / (np.sqrt(vhat) + eps)
        g[...] = 0.0


def zero_grads(params):
    for p in params:
        if p.value.grad is not None:
            p.value.grad[...] = 0.0


def clip_grad_global_norm(params, max_norm):
    total = 0.0
    for p in params:
        if p.value.grad is not None:
            total += float((p.value.grad.astype(np.float64) ** 2).sum())
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0:
        f = max_norm / norm
        for p in params:
            if p.value.grad is not None:
                p.value.grad *= f
    return norm


class Dense:
    def __init__(self, in_dim, out_dim, rng, w_scale=None, dtype=np.float32):
        std = w_scale if w_scale is not None else np.sqrt(2.0 / in_dim)
        self.w = Parameter((rng.standard_normal((in_dim, out_dim)) * std).astype(dtype))
        self.b = Parameter(np.zeros(out_dim, dtype=dtype))

    def __call__(self, x):
        return dense_forward(x, self.w.value, self.b.value)

    def params(self):
        return [("w", self.w), ("b", self.b)]


class Conv2d:
    def __init__(self, in_ch, out_ch, k, stride=1, pad=0, rng=None, dtype=np.float32):
        std = np.sqrt(2.0 / (in_ch * k * k))
        self.w = Parameter((rng.standard_normal((out_ch, in_ch, k, k)) * std).astype(dtype))
        self.b = Parameter(np.zeros(out_ch, dtype=dtype))
        self.stride = stride
        self.pad = pad

    def __call__(self, x):
        return conv2d_forward(x, self.w.value, self.b.value, stride=self.stride, pad=self.pad)

    def params(self):
        return [("w", self.w), ("b", self.b)]


CKPT_MAGIC = b"GRAFFCKPT1"


def save_checkpoint(path, arrays):
    """Flat archive: magic, then (name_len, name, rank, dims, f32 data) per entry."""
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        for name, arr in arrays.items():
            nb = name.encode("utf-8")
            a = np.ascontiguousarray(arr, dtype="<f4")
            fh.write(struct.pack("<Q", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<Q", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
            fh.write(a.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a GRAFFCKPT1 checkpoint")
    off = len(CKPT_MAGIC)
    out = {}
    while off < len(blob):
        (nlen,) = struct.unpack_from("<Q", blob, off)
        off += 8
        name = blob[off:off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<Q", blob, off)
        off += 8
        dims = struct.unpack_from(f"<{rank}Q", blob, off)
        off += 8 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(dims).copy()
        off += 4 * n
        out[name] = arr
    return out
