"""Differentiable operations over ``Tensor``.

Every op computes its numpy result eagerly and, when a tape is active,
records a backward closure. Convolutions use shifted-slice matmuls (one GEMM
per kernel offset), which keeps memory flat and reproduces the direct
convolution values exactly.
"""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from .tensor import ShapeError, Tensor, accumulate, active_tape

TensorLike = Union[Tensor, np.ndarray, float, int, list]


def _as_tensor(x: TensorLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: Tensor, parents: Sequence[Tensor], backward_fn) -> Tensor:
    tape = active_tape()
    if tape is not None:
        tape.record(out, parents, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)

    def bw(g, grads):
        accumulate(grads, a, _unbroadcast(g, a.shape))
        accumulate(grads, b, _unbroadcast(g, b.shape))

    return _record(out, (a, b), bw)


def add_scalar(x: Tensor, c: float) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data + c)

    def bw(g, grads):
        accumulate(grads, x, g)

    return _record(out, (x,), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)

    def bw(g, grads):
        accumulate(grads, a, _unbroadcast(g * b.data, a.shape))
        accumulate(grads, b, _unbroadcast(g * a.data, b.shape))

    return _record(out, (a, b), bw)


def mul_scalar(x: Tensor, s: float) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data * s)

    def bw(g, grads):
        accumulate(grads, x, g * s)

    return _record(out, (x,), bw)


def mul_array(x: Tensor, const: np.ndarray) -> Tensor:
    """Elementwise product with a constant array (no gradient to the array)."""
    x = _as_tensor(x)
    const = np.asarray(const, dtype=np.float64)
    out = Tensor(x.data * const)

    def bw(g, grads):
        accumulate(grads, x, _unbroadcast(g * const, x.shape))

    return _record(out, (x,), bw)


def log(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.log(x.data))

    def bw(g, grads):
        accumulate(grads, x, g / x.data)

    return _record(out, (x,), bw)


def exp(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.exp(x.data))
    y = out.data

    def bw(g, grads):
        accumulate(grads, x, g * y)

    return _record(out, (x,), bw)


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0.0
    out = Tensor(np.where(mask, x.data, 0.0))

    def bw(g, grads):
        accumulate(grads, x, g * mask)

    return _record(out, (x,), bw)


def relu6(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = (x.data > 0.0) & (x.data < 6.0)
    out = Tensor(np.clip(x.data, 0.0, 6.0))

    def bw(g, grads):
        accumulate(grads, x, g * mask)

    return _record(out, (x,), bw)


def tsum(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.sum())

    def bw(g, grads):
        accumulate(grads, x, np.full(x.shape, float(g)))

    return _record(out, (x,), bw)


def tmean(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.mean())
    n = x.size

    def bw(g, grads):
        accumulate(grads, x, np.full(x.shape, float(g) / n))

    return _record(out, (x,), bw)


def select_scalar(x: Tensor, row: int, col: int) -> Tensor:
    """Pick one entry of a 2-D tensor as a scalar node."""
    x = _as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"select_scalar expects a 2-D tensor, got {x.shape}")
    out = Tensor(x.data[row, col])

    def bw(g, grads):
        gx = np.zeros(x.shape)
        gx[row, col] = float(g)
        accumulate(grads, x, gx)

    return _record(out, (x,), bw)


def softmax(logits: Tensor) -> Tensor:
    """Row softmax with max subtraction; rows sum to one within 1e-12."""
    x = _as_tensor(logits)
    if x.ndim != 2:
        raise ShapeError(f"softmax expects [N, K] logits, got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor(y)

    def bw(g, grads):
        dot = (g * y).sum(axis=1, keepdims=True)
        accumulate(grads, x, y * (g - dot))

    return _record(out, (x,), bw)


# ---------------------------------------------------------------------------
# layers


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"dense shapes {x.shape} x {weight.shape} incompatible")
    out = Tensor(x.data @ weight.data.T + bias.data)

    def bw(g, grads):
        accumulate(grads, x, g @ weight.data)
        accumulate(grads, weight, g.T @ x.data)
        accumulate(grads, bias, g.sum(axis=0))

    return _record(out, (x, weight, bias), bw)


def _conv_checks(x: Tensor, kh: int, kw: int, stride: int, padding: int) -> tuple[int, int]:
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    _, _, h, w = x.shape
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(
            f"kernel {kh}x{kw} exceeds padded input {h + 2 * padding}x{w + 2 * padding}"
        )
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    return ho, wo


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation: [N,C,H,W] * [F,C,kh,kw] + [F] -> [N,F,H',W'].

    One batched GEMM per kernel offset on [N, C, positions] buffers; values
    match direct convolution exactly. 1x1/stride-1 convolutions reduce to a
    single GEMM on a reshaped view.
    """
    x, kernel, bias = _as_tensor(x), _as_tensor(kernel), _as_tensor(bias)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input/kernel, got {x.shape}, {kernel.shape}")
    n, c, h, w = x.shape
    f, ck, kh, kw = kernel.shape
    if ck != c:
        raise ShapeError(f"channel mismatch: input has {c}, kernel expects {ck}")
    if bias.shape != (f,):
        raise ShapeError(f"bias shape {bias.shape} does not match {f} filters")
    ho, wo = _conv_checks(x, kh, kw, stride, padding)
    pos = ho * wo
    k = kernel.data
    pointwise = kh == 1 and kw == 1 and stride == 1 and padding == 0

    if pointwise:
        saved = [x.data.reshape(n, c, pos)]
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        saved = [
            np.ascontiguousarray(
                xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
            ).reshape(n, c, pos)
            for i in range(kh)
            for j in range(kw)
        ]
    out3 = np.empty((n, f, pos))
    out3[:] = bias.data[None, :, None]
    for idx, xs in enumerate(saved):
        out3 += np.matmul(k[:, :, idx // kw, idx % kw], xs)
    out = Tensor(out3.reshape(n, f, ho, wo))

    def bw(g, grads):
        g3 = np.ascontiguousarray(g).reshape(n, f, pos)
        gk = np.empty_like(k)
        if pointwise:
            gk[:, :, 0, 0] = np.matmul(g3, saved[0].transpose(0, 2, 1)).sum(axis=0)
            gx = np.matmul(k[:, :, 0, 0].T, g3).reshape(n, c, h, w)
        else:
            gp = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
            for idx in range(kh * kw):
                i, j = idx // kw, idx % kw
                gk[:, :, i, j] = np.matmul(g3, saved[idx].transpose(0, 2, 1)).sum(axis=0)
                gp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += np.matmul(
                    k[:, :, i, j].T, g3
                ).reshape(n, c, ho, wo)
            gx = gp if padding == 0 else gp[:, :, padding : padding + h, padding : padding + w]
        accumulate(grads, x, gx)
        accumulate(grads, kernel, gk)
        accumulate(grads, bias, g3.sum(axis=(0, 2)))

    return _record(out, (x, kernel, bias), bw)


def depthwise_conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Per-channel convolution: [N,C,H,W] * [C,kh,kw] -> [N,C,H',W']."""
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 3:
        raise ShapeError(f"depthwise expects 4-D input, 3-D kernel, got {x.shape}, {kernel.shape}")
    n, c, h, w = x.shape
    ck, kh, kw = kernel.shape
    if ck != c:
        raise ShapeError(f"channel mismatch: input has {c}, kernel expects {ck}")
    ho, wo = _conv_checks(x, kh, kw, stride, padding)

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    k = kernel.data

    def slices(i, j):
        return xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]

    out_data = np.zeros((n, c, ho, wo))
    for i in range(kh):
        for j in range(kw):
            out_data += slices(i, j) * k[None, :, i, j, None, None]
    out = Tensor(out_data)

    def bw(g, grads):
        gk = np.empty_like(k)
        gp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gk[:, i, j] = np.einsum("nchw,nchw->c", g, slices(i, j), optimize=False)
                gp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += (
                    g * k[None, :, i, j, None, None]
                )
        gx = gp[:, :, padding : padding + h, padding : padding + w] if padding else gp
        accumulate(grads, x, gx)
        accumulate(grads, kernel, gk)

    return _record(out, (x, kernel), bw)


def global_avg_pool(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects [N,C,H,W], got {x.shape}")
    _, _, h, w = x.shape
    out = Tensor(x.data.mean(axis=(2, 3)))

    def bw(g, grads):
        accumulate(grads, x, np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy())

    return _record(out, (x,), bw)


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2; spatial dims must be even."""
    x = _as_tensor(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avg_pool2 needs even spatial dims, got {h}x{w}")
    out = Tensor(x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5)))

    def bw(g, grads):
        gx = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) / 4.0
        accumulate(grads, x, gx)

    return _record(out, (x,), bw)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 4 or b.ndim != 4:
        raise ShapeError("concat_channels expects [N,C,H,W] operands")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"cannot concat {a.shape} with {b.shape}")
    ca = a.shape[1]
    out = Tensor(np.concatenate([a.data, b.data], axis=1))

    def bw(g, grads):
        accumulate(grads, a, g[:, :ca])
        accumulate(grads, b, g[:, ca:])

    return _record(out, (a, b), bw)


def dropout(x: Tensor, rate: float, training: bool, seed) -> Tensor:
    """Inverted dropout; identity at inference.

    ``seed`` may be an int or a tuple such as (run_seed, step, layer_id); the
    mask comes from a counter-based Philox stream so identical keys give
    identical masks on any platform.
    """
    x = _as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    entropy = seed if isinstance(seed, (tuple, list)) else (int(seed),)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(tuple(entropy))))
    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    out = Tensor(x.data * keep * scale)

    def bw(g, grads):
        accumulate(grads, x, g * keep * scale)

    return _record(out, (x,), bw)
