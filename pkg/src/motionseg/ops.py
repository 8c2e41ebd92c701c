"""Network building blocks: forward/backward pairs, SGD, gradient checking.

Every operation is a pure function of its inputs. Forward passes return a
cache object that the matching backward pass consumes, so no global state
is involved and the same code runs in float32 (working precision) or
float64 (gradient-check mode).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from motionseg.tensor import ShapeError, Tensor


class NumericsError(ArithmeticError):
    """Raised when non-finite values make an update meaningless."""


class StateError(RuntimeError):
    """Raised when an operation is used before its state is initialized."""


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass
class ConvParams:
    """Weights (out_c, in_c, kh, kw) and bias (out_c,) of one convolution."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ShapeError(f"conv weights must be 4-D, got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match "
                f"{self.weights.shape[0]} output channels"
            )


@dataclass
class BatchNormParams:
    """Per-channel affine and running statistics of one batch-norm layer."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    epsilon: float = 1e-5
    initialized: bool = False

    def __post_init__(self):
        if not (0.0 < self.momentum <= 1.0):
            raise ValueError(f"momentum must be in (0, 1], got {self.momentum}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if np.any(self.running_var < 0):
            raise ValueError("running_var entries must be >= 0")

    @classmethod
    def identity(cls, channels: int, dtype=np.float32, **kw) -> "BatchNormParams":
        return cls(
            gamma=np.ones(channels, dtype=dtype),
            beta=np.zeros(channels, dtype=dtype),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
            **kw,
        )


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int):
    n, c, _, _ = xp.shape
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.reshape(n, c * kh * kw, oh * ow)


def _col2im(dcols: np.ndarray, xp_shape, kh: int, kw: int, stride: int, oh: int, ow: int):
    n, c, hp, wp = xp_shape
    dxp = np.zeros(xp_shape, dtype=dcols.dtype)
    dcols = dcols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += dcols[:, :, i, j]
    return dxp


def conv2d_forward(x: Tensor, p: ConvParams, stride: int = 1, pad: int = 0):
    """Cross-correlation of x with p.weights plus bias.

    Output spatial size is floor((H + 2*pad - kh)/stride) + 1 per axis.
    """
    oc, ic, kh, kw = p.weights.shape
    n, c, h, w = x.shape
    if c != ic:
        raise ShapeError(
            f"conv2d: input has {c} channels (shape {x.shape}) but weights expect "
            f"{ic} (shape {p.weights.shape})"
        )
    hp, wp = h + 2 * pad, w + 2 * pad
    if kh > hp or kw > wp:
        raise ShapeError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}"
        )
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1

    if pad > 0:
        xp = np.zeros((n, c, hp, wp), dtype=x.dtype)
        xp[:, :, pad : pad + h, pad : pad + w] = x.data
    else:
        xp = x.data
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    wmat = p.weights.reshape(oc, ic * kh * kw)
    out = np.matmul(wmat, cols)  # (n, oc, oh*ow)
    out += p.bias.reshape(1, oc, 1)
    out = out.reshape(n, oc, oh, ow)
    cache = (cols, (n, c, hp, wp), x.shape, p.weights.shape, stride, pad, oh, ow)
    return Tensor(out), cache


def conv2d_backward(dy: Tensor, p: ConvParams, cache):
    """Gradients for input, weights and bias."""
    cols, xp_shape, x_shape, w_shape, stride, pad, oh, ow = cache
    oc, ic, kh, kw = w_shape
    n, _, h, w = x_shape
    dout = dy.data.reshape(n, oc, oh * ow)
    dbias = dout.sum(axis=(0, 2))
    dwmat = np.einsum("nop,nkp->ok", dout, cols)
    dweights = dwmat.reshape(w_shape).astype(p.weights.dtype, copy=False)
    wmat = p.weights.reshape(oc, ic * kh * kw)
    dcols = np.matmul(wmat.T, dout)  # (n, ic*kh*kw, oh*ow)
    dxp = _col2im(dcols, xp_shape, kh, kw, stride, oh, ow)
    if pad > 0:
        dx = dxp[:, :, pad : pad + h, pad : pad + w]
    else:
        dx = dxp
    return Tensor(np.ascontiguousarray(dx)), dweights, dbias.astype(p.bias.dtype, copy=False)


# ---------------------------------------------------------------------------
# elementwise / pooling / resizing
# ---------------------------------------------------------------------------


def relu_forward(x: Tensor):
    mask = x.data > 0
    return Tensor(np.where(mask, x.data, 0)), mask


def relu_backward(dy: Tensor, mask: np.ndarray) -> Tensor:
    return Tensor(np.where(mask, dy.data, 0))


def maxpool2x2_forward(x: Tensor):
    """Non-overlapping 2x2 max pooling; ties go to the first window position
    in row-major scan order so the backward routing is deterministic."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 requires even spatial dims, got {h}x{w}")
    oh, ow = h // 2, w // 2
    windows = x.data.reshape(n, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5)
    windows = np.ascontiguousarray(windows).reshape(n, c, oh, ow, 4)
    argmax = windows.argmax(axis=-1)  # first max wins
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    return Tensor(out), argmax


def maxpool2x2_backward(dy: Tensor, argmax: np.ndarray, in_shape) -> Tensor:
    n, c, h, w = in_shape
    oh, ow = h // 2, w // 2
    dwin = np.zeros((n, c, oh, ow, 4), dtype=dy.dtype)
    np.put_along_axis(dwin, argmax[..., None], dy.data[..., None], axis=-1)
    dx = dwin.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
    return Tensor(np.ascontiguousarray(dx))


def _bilinear_matrix(src: int, dst: int, dtype) -> np.ndarray:
    """Row-stochastic (dst, src) interpolation matrix with half-pixel-center
    alignment: source coordinate = (d + 0.5) * src/dst - 0.5, clamped."""
    m = np.zeros((dst, src), dtype=dtype)
    scale = src / dst
    for d in range(dst):
        s = (d + 0.5) * scale - 0.5
        s = min(max(s, 0.0), src - 1.0)
        i0 = int(np.floor(s))
        i1 = min(i0 + 1, src - 1)
        t = s - i0
        m[d, i0] += 1.0 - t
        m[d, i1] += t
    return m


def upsample_bilinear_forward(x: Tensor, out_h: int, out_w: int):
    n, c, h, w = x.shape
    if out_h < h or out_w < w:
        raise ShapeError(
            f"upsample_bilinear: requested {out_h}x{out_w} is smaller than input {h}x{w}"
        )
    my = _bilinear_matrix(h, out_h, x.dtype)
    mx = _bilinear_matrix(w, out_w, x.dtype)
    out = np.einsum("oh,nchw,pw->ncop", my, x.data, mx, optimize=True)
    return Tensor(out), (my, mx)


def upsample_bilinear_backward(dy: Tensor, cache) -> Tensor:
    my, mx = cache
    dx = np.einsum("oh,ncop,pw->nchw", my, dy.data, mx, optimize=True)
    return Tensor(dx)


def concat_channels_forward(a: Tensor, b: Tensor):
    if a.n != b.n or a.h != b.h or a.w != b.w:
        raise ShapeError(
            f"concat_channels: batch/spatial mismatch between {a.shape} and {b.shape}"
        )
    out = np.concatenate([a.data, b.data], axis=1)
    return Tensor(out), a.c


def concat_channels_backward(dy: Tensor, split_at: int):
    return Tensor(dy.data[:, :split_at].copy()), Tensor(dy.data[:, split_at:].copy())


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------


def batchnorm_forward(x: Tensor, p: BatchNormParams, mode: str):
    """Normalize per channel over (n, h, w).

    Train mode uses batch statistics and returns updated running statistics
    in the cache (commit them via BatchNormParams fields at the call site);
    eval mode is a pure affine map using the stored running statistics.
    """
    if x.c != p.gamma.shape[0]:
        raise ShapeError(
            f"batchnorm: input has {x.c} channels, params have {p.gamma.shape[0]}"
        )
    g = p.gamma.reshape(1, -1, 1, 1)
    b = p.beta.reshape(1, -1, 1, 1)
    if mode == "train":
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        inv_std = 1.0 / np.sqrt(var + p.epsilon)
        xhat = (x.data - mu.reshape(1, -1, 1, 1)) * inv_std.reshape(1, -1, 1, 1)
        out = g * xhat + b
        m = p.momentum
        new_mean = (1.0 - m) * p.running_mean + m * mu.astype(p.running_mean.dtype)
        new_var = (1.0 - m) * p.running_var + m * var.astype(p.running_var.dtype)
        cache = ("train", xhat, inv_std, new_mean, new_var)
        return Tensor(out), cache
    if mode == "eval":
        if not p.initialized:
            raise StateError("batchnorm eval requested before running stats were set")
        inv_std = 1.0 / np.sqrt(p.running_var.astype(x.dtype) + p.epsilon)
        xhat = (x.data - p.running_mean.astype(x.dtype).reshape(1, -1, 1, 1)) * inv_std.reshape(
            1, -1, 1, 1
        )
        out = g * xhat + b
        return Tensor(out), ("eval", xhat, inv_std, None, None)
    raise ValueError(f"batchnorm mode must be 'train' or 'eval', got {mode!r}")


def batchnorm_backward(dy: Tensor, p: BatchNormParams, cache):
    mode, xhat, inv_std, _, _ = cache
    dgamma = (dy.data * xhat).sum(axis=(0, 2, 3))
    dbeta = dy.data.sum(axis=(0, 2, 3))
    g = p.gamma.reshape(1, -1, 1, 1)
    if mode == "eval":
        dx = dy.data * g * inv_std.reshape(1, -1, 1, 1)
        return Tensor(dx), dgamma.astype(p.gamma.dtype), dbeta.astype(p.beta.dtype)
    n, c, h, w = dy.shape
    count = n * h * w
    dxhat = dy.data * g
    s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
    s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
    dx = (inv_std.reshape(1, -1, 1, 1) / count) * (count * dxhat - s1 - xhat * s2)
    return Tensor(dx), dgamma.astype(p.gamma.dtype), dbeta.astype(p.beta.dtype)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def softmax_xent(logits: Tensor, target: np.ndarray, ignore: np.ndarray | None = None):
    """Per-pixel two-class softmax cross-entropy, averaged over non-ignored
    pixels. Returns (loss, gradient w.r.t. logits)."""
    if logits.c != 2:
        raise ShapeError(f"softmax_xent expects 2-channel logits, got {logits.c}")
    n, _, h, w = logits.shape
    target = np.asarray(target)
    if target.shape != (n, h, w):
        raise ShapeError(
            f"softmax_xent: target shape {target.shape} does not match logits {logits.shape}"
        )
    valid = np.ones((n, h, w), dtype=bool)
    if ignore is not None:
        valid &= ~np.asarray(ignore, dtype=bool)
    count = int(valid.sum())
    if count == 0:
        raise ValueError("softmax_xent: every pixel is ignored")

    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    denom = ez.sum(axis=1, keepdims=True)
    softmax = ez / denom
    logp = (z - zmax) - np.log(denom)

    t = target.astype(np.int64)
    picked = np.take_along_axis(logp, t[:, None], axis=1)[:, 0]
    loss = float(-(picked * valid).sum(dtype=np.float64) / count)

    onehot = np.zeros_like(z)
    np.put_along_axis(onehot, t[:, None], 1.0, axis=1)
    grad = (softmax - onehot) * (valid[:, None] / count)
    return loss, Tensor(grad.astype(z.dtype, copy=False))


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class OptimizerState:
    """SGD with momentum and decoupled-from-nothing classic weight decay."""

    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    velocities: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be >= 0")


def sgd_step(params: list[np.ndarray], grads: list[np.ndarray], state: OptimizerState):
    """v <- momentum*v + (grad + wd*param); param <- param - lr*v. In place."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} params but {len(grads)} grads")
    for idx, (param, grad) in enumerate(zip(params, grads)):
        if param.shape != grad.shape:
            raise ShapeError(
                f"param {idx}: shape {param.shape} does not match grad {grad.shape}"
            )
        if not np.all(np.isfinite(grad)):
            bad = int(np.count_nonzero(~np.isfinite(grad)))
            raise NumericsError(
                f"param {idx}: gradient has {bad} non-finite entries (shape {grad.shape})"
            )
        v = state.velocities.get(idx)
        if v is None:
            v = np.zeros_like(param)
        eff = grad + state.weight_decay * param
        v = state.momentum * v + eff
        state.velocities[idx] = v
        param -= (state.learning_rate * v).astype(param.dtype, copy=False)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_input: int
    worst_coord: tuple
    checked: int
    skipped_nonsmooth: int

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_err < tolerance


def _central(fn, inputs, flat, ci, orig, h):
    flat[ci] = orig + h
    lp, _ = fn(inputs)
    flat[ci] = orig - h
    lm, _ = fn(inputs)
    flat[ci] = orig
    return (lp - lm) / (2.0 * h)


def grad_check(fn, inputs: list[np.ndarray], num_coords: int = 40, step: float | None = None,
               rng: np.random.Generator | None = None, floor_rel: float = 1e-6) -> GradCheckReport:
    """Compare fn's analytic gradients to central finite differences.

    `fn(inputs) -> (loss, [grad per input])` must be deterministic. A random
    subset of coordinates per input is probed at two step sizes; coordinates
    where the two estimates disagree sit on a relu/pooling kink, where a
    finite difference does not estimate the derivative, and are skipped
    (a real backward bug disagrees consistently at both steps and is kept).
    Relative error is |a - n| / max(|a|, |n|, 1e-6 * scale) with scale the
    largest gradient magnitude, so zero-gradient pairs compare clean.
    """
    rng = rng or np.random.default_rng(0)
    loss0, grads = fn(inputs)
    if not np.isfinite(loss0):
        raise NumericsError("grad_check: loss is non-finite at the base point")
    scale = max(float(max(np.abs(g).max() for g in grads)), 1e-12)
    floor = floor_rel * scale

    max_rel = 0.0
    worst = (0, ())
    checked = 0
    skipped = 0
    for ii, x in enumerate(inputs):
        flat = x.reshape(-1)
        k = min(num_coords, flat.size)
        coords = rng.choice(flat.size, size=k, replace=False)
        h = step if step is not None else (1e-4 if x.dtype == np.float64 else 1e-2)
        for ci in coords:
            orig = flat[ci]
            fd_a = _central(fn, inputs, flat, ci, orig, h)
            fd_b = _central(fn, inputs, flat, ci, orig, h / 2)
            analytic = float(grads[ii].reshape(-1)[ci])
            spread = abs(fd_a - fd_b)
            if spread > 0.1 * max(abs(fd_a), abs(fd_b), abs(analytic), floor):
                skipped += 1
                continue
            rel = abs(analytic - fd_b) / max(abs(analytic), abs(fd_b), floor)
            checked += 1
            if rel > max_rel:
                max_rel = rel
                worst = (ii, np.unravel_index(ci, x.shape))
    return GradCheckReport(max_rel_err=max_rel, worst_input=worst[0],
                           worst_coord=worst[1], checked=checked,
                           skipped_nonsmooth=skipped)
