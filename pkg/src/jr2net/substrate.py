"""Minimal differentiable layer set: 2-D convolution, ReLU and Adam.

Activations are channel-last ``(N, H, W, K)`` arrays so that a spectral cube
``(H, W, C)`` is a batch of one without transposes, and so that the im2col
matrix product lands directly in channel-last order. Gradients are produced
by explicit backward functions; callers compose them by hand.
"""
import struct

import numba
import numpy as np


class TrainingError(RuntimeError):
    """Raised when an optimizer sees a non-finite gradient."""


class Parameter:
    """A learnable array with its gradient buffer and Adam moments."""

    def __init__(self, value):
        self.value = np.asarray(value)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        self.step = 0

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0

    def reset_state(self):
        self.m[...] = 0
        self.v[...] = 0
        self.step = 0


class ConvParams:
    """Weights ``(out, in, kh, kw)`` and biases ``(out,)`` of one conv layer."""

    def __init__(self, weight, bias):
        weight = np.asarray(weight)
        bias = np.asarray(bias, dtype=weight.dtype)
        if weight.ndim != 4:
            raise ValueError(f"conv weight must be 4-D, got shape {weight.shape}")
        kh, kw = weight.shape[2:]
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"kernel dims must be odd, got {kh}x{kw}")
        if bias.shape != (weight.shape[0],):
            raise ValueError(f"bias shape {bias.shape} does not match {weight.shape[0]} outputs")
        self.weight = Parameter(weight)
        self.bias = Parameter(bias)

    @classmethod
    def init(cls, in_channels, out_channels, kernel=3, rng=None, dtype=np.float64, zero=False):
        """He-normal weights (variance ``2 / fan_in``) and zero biases."""
        shape = (out_channels, in_channels, kernel, kernel)
        if zero:
            w = np.zeros(shape, dtype=dtype)
        else:
            rng = np.random.default_rng(rng)
            fan_in = in_channels * kernel * kernel
            w = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
        return cls(w, np.zeros(out_channels, dtype=dtype))

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[0]

    @property
    def kernel(self):
        return self.weight.shape[2:]

    def parameters(self):
        return [self.weight, self.bias]


@numba.njit(cache=True)
def _im2col_kernel(x, kh, kw):
    N, H, W, C = x.shape
    ph, pw = kh // 2, kw // 2
    cols = np.zeros((N, H, W, kh, kw, C), dtype=x.dtype)
    for n in range(N):
        for i in range(H):
            for a in range(kh):
                ii = i + a - ph
                if ii < 0 or ii >= H:
                    continue
                for j in range(W):
                    for b in range(kw):
                        jj = j + b - pw
                        if jj < 0 or jj >= W:
                            continue
                        for c in range(C):
                            cols[n, i, j, a, b, c] = x[n, ii, jj, c]
    return cols


@numba.njit(cache=True)
def _col2im_kernel(dcols):
    N, H, W, kh, kw, C = dcols.shape
    ph, pw = kh // 2, kw // 2
    dx = np.zeros((N, H, W, C), dtype=dcols.dtype)
    for n in range(N):
        for i in range(H):
            for a in range(kh):
                ii = i + a - ph
                if ii < 0 or ii >= H:
                    continue
                for j in range(W):
                    for b in range(kw):
                        jj = j + b - pw
                        if jj < 0 or jj >= W:
                            continue
                        for c in range(C):
                            dx[n, ii, jj, c] += dcols[n, i, j, a, b, c]
    return dx


def _im2col(x, kh, kw):
    N, H, W, C = x.shape
    return _im2col_kernel(np.ascontiguousarray(x), kh, kw).reshape(N * H * W, kh * kw * C)


def _weight_matrix(weight):
    O, C, kh, kw = weight.shape
    return weight.transpose(2, 3, 1, 0).reshape(kh * kw * C, O)


def conv2d_forward(x, params):
    """Stride-1 cross-correlation with zero 'same' padding, plus bias.

    ``x`` is ``(N, H, W, in_channels)``; the result is ``(N, H, W, out_channels)``.
    """
    if x.ndim != 4 or x.shape[-1] != params.in_channels:
        raise ValueError(
            f"input with shape {x.shape} does not match conv expecting {params.in_channels} channels")
    N, H, W, _ = x.shape
    kh, kw = params.kernel
    out = _im2col(x, kh, kw) @ _weight_matrix(params.weight.value)
    out += params.bias.value
    return out.reshape(N, H, W, params.out_channels)


def conv2d_backward(x, params, upstream):
    """Gradients of :func:`conv2d_forward`.

    Returns ``(dx, dweight, dbias)``; nothing is accumulated into ``params``.
    """
    N, H, W, C = x.shape
    O = params.out_channels
    if upstream.shape != (N, H, W, O):
        raise ValueError(f"upstream gradient shape {upstream.shape} != expected {(N, H, W, O)}")
    kh, kw = params.kernel
    g = upstream.reshape(-1, O)
    cols = _im2col(x, kh, kw)
    dweight = (cols.T @ g).reshape(kh, kw, C, O).transpose(3, 2, 0, 1)
    dbias = g.sum(axis=0)
    del cols
    dcols = (g @ _weight_matrix(params.weight.value).T).reshape(N, H, W, kh, kw, C)
    return _col2im_kernel(dcols), dweight, dbias


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(x, upstream):
    return upstream * (x > 0)


# Default activation of hidden layers.
activation_forward = relu_forward
activation_backward = relu_backward


def softplus(x):
    return np.logaddexp(0, x)


def softplus_grad(x):
    return 0.5 * (1 + np.tanh(0.5 * x))


def inverse_softplus(y):
    if y <= 0:
        raise ValueError("softplus output must be positive")
    return float(y + np.log(-np.expm1(-y)))


class OptimizerConfig:
    """Adam hyper-parameters."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        for name, b in (("beta1", beta1), ("beta2", beta2)):
            if not 0 < b < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {b}")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps

    def __repr__(self):
        return f"OptimizerConfig(lr={self.lr}, beta1={self.beta1}, beta2={self.beta2}, eps={self.eps})"


def adam_step(param, grad=None, config=None, name="parameter"):
    """Apply one bias-corrected Adam update to ``param`` in place."""
    config = config or OptimizerConfig()
    grad = param.grad if grad is None else np.asarray(grad)
    if not np.all(np.isfinite(grad)):
        raise TrainingError(f"non-finite gradient for {name}")
    param.step += 1
    t = param.step
    param.m *= config.beta1
    param.m += (1 - config.beta1) * grad
    param.v *= config.beta2
    param.v += (1 - config.beta2) * grad * grad
    m_hat = param.m / (1 - config.beta1 ** t)
    v_hat = param.v / (1 - config.beta2 ** t)
    param.value -= config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
    return param


# --- checkpoint container -------------------------------------------------

CKPT_MAGIC = b"JR2W"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


def write_blocks(path, blocks):
    """Write named arrays as a JR2W container (binary32 payloads)."""
    out = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(blocks))]
    for name, arr in blocks.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def read_blocks(path):
    """Read a JR2W container into an ordered ``{name: float32 array}`` dict."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != CKPT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic {buf[:4]!r}")
    try:
        version, count = struct.unpack_from("<II", buf, 4)
        if version != CKPT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 12
        blocks = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * size > len(buf):
                raise CheckpointError(f"truncated payload for block {name!r}")
            blocks[name] = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(dims).copy()
            pos += 4 * size
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes after last block")
    return blocks
