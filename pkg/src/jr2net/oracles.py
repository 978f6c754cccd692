"""Brute-force references used to cross-check the fast code paths.

Nothing here is tuned for speed. Each routine is written independently of
the implementation it checks: the dense matrix is assembled entry by entry
from the aperture, the convolution is six nested loops, and the unrolled
solver is transcribed line by line.
"""
import numpy as np

from .unrolled import NumericError

DENSE_LIMIT = 10 ** 6


def build_dense(op):
    """Materialise the ``(H*W, H*W*C)`` sensing matrix of ``op``.

    Row ``i*W + j`` has entry ``T[i + C - 1 - k, j]`` in column ``k*H*W + i*W + j``,
    i.e. columns follow the band-sequential cube layout.
    """
    H, W, C = op.shape
    if (H * W) * (H * W * C) > DENSE_LIMIT:
        raise MemoryError(f"refusing to build a {H * W} x {H * W * C} dense operator")
    T = op.aperture
    Phi = np.zeros((H * W, H * W * C))
    for i in range(H):
        for j in range(W):
            for k in range(C):
                Phi[i * W + j, k * H * W + i * W + j] = T[i + C - 1 - k, j]
    return Phi


def cube_to_vector(x):
    """Band-sequential flattening matching :func:`build_dense` columns."""
    return np.transpose(x, (2, 0, 1)).ravel()


def vector_to_cube(v, H, W, C):
    return np.transpose(v.reshape(C, H, W), (1, 2, 0))


def naive_conv2d(x, weight, bias):
    """Direct loop cross-correlation with zero 'same' padding.

    ``x`` is ``(N, H, W, Cin)``, ``weight`` is ``(Cout, Cin, kh, kw)``.
    """
    N, H, W, Cin = x.shape
    Cout, _, kh, kw = weight.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((N, H, W, Cout))
    for n in range(N):
        for o in range(Cout):
            for i in range(H):
                for j in range(W):
                    acc = bias[o]
                    for c in range(Cin):
                        for a in range(kh):
                            for b in range(kw):
                                ii, jj = i + a - ph, j + b - pw
                                if 0 <= ii < H and 0 <= jj < W:
                                    acc += x[n, ii, jj, c] * weight[o, c, a, b]
                    out[n, i, j, o] = acc
    return out


def power_iteration(op, iters=100, seed=0):
    """Largest eigenvalue of ``Phi^T Phi``."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.shape)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = op.adjoint(op.forward(v))
        lam = np.linalg.norm(w)
        if lam == 0:
            return 0.0
        v = w / lam
    return float(lam)


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0)


def ista_objective(x, y, op, tau):
    r = op.forward(x) - y
    return 0.5 * np.sum(r * r) + tau * np.sum(np.abs(x))


def ista_solve(y, op, tau, iterations=200, x0=None, history=None):
    """Soft-thresholding ISTA in the identity basis.

    Minimises ``0.5 * ||Phi x - y||^2 + tau * ||x||_1`` with step
    ``1 / L`` where ``L`` bounds the spectral norm of ``Phi^T Phi``.
    If ``history`` is a list, the objective after every iteration is appended.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    L = 1.05 * power_iteration(op)
    if L == 0:
        raise ValueError("sensing operator is identically zero")
    step = 1.0 / L
    x = np.zeros(op.shape) if x0 is None else np.array(x0, dtype=np.float64)
    prev = ista_objective(x, y, op, tau)
    rising = 0
    for _ in range(iterations):
        x = soft_threshold(x - step * op.adjoint(op.forward(x) - y), step * tau)
        obj = ista_objective(x, y, op, tau)
        if history is not None:
            history.append(obj)
        rising = rising + 1 if obj > prev else 0
        if rising >= 10:
            raise NumericError("ISTA objective increased for 10 consecutive iterations")
        prev = obj
    return x


def algorithm1_reference(model, y, op, stages=None):
    """Plain transcription of the unrolled ADMM loop for one measurement.

    ``stages`` limits how many stages run (``0`` gives ``D(G(Phi^T y))``).
    """
    D = model.decoder
    G = model.gradnet
    dt = model.dtype
    y = np.asarray(y, dtype=dt)
    n_stages = model.K if stages is None else stages

    Phi_T_y = (op.mask.astype(dt) * y[..., None])[None]
    alpha = G(Phi_T_y)
    h = D(alpha)
    u = np.zeros_like(h)
    for k in range(n_stages):
        mu = model.stages[k].mu
        rho = model.stages[k].rho
        Dalpha = D(alpha)
        mask = op.mask.astype(dt)[None]
        PhiTPhiD = mask * np.sum(mask * Dalpha, axis=-1, keepdims=True)
        grad_L = 0 + G(PhiTPhiD - Phi_T_y) + rho * G(Dalpha - h + u)
        alpha = alpha - mu * grad_L
        Dalpha = D(alpha)
        h = model.stages[k].prior(Dalpha + u)
        u = u + Dalpha - h
    return D(alpha)[0]
