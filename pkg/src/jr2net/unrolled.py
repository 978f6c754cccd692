"""K-stage unrolled ADMM reconstruction with shared decoder and gradient nets.

Each stage performs one ADMM iteration in the latent domain:

    grad  = G(Phi^T Phi D(a) - Phi^T y) + rho_k * G(D(a) - h + u)
    a     = a - mu_k * grad
    h     = H_k(D(a) + u)
    u     = u + D(a) - h

starting from ``a = G(Phi^T y)``, ``h = D(a)``, ``u = 0``; the output is
``D(a)`` after the last stage. ``D`` and ``G`` are shared by all stages,
``H_k``, ``mu_k`` and ``rho_k`` are per stage. With ``admmnet=True`` both D
and G are identities and ``a`` lives directly in image space.

The forward pass can retain every intermediate; :meth:`UnrolledModel.backward`
then walks the stages in reverse and accumulates exact gradients into all
parameters.
"""
from dataclasses import dataclass, field

import numpy as np

from .networks import DecoderNet, GradientNet, Identity, PriorNet
from .sensing import SensingOperator, stack_masks
from .substrate import (ConvParams, Parameter, inverse_softplus, read_blocks,
                        softplus, softplus_grad, write_blocks)


class NumericError(FloatingPointError):
    pass


class UsageError(RuntimeError):
    pass


class StageParams:
    """Per-stage prior network and softplus-parameterised step/penalty."""

    def __init__(self, prior, mu=0.01, rho=0.1, dtype=np.float64):
        self.prior = prior
        self.mu_raw = Parameter(np.array(inverse_softplus(mu), dtype=dtype))
        self.rho_raw = Parameter(np.array(inverse_softplus(rho), dtype=dtype))

    @property
    def mu(self):
        return softplus(self.mu_raw.value)

    @property
    def rho(self):
        return softplus(self.rho_raw.value)


@dataclass
class StageTrace:
    """Per-stage reconstructions ``D(a_k)`` and diagnostic norms."""
    cubes: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    split_norms: list = field(default_factory=list)

    def __len__(self):
        return len(self.cubes)


def _normal(mask, x):
    return mask * np.sum(mask * x, axis=-1, keepdims=True)


class UnrolledModel:
    """All learnable state of the unrolled network.

    Use :meth:`create` for a freshly initialised model.
    """

    def __init__(self, decoder, gradnet, stages, admmnet=False):
        if not stages:
            raise ValueError("the unrolled model needs at least one stage")
        if decoder.in_channels != gradnet.out_channels or decoder.out_channels != gradnet.in_channels:
            raise ValueError("decoder and gradient network disagree on C/F")
        self.decoder = decoder
        self.gradnet = gradnet
        self.stages = list(stages)
        self.admmnet = admmnet
        self._tape = None

    @classmethod
    def create(cls, C, F=8, K=7, hidden=48, n_hidden=5, prior_hidden=16, admmnet=False,
               mu=0.01, rho=0.1, seed=None, dtype=np.float64):
        rng = np.random.default_rng(seed)
        if admmnet:
            if F != C:
                F = C
            decoder, gradnet = Identity(C), Identity(C)
        else:
            decoder = DecoderNet.create(F, C, hidden, n_hidden, rng=rng, dtype=dtype)
            gradnet = GradientNet.create(C, F, hidden, n_hidden, rng=rng, dtype=dtype)
        stages = [StageParams(PriorNet.create(C, prior_hidden, rng=rng, dtype=dtype), mu, rho, dtype)
                  for _ in range(K)]
        return cls(decoder, gradnet, stages, admmnet)

    # -- bookkeeping ------------------------------------------------------

    @property
    def K(self):
        return len(self.stages)

    @property
    def C(self):
        return self.decoder.out_channels

    @property
    def F(self):
        return self.decoder.in_channels

    @property
    def dtype(self):
        return self.stages[0].mu_raw.value.dtype

    def named_parameters(self):
        yield from self.decoder.named_parameters("D.")
        yield from self.gradnet.named_parameters("G.")
        for k, st in enumerate(self.stages):
            yield from st.prior.named_parameters(f"H.{k}.")
            yield f"mu.{k}", st.mu_raw
            yield f"rho.{k}", st.rho_raw

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self):
        return {name: p.value.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, blocks):
        own = dict(self.named_parameters())
        if set(own) != set(blocks):
            missing = sorted(set(own) - set(blocks))
            extra = sorted(set(blocks) - set(own))
            raise ValueError(f"state mismatch; missing={missing} unexpected={extra}")
        for name, p in own.items():
            if p.value.shape != np.shape(blocks[name]):
                raise ValueError(f"{name}: shape {np.shape(blocks[name])} != {p.value.shape}")
            p.value[...] = blocks[name]

    def save(self, path):
        write_blocks(path, self.state_dict())

    @classmethod
    def load(cls, path, dtype=np.float64):
        """Rebuild a model from a checkpoint; the architecture is read off the block shapes."""
        return cls.from_blocks(read_blocks(path), dtype)

    @classmethod
    def from_blocks(cls, blocks, dtype=np.float64):
        def stack(prefix, kind):
            n = 0
            while f"{prefix}{n}.weight" in blocks:
                n += 1
            layers = [ConvParams(blocks[f"{prefix}{i}.weight"].astype(dtype),
                                 blocks[f"{prefix}{i}.bias"].astype(dtype)) for i in range(n)]
            return kind(layers) if layers else None

        K = 0
        while f"mu.{K}" in blocks:
            K += 1
        if K == 0:
            raise ValueError("checkpoint holds no stages")
        stages = []
        for k in range(K):
            prior = stack(f"H.{k}.", PriorNet)
            st = StageParams(prior, dtype=dtype)
            st.mu_raw.value[...] = blocks[f"mu.{k}"]
            st.rho_raw.value[...] = blocks[f"rho.{k}"]
            stages.append(st)
        decoder = stack("D.", DecoderNet)
        gradnet = stack("G.", GradientNet)
        admmnet = decoder is None
        if admmnet:
            C = stages[0].prior.in_channels
            decoder, gradnet = Identity(C), Identity(C)
        return cls(decoder, gradnet, stages, admmnet)

    # -- forward / backward -----------------------------------------------

    def forward(self, ys, masks, retain=False, trace=False):
        """Batched reconstruction.

        Parameters
        ----------
        ys : list of arrays ``(N, H, W)``
            One measurement batch per snapshot.
        masks : list of arrays ``(N or 1, H, W, C)``
            Sheared aperture masks matching ``ys``.
        retain : bool
            Keep intermediates for :meth:`backward`.
        trace : bool
            Also return a :class:`StageTrace` (batch element 0 only).
        """
        if len(ys) == 0 or len(ys) != len(masks):
            raise ValueError("need equal, non-zero numbers of measurements and masks")
        dt = self.dtype
        ys = [np.asarray(y, dtype=dt) for y in ys]
        masks = [np.asarray(m, dtype=dt) for m in masks]
        for y, m in zip(ys, masks):
            if m.shape[-1] != self.C or y.shape[-2:] != m.shape[-3:-1]:
                raise ValueError(
                    f"measurement {y.shape} / mask {m.shape} do not match a {self.C}-band model")
        D, G = self.decoder, self.gradnet
        bs = [m * y[..., None] for m, y in zip(masks, ys)]
        b0 = bs[0] if len(bs) == 1 else sum(bs) / len(bs)
        alpha, g0_cache = G.forward(b0)
        d, d0_cache = D.forward(alpha)
        h = d
        u = np.zeros_like(d)
        tape = {"masks": masks, "g0": g0_cache, "d0": d0_cache, "stages": []} if retain else None
        tr = StageTrace() if trace else None
        for k, st in enumerate(self.stages):
            mu, rho = st.mu, st.rho
            g1 = []
            grad = 0
            for m, b in zip(masks, bs):
                out, c = G.forward(_normal(m, d) - b)
                grad = grad + out
                g1.append(c)
            g2, g2_cache = G.forward(d - h + u)
            grad = grad + rho * g2
            alpha = alpha - mu * grad
            d, d_cache = D.forward(alpha)
            h, h_cache = st.prior.forward(d + u)
            u = u + d - h
            if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(h)) and np.all(np.isfinite(u))):
                raise NumericError(f"non-finite intermediate at stage {k}")
            if retain:
                tape["stages"].append({"grad": grad, "g2": g2, "g1": g1, "g2c": g2_cache,
                                       "dc": d_cache, "hc": h_cache})
            if trace:
                tr.cubes.append(d[0].copy())
                tr.grad_norms.append(float(np.linalg.norm(grad[0])))
                tr.split_norms.append(float(np.linalg.norm(d[0] - h[0])))
        self._tape = tape
        return (d, tr) if trace else d

    def backward(self, grad_out):
        """Back-propagate ``dL/dx_hat`` through the retained forward pass.

        Gradients are added to each parameter's ``grad`` buffer; call
        :meth:`zero_grad` first for a fresh accumulation.
        """
        tape = self._tape
        if tape is None:
            raise UsageError("backward() needs a preceding forward(..., retain=True)")
        self._tape = None
        D, G = self.decoder, self.gradnet
        masks = tape["masks"]
        d_bar = np.asarray(grad_out, dtype=self.dtype)
        h_bar = np.zeros_like(d_bar)
        u_bar = np.zeros_like(d_bar)
        a_bar = 0
        for k in range(self.K - 1, -1, -1):
            st = self.stages[k]
            t = tape["stages"][k]
            # u' = u + d' - h'
            u_in = u_bar
            d_bar = d_bar + u_bar
            h_bar = h_bar - u_bar
            # h' = H_k(d' + u)
            v_bar = st.prior.backward(t["hc"], h_bar)
            d_bar = d_bar + v_bar
            u_in = u_in + v_bar
            # d' = D(a')
            a_bar = a_bar + D.backward(t["dc"], d_bar)
            # a' = a - mu * grad
            mu, rho = st.mu, st.rho
            grad_bar = -mu * a_bar
            st.mu_raw.grad += -np.sum(a_bar * t["grad"]) * softplus_grad(st.mu_raw.value)
            # grad = sum_s G(r1_s) + rho * G(d - h + u)
            st.rho_raw.grad += np.sum(grad_bar * t["g2"]) * softplus_grad(st.rho_raw.value)
            r2_bar = G.backward(t["g2c"], rho * grad_bar)
            d_in = r2_bar
            h_in = -r2_bar
            u_in = u_in + r2_bar
            for m, c in zip(masks, t["g1"]):
                d_in = d_in + _normal(m, G.backward(c, grad_bar))
            d_bar, h_bar, u_bar = d_in, h_in, u_in
        # h0 = d0 = D(a0), a0 = G(Phi^T y); u0 is a constant
        d_bar = d_bar + h_bar
        a_bar = a_bar + D.backward(tape["d0"], d_bar)
        G.backward(tape["g0"], a_bar)

    def autoencode(self, x, retain=False):
        """``D(G(x))`` for a batch ``(N, H, W, C)``."""
        z, gc = self.gradnet.forward(x)
        xr, dc = self.decoder.forward(z)
        return (xr, (gc, dc)) if retain else xr

    def autoencode_backward(self, cache, grad_out):
        gc, dc = cache
        self.gradnet.backward(gc, self.decoder.backward(dc, grad_out))


def _single(y, op, C):
    y = np.asarray(y)
    if not isinstance(op, SensingOperator):
        raise TypeError("op must be a SensingOperator")
    if op.shape[2] != C:
        raise ValueError(f"operator has C={op.shape[2]} bands but the model expects {C}")
    if y.shape != op.shape[:2]:
        raise ValueError(f"measurement shape {y.shape} does not match operator {op.shape[:2]}")
    return y[None], op.mask[None]


def reconstruct(model, y, op, trace=False):
    """Recover an ``(H, W, C)`` cube from one measurement ``(H, W)``."""
    return reconstruct_multi(model, [y], [op], trace=trace)


def reconstruct_multi(model, ys, ops, trace=False):
    """Recover a cube from several snapshots sharing one geometry."""
    if len(ys) == 0 or len(ys) != len(ops):
        raise ValueError("need equal, non-zero numbers of measurements and operators")
    stack_masks(ops)  # geometry agreement
    pairs = [_single(y, op, model.C) for y, op in zip(ys, ops)]
    out = model.forward([p[0] for p in pairs], [p[1] for p in pairs], trace=trace)
    if trace:
        x, tr = out
        return x[0], tr
    return out[0]


def backward(model, grad_out):
    model.backward(grad_out)
