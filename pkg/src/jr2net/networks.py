"""Decoder, learned-gradient and spectral-prior convolutional networks.

All three are stacks of 3x3 'same' convolutions with ReLU between layers and
a linear last layer, so they apply unchanged to any spatial size. Inputs and
outputs are channel-last batches ``(N, H, W, channels)``.
"""
import warnings

import numpy as np

from .substrate import (ConvParams, activation_backward, activation_forward,
                        conv2d_backward, conv2d_forward)


def _widths(hidden, n_hidden):
    if np.isscalar(hidden):
        return [int(hidden)] * n_hidden
    return [int(h) for h in hidden]


class ConvStack:
    """Sequential conv layers; ReLU on every layer but the last."""

    def __init__(self, layers):
        if not layers:
            raise ValueError("a conv stack needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_channels != b.in_channels:
                raise ValueError(f"layer widths do not chain: {a.out_channels} -> {b.in_channels}")
        self.layers = list(layers)

    @classmethod
    def build(cls, channels, rng=None, dtype=np.float64, zero_last=False):
        rng = np.random.default_rng(rng)
        n = len(channels) - 1
        layers = [ConvParams.init(channels[i], channels[i + 1], rng=rng, dtype=dtype,
                                  zero=zero_last and i == n - 1)
                  for i in range(n)]
        return cls(layers)

    @property
    def in_channels(self):
        return self.layers[0].in_channels

    @property
    def out_channels(self):
        return self.layers[-1].out_channels

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def named_parameters(self, prefix=""):
        for i, layer in enumerate(self.layers):
            yield f"{prefix}{i}.weight", layer.weight
            yield f"{prefix}{i}.bias", layer.bias

    def _check(self, x):
        if x.ndim != 4 or x.shape[-1] != self.in_channels:
            raise ValueError(
                f"{type(self).__name__} expects {self.in_channels} input channels, got shape {x.shape}")

    def forward(self, x):
        """Return ``(output, cache)``; ``cache`` holds each layer's input."""
        self._check(x)
        cache = []
        a = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            cache.append(a)
            a = conv2d_forward(a, layer)
            if i < last:
                a = activation_forward(a)
        return a, cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, upstream):
        """Accumulate parameter gradients and return the input gradient."""
        g = upstream
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if i < len(self.layers) - 1:
                # cache[i + 1] is relu(z_i); its positive set is z_i > 0
                g = activation_backward(cache[i + 1], g)
            g, dw, db = conv2d_backward(cache[i], layer, g)
            layer.weight.grad += dw
            layer.bias.grad += db
        return g


class DecoderNet(ConvStack):
    """Expands an ``F``-feature latent cube to ``C`` spectral bands."""

    @classmethod
    def create(cls, F, C, hidden=16, n_hidden=5, rng=None, dtype=np.float64):
        if F >= C:
            warnings.warn(f"latent features F={F} are not fewer than bands C={C}; "
                          "the representation is not low-dimensional", stacklevel=2)
        return cls.build([F] + _widths(hidden, n_hidden) + [C], rng, dtype)


class GradientNet(ConvStack):
    """Encoder-shaped map from ``C`` bands to ``F`` latent features."""

    @classmethod
    def create(cls, C, F, hidden=16, n_hidden=5, rng=None, dtype=np.float64):
        return cls.build([C] + _widths(hidden, n_hidden)[::-1] + [F], rng, dtype)


class PriorNet(ConvStack):
    """Three conv blocks plus an identity skip: ``H(v) = v + residual(v)``.

    The last conv starts at zero so a fresh prior is exactly the identity.
    """

    @classmethod
    def create(cls, C, hidden=16, rng=None, dtype=np.float64):
        return cls.build([C, hidden, hidden, C], rng, dtype, zero_last=True)

    def forward(self, v):
        r, cache = super().forward(v)
        return v + r, cache

    def backward(self, cache, upstream):
        return upstream + super().backward(cache, upstream)


class Identity:
    """Stand-in for D and G in ADMMnet mode."""

    def __init__(self, channels):
        self.in_channels = self.out_channels = channels

    def forward(self, x):
        return x, None

    def __call__(self, x):
        return x

    def backward(self, cache, upstream):
        return upstream

    def parameters(self):
        return []

    def named_parameters(self, prefix=""):
        return iter(())


def _as_batch(x):
    x = np.asarray(x)
    return (x[None], True) if x.ndim == 3 else (x, False)


def decode(net, alpha):
    """Latent cube ``(H, W, F)`` (or a batch of them) to a spectral cube."""
    a, single = _as_batch(alpha)
    out = net(a)
    return out[0] if single else out


def encode_grad(net, r):
    """Spectral cube ``(H, W, C)`` (or a batch) to the latent domain."""
    a, single = _as_batch(r)
    out = net(a)
    return out[0] if single else out


def prior_apply(net, v):
    a, single = _as_batch(v)
    out = net(a)
    return out[0] if single else out
