"""Central finite-difference checks for every differentiable piece.

Each suite returns a list of ``(label, relative_error)`` pairs where the
error is ``||analytic - numeric|| / max(||analytic||, ||numeric||)`` over the
checked coordinates of one parameter group.
"""
import numpy as np

from .networks import DecoderNet, GradientNet, PriorNet
from .sensing import SensingOperator
from .substrate import ConvParams, conv2d_backward, conv2d_forward, relu_backward, relu_forward
from .unrolled import UnrolledModel

TOLERANCE = 1e-3
PRESETS = {
    "tiny": {"instances": 3, "max_coords": 40},
    "full": {"instances": 20, "max_coords": 200},
}


def relative_error(analytic, numeric):
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def numeric_grad(f, x, coords, eps=1e-5):
    """Central differences of scalar ``f()`` w.r.t. ``x.flat[coords]`` (x is perturbed in place)."""
    flat = x.reshape(-1)
    out = np.empty(len(coords))
    for n, c in enumerate(coords):
        old = flat[c]
        flat[c] = old + eps
        fp = f()
        flat[c] = old - eps
        fm = f()
        flat[c] = old
        out[n] = (fp - fm) / (2 * eps)
    return out


def _coords(size, limit, rng):
    if size <= limit:
        return np.arange(size)
    return rng.choice(size, limit, replace=False)


def check_conv(rng, max_coords=200, shape=(1, 6, 6, 2), out_channels=3):
    x = rng.standard_normal(shape)
    p = ConvParams(rng.standard_normal((out_channels, shape[-1], 3, 3)), rng.standard_normal(out_channels))
    w = rng.standard_normal(shape[:3] + (out_channels,))

    def f():
        return np.sum(w * conv2d_forward(x, p))

    dx, dW, db = conv2d_backward(x, p, w)
    res = []
    for label, arr, an in (("conv.input", x, dx), ("conv.weight", p.weight.value, dW),
                           ("conv.bias", p.bias.value, db)):
        c = _coords(arr.size, max_coords, rng)
        res.append((label, relative_error(an.reshape(-1)[c], numeric_grad(f, arr, c))))
    return res


def check_relu(rng, max_coords=200):
    x = rng.standard_normal((1, 4, 4, 3))
    x[np.abs(x) < 1e-3] = 0.5  # keep probes away from the kink
    w = rng.standard_normal(x.shape)
    c = _coords(x.size, max_coords, rng)
    num = numeric_grad(lambda: np.sum(w * relu_forward(x)), x, c)
    return [("relu.input", relative_error(relu_backward(x, w).reshape(-1)[c], num))]


def _perturb_zero_layers(params, rng, scale=0.1):
    for p in params:
        if not np.any(p.value):
            p.value[...] = scale * rng.standard_normal(p.value.shape)


def check_network(net, in_shape, rng, label, max_coords=200):
    _perturb_zero_layers(net.parameters(), rng)
    x = rng.standard_normal(in_shape)
    out, cache = net.forward(x)
    w = rng.standard_normal(out.shape)
    for p in net.parameters():
        p.zero_grad()
    dx = net.backward(cache, w)

    def f():
        return np.sum(w * net(x))

    res = []
    c = _coords(x.size, max_coords, rng)
    res.append((f"{label}.input", relative_error(dx.reshape(-1)[c], numeric_grad(f, x, c))))
    for i, layer in enumerate(net.layers):
        for pname, p in (("weight", layer.weight), ("bias", layer.bias)):
            c = _coords(p.value.size, max_coords, rng)
            res.append((f"{label}.{i}.{pname}",
                        relative_error(p.grad.reshape(-1)[c], numeric_grad(f, p.value, c))))
    return res


def check_networks(rng, max_coords=200, H=6, W=6, C=3, F=2, hidden=4):
    res = []
    res += check_network(DecoderNet.create(F, C, hidden, rng=rng), (1, H, W, F), rng, "D", max_coords)
    res += check_network(GradientNet.create(C, F, hidden, rng=rng), (1, H, W, C), rng, "G", max_coords)
    res += check_network(PriorNet.create(C, hidden, rng=rng), (1, H, W, C), rng, "H", max_coords)
    return res


def check_unrolled(rng, max_coords=200, H=6, W=6, C=3, F=2, K=2, hidden=4, admmnet=False,
                   snapshots=1, lam_ae=0.0):
    """End-to-end check of ``0.5 * ||x_hat - x||^2`` (+ autoencoder term) w.r.t. every parameter."""
    model = UnrolledModel.create(C, F, K, hidden=hidden, n_hidden=2, prior_hidden=4, admmnet=admmnet,
                                 mu=0.3, rho=0.5, seed=rng)
    _perturb_zero_layers(model.parameters(), rng)
    x = rng.random((2, H, W, C))
    ops = [[SensingOperator.random(H, W, C, seed=rng) for _ in range(2)] for _ in range(snapshots)]
    masks = [np.stack([op.mask for op in group]) for group in ops]
    ys = [np.sum(m * x, axis=-1) for m in masks]

    def loss():
        xh = model.forward(ys, masks)
        val = 0.5 * np.sum((xh - x) ** 2)
        if lam_ae:
            val += lam_ae * 0.5 * np.sum((model.autoencode(x) - x) ** 2)
        return val

    model.zero_grad()
    xh = model.forward(ys, masks, retain=True)
    model.backward(xh - x)
    if lam_ae:
        xr, cache = model.autoencode(x, retain=True)
        model.autoencode_backward(cache, lam_ae * (xr - x))
    res = []
    tag = "admmnet" if admmnet else "jr2net"
    for name, p in model.named_parameters():
        c = _coords(p.value.size, max_coords, rng)
        res.append((f"{tag}.{name}", relative_error(p.grad.reshape(-1)[c], numeric_grad(loss, p.value, c))))
    return res


def run_suites(preset="tiny", seed=0):
    """Run every suite; returns ``{suite: [(label, err), ...]}``."""
    cfg = PRESETS[preset]
    rng = np.random.default_rng(seed)
    n, mc = cfg["instances"], cfg["max_coords"]
    out = {"conv": [], "relu": [], "networks": [], "unrolled": []}
    for _ in range(n):
        out["conv"] += check_conv(rng, mc)
        out["relu"] += check_relu(rng, mc)
    out["networks"] += check_networks(rng, mc)
    out["unrolled"] += check_unrolled(rng, mc)
    out["unrolled"] += check_unrolled(rng, mc, admmnet=True)
    out["unrolled"] += check_unrolled(rng, mc, snapshots=2, lam_ae=1.0)
    return out
