"""PSNR, SSIM and SAM for ``(H, W, C)`` spectral cubes."""
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .core import PSNR_CAP, DegenerateInputError, QualityReport


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def kernel(self):
        r = np.arange(self.window) - (self.window - 1) / 2
        g = np.exp(-r ** 2 / (2 * self.sigma ** 2))
        return g / g.sum()


def _pair(x, ref):
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    return x, ref


def psnr(x, ref, cap=PSNR_CAP):
    """Full-cube PSNR in dB against a unit peak, capped at ``cap``."""
    x, ref = _pair(x, ref)
    mse = np.mean((x - ref) ** 2)
    if mse == 0:
        return cap
    return float(min(cap, 10 * np.log10(1.0 / mse)))


def psnr_bandwise(x, ref, cap=PSNR_CAP):
    """Mean over bands of the per-band PSNR."""
    x, ref = _pair(x, ref)
    return float(np.mean([psnr(x[..., k], ref[..., k], cap) for k in range(x.shape[-1])]))


def _filter_valid(img, g):
    # separable Gaussian, keeping only fully-covered positions
    r = len(g) // 2
    out = correlate1d(correlate1d(img, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim(x, ref, cfg=None):
    """Mean over bands of the mean Gaussian-window SSIM map."""
    cfg = cfg or SsimConfig()
    x, ref = _pair(x, ref)
    if x.ndim == 2:
        x, ref = x[..., None], ref[..., None]
    if min(x.shape[:2]) < cfg.window:
        raise ValueError(f"SSIM needs spatial dims >= {cfg.window}, got {x.shape[:2]}")
    g = cfg.kernel()
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    vals = []
    for k in range(x.shape[-1]):
        a, b = x[..., k], ref[..., k]
        mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
        s_aa = _filter_valid(a * a, g) - mu_a * mu_a
        s_bb = _filter_valid(b * b, g) - mu_b * mu_b
        s_ab = _filter_valid(a * b, g) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * s_ab + c2)
        den = (mu_a * mu_a + mu_b * mu_b + c1) * (s_aa + s_bb + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def sam(x, ref, eps=1e-12):
    """Mean spectral angle (radians) over pixels with non-degenerate spectra."""
    x, ref = _pair(x, ref)
    nx = np.sum(x * x, axis=-1)
    nr = np.sum(ref * ref, axis=-1)
    ok = (np.sqrt(nx) >= eps) & (np.sqrt(nr) >= eps)
    if not np.any(ok):
        raise DegenerateInputError("every pixel has a near-zero spectrum")
    cos = np.sum(x * ref, axis=-1)[ok] / np.sqrt(nx[ok] * nr[ok])
    return float(np.mean(np.arccos(np.clip(cos, -1.0, 1.0))))


def evaluate(x, ref):
    return QualityReport(psnr(x, ref), ssim(x, ref), sam(x, ref))
