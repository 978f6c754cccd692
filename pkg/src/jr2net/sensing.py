"""DD-CASSI sensing: coded apertures, the forward projection and its adjoint.

The aperture is stored pre-extended to ``H + C - 1`` rows so that band ``k``
sees rows ``C - 1 - k .. C - 1 - k + H - 1`` of it. Folding that shear into a
per-band mask cube ``M[i, j, k] = T[i + C - 1 - k, j]`` turns both operators
into element-wise products::

    y[i, j]       = sum_k M[i, j, k] * x[i, j, k]
    (Phi^T y)[i, j, k] = M[i, j, k] * y[i, j]

so neither direction ever forms the ``HW x HWC`` matrix.
"""
import numpy as np

from .core import DegenerateInputError


def generate_aperture(H, W, C, transmittance_p=1 / 3, seed=None):
    """Draw an ``(H + C - 1, W)`` binary aperture with i.i.d. Bernoulli entries."""
    for name, v in (("H", H), ("W", W), ("C", C)):
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v}")
    if not 0 < transmittance_p < 1:
        raise ValueError(f"transmittance_p must lie in (0, 1), got {transmittance_p}")
    rng = np.random.default_rng(seed)
    return (rng.random((H + C - 1, W)) < transmittance_p).astype(np.float64)


def shear_mask(aperture, C):
    """Per-band mask cube of shape ``(H, W, C)`` for an ``(H + C - 1, W)`` aperture."""
    aperture = np.asarray(aperture, dtype=np.float64)
    R, W = aperture.shape
    H = R - C + 1
    if H < 1:
        raise ValueError(f"aperture with {R} rows cannot serve C={C} bands")
    return np.stack([aperture[C - 1 - k:C - 1 - k + H] for k in range(C)], axis=-1)


class SensingOperator:
    """The DD-CASSI projection for one coded aperture and cube geometry.

    Parameters
    ----------
    aperture : array_like, shape (H + C - 1, W)
        Transmittance in [0, 1]. Binary for synthetic apertures; calibrated
        (fractional) apertures are accepted as-is.
    H, W, C : int
        Cube geometry. ``H`` and ``W`` may be omitted and are then inferred
        from the aperture.
    """

    def __init__(self, aperture, C, H=None, W=None):
        aperture = np.array(aperture, dtype=np.float64)
        if aperture.ndim != 2:
            raise ValueError(f"aperture must be 2-D, got shape {aperture.shape}")
        if not np.all(np.isfinite(aperture)) or aperture.min() < 0 or aperture.max() > 1:
            raise ValueError("aperture transmittance must lie in [0, 1]")
        R, Wa = aperture.shape
        H = R - C + 1 if H is None else H
        W = Wa if W is None else W
        if R != H + C - 1 or Wa != W:
            raise ValueError(
                f"aperture shape {aperture.shape} does not match geometry "
                f"H={H}, W={W}, C={C} (expected {(H + C - 1, W)})")
        aperture.setflags(write=False)
        self.aperture = aperture
        self.shape = (H, W, C)
        self.mask = shear_mask(aperture, C)
        self.mask.setflags(write=False)

    @classmethod
    def random(cls, H, W, C, transmittance_p=1 / 3, seed=None):
        return cls(generate_aperture(H, W, C, transmittance_p, seed), C, H, W)

    def __repr__(self):
        H, W, C = self.shape
        return f"SensingOperator(H={H}, W={W}, C={C})"

    def forward(self, x):
        """Project a cube ``(..., H, W, C)`` to a measurement ``(..., H, W)``."""
        x = np.asarray(x)
        if x.shape[-3:] != self.shape:
            raise ValueError(f"cube shape {x.shape[-3:]} does not match operator {self.shape}")
        return np.sum(self.mask * x, axis=-1)

    def adjoint(self, y):
        """Back-project a measurement ``(..., H, W)`` to a cube ``(..., H, W, C)``."""
        y = np.asarray(y)
        if y.shape[-2:] != self.shape[:2]:
            raise ValueError(f"measurement shape {y.shape[-2:]} does not match operator {self.shape[:2]}")
        return self.mask * y[..., None]

    def normal(self, x):
        return self.adjoint(self.forward(x))


def stack_masks(ops):
    """Stack the mask cubes of several operators into ``(N, H, W, C)``."""
    shapes = {op.shape for op in ops}
    if len(shapes) != 1:
        raise ValueError(f"operators disagree on geometry: {sorted(shapes)}")
    return np.stack([op.mask for op in ops])


def add_noise(y, snr_db, seed=None):
    """Add white Gaussian noise at the requested SNR.

    The noise level is referenced to the clean measurement,
    ``sigma = rms(y) / 10**(snr_db / 20)``. ``snr_db = inf`` returns a copy
    of ``y`` unchanged.
    """
    y = np.asarray(y, dtype=np.float64)
    if np.isinf(snr_db) and snr_db > 0:
        return y.copy()
    rms = np.sqrt(np.mean(y ** 2))
    if rms == 0:
        raise DegenerateInputError("cannot reference noise to a zero-energy measurement")
    sigma = rms / 10 ** (snr_db / 20)
    rng = np.random.default_rng(seed)
    return y + sigma * rng.standard_normal(y.shape)


def empirical_snr_db(clean, noisy):
    clean = np.asarray(clean)
    err = np.asarray(noisy) - clean
    return 10 * np.log10(np.sum(clean ** 2) / np.sum(err ** 2))
