"""
Coded-aperture sensing in a few lines
=====================================

A dual-disperser imager shears the spectral cube, multiplies it by a binary
aperture, shears it back and integrates over wavelength. The result is a
single 2D image per snapshot. Here we build that operator, look at what it
does to a synthetic scene and confirm that the adjoint really is the
adjoint.
"""

import numpy as np

from jr2net.oracles import build_dense, cube_to_vector
from jr2net.sensing import SensingOperator, add_noise, empirical_snr_db
from jr2net.synthetic import generate_scene

# %%
# A small low-rank scene: 32x32 pixels, 8 bands, values in [0, 1].
x = generate_scene(32, 32, 8, seed=7)
print("scene", x.shape, "range", x.min().round(3), x.max().round(3))

# %%
# The aperture has H + C - 1 rows so every band sees a full-height window.
# With transmittance 1/3 each pixel mixes about a third of the bands.
op = SensingOperator.random(32, 32, 8, transmittance_p=1 / 3, seed=0)
print("aperture", op.aperture.shape, "open fraction", op.aperture.mean().round(3))
print("bands summed per pixel, mean", op.mask.sum(-1).mean().round(2))

y = op.forward(x)
print("measurement", y.shape)

# %%
# Back-projection puts each measurement value into the bands that produced it.
# It is a poor reconstruction on its own, which is why a solver is needed.
xb = op.adjoint(y)
print("back-projection error", np.linalg.norm(xb - x).round(2))

# %%
# Adjoint check: <Phi x, y'> equals <x, Phi^T y'> for any pair.
rng = np.random.default_rng(1)
a, b = rng.standard_normal(x.shape), rng.standard_normal(y.shape)
print("adjoint gap", abs(np.vdot(op.forward(a), b) - np.vdot(a, op.adjoint(b))))

# %%
# On a tiny geometry the operator can be written out as a matrix. Each row
# has at most C nonzeros, one per band.
small = SensingOperator.random(4, 4, 3, seed=2)
Phi = build_dense(small)
v = rng.random((4, 4, 3))
print("dense", Phi.shape, "max row nnz", np.count_nonzero(Phi, 1).max(),
      "match", np.allclose(Phi @ cube_to_vector(v), small.forward(v).ravel()))

# %%
# Detector noise is specified as an SNR on the measurement.
noisy = add_noise(y, 30, seed=3)
print("requested 30 dB, got", round(empirical_snr_db(y, noisy), 2), "dB")
