"""
Training on the toy benchmark
=============================

Twenty synthetic 64x64x8 scenes, two of them held out. Each training step
draws a fresh random aperture for every patch, so the model learns to invert
the operator family rather than one mask. One run takes a few minutes on a
single core.

Set ``JR2_DEMO_EPOCHS`` to shorten the run.
"""

import os

import numpy as np
from PIL import Image

from jr2net.benchmark import VAL_SEED, ista_baseline, run_toy, toy_data
from jr2net.cli import render_image
from jr2net.metrics import psnr
from jr2net.sensing import SensingOperator
from jr2net.unrolled import reconstruct

epochs = int(os.environ.get("JR2_DEMO_EPOCHS", 200))
train_set, val_set = toy_data()
run = run_toy((train_set, val_set), log=print, epochs=epochs)
print("smoothed loss", round(run["loss_start"], 4), "->", round(run["loss_end"], 4))
print("validation", {k: round(v, 3) for k, v in run["metrics"].items()})

# %%
# Quality after each stage on the first held-out scene.
cube = val_set[0]
op = SensingOperator.random(*cube.shape, seed=[VAL_SEED, 0])
xh, trace = reconstruct(run["model"], op.forward(cube), op, trace=True)
print("per-stage PSNR", [round(psnr(c, cube), 2) for c in trace.cubes])

# %%
# Same measurements, classical soft-thresholding in the pixel basis.
print("ISTA floor", round(ista_baseline(val_set), 2), "dB")

# %%
# Side-by-side false-colour rendering: truth on the left, estimate on the right.
img = np.concatenate([render_image(cube), render_image(np.clip(xh, 0, 1))], axis=1)
Image.fromarray(img).save("toy_reconstruction.png")
print("wrote toy_reconstruction.png")
