"""Desk-scale toy benchmark shared by the acceptance tests and the demos.

Twenty synthetic 64x64x8 scenes (18 train, 2 held out), a K=5 model with a
4-channel latent, 200 epochs. Sizes below the desk defaults keep one run on
a single CPU core within minutes.
"""
import time
from dataclasses import replace

import numpy as np

from .oracles import ista_solve
from .metrics import psnr
from .sensing import SensingOperator
from .synthetic import generate_dataset, split_validation
from .training import TrainConfig, evaluate_model, smoothed, train

N_SCENES, SIZE, BANDS = 20, 64, 8
VAL_SEED = 1234

TOY = TrainConfig(
    epochs=200,
    batch_size=4,
    patch_size=24,
    patches_per_image=6,
    K=5,
    F=4,
    hidden=16,
    n_hidden=2,
    prior_hidden=16,
    mu_init=0.3,
    dtype="float32",
    val_every=25,
)


def toy_data(seed=0):
    """``(train, validation)`` cube lists."""
    cubes, _ = generate_dataset(N_SCENES, SIZE, SIZE, BANDS, seed=seed)
    return split_validation(cubes)


def run_toy(data=None, log=None, **overrides):
    """Train one toy model; returns a dict with the model, history and metrics."""
    cfg = replace(TOY, **overrides).validate()
    tr, va = data or toy_data()
    t0 = time.perf_counter()
    model, history = train(cfg.build_model(BANDS), tr, cfg, val_set=va, val_seed=VAL_SEED)
    seconds = time.perf_counter() - t0
    metrics = evaluate_model(model, va, cfg.transmittance, VAL_SEED)
    losses = smoothed([r["total"] for r in history])
    if log:
        log(f"{overrides or 'baseline'}: val psnr {metrics['psnr']:.2f} dB in {seconds:.0f} s")
    return {"config": cfg, "model": model, "history": history, "metrics": metrics,
            "seconds": seconds, "loss_start": float(losses[0]), "loss_end": float(losses[-1])}


def ista_baseline(cubes, taus=(1e-4, 1e-3, 1e-2), iterations=500, transmittance=1 / 3):
    """Mean PSNR of the best ``tau`` over the validation measurements."""
    best = -np.inf
    for tau in taus:
        ps = []
        for n, cube in enumerate(cubes):
            H, W, C = cube.shape
            op = SensingOperator.random(H, W, C, transmittance, seed=[VAL_SEED, n])
            ps.append(psnr(ista_solve(op.forward(cube), op, tau, iterations), cube))
        best = max(best, float(np.mean(ps)))
    return best
