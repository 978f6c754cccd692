"""End-to-end training of the unrolled model.

Every step draws a fresh Bernoulli aperture per patch, simulates its
measurement, reconstructs the batch, and minimises

    mean((x_hat - x)**2) + lam_ae * mean((x - D(G(x)))**2)

with one Adam update over all parameters.
"""
import csv
import logging
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .metrics import psnr, sam, ssim
from .sensing import SensingOperator, add_noise, generate_aperture, shear_mask
from .substrate import OptimizerConfig, TrainingError, adam_step, read_blocks, write_blocks
from .unrolled import NumericError, UnrolledModel, reconstruct

log = logging.getLogger(__name__)

HISTORY_FIELDS = ["epoch", "step", "total", "mse", "l_ae", "val_psnr"]


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    patch_size: int = 48
    patches_per_image: int = 24
    transmittance: float = 1 / 3
    lr: float = 1e-3
    lam_ae: float = 1.0
    snr_db: float = None
    seed: int = 0
    K: int = 7
    F: int = 8
    hidden: int = 16
    n_hidden: int = 5
    prior_hidden: int = 16
    admmnet: bool = False
    mu_init: float = 0.01
    rho_init: float = 0.1
    dtype: str = "float64"
    checkpoint_every: int = 25
    val_every: int = 25

    def problems(self):
        """Every violated invariant, as human-readable strings."""
        out = []
        for name in ("batch_size", "patch_size", "patches_per_image", "K", "F", "hidden",
                     "n_hidden", "prior_hidden", "checkpoint_every", "val_every"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                out.append(f"{name} must be an integer >= 1, got {getattr(self, name)!r}")
        if int(self.epochs) != self.epochs or self.epochs < 0:
            out.append(f"epochs must be an integer >= 0, got {self.epochs!r}")
        if not 0 < self.transmittance < 1:
            out.append(f"transmittance must lie in (0, 1), got {self.transmittance!r}")
        if not self.lr > 0:
            out.append(f"lr must be positive, got {self.lr!r}")
        if not self.lam_ae >= 0:
            out.append(f"lam_ae must be >= 0, got {self.lam_ae!r}")
        if not (self.mu_init > 0 and self.rho_init > 0):
            out.append("mu_init and rho_init must be positive")
        if self.dtype not in ("float32", "float64"):
            out.append(f"dtype must be float32 or float64, got {self.dtype!r}")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ValueError("invalid training config:\n  " + "\n  ".join(problems))
        return self

    def build_model(self, C):
        return UnrolledModel.create(C, self.F, self.K, self.hidden, self.n_hidden, self.prior_hidden,
                                    self.admmnet, self.mu_init, self.rho_init, seed=self.seed,
                                    dtype=np.dtype(self.dtype))

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class LossReport:
    total: float
    mse: float
    l_ae: float


def sample_patches(cubes, cfg, seed, epoch=0):
    """``patches_per_image`` uniform random crops from every cube."""
    rng = np.random.default_rng([seed, epoch])
    P = cfg.patch_size
    out = []
    for n, cube in enumerate(cubes):
        H, W = cube.shape[:2]
        if H < P or W < P:
            raise ValueError(f"cube {n} has spatial size {H}x{W}, smaller than patch size {P}")
        for _ in range(cfg.patches_per_image):
            i = rng.integers(0, H - P + 1)
            j = rng.integers(0, W - P + 1)
            out.append(cube[i:i + P, j:j + P])
    return out


def simulate_batch(x, cfg, rng):
    """Fresh aperture per patch; returns ``(y, masks)`` for a batch ``(N, H, W, C)``."""
    N, H, W, C = x.shape
    masks = np.stack([shear_mask(generate_aperture(H, W, C, cfg.transmittance, rng), C) for _ in range(N)])
    masks = masks.astype(x.dtype)
    y = np.sum(masks * x, axis=-1)
    if cfg.snr_db is not None:
        y = np.stack([add_noise(y[n], cfg.snr_db, rng) for n in range(N)]).astype(x.dtype)
    return y, masks


def batch_loss(model, x, y, masks, lam_ae, retain=False):
    """Loss terms for a simulated batch; with ``retain`` gradients are accumulated too."""
    xh = model.forward([y], [masks], retain=retain)
    diff = xh - x
    mse = float(np.mean(diff * diff))
    if retain:
        model.backward(2 * diff / diff.size)
    l_ae = 0.0
    if lam_ae > 0 and not model.admmnet:
        out = model.autoencode(x, retain=retain)
        xr = out[0] if retain else out
        r = xr - x
        l_ae = float(np.mean(r * r))
        if retain:
            model.autoencode_backward(out[1], lam_ae * 2 * r / r.size)
    return LossReport(mse + lam_ae * l_ae, mse, l_ae)


def training_step(model, batch, cfg, seed, opt=None):
    """One Adam step on ``batch`` (list of cubes or ``(N, H, W, C)`` array)."""
    opt = opt or OptimizerConfig(lr=cfg.lr)
    x = np.asarray(np.stack(batch) if isinstance(batch, list) else batch, dtype=model.dtype)
    rng = np.random.default_rng(seed)
    y, masks = simulate_batch(x, cfg, rng)
    model.zero_grad()
    report = batch_loss(model, x, y, masks, cfg.lam_ae, retain=True)
    if not np.isfinite(report.total):
        raise TrainingError(f"non-finite loss {report}")
    for name, p in model.named_parameters():
        adam_step(p, None, opt, name)
    return report


def evaluate_model(model, cubes, transmittance=1 / 3, seed=1234, snr_db=None):
    """Mean PSNR/SSIM/SAM over ``cubes`` with one fixed aperture per cube."""
    ps, ss, sa = [], [], []
    for n, cube in enumerate(cubes):
        H, W, C = cube.shape
        op = SensingOperator.random(H, W, C, transmittance, seed=[seed, n])
        y = op.forward(cube)
        if snr_db is not None:
            y = add_noise(y, snr_db, seed=[seed, n, 1])
        xh = reconstruct(model, y, op)
        ps.append(psnr(xh, cube))
        ss.append(ssim(xh, cube) if min(H, W) >= 11 else np.nan)
        sa.append(sam(xh, cube))
    return {"psnr": float(np.mean(ps)), "ssim": float(np.mean(ss)), "sam": float(np.mean(sa))}


def save_training_state(model, path):
    """Model weights plus Adam moments, so training can resume exactly."""
    blocks = model.state_dict()
    for name, p in model.named_parameters():
        blocks[f"adam.m.{name}"] = p.m
        blocks[f"adam.v.{name}"] = p.v
        blocks[f"adam.t.{name}"] = np.array(p.step)
    write_blocks(path, blocks)


def load_training_state(path, dtype=np.float64):
    blocks = read_blocks(path)
    model = UnrolledModel.from_blocks({k: v for k, v in blocks.items() if not k.startswith("adam.")},
                                      np.dtype(dtype))
    for name, p in model.named_parameters():
        p.m[...] = blocks[f"adam.m.{name}"]
        p.v[...] = blocks[f"adam.v.{name}"]
        p.step = int(blocks[f"adam.t.{name}"])
    return model


def write_history(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        w.writeheader()
        for row in history:
            w.writerow({k: ("" if row.get(k) is None else row[k]) for k in HISTORY_FIELDS})


def train(model, dataset, cfg, val_set=None, checkpoint_dir=None, start_epoch=0, val_seed=1234):
    """Run ``cfg.epochs`` epochs (starting at ``start_epoch``).

    Returns ``(model, history)``; ``history`` holds one dict per step with
    keys :data:`HISTORY_FIELDS`. ``val_psnr`` is filled on validation steps
    (every ``val_every`` epochs and the final one) when ``val_set`` is given.
    """
    cfg.validate()
    if not dataset:
        raise ValueError("training dataset is empty")
    opt = OptimizerConfig(lr=cfg.lr)
    history = []
    best = -np.inf
    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)
    for epoch in range(start_epoch, cfg.epochs):
        patches = sample_patches(dataset, cfg, cfg.seed, epoch)
        order = np.random.default_rng([cfg.seed, epoch, 1]).permutation(len(patches))
        n_steps = -(-len(patches) // cfg.batch_size)
        for step in range(n_steps):
            idx = order[step * cfg.batch_size:(step + 1) * cfg.batch_size]
            batch = np.stack([patches[i] for i in idx])
            try:
                rep = training_step(model, batch, cfg, seed=[cfg.seed, epoch, step, 2], opt=opt)
            except (NumericError, TrainingError) as exc:
                raise TrainingError(f"epoch {epoch} step {step}: {exc}") from exc
            history.append({"epoch": epoch, "step": step, "total": rep.total, "mse": rep.mse,
                            "l_ae": rep.l_ae, "val_psnr": None})
        last = epoch == cfg.epochs - 1
        if val_set and ((epoch + 1) % cfg.val_every == 0 or last):
            v = evaluate_model(model, val_set, cfg.transmittance, val_seed, cfg.snr_db)["psnr"]
            history[-1]["val_psnr"] = v
            log.info("epoch %d  loss %.5f  val psnr %.2f dB", epoch, history[-1]["total"], v)
            if checkpoint_dir and v > best:
                best = v
                model.save(os.path.join(checkpoint_dir, "best.jr2w"))
        if checkpoint_dir and ((epoch + 1) % cfg.checkpoint_every == 0 or last):
            save_training_state(model, os.path.join(checkpoint_dir, f"epoch_{epoch + 1:05d}.jr2s"))
            model.save(os.path.join(checkpoint_dir, "last.jr2w"))
    return model, history


def smoothed(values, window=20):
    values = np.asarray(values, dtype=float)
    if len(values) < window:
        return values
    return np.convolve(values, np.ones(window) / window, mode="valid")


def config_dict(cfg):
    return asdict(cfg)
