"""Unrolled ADMM reconstruction for dual-disperser coded-aperture spectral imaging."""
from .core import QualityReport, load_cube, normalize, save_cube
from .metrics import evaluate, psnr, sam, ssim
from .sensing import SensingOperator, add_noise, generate_aperture
from .training import TrainConfig, train
from .unrolled import UnrolledModel, reconstruct, reconstruct_multi

__all__ = ["QualityReport", "SensingOperator", "TrainConfig", "UnrolledModel", "add_noise", "evaluate",
           "generate_aperture", "load_cube", "normalize", "psnr", "reconstruct", "reconstruct_multi",
           "sam", "save_cube", "ssim", "train"]
