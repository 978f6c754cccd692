"""Spectral cube containers and the CSI1 on-disk format.

Cubes are plain ``numpy`` arrays of shape ``(H, W, C)`` indexed ``(i, j, k)``.
On disk they are stored band-sequential (``k`` slowest, row-major within a
band) as little-endian binary32, behind a 20-byte header::

    bytes 0-3    b"CSI1"
    bytes 4-7    version (u32 LE, always 1)
    bytes 8-19   H, W, C (u32 LE each)
    bytes 20-    H*W*C float32 LE values
"""
import os
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"CSI1"
VERSION = 1
HEADER = struct.Struct("<4sIIII")
PSNR_CAP = 100.0


class CubeFormatError(ValueError):
    """Malformed magic, version or header."""


class CubeLengthError(ValueError):
    """Payload size disagrees with the declared dimensions."""


class CubeDataError(ValueError):
    """Cube contains non-finite values."""


class DegenerateInputError(ValueError):
    """Input carries no signal (all zeros, zero energy, ...)."""


@dataclass(frozen=True)
class QualityReport:
    psnr: float
    ssim: float
    sam: float


def check_cube(x, name="cube"):
    """Return ``x`` as a float array after validating the (H, W, C) contract."""
    x = np.asarray(x)
    if x.ndim != 3 or min(x.shape) < 1:
        raise ValueError(f"{name} must have shape (H, W, C) with all dims >= 1, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise CubeDataError(f"{name} contains non-finite values")
    return x


def cube_to_bytes(cube):
    cube = check_cube(cube)
    H, W, C = cube.shape
    payload = np.ascontiguousarray(np.transpose(cube, (2, 0, 1)), dtype="<f4")
    return HEADER.pack(MAGIC, VERSION, H, W, C) + payload.tobytes()


def cube_from_bytes(buf):
    if len(buf) < HEADER.size:
        raise CubeFormatError(f"file too short for CSI1 header ({len(buf)} bytes)")
    magic, version, H, W, C = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise CubeFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CubeFormatError(f"unsupported CSI1 version {version}")
    if min(H, W, C) < 1:
        raise CubeFormatError(f"invalid dimensions H={H} W={W} C={C}")
    expected = HEADER.size + 4 * H * W * C
    if len(buf) != expected:
        raise CubeLengthError(f"payload length {len(buf) - HEADER.size} bytes, expected {4 * H * W * C}")
    data = np.frombuffer(buf, dtype="<f4", offset=HEADER.size).reshape(C, H, W)
    if not np.all(np.isfinite(data)):
        raise CubeDataError("cube payload contains non-finite values")
    return np.transpose(data, (1, 2, 0)).astype(np.float64)


def load_cube(path):
    """Read a CSI1 file into an ``(H, W, C)`` float64 array."""
    with open(path, "rb") as fh:
        return cube_from_bytes(fh.read())


def save_cube(cube, path):
    """Write ``cube`` as CSI1. Values are rounded to binary32."""
    data = cube_to_bytes(cube)
    with open(os.fspath(path), "wb") as fh:
        fh.write(data)


def normalize(cube):
    """Scale a cube by its maximum so that ``max == 1``."""
    cube = check_cube(cube)
    peak = np.max(cube)
    if peak == 0 or not np.any(cube):
        raise DegenerateInputError("cannot normalize an all-zero cube")
    if peak < 0:
        raise DegenerateInputError("cannot normalize a cube with no positive values")
    return cube / peak
