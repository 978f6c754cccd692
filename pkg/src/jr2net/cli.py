"""Command-line entry point: ``python -m jr2net <subcommand> ...``.

Files use the CSI1 container throughout. A measurement is stored as a
one-band cube ``(H, W, 1)``; an aperture as a one-band cube of
``H + C - 1`` rows, recognised by the ``.aperture.csi`` suffix, so the band
count of a measurement/aperture pair is recovered from their row counts.

Failures print a single ``error: <kind>: <message>`` line to stderr and
exit with status 2 (usage/config/data problems) or 1 (numeric failures).
"""
import argparse
import contextlib
import csv
import glob
import os
import secrets
import sys

import numpy as np

APERTURE_SUFFIX = ".aperture.csi"
MEASUREMENT_SUFFIX = ".meas.csi"
DEFAULT_RGB_WEIGHTS = ((0.0, 0.1, 0.9), (0.1, 0.8, 0.1), (0.9, 0.1, 0.0))  # R, G, B


class CliError(Exception):
    def __init__(self, kind, message, status=2):
        super().__init__(message)
        self.kind = kind
        self.status = status


def _limit_threads():
    n = os.environ.get("JR2_THREADS")
    if not n:
        return contextlib.nullcontext()
    try:
        n = int(n)
        if n < 1:
            raise ValueError
    except ValueError:
        raise CliError("config", f"JR2_THREADS must be a positive integer, got {n!r}")
    from threadpoolctl import threadpool_limits
    # the compiled im2col kernels are serial; BLAS is the only thread pool
    return threadpool_limits(n)


def _seed(args):
    if args.seed is None:
        args.seed = secrets.randbelow(2 ** 31)
        print(f"seed {args.seed}")
    return args.seed


def _stem(path, suffix):
    return path[:-len(suffix)] if path.endswith(suffix) else os.path.splitext(path)[0]


def load_aperture_pair(meas_path, aperture_path=None):
    """Return ``(y, op)`` for a measurement file and its aperture sidecar."""
    from .core import load_cube
    from .sensing import SensingOperator
    if aperture_path is None:
        aperture_path = _stem(meas_path, MEASUREMENT_SUFFIX) + APERTURE_SUFFIX
    y = load_cube(meas_path)
    T = load_cube(aperture_path)
    if y.shape[2] != 1 or T.shape[2] != 1:
        raise CliError("argument", "measurement and aperture files must be single-band")
    H, W = y.shape[:2]
    C = T.shape[0] - H + 1
    if C < 1 or T.shape[1] != W:
        raise CliError("argument", f"aperture {T.shape[:2]} incompatible with measurement {(H, W)}")
    return y[..., 0], SensingOperator(T[..., 0], C, H, W)


def cmd_gen_data(args):
    from .core import load_cube, normalize, save_cube
    from .synthetic import generate_dataset
    seed = _seed(args)
    out = args.out or "data"
    os.makedirs(out, exist_ok=True)
    cubes, seeds = generate_dataset(args.n_scenes, args.height, args.width, args.bands, seed=seed)
    rows = []
    for n, (cube, s) in enumerate(zip(cubes, seeds)):
        path = os.path.join(out, f"scene_{n:04d}.csi")
        save_cube(cube, path)
        back = load_cube(path)
        if back.min() < 0 or back.max() > 1 or not np.allclose(normalize(back), back, atol=1e-6):
            raise CliError("data", f"generated scene {n} failed range/normalisation check")
        rows.append((os.path.basename(path), s))
    with open(os.path.join(out, "manifest.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "seed"])
        w.writerows(rows)
    print(f"wrote {len(rows)} scenes to {out}")


def cmd_simulate(args):
    from .core import load_cube, save_cube
    from .sensing import SensingOperator, add_noise, empirical_snr_db
    seed = _seed(args)
    x = load_cube(args.cube)
    H, W, C = x.shape
    op = SensingOperator.random(H, W, C, args.transmittance, seed=[seed, 0])
    y = op.forward(x)
    if args.snr_db is not None:
        clean = y
        y = add_noise(y, args.snr_db, seed=[seed, 1])
        print(f"empirical snr {empirical_snr_db(clean, y):.3f} dB")
    stem = args.out or _stem(args.cube, ".csi")
    save_cube(y[..., None], stem + MEASUREMENT_SUFFIX)
    save_cube(op.aperture[..., None], stem + APERTURE_SUFFIX)
    print(f"wrote {stem + MEASUREMENT_SUFFIX} and {stem + APERTURE_SUFFIX}")


def _dataset(run):
    from .core import load_cube
    d = run.dataset_dir
    if not d or not os.path.isdir(d):
        raise CliError("config", f"dataset_dir {d!r} is not a directory")
    manifest = os.path.join(d, "manifest.csv")
    if os.path.exists(manifest):
        with open(manifest) as fh:
            paths = [os.path.join(d, r["path"]) for r in csv.DictReader(fh)]
    else:
        paths = sorted(p for p in glob.glob(os.path.join(d, "*.csi"))
                       if not p.endswith((APERTURE_SUFFIX, MEASUREMENT_SUFFIX)))
    if not paths:
        raise CliError("data", f"no cubes found in {d}")
    return [load_cube(p) for p in paths]


def cmd_train(args):
    from .config import ConfigError, load_config
    from .synthetic import split_validation
    from .training import evaluate_model, train, write_history
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.admmnet:
        overrides["admmnet"] = True
    if args.snr_db is not None:
        overrides["snr_db"] = args.snr_db
    try:
        run = load_config(args.config, overrides)
    except ConfigError as exc:
        raise CliError("config", "; ".join(exc.problems))
    except OSError as exc:
        raise CliError("io", str(exc))
    cubes = _dataset(run)
    bands = {c.shape[2] for c in cubes}
    if len(bands) != 1:
        raise CliError("data", f"dataset mixes band counts {sorted(bands)}")
    tr, va = split_validation(cubes) if len(cubes) >= 10 else (cubes, [])
    cfg = run.train
    model = cfg.build_model(bands.pop())
    out = args.out or run.output_dir
    os.makedirs(out, exist_ok=True)
    model, history = train(model, tr, cfg, val_set=va, checkpoint_dir=run.checkpoint_dir)
    write_history(history, os.path.join(out, "history.csv"))
    model.save(os.path.join(out, "model.jr2w"))
    rep = evaluate_model(model, va or tr, cfg.transmittance, snr_db=cfg.snr_db)
    print(f"validation psnr {rep['psnr']:.4f} ssim {rep['ssim']:.4f} sam {rep['sam']:.4f}")


def cmd_reconstruct(args):
    from .core import save_cube
    from .unrolled import UnrolledModel, reconstruct
    model = UnrolledModel.load(args.checkpoint)
    y, op = load_aperture_pair(args.measurement, args.aperture)
    if op.shape[2] != model.C:
        raise CliError("argument", f"checkpoint expects C={model.C} bands, measurement/aperture give C={op.shape[2]}")
    out = args.out or _stem(args.measurement, MEASUREMENT_SUFFIX) + ".recon.csi"
    if args.trace:
        x, tr = reconstruct(model, y, op, trace=True)
        for k, cube in enumerate(tr.cubes):
            save_cube(cube, f"{_stem(out, '.csi')}.stage{k + 1}.csi")
    else:
        x = reconstruct(model, y, op)
    save_cube(x, out)
    print(f"wrote {out}")


def _pairs(recon, truth):
    if os.path.isdir(recon) != os.path.isdir(truth):
        raise CliError("argument", "reconstruction and ground truth must both be files or both directories")
    if not os.path.isdir(recon):
        return [(os.path.basename(truth), recon, truth)]
    out = []
    for t in sorted(glob.glob(os.path.join(truth, "*.csi"))):
        r = os.path.join(recon, os.path.basename(t))
        if os.path.exists(r):
            out.append((os.path.basename(t), r, t))
    if not out:
        raise CliError("data", "no matching file names between the two directories")
    return out


def cmd_evaluate(args):
    from .core import load_cube
    from .metrics import evaluate, psnr_bandwise
    rows = []
    for name, r, t in _pairs(args.recon, args.truth):
        xr, xt = load_cube(r), load_cube(t)
        if xr.shape != xt.shape:
            raise CliError("argument", f"{name}: reconstruction {xr.shape} vs ground truth {xt.shape}")
        rep = evaluate(xr, xt)
        rows.append((name, rep.psnr, rep.ssim, rep.sam, psnr_bandwise(xr, xt)))
        print(f"{name} psnr {rep.psnr:.4f} ssim {rep.ssim:.4f} sam {rep.sam:.6f}")
    if len(rows) > 1:
        m = np.mean([r[1:4] for r in rows], axis=0)
        print(f"mean psnr {m[0]:.4f} ssim {m[1]:.4f} sam {m[2]:.6f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["image", "psnr", "ssim", "sam", "psnr_bandwise"])
            w.writerows(rows)


def cmd_gradcheck(args):
    from .gradcheck import PRESETS, TOLERANCE, run_suites
    if args.preset not in PRESETS:
        raise CliError("argument", f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
    ok = True
    for suite, errs in run_suites(args.preset, seed=args.seed or 0).items():
        label, worst = max(errs, key=lambda t: t[1])
        passed = worst < TOLERANCE
        ok &= passed
        print(f"{suite:10s} {'PASS' if passed else 'FAIL'} max rel err {worst:.2e} ({label})")
    if not ok:
        raise CliError("gradcheck", "finite-difference check exceeded tolerance", status=1)


def render_image(cube, band=None, weights=DEFAULT_RGB_WEIGHTS):
    """8-bit image: one band as grey, or an RGB mix of band-position weights."""
    C = cube.shape[2]
    if band is not None:
        if not 0 <= band < C:
            raise CliError("argument", f"band {band} out of range for C={C}")
        img = cube[..., band]
    else:
        # one triple per output channel (R, G, B): weights at the first, middle
        # and last band, linearly interpolated in between
        pos = np.linspace(0, 1, C)
        chans = []
        for w in weights:
            profile = np.interp(pos, [0, 0.5, 1], w)
            chans.append(cube @ profile / max(profile.sum(), 1e-12))
        img = np.stack(chans, axis=-1)
    peak = img.max()
    img = img / peak if peak > 0 else img
    return (np.clip(img, 0, 1) * 255 + 0.5).astype(np.uint8)


def cmd_render(args):
    from PIL import Image
    from .core import load_cube
    weights = DEFAULT_RGB_WEIGHTS
    if args.weights:
        vals = [float(v) for v in args.weights.split(",")]
        if len(vals) != 9:
            raise CliError("argument", "--weights needs nine comma-separated numbers")
        weights = (tuple(vals[:3]), tuple(vals[3:6]), tuple(vals[6:]))
    img = render_image(load_cube(args.cube), args.band, weights)
    out = args.out or _stem(args.cube, ".csi") + ".png"
    Image.fromarray(img).save(out)
    print(f"wrote {out}")


def build_parser():
    p = argparse.ArgumentParser(prog="jr2net", description="Unrolled ADMM spectral reconstruction toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.set_defaults(func=fn)
        return sp

    sp = add("gen-data", cmd_gen_data, "write synthetic scenes and a manifest")
    sp.add_argument("--n-scenes", type=int, default=20)
    sp.add_argument("--height", type=int, default=64)
    sp.add_argument("--width", type=int, default=64)
    sp.add_argument("--bands", type=int, default=8)

    sp = add("simulate", cmd_simulate, "sense a cube with a random aperture")
    sp.add_argument("cube")
    sp.add_argument("--transmittance", type=float, default=1 / 3)
    sp.add_argument("--snr-db", type=float)

    sp = add("train", cmd_train, "train a model from a run-config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--admmnet", action="store_true")
    sp.add_argument("--snr-db", type=float)

    sp = add("reconstruct", cmd_reconstruct, "recover a cube from a measurement")
    sp.add_argument("checkpoint")
    sp.add_argument("measurement")
    sp.add_argument("--aperture")
    sp.add_argument("--trace", action="store_true")

    sp = add("evaluate", cmd_evaluate, "PSNR/SSIM/SAM against ground truth")
    sp.add_argument("recon")
    sp.add_argument("truth")

    sp = add("gradcheck", cmd_gradcheck, "finite-difference gradient suites")
    sp.add_argument("--preset", default="tiny")

    sp = add("render", cmd_render, "write a PNG of one band or an RGB approximation")
    sp.add_argument("cube")
    sp.add_argument("--band", type=int)
    sp.add_argument("--weights", help="nine comma-separated numbers, three per output channel")
    return p


def main(argv=None):
    from .core import CubeDataError, CubeFormatError, CubeLengthError, DegenerateInputError
    from .substrate import CheckpointError, TrainingError
    from .unrolled import NumericError
    args = build_parser().parse_args(argv)
    try:
        with _limit_threads():
            args.func(args)
    except CliError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return exc.status
    except (CubeFormatError, CubeLengthError, CubeDataError, CheckpointError) as exc:
        print(f"error: format: {exc}", file=sys.stderr)
        return 2
    except (NumericError, TrainingError, DegenerateInputError) as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return 1
    except (ValueError, TypeError) as exc:
        print(f"error: argument: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 2
    return 0
