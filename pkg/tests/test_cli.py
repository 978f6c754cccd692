import csv
import os

import numpy as np
import pytest
from PIL import Image

from jr2net.cli import main, render_image
from jr2net.config import ConfigError, dump_config, parse_config
from jr2net.core import load_cube, normalize, save_cube
from jr2net.sensing import SensingOperator


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_gen_data_count_manifest_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(capsys, "gen-data", "--n-scenes", 10, "--height", 12, "--width", 12, "--bands", 4,
                   "--seed", 3, "--out", d)[0] == 0
    files = sorted(p for p in os.listdir(a) if p.endswith(".csi"))
    assert len(files) == 10
    with open(a / "manifest.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["path"] for r in rows] == files and all(r["seed"] for r in rows)
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()
        cube = load_cube(a / f)
        assert cube.min() >= 0 and cube.max() <= 1
        np.testing.assert_allclose(normalize(cube), cube, atol=1e-6)


def test_missing_seed_is_drawn_and_printed(tmp_path, capsys):
    code, out, _ = run(capsys, "gen-data", "--n-scenes", 1, "--height", 8, "--width", 8, "--bands", 2,
                       "--out", tmp_path)
    assert code == 0 and out.startswith("seed ")


def test_simulate_then_adjoint_plumbing(tmp_path, capsys):
    x = np.random.default_rng(0).random((9, 7, 5))
    save_cube(x, tmp_path / "x.csi")
    assert run(capsys, "simulate", tmp_path / "x.csi", "--seed", 1)[0] == 0
    y = load_cube(tmp_path / "x.meas.csi")
    T = load_cube(tmp_path / "x.aperture.csi")
    assert y.shape == (9, 7, 1) and T.shape == (9 + 5 - 1, 7, 1)
    op = SensingOperator(T[..., 0], 5)
    assert op.adjoint(y[..., 0]).shape == x.shape
    np.testing.assert_allclose(y[..., 0], op.forward(x.astype(np.float32)), rtol=1e-5, atol=1e-6)
    # default transmittance is one third
    assert abs(T.mean() - 1 / 3) < 0.1


def test_simulate_noise_residual_matches_sigma(tmp_path, capsys):
    x = np.random.default_rng(1).random((32, 32, 4))
    save_cube(x, tmp_path / "x.csi")
    run(capsys, "simulate", tmp_path / "x.csi", "--seed", 5, "--out", tmp_path / "clean")
    code, out, _ = run(capsys, "simulate", tmp_path / "x.csi", "--seed", 5, "--snr-db", 30,
                       "--out", tmp_path / "noisy")
    assert code == 0 and "empirical snr" in out
    clean = load_cube(tmp_path / "clean.meas.csi")
    noisy = load_cube(tmp_path / "noisy.meas.csi")
    sigma = np.sqrt(np.mean(clean ** 2)) / 10 ** (30 / 20)
    expected = sigma * np.sqrt(clean.size)
    assert np.linalg.norm(noisy - clean) == pytest.approx(expected, rel=0.1)


def test_evaluate_identity_and_csv(tmp_path, capsys):
    x = np.random.default_rng(2).random((16, 16, 3)).astype(np.float32)
    save_cube(x, tmp_path / "x.csi")
    code, out, _ = run(capsys, "evaluate", tmp_path / "x.csi", tmp_path / "x.csi", "--out", tmp_path / "r.csv")
    assert code == 0
    with open(tmp_path / "r.csv") as fh:
        row = next(csv.DictReader(fh))
    assert float(row["psnr"]) == 100.0 and float(row["ssim"]) == 1.0 and float(row["sam"]) == 0.0


def test_evaluate_shape_mismatch_is_one_line_error(tmp_path, capsys):
    save_cube(np.ones((4, 4, 2)), tmp_path / "a.csi")
    save_cube(np.ones((4, 4, 3)), tmp_path / "b.csi")
    code, out, err = run(capsys, "evaluate", tmp_path / "a.csi", tmp_path / "b.csi")
    assert code != 0 and err.count("\n") == 1 and err.startswith("error: argument:")


def test_bad_cube_file_reports_format_error(tmp_path, capsys):
    (tmp_path / "bad.csi").write_bytes(b"junk" * 10)
    code, _, err = run(capsys, "render", tmp_path / "bad.csi", "--band", 0)
    assert code == 2 and err.startswith("error: format:")


def test_gradcheck_tiny_passes(capsys):
    code, out, _ = run(capsys, "gradcheck", "--preset", "tiny")
    assert code == 0
    assert out.count("PASS") == 4


def test_render_band_and_rgb(tmp_path, capsys):
    x = np.random.default_rng(3).random((10, 12, 6))
    save_cube(x, tmp_path / "x.csi")
    assert run(capsys, "render", tmp_path / "x.csi", "--band", 2, "--out", tmp_path / "b.png")[0] == 0
    assert run(capsys, "render", tmp_path / "x.csi", "--out", tmp_path / "c.png")[0] == 0
    assert Image.open(tmp_path / "b.png").size == (12, 10)
    assert np.asarray(Image.open(tmp_path / "c.png")).shape == (10, 12, 3)
    code, _, err = run(capsys, "render", tmp_path / "x.csi", "--band", 9)
    assert code == 2 and "band 9" in err


def test_render_weights_pick_band_ends():
    cube = np.zeros((2, 2, 5))
    cube[..., -1] = 1  # energy only at the long-wavelength end
    img = render_image(cube)
    assert img[0, 0, 0] == 255 and img[0, 0, 2] == 0


def test_config_parsing_and_round_trip():
    run_cfg = parse_config("# toy\nepochs = 3\nk = 2  # stages\n")
    assert run_cfg.train.epochs == 3 and run_cfg.train.K == 2
    text = "epochs = 5\nlam_ae = 0.5\nadmmnet = true\ndataset_dir = /tmp/d\nsnr_db = 30\n"
    cfg = parse_config(text)
    assert cfg.train.lam_ae == 0.5 and cfg.train.admmnet and cfg.dataset_dir == "/tmp/d"
    assert parse_config(dump_config(cfg)) == cfg


def test_config_lists_every_violation():
    with pytest.raises(ConfigError) as exc:
        parse_config("bogus = 1\nepochs = -1\nlam_ae = -2\nBadKey = 3\nbatch_size = many\n")
    probs = exc.value.problems
    assert any("bogus" in p for p in probs)
    assert any("BadKey" in p for p in probs)
    assert any("batch_size" in p for p in probs)
    assert any("epochs" in p for p in probs)
    assert any("lam_ae" in p for p in probs)


def test_train_rejects_bad_config_before_work(tmp_path, capsys):
    (tmp_path / "c.cfg").write_text("epochs = 0\nunknown_key = 1\n")
    code, _, err = run(capsys, "train", "--config", tmp_path / "c.cfg")
    assert code == 2 and err.startswith("error: config:") and "unknown_key" in err
    assert err.count("\n") == 1


def test_threads_env_validation(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("JR2_THREADS", "zero")
    code, _, err = run(capsys, "gen-data", "--n-scenes", 1, "--height", 8, "--width", 8, "--bands", 2,
                       "--seed", 0, "--out", tmp_path)
    assert code == 2 and "JR2_THREADS" in err
    monkeypatch.setenv("JR2_THREADS", "1")
    assert run(capsys, "gen-data", "--n-scenes", 1, "--height", 8, "--width", 8, "--bands", 2,
               "--seed", 0, "--out", tmp_path)[0] == 0


def test_full_pipeline_end_to_end(tmp_path, capsys):
    data = tmp_path / "data"
    assert run(capsys, "gen-data", "--n-scenes", 10, "--height", 16, "--width", 16, "--bands", 4,
               "--seed", 0, "--out", data)[0] == 0
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"dataset_dir = {data}\ncheckpoint_dir = {tmp_path / 'ck'}\noutput_dir = {tmp_path / 'out'}\n"
                   "epochs = 2\nbatch_size = 4\npatch_size = 12\npatches_per_image = 1\n"
                   "k = 2\nf = 2\nhidden = 4\nn_hidden = 2\nprior_hidden = 4\n")
    code, out, err = run(capsys, "train", "--config", cfg, "--seed", 1)
    assert code == 0, err
    assert "validation psnr" in out
    with open(tmp_path / "out" / "history.csv") as fh:
        assert next(csv.reader(fh)) == ["epoch", "step", "total", "mse", "l_ae", "val_psnr"]
    scene = data / "scene_0009.csi"
    assert run(capsys, "simulate", scene, "--seed", 2, "--out", tmp_path / "m")[0] == 0
    model = tmp_path / "out" / "model.jr2w"
    code, _, err = run(capsys, "reconstruct", model, tmp_path / "m.meas.csi", "--out", tmp_path / "r.csi", "--trace")
    assert code == 0, err
    assert load_cube(tmp_path / "r.csi").shape == (16, 16, 4)
    assert os.path.exists(tmp_path / "r.stage1.csi") and os.path.exists(tmp_path / "r.stage2.csi")
    code, out, _ = run(capsys, "evaluate", tmp_path / "r.csi", scene)
    assert code == 0 and "psnr" in out


def test_reconstruct_geometry_mismatch_names_dims(tmp_path, capsys):
    data = tmp_path / "d"
    run(capsys, "gen-data", "--n-scenes", 1, "--height", 8, "--width", 8, "--bands", 5, "--seed", 0, "--out", data)
    run(capsys, "simulate", data / "scene_0000.csi", "--seed", 0, "--out", tmp_path / "m")
    from jr2net.unrolled import UnrolledModel
    UnrolledModel.create(4, 2, K=1, hidden=4, n_hidden=1, seed=0).save(tmp_path / "w.jr2w")
    code, _, err = run(capsys, "reconstruct", tmp_path / "w.jr2w", tmp_path / "m.meas.csi")
    assert code == 2 and "C=4" in err and "C=5" in err
