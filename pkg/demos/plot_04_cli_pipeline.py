"""
The command-line pipeline
=========================

Every step of the workflow is also a subcommand of ``python -m jr2net``.
This script chains them on a tiny dataset inside a temporary directory:
generate scenes, train briefly, simulate a measurement, reconstruct it with
a stage trace, score it and render a PNG.
"""

import os
import subprocess
import sys
import tempfile


def jr2(*args):
    cmd = [sys.executable, "-m", "jr2net", *map(str, args)]
    print("$", " ".join(cmd[2:]))
    out = subprocess.run(cmd, capture_output=True, text=True)
    print(out.stdout.strip() or out.stderr.strip())
    return out.returncode


work = tempfile.mkdtemp(prefix="jr2net_")
data = os.path.join(work, "data")

# %%
jr2("gen-data", "--n-scenes", 10, "--height", 24, "--width", 24, "--bands", 6, "--seed", 0, "--out", data)

# %%
# A run config is a flat key = value file; unknown keys are rejected up front.
cfg = os.path.join(work, "run.cfg")
with open(cfg, "w") as fh:
    fh.write(f"""# tiny smoke-test run
dataset_dir = {data}
checkpoint_dir = {work}/ck
output_dir = {work}/out
epochs = 5
batch_size = 4
patch_size = 16
patches_per_image = 2
k = 3
f = 3
hidden = 8
n_hidden = 2
prior_hidden = 8
mu_init = 0.3
""")
jr2("train", "--config", cfg, "--seed", 1)

# %%
scene = os.path.join(data, "scene_0009.csi")
jr2("simulate", scene, "--seed", 2, "--snr-db", 35, "--out", os.path.join(work, "m"))
jr2("reconstruct", os.path.join(work, "out", "model.jr2w"), os.path.join(work, "m.meas.csi"),
    "--out", os.path.join(work, "r.csi"), "--trace")
jr2("evaluate", os.path.join(work, "r.csi"), scene, "--out", os.path.join(work, "scores.csv"))
jr2("render", os.path.join(work, "r.csi"), "--out", os.path.join(work, "r.png"))

# %%
# Errors are one line and the exit status is nonzero.
bad = os.path.join(work, "bad.cfg")
with open(bad, "w") as fh:
    fh.write("epochs = -1\nlearning_rate = 1\n")
print("exit status", jr2("train", "--config", bad))
