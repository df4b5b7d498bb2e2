"""
Fitting a task the model has never seen
=======================================

After training, the general model maps a task latent u to a whole manifold.
A new task with only a handful of samples is fitted by searching for its u
(and the sample latents z) instead of learning a fresh manifold.  We then walk
u across the cube to show how the generated shape changes.

Run ``python demos/new_task.py``.
"""

import argparse
from pathlib import Path

import numpy as np

from mtksmm import mt_ksmm as mt
from mtksmm.datasets import gen_saddle, saddle_map
from mtksmm.numerics import Schedule, latent_grid
from mtksmm.svg import scatter_plot

parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
parser.add_argument("--out", default="demo_out", help="directory for the SVG")
args = parser.parse_args()

pool = gen_saddle(121, 3, sigma=0.05, seed=1)
train = mt.MultiTaskDataset(pool.X[:360], pool.task_of[:360], 120)
cfg = mt.MTConfig(schedule=Schedule(total_iters=60))
model, state, _ = mt.train(train, cfg, seed=0)

# the held-out task: three samples only
new_X = pool.X[360:]
u_true = pool.true_u[120, 0]
u_hat, Z_hat = mt.fit_new_task(new_X, model, rounds=5)
err = mt.new_task_objective(new_X, model, u_hat, Z_hat)
print(f"new task: true u {u_true:+.3f}, fitted task latent {u_hat[0]:+.3f}, "
      f"objective {err:.4f}")

# learned latents have their own orientation, so compare surfaces by distance:
# each point of the true surface against a dense sampling of the fitted one
dense = latent_grid(2, 60)
fitted = mt.general_decode(model, dense, np.repeat(u_hat[None], len(dense), 0))
truth = saddle_map(latent_grid(2, 15), u_true)
gap = np.sqrt(((truth[:, None, :] - fitted[None]) ** 2).sum(-1).min(1))
print(f"RMS distance from the true surface to the fitted one: {np.sqrt(np.mean(gap**2)):.3f}")

# sweep the task latent: the height offset of the saddle moves with u
out = Path(args.out)
out.mkdir(exist_ok=True)
z_line = np.c_[np.linspace(-1, 1, 40), np.zeros(40)]
groups = {}
for u in (-0.8, 0.0, 0.8):
    x = mt.general_decode(model, z_line, np.full((40, 1), u))
    groups[f"u = {u:+.1f}"] = x[:, [0, 2]]
(out / "task_sweep.svg").write_text(
    scatter_plot(groups, "generated slices while changing the task latent", "x_1", "x_3"))
print(f"wrote {out / 'task_sweep.svg'}")
