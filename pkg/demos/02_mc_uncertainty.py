"""Train a small network briefly, then visualize dropout-sampling uncertainty.

Shows the core quantity of the pipeline: the per-pixel variance of class
probabilities across stochastic forward passes, which lights up where the
model is unsure (anomalies, tissue interfaces). Scaled down to finish in a
couple of minutes; outputs land in demos/out/uncertainty/.
"""

import os

import numpy as np

from anomseg import pgmio, phantom, uncertainty
from anomseg.segnet import NetworkConfig, TrainConfig, mc_sample, train

out_dir = os.path.join(os.path.dirname(__file__), "out", "uncertainty")
os.makedirs(out_dir, exist_ok=True)

pconf = phantom.PhantomConfig(bscans_per_volume=4)
train_pairs, val_pairs = [], []
for i in range(6):
    vol = phantom.generate_volume(pconf, f"train{i}", "healthy", 100 + i)
    train_pairs += list(zip(vol.bscans, vol.labels))
for i in range(2):
    vol = phantom.generate_volume(pconf, f"val{i}", "healthy", 200 + i)
    val_pairs += list(zip(vol.bscans, vol.labels))

net = NetworkConfig(dropout_rate=0.1)
result = train(train_pairs, val_pairs, net,
               TrainConfig(epochs=8, learning_rate=1e-3, seed=3), progress=True)
print(f"selected epoch {result.best_epoch}, validation layer dice "
      f"{result.best_val_dice:.3f}")

diseased = phantom.generate_volume(pconf, "sick", "diseased", 300)
scan = diseased.bscans[0]
stack = mc_sample(result.weights, net, scan, n=32, seed=17)
umap = uncertainty.uncertainty_map(stack)
print(f"uncertainty: median {np.median(umap.values):.4f}, "
      f"max {umap.values.max():.4f}")

pgmio.write_pgm(os.path.join(out_dir, "scan.pgm"), np.rint(scan * 255))
pgmio.write_pgm(os.path.join(out_dir, "gt_mask.pgm"), diseased.anomaly_masks[0] * 255)
scaled = umap.values / max(umap.values.max(), 1e-9)
pgmio.write_pgm(os.path.join(out_dir, "uncertainty.pgm"), np.rint(scaled * 255))
uncertainty.save_map(os.path.join(out_dir, "u_0.f32"), umap)
print(f"wrote scan / ground truth / uncertainty images to {out_dir}")
