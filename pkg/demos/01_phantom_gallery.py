"""Generate a few phantom B-scans and save them as PGM images.

Walks through the three ingredients of the synthetic data: smooth layer
boundaries, speckled band rendering, and anomaly injection with its exact
ground-truth mask. Outputs land in demos/out/phantom/.
"""

import os

import numpy as np

from anomseg import pgmio, phantom

out_dir = os.path.join(os.path.dirname(__file__), "out", "phantom")
os.makedirs(out_dir, exist_ok=True)

config = phantom.PhantomConfig()
rng = np.random.default_rng(config.seed)

# 1. boundaries are sums of a few low-frequency sinusoids, kept ordered
curves = phantom.generate_boundaries(config, rng)
print("boundary rows at column 0:", np.round(curves[:, 0], 1))

# 2. bands filled with palette intensities times gamma speckle
bscan, labels = phantom.render_bscan(curves, config, rng)
pgmio.write_pgm(os.path.join(out_dir, "healthy.pgm"), np.rint(bscan * 255))
pgmio.write_pgm(os.path.join(out_dir, "labels.pgm"),
                np.rint(labels * (255 / labels.max())))

# 3. anomalies: dark fluid blobs, drusen-like bumps, bright foci; the mask
#    records exactly the pixels the injection altered
result = phantom.inject_anomalies(bscan, labels, config, np.random.default_rng(7))
pgmio.write_pgm(os.path.join(out_dir, "diseased.pgm"), np.rint(result.bscan * 255))
pgmio.write_pgm(os.path.join(out_dir, "anomaly_mask.pgm"), result.mask * 255)
print(f"injected anomalies cover {result.mask.sum()} px "
      f"({100 * result.mask.mean():.1f}% of the scan)")

# a whole mini dataset on disk, byte-reproducible from (config, seed)
counts = {"train_healthy": 2, "val_healthy": 1, "val_diseased": 1,
          "test_diseased": 1, "test_healthy": 1}
manifest = phantom.generate_dataset(config, counts, os.path.join(out_dir, "dataset"))
print(f"dataset: {len(manifest['volumes'])} volumes -> {out_dir}/dataset")
