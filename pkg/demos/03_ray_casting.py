"""Majority-ray-casting on a hand-built mask, step by step.

No training involved: starts from a synthetic thresholded map with a
blob-shaped ring plus salt noise, and walks the post-processing stages so
each one's effect is visible as pixel counts and saved images.
"""

import os

import numpy as np

from anomseg import pgmio, postproc

out_dir = os.path.join(os.path.dirname(__file__), "out", "raycast")
os.makedirs(out_dir, exist_ok=True)

rng = np.random.default_rng(5)
mask = np.zeros((64, 96), np.uint8)
yy, xx = np.mgrid[0:64, 0:96]
ring = (((yy - 30) / 14.0) ** 2 + ((xx - 40) / 20.0) ** 2 <= 1.0) & (
    ((yy - 30) / 10.0) ** 2 + ((xx - 40) / 15.0) ** 2 >= 1.0
)
mask[ring] = 1                                # uncertain ring around a blob
mask |= (rng.random(mask.shape) < 0.01)       # spurious salt detections
pgmio.write_pgm(os.path.join(out_dir, "0_thresholded.pgm"), mask * 255)
print("thresholded:", mask.sum(), "px")

cleaned = postproc.remove_small_components(mask, 10)
pgmio.write_pgm(os.path.join(out_dir, "1_cleaned.pgm"), cleaned * 255)
print("small components removed:", cleaned.sum(), "px")

votes = postproc.cast_votes(cleaned)
pgmio.write_pgm(os.path.join(out_dir, "2_votes.pgm"), votes * 63)
print("vote histogram:", np.bincount(votes.ravel(), minlength=5).tolist())

filled = postproc.majority_ray_cast(cleaned, (3, 4))
pgmio.write_pgm(os.path.join(out_dir, "3_filled.pgm"), filled * 255)
print("after two voting iterations:", filled.sum(), "px (ring interior filled)")

final = postproc.close_open(filled, 4, 2)
pgmio.write_pgm(os.path.join(out_dir, "4_final.pgm"), final * 255)
print("after closing/opening:", final.sum(), "px")

hull = postproc.convex_hull_mask(cleaned)
pgmio.write_pgm(os.path.join(out_dir, "5_convex_hull_variant.pgm"), hull * 255)
print("convex-hull variant for comparison:", hull.sum(), "px")
print("outputs in", out_dir)
