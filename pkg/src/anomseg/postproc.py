"""Turn an uncertainty map into a compact binary anomaly segmentation.

The full chain is threshold -> small-component removal -> iterated
majority-ray-casting -> morphological closing/opening, optionally wrapped in
a per-column flattening of the scan so the tissue is horizontal. Ablation
variants (thresholding only, convex hull instead of ray casting, no
morphology) share the same entry point.

Majority ray casting: every background pixel sends one ray to each cardinal
direction; a ray scores a vote when any foreground pixel lies on it before
the image border. Background pixels collecting at least v votes are set, and
the process repeats with the next vote threshold on the updated mask.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .uncertainty import UncertaintyMap

VARIANTS = ("full", "thresholding_only", "convex_hull", "no_morphology")

_STRUCTURE_8 = np.ones((3, 3), dtype=bool)
_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class PostprocParams:
    threshold: float = 0.10
    min_component_area: int = 10
    vote_thresholds: tuple[int, ...] = (3, 4)
    closing_radius: int = 4
    opening_radius: int = 2
    connectivity: int = 8
    flatten: bool = False
    variant: str = "full"

    def validate(self) -> None:
        if self.threshold <= 0:
            raise ValueError("threshold must be > 0")
        if self.min_component_area < 0:
            raise ValueError("min_component_area must be >= 0")
        if not self.vote_thresholds:
            raise ValueError("vote_thresholds must be nonempty")
        if any(v not in (1, 2, 3, 4) for v in self.vote_thresholds):
            raise ValueError("vote thresholds must lie in {1, 2, 3, 4}")
        if self.closing_radius < 0 or self.opening_radius < 0:
            raise ValueError("morphology radii must be >= 0")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")


def _as_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {m.shape}")
    return m != 0


def threshold(u, t: float) -> np.ndarray:
    """Binarize: 1 where u >= t."""
    if t <= 0:
        raise ValueError("threshold must be > 0")
    values = u.values if isinstance(u, UncertaintyMap) else np.asarray(u)
    return (values >= t).astype(np.uint8)


def remove_small_components(mask, min_area: int, connectivity: int = 8) -> np.ndarray:
    """Delete connected components with pixel count < min_area."""
    m = _as_mask(mask)
    if min_area <= 0 or not m.any():
        return m.astype(np.uint8)
    structure = _STRUCTURE_8 if connectivity == 8 else _STRUCTURE_4
    labels, n = ndimage.label(m, structure=structure)
    if n == 0:
        return m.astype(np.uint8)
    counts = np.bincount(labels.ravel(), minlength=n + 1)
    keep = counts >= min_area
    keep[0] = False
    return keep[labels].astype(np.uint8)


def cast_votes(mask) -> np.ndarray:
    """Count, per background pixel, the cardinal directions holding a 1.

    Implemented with four exclusive prefix/suffix OR scans, O(rows*cols).
    Foreground pixels get the conventional value 4 (they are never consulted).
    """
    m = _as_mask(mask)
    acc = np.logical_or.accumulate
    left = np.zeros_like(m)
    left[:, 1:] = acc(m, axis=1)[:, :-1]
    right = np.zeros_like(m)
    right[:, :-1] = acc(m[:, ::-1], axis=1)[:, ::-1][:, 1:]
    up = np.zeros_like(m)
    up[1:, :] = acc(m, axis=0)[:-1, :]
    down = np.zeros_like(m)
    down[:-1, :] = acc(m[::-1, :], axis=0)[::-1, :][1:, :]
    votes = (
        left.astype(np.uint8) + right.astype(np.uint8)
        + up.astype(np.uint8) + down.astype(np.uint8)
    )
    votes[m] = 4
    return votes


def majority_ray_cast(mask, vote_thresholds) -> np.ndarray:
    """Iteratively set background pixels whose vote count reaches v^(j).

    Votes are recomputed from the updated mask before each iteration. The
    output always contains the input (set pixels are never cleared).
    """
    if not len(vote_thresholds):
        raise ValueError("vote_thresholds must be nonempty")
    m = _as_mask(mask)
    for v in vote_thresholds:
        votes = cast_votes(m)
        m = m | (votes >= v)
    return m.astype(np.uint8)


def disk_offsets(radius: int) -> np.ndarray:
    """Pixel offsets of the rasterized Euclidean disk {dy^2 + dx^2 <= r^2}."""
    r = int(radius)
    span = np.arange(-r, r + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    inside = dy * dy + dx * dx <= r * r
    return np.stack([dy[inside], dx[inside]], axis=1)


def _shift(mask: np.ndarray, dy: int, dx: int, fill: bool) -> np.ndarray:
    """Shift with constant fill; out-of-canvas area takes `fill`."""
    h, w = mask.shape
    out = np.full((h, w), fill, dtype=bool)
    ys = slice(max(dy, 0), min(h + dy, h))
    xs = slice(max(dx, 0), min(w + dx, w))
    ys_src = slice(max(-dy, 0), min(h - dy, h))
    xs_src = slice(max(-dx, 0), min(w - dx, w))
    out[ys, xs] = mask[ys_src, xs_src]
    return out


def dilate(mask, radius: int) -> np.ndarray:
    """Binary dilation by a disk; the border is treated as background."""
    m = _as_mask(mask)
    if radius <= 0:
        return m.astype(np.uint8)
    out = np.zeros_like(m)
    for dy, dx in disk_offsets(radius):
        out |= _shift(m, dy, dx, fill=False)
    return out.astype(np.uint8)


def erode(mask, radius: int) -> np.ndarray:
    """Binary erosion by a disk; outside the canvas counts as background."""
    m = _as_mask(mask)
    if radius <= 0:
        return m.astype(np.uint8)
    out = np.ones_like(m)
    for dy, dx in disk_offsets(radius):
        out &= _shift(m, dy, dx, fill=False)
    return out.astype(np.uint8)


def close_open(mask, closing_radius: int, opening_radius: int) -> np.ndarray:
    """Morphological closing then opening with disk structuring elements."""
    m = erode(dilate(mask, closing_radius), closing_radius)
    return dilate(erode(m, opening_radius), opening_radius)


def flatten_maps(arrays, bottom_boundary):
    """Shift each column so the bottom boundary lands on its median row.

    `arrays` is a list of 2-D maps sharing the column geometry. Vacated pixels
    are zero-filled, no wraparound. Returns (shifted arrays, shifts) where
    shifts[c] is the signed row displacement applied to column c.
    """
    bottom = np.asarray(bottom_boundary, dtype=np.int64)
    target = int(np.rint(np.median(bottom)))
    shifts = target - bottom
    return [_shift_columns(np.asarray(a), shifts) for a in arrays], shifts


def unflatten_mask(mask, shifts) -> np.ndarray:
    """Invert flatten_maps column shifts (exact for in-canvas support)."""
    return _shift_columns(np.asarray(mask), -np.asarray(shifts)).astype(np.uint8)


def _shift_columns(arr: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    h, w = arr.shape
    if arr.shape[1] != shifts.shape[0]:
        raise ValueError("one shift per column required")
    out = np.zeros_like(arr)
    for c in range(w):
        s = int(shifts[c])
        if s == 0:
            out[:, c] = arr[:, c]
        elif s > 0:
            out[s:, c] = arr[: h - s, c]
        else:
            out[:h + s, c] = arr[-s:, c]
    return out


def convex_hull_mask(mask) -> np.ndarray:
    """Filled pixel rasterization of the convex hull of all foreground pixels.

    Integer cross products only, so the inside-or-on-boundary test is exact
    and the operation is idempotent.
    """
    m = _as_mask(mask)
    pts = np.argwhere(m)  # (row, col)
    if pts.shape[0] == 0:
        return m.astype(np.uint8)
    hull = _convex_hull(pts)
    r0, c0 = pts.min(axis=0)
    r1, c1 = pts.max(axis=0)
    rows = np.arange(r0, r1 + 1)
    cols = np.arange(c0, c1 + 1)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    inside = np.ones(rr.shape, dtype=bool)
    n = len(hull)
    for i in range(n):
        ay, ax = hull[i]
        by, bx = hull[(i + 1) % n]
        cross = (bx - ax) * (rr - ay) - (by - ay) * (cc - ax)
        inside &= cross >= 0
    out = np.zeros_like(m)
    out[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1] = inside
    return out.astype(np.uint8)


def _convex_hull(pts: np.ndarray) -> list[tuple[int, int]]:
    """Monotone chain; returns counterclockwise hull vertices as (row, col).

    Degenerate inputs (single point, collinear set) return the 1- or 2-point
    chain, which the rasterizer handles via the cross == 0 boundary case.
    """
    pts = np.unique(pts, axis=0)
    points = [tuple(int(v) for v in p) for p in pts]
    if len(points) <= 2:
        return points

    def cross(o, a, b):
        return (a[1] - o[1]) * (b[0] - o[0]) - (a[0] - o[0]) * (b[1] - o[1])

    lower: list = []
    for p in points:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(points):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:  # all points collinear
        return [points[0], points[-1]]
    return hull


def pipeline(u, params: PostprocParams, bottom_boundary=None) -> np.ndarray:
    """Run the configured post-processing variant on one uncertainty map."""
    params.validate()
    values = u.values if isinstance(u, UncertaintyMap) else np.asarray(u)
    shifts = None
    if params.flatten:
        if bottom_boundary is None:
            raise ValueError("flatten=True requires the bottom boundary")
        (values,), shifts = flatten_maps([values], bottom_boundary)
    mask = threshold(values, params.threshold)
    if params.variant != "thresholding_only":
        mask = remove_small_components(mask, params.min_component_area, params.connectivity)
        if params.variant == "convex_hull":
            mask = convex_hull_mask(mask)
        else:
            mask = majority_ray_cast(mask, params.vote_thresholds)
        if params.variant in ("full", "convex_hull"):
            mask = close_open(mask, params.closing_radius, params.opening_radius)
    if shifts is not None:
        mask = unflatten_mask(mask, shifts)
    return mask.astype(np.uint8)
