"""Synthetic layered-tissue phantoms with weak layer labels and injected anomalies.

A phantom B-scan is a stack of horizontal-ish intensity bands delimited by
smooth boundary curves, multiplied by gamma speckle. Healthy volumes carry a
per-pixel layer LabelMap (the weak supervision target); diseased volumes carry
ground-truth anomaly masks instead. All generation is a pure function of
(config, seed).
"""

import logging
import os
import shutil
from dataclasses import dataclass, field, replace

import numpy as np

from . import pgmio

logger = logging.getLogger(__name__)

ANOMALY_KINDS = ("fluid_blob", "drusen_bump", "bright_focus")
CONDITIONS = ("healthy", "diseased")

# Minimum vertical gap between consecutive boundary curves, in pixels.
MIN_BAND_GAP = 2.0
# Boundary curves are confined to rows [BOUNDARY_MARGIN, height - 1 - BOUNDARY_MARGIN].
BOUNDARY_MARGIN = 2

# A pixel belongs to the anomaly ground truth when its intensity moved by more
# than this, or when a band boundary swept across it by more than 1 px.
MASK_INTENSITY_DELTA = 0.05
MASK_DISPLACEMENT = 1.0

PLACEMENT_RETRIES = 20


class PhantomConfigError(ValueError):
    """Raised when a phantom configuration cannot produce valid volumes."""


@dataclass(frozen=True)
class AnomalySpec:
    """One anomaly family: kind, size range (px) and per-B-scan count range.

    Size semantics per kind: fluid_blob samples both ellipse semi-axes from
    the range, drusen_bump samples the bump height, bright_focus the disk
    radius.
    """

    kind: str
    size_range: tuple[float, float]
    count_range: tuple[int, int]

    def validate(self, height: int, width: int) -> None:
        if self.kind not in ANOMALY_KINDS:
            raise PhantomConfigError(f"unknown anomaly kind {self.kind!r}")
        lo, hi = self.size_range
        if not (0 < lo <= hi):
            raise PhantomConfigError(f"{self.kind}: empty size range {self.size_range}")
        if 2 * hi >= min(height, width):
            raise PhantomConfigError(
                f"{self.kind}: max size {hi} does not fit a {height}x{width} image"
            )
        clo, chi = self.count_range
        if not (0 <= clo <= chi):
            raise PhantomConfigError(f"{self.kind}: bad count range {self.count_range}")


def default_anomaly_spec() -> tuple[AnomalySpec, ...]:
    return (
        AnomalySpec("fluid_blob", (6.0, 11.0), (1, 2)),
        AnomalySpec("drusen_bump", (3.0, 7.0), (1, 2)),
        AnomalySpec("bright_focus", (2.0, 3.0), (0, 1)),
    )


@dataclass(frozen=True)
class PhantomConfig:
    """Geometry, intensity and anomaly recipe for one phantom dataset.

    `num_layer_classes` K counts the background class 0 plus K-1 layer bands;
    K boundary curves delimit the bands. The palette holds K mean intensities
    (entry 0 = background). Image sides must be divisible by 8 so the default
    depth-4 network accepts them unchanged.
    """

    height: int = 64
    width: int = 128
    bscans_per_volume: int = 8
    num_layer_classes: int = 7
    boundary_smoothness: float | tuple[float, ...] = 5.0
    boundary_offsets: tuple[float, ...] | None = None
    layer_intensity_palette: tuple[float, ...] = (0.03, 0.58, 0.30, 0.78, 0.45, 0.85, 0.60)
    speckle_strength: float = 0.06
    anomaly_spec: tuple[AnomalySpec, ...] = field(default_factory=default_anomaly_spec)
    seed: int = 20260809

    def validate(self) -> None:
        if self.height < 16 or self.width < 16:
            raise PhantomConfigError("height and width must be >= 16")
        if self.height % 8 or self.width % 8:
            raise PhantomConfigError(
                f"height/width must be divisible by 8, got {self.height}x{self.width}"
            )
        if self.bscans_per_volume < 1:
            raise PhantomConfigError("bscans_per_volume must be >= 1")
        k = self.num_layer_classes
        if k < 2:
            raise PhantomConfigError("num_layer_classes must be >= 2")
        if len(self.layer_intensity_palette) != k:
            raise PhantomConfigError(
                f"palette must have {k} entries, got {len(self.layer_intensity_palette)}"
            )
        if any(not (0.0 <= v <= 1.0) for v in self.layer_intensity_palette):
            raise PhantomConfigError("palette values must lie in [0, 1]")
        if self.speckle_strength < 0:
            raise PhantomConfigError("speckle_strength must be >= 0")
        amp = self.smoothness_per_boundary()
        if np.any(amp < 0):
            raise PhantomConfigError("boundary_smoothness must be >= 0")
        lo, hi = BOUNDARY_MARGIN, self.height - 1 - BOUNDARY_MARGIN
        if hi - lo < MIN_BAND_GAP * (k - 1):
            raise PhantomConfigError(
                f"cannot fit {k} boundary curves with gap {MIN_BAND_GAP} in rows "
                f"[{lo}, {hi}] (height {self.height} too small for K={k})"
            )
        offs = self.offsets()
        if len(offs) != k:
            raise PhantomConfigError(f"boundary_offsets must have {k} entries")
        if np.any(np.diff(offs) < MIN_BAND_GAP):
            raise PhantomConfigError("boundary_offsets violate the minimum band gap")
        if offs[0] < lo or offs[-1] > hi:
            raise PhantomConfigError(
                f"boundary_offsets must stay within rows [{lo}, {hi}]"
            )
        for spec in self.anomaly_spec:
            spec.validate(self.height, self.width)

    def smoothness_per_boundary(self) -> np.ndarray:
        """Max vertical excursion per curve, broadcast from scalar if needed."""
        amp = np.asarray(self.boundary_smoothness, dtype=np.float64)
        if amp.ndim == 0:
            amp = np.full(self.num_layer_classes, float(amp))
        if amp.shape != (self.num_layer_classes,):
            raise PhantomConfigError(
                f"boundary_smoothness must be scalar or length {self.num_layer_classes}"
            )
        return amp

    def offsets(self) -> np.ndarray:
        """Base row of each boundary curve (evenly spaced unless configured)."""
        if self.boundary_offsets is not None:
            return np.asarray(self.boundary_offsets, dtype=np.float64)
        k = self.num_layer_classes
        amp = self.smoothness_per_boundary()
        lo = BOUNDARY_MARGIN + float(amp[0])
        hi = self.height - 1 - BOUNDARY_MARGIN - float(amp[-1])
        if hi - lo < MIN_BAND_GAP * (k - 1):
            # not enough headroom for the excursions; fall back to the hard range
            lo, hi = BOUNDARY_MARGIN, self.height - 1 - BOUNDARY_MARGIN
        return np.linspace(lo, hi, k)


@dataclass
class VolumeRecord:
    """One phantom eye: an ordered stack of B-scans plus per-condition truth."""

    volume_id: str
    condition: str
    bscans: list[np.ndarray]
    labels: list[np.ndarray] | None
    anomaly_masks: list[np.ndarray] | None
    bottom_boundary: list[np.ndarray]


# ---------------------------------------------------------------------------
# boundary curves and rendering


def generate_boundaries(config: PhantomConfig, rng: np.random.Generator) -> np.ndarray:
    """Sample K smooth boundary curves, strictly ordered top to bottom.

    Each curve is its base offset plus a random vertical shift plus up to four
    random-phase low-frequency sinusoids; the summed excursion is bounded by
    the configured smoothness. Returns a (K, width) float array.
    """
    config.validate()
    k = config.num_layer_classes
    h, w = config.height, config.width
    amp = config.smoothness_per_boundary()
    offsets = config.offsets()
    cols = np.arange(w, dtype=np.float64)
    curves = np.empty((k, w))
    for i in range(k):
        n_waves = int(rng.integers(1, 5))
        # random split of the excursion budget between offset and waves
        weights = rng.random(n_waves + 1)
        weights = weights / weights.sum() * amp[i]
        curve = np.full(w, offsets[i])
        curve += weights[0] * rng.uniform(-1.0, 1.0)
        for j in range(n_waves):
            freq = rng.uniform(0.5, 2.5)  # cycles across the scan width
            phase = rng.uniform(0.0, 2.0 * np.pi)
            curve += weights[j + 1] * np.sin(2.0 * np.pi * freq * cols / w + phase)
        curves[i] = curve
    lo, hi = float(BOUNDARY_MARGIN), float(h - 1 - BOUNDARY_MARGIN)
    np.clip(curves, lo, hi, out=curves)
    # restore strict ordering where excursions made curves collide
    for i in range(1, k):
        np.maximum(curves[i], curves[i - 1] + MIN_BAND_GAP, out=curves[i])
    if curves[-1].max() > hi:
        np.clip(curves, lo, hi, out=curves)
        for i in range(k - 2, -1, -1):
            np.minimum(curves[i], curves[i + 1] - MIN_BAND_GAP, out=curves[i])
        if curves[0].min() < lo:
            raise PhantomConfigError(
                f"{k} boundary curves with gap {MIN_BAND_GAP} do not fit in rows "
                f"[{lo}, {hi}] after applying excursions"
            )
    return curves


def labels_from_boundaries(curves: np.ndarray, height: int) -> np.ndarray:
    """Assign class k to the band between curves k-1 and k; 0 outside."""
    k = curves.shape[0]
    rows = np.arange(height, dtype=np.float64)[None, :, None]
    # count how many boundaries lie at or above each pixel row
    band = (curves[:, None, :] <= rows).sum(axis=0)
    band[band >= k] = 0  # below the last boundary is background again
    return band.astype(np.uint8)


def _speckle(config: PhantomConfig, rng: np.random.Generator, shape) -> np.ndarray:
    """Multiplicative gamma noise with mean 1 and variance speckle_strength^2."""
    s = config.speckle_strength
    if s == 0:
        return np.ones(shape)
    shape_k = 1.0 / (s * s)
    return rng.gamma(shape_k, scale=s * s, size=shape)


def render_bscan(boundaries: np.ndarray, config: PhantomConfig, rng: np.random.Generator):
    """Fill each band with its palette intensity times speckle, clamp to [0,1].

    Returns (bscan float64 (H, W) in [0,1], labels uint8 (H, W)).
    """
    labels = labels_from_boundaries(boundaries, config.height)
    palette = np.asarray(config.layer_intensity_palette)
    img = palette[labels] * _speckle(config, rng, labels.shape)
    np.clip(img, 0.0, 1.0, out=img)
    return img, labels


# ---------------------------------------------------------------------------
# anomaly injection


def _integer_boundaries(labels: np.ndarray, k: int) -> np.ndarray:
    """Recover per-column band-top rows (plus the final bottom) from labels."""
    h, w = labels.shape
    curves = np.zeros((k, w), dtype=np.int64)
    rows = np.arange(h)[:, None]
    for cls in range(1, k):
        inside = labels == cls
        curves[cls - 1] = np.where(inside, rows, h).min(axis=0)
    last = labels == (k - 1)
    curves[k - 1] = np.where(last, rows, -1).max(axis=0) + 1
    return curves


@dataclass
class InjectionResult:
    bscan: np.ndarray
    mask: np.ndarray
    skipped: int


def inject_anomalies(
    bscan: np.ndarray,
    labels: np.ndarray,
    config: PhantomConfig,
    rng: np.random.Generator,
    anomaly_spec: tuple[AnomalySpec, ...] | None = None,
) -> InjectionResult:
    """Add sampled anomalies to a healthy (bscan, labels) pair.

    fluid_blob paints a dark ellipse inside the layered region and lifts the
    boundaries above it proportionally to the local blob thickness;
    drusen_bump locally elevates the top of the bottom band; bright_focus
    paints a small bright disk. The returned mask marks pixels whose intensity
    moved by more than 0.05 or that were swept by a boundary displaced by more
    than 1 px. Placements that do not fit are re-sampled up to 20 times, then
    skipped (counted in `skipped`).
    """
    spec = config.anomaly_spec if anomaly_spec is None else anomaly_spec
    k = config.num_layer_classes
    h, w = labels.shape
    old_img = np.asarray(bscan, dtype=np.float64)
    old_curves = _integer_boundaries(labels, k).astype(np.float64)
    curves = old_curves.copy()
    paint = np.full((h, w), np.nan)  # blob intensities, applied after repaint
    skipped = 0

    for family in spec:
        count = int(rng.integers(family.count_range[0], family.count_range[1] + 1))
        for _ in range(count):
            ok = False
            for _attempt in range(PLACEMENT_RETRIES):
                if family.kind == "fluid_blob":
                    ok = _try_fluid_blob(curves, paint, family, w, rng)
                elif family.kind == "drusen_bump":
                    ok = _try_drusen_bump(curves, family, w, rng)
                else:
                    ok = _try_bright_focus(curves, paint, family, w, rng)
                if ok:
                    break
            if not ok:
                skipped += 1
                logger.warning("could not place %s after %d tries", family.kind, PLACEMENT_RETRIES)

    # boundaries stay ordered and in range after displacement
    np.clip(curves, float(BOUNDARY_MARGIN), float(h - 1 - BOUNDARY_MARGIN), out=curves)
    for i in range(k - 2, -1, -1):
        np.minimum(curves[i], curves[i + 1], out=curves[i])

    new_labels = labels_from_boundaries(curves, h)
    img = old_img.copy()
    changed = new_labels != labels
    if changed.any():
        palette = np.asarray(config.layer_intensity_palette)
        fresh = palette[new_labels[changed]] * _speckle(config, rng, int(changed.sum()))
        img[changed] = np.clip(fresh, 0.0, 1.0)
    blob = ~np.isnan(paint)
    img[blob] = paint[blob]

    mask = np.abs(img - old_img) > MASK_INTENSITY_DELTA
    disp = np.abs(curves - old_curves)
    rows = np.arange(h)[:, None]
    for i in range(k):
        moved = disp[i] > MASK_DISPLACEMENT
        if not moved.any():
            continue
        top = np.minimum(curves[i], old_curves[i])
        bot = np.maximum(curves[i], old_curves[i])
        swept = (rows >= np.ceil(top)[None, :]) & (rows < np.ceil(bot)[None, :])
        mask |= swept & moved[None, :]
    return InjectionResult(img, mask.astype(np.uint8), skipped)


def _try_fluid_blob(curves, paint, family: AnomalySpec, width, rng) -> bool:
    lo, hi = family.size_range
    a = rng.uniform(lo, hi)  # horizontal semi-axis
    b = rng.uniform(lo, hi)  # vertical semi-axis
    cx = rng.uniform(a + 1, width - a - 2)
    top_env, bot_env = curves[0], curves[-1]
    span = slice(max(0, int(np.floor(cx - a))), min(width, int(np.ceil(cx + a)) + 1))
    row_lo = top_env[span].max() + b + 2
    row_hi = bot_env[span].min() - b - 2
    if row_hi <= row_lo:
        return False
    cy = rng.uniform(row_lo, row_hi)
    intensity = rng.uniform(0.05, 0.15)

    cols = np.arange(width, dtype=np.float64)
    inside_cols = np.abs(cols - cx) <= a
    half_h = np.zeros(width)
    half_h[inside_cols] = b * np.sqrt(1.0 - ((cols[inside_cols] - cx) / a) ** 2)

    h = paint.shape[0]
    rr = np.arange(h, dtype=np.float64)[:, None]
    cc = cols[None, :]
    ellipse = ((rr - cy) / b) ** 2 + ((cc - cx) / a) ** 2 <= 1.0
    texture = rng.gamma(1.0 / 0.06**2, scale=0.06**2, size=int(ellipse.sum()))
    paint[ellipse] = np.clip(intensity * texture, 0.0, 0.2)

    # lift every boundary above the blob in proportion to its local thickness
    lift = np.rint(0.3 * half_h)
    e_top = cy - half_h
    for i in range(curves.shape[0]):
        above = inside_cols & (curves[i] < e_top)
        curves[i][above] -= lift[above]
    return True


def _try_drusen_bump(curves, family: AnomalySpec, width, rng) -> bool:
    lo, hi = family.size_range
    height = rng.uniform(lo, hi)
    half_width = height * rng.uniform(1.5, 3.0)
    if 2 * half_width >= width - 4:
        return False
    cx = rng.uniform(half_width + 1, width - half_width - 2)
    top_idx = curves.shape[0] - 2  # top boundary of the bottom band
    cols = np.arange(width, dtype=np.float64)
    inside = np.abs(cols - cx) <= half_width
    bump = np.zeros(width)
    bump[inside] = np.rint(0.5 * height * (1.0 + np.cos(np.pi * (cols[inside] - cx) / half_width)))
    # keep at least one row of every band above the bump crest
    limit = curves[0] + (top_idx)  # row budget: one px per higher boundary
    new_top = np.maximum(curves[top_idx] - bump, limit)
    if np.all(new_top >= curves[top_idx]):
        return False
    curves[top_idx] = np.minimum(curves[top_idx], new_top)
    return True


def _try_bright_focus(curves, paint, family: AnomalySpec, width, rng) -> bool:
    lo, hi = family.size_range
    radius = rng.uniform(lo, hi)
    cx = rng.uniform(radius + 1, width - radius - 2)
    span = slice(max(0, int(np.floor(cx - radius))), min(width, int(np.ceil(cx + radius)) + 1))
    row_lo = curves[0][span].max() + radius + 1
    row_hi = curves[-1][span].min() - radius - 1
    if row_hi <= row_lo:
        return False
    cy = rng.uniform(row_lo, row_hi)
    intensity = rng.uniform(0.9, 1.0)
    h = paint.shape[0]
    rr = np.arange(h, dtype=np.float64)[:, None]
    cc = np.arange(width, dtype=np.float64)[None, :]
    disk = (rr - cy) ** 2 + (cc - cx) ** 2 <= radius**2
    paint[disk] = intensity
    return True


# ---------------------------------------------------------------------------
# volumes and datasets


def generate_volume(
    config: PhantomConfig, volume_id: str, condition: str, seed
) -> VolumeRecord:
    """Generate one volume; `seed` may be an int or a SeedSequence."""
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(2 * config.bscans_per_volume)
    bscans, labels, masks, bottoms = [], [], [], []
    for i in range(config.bscans_per_volume):
        render_rng = np.random.default_rng(children[2 * i])
        curves = generate_boundaries(config, render_rng)
        img, lab = render_bscan(curves, config, render_rng)
        bottom = np.rint(curves[-1]).astype(np.int64)
        np.clip(bottom, 1, config.height - 2, out=bottom)
        bottoms.append(bottom)
        if condition == "diseased":
            inject_rng = np.random.default_rng(children[2 * i + 1])
            result = inject_anomalies(img, lab, config, inject_rng)
            bscans.append(result.bscan)
            masks.append(result.mask)
        else:
            bscans.append(img)
            labels.append(lab)
    return VolumeRecord(
        volume_id=volume_id,
        condition=condition,
        bscans=bscans,
        labels=labels if condition == "healthy" else None,
        anomaly_masks=masks if condition == "diseased" else None,
        bottom_boundary=bottoms,
    )


SPLIT_PLAN = (
    ("train_healthy", "train", "healthy"),
    ("val_healthy", "val", "healthy"),
    ("val_diseased", "val", "diseased"),
    ("test_diseased", "test", "diseased"),
    ("test_healthy", "test", "healthy"),
)


def generate_dataset(config: PhantomConfig, counts: dict, root, seed: int | None = None) -> dict:
    """Write a phantom dataset under `root` and return its manifest.

    `counts` maps the five group names (train_healthy, val_healthy,
    val_diseased, test_diseased, test_healthy) to volume counts. Per-volume
    seeds are spawned from the master seed, so the dataset is byte-identical
    across runs. Partially written volumes are removed on failure.
    """
    config.validate()
    for key, _, _ in SPLIT_PLAN:
        if key not in counts:
            raise ValueError(f"counts missing {key!r}")
        minimum = 0 if key == "test_healthy" else 1
        if counts[key] < minimum:
            raise ValueError(f"counts[{key!r}] must be >= {minimum}")
    master = config.seed if seed is None else seed
    total = sum(int(counts[key]) for key, _, _ in SPLIT_PLAN)
    ss = np.random.SeedSequence(master)
    children = ss.spawn(total)

    root = os.fspath(root)
    os.makedirs(root, exist_ok=True)
    written_dirs = []
    entries = []
    try:
        idx = 0
        for key, split, condition in SPLIT_PLAN:
            for j in range(int(counts[key])):
                volume_id = f"{key}_{j:03d}"
                record = generate_volume(config, volume_id, condition, children[idx])
                vdir = os.path.join(root, volume_id)
                os.makedirs(vdir, exist_ok=True)
                written_dirs.append(vdir)
                _write_volume(vdir, record)
                entries.append(
                    {
                        "volume_id": volume_id,
                        "split": split,
                        "condition": condition,
                        "seed_spawn_index": idx,
                        "bscans": config.bscans_per_volume,
                    }
                )
                idx += 1
        manifest = {
            "master_seed": int(master),
            "counts": {key: int(counts[key]) for key, _, _ in SPLIT_PLAN},
            "config": config_to_dict(config),
            "volumes": entries,
        }
        pgmio.write_json(os.path.join(root, "manifest.json"), manifest)
    except BaseException:
        for d in written_dirs:
            shutil.rmtree(d, ignore_errors=True)
        manifest_path = os.path.join(root, "manifest.json")
        if os.path.exists(manifest_path):
            os.unlink(manifest_path)
        raise
    return manifest


def _write_volume(vdir: str, record: VolumeRecord) -> None:
    for i, img in enumerate(record.bscans):
        pgmio.write_pgm(os.path.join(vdir, f"bscan_{i}.pgm"), np.rint(img * 255.0))
        bottom = record.bottom_boundary[i]
        pgmio.write_text(
            os.path.join(vdir, f"bottom_{i}.csv"),
            ",".join(str(int(v)) for v in bottom) + "\n",
        )
        if record.labels is not None:
            pgmio.write_pgm(os.path.join(vdir, f"label_{i}.pgm"), record.labels[i])
        if record.anomaly_masks is not None:
            pgmio.write_pgm(
                os.path.join(vdir, f"anomaly_{i}.pgm"), record.anomaly_masks[i] * 255
            )


def config_to_dict(config: PhantomConfig) -> dict:
    return {
        "height": config.height,
        "width": config.width,
        "bscans_per_volume": config.bscans_per_volume,
        "num_layer_classes": config.num_layer_classes,
        "boundary_smoothness": (
            list(config.boundary_smoothness)
            if isinstance(config.boundary_smoothness, tuple)
            else config.boundary_smoothness
        ),
        "boundary_offsets": (
            None if config.boundary_offsets is None else list(config.boundary_offsets)
        ),
        "layer_intensity_palette": list(config.layer_intensity_palette),
        "speckle_strength": config.speckle_strength,
        "anomaly_spec": [
            {
                "kind": s.kind,
                "size_range": list(s.size_range),
                "count_range": list(s.count_range),
            }
            for s in config.anomaly_spec
        ],
        "seed": config.seed,
    }


def config_from_dict(data: dict) -> PhantomConfig:
    data = dict(data)
    if "anomaly_spec" in data:
        data["anomaly_spec"] = tuple(
            AnomalySpec(
                kind=s["kind"],
                size_range=tuple(s["size_range"]),
                count_range=tuple(int(c) for c in s["count_range"]),
            )
            for s in data["anomaly_spec"]
        )
    for key in ("layer_intensity_palette", "boundary_offsets"):
        if data.get(key) is not None:
            data[key] = tuple(data[key])
    if isinstance(data.get("boundary_smoothness"), list):
        data["boundary_smoothness"] = tuple(data["boundary_smoothness"])
    cfg = PhantomConfig(**data)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# reading datasets back


def load_manifest(root) -> dict:
    import json

    path = os.path.join(os.fspath(root), "manifest.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no manifest.json under {root}")
    with open(path) as fh:
        return json.load(fh)


def load_volume(root, entry: dict) -> VolumeRecord:
    """Read one volume back from disk given its manifest entry."""
    vdir = os.path.join(os.fspath(root), entry["volume_id"])
    n = int(entry["bscans"])
    condition = entry["condition"]
    bscans, labels, masks, bottoms = [], [], [], []
    for i in range(n):
        bscans.append(pgmio.read_pgm(os.path.join(vdir, f"bscan_{i}.pgm")) / 255.0)
        with open(os.path.join(vdir, f"bottom_{i}.csv")) as fh:
            bottoms.append(np.array([int(v) for v in fh.read().strip().split(",")]))
        if condition == "healthy":
            labels.append(pgmio.read_pgm(os.path.join(vdir, f"label_{i}.pgm")))
        else:
            masks.append((pgmio.read_pgm(os.path.join(vdir, f"anomaly_{i}.pgm")) > 0).astype(np.uint8))
    return VolumeRecord(
        volume_id=entry["volume_id"],
        condition=condition,
        bscans=bscans,
        labels=labels if condition == "healthy" else None,
        anomaly_masks=masks if condition == "diseased" else None,
        bottom_boundary=bottoms,
    )


def volumes_in_split(manifest: dict, split: str, condition: str | None = None) -> list[dict]:
    out = []
    for entry in manifest["volumes"]:
        if entry["split"] != split:
            continue
        if condition is not None and entry["condition"] != condition:
            continue
        out.append(entry)
    return out
