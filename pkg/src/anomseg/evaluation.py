"""Pixel-, lesion- and volume-level evaluation of anomaly segmentations.

Pixel counts are pooled per volume, metrics computed per volume, then
averaged across volumes (mean and standard deviation). A lesion is an
8-connected component within one B-scan; lesion-detection recall/precision
curves sweep the per-lesion Dice requirement d.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.stats import rankdata

_STRUCTURE_8 = np.ones((3, 3), dtype=bool)


@dataclass
class PixelMetrics:
    precision: float
    recall: float
    dice: float
    tp: int
    fp: int
    fn: int
    empty_pair: bool = False


@dataclass
class LesionCurve:
    d_grid: np.ndarray
    ld_recall: np.ndarray
    ld_precision: np.ndarray
    tp_recall: np.ndarray
    fn: np.ndarray
    tp_precision: np.ndarray
    fp: np.ndarray
    n_scans_used: int = 0


@dataclass
class VolumeScore:
    volume_id: str
    condition: str
    mean_anomalous_pixels: float
    uncertainty_sum: float


def pixel_metrics(pred_masks, gt_masks) -> PixelMetrics:
    """Pooled tp/fp/fn over a stack of B-scans (typically one volume).

    An empty ground truth with an empty prediction scores 1.0 by convention
    and is flagged via empty_pair.
    """
    tp = fp = fn = 0
    for pred, gt in zip(pred_masks, gt_masks, strict=True):
        p = np.asarray(pred) != 0
        g = np.asarray(gt) != 0
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        tp += int((p & g).sum())
        fp += int((p & ~g).sum())
        fn += int((~p & g).sum())
    if tp == fp == fn == 0:
        return PixelMetrics(1.0, 1.0, 1.0, 0, 0, 0, empty_pair=True)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    dice = 2 * tp / (2 * tp + fp + fn)
    return PixelMetrics(precision, recall, dice, tp, fp, fn)


def summarize(per_volume: list[PixelMetrics]) -> dict:
    """Across-volume mean and standard deviation of each pixel metric."""
    out = {}
    for field in ("precision", "recall", "dice"):
        values = np.array([getattr(m, field) for m in per_volume], dtype=np.float64)
        out[f"{field}_mean"] = float(values.mean())
        out[f"{field}_sd"] = float(values.std())
    out["n_volumes"] = len(per_volume)
    out["n_empty_pairs"] = sum(m.empty_pair for m in per_volume)
    return out


def _lesion_dice_values(own_mask: np.ndarray, other_mask: np.ndarray) -> list[float]:
    """Dice of every 8-connected lesion in own_mask vs the union of the
    other mask's components that intersect it."""
    own_lab, n_own = ndimage.label(own_mask, structure=_STRUCTURE_8)
    if n_own == 0:
        return []
    other_lab, _ = ndimage.label(other_mask, structure=_STRUCTURE_8)
    other_sizes = np.bincount(other_lab.ravel())
    dices = []
    for i in range(1, n_own + 1):
        lesion = own_lab == i
        own_size = int(lesion.sum())
        hit_ids = np.unique(other_lab[lesion])
        hit_ids = hit_ids[hit_ids > 0]
        if hit_ids.size == 0:
            dices.append(0.0)
            continue
        union_size = int(other_sizes[hit_ids].sum())
        overlap = int((other_lab[lesion] > 0).sum())
        dices.append(2.0 * overlap / (own_size + union_size))
    return dices


def lesion_curves(pred_masks, gt_masks, d_grid) -> LesionCurve:
    """Lesion-detection recall and precision over the Dice-requirement grid.

    B-scans where both masks are empty carry no lesion information and are
    excluded. A lesion counts as detected at level d when its Dice against
    the union of intersecting opposite-side components exceeds d.
    """
    d_grid = np.asarray(d_grid, dtype=np.float64)
    if d_grid.size == 0 or d_grid.min() < 0 or d_grid.max() > 1:
        raise ValueError("d_grid must be a nonempty subset of [0, 1]")
    gt_dices: list[float] = []
    pred_dices: list[float] = []
    used = 0
    for pred, gt in zip(pred_masks, gt_masks, strict=True):
        p = np.asarray(pred) != 0
        g = np.asarray(gt) != 0
        if not p.any() and not g.any():
            continue
        used += 1
        gt_dices.extend(_lesion_dice_values(g, p))
        pred_dices.extend(_lesion_dice_values(p, g))
    gt_arr = np.array(gt_dices, dtype=np.float64)
    pred_arr = np.array(pred_dices, dtype=np.float64)
    tp_r = np.array([(gt_arr > d).sum() for d in d_grid], dtype=np.int64)
    fn = len(gt_arr) - tp_r
    tp_p = np.array([(pred_arr > d).sum() for d in d_grid], dtype=np.int64)
    fp = len(pred_arr) - tp_p
    with np.errstate(invalid="ignore"):
        ld_re = np.where(len(gt_arr) > 0, tp_r / max(len(gt_arr), 1), np.nan)
        ld_pr = np.where(len(pred_arr) > 0, tp_p / max(len(pred_arr), 1), np.nan)
    return LesionCurve(d_grid, ld_re, ld_pr, tp_r, fn, tp_p, fp, n_scans_used=used)


def volume_score(volume_id: str, condition: str, masks, umaps=None) -> VolumeScore:
    """Mean anomalous pixels per B-scan plus the summed uncertainty."""
    areas = [float(np.count_nonzero(m)) for m in masks]
    usum = 0.0
    if umaps is not None:
        usum = float(sum(np.asarray(u if not hasattr(u, "values") else u.values).sum()
                         for u in umaps))
    return VolumeScore(
        volume_id=volume_id,
        condition=condition,
        mean_anomalous_pixels=float(np.mean(areas)) if areas else 0.0,
        uncertainty_sum=usum,
    )


def separation_report(healthy_scores, diseased_scores, bins: int = 16) -> dict:
    """Rank-based AUC of the 1-D score, overlap witness and histogram data.

    AUC treats diseased as the positive class; ties count 0.5. The overlap
    count is the number of healthy scores at or above the smallest diseased
    score.
    """
    h = np.asarray(healthy_scores, dtype=np.float64)
    d = np.asarray(diseased_scores, dtype=np.float64)
    if h.size == 0 or d.size == 0:
        raise ValueError("both groups must be nonempty")
    ranks = rankdata(np.concatenate([h, d]))
    rank_sum_d = ranks[h.size :].sum()
    auc = (rank_sum_d - d.size * (d.size + 1) / 2.0) / (d.size * h.size)
    overlap = int((h >= d.min()).sum())
    lo = min(h.min(), d.min())
    hi = max(h.max(), d.max())
    if lo == hi:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    return {
        "auc": float(auc),
        "overlap": overlap,
        "bin_edges": edges.tolist(),
        "healthy_hist": np.histogram(h, bins=edges)[0].tolist(),
        "diseased_hist": np.histogram(d, bins=edges)[0].tolist(),
    }


def pearson(xs, ys):
    """Sample Pearson correlation plus least-squares slope and intercept.

    Raises ValueError on fewer than 3 points or zero variance (undefined).
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size != y.size or x.size < 3:
        raise ValueError("need at least 3 paired values")
    xc = x - x.mean()
    yc = y - y.mean()
    vx = (xc * xc).sum()
    vy = (yc * yc).sum()
    if vx == 0.0 or vy == 0.0:
        raise ValueError("correlation undefined: zero variance")
    rho = (xc * yc).sum() / np.sqrt(vx * vy)
    slope = (xc * yc).sum() / vx
    intercept = y.mean() - slope * x.mean()
    return float(rho), float(slope), float(intercept)


def sweep_threshold(umaps_by_volume, gts_by_volume, t_grid, params,
                    bottoms_by_volume=None):
    """Run the full pipeline per candidate threshold; argmax mean volume Dice.

    Ties break toward the smaller threshold. Returns (best_t, rows) where
    each row is (t, mean_dice, sd_dice).
    """
    from . import postproc
    from dataclasses import replace

    t_grid = list(t_grid)
    if not t_grid:
        raise ValueError("t_grid must be nonempty")
    rows = []
    best_t, best_dice = None, -1.0
    for t in t_grid:
        p = replace(params, threshold=float(t))
        dices = []
        for vi, (umaps, gts) in enumerate(zip(umaps_by_volume, gts_by_volume, strict=True)):
            bottoms = bottoms_by_volume[vi] if bottoms_by_volume is not None else [None] * len(umaps)
            preds = [postproc.pipeline(u, p, bottom_boundary=b) for u, b in zip(umaps, bottoms)]
            dices.append(pixel_metrics(preds, gts).dice)
        mean = float(np.mean(dices))
        rows.append((float(t), mean, float(np.std(dices))))
        if mean > best_dice:
            best_t, best_dice = float(t), mean
    return best_t, rows


def sweep_dropout(p_grid, train_fn):
    """Full train+select cycle per dropout rate; argmax anomaly Dice.

    `train_fn(p)` must run the whole cycle for rate p and return the mean
    anomaly Dice on the diseased validation set. Returns (best_p, rows).
    """
    p_grid = list(p_grid)
    if not p_grid:
        raise ValueError("p_grid must be nonempty")
    rows = []
    best_p, best_dice = None, -1.0
    for p in p_grid:
        dice = float(train_fn(float(p)))
        rows.append((float(p), dice))
        if dice > best_dice:
            best_p, best_dice = float(p), dice
    return best_p, rows
