"""Pixel-wise model uncertainty from stochastic forward passes.

The main quantity is the per-pixel variance of the per-class probabilities
across repeated dropout passes, averaged over classes. The entropy of a
single deterministic soft prediction is provided as a baseline.
"""

from dataclasses import dataclass

import numpy as np

from . import pgmio

MC_VARIANCE = "mc_variance"
ENTROPY = "entropy"


@dataclass
class PredictionStack:
    """n per-class probability maps from n stochastic forward passes.

    maps has shape (n, K, rows, cols); pass_seeds records the dropout seed of
    each pass.
    """

    maps: np.ndarray
    pass_seeds: list[int]
    dropout_rate: float

    @property
    def n_samples(self) -> int:
        return int(self.maps.shape[0])

    def validate(self, tol: float = 1e-5) -> None:
        if self.maps.ndim != 4:
            raise ValueError(f"stack must be (n, K, rows, cols), got {self.maps.shape}")
        if self.n_samples < 2:
            raise ValueError("a prediction stack needs at least 2 samples")
        if np.any(self.maps < 0):
            raise ValueError("negative probability in stack")
        sums = self.maps.sum(axis=1)
        if np.abs(sums - 1.0).max() > tol:
            raise ValueError("per-pixel class probabilities do not sum to 1")


@dataclass
class UncertaintyMap:
    """Nonnegative per-pixel uncertainty with its provenance."""

    values: np.ndarray
    n_samples: int
    dropout_rate: float
    kind: str

    def validate(self, num_classes: int | None = None) -> None:
        if not np.all(np.isfinite(self.values)):
            raise ValueError("uncertainty map contains non-finite values")
        if np.any(self.values < 0):
            raise ValueError("uncertainty map contains negative values")
        if self.kind == MC_VARIANCE and self.values.max() > 0.25 + 1e-12:
            raise ValueError("variance of a [0,1] quantity cannot exceed 0.25")
        if self.kind == ENTROPY and num_classes is not None:
            if self.values.max() > np.log(num_classes) + 1e-9:
                raise ValueError("entropy exceeds ln K")


def class_variance(stack: PredictionStack, k: int) -> np.ndarray:
    """Population variance (divisor n) of class k's probability at each pixel."""
    if stack.maps.shape[0] < 2:
        raise ValueError("need at least 2 samples for a variance")
    values = stack.maps[:, k].astype(np.float64)
    mu = values.mean(axis=0)
    return np.mean((values - mu) ** 2, axis=0)


def uncertainty_map(stack: PredictionStack, hard_labels: bool = False) -> UncertaintyMap:
    """Average the K per-class variance maps into one uncertainty map.

    With hard_labels=True the stack is first collapsed to one-hot argmax
    predictions, an alternative reading kept for comparison.
    """
    if stack.maps.shape[0] < 2:
        raise ValueError("need at least 2 samples for a variance")
    maps = stack.maps.astype(np.float64)
    if hard_labels:
        k = maps.shape[1]
        hard = maps.argmax(axis=1)
        maps = np.eye(k)[hard].transpose(0, 3, 1, 2)
    mu = maps.mean(axis=0)
    var = np.mean((maps - mu) ** 2, axis=0)  # (K, rows, cols)
    return UncertaintyMap(
        values=var.mean(axis=0),
        n_samples=stack.n_samples,
        dropout_rate=stack.dropout_rate,
        kind=MC_VARIANCE,
    )


def entropy_map(probmap: np.ndarray, dropout_rate: float = 0.0) -> UncertaintyMap:
    """Per-pixel Shannon entropy of one (K, rows, cols) soft prediction.

    Natural logarithm; 0 * ln 0 is taken as 0.
    """
    p = np.asarray(probmap, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    values = -terms.sum(axis=0)
    np.clip(values, 0.0, None, out=values)
    return UncertaintyMap(values=values, n_samples=1, dropout_rate=dropout_rate, kind=ENTROPY)


def save_map(path, umap: UncertaintyMap) -> None:
    """Write as raw float32 (.f32) plus a JSON sidecar with the provenance."""
    pgmio.write_float_map(
        path,
        umap.values,
        {"n": umap.n_samples, "dropout": umap.dropout_rate, "kind": umap.kind},
    )


def load_map(path) -> UncertaintyMap:
    values, meta = pgmio.read_float_map(path)
    return UncertaintyMap(
        values=values,
        n_samples=int(meta["n"]),
        dropout_rate=float(meta["dropout"]),
        kind=meta["kind"],
    )
