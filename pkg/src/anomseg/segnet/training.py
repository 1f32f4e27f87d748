"""Training loop: augmentation, Adam updates, LR schedule, checkpoint selection.

The model with the best macro layer Dice on the healthy validation split is
returned, mirroring selection on segmentation quality rather than loss.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import network
from .blocks import NetworkError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    # 1e-3 rather than the full-scale 1e-4: with only ~80 optimizer steps per
    # epoch at desk scale, 1e-4 cannot reach a useful layer Dice in 25 epochs
    epochs: int = 25
    learning_rate: float = 1e-3
    lr_decay_factor: float = 0.2
    lr_decay_every_epochs: int = 5
    batch_size: int = 4
    flip: bool = True
    max_rotation_deg: float = 10.0
    max_translation_frac: tuple[float, float] = (0.05, 0.20)
    max_scale_frac: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 42

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        for name in ("learning_rate", "lr_decay_factor", "lr_decay_every_epochs",
                     "batch_size", "beta1", "beta2", "eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.max_rotation_deg < 0:
            raise ValueError("max_rotation_deg must be >= 0")
        tf = self.max_translation_frac
        if len(tf) != 2 or any(not (0.0 <= f < 1.0) for f in tf):
            raise ValueError("translation fractions must lie in [0, 1)")
        if not (0.0 <= self.max_scale_frac < 1.0):
            raise ValueError("scale fraction must lie in [0, 1)")


# ---------------------------------------------------------------------------
# geometric augmentation


def apply_geometric(image, labels, flip=False, rotation_deg=0.0,
                    translation=(0.0, 0.0), scale=1.0):
    """Apply one affine transform to an image (bilinear) and labels (nearest).

    The transform is flip, then rotation, then scaling, all about the image
    center, then translation in pixels (tx cols, ty rows). Out-of-canvas
    samples become 0 (background).
    """
    img = np.asarray(image, dtype=np.float64)
    lab = np.asarray(labels)
    if img.shape != lab.shape:
        raise ValueError("image and labels must share a shape")
    tx, ty = float(translation[0]), float(translation[1])
    if not flip and rotation_deg == 0.0 and tx == 0.0 and ty == 0.0 and scale == 1.0:
        return img.copy(), lab.copy()
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(rotation_deg)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    flip_m = np.array([[-1.0, 0.0], [0.0, 1.0]]) if flip else np.eye(2)
    m = scale * rot @ flip_m  # acts on (x, y) column vectors
    m_inv = np.linalg.inv(m)

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = xs - cx - tx
    dy = ys - cy - ty
    sx = m_inv[0, 0] * dx + m_inv[0, 1] * dy + cx
    sy = m_inv[1, 0] * dx + m_inv[1, 1] * dy + cy

    out_img = _sample_bilinear(img, sy, sx)
    out_lab = _sample_nearest(lab, sy, sx)
    return out_img, out_lab


def _sample_bilinear(img, sy, sx):
    h, w = img.shape
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    wx = sx - x0
    wy = sy - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    out = np.zeros(sx.shape)
    for dy_i, dx_i, weight in (
        (0, 0, (1 - wy) * (1 - wx)),
        (0, 1, (1 - wy) * wx),
        (1, 0, wy * (1 - wx)),
        (1, 1, wy * wx),
    ):
        yy = y0 + dy_i
        xx = x0 + dx_i
        valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        vals = np.where(valid, img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)], 0.0)
        out += weight * vals
    return out


def _sample_nearest(lab, sy, sx):
    h, w = lab.shape
    yy = np.rint(sy).astype(np.int64)
    xx = np.rint(sx).astype(np.int64)
    valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
    out = np.zeros(lab.shape, dtype=lab.dtype)
    out[valid] = lab[yy[valid], xx[valid]]
    return out


def augment(image, labels, config: TrainConfig, rng: np.random.Generator):
    """Sample each augmentation independently with probability 0.5."""
    h, w = np.asarray(image).shape
    flip = bool(config.flip and rng.random() < 0.5)
    rotation = 0.0
    if rng.random() < 0.5:
        rotation = float(rng.uniform(-config.max_rotation_deg, config.max_rotation_deg))
    tx = ty = 0.0
    if rng.random() < 0.5:
        tx = float(rng.uniform(-1.0, 1.0) * config.max_translation_frac[0] * w)
        ty = float(rng.uniform(-1.0, 1.0) * config.max_translation_frac[1] * h)
    scale = 1.0
    if rng.random() < 0.5:
        scale = float(1.0 + rng.uniform(-1.0, 1.0) * config.max_scale_frac)
    return apply_geometric(image, labels, flip=flip, rotation_deg=rotation,
                           translation=(tx, ty), scale=scale)


# ---------------------------------------------------------------------------
# optimizer and metrics


class Adam:
    def __init__(self, names, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {n: None for n in names}
        self.v = {n: None for n in names}
        self.t = 0

    def step(self, store: network.WeightStore, grads: dict, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            if self.m[name] is None:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            store.tensors[name] -= lr * mhat / (np.sqrt(vhat) + self.eps)
        store.step += 1


def dice_macro(store, net_config, pairs, batch: int = 8) -> float:
    """Macro-averaged per-class Dice of argmax predictions, pooled over pairs."""
    k = net_config.num_classes
    inter = np.zeros(k, dtype=np.int64)
    pred_count = np.zeros(k, dtype=np.int64)
    gt_count = np.zeros(k, dtype=np.int64)
    dtype = store.tensors["head.w"].dtype
    for start in range(0, len(pairs), batch):
        chunk = pairs[start : start + batch]
        x = np.stack([np.asarray(img, dtype=dtype) for img, _ in chunk])[..., None]
        probs, _ = network.forward_batch(store, net_config, x, "deterministic")
        pred = probs.argmax(axis=-1)
        for (_, lab), pr in zip(chunk, pred):
            for cls in range(k):
                p = pr == cls
                g = lab == cls
                inter[cls] += int((p & g).sum())
                pred_count[cls] += int(p.sum())
                gt_count[cls] += int(g.sum())
    dices = np.ones(k)
    nonzero = (pred_count + gt_count) > 0
    dices[nonzero] = 2.0 * inter[nonzero] / (pred_count + gt_count)[nonzero]
    return float(dices.mean())


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    weights: network.WeightStore
    log: list[tuple] = field(default_factory=list)  # (epoch, loss, lr, val_dice)
    best_epoch: int = 0
    best_val_dice: float = 0.0
    diverged: bool = False


def train(train_pairs, val_pairs, net_config: network.NetworkConfig,
          train_config: TrainConfig, dtype=np.float32,
          progress: bool = False) -> TrainResult:
    """Train on healthy pairs and return the best-validation-Dice checkpoint.

    Deterministic given the configs: init, shuffling, augmentation and
    dropout streams all derive from train_config.seed. With epochs == 0 the
    initialized weights and an empty log are returned. A non-finite loss
    aborts the run, keeping the best checkpoint reached so far.
    """
    net_config.validate()
    train_config.validate()
    if train_config.epochs > 0 and (not train_pairs or not val_pairs):
        raise ValueError("train and validation splits must be nonempty")
    ss = np.random.SeedSequence(train_config.seed)
    init_ss, shuffle_ss, aug_ss, drop_ss = ss.spawn(4)
    store = network.init_weights(net_config, init_ss, dtype=dtype)
    result = TrainResult(weights=store.clone())
    if train_config.epochs == 0:
        return result

    shuffle_rng = np.random.default_rng(shuffle_ss)
    aug_rng = np.random.default_rng(aug_ss)
    drop_rng = np.random.default_rng(drop_ss)
    adam = Adam(store.trainable_names(), train_config.beta1, train_config.beta2,
                train_config.eps)
    best_dice = -1.0
    for epoch in range(1, train_config.epochs + 1):
        lr = train_config.learning_rate * train_config.lr_decay_factor ** (
            (epoch - 1) // train_config.lr_decay_every_epochs
        )
        order = shuffle_rng.permutation(len(train_pairs))
        losses = []
        diverged = False
        for start in range(0, len(order), train_config.batch_size):
            idx = order[start : start + train_config.batch_size]
            if len(idx) < 2:
                continue  # batch norm needs more than one sample
            imgs, labs = [], []
            for i in idx:
                img, lab = augment(train_pairs[i][0], train_pairs[i][1],
                                   train_config, aug_rng)
                imgs.append(img)
                labs.append(lab)
            x = np.stack(imgs)
            y = np.stack(labs)
            try:
                loss, grads = network.loss_and_gradients(store, net_config, x, y,
                                                         rng=drop_rng)
            except NetworkError as exc:
                logger.error("aborting at epoch %d: %s", epoch, exc)
                diverged = True
                break
            adam.step(store, grads, lr)
            losses.append(loss)
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        try:
            val_dice = dice_macro(store, net_config, val_pairs)
        except NetworkError as exc:
            logger.error("validation failed at epoch %d: %s", epoch, exc)
            diverged = True
            val_dice = float("nan")
        result.log.append((epoch, mean_loss, lr, val_dice))
        if progress:
            logger.info("epoch %d loss %.4f lr %.2e val dice %.4f",
                        epoch, mean_loss, lr, val_dice)
        if np.isfinite(val_dice) and val_dice > best_dice:
            best_dice = val_dice
            result.weights = store.clone()
            result.best_epoch = epoch
            result.best_val_dice = val_dice
        if diverged:
            result.diverged = True
            break
    return result
