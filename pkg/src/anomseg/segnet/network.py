"""Encoder-decoder segmentation network built on the numpy primitives.

The architecture is U-shaped: each level is a block of two 3x3 convolutions,
each followed by batch norm and ReLU, with spatial dropout after every block;
2x2 max pooling between encoder levels; nearest-neighbor upsampling plus a
3x3 convolution between decoder levels; skip connections concatenate each
encoder block output onto the matching decoder level; a final 1x1 convolution
and per-pixel softmax produce the class probabilities.
"""

from dataclasses import dataclass, field

import numpy as np

from ..uncertainty import PredictionStack
from . import blocks
from .blocks import NetworkError

MODES = ("train", "mc_dropout", "deterministic")
DROPOUT_STYLES = ("channel", "pixel")


@dataclass(frozen=True)
class NetworkConfig:
    # dropout 0.1: at this width, larger rates perturb healthy regions so
    # much that anomaly-driven variance no longer stands out of the noise
    depth: int = 4
    channels: tuple[int, ...] = (16, 32, 64, 128)
    num_classes: int = 7
    dropout_rate: float = 0.1
    dropout_style: str = "channel"
    kernel_size: int = 3
    input_shape: tuple[int, int] = (64, 128)

    def validate(self) -> None:
        if self.depth < 2:
            raise ValueError("depth must be >= 2")
        if len(self.channels) != self.depth:
            raise ValueError(
                f"channels must have {self.depth} entries, got {len(self.channels)}"
            )
        if not (0.0 < self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must lie in (0, 1)")
        if self.dropout_style not in DROPOUT_STYLES:
            raise ValueError(f"dropout_style must be one of {DROPOUT_STYLES}")
        if self.kernel_size != 3:
            raise ValueError("kernel_size is fixed at 3")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        rows, cols = self.input_shape
        divisor = 2 ** (self.depth - 1)
        if rows % divisor or cols % divisor:
            raise ValueError(
                f"input shape {self.input_shape} not divisible by 2^(depth-1)={divisor}"
            )


@dataclass
class WeightStore:
    """Ordered named tensors plus the training step counter."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    BUFFER_SUFFIXES = ("running_mean", "running_var")

    def trainable_names(self) -> list[str]:
        return [n for n in self.tensors if not n.endswith(self.BUFFER_SUFFIXES)]

    def clone(self) -> "WeightStore":
        return WeightStore({n: t.copy() for n, t in self.tensors.items()}, self.step)

    def astype(self, dtype) -> "WeightStore":
        return WeightStore(
            {n: t.astype(dtype) for n, t in self.tensors.items()}, self.step
        )

    def validate(self) -> None:
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise NetworkError(f"non-finite values in tensor {name}")
            if name.endswith("running_var") and np.any(t <= 0):
                raise NetworkError(f"non-positive running variance in {name}")


def _conv_plan(config: NetworkConfig) -> list[tuple[str, int, int, int]]:
    """(name, kernel, cin, cout) for every convolution, in forward order."""
    ch = config.channels
    d = config.depth
    plan = []
    cin = 1
    for i in range(d - 1):
        plan.append((f"enc{i}.conv1", 3, cin, ch[i]))
        plan.append((f"enc{i}.conv2", 3, ch[i], ch[i]))
        cin = ch[i]
    plan.append(("bot.conv1", 3, ch[d - 2], ch[d - 1]))
    plan.append(("bot.conv2", 3, ch[d - 1], ch[d - 1]))
    prev = ch[d - 1]
    for i in range(d - 2, -1, -1):
        plan.append((f"dec{i}.up", 3, prev, ch[i]))
        plan.append((f"dec{i}.conv1", 3, 2 * ch[i], ch[i]))
        plan.append((f"dec{i}.conv2", 3, ch[i], ch[i]))
        prev = ch[i]
    plan.append(("head", 1, ch[0], config.num_classes))
    return plan


def paper_scale_config(num_classes: int = 11,
                       input_shape: tuple[int, int] = (496, 512)) -> NetworkConfig:
    """The full-scale five-level preset (64..1024 channels); not the default."""
    return NetworkConfig(
        depth=5,
        channels=(64, 128, 256, 512, 1024),
        num_classes=num_classes,
        dropout_rate=0.4,
        input_shape=input_shape,
    )


def init_weights(config: NetworkConfig, seed, dtype=np.float32) -> WeightStore:
    """Kaiming-normal conv kernels (variance 2/fan_in), zero biases, unit BN."""
    config.validate()
    rng = np.random.default_rng(seed)
    store = WeightStore()
    for name, k, cin, cout in _conv_plan(config):
        fan_in = k * k * cin
        std = np.sqrt(2.0 / fan_in)
        store.tensors[f"{name}.w"] = rng.normal(0.0, std, (k, k, cin, cout)).astype(dtype)
        store.tensors[f"{name}.b"] = np.zeros(cout, dtype=dtype)
        if name != "head":
            store.tensors[f"{name}.bn.gamma"] = np.ones(cout, dtype=dtype)
            store.tensors[f"{name}.bn.beta"] = np.zeros(cout, dtype=dtype)
            store.tensors[f"{name}.bn.running_mean"] = np.zeros(cout, dtype=dtype)
            store.tensors[f"{name}.bn.running_var"] = np.ones(cout, dtype=dtype)
    return store


def _conv_bn_relu(store, name, x, train_bn, tape):
    t = store.tensors
    y, c_conv = blocks.conv2d_forward(x, t[f"{name}.w"], t[f"{name}.b"])
    y, c_bn = blocks.batchnorm_forward(
        y, t[f"{name}.bn.gamma"], t[f"{name}.bn.beta"],
        t[f"{name}.bn.running_mean"], t[f"{name}.bn.running_var"], train_bn,
    )
    y, c_relu = blocks.relu_forward(y)
    if tape is not None:
        tape.append(("cbr", name, (c_conv, c_bn, c_relu)))
    if not np.all(np.isfinite(y[0, 0, 0])):  # cheap probe; full check on failure
        if not np.all(np.isfinite(y)):
            raise NetworkError(f"non-finite activation after {name}")
    return y


def _dropout(config, x, mode, rngs, tape, name, enabled):
    if mode == "deterministic" or not enabled:
        return x
    if rngs is None:
        raise ValueError(f"mode {mode!r} requires an rng for dropout")
    y, keep = blocks.dropout_forward(x, config.dropout_rate, config.dropout_style, rngs)
    if tape is not None:
        tape.append(("drop", name, keep))
    return y


def forward_batch(store: WeightStore, config: NetworkConfig, x: np.ndarray,
                  mode: str, rngs=None, with_tape: bool = False,
                  dropout_enabled: bool = True):
    """Run a batch (N, H, W, 1) through the network.

    Returns (probs (N, H, W, K), tape) where the tape carries every cache
    needed by backward_batch. Batch statistics are used for batch norm only
    in train mode; dropout is active in train and mc_dropout modes.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    rows, cols = config.input_shape
    if x.ndim != 4 or x.shape[1:] != (rows, cols, 1):
        raise NetworkError(f"expected input (N, {rows}, {cols}, 1), got {x.shape}")
    train_bn = mode == "train"
    tape: list | None = [] if with_tape else None
    t = store.tensors
    d = config.depth

    skips = {}
    for i in range(d - 1):
        x = _conv_bn_relu(store, f"enc{i}.conv1", x, train_bn, tape)
        x = _conv_bn_relu(store, f"enc{i}.conv2", x, train_bn, tape)
        x = _dropout(config, x, mode, rngs, tape, f"enc{i}", dropout_enabled)
        skips[i] = x
        if tape is not None:
            tape.append(("skip_store", i, None))
        x, c_pool = blocks.maxpool2_forward(x)
        if tape is not None:
            tape.append(("pool", i, c_pool))
    x = _conv_bn_relu(store, "bot.conv1", x, train_bn, tape)
    x = _conv_bn_relu(store, "bot.conv2", x, train_bn, tape)
    x = _dropout(config, x, mode, rngs, tape, "bot", dropout_enabled)
    for i in range(d - 2, -1, -1):
        x, c_up = blocks.upsample2_forward(x)
        if tape is not None:
            tape.append(("upsample", i, c_up))
        x = _conv_bn_relu(store, f"dec{i}.up", x, train_bn, tape)
        x = np.concatenate([skips[i], x], axis=-1)
        if tape is not None:
            tape.append(("concat", i, skips[i].shape[-1]))
        x = _conv_bn_relu(store, f"dec{i}.conv1", x, train_bn, tape)
        x = _conv_bn_relu(store, f"dec{i}.conv2", x, train_bn, tape)
        x = _dropout(config, x, mode, rngs, tape, f"dec{i}", dropout_enabled)
    logits, c_head = blocks.conv2d_forward(x, t["head.w"], t["head.b"])
    if tape is not None:
        tape.append(("head", "head", c_head))
    if not np.all(np.isfinite(logits)):
        raise NetworkError("non-finite activation after head")
    probs = blocks.softmax(logits)
    return probs, tape


def backward_batch(store: WeightStore, config: NetworkConfig, dlogits, tape) -> dict:
    """Walk the forward tape in reverse; returns gradients per trainable tensor."""
    t = store.tensors
    grads = {}

    def add(name, g):
        if name in grads:
            grads[name] += g
        else:
            grads[name] = g

    dx = dlogits
    dskips: dict[int, np.ndarray] = {}
    for kind, name, cache in reversed(tape):
        if kind == "head":
            dx, dw, db = blocks.conv2d_backward(dx, t["head.w"], cache)
            add("head.w", dw)
            add("head.b", db)
        elif kind == "cbr":
            c_conv, c_bn, c_relu = cache
            dx = blocks.relu_backward(dx, c_relu)
            dx, dgamma, dbeta = blocks.batchnorm_backward(dx, c_bn)
            add(f"{name}.bn.gamma", dgamma)
            add(f"{name}.bn.beta", dbeta)
            first = name == "enc0.conv1"
            dx, dw, db = blocks.conv2d_backward(dx, t[f"{name}.w"], c_conv, need_dx=not first)
            add(f"{name}.w", dw)
            add(f"{name}.b", db)
            if first:
                break
        elif kind == "drop":
            dx = blocks.dropout_backward(dx, cache)
        elif kind == "pool":
            dx = blocks.maxpool2_backward(dx, cache)
            dx = dx + dskips.pop(name)
        elif kind == "skip_store":
            pass  # handled at the matching pool step
        elif kind == "upsample":
            dx = blocks.upsample2_backward(dx, cache)
        elif kind == "concat":
            dskips[name] = dx[..., :cache]
            dx = dx[..., cache:]
        else:  # pragma: no cover
            raise AssertionError(f"unknown tape entry {kind}")
    return grads


def forward(store: WeightStore, config: NetworkConfig, image: np.ndarray,
            mode: str = "deterministic", rng=None) -> np.ndarray:
    """Single-image forward pass; returns class probabilities (K, rows, cols)."""
    dtype = store.tensors["head.w"].dtype
    x = np.asarray(image, dtype=dtype)[None, :, :, None]
    rngs = None if rng is None else [rng]
    probs, _ = forward_batch(store, config, x, mode, rngs)
    return probs[0].transpose(2, 0, 1)


def loss_and_gradients(store: WeightStore, config: NetworkConfig,
                       images: np.ndarray, labels: np.ndarray, rng=None):
    """Mean cross-entropy over batch pixels and gradients for every trainable tensor.

    The forward pass runs in train mode (batch statistics, dropout when an
    rng is given). Raises NetworkError on a non-finite loss.
    """
    if np.any(labels >= config.num_classes) or np.any(labels < 0):
        raise ValueError("labels outside {0..K-1}")
    dtype = store.tensors["head.w"].dtype
    x = np.asarray(images, dtype=dtype)[..., None]
    # rng=None disables dropout (used by gradient checks); batch norm still
    # sees the batch statistics either way
    probs, tape = forward_batch(
        store, config, x, "train", rng, with_tape=True, dropout_enabled=rng is not None
    )
    loss = blocks.cross_entropy(probs, labels)
    if not np.isfinite(loss):
        raise NetworkError("non-finite training loss")
    dlogits = blocks.cross_entropy_grad_logits(probs, labels).astype(dtype)
    grads = backward_batch(store, config, dlogits, tape)
    return loss, grads


def mc_sample(store: WeightStore, config: NetworkConfig, image: np.ndarray,
              n: int, seed, batch: int = 6) -> PredictionStack:
    """n stochastic forward passes with independent dropout masks.

    Deterministic given (weights, image, n, seed); passes are batched for
    speed, with one dropout stream per pass so the batch size cannot change
    the result.
    """
    if n < 2:
        raise ValueError("mc_sample needs n >= 2")
    root = np.random.default_rng(seed)
    pass_seeds = [int(s) for s in root.integers(0, 2**63 - 1, size=n)]
    dtype = store.tensors["head.w"].dtype
    x1 = np.asarray(image, dtype=dtype)[None, :, :, None]
    maps = np.empty((n, config.num_classes) + tuple(config.input_shape), dtype=np.float32)
    for start in range(0, n, batch):
        stop = min(start + batch, n)
        rngs = [np.random.default_rng(s) for s in pass_seeds[start:stop]]
        xb = np.repeat(x1, stop - start, axis=0)
        probs, _ = forward_batch(store, config, xb, "mc_dropout", rngs)
        maps[start:stop] = probs.transpose(0, 3, 1, 2)
    return PredictionStack(maps=maps, pass_seeds=pass_seeds, dropout_rate=config.dropout_rate)
