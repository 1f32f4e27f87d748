"""Layer primitives (forward + hand-written backward) on channel-last arrays.

All activations are (N, H, W, C). Convolutions are stride 1 with zero padding
chosen to preserve the spatial size; the heavy lifting is one GEMM per conv
via an im2col window copy.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


class NetworkError(RuntimeError):
    """Shape mismatch or non-finite activation, tagged with the layer name."""


def _im2col(x_pad: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """View the padded input as sliding (kh, kw) windows, then copy.

    Returns an array of shape (N, H, W, kh*kw*C) whose last axis is laid out
    (dy, dx, c), matching a (kh, kw, cin, cout) kernel reshaped to 2-D.
    """
    n, hp, wp, c = x_pad.shape
    h, w = hp - kh + 1, wp - kw + 1
    sn, sh, sw, sc = x_pad.strides
    windows = as_strided(
        x_pad,
        shape=(n, h, w, kh, kw, c),
        strides=(sn, sh, sw, sh, sw, sc),
        writeable=False,
    )
    return np.ascontiguousarray(windows).reshape(n, h, w, kh * kw * c)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """y = conv(x, w) + b with zero padding (kh-1)//2; returns (y, cache)."""
    kh, kw, cin, cout = w.shape
    if x.shape[-1] != cin:
        raise NetworkError(f"conv expects {cin} input channels, got {x.shape[-1]}")
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    if ph or pw:
        x_pad = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    else:
        x_pad = x
    cols = _im2col(x_pad, kh, kw)
    n, h, wd, _ = cols.shape
    y = cols.reshape(n * h * wd, -1) @ w.reshape(-1, cout)
    y += b
    return y.reshape(n, h, wd, cout), (cols, x.shape)


def conv2d_backward(dy: np.ndarray, w: np.ndarray, cache, need_dx: bool = True):
    """Returns (dx, dw, db); dx is None when need_dx is False (input layer)."""
    cols, x_shape = cache
    kh, kw, cin, cout = w.shape
    n, h, wd, _ = dy.shape
    dy2 = dy.reshape(n * h * wd, cout)
    dw = (cols.reshape(n * h * wd, -1).T @ dy2).reshape(w.shape)
    db = dy2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    if kh == kw == 1:
        dx = dy2 @ w.reshape(cin, cout).T
        return dx.reshape(x_shape[:3] + (cin,)), dw, db
    # dx = correlation of dy with the spatially flipped, channel-transposed kernel
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    dy_pad = np.pad(dy, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    dy_cols = _im2col(dy_pad, kh, kw)
    w_back = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2)).reshape(-1, cin)
    dx = dy_cols.reshape(n * h * wd, -1) @ w_back
    return dx.reshape(n, h, wd, cin), dw, db


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train: bool,
                      momentum: float = 0.1, eps: float = 1e-5):
    """Per-channel batch norm over (N, H, W); updates running stats in train mode."""
    if train:
        axes = (0, 1, 2)
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    y = gamma * xhat + beta
    cache = (xhat, inv_std, gamma, train)
    return y, cache


def batchnorm_backward(dy, cache):
    xhat, inv_std, gamma, train = cache
    axes = (0, 1, 2)
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    if not train:
        return dy * (gamma * inv_std), dgamma, dbeta
    m = dy.shape[0] * dy.shape[1] * dy.shape[2]
    # gradient through the batch statistics
    dx = (gamma * inv_std) * (dy - dbeta / m - xhat * (dgamma / m))
    return dx, dgamma, dbeta


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy, mask):
    return dy * mask


def maxpool2_forward(x):
    """2x2 max pooling with stride 2; argmax routing for exact backward."""
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise NetworkError(f"maxpool needs even spatial dims, got {h}x{w}")
    xr = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    xr = xr.reshape(n, h // 2, w // 2, c, 4)
    idx = xr.argmax(axis=-1)
    y = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return y, (idx, x.shape)


def maxpool2_backward(dy, cache):
    idx, x_shape = cache
    n, h, w, c = x_shape
    dxr = np.zeros((n, h // 2, w // 2, c, 4), dtype=dy.dtype)
    np.put_along_axis(dxr, idx[..., None], dy[..., None], axis=-1)
    dxr = dxr.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return dxr.reshape(x_shape)


def upsample2_forward(x):
    """Nearest-neighbor 2x upsampling."""
    return x.repeat(2, axis=1).repeat(2, axis=2), x.shape


def upsample2_backward(dy, x_shape):
    n, h, w, c = x_shape
    return dy.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4))


def dropout_forward(x, rate: float, style: str, rngs):
    """Inverted dropout; `rngs` is one Generator or one per batch element.

    style "channel" drops whole feature maps (one mask entry per channel),
    "pixel" drops independent activations.
    """
    n, h, w, c = x.shape
    shape = (1, 1, c) if style == "channel" else (h, w, c)
    keep = np.empty((n,) + shape, dtype=x.dtype)
    if isinstance(rngs, np.random.Generator):
        keep[:] = rngs.random((n,) + shape) >= rate
    else:
        for j, rng in enumerate(rngs):
            keep[j] = rng.random(shape) >= rate
    keep /= 1.0 - rate
    return x * keep, keep


def dropout_backward(dy, keep):
    return dy * keep


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


def cross_entropy(probs, labels):
    """Mean over all pixels of -log p(true class); labels are integer maps."""
    n, h, w, k = probs.shape
    p_true = np.take_along_axis(probs, labels[..., None].astype(np.int64), axis=-1)
    return float(-np.log(np.maximum(p_true, 1e-30)).mean())


def cross_entropy_grad_logits(probs, labels):
    """d(mean CE)/d(logits) for softmax outputs: (p - onehot) / n_pixels."""
    n, h, w, k = probs.shape
    dlogits = probs.copy()
    flat = dlogits.reshape(-1, k)
    flat[np.arange(flat.shape[0]), labels.ravel().astype(np.int64)] -= 1.0
    dlogits /= n * h * w
    return dlogits
