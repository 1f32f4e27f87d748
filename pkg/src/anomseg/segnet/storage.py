"""Weight-file and training-log persistence.

Weight file layout (all little-endian): magic "BUNW", format version u16,
tensor count u32, then per tensor: name length u16, UTF-8 name, rank u8,
dims as u32s, float32 payload. The training step counter travels as a
rank-0 tensor named "meta/step".
"""

import struct

import numpy as np

from .. import pgmio
from .network import WeightStore

MAGIC = b"BUNW"
VERSION = 1
STEP_TENSOR = "meta/step"


def save_weights(path, store: WeightStore) -> None:
    parts = [MAGIC, struct.pack("<HI", VERSION, len(store.tensors) + 1)]
    items = list(store.tensors.items())
    items.append((STEP_TENSOR, np.array(float(store.step), dtype=np.float32)))
    for name, tensor in items:
        encoded = name.encode("utf-8")
        arr = np.ascontiguousarray(tensor, dtype="<f4")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    pgmio._atomic_write_bytes(path, b"".join(parts))


def load_weights(path) -> WeightStore:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic, not a weight file")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported weight format version {version}")
    pos = 10
    store = WeightStore()
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<B", data, pos)
        pos += 1
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(dims)
        pos += 4 * size
        if name == STEP_TENSOR:
            store.step = int(arr.reshape(-1)[0])
        else:
            store.tensors[name] = arr.astype(np.float32)
    store.validate()
    return store


def save_training_log(path, rows) -> None:
    pgmio.write_csv(path, ("epoch", "loss", "lr", "val_dice"), rows)
