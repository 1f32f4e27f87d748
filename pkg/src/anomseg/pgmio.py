"""Binary PGM (P5) images, raw float32 maps and small text artifacts.

All writers go through an atomic temp-file + rename so that readers never
observe a partially written file.
"""

import json
import os
import tempfile

import numpy as np


def _atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_pgm(path, image) -> None:
    """Write a 2-D uint8 array as binary PGM (P5, maxval 255)."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValueError(f"PGM image must be 2-D, got shape {arr.shape}")
    arr = arr.astype(np.uint8, copy=False)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    _atomic_write_bytes(path, header + arr.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM (P5) file into a uint8 array of shape (rows, cols)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (missing P5 magic)")
    # header = magic, width, height, maxval; '#' comment lines allowed
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=height * width, offset=pos)
    return pixels.reshape(height, width).copy()


def write_float_map(path, values, meta: dict) -> None:
    """Write a float map as raw little-endian float32 plus a JSON sidecar.

    `path` should end in ``.f32``; the sidecar replaces that suffix with
    ``.json`` and records shape plus the provided metadata.
    """
    arr = np.ascontiguousarray(np.asarray(values), dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"float map must be 2-D, got shape {arr.shape}")
    _atomic_write_bytes(path, arr.tobytes())
    sidecar = dict(meta)
    sidecar["rows"] = int(arr.shape[0])
    sidecar["cols"] = int(arr.shape[1])
    write_json(_sidecar_path(path), sidecar)


def read_float_map(path):
    """Read a raw float32 map written by :func:`write_float_map`.

    Returns (values, meta) where meta is the parsed sidecar dict.
    """
    with open(_sidecar_path(path)) as fh:
        meta = json.load(fh)
    raw = np.fromfile(path, dtype="<f4")
    values = raw.reshape(meta["rows"], meta["cols"]).astype(np.float64)
    return values, meta


def _sidecar_path(path) -> str:
    path = os.fspath(path)
    root, ext = os.path.splitext(path)
    if ext != ".f32":
        raise ValueError(f"float map path must end in .f32, got {path}")
    return root + ".json"


def write_json(path, obj) -> None:
    """Write JSON deterministically (sorted keys, stable separators)."""
    text = json.dumps(obj, indent=2, sort_keys=True)
    _atomic_write_bytes(path, (text + "\n").encode("utf-8"))


def write_text(path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(path, header, rows) -> None:
    """Write a CSV with repr-style float formatting (round-trip exact)."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_format_cell(v) for v in row))
    write_text(path, "\n".join(lines) + "\n")


def _format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)
