"""File formats: pattern CSV, binary PGM/PPM pixmaps, and DRDAM1 memories."""
from __future__ import annotations

import csv
import os

import numpy as np

from ..distributed import from_bytes, load_distributed, save_distributed, to_bytes
from ..errors import FormatError, ShapeError

__all__ = ["save_patterns", "load_patterns", "write_pixmap", "read_pixmap", "encode_pixmap",
           "decode_pixmap", "save_distributed", "load_distributed", "to_bytes", "from_bytes"]


def save_patterns(path, patterns) -> None:
    """One pattern per row, values written with full round-trip precision."""
    P = np.atleast_2d(np.asarray(patterns, dtype=np.float64))
    with open(os.fspath(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in P:
            w.writerow([repr(float(v)) for v in row])


def load_patterns(path) -> np.ndarray:
    rows = []
    with open(os.fspath(path), newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no patterns")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ShapeError(f"{path}: rows have differing lengths {sorted(widths)}")
    return np.array(rows)


# -- pixmaps -----------------------------------------------------------------

_WS = b" \t\n\r\v\f"


def encode_pixmap(img) -> bytes:
    """Binary PGM (H, W) or PPM (H, W, 3) with maxval 255."""
    a = np.asarray(img)
    if a.dtype != np.uint8:
        raise ValueError(f"pixmap data must be uint8, got {a.dtype}")
    if a.ndim == 2:
        magic, channels = b"P5", 1
    elif a.ndim == 3 and a.shape[2] == 3:
        magic, channels = b"P6", 3
    elif a.ndim == 3 and a.shape[2] == 1:
        a, magic, channels = a[:, :, 0], b"P5", 1
    else:
        raise ShapeError(f"pixmap must be (H, W), (H, W, 1) or (H, W, 3), got {a.shape}")
    H, W = a.shape[:2]
    return magic + f"\n{W} {H}\n255\n".encode() + np.ascontiguousarray(a).tobytes()


def decode_pixmap(data: bytes) -> np.ndarray:
    if data[:2] not in (b"P5", b"P6"):
        raise FormatError("expected binary PGM (P5) or PPM (P6) magic", 0)
    channels = 1 if data[:2] == b"P5" else 3
    pos = 2
    fields = []
    while len(fields) < 3:
        # whitespace and comments
        while pos < len(data) and (data[pos] in _WS or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < len(data) and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("expected a decimal header field", start)
        fields.append((int(data[start:pos]), start))
    if pos >= len(data) or data[pos] not in _WS:
        raise FormatError("header must end with a single whitespace byte", pos)
    pos += 1
    (W, w_off), (H, h_off), (maxval, m_off) = fields
    if W < 1:
        raise FormatError("width must be positive", w_off)
    if H < 1:
        raise FormatError("height must be positive", h_off)
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}", m_off)
    need = W * H * channels
    if len(data) - pos != need:
        raise FormatError(f"raster has {len(data) - pos} bytes, header implies {need}", pos)
    a = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).copy()
    return a.reshape(H, W) if channels == 1 else a.reshape(H, W, 3)


def write_pixmap(path, img) -> None:
    with open(os.fspath(path), "wb") as fh:
        fh.write(encode_pixmap(img))


def read_pixmap(path) -> np.ndarray:
    with open(os.fspath(path), "rb") as fh:
        return decode_pixmap(fh.read())


def to_uint8(img01) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img01) * 255.0), 0, 255).astype(np.uint8)
