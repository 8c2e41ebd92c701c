"""Binary file formats: .flo flow fields, PGM/PPM images, PFM float maps.

All four formats round-trip bit-exactly; readers reject malformed streams
with a diagnostic naming what was wrong.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

FLO_MAGIC = 202021.25


class FileFormatError(ValueError):
    """Raised for malformed image/flow streams."""


@dataclass
class FlowField:
    """Per-pixel displacement field; u, v are (h, w) float32 in pixels/frame."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float32)
        self.v = np.asarray(self.v, dtype=np.float32)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise FileFormatError(
                f"flow components must be matching 2-D maps, got {self.u.shape} / {self.v.shape}"
            )
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise FileFormatError("flow field contains non-finite values")

    @property
    def h(self) -> int:
        return self.u.shape[0]

    @property
    def w(self) -> int:
        return self.u.shape[1]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u.astype(np.float64), self.v.astype(np.float64))


# ---------------------------------------------------------------------------
# .flo
# ---------------------------------------------------------------------------


def write_flo(flow: FlowField) -> bytes:
    header = np.array([FLO_MAGIC], dtype="<f4").tobytes()
    dims = np.array([flow.w, flow.h], dtype="<i4").tobytes()
    inter = np.empty((flow.h, flow.w, 2), dtype="<f4")
    inter[:, :, 0] = flow.u
    inter[:, :, 1] = flow.v
    return header + dims + inter.tobytes()


def read_flo(data: bytes) -> FlowField:
    if len(data) < 12:
        raise FileFormatError(f"truncated .flo header: {len(data)} bytes")
    magic = np.frombuffer(data, dtype="<f4", count=1)[0]
    if magic != np.float32(FLO_MAGIC):
        raise FileFormatError(f"bad magic {magic!r}, expected {FLO_MAGIC}")
    w, h = (int(x) for x in np.frombuffer(data, dtype="<i4", count=2, offset=4))
    if w <= 0 or h <= 0:
        raise FileFormatError(f"nonpositive dimensions {w}x{h}")
    need = 12 + 8 * w * h
    if len(data) < need:
        raise FileFormatError(f"truncated .flo payload: {len(data)} bytes, expected {need}")
    inter = np.frombuffer(data, dtype="<f4", count=2 * w * h, offset=12).reshape(h, w, 2)
    return FlowField(u=inter[:, :, 0].copy(), v=inter[:, :, 1].copy())


# ---------------------------------------------------------------------------
# PNM family (PGM P5 / PPM P6) and PFM
# ---------------------------------------------------------------------------


def _read_pnm_tokens(stream: io.BytesIO, count: int) -> list[bytes]:
    """Whitespace-separated header tokens, skipping '#' comments."""
    tokens = []
    while len(tokens) < count:
        ch = stream.read(1)
        if not ch:
            raise FileFormatError("truncated header")
        if ch.isspace():
            continue
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = stream.read(1)
            continue
        tok = ch
        while True:
            ch = stream.read(1)
            if not ch or ch.isspace():
                break
            tok += ch
        tokens.append(tok)
    return tokens


def write_pgm(image: np.ndarray) -> bytes:
    img = np.asarray(image)
    if img.ndim != 2:
        raise FileFormatError(f"PGM expects a 2-D map, got shape {img.shape}")
    img = img.astype(np.uint8)
    return b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]) + img.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    stream = io.BytesIO(data)
    if stream.read(2) != b"P5":
        raise FileFormatError("bad magic, expected P5")
    w, h, maxval = (int(t) for t in _read_pnm_tokens(stream, 3))
    if w <= 0 or h <= 0:
        raise FileFormatError(f"nonpositive dimensions {w}x{h}")
    if maxval != 255:
        raise FileFormatError(f"unsupported maxval {maxval}")
    payload = stream.read(w * h)
    if len(payload) < w * h:
        raise FileFormatError(f"truncated PGM payload: {len(payload)} of {w * h} bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


def write_ppm(image: np.ndarray) -> bytes:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FileFormatError(f"PPM expects (h, w, 3), got shape {img.shape}")
    img = img.astype(np.uint8)
    return b"P6\n%d %d\n255\n" % (img.shape[1], img.shape[0]) + img.tobytes()


def read_ppm(data: bytes) -> np.ndarray:
    stream = io.BytesIO(data)
    if stream.read(2) != b"P6":
        raise FileFormatError("bad magic, expected P6")
    w, h, maxval = (int(t) for t in _read_pnm_tokens(stream, 3))
    if w <= 0 or h <= 0:
        raise FileFormatError(f"nonpositive dimensions {w}x{h}")
    if maxval != 255:
        raise FileFormatError(f"unsupported maxval {maxval}")
    payload = stream.read(3 * w * h)
    if len(payload) < 3 * w * h:
        raise FileFormatError(f"truncated PPM payload: {len(payload)} of {3 * w * h} bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()


def write_pfm(values: np.ndarray) -> bytes:
    """Single-channel PFM, little-endian (negative scale), bottom-up rows."""
    arr = np.asarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise FileFormatError(f"PFM expects a 2-D map, got shape {arr.shape}")
    header = b"Pf\n%d %d\n-1.0\n" % (arr.shape[1], arr.shape[0])
    return header + arr[::-1].tobytes()


def read_pfm(data: bytes) -> np.ndarray:
    stream = io.BytesIO(data)
    if stream.read(2) != b"Pf":
        raise FileFormatError("bad magic, expected Pf")
    w, h = (int(t) for t in _read_pnm_tokens(stream, 2))
    scale = float(_read_pnm_tokens(stream, 1)[0])
    if w <= 0 or h <= 0:
        raise FileFormatError(f"nonpositive dimensions {w}x{h}")
    if scale == 0.0:
        raise FileFormatError("zero scale")
    dtype = "<f4" if scale < 0 else ">f4"
    payload = stream.read(4 * w * h)
    if len(payload) < 4 * w * h:
        raise FileFormatError(f"truncated PFM payload: {len(payload)} of {4 * w * h} bytes")
    rows = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    return rows[::-1].astype(np.float32)


# ---------------------------------------------------------------------------
# mask conventions
# ---------------------------------------------------------------------------


def mask_to_pgm(mask: np.ndarray) -> bytes:
    """{0,1} labels to the on-disk 0/255 convention."""
    return write_pgm((np.asarray(mask) > 0).astype(np.uint8) * 255)


def pgm_to_mask(data: bytes) -> np.ndarray:
    return (read_pgm(data) >= 128).astype(np.uint8)
