"""Objectness voting from proposal masks and fusion with motion maps.

A proposal here is a full-frame binary raster. Voting is uniform: the
objectness at a pixel is the fraction of proposals covering it. Fusion
follows p = min(m * (k + o), 1), so a confident motion prediction is
suppressed only where no proposals support it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from motionseg.flowio import pgm_to_mask
from motionseg.tensor import ShapeError


@dataclass
class FusionParams:
    """k controls how much weight unsupported motion evidence keeps."""

    k: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.k <= 1.0):
            raise ValueError(f"k must be in [0, 1], got {self.k}")


def voting_objectness(proposals: list[np.ndarray], h: int, w: int) -> np.ndarray:
    """Per-pixel fraction of proposals containing the pixel; an empty
    proposal list yields all zeros."""
    counts = np.zeros((h, w), dtype=np.float64)
    for i, prop in enumerate(proposals):
        prop = np.asarray(prop)
        if prop.shape != (h, w):
            raise ShapeError(f"proposal {i} has shape {prop.shape}, expected {(h, w)}")
        counts += prop > 0
    return (counts / max(len(proposals), 1)).astype(np.float32)


def fuse(m: np.ndarray, o: np.ndarray, fp: FusionParams = FusionParams()) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    o = np.asarray(o, dtype=np.float64)
    if m.shape != o.shape:
        raise ShapeError(f"motion map {m.shape} and objectness map {o.shape} differ")
    return np.minimum(m * (fp.k + o), 1.0)


def synth_proposals(
    instance_masks: list[np.ndarray],
    n: int,
    jitter: int,
    rng: np.random.Generator,
    h: int | None = None,
    w: int | None = None,
    distractor_fraction: float = 0.0,
) -> list[np.ndarray]:
    """Test stand-in for a learned proposal generator.

    Each proposal covers the union of the instance masks with independent
    boundary jitter (shift plus dilation/erosion); a configurable fraction
    are distractor blobs instead. With jitter 0 and no distractors every
    proposal equals the union exactly.
    """
    if n < 0:
        raise ValueError("proposal count must be >= 0")
    if instance_masks:
        h, w = instance_masks[0].shape
    elif h is None or w is None:
        raise ValueError("need explicit h, w when no instances are given")
    union = np.zeros((h, w), dtype=bool)
    for mask in instance_masks:
        union |= np.asarray(mask, dtype=bool)

    out = []
    for _ in range(n):
        if rng.random() < distractor_fraction or not union.any():
            out.append(_distractor_blob(h, w, rng))
            continue
        prop = union
        if jitter > 0:
            dy = int(rng.integers(-jitter, jitter + 1))
            dx = int(rng.integers(-jitter, jitter + 1))
            prop = _shift(prop, dy, dx)
            grow = int(rng.integers(-jitter, jitter + 1))
            if grow > 0:
                prop = ndimage.binary_dilation(prop, iterations=grow)
            elif grow < 0:
                prop = ndimage.binary_erosion(prop, iterations=-grow)
        out.append(prop.astype(np.uint8))
    return out


def _shift(mask: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(mask)
    h, w = mask.shape
    ys = slice(max(dy, 0), min(h + dy, h))
    xs = slice(max(dx, 0), min(w + dx, w))
    ys_src = slice(max(-dy, 0), min(h - dy, h))
    xs_src = slice(max(-dx, 0), min(w - dx, w))
    out[ys, xs] = mask[ys_src, xs_src]
    return out


def _distractor_blob(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    cy, cx = rng.integers(0, h), rng.integers(0, w)
    ry = int(rng.integers(2, max(3, h // 4)))
    rx = int(rng.integers(2, max(3, w // 4)))
    ys, xs = np.mgrid[0:h, 0:w]
    return ((((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2) <= 1.0).astype(np.uint8)


def read_proposals_dir(path: Path | str) -> list[np.ndarray]:
    """Numbered PGM masks for one frame."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"missing proposals directory: {path}")
    return [pgm_to_mask(p.read_bytes()) for p in sorted(path.glob("*.pgm"))]
