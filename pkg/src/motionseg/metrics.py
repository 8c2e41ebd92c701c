"""Region (IoU) and boundary (F-measure) evaluation with sequence stats."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from motionseg.tensor import ShapeError


def iou(a: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union; two empty masks count as a perfect match."""
    a = np.asarray(a)
    gt = np.asarray(gt)
    if a.shape != gt.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {gt.shape}")
    pa = a > 0
    pg = gt > 0
    union = int((pa | pg).sum())
    if union == 0:
        return 1.0
    return float((pa & pg).sum()) / union


def boundary_map(mask: np.ndarray) -> np.ndarray:
    """Inner boundary: mask pixels with a 4-neighbor outside the mask.
    Out-of-frame counts as background, so frame-touching regions have a
    boundary along the frame edge."""
    m = np.asarray(mask) > 0
    padded = np.pad(m, 1, mode="constant", constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return m & ~interior


def default_boundary_radius(h: int, w: int) -> int:
    return int(math.ceil(0.0075 * math.hypot(h, w)))


def boundary_f(a: np.ndarray, gt: np.ndarray, radius: int | None = None) -> float:
    """Boundary F-measure: precision/recall of boundary pixels matched
    within `radius` (Euclidean) of the other mask's boundary."""
    a = np.asarray(a)
    gt = np.asarray(gt)
    if a.shape != gt.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {gt.shape}")
    if radius is None:
        radius = default_boundary_radius(*a.shape)
    ba = boundary_map(a)
    bg = boundary_map(gt)
    na = int(ba.sum())
    ng = int(bg.sum())
    if na == 0 and ng == 0:
        return 1.0
    if na == 0 or ng == 0:
        return 0.0
    r2 = radius * radius
    # squared EDT keeps the radius comparison in exact integers
    d2_to_gt = np.rint(ndimage.distance_transform_edt(~bg) ** 2).astype(np.int64)
    d2_to_a = np.rint(ndimage.distance_transform_edt(~ba) ** 2).astype(np.int64)
    precision = float((d2_to_gt[ba] <= r2).sum()) / na
    recall = float((d2_to_a[bg] <= r2).sum()) / ng
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class SequenceStats:
    mean: float
    recall: float
    decay: float


def sequence_stats(per_frame: list[float], recall_threshold: float = 0.5) -> SequenceStats:
    """Mean, fraction of frames above threshold, and early-minus-late decay
    (first vs last quarter of the frames, at least one frame each)."""
    if len(per_frame) == 0:
        raise ValueError("empty score list")
    vals = np.asarray(per_frame, dtype=np.float64)
    k = max(1, len(vals) // 4)
    return SequenceStats(
        mean=float(vals.mean()),
        recall=float((vals > recall_threshold).mean()),
        decay=float(vals[:k].mean() - vals[-k:].mean()),
    )


def format_scores_csv(rows: list[tuple[str, int, float, float]]) -> str:
    """(sequence, frame, J, F) rows plus per-sequence aggregate lines."""
    lines = ["sequence,frame,J,F"]
    by_seq: dict[str, list[tuple[float, float]]] = {}
    for seq, frame, j, f in rows:
        lines.append(f"{seq},{frame},{j:.6g},{f:.6g}")
        by_seq.setdefault(seq, []).append((j, f))
    lines.append("")
    lines.append("sequence,measure,mean,recall,decay")
    for seq, vals in by_seq.items():
        js = sequence_stats([v[0] for v in vals])
        fs = sequence_stats([v[1] for v in vals])
        lines.append(f"{seq},J,{js.mean:.6g},{js.recall:.6g},{js.decay:.6g}")
        lines.append(f"{seq},F,{fs.mean:.6g},{fs.recall:.6g},{fs.decay:.6g}")
    return "\n".join(lines) + "\n"
