"""Network input construction: flow normalization, angle fields, modalities.

Channel orders are load-bearing (weight files are meaningless without
them) and fixed here:

    rgb_single          R, G, B of frame t, scaled to [0, 1]
    rgb_pair            R, G, B of frame t, then R, G, B of frame t+1
    flow_vectors        u, v after per-frame zero-mean normalization
    angle_field         angle, scaled magnitude
    rgb_plus_angle_field  R, G, B of frame t, then angle, scaled magnitude
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from motionseg.flowio import FlowField
from motionseg.tensor import Tensor

EPS_MAGNITUDE = 1e-8

MODALITY_CHANNELS = {
    "rgb_single": 3,
    "rgb_pair": 6,
    "flow_vectors": 2,
    "angle_field": 2,
    "rgb_plus_angle_field": 5,
}


@dataclass
class AngleField:
    """Flow direction in (-pi, pi] plus magnitude rescaled so the frame
    maximum maps to pi (same range as the angle channel)."""

    angle: np.ndarray
    magnitude_scaled: np.ndarray

    def __post_init__(self):
        self.angle = np.asarray(self.angle, dtype=np.float32)
        self.magnitude_scaled = np.asarray(self.magnitude_scaled, dtype=np.float32)
        if self.angle.shape != self.magnitude_scaled.shape:
            raise ValueError("angle/magnitude shapes differ")


@dataclass
class NetworkInput:
    modality: str
    tensor: Tensor

    def __post_init__(self):
        expected = MODALITY_CHANNELS.get(self.modality)
        if expected is None:
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.tensor.c != expected:
            raise ValueError(
                f"{self.modality} needs {expected} channels, tensor has {self.tensor.c}"
            )


def normalize_zero_mean(flow: FlowField) -> FlowField:
    """Subtract the per-frame mean of u and of v independently."""
    return FlowField(
        u=flow.u - flow.u.mean(dtype=np.float64).astype(np.float32),
        v=flow.v - flow.v.mean(dtype=np.float64).astype(np.float32),
    )


def wrap_angle(a: np.ndarray) -> np.ndarray:
    """Wrap to (-pi, pi].

    Values within 1e-6 of -pi snap to +pi so that float32 round-trips of
    pi (whose nearest float32 lies just above the float64 pi) stay on the
    +pi side of the convention.
    """
    out = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    out = np.where(out < -np.pi + 1e-6, out + 2.0 * np.pi, out)
    return np.minimum(out, np.pi)


def to_angle_field(flow: FlowField) -> AngleField:
    mag = flow.magnitude()
    angle = np.arctan2(flow.v.astype(np.float64), flow.u.astype(np.float64))
    angle[mag == 0.0] = 0.0
    angle[angle == -np.pi] = np.pi
    scale = np.pi / max(float(mag.max()), EPS_MAGNITUDE)
    return AngleField(angle=angle, magnitude_scaled=mag * scale)


def _rgb_channels(rgb: np.ndarray, name: str) -> np.ndarray:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"{name} must be (h, w, 3), got shape {rgb.shape}")
    if rgb.dtype == np.uint8:
        rgb = rgb.astype(np.float32) / 255.0
    return rgb.astype(np.float32).transpose(2, 0, 1)


def build_input(
    modality: str,
    rgb_t: np.ndarray | None = None,
    rgb_t1: np.ndarray | None = None,
    flow: FlowField | None = None,
) -> NetworkInput:
    """Assemble the (1, c, h, w) tensor for one frame pair."""
    if modality not in MODALITY_CHANNELS:
        raise ValueError(f"unknown modality {modality!r}")

    def require(value, name):
        if value is None:
            raise ValueError(f"modality {modality!r} requires {name}")
        return value

    if modality == "rgb_single":
        chans = _rgb_channels(require(rgb_t, "rgb_t"), "rgb_t")
    elif modality == "rgb_pair":
        a = _rgb_channels(require(rgb_t, "rgb_t"), "rgb_t")
        b = _rgb_channels(require(rgb_t1, "rgb_t1"), "rgb_t1")
        if a.shape != b.shape:
            raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
        chans = np.concatenate([a, b], axis=0)
    elif modality == "flow_vectors":
        f = normalize_zero_mean(require(flow, "flow"))
        chans = np.stack([f.u, f.v], axis=0)
    elif modality == "angle_field":
        af = to_angle_field(require(flow, "flow"))
        chans = np.stack([af.angle, af.magnitude_scaled], axis=0)
    else:  # rgb_plus_angle_field
        rgb = _rgb_channels(require(rgb_t, "rgb_t"), "rgb_t")
        af = to_angle_field(require(flow, "flow"))
        if af.angle.shape != rgb.shape[1:]:
            raise ValueError(
                f"rgb {rgb.shape[1:]} and flow {af.angle.shape} sizes differ"
            )
        chans = np.concatenate(
            [rgb, af.angle[None], af.magnitude_scaled[None]], axis=0
        )
    return NetworkInput(modality=modality, tensor=Tensor(chans[None].astype(np.float32)))


def mirror_flow(flow: FlowField) -> FlowField:
    """Horizontal mirror: reverse columns and negate u."""
    return FlowField(u=-flow.u[:, ::-1], v=flow.v[:, ::-1])


def mirror_input_channels(data: np.ndarray, modality: str) -> np.ndarray:
    """Column-reverse an input tensor's (c, h, w) slab, applying the
    per-channel corrections the modality needs (u negated; angle mapped to
    pi - angle; RGB and magnitude only reversed)."""
    out = data[..., ::-1].copy()
    if modality == "flow_vectors":
        out[..., 0, :, :] = -out[..., 0, :, :]
    elif modality == "angle_field":
        out[..., 0, :, :] = wrap_angle(np.pi - out[..., 0, :, :])
    elif modality == "rgb_plus_angle_field":
        out[..., 3, :, :] = wrap_angle(np.pi - out[..., 3, :, :])
    return out.astype(data.dtype, copy=False)
