"""Procedural stereo frame-pair generator with exact geometric ground truth.

A scene is a textured background plane plus fronto-parallel textured
sprites at distinct depths, observed by a translating (and slightly
rotating) camera. Because every surface is an axis-aligned world plane,
flow, disparity and occlusion are all closed-form, which is what makes a
3-D displacement threshold on unprojected points a meaningful label rule.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from motionseg.flowio import (
    FileFormatError,
    FlowField,
    mask_to_pgm,
    pgm_to_mask,
    read_flo,
    read_pfm,
    read_ppm,
    write_flo,
    write_pfm,
    write_ppm,
)


class SceneConfigError(ValueError):
    """Raised for configurations that cannot produce a scene."""


# ---------------------------------------------------------------------------
# cameras
# ---------------------------------------------------------------------------


@dataclass
class CameraParams:
    """Pinhole camera with a stereo baseline.

    rotation/translation map world to camera coordinates:
    X_cam = R @ X_world + t.
    """

    focal: float
    cx: float
    cy: float
    baseline: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.focal <= 0:
            raise SceneConfigError(f"focal must be positive, got {self.focal}")
        if self.baseline <= 0:
            raise SceneConfigError(f"baseline must be positive, got {self.baseline}")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > 1e-6:
            raise SceneConfigError(f"rotation is not orthonormal (|R^T R - I| = {err:.2e})")

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation


def unproject(pixel, disparity, cam: CameraParams) -> np.ndarray:
    """Pixel + disparity to a world-frame 3-D point.

    Accepts scalars or arrays; pixel is (x, y) with arrays broadcast
    against disparity.
    """
    x, y = pixel
    disparity = np.asarray(disparity, dtype=np.float64)
    if np.any(disparity <= 0):
        raise ValueError("disparity must be positive")
    z = cam.focal * cam.baseline / disparity
    xc = (np.asarray(x, dtype=np.float64) - cam.cx) * z / cam.focal
    yc = (np.asarray(y, dtype=np.float64) - cam.cy) * z / cam.focal
    pts_cam = np.stack(np.broadcast_arrays(xc, yc, z), axis=-1)
    return (pts_cam - cam.translation) @ cam.rotation


def project(points, cam: CameraParams):
    """World points to pixel coordinates and camera depth."""
    pts = np.asarray(points, dtype=np.float64)
    pc = pts @ cam.rotation.T + cam.translation
    z = pc[..., 2]
    x = cam.focal * pc[..., 0] / z + cam.cx
    y = cam.focal * pc[..., 1] / z + cam.cy
    return x, y, z


def rotation_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if norm == 0 or angle == 0:
        return np.eye(3)
    k = axis / norm
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * (kx @ kx)


# ---------------------------------------------------------------------------
# configuration and sample containers
# ---------------------------------------------------------------------------


@dataclass
class SceneConfig:
    height: int = 64
    width: int = 64
    focal: float = 64.0
    baseline: float = 1.0
    background_depth: float = 60.0
    num_objects: tuple[int, int] = (2, 4)
    object_depth: tuple[float, float] = (15.0, 45.0)
    screen_fraction: tuple[float, float] = (0.14, 0.30)
    motion_probability: float = 0.7
    speed: tuple[float, float] = (0.5, 2.0)
    vertical_speed_fraction: float = 0.25
    camera_shift: tuple[float, float, float] = (1.2, 0.9, 0.5)
    camera_rotation_max: float = 0.008
    texture_style: str = "A"
    world_scale: float = 1.0

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise SceneConfigError(f"image size must be positive, got {self.height}x{self.width}")
        if self.num_objects[0] < 0 or self.num_objects[1] < self.num_objects[0]:
            raise SceneConfigError(f"bad object-count range {self.num_objects}")
        for name, rng_ in (("object_depth", self.object_depth), ("speed", self.speed),
                           ("screen_fraction", self.screen_fraction)):
            if rng_[1] < rng_[0] or rng_[0] < 0:
                raise SceneConfigError(f"bad {name} range {rng_}")
        if not (0.0 <= self.motion_probability <= 1.0):
            raise SceneConfigError("motion probability must be in [0, 1]")
        if self.texture_style not in ("A", "B"):
            raise SceneConfigError(f"unknown texture style {self.texture_style!r}")
        if self.world_scale <= 0:
            raise SceneConfigError("world scale must be positive")

    def rescaled(self, s: float) -> "SceneConfig":
        return replace(self, world_scale=self.world_scale * s)


@dataclass
class LabelGenParams:
    """3-D displacement threshold, in world units, above which a pixel
    counts as independently moving."""

    eps_motion: float = 1e-3
    footprint_rel_spread: float = 0.05

    def __post_init__(self):
        if self.eps_motion <= 0:
            raise ValueError("eps_motion must be positive")


@dataclass
class SceneSample:
    rgb_t: np.ndarray
    rgb_t1: np.ndarray
    flow_gt: FlowField
    disparity_t: np.ndarray
    disparity_t1: np.ndarray
    cam_t: CameraParams
    cam_t1: CameraParams
    instance_masks: list[np.ndarray]
    moving_flags: list[bool]
    moving_mask: np.ndarray
    occlusion_mask: np.ndarray
    seed: int

    def object_flag_raster(self) -> np.ndarray:
        """Per-pixel independent-motion flag of the covering object,
        regardless of frame t+1 visibility."""
        out = np.zeros(self.moving_mask.shape, dtype=np.uint8)
        for mask, flag in zip(self.instance_masks, self.moving_flags):
            if flag:
                out |= mask
        return out


@dataclass
class _Surface:
    depth: float
    center: np.ndarray  # (x, y) on its plane; background uses (0, 0)
    half_size: np.ndarray  # (hx, hy); background is unbounded
    velocity: np.ndarray
    moving: bool
    salt: int
    color_a: np.ndarray
    color_b: np.ndarray
    is_background: bool = False

    def position(self, frame: int) -> np.ndarray:
        base = np.array([self.center[0], self.center[1], self.depth])
        return base + frame * self.velocity


# ---------------------------------------------------------------------------
# procedural textures
# ---------------------------------------------------------------------------

_HASH_A = np.uint64(0x9E3779B97F4A7C15)
_HASH_B = np.uint64(0xBF58476D1CE4E5B9)


def _hash01(ix: np.ndarray, iy: np.ndarray, salt: int) -> np.ndarray:
    salt_mix = np.uint64((salt * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF)
    h = ix.astype(np.uint64) * _HASH_A ^ iy.astype(np.uint64) * _HASH_B
    h = h + salt_mix
    h ^= h >> np.uint64(31)
    h *= _HASH_B
    h ^= h >> np.uint64(29)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _value_noise(u: np.ndarray, v: np.ndarray, salt: int, freq: float) -> np.ndarray:
    x = u * freq
    y = v * freq
    ix = np.floor(x).astype(np.int64)
    iy = np.floor(y).astype(np.int64)
    fx = x - ix
    fy = y - iy
    fx = fx * fx * (3.0 - 2.0 * fx)
    fy = fy * fy * (3.0 - 2.0 * fy)
    n00 = _hash01(ix, iy, salt)
    n10 = _hash01(ix + 1, iy, salt)
    n01 = _hash01(ix, iy + 1, salt)
    n11 = _hash01(ix + 1, iy + 1, salt)
    return (n00 * (1 - fx) + n10 * fx) * (1 - fy) + (n01 * (1 - fx) + n11 * fx) * fy


def _fractal_noise(u, v, salt):
    return (
        0.55 * _value_noise(u, v, salt, 4.0)
        + 0.30 * _value_noise(u, v, salt + 101, 9.0)
        + 0.15 * _value_noise(u, v, salt + 202, 19.0)
    )


def _surface_rgb(surface: _Surface, u: np.ndarray, v: np.ndarray, style: str) -> np.ndarray:
    """Texture in [0, 1]^3 at surface-local coordinates.

    Style A paints objects with vivid two-color noise over a dull noisy
    background; style B swaps the roles and switches patterns, so
    appearance learned on one style does not transfer to the other.
    """
    g = _fractal_noise(u, v, surface.salt)
    vivid = surface.color_a[None] + g[..., None] * (surface.color_b - surface.color_a)[None]
    dull_base = 0.30 + 0.35 * g
    dull = dull_base[..., None] * (0.8 + 0.2 * surface.color_a)[None]
    if style == "A":
        return dull if surface.is_background else vivid
    # style B: bright striped background, dull checkered objects
    if surface.is_background:
        stripes = (np.floor((u + v) * 7.0).astype(np.int64) % 2).astype(np.float64)
        mix = 0.75 * stripes + 0.25 * g
        return surface.color_a[None] + mix[..., None] * (surface.color_b - surface.color_a)[None]
    checker = ((np.floor(u * 5.0) + np.floor(v * 5.0)).astype(np.int64) % 2).astype(np.float64)
    base = 0.25 + 0.30 * checker + 0.15 * g
    return base[..., None] * (0.75 + 0.25 * surface.color_b)[None]


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def _pixel_rays(cfg: SceneConfig, cam: CameraParams):
    ys, xs = np.mgrid[0 : cfg.height, 0 : cfg.width].astype(np.float64)
    d_cam = np.stack(
        [(xs - cam.cx) / cam.focal, (ys - cam.cy) / cam.focal, np.ones_like(xs)], axis=-1
    )
    d_world = d_cam @ cam.rotation  # == R^T d_cam per pixel
    return cam.center, d_world


def _local_coords(surface: _Surface, pts: np.ndarray, frame: int, cfg: SceneConfig):
    pos = surface.position(frame)
    if surface.is_background:
        scale = 0.9 * surface.depth
        return (pts[..., 0] - pos[0]) / scale + 0.5, (pts[..., 1] - pos[1]) / scale + 0.5
    u = (pts[..., 0] - pos[0]) / (2 * surface.half_size[0]) + 0.5
    v = (pts[..., 1] - pos[1]) / (2 * surface.half_size[1]) + 0.5
    return u, v


def _render_frame(cfg: SceneConfig, cam: CameraParams, surfaces: list[_Surface], frame: int):
    """Exact per-pixel ray casting against all planes.

    Returns (rgb float, surface-id map, camera-depth map, world points).
    """
    origin, dirs = _pixel_rays(cfg, cam)
    h, w = cfg.height, cfg.width
    best_depth = np.full((h, w), np.inf)
    id_map = np.full((h, w), -1, dtype=np.int32)
    points = np.zeros((h, w, 3))
    for si, surface in enumerate(surfaces):
        plane_z = surface.position(frame)[2]
        denom = dirs[..., 2]
        t_ray = (plane_z - origin[2]) / denom
        pts = origin[None, None] + t_ray[..., None] * dirs
        if surface.is_background:
            hit = t_ray > 0
        else:
            pos = surface.position(frame)
            hit = (
                (t_ray > 0)
                & (np.abs(pts[..., 0] - pos[0]) <= surface.half_size[0])
                & (np.abs(pts[..., 1] - pos[1]) <= surface.half_size[1])
            )
        better = hit & (t_ray < best_depth)
        best_depth[better] = t_ray[better]
        id_map[better] = si
        points[better] = pts[better]

    rgb = np.zeros((h, w, 3))
    for si, surface in enumerate(surfaces):
        sel = id_map == si
        if not sel.any():
            continue
        u, v = _local_coords(surface, points[sel], frame, cfg)
        rgb[sel] = _surface_rgb(surface, u, v, cfg.texture_style)
    return rgb, id_map, best_depth, points


def _quantize_rgb(rgb: np.ndarray) -> np.ndarray:
    return np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)


def _occluded_by_other(
    surfaces: list[_Surface], own_id: np.ndarray, pts_t1: np.ndarray,
    cam_t1: CameraParams, frame: int = 1,
) -> np.ndarray:
    """Exact visibility test: is the segment camera-center -> point crossed
    by a nearer sprite plane inside that sprite's bounds?"""
    origin = cam_t1.center
    seg = pts_t1 - origin
    occ = np.zeros(own_id.shape, dtype=bool)
    for si, surface in enumerate(surfaces):
        if surface.is_background:
            continue
        pos = surface.position(frame)
        denom = seg[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = (pos[2] - origin[2]) / denom
        crossing = (alpha > 1e-9) & (alpha < 1.0 - 1e-9) & (si != own_id)
        hit_x = origin[0] + alpha * seg[..., 0]
        hit_y = origin[1] + alpha * seg[..., 1]
        inside = (np.abs(hit_x - pos[0]) <= surface.half_size[0]) & (
            np.abs(hit_y - pos[1]) <= surface.half_size[1]
        )
        occ |= crossing & inside
    return occ


def generate_scene(cfg: SceneConfig, seed: int) -> SceneSample:
    """Deterministic scene synthesis; identical (cfg, seed) gives an
    identical sample."""
    rng = np.random.default_rng(np.random.PCG64(seed))
    s = cfg.world_scale
    h, w = cfg.height, cfg.width

    surfaces: list[_Surface] = []
    bg_colors = rng.random((2, 3))
    surfaces.append(
        _Surface(
            depth=cfg.background_depth * s,
            center=np.zeros(2),
            half_size=np.array([np.inf, np.inf]),
            velocity=np.zeros(3),
            moving=False,
            salt=int(rng.integers(1, 2**31 - 1)),
            color_a=0.55 + 0.45 * bg_colors[0],
            color_b=0.55 + 0.45 * bg_colors[1],
            is_background=True,
        )
    )

    count = int(rng.integers(cfg.num_objects[0], cfg.num_objects[1] + 1))
    for _ in range(count):
        depth = (cfg.object_depth[0] + (cfg.object_depth[1] - cfg.object_depth[0]) * rng.random()) * s
        frac = cfg.screen_fraction[0] + (cfg.screen_fraction[1] - cfg.screen_fraction[0]) * rng.random()
        half = frac * 0.5 * w * depth / cfg.focal
        aspect = 0.7 + 0.6 * rng.random()
        half_size = np.array([half, half * aspect])
        # keep the sprite center in the frustum of the reference camera
        extent_x = 0.5 * w * depth / cfg.focal - half_size[0]
        extent_y = 0.5 * h * depth / cfg.focal - half_size[1]
        center = np.array(
            [
                (2.0 * rng.random() - 1.0) * max(extent_x, 0.0),
                (2.0 * rng.random() - 1.0) * max(extent_y, 0.0),
            ]
        )
        colors = rng.random((2, 3))
        moving = rng.random() < cfg.motion_probability
        direction = rng.normal(size=3)
        direction[2] *= cfg.vertical_speed_fraction
        direction /= max(np.linalg.norm(direction), 1e-12)
        speed = (cfg.speed[0] + (cfg.speed[1] - cfg.speed[0]) * rng.random()) * s
        velocity = direction * speed if moving else np.zeros(3)
        surfaces.append(
            _Surface(
                depth=depth,
                center=center,
                half_size=half_size,
                velocity=velocity,
                moving=moving,
                salt=int(rng.integers(1, 2**31 - 1)),
                color_a=np.clip(0.15 + 0.85 * colors[0], 0, 1),
                color_b=np.clip(0.15 + 0.85 * colors[1], 0, 1),
            )
        )

    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    center_t = rng.normal(size=3) * 0.05 * s
    shift = np.array(
        [(2.0 * rng.random() - 1.0) * cfg.camera_shift[i] for i in range(3)]
    ) * s
    rot_axis_t = rng.normal(size=3)
    rot_angle_t = rng.random() * cfg.camera_rotation_max
    rot_axis_t1 = rng.normal(size=3)
    rot_angle_t1 = rng.random() * cfg.camera_rotation_max

    def make_cam(center, axis, angle):
        rot = rotation_from_axis_angle(axis, angle)
        return CameraParams(
            focal=cfg.focal, cx=cx, cy=cy, baseline=cfg.baseline * s,
            rotation=rot, translation=-rot @ center,
        )

    cam_t = make_cam(center_t, rot_axis_t, rot_angle_t)
    cam_t1 = make_cam(center_t + shift, rot_axis_t1, rot_angle_t1)

    rgb_t, id_t, depth_t, pts_t = _render_frame(cfg, cam_t, surfaces, frame=0)
    rgb_t1, id_t1, depth_t1, _ = _render_frame(cfg, cam_t1, surfaces, frame=1)

    velocities = np.stack([sf.velocity for sf in surfaces])
    pts_moved = pts_t + velocities[id_t]
    fx, fy, z1 = project(pts_moved, cam_t1)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    flow = FlowField(u=(fx - xs).astype(np.float32), v=(fy - ys).astype(np.float32))

    out_of_frame = (fx < 0) | (fx > w - 1) | (fy < 0) | (fy > h - 1)
    occluded = out_of_frame | _occluded_by_other(surfaces, id_t, pts_moved, cam_t1)

    moving_flags = [sf.moving for sf in surfaces[1:]]
    instance_masks = [(id_t == si).astype(np.uint8) for si in range(1, len(surfaces))]
    flag_map = np.zeros((h, w), dtype=bool)
    for mask, flag in zip(instance_masks, moving_flags):
        if flag:
            flag_map |= mask.astype(bool)
    moving_mask = (flag_map & ~occluded).astype(np.uint8)

    return SceneSample(
        rgb_t=_quantize_rgb(rgb_t),
        rgb_t1=_quantize_rgb(rgb_t1),
        flow_gt=flow,
        disparity_t=(cfg.focal * cfg.baseline * s / depth_t).astype(np.float32),
        disparity_t1=(cfg.focal * cfg.baseline * s / depth_t1).astype(np.float32),
        cam_t=cam_t,
        cam_t1=cam_t1,
        instance_masks=instance_masks,
        moving_flags=moving_flags,
        moving_mask=moving_mask,
        occlusion_mask=occluded.astype(np.uint8),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# label derivation (the 3-D displacement rule)
# ---------------------------------------------------------------------------


def bilinear_sample(values: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Sample a (h, w) map at float coordinates, plus the footprint's
    min/max for reliability checks. Coordinates must be in bounds."""
    vals = np.asarray(values, dtype=np.float64)
    h, w = vals.shape
    x0 = np.clip(np.floor(x).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(y).astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = x - x0
    ty = y - y0
    c00 = vals[y0, x0]
    c10 = vals[y0, x1]
    c01 = vals[y1, x0]
    c11 = vals[y1, x1]
    out = (c00 * (1 - tx) + c10 * tx) * (1 - ty) + (c01 * (1 - tx) + c11 * tx) * ty
    corners = np.stack([c00, c10, c01, c11])
    return out, corners.min(axis=0), corners.max(axis=0)


def derive_motion_labels(sample: SceneSample, params: LabelGenParams) -> np.ndarray:
    """Label a pixel moving when its unprojected 3-D point in frames t and
    t+1 differs by more than eps_motion.

    Pixels that cannot be compared geometrically (occluded, flow target
    out of frame, or a disparity footprint that straddles a depth edge)
    fall back to the generator's per-object motion flag.
    """
    h, w = sample.disparity_t.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    tx = xs + sample.flow_gt.u
    ty = ys + sample.flow_gt.v

    out_of_frame = (tx < 0) | (tx > w - 1) | (ty < 0) | (ty > h - 1)
    txc = np.clip(tx, 0, w - 1)
    tyc = np.clip(ty, 0, h - 1)
    d1, d1_min, d1_max = bilinear_sample(sample.disparity_t1, txc, tyc)
    mixed = (d1_max - d1_min) > params.footprint_rel_spread * np.maximum(d1, 1e-12)

    unreliable = out_of_frame | sample.occlusion_mask.astype(bool) | mixed

    p_t = unproject((xs, ys), sample.disparity_t, sample.cam_t)
    p_t1 = unproject((txc, tyc), np.maximum(d1, 1e-12), sample.cam_t1)
    displacement = np.linalg.norm(p_t1 - p_t, axis=-1)
    moving = displacement > params.eps_motion

    flags = sample.object_flag_raster().astype(bool)
    return np.where(unreliable, flags, moving).astype(np.uint8)


# ---------------------------------------------------------------------------
# dataset round trip
# ---------------------------------------------------------------------------

_CAM_FIELDS = 16  # focal cx cy baseline r(9) t(3)


def _format_camera(cam: CameraParams) -> str:
    vals = [cam.focal, cam.cx, cam.cy, cam.baseline]
    vals += list(cam.rotation.reshape(-1))
    vals += list(cam.translation)
    return " ".join(f"{v:.17g}" for v in vals)


def _parse_camera(line: str) -> CameraParams:
    parts = line.split()
    if len(parts) != _CAM_FIELDS:
        raise FileFormatError(f"camera line has {len(parts)} fields, expected {_CAM_FIELDS}")
    vals = [float(p) for p in parts]
    return CameraParams(
        focal=vals[0], cx=vals[1], cy=vals[2], baseline=vals[3],
        rotation=np.array(vals[4:13]).reshape(3, 3), translation=np.array(vals[13:16]),
    )


def write_cameras(cam_t: CameraParams, cam_t1: CameraParams) -> str:
    return _format_camera(cam_t) + "\n" + _format_camera(cam_t1) + "\n"


def read_cameras(text: str) -> tuple[CameraParams, CameraParams]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) != 2:
        raise FileFormatError(f"camera file has {len(lines)} lines, expected 2")
    return _parse_camera(lines[0]), _parse_camera(lines[1])


def _sample_dir(root: Path, index: int) -> Path:
    return root / f"sample_{index:05d}"


def write_dataset(samples: list[SceneSample], root: Path | str) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for i, smp in enumerate(samples):
        d = _sample_dir(root, i)
        d.mkdir(parents=True, exist_ok=True)
        (d / "rgb_t.ppm").write_bytes(write_ppm(smp.rgb_t))
        (d / "rgb_t1.ppm").write_bytes(write_ppm(smp.rgb_t1))
        (d / "flow_gt.flo").write_bytes(write_flo(smp.flow_gt))
        (d / "disparity_t.pfm").write_bytes(write_pfm(smp.disparity_t))
        (d / "disparity_t1.pfm").write_bytes(write_pfm(smp.disparity_t1))
        (d / "moving_mask.pgm").write_bytes(mask_to_pgm(smp.moving_mask))
        (d / "occlusion_mask.pgm").write_bytes(mask_to_pgm(smp.occlusion_mask))
        (d / "cameras.txt").write_text(write_cameras(smp.cam_t, smp.cam_t1))
        for k, mask in enumerate(smp.instance_masks):
            (d / f"instance_{k:02d}.pgm").write_bytes(mask_to_pgm(mask))
        lines = [f"seed {smp.seed}"]
        lines += [
            f"object {k} moving {int(flag)}" for k, flag in enumerate(smp.moving_flags)
        ]
        (d / "objects.txt").write_text("\n".join(lines) + "\n")


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing dataset file: {path}")
    return path


def read_dataset(root: Path | str) -> list[SceneSample]:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"missing dataset directory: {root}")
    samples = []
    for d in sorted(root.glob("sample_*")):
        cam_t, cam_t1 = read_cameras(_require(d / "cameras.txt").read_text())
        obj_text = _require(d / "objects.txt").read_text()
        seed = 0
        flags: list[bool] = []
        for line in obj_text.splitlines():
            m = re.match(r"seed (\d+)", line)
            if m:
                seed = int(m.group(1))
            m = re.match(r"object (\d+) moving ([01])", line)
            if m:
                flags.append(bool(int(m.group(2))))
        instance_masks = [
            pgm_to_mask(p.read_bytes()) for p in sorted(d.glob("instance_*.pgm"))
        ]
        samples.append(
            SceneSample(
                rgb_t=read_ppm(_require(d / "rgb_t.ppm").read_bytes()),
                rgb_t1=read_ppm(_require(d / "rgb_t1.ppm").read_bytes()),
                flow_gt=read_flo(_require(d / "flow_gt.flo").read_bytes()),
                disparity_t=read_pfm(_require(d / "disparity_t.pfm").read_bytes()),
                disparity_t1=read_pfm(_require(d / "disparity_t1.pfm").read_bytes()),
                cam_t=cam_t,
                cam_t1=cam_t1,
                instance_masks=instance_masks,
                moving_flags=flags,
                moving_mask=pgm_to_mask(_require(d / "moving_mask.pgm").read_bytes()),
                occlusion_mask=pgm_to_mask(_require(d / "occlusion_mask.pgm").read_bytes()),
                seed=seed,
            )
        )
    return samples
