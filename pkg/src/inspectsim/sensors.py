"""Headless depth/segmentation/face-index rendering and a simulated range sensor.

All sensors are pure functions of (scene, pose): one raycast per pixel or beam.
Rendering happens natively at the network's 96x54 input resolution.
"""

from dataclasses import dataclass, field

import numpy as np

from inspectsim.geometry import InvalidArgumentError, yaw_matrix
from inspectsim.scene import Scene


@dataclass(frozen=True)
class CameraModel:
    h_fov_deg: float = 87.0
    v_fov_deg: float = 58.0
    width: int = 96
    height: int = 54
    max_range: float = 10.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidArgumentError("image dimensions must be positive")
        if not (0.0 < self.h_fov_deg < 180.0 and 0.0 < self.v_fov_deg < 180.0):
            raise InvalidArgumentError("fov must lie in (0, 180) degrees")

    def ray_directions(self) -> np.ndarray:
        """(H*W, 3) unit directions in the body frame (+x forward, +y left, +z up).

        Row 0 is the top of the image; pixel centers are used.
        """
        th = np.tan(np.deg2rad(self.h_fov_deg) / 2.0)
        tv = np.tan(np.deg2rad(self.v_fov_deg) / 2.0)
        u = (np.arange(self.width) + 0.5) / self.width * 2.0 - 1.0
        v = (np.arange(self.height) + 0.5) / self.height * 2.0 - 1.0
        yy = -u * th  # +y is left; image columns increase rightwards
        zz = -v[:, None] * tv  # +z is up; image rows increase downwards
        dirs = np.empty((self.height, self.width, 3))
        dirs[:, :, 0] = 1.0
        dirs[:, :, 1] = yy[None, :]
        dirs[:, :, 2] = zz * np.ones((1, self.width))
        dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
        return dirs.reshape(-1, 3)


@dataclass(frozen=True)
class LidarModel:
    h_fov_deg: float = 360.0
    v_fov_deg: float = 90.0
    h_rays: int = 128
    v_rays: int = 16
    max_range: float = 15.0

    def __post_init__(self):
        if self.h_rays < 1 or self.v_rays < 1:
            raise InvalidArgumentError("ray counts must be >= 1")

    def ray_directions(self) -> np.ndarray:
        """(h_rays*v_rays, 3) unit directions in the body frame."""
        az = 2.0 * np.pi * np.arange(self.h_rays) / self.h_rays
        half_v = np.deg2rad(self.v_fov_deg) / 2.0
        if self.v_rays == 1:
            el = np.array([0.0])
        else:
            el = np.linspace(-half_v, half_v, self.v_rays)
        azg, elg = np.meshgrid(az, el, indexing="ij")
        dirs = np.stack(
            [np.cos(elg) * np.cos(azg), np.cos(elg) * np.sin(azg), np.sin(elg)], axis=-1
        )
        return dirs.reshape(-1, 3)


@dataclass
class RenderResult:
    depth: np.ndarray  # (H, W) float64, 0 = invalid/miss
    mask: np.ndarray  # (H, W) uint8, 1 where first hit is the active semantic
    face_obj: np.ndarray  # (H, W) int64 object id, -1 = no hit
    face_id: np.ndarray  # (H, W) int64 face id, -1 = no hit


@dataclass
class PointCloud:
    origin: np.ndarray  # sensor position (3,)
    directions: np.ndarray  # (N, 3) world-frame unit rays
    ranges: np.ndarray  # (N,) range to hit, or max_range on miss
    is_hit: np.ndarray  # (N,) bool; False rays carve free space to max_range

    def points(self) -> np.ndarray:
        return self.origin[None, :] + self.directions * self.ranges[:, None]


# Per-(model id) cache of body-frame ray tables; models are frozen dataclasses.
_dir_cache: dict = {}


def _cached_dirs(model) -> np.ndarray:
    key = model
    d = _dir_cache.get(key)
    if d is None:
        d = model.ray_directions()
        _dir_cache[key] = d
    return d


def render(scene: Scene, position, yaw: float, active_label: int, camera: CameraModel = CameraModel()) -> RenderResult:
    """Raycast one depth/segmentation/face-index image triple.

    Depth stores Euclidean ray range (not z-depth); misses are 0.
    """
    body_dirs = _cached_dirs(camera)
    rot = yaw_matrix(yaw)
    dirs = body_dirs @ rot.T
    origins = np.broadcast_to(np.asarray(position, dtype=np.float64), dirs.shape)
    t, tri = scene.raycast_batch(np.ascontiguousarray(origins), np.ascontiguousarray(dirs), camera.max_range)
    hit = tri >= 0
    depth = np.where(hit, t, 0.0).reshape(camera.height, camera.width)
    safe_tri = np.where(hit, tri, 0)
    obj = np.where(hit, scene.tri_obj[safe_tri], -1).reshape(camera.height, camera.width)
    fid = np.where(hit, scene.tri_face[safe_tri], -1).reshape(camera.height, camera.width)
    label = np.where(hit, scene.tri_label[safe_tri], 0).reshape(camera.height, camera.width)
    mask = (label == active_label).astype(np.uint8) if active_label > 0 else np.zeros_like(depth, dtype=np.uint8)
    return RenderResult(depth=depth, mask=mask, face_obj=obj, face_id=fid)


def lidar_scan(scene: Scene, position, yaw: float, lidar: LidarModel = LidarModel()) -> PointCloud:
    """Spin one simulated range-sensor sweep; misses are flagged for free-space carving."""
    body_dirs = _cached_dirs(lidar)
    rot = yaw_matrix(yaw)
    dirs = body_dirs @ rot.T
    origin = np.asarray(position, dtype=np.float64)
    origins = np.broadcast_to(origin, dirs.shape)
    t, tri = scene.raycast_batch(np.ascontiguousarray(origins), np.ascontiguousarray(dirs), lidar.max_range)
    is_hit = tri >= 0
    ranges = np.where(is_hit, t, lidar.max_range)
    return PointCloud(origin=origin, directions=dirs, ranges=ranges, is_hit=is_hit)


def apply_depth_noise(depth: np.ndarray, rng: np.random.Generator, k_sigma: float) -> np.ndarray:
    """Gaussian range noise with std proportional to depth; invalid (0) pixels stay 0."""
    if k_sigma < 0:
        raise InvalidArgumentError("k_sigma must be >= 0")
    if k_sigma == 0.0:
        return depth.copy()
    noise = rng.normal(0.0, 1.0, size=depth.shape) * (k_sigma * depth)
    out = np.maximum(0.0, depth + noise)
    out[depth == 0.0] = 0.0
    return out


def apply_mask_dropout(mask: np.ndarray, rng: np.random.Generator, dropout: float) -> np.ndarray:
    """Randomly zero mask pixels to mimic imperfect real-world segmentation."""
    if dropout <= 0.0:
        return mask.copy()
    keep = rng.random(mask.shape) >= dropout
    return (mask.astype(bool) & keep).astype(np.uint8)


def save_pgm(path: str, depth: np.ndarray, max_range: float) -> None:
    """Portable graymap dump of a depth image, scaled to [0, 255]."""
    img = np.clip(depth / max_range * 255.0, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def save_pbm(path: str, mask: np.ndarray) -> None:
    """Portable bitmap dump of a binary mask."""
    with open(path, "w") as fh:
        fh.write(f"P1\n{mask.shape[1]} {mask.shape[0]}\n")
        for row in mask:
            fh.write(" ".join("1" if v else "0" for v in row) + "\n")
