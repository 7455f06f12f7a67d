"""Triangle meshes, primitive tessellations, and rigid-transform helpers.

Quaternions are (w, x, y, z). The body frame is FLU: +x forward, +y left, +z up.
"""

from dataclasses import dataclass

import numpy as np


class InvalidArgumentError(ValueError):
    pass


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray  # (V, 3) float64, meters
    faces: np.ndarray  # (F, 3) int64 vertex indices

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if f.shape[0] < 1:
            raise InvalidArgumentError("mesh needs at least one face")
        if f.min() < 0 or f.max() >= v.shape[0]:
            raise InvalidArgumentError("face index out of range")
        if np.any(self.face_areas() <= 0.0):
            raise InvalidArgumentError("degenerate face with zero area")

    @property
    def face_count(self) -> int:
        return int(self.faces.shape[0])

    def face_areas(self) -> np.ndarray:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def face_centroids(self) -> np.ndarray:
        return self.vertices[self.faces].mean(axis=1)

    def total_area(self) -> float:
        return float(self.face_areas().sum())


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([np.cos(yaw / 2.0), 0.0, 0.0, np.sin(yaw / 2.0)])


def yaw_from_quat(q: np.ndarray) -> float:
    w, x, y, z = q
    return float(np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def transform_mesh(mesh: TriMesh, position: np.ndarray, quat: np.ndarray) -> np.ndarray:
    """World-space vertices of a posed mesh."""
    rot = quat_to_matrix(np.asarray(quat, dtype=np.float64))
    return np.asarray(position, dtype=np.float64) + mesh.vertices @ rot.T


def _check_positive(name, *vals):
    for v in vals:
        if not np.isfinite(v) or v <= 0.0:
            raise InvalidArgumentError(f"{name}: dimensions must be positive, got {v}")


def box_mesh(sx: float, sy: float, sz: float) -> TriMesh:
    """Axis-aligned box centered at the origin, 12 triangles."""
    _check_positive("box", sx, sy, sz)
    hx, hy, hz = sx / 2.0, sy / 2.0, sz / 2.0
    verts = np.array(
        [
            [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
            [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
        ]
    )
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom
            [4, 5, 6], [4, 6, 7],  # top
            [0, 1, 5], [0, 5, 4],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [1, 2, 6], [1, 6, 5],  # +x
            [3, 0, 4], [3, 4, 7],  # -x
        ]
    )
    return TriMesh(verts, faces)


def cylinder_mesh(radius: float, height: float, segments: int = 15) -> TriMesh:
    """Closed cylinder along +z, centered at the origin. Face count is 4*segments.

    With the default 15 segments the tessellation has exactly 60 faces, which is
    the stable face budget used for the default inspection target.
    """
    _check_positive("cylinder", radius, height)
    if segments < 8:
        raise InvalidArgumentError("cylinder needs >= 8 segments")
    hz = height / 2.0
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    bot = np.column_stack([ring, np.full(segments, -hz)])
    top = np.column_stack([ring, np.full(segments, hz)])
    verts = np.vstack([bot, top, [[0.0, 0.0, -hz]], [[0.0, 0.0, hz]]])
    cb = 2 * segments
    ct = 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        # side quad split into two triangles, outward winding
        faces.append([i, j, segments + j])
        faces.append([i, segments + j, segments + i])
    for i in range(segments):
        j = (i + 1) % segments
        faces.append([cb, j, i])  # bottom fan, normal -z
        faces.append([ct, segments + i, segments + j])  # top fan, normal +z
    return TriMesh(verts, np.array(faces))


def sphere_mesh(radius: float, segments: int = 16, rings: int | None = None) -> TriMesh:
    """UV sphere centered at the origin."""
    _check_positive("sphere", radius)
    if segments < 8:
        raise InvalidArgumentError("sphere needs >= 8 segments")
    if rings is None:
        rings = max(4, segments // 2)
    verts = [[0.0, 0.0, radius]]
    for r in range(1, rings):
        phi = np.pi * r / rings
        z = radius * np.cos(phi)
        s = radius * np.sin(phi)
        for i in range(segments):
            th = 2.0 * np.pi * i / segments
            verts.append([s * np.cos(th), s * np.sin(th), z])
    verts.append([0.0, 0.0, -radius])
    south = len(verts) - 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces.append([0, 1 + i, 1 + j])
    for r in range(rings - 2):
        a = 1 + r * segments
        b = a + segments
        for i in range(segments):
            j = (i + 1) % segments
            faces.append([a + i, b + i, b + j])
            faces.append([a + i, b + j, a + j])
    a = 1 + (rings - 2) * segments
    for i in range(segments):
        j = (i + 1) % segments
        faces.append([south, a + j, a + i])
    return TriMesh(np.array(verts), np.array(faces))


def primitive_mesh(kind: str, dimensions) -> TriMesh:
    """Tessellate a primitive. dimensions: box/wall (sx,sy,sz); cylinder (r,h[,segments]);
    sphere (r[,segments])."""
    d = list(dimensions)
    if kind in ("box", "wall"):
        return box_mesh(*d[:3])
    if kind == "cylinder":
        seg = int(d[2]) if len(d) > 2 else 15
        return cylinder_mesh(d[0], d[1], seg)
    if kind == "sphere":
        seg = int(d[1]) if len(d) > 1 else 16
        return sphere_mesh(d[0], seg)
    raise InvalidArgumentError(f"unknown primitive kind {kind!r}")
