"""Randomized room scenes: primitive obstacles, labeled inspection targets, and a
BVH over all world-space triangles for raycasting.

Scenes are immutable after construction; every consumer only reads the baked
triangle arrays.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from inspectsim import kernels
from inspectsim.geometry import (
    InvalidArgumentError,
    TriMesh,
    primitive_mesh,
    quat_from_yaw,
    transform_mesh,
)


class GenerationError(RuntimeError):
    def __init__(self, msg, seed=None):
        super().__init__(msg if seed is None else f"{msg} (seed={seed})")
        self.seed = seed


@dataclass(frozen=True)
class SceneObject:
    mesh: TriMesh
    position: np.ndarray
    quat: np.ndarray  # (w, x, y, z), unit norm
    semantic_label: int = 0  # 0 = plain obstacle, >0 = semantic class
    kind: str = "imported"

    def __post_init__(self):
        q = np.asarray(self.quat, dtype=np.float64)
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise InvalidArgumentError("orientation quaternion must be unit norm")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "quat", q)

    def world_vertices(self) -> np.ndarray:
        return transform_mesh(self.mesh, self.position, self.quat)


@dataclass(frozen=True)
class RoomSpec:
    length: float = 10.0
    width: float = 10.0
    height: float = 4.0
    obstacle_count: int = 9
    semantic_count: int = 1
    seed: int = 0
    semantic_kind: str = "cylinder"  # default target tessellates to exactly 60 faces

    def __post_init__(self):
        if not (4.0 <= self.length <= 20.0 and 4.0 <= self.width <= 20.0):
            raise InvalidArgumentError("room length/width must lie in [4, 20] m")
        if not (2.0 <= self.height <= 8.0):
            raise InvalidArgumentError("room height must lie in [2, 8] m")
        if not (0 <= self.obstacle_count <= 19):
            raise InvalidArgumentError("obstacle_count must lie in [0, 19]")
        if self.semantic_count < 1:
            raise InvalidArgumentError("need at least one semantic target")


@dataclass(frozen=True)
class Hit:
    t: float
    point: np.ndarray
    object_id: int
    face_id: int
    label: int


@dataclass
class _Bvh:
    node_min: np.ndarray
    node_max: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray


_WALL_THICKNESS = 0.1
_LEAF_SIZE = 4


def _build_bvh(tmin: np.ndarray, tmax: np.ndarray) -> _Bvh:
    """Median-split BVH over triangle AABBs, flattened to arrays."""
    n = tmin.shape[0]
    centroids = 0.5 * (tmin + tmax)
    order = np.arange(n, dtype=np.int64)
    node_min, node_max, left, right, start, count = [], [], [], [], [], []

    def new_node():
        node_min.append(np.zeros(3))
        node_max.append(np.zeros(3))
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        return len(count) - 1

    def build(lo, hi):
        idx = new_node()
        sel = order[lo:hi]
        node_min[idx] = tmin[sel].min(axis=0)
        node_max[idx] = tmax[sel].max(axis=0)
        if hi - lo <= _LEAF_SIZE:
            start[idx] = lo
            count[idx] = hi - lo
            return idx
        cen = centroids[sel]
        axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
        mid = (hi - lo) // 2
        part = np.argsort(cen[:, axis], kind="stable")
        order[lo:hi] = sel[part]
        lc = build(lo, lo + mid)
        rc = build(lo + mid, hi)
        left[idx] = lc
        right[idx] = rc
        return idx

    build(0, n)
    return _Bvh(
        np.ascontiguousarray(node_min),
        np.ascontiguousarray(node_max),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(start, dtype=np.int64),
        np.asarray(count, dtype=np.int64),
        order,
    )


class Scene:
    """Immutable collection of posed objects with baked triangle arrays and a BVH."""

    def __init__(self, objects: list[SceneObject], bounds_min, bounds_max):
        self.objects = list(objects)
        self.bounds_min = np.asarray(bounds_min, dtype=np.float64)
        self.bounds_max = np.asarray(bounds_max, dtype=np.float64)

        v0s, v1s, v2s, objs, faces, labels = [], [], [], [], [], []
        for oid, obj in enumerate(self.objects):
            wv = obj.world_vertices()
            f = obj.mesh.faces
            v0s.append(wv[f[:, 0]])
            v1s.append(wv[f[:, 1]])
            v2s.append(wv[f[:, 2]])
            objs.append(np.full(f.shape[0], oid, dtype=np.int64))
            faces.append(np.arange(f.shape[0], dtype=np.int64))
            labels.append(np.full(f.shape[0], obj.semantic_label, dtype=np.int64))
        self.tri_v0 = np.ascontiguousarray(np.vstack(v0s))
        self.tri_v1 = np.ascontiguousarray(np.vstack(v1s))
        self.tri_v2 = np.ascontiguousarray(np.vstack(v2s))
        self.tri_e1 = np.ascontiguousarray(self.tri_v1 - self.tri_v0)
        self.tri_e2 = np.ascontiguousarray(self.tri_v2 - self.tri_v0)
        self.tri_obj = np.concatenate(objs)
        self.tri_face = np.concatenate(faces)
        self.tri_label = np.concatenate(labels)
        tmin = np.minimum(np.minimum(self.tri_v0, self.tri_v1), self.tri_v2)
        tmax = np.maximum(np.maximum(self.tri_v0, self.tri_v1), self.tri_v2)
        self.bvh = _build_bvh(tmin, tmax)

    @property
    def triangle_count(self) -> int:
        return int(self.tri_v0.shape[0])

    def semantic_object_ids(self) -> dict[int, int]:
        """Map semantic label -> object index."""
        return {o.semantic_label: i for i, o in enumerate(self.objects) if o.semantic_label > 0}

    def raycast_batch(self, origins, dirs, t_max):
        """Vectorized nearest-hit query. Returns (t, tri_index) arrays; miss is (inf, -1)."""
        origins = np.ascontiguousarray(origins, dtype=np.float64)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64)
        n = origins.shape[0]
        out_t = np.empty(n)
        out_tri = np.empty(n, dtype=np.int64)
        b = self.bvh
        kernels.bvh_raycast(
            origins, dirs, float(t_max),
            b.node_min, b.node_max, b.left, b.right, b.start, b.count, b.order,
            self.tri_v0, self.tri_e1, self.tri_e2, self.tri_obj, self.tri_face,
            out_t, out_tri,
        )
        return out_t, out_tri

    def point_distance(self, point) -> float:
        p = np.asarray(point, dtype=np.float64)
        return float(kernels.point_mesh_distance(p[0], p[1], p[2], self.tri_v0, self.tri_v1, self.tri_v2))

    def interior_min(self) -> np.ndarray:
        return self.bounds_min + _WALL_THICKNESS

    def interior_max(self) -> np.ndarray:
        return self.bounds_max - _WALL_THICKNESS


def raycast(scene: Scene, origin, direction, t_max: float) -> Hit | None:
    """Nearest intersection along a unit-norm direction, or None."""
    direction = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-6:
        raise InvalidArgumentError("direction must be unit norm")
    if t_max <= 0:
        raise InvalidArgumentError("t_max must be positive")
    origin = np.asarray(origin, dtype=np.float64)
    t, tri = scene.raycast_batch(origin[None, :], direction[None, :], t_max)
    if tri[0] < 0:
        return None
    i = int(tri[0])
    return Hit(
        t=float(t[0]),
        point=origin + direction * t[0],
        object_id=int(scene.tri_obj[i]),
        face_id=int(scene.tri_face[i]),
        label=int(scene.tri_label[i]),
    )


def _wall_objects(L, W, H) -> list[SceneObject]:
    """Six axis-aligned slabs enclosing the interior [0,L]x[0,W]x[0,H]."""
    t = _WALL_THICKNESS
    q = np.array([1.0, 0.0, 0.0, 0.0])
    specs = [
        ((L + 2 * t, W + 2 * t, t), (L / 2, W / 2, -t / 2)),  # floor
        ((L + 2 * t, W + 2 * t, t), (L / 2, W / 2, H + t / 2)),  # ceiling
        ((t, W + 2 * t, H), (-t / 2, W / 2, H / 2)),
        ((t, W + 2 * t, H), (L + t / 2, W / 2, H / 2)),
        ((L + 2 * t, t, H), (L / 2, -t / 2, H / 2)),
        ((L + 2 * t, t, H), (L / 2, W + t / 2, H / 2)),
    ]
    return [
        SceneObject(primitive_mesh("wall", dims), np.array(pos), q, 0, "wall")
        for dims, pos in specs
    ]


def _aabb(obj: SceneObject):
    wv = obj.world_vertices()
    return wv.min(axis=0), wv.max(axis=0)


def _aabb_overlap(amin, amax, bmin, bmax, margin=0.0) -> bool:
    return bool(np.all(amin - margin < bmax) and np.all(bmin - margin < amax))


_MAX_PLACEMENT_TRIES = 200
_MAX_RESAMPLES = 40


def _place(rng, mesh, kind, label, L, W, H, reject_boxes, margin, seed, tries=_MAX_PLACEMENT_TRIES):
    """Sample a pose whose AABB fits the interior and avoids the reject list."""
    for _ in range(tries):
        yaw = rng.uniform(0.0, 2.0 * np.pi) if kind in ("box", "cylinder") else 0.0
        q = quat_from_yaw(yaw)
        probe = SceneObject(mesh, np.zeros(3), q, label, kind)
        mn, mx = _aabb(probe)
        ext = mx - mn
        lo = np.array([0.3, 0.3, 0.3]) - mn
        hi = np.array([L - 0.3, W - 0.3, H - 0.3]) - mx
        if np.any(hi < lo):
            continue
        pos = rng.uniform(lo, hi)
        omin, omax = mn + pos, mx + pos
        if any(_aabb_overlap(omin, omax, rmin, rmax, margin) for rmin, rmax in reject_boxes):
            continue
        return SceneObject(mesh, pos, q, label, kind), (omin, omax)
    raise GenerationError("object placement failed after bounded retries", seed)


def generate_room(spec: RoomSpec) -> Scene:
    """Deterministic procedural room: shell walls, semantic targets, then obstacles.

    Obstacles may interpenetrate each other but never a semantic target, so every
    target remains a distinct inspectable body.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    L, W, H = spec.length, spec.width, spec.height
    objects = _wall_objects(L, W, H)

    def place_resampling(draw):
        # dimensions too large for the room make placement impossible for any
        # pose, so redraw the primitive itself on failure
        for _ in range(_MAX_RESAMPLES):
            kind, mesh, label = draw()
            try:
                return _place(rng, mesh, kind, label, L, W, H, semantic_boxes, 0.2, spec.seed, tries=50)
            except GenerationError:
                continue
        raise GenerationError("object placement failed after bounded retries", spec.seed)

    semantic_boxes = []
    for label in range(1, spec.semantic_count + 1):

        def draw_semantic(label=label):
            if spec.semantic_kind == "cylinder":
                mesh = primitive_mesh("cylinder", (rng.uniform(0.25, 0.45), rng.uniform(0.6, 1.2)))
            elif spec.semantic_kind == "box":
                mesh = primitive_mesh("box", rng.uniform(0.4, 0.9, 3))
            elif spec.semantic_kind == "sphere":
                mesh = primitive_mesh("sphere", (rng.uniform(0.3, 0.5),))
            else:
                raise InvalidArgumentError(f"unknown semantic kind {spec.semantic_kind!r}")
            return spec.semantic_kind, mesh, label

        obj, box = place_resampling(draw_semantic)
        objects.append(obj)
        semantic_boxes.append(box)

    def draw_obstacle():
        kind = ["box", "cylinder", "sphere"][rng.integers(0, 3)]
        if kind == "box":
            mesh = primitive_mesh("box", rng.uniform(0.3, 1.5, 3))
        elif kind == "cylinder":
            mesh = primitive_mesh("cylinder", (rng.uniform(0.15, 0.5), rng.uniform(0.5, 2.0)))
        else:
            mesh = primitive_mesh("sphere", (rng.uniform(0.2, 0.6),))
        return kind, mesh, 0

    for _ in range(spec.obstacle_count):
        obj, _ = place_resampling(draw_obstacle)
        objects.append(obj)

    t = _WALL_THICKNESS
    return Scene(objects, (-t, -t, -t), (L + t, W + t, H + t))


# --- scene manifest + ASCII mesh import/export -------------------------------

def save_mesh(path: str, mesh: TriMesh) -> None:
    """Wavefront-style ASCII triangle list (v/f lines, 1-based indices)."""
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def load_mesh(path: str) -> TriMesh:
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:4]]
                faces.append(idx)
    return TriMesh(np.array(verts), np.array(faces))


def save_scene(directory: str, scene: Scene) -> None:
    """Write a flat key-value manifest plus one mesh file per object."""
    os.makedirs(directory, exist_ok=True)
    lines = [
        f"bounds.min = {scene.bounds_min[0]:.9g} {scene.bounds_min[1]:.9g} {scene.bounds_min[2]:.9g}",
        f"bounds.max = {scene.bounds_max[0]:.9g} {scene.bounds_max[1]:.9g} {scene.bounds_max[2]:.9g}",
        f"object.count = {len(scene.objects)}",
    ]
    for i, obj in enumerate(scene.objects):
        mesh_file = f"object_{i:03d}.obj"
        save_mesh(os.path.join(directory, mesh_file), obj.mesh)
        p, q = obj.position, obj.quat
        lines.append(f"object.{i}.kind = {obj.kind}")
        lines.append(f"object.{i}.label = {obj.semantic_label}")
        lines.append(f"object.{i}.mesh = {mesh_file}")
        lines.append(f"object.{i}.position = {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}")
        lines.append(f"object.{i}.quat = {q[0]:.17g} {q[1]:.17g} {q[2]:.17g} {q[3]:.17g}")
    with open(os.path.join(directory, "scene.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scene(manifest_path: str) -> Scene:
    directory = os.path.dirname(os.path.abspath(manifest_path))
    if os.path.isdir(manifest_path):
        directory = manifest_path
        manifest_path = os.path.join(directory, "scene.txt")
    kv = {}
    with open(manifest_path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            kv[key.strip()] = val.strip()
    bmin = [float(x) for x in kv["bounds.min"].split()]
    bmax = [float(x) for x in kv["bounds.max"].split()]
    objects = []
    for i in range(int(kv["object.count"])):
        mesh = load_mesh(os.path.join(directory, kv[f"object.{i}.mesh"]))
        pos = [float(x) for x in kv[f"object.{i}.position"].split()]
        quat = [float(x) for x in kv[f"object.{i}.quat"].split()]
        objects.append(
            SceneObject(mesh, np.array(pos), np.array(quat), int(kv[f"object.{i}.label"]), kv[f"object.{i}.kind"])
        )
    return Scene(objects, bmin, bmax)
