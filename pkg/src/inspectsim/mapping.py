"""World-frame occupancy and visit-count maps plus ego-centric 21^3 extraction.

Occupancy is tri-state: -1 unknown, 0 free, 1 occupied. The spatial visit score
grid assigns -p*ln(p) to each local cell, with p the cell's share of all visits
inside the local window.
"""

import struct
from dataclasses import dataclass

import numpy as np

from inspectsim import kernels
from inspectsim.sensors import PointCloud

UNKNOWN = -1
FREE = 0
OCCUPIED = 1

LOCAL_N = 21
RESOLUTION = 0.1


class GlobalOccupancy:
    """Dense tri-state voxel grid over fixed world bounds; default state unknown."""

    def __init__(self, bounds_min, bounds_max, resolution: float = RESOLUTION):
        self.origin = np.asarray(bounds_min, dtype=np.float64)
        self.resolution = float(resolution)
        extent = np.asarray(bounds_max, dtype=np.float64) - self.origin
        self.shape = tuple(int(np.ceil(e / resolution)) + 1 for e in extent)
        self.cells = np.full(self.shape, UNKNOWN, dtype=np.int8)

    def index_of(self, point) -> tuple[int, int, int]:
        idx = np.floor((np.asarray(point) - self.origin) / self.resolution).astype(np.int64)
        return tuple(idx)

    def state_at(self, point) -> int:
        idx = self.index_of(point)
        if all(0 <= i < s for i, s in zip(idx, self.shape)):
            return int(self.cells[idx])
        return UNKNOWN

    def cell_center(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx) + 0.5) * self.resolution


class VisitGrid:
    """Per-cell visit counters aggregated from the robot's position trajectory."""

    def __init__(self, bounds_min, bounds_max, resolution: float = RESOLUTION):
        self.origin = np.asarray(bounds_min, dtype=np.float64)
        self.resolution = float(resolution)
        extent = np.asarray(bounds_max, dtype=np.float64) - self.origin
        self.shape = tuple(int(np.ceil(e / resolution)) + 1 for e in extent)
        self.counts = np.zeros(self.shape, dtype=np.int64)
        self.total = 0

    def record_visit(self, position) -> None:
        idx = np.floor((np.asarray(position) - self.origin) / self.resolution).astype(np.int64)
        if all(0 <= i < s for i, s in zip(idx, self.shape)):
            self.counts[tuple(idx)] += 1
            self.total += 1


@dataclass
class LocalContext:
    occupancy: np.ndarray  # (21,21,21) int8 in {-1, 0, 1}
    svs: np.ndarray  # (21,21,21) float64 in [0, 1/e]
    visit_counts: np.ndarray  # (21,21,21) int64 window counts
    n_visits: int  # N_t: total visits inside the window


def integrate_pointcloud(occ: GlobalOccupancy, cloud: PointCloud) -> None:
    """Carve free space along each beam and mark hit cells occupied.

    Occupied wins over free within one integration batch; a later batch may
    revert an occupied cell to free (thin/ghost obstacle clearing).
    """
    if cloud.directions.shape[0] == 0:
        return
    kernels.carve_rays(
        occ.cells,
        np.ascontiguousarray(cloud.origin, dtype=np.float64),
        np.ascontiguousarray(cloud.directions, dtype=np.float64),
        np.ascontiguousarray(cloud.ranges, dtype=np.float64),
        np.ascontiguousarray(cloud.is_hit, dtype=np.bool_),
        occ.origin[0], occ.origin[1], occ.origin[2],
        occ.resolution,
    )


def svs_from_counts(window_counts: np.ndarray) -> tuple[np.ndarray, int]:
    """Shannon-entropy cell scores -p*ln(p) over the window; 0*ln(0) is 0."""
    n_t = int(window_counts.sum())
    svs = np.zeros(window_counts.shape, dtype=np.float64)
    if n_t > 0:
        p = window_counts / n_t
        nz = p > 0
        svs[nz] = -p[nz] * np.log(p[nz])
    return svs, n_t


def extract_local(occ: GlobalOccupancy, visits: VisitGrid, position, yaw: float, n: int = LOCAL_N) -> LocalContext:
    """Yaw-aligned n^3 body-frame window sampled by nearest global cell."""
    out_occ = np.empty((n, n, n), dtype=np.int8)
    out_counts = np.empty((n, n, n), dtype=np.int64)
    p = np.asarray(position, dtype=np.float64)
    kernels.extract_window(
        occ.cells, visits.counts,
        occ.origin[0], occ.origin[1], occ.origin[2], occ.resolution,
        p[0], p[1], p[2], float(yaw), n,
        out_occ, out_counts,
    )
    svs, n_t = svs_from_counts(out_counts)
    return LocalContext(occupancy=out_occ, svs=svs, visit_counts=out_counts, n_visits=n_t)


_SNAPSHOT_MAGIC = b"OMAP"


def save_snapshot(path: str, occ: GlobalOccupancy) -> None:
    """Flat binary map dump: header (origin, resolution, extents) + int8 payload."""
    with open(path, "wb") as fh:
        fh.write(_SNAPSHOT_MAGIC)
        fh.write(struct.pack("<3d d 3i", *occ.origin, occ.resolution, *occ.shape))
        fh.write(occ.cells.tobytes())


def load_snapshot(path: str) -> GlobalOccupancy:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic {magic!r}")
        ox, oy, oz, res, nx, ny, nz = struct.unpack("<3d d 3i", fh.read(44))
        payload = fh.read(nx * ny * nz)
    occ = GlobalOccupancy.__new__(GlobalOccupancy)
    occ.origin = np.array([ox, oy, oz])
    occ.resolution = res
    occ.shape = (nx, ny, nz)
    occ.cells = np.frombuffer(payload, dtype=np.int8).reshape(nx, ny, nz).copy()
    return occ
