"""Numba-compiled hot loops: BVH ray traversal, voxel carving, local-window extraction.

Everything here operates on flat numpy arrays so scenes stay pickleable and the
Python layer keeps ownership of all state.
"""

import numpy as np
from numba import njit

INVALID = -1


@njit(cache=True, nogil=True, fastmath=False)
def _ray_tri(ox, oy, oz, dx, dy, dz, ax, ay, az, e1x, e1y, e1z, e2x, e2y, e2z):
    """Moller-Trumbore. Returns hit parameter t or -1."""
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det > -1e-12 and det < 1e-12:
        return -1.0
    inv = 1.0 / det
    tx = ox - ax
    ty = oy - ay
    tz = oz - az
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t < 1e-9:
        return -1.0
    return t


@njit(cache=True, nogil=True)
def _slab_hit(ox, oy, oz, idx, idy, idz, bmin, bmax, tmax):
    """Ray/AABB slab test with precomputed inverse direction. Returns entry t or inf."""
    t0 = (bmin[0] - ox) * idx
    t1 = (bmax[0] - ox) * idx
    if t0 > t1:
        t0, t1 = t1, t0
    tn = t0
    tf = t1
    t0 = (bmin[1] - oy) * idy
    t1 = (bmax[1] - oy) * idy
    if t0 > t1:
        t0, t1 = t1, t0
    if t0 > tn:
        tn = t0
    if t1 < tf:
        tf = t1
    t0 = (bmin[2] - oz) * idz
    t1 = (bmax[2] - oz) * idz
    if t0 > t1:
        t0, t1 = t1, t0
    if t0 > tn:
        tn = t0
    if t1 < tf:
        tf = t1
    if tf < tn or tf < 0.0 or tn > tmax:
        return np.inf
    return tn


@njit(cache=True, nogil=True)
def bvh_raycast(
    origins,
    dirs,
    t_max,
    node_min,
    node_max,
    node_left,
    node_right,
    node_start,
    node_count,
    tri_order,
    tv0,
    te1,
    te2,
    tri_obj,
    tri_face,
    out_t,
    out_tri,
):
    """Nearest-hit raycast for a batch of rays.

    Ties on t are broken towards the smallest (object_id, face_id) pair.
    out_t is filled with the hit parameter (inf on miss), out_tri with the
    global triangle index (-1 on miss).
    """
    n = origins.shape[0]
    stack = np.empty(64, np.int64)
    for r in range(n):
        ox = origins[r, 0]
        oy = origins[r, 1]
        oz = origins[r, 2]
        dx = dirs[r, 0]
        dy = dirs[r, 1]
        dz = dirs[r, 2]
        idx = 1.0 / dx if dx != 0.0 else np.inf
        idy = 1.0 / dy if dy != 0.0 else np.inf
        idz = 1.0 / dz if dz != 0.0 else np.inf
        best_t = np.inf
        best_tri = INVALID
        best_obj = np.int64(2**62)
        best_face = np.int64(2**62)
        limit = t_max
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if _slab_hit(ox, oy, oz, idx, idy, idz, node_min[node], node_max[node], min(limit, best_t)) == np.inf:
                continue
            cnt = node_count[node]
            if cnt > 0:
                start = node_start[node]
                for k in range(start, start + cnt):
                    tri = tri_order[k]
                    t = _ray_tri(
                        ox, oy, oz, dx, dy, dz,
                        tv0[tri, 0], tv0[tri, 1], tv0[tri, 2],
                        te1[tri, 0], te1[tri, 1], te1[tri, 2],
                        te2[tri, 0], te2[tri, 1], te2[tri, 2],
                    )
                    if t < 0.0 or t > limit:
                        continue
                    if t < best_t:
                        best_t = t
                        best_tri = tri
                        best_obj = tri_obj[tri]
                        best_face = tri_face[tri]
                    elif t == best_t:
                        o = tri_obj[tri]
                        f = tri_face[tri]
                        if o < best_obj or (o == best_obj and f < best_face):
                            best_tri = tri
                            best_obj = o
                            best_face = f
            else:
                # push far child first so the near child pops first
                lc = node_left[node]
                rc = node_right[node]
                tl = _slab_hit(ox, oy, oz, idx, idy, idz, node_min[lc], node_max[lc], min(limit, best_t))
                tr = _slab_hit(ox, oy, oz, idx, idy, idz, node_min[rc], node_max[rc], min(limit, best_t))
                if tl <= tr:
                    if tr != np.inf:
                        stack[sp] = rc
                        sp += 1
                    if tl != np.inf:
                        stack[sp] = lc
                        sp += 1
                else:
                    if tl != np.inf:
                        stack[sp] = lc
                        sp += 1
                    if tr != np.inf:
                        stack[sp] = rc
                        sp += 1
        out_t[r] = best_t
        out_tri[r] = best_tri


@njit(cache=True, nogil=True)
def brute_raycast(origins, dirs, t_max, tv0, te1, te2, tri_obj, tri_face, out_t, out_tri):
    """All-triangles reference raycast with the same tie-break rule as the BVH path."""
    n = origins.shape[0]
    m = tv0.shape[0]
    for r in range(n):
        best_t = np.inf
        best_tri = INVALID
        best_obj = np.int64(2**62)
        best_face = np.int64(2**62)
        for tri in range(m):
            t = _ray_tri(
                origins[r, 0], origins[r, 1], origins[r, 2],
                dirs[r, 0], dirs[r, 1], dirs[r, 2],
                tv0[tri, 0], tv0[tri, 1], tv0[tri, 2],
                te1[tri, 0], te1[tri, 1], te1[tri, 2],
                te2[tri, 0], te2[tri, 1], te2[tri, 2],
            )
            if t < 0.0 or t > t_max:
                continue
            if t < best_t:
                best_t = t
                best_tri = tri
                best_obj = tri_obj[tri]
                best_face = tri_face[tri]
            elif t == best_t:
                o = tri_obj[tri]
                f = tri_face[tri]
                if o < best_obj or (o == best_obj and f < best_face):
                    best_tri = tri
                    best_obj = o
                    best_face = f
        out_t[r] = best_t
        out_tri[r] = best_tri


@njit(cache=True, nogil=True)
def carve_rays(grid, origin, dirs, ranges, hit_flags, gx0, gy0, gz0, res):
    """Amanatides-Woo traversal carving free space and marking hit cells occupied.

    Cells strictly before each ray's endpoint become free (0); the endpoint cell
    becomes occupied (1) on a hit, or free on a max-range miss. Occupied wins over
    free within one batch, so hit cells are written in a second pass.
    """
    nx, ny, nz = grid.shape
    nrays = dirs.shape[0]
    hit_cells = np.empty((nrays, 3), np.int64)
    ox = origin[0]
    oy = origin[1]
    oz = origin[2]
    for r in range(nrays):
        dx = dirs[r, 0]
        dy = dirs[r, 1]
        dz = dirs[r, 2]
        tend = ranges[r]
        ex = ox + dx * tend
        ey = oy + dy * tend
        ez = oz + dz * tend
        exi = np.int64(np.floor((ex - gx0) / res))
        eyi = np.int64(np.floor((ey - gy0) / res))
        ezi = np.int64(np.floor((ez - gz0) / res))
        hit_cells[r, 0] = exi
        hit_cells[r, 1] = eyi
        hit_cells[r, 2] = ezi

        cx = np.int64(np.floor((ox - gx0) / res))
        cy = np.int64(np.floor((oy - gy0) / res))
        cz = np.int64(np.floor((oz - gz0) / res))
        sx = 1 if dx > 0 else -1
        sy = 1 if dy > 0 else -1
        sz = 1 if dz > 0 else -1
        if dx != 0.0:
            nxb = gx0 + (cx + (1 if sx > 0 else 0)) * res
            tmx = (nxb - ox) / dx
            tdx = res / abs(dx)
        else:
            tmx = np.inf
            tdx = np.inf
        if dy != 0.0:
            nyb = gy0 + (cy + (1 if sy > 0 else 0)) * res
            tmy = (nyb - oy) / dy
            tdy = res / abs(dy)
        else:
            tmy = np.inf
            tdy = np.inf
        if dz != 0.0:
            nzb = gz0 + (cz + (1 if sz > 0 else 0)) * res
            tmz = (nzb - oz) / dz
            tdz = res / abs(dz)
        else:
            tmz = np.inf
            tdz = np.inf

        guard = 0
        maxsteps = nx + ny + nz + np.int64(3 * tend / res) + 16
        while guard < maxsteps:
            guard += 1
            at_end = cx == exi and cy == eyi and cz == ezi
            if not at_end:
                if 0 <= cx < nx and 0 <= cy < ny and 0 <= cz < nz:
                    grid[cx, cy, cz] = 0
            else:
                break
            if tmx <= tmy and tmx <= tmz:
                if tmx > tend:
                    break
                cx += sx
                tmx += tdx
            elif tmy <= tmz:
                if tmy > tend:
                    break
                cy += sy
                tmy += tdy
            else:
                if tmz > tend:
                    break
                cz += sz
                tmz += tdz
    for r in range(nrays):
        cx = hit_cells[r, 0]
        cy = hit_cells[r, 1]
        cz = hit_cells[r, 2]
        if 0 <= cx < nx and 0 <= cy < ny and 0 <= cz < nz:
            if hit_flags[r]:
                grid[cx, cy, cz] = 1
            else:
                grid[cx, cy, cz] = 0


@njit(cache=True, nogil=True)
def extract_window(occ, counts, gx0, gy0, gz0, res, px, py, pz, yaw, n, out_occ, out_counts):
    """Sample the n^3 yaw-aligned body-frame window from the global grids.

    Local +x is the robot's forward axis. Cells outside the global grid read as
    unknown with zero visits.
    """
    nx, ny, nz = occ.shape
    c = (n - 1) // 2
    cy_ = np.cos(yaw)
    sy_ = np.sin(yaw)
    for i in range(n):
        bx = (i - c) * res
        for j in range(n):
            by = (j - c) * res
            wx = px + cy_ * bx - sy_ * by
            wy = py + sy_ * bx + cy_ * by
            gi = np.int64(np.floor((wx - gx0) / res))
            gj = np.int64(np.floor((wy - gy0) / res))
            for k in range(n):
                wz = pz + (k - c) * res
                gk = np.int64(np.floor((wz - gz0) / res))
                if 0 <= gi < nx and 0 <= gj < ny and 0 <= gk < nz:
                    out_occ[i, j, k] = occ[gi, gj, gk]
                    out_counts[i, j, k] = counts[gi, gj, gk]
                else:
                    out_occ[i, j, k] = -1
                    out_counts[i, j, k] = 0


@njit(cache=True, nogil=True)
def point_mesh_distance(px, py, pz, tv0, tv1, tv2):
    """Minimum Euclidean distance from a point to a triangle soup."""
    best = np.inf
    for i in range(tv0.shape[0]):
        ax = tv0[i, 0]
        ay = tv0[i, 1]
        az = tv0[i, 2]
        bx = tv1[i, 0]
        by = tv1[i, 1]
        bz = tv1[i, 2]
        cx = tv2[i, 0]
        cy = tv2[i, 1]
        cz = tv2[i, 2]
        abx = bx - ax
        aby = by - ay
        abz = bz - az
        acx = cx - ax
        acy = cy - ay
        acz = cz - az
        apx = px - ax
        apy = py - ay
        apz = pz - az
        d1 = abx * apx + aby * apy + abz * apz
        d2 = acx * apx + acy * apy + acz * apz
        if d1 <= 0.0 and d2 <= 0.0:
            qx, qy, qz = ax, ay, az
        else:
            bpx = px - bx
            bpy = py - by
            bpz = pz - bz
            d3 = abx * bpx + aby * bpy + abz * bpz
            d4 = acx * bpx + acy * bpy + acz * bpz
            if d3 >= 0.0 and d4 <= d3:
                qx, qy, qz = bx, by, bz
            else:
                cpx = px - cx
                cpy = py - cy
                cpz = pz - cz
                d5 = abx * cpx + aby * cpy + abz * cpz
                d6 = acx * cpx + acy * cpy + acz * cpz
                if d6 >= 0.0 and d5 <= d6:
                    qx, qy, qz = cx, cy, cz
                else:
                    vc = d1 * d4 - d3 * d2
                    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                        t = d1 / (d1 - d3)
                        qx = ax + t * abx
                        qy = ay + t * aby
                        qz = az + t * abz
                    else:
                        vb = d5 * d2 - d1 * d6
                        if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                            t = d2 / (d2 - d6)
                            qx = ax + t * acx
                            qy = ay + t * acy
                            qz = az + t * acz
                        else:
                            va = d3 * d6 - d5 * d4
                            if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                                t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                                qx = bx + t * (cx - bx)
                                qy = by + t * (cy - by)
                                qz = bz + t * (cz - bz)
                            else:
                                denom = 1.0 / (va + vb + vc)
                                v = vb * denom
                                w = vc * denom
                                qx = ax + abx * v + acx * w
                                qy = ay + aby * v + acy * w
                                qz = az + abz * v + acz * w
        dx = px - qx
        dy = py - qy
        dz = pz - qz
        d = np.sqrt(dx * dx + dy * dy + dz * dz)
        if d < best:
            best = d
    return best


@njit(cache=True, nogil=True)
def face_depth_stats(obj_img, face_img, depth, focus, target_obj, n_faces, sums, counts):
    """Per-face sum and count of depths over focus-area pixels of the target object."""
    sums[:] = 0.0
    counts[:] = 0
    h, w = depth.shape
    for i in range(h):
        for j in range(w):
            if focus[i, j] and obj_img[i, j] == target_obj:
                f = face_img[i, j]
                if 0 <= f < n_faces:
                    sums[f] += depth[i, j]
                    counts[f] += 1
