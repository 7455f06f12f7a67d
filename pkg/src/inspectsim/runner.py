"""Batch evaluation: scripted baseline policies, the feasible-coverage oracle,
coverage-over-time aggregation, and throughput benchmarking."""

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from inspectsim.config import BatchConfig, EpisodeConfig
from inspectsim.env import CRASH, RUNNING, TIMEOUT, InspectionEnv
from inspectsim.mapping import LOCAL_N, OCCUPIED
from inspectsim.scene import Scene


# --- scripted policies --------------------------------------------------------

class RandomPolicy:
    """Uniform actions in [-1, 1]^4 from a seeded stream."""

    def __init__(self, seed: int):
        self._rng = np.random.Generator(np.random.PCG64(seed))

    def __call__(self, obs) -> np.ndarray:
        return self._rng.uniform(-1.0, 1.0, 4)


class OrbitPolicy:
    """Search-then-orbit baseline driven purely by the observation.

    Without target pixels it rotates and drifts, avoiding occupied cells in the
    local grid. Once the target mask is visible it servos range towards the
    inspection distance, strafes tangentially while yawing to keep the mask
    centroid in the focus area, and sweeps altitude to cover high and low faces.
    """

    def __init__(self, seed: int = 0, d_ref: float = 1.0, w_max=(1.0, 1.0, 1.0, 1.0)):
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self.d_ref = d_ref
        self.w_max = np.asarray(w_max, dtype=np.float64)
        self.step = 0
        self.orbit_sign = 1.0
        self.drift = np.zeros(2)

    # repulsion reaches just past the proximity-penalty radius so it does not
    # fight the orbit equilibrium at the inspection distance
    _AVOID_RADIUS = 0.45

    def _avoidance(self, local_occ: np.ndarray) -> np.ndarray:
        """Repulsive body-frame velocity away from occupied cells near the agent."""
        c = (LOCAL_N - 1) // 2
        occ = np.argwhere(local_occ == OCCUPIED)
        if occ.shape[0] == 0:
            return np.zeros(3)
        off = (occ - c) * 0.1
        dist = np.linalg.norm(off, axis=1)
        near = dist < self._AVOID_RADIUS
        if not np.any(near):
            return np.zeros(3)
        off = off[near]
        dist = dist[near]
        w = (self._AVOID_RADIUS - dist) / np.maximum(dist, 0.05)
        push = -(off * (w / np.maximum(dist, 0.05))[:, None]).sum(axis=0)
        norm = np.linalg.norm(push)
        if norm > 1.0:
            push /= norm
        return push * 1.5

    def __call__(self, obs) -> np.ndarray:
        self.step += 1
        depth = obs.masked_depth
        h, w = depth.shape
        seen = depth > 0.0
        avoid = self._avoidance(obs.local_occ)
        cmd = np.zeros(4)

        if not np.any(seen):
            # search: rotate in place, slow forward drift with random heading jitter
            if self.step % 40 == 1:
                self.drift = self._rng.uniform(-0.3, 0.3, 2)
            cmd[0] = 0.35 + self.drift[0]
            cmd[1] = self.drift[1]
            cmd[2] = 0.15 * np.sin(self.step * 0.05)
            cmd[3] = 0.7
        else:
            rows, cols = np.nonzero(seen)
            d_mean = float(depth[rows, cols].mean())
            col_err = (cols.mean() - (w - 1) / 2.0) / w  # >0: target right of center
            row_err = (rows.mean() - (h - 1) / 2.0) / h  # >0: target below center
            cmd[3] = np.clip(-3.0 * col_err, -1.0, 1.0)  # yaw towards the target
            cmd[0] = np.clip(1.2 * (d_mean - self.d_ref), -1.0, 1.0)
            cmd[1] = 0.65 * self.orbit_sign
            # altitude sweep to reach top/bottom faces, bounded by row centering
            sweep = 0.5 * np.sin(2.0 * np.pi * self.step / 220.0)
            cmd[2] = np.clip(sweep - 1.5 * row_err, -1.0, 1.0)

        v = cmd[:3] * self.w_max[:3] + avoid
        scale = np.max(np.abs(v / np.maximum(self.w_max[:3], 1e-9)))
        if scale > 1.0:
            v /= scale
        out = np.empty(4)
        out[:3] = v / np.maximum(self.w_max[:3], 1e-9)
        out[3] = cmd[3]
        return np.clip(out, -1.0, 1.0)


class BridgePolicy:
    """Placeholder used by the CLI: bridge-driven runs go through inspectsim.bridge."""

    def __call__(self, obs):
        raise RuntimeError("bridge policy is driven externally; use `inspectsim serve`")


def make_policy(name: str, seed: int, episode: EpisodeConfig):
    if name == "random":
        return RandomPolicy(seed)
    if name == "orbit":
        return OrbitPolicy(seed, d_ref=episode.reward.d_ref, w_max=episode.w_max)
    raise ValueError(f"unknown policy {name!r}")


# --- feasible-coverage oracle -------------------------------------------------

def feasible_coverage(
    scene: Scene,
    label: int,
    d_ref: float,
    band: float,
    grid_res: float = 0.2,
    yaw_bins: int = 16,
    clearance: float = 0.3,
    h_fov_deg: float = 87.0,
    v_fov_deg: float = 58.0,
) -> tuple[np.ndarray, float]:
    """Brute-force reachable-face oracle.

    A face is feasible iff some collision-free viewpoint on a `grid_res` lattice
    sees its centroid unoccluded within [d_ref-band, d_ref+band] and inside the
    camera's focus cone for at least one of `yaw_bins` headings. Deterministic
    for fixed sampling resolution. Returns (feasible face ids, fraction).
    """
    sem_oid = scene.semantic_object_ids()[label]
    obj = scene.objects[sem_oid]
    centroids = obj.world_vertices()[obj.mesh.faces].mean(axis=1)
    n_faces = obj.mesh.face_count

    lo = scene.interior_min() + clearance
    hi = scene.interior_max() - clearance
    axes = [np.arange(lo[i], hi[i] + 1e-9, grid_res) for i in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    points = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    # keep lattice points near the target's inspection shell before the costly checks
    cmin = centroids.min(axis=0) - (d_ref + band)
    cmax = centroids.max(axis=0) + (d_ref + band)
    shell = np.all((points >= cmin) & (points <= cmax), axis=1)
    points = points[shell]
    free = np.array([scene.point_distance(p) >= clearance for p in points])
    points = points[free]

    # focus cone: half the image dimensions maps to half the tangent extent
    h_half = np.arctan(np.tan(np.deg2rad(h_fov_deg) / 2.0) / 2.0)
    v_half = np.arctan(np.tan(np.deg2rad(v_fov_deg) / 2.0) / 2.0)
    yaws = 2.0 * np.pi * np.arange(yaw_bins) / yaw_bins

    feasible = np.zeros(n_faces, dtype=bool)
    for f in range(n_faces):
        c = centroids[f]
        delta = c[None, :] - points
        dist = np.linalg.norm(delta, axis=1)
        in_band = (dist >= d_ref - band) & (dist <= d_ref + band) & (dist > 1e-6)
        if not np.any(in_band):
            continue
        cand = np.nonzero(in_band)[0]
        # prefer viewpoints closest to the desired distance so we exit early
        cand = cand[np.argsort(np.abs(dist[cand] - d_ref), kind="stable")]
        for i in cand:
            d = dist[i]
            el = np.arcsin(np.clip(delta[i, 2] / d, -1.0, 1.0))
            if abs(el) > v_half:
                continue
            az = np.arctan2(delta[i, 1], delta[i, 0])
            az_err = np.abs(((az - yaws + np.pi) % (2.0 * np.pi)) - np.pi)
            if az_err.min() > h_half:
                continue
            t, tri = scene.raycast_batch(points[i][None, :], (delta[i] / d)[None, :], d + 0.05)
            if tri[0] >= 0 and scene.tri_obj[tri[0]] == sem_oid and scene.tri_face[tri[0]] == f:
                feasible[f] = True
                break
    ids = np.nonzero(feasible)[0]
    return ids, float(feasible.mean())


# --- batch execution ----------------------------------------------------------

@dataclass
class MetricsRow:
    obstacles: int
    env_id: int
    episode: int
    t: float
    coverage: float  # fraction of feasible faces inspected within the band
    f: float
    v: float
    p: float
    terminated: str


@dataclass
class CoverageReport:
    obstacles: int
    episodes: int
    bin_times: np.ndarray
    mean_coverage: np.ndarray
    p05_coverage: np.ndarray
    p95_coverage: np.ndarray
    final_avg_coverage: float
    crash_pct: float
    timeout_pct: float
    fault_count: int


def _run_env(args):
    """Worker: all episodes for one (obstacle count, env id). Returns metric rows."""
    batch, obstacles, env_id = args
    ep = batch.episode
    seed = int(np.random.SeedSequence(entropy=batch.master_seed, spawn_key=(obstacles, env_id)).generate_state(1)[0])
    cfg = replace(ep, seed=seed, room=replace(ep.room, seed=seed, obstacle_count=obstacles))
    env = InspectionEnv(cfg)
    band = cfg.schedule_margin
    d_ref = cfg.reward.d_ref
    label = cfg.semantic_schedule[0][0]
    feasible_ids, _ = feasible_coverage(env.scene, label, d_ref, band)
    denom = max(1, len(feasible_ids))

    rows = []
    log_every = max(1, int(round(1.0 / cfg.dynamics.control_dt)))  # 1 s bins
    for episode in range(batch.episodes_per_env):
        obs = env.reset()
        policy = make_policy(batch.policy, seed + 7919 * episode, cfg)
        fault = False
        while env.terminated == RUNNING:
            result = env.step(policy(obs))
            obs = result.observation
            fault = fault or result.info["fault"]
            if env.step_count % log_every == 0 or result.terminated != RUNNING:
                ledger = env.ledgers[label]
                covered = np.count_nonzero(ledger.faces_within(d_ref, band)[feasible_ids]) if len(feasible_ids) else 0
                cov = covered / denom if len(feasible_ids) else 1.0
                rows.append(
                    MetricsRow(
                        obstacles, env_id, episode, round(env.t, 6), cov,
                        result.reward.f, result.reward.v, result.reward.p,
                        result.terminated if result.terminated != RUNNING else RUNNING,
                    )
                )
        if fault:
            rows[-1] = replace(rows[-1], terminated="fault")
    return rows


def run_batch(batch: BatchConfig, workers: int = 1) -> tuple[dict, str]:
    """Execute the full curriculum and aggregate coverage statistics.

    Returns ({obstacle_count: CoverageReport}, csv_text); also writes the CSV to
    batch.output when set.
    """
    tasks = [(batch, obstacles, env_id) for obstacles in batch.obstacle_counts for env_id in range(batch.env_count)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            all_rows = [row for rows in pool.map(_run_env, tasks) for row in rows]
    else:
        all_rows = [row for task in tasks for row in _run_env(task)]
    all_rows.sort(key=lambda r: (r.obstacles, r.env_id, r.episode, r.t))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["obstacles", "env_id", "episode", "t", "coverage", "f", "v", "p", "terminated"])
    for r in all_rows:
        writer.writerow(
            [r.obstacles, r.env_id, r.episode, f"{r.t:.6g}", f"{r.coverage:.9g}",
             f"{r.f:.9g}", f"{r.v:.9g}", f"{r.p:.9g}", r.terminated]
        )
    csv_text = buf.getvalue()
    if batch.output:
        with open(batch.output, "w") as fh:
            fh.write(csv_text)

    reports = {}
    for obstacles in batch.obstacle_counts:
        rows = [r for r in all_rows if r.obstacles == obstacles]
        reports[obstacles] = _aggregate(obstacles, rows, batch.episode.episode_length)
    return reports, csv_text


def _aggregate(obstacles: int, rows, episode_length: float) -> CoverageReport:
    episodes = {}
    for r in rows:
        episodes.setdefault((r.env_id, r.episode), []).append(r)
    bin_times = np.arange(1.0, episode_length + 1e-9, 1.0)
    curves = []
    finals = []
    terminations = []
    faults = 0
    for key in sorted(episodes):
        ep_rows = episodes[key]
        ts = np.array([r.t for r in ep_rows])
        cov = np.array([r.coverage for r in ep_rows])
        # per-episode step curve sampled onto 1 s bins, held at the last value
        idx = np.searchsorted(ts, bin_times, side="right") - 1
        curve = np.where(idx >= 0, cov[np.clip(idx, 0, len(cov) - 1)], 0.0)
        curves.append(curve)
        finals.append(cov[-1])
        term = ep_rows[-1].terminated
        if term == "fault":
            faults += 1
            term = CRASH
        terminations.append(term)
    curves = np.array(curves) if curves else np.zeros((0, len(bin_times)))
    n_term = max(1, len(terminations))
    crash_pct = 100.0 * terminations.count(CRASH) / n_term
    timeout_pct = 100.0 * terminations.count(TIMEOUT) / n_term
    return CoverageReport(
        obstacles=obstacles,
        episodes=len(finals),
        bin_times=bin_times,
        mean_coverage=curves.mean(axis=0) if len(curves) else np.zeros(len(bin_times)),
        p05_coverage=np.percentile(curves, 5, axis=0) if len(curves) else np.zeros(len(bin_times)),
        p95_coverage=np.percentile(curves, 95, axis=0) if len(curves) else np.zeros(len(bin_times)),
        final_avg_coverage=float(np.mean(finals)) if finals else 0.0,
        crash_pct=crash_pct,
        timeout_pct=timeout_pct,
        fault_count=faults,
    )


# --- throughput benchmark -----------------------------------------------------

@dataclass
class BenchReport:
    env_count: int
    total_steps: int
    steps_per_sec_single: float
    steps_per_sec_parallel: float
    stage_seconds: dict

    def summary(self) -> str:
        lines = [
            f"environments:        {self.env_count}",
            f"total steps:         {self.total_steps}",
            f"steps/sec (single):  {self.steps_per_sec_single:.1f}",
            f"steps/sec (parallel):{self.steps_per_sec_parallel:.1f}",
            "per-stage time share:",
        ]
        total = sum(self.stage_seconds.values()) or 1.0
        for k, v in sorted(self.stage_seconds.items()):
            lines.append(f"  {k:<9} {v:8.3f} s  ({100.0 * v / total:.1f}%)")
        return "\n".join(lines)


def bench(env_count: int, steps: int, episode: EpisodeConfig | None = None, seed: int = 0) -> BenchReport:
    """Wall-clock throughput of the full step pipeline, single and thread-parallel."""
    episode = episode or EpisodeConfig()
    envs = []
    policies = []
    for i in range(env_count):
        cfg = replace(episode, seed=seed + i, room=replace(episode.room, seed=seed + i))
        envs.append(InspectionEnv(cfg))
        policies.append(RandomPolicy(seed + i))
    if steps == 0 or env_count == 0:
        return BenchReport(env_count, 0, 0.0, 0.0, {})

    obs = [env.reset() for env in envs]

    def drive(i):
        env = envs[i]
        o = obs[i]
        for _ in range(steps):
            if env.terminated != RUNNING:
                o = env.reset()
            o = env.step(policies[i](o)).observation

    t0 = time.perf_counter()
    for i in range(env_count):
        drive(i)
    single = env_count * steps / (time.perf_counter() - t0)

    obs = [env.reset() for env in envs]
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=min(8, env_count)) as pool:
        list(pool.map(drive, range(env_count)))
    parallel = env_count * steps / (time.perf_counter() - t0)

    stages = {}
    for env in envs:
        for k, v in env.stage_times.items():
            stages[k] = stages.get(k, 0.0) + v
    return BenchReport(env_count, 2 * env_count * steps, single, parallel, stages)
