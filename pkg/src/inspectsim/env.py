"""The episode loop: observation assembly, 10 Hz control over 100 Hz physics,
crash/timeout termination, semantic-label scheduling, and binary episode replay."""

import struct
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from inspectsim import mapping, reward as rw, sensors
from inspectsim.agent import (
    DynamicsFault,
    RobotState,
    perturb_state_observation,
    scale_action,
    step_dynamics,
)
from inspectsim.config import EpisodeConfig, episode_config_from_text, episode_config_to_text
from inspectsim.scene import GenerationError, generate_room

RUNNING = "running"
CRASH = "crash"
TIMEOUT = "timeout"

_SPAWN_TRIES = 500


class StateError(RuntimeError):
    """step() called on a terminated or un-reset environment."""


@dataclass
class Observation:
    state: np.ndarray  # 13 floats: p(3), q(4), v(3), omega(3)
    prev_action: np.ndarray  # 4 floats
    masked_depth: np.ndarray  # (54, 96) depth * segmentation mask
    local_occ: np.ndarray  # (21, 21, 21) int8 {-1, 0, 1}
    local_svs: np.ndarray  # (21, 21, 21) float64


@dataclass
class StepResult:
    observation: Observation
    reward: rw.RewardBreakdown
    terminated: str  # running | crash | timeout
    info: dict


class SemanticScheduler:
    """Advances the active semantic label once its inspection time budget expires.

    The per-label timer starts on the first frame where any mask pixel's depth
    falls inside the inspection band [d_ref - margin, d_ref + margin].
    """

    def __init__(self, schedule, d_ref: float, margin: float):
        self.schedule = list(schedule)
        self.d_ref = d_ref
        self.margin = margin
        self.index = 0
        self.timer_start: float | None = None
        self.trigger_times: list[float] = []
        self.switch_times: list[float] = []

    @property
    def active_label(self) -> int:
        return self.schedule[self.index][0]

    def advance(self, mask: np.ndarray, depth: np.ndarray, t: float) -> bool:
        """Returns True when the active label just switched."""
        if self.timer_start is None:
            in_band = (mask == 1) & (np.abs(depth - self.d_ref) <= self.margin)
            if np.any(in_band):
                self.timer_start = t
                self.trigger_times.append(t)
            return False
        budget = self.schedule[self.index][1]
        if t - self.timer_start >= budget and self.index + 1 < len(self.schedule):
            self.index += 1
            self.timer_start = None
            self.switch_times.append(t)
            return True
        return False


class InspectionEnv:
    """Single-robot inspection episode over a procedurally generated room.

    The reward pipeline consumes the privileged (noise-free) render; the policy
    observation gets the noisy state and noisy masked depth.
    """

    def __init__(self, config: EpisodeConfig):
        self.config = config
        self.scene = generate_room(config.room)
        self._sem_objects = self.scene.semantic_object_ids()
        for lab, _ in config.semantic_schedule:
            if lab not in self._sem_objects:
                raise ValueError(f"schedule label {lab} missing from scene")
        self._episode_counter = 0
        self._terminated = RUNNING
        self._started = False
        self.stage_times = defaultdict(float)  # cumulative seconds per pipeline stage

    # -- lifecycle -------------------------------------------------------------

    def reset(self) -> Observation:
        cfg = self.config
        ss = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(self._episode_counter,))
        spawn_ss, dyn_ss, obs_ss = ss.spawn(3)
        self._dyn_rng = np.random.Generator(np.random.PCG64(dyn_ss))
        self._obs_rng = np.random.Generator(np.random.PCG64(obs_ss))
        self._episode_counter += 1

        self.state = self._spawn(np.random.Generator(np.random.PCG64(spawn_ss)))
        self.occupancy = mapping.GlobalOccupancy(self.scene.bounds_min, self.scene.bounds_max)
        self.visits = mapping.VisitGrid(self.scene.bounds_min, self.scene.bounds_max)
        self.ledgers = {
            lab: rw.FaceLedger(self.scene.objects[oid].mesh.face_count)
            for lab, oid in self._sem_objects.items()
        }
        self.scheduler = SemanticScheduler(cfg.semantic_schedule, cfg.reward.d_ref, cfg.schedule_margin)
        self._focus = rw.focus_mask(cfg.camera.width, cfg.camera.height)
        self.t = 0.0
        self.step_count = 0
        self._terminated = RUNNING
        self._started = True
        self._prev_action = np.zeros(4)

        # initial sensing pass so the first observation is populated
        cloud = sensors.lidar_scan(self.scene, self.state.p, self.state.yaw, cfg.lidar)
        mapping.integrate_pointcloud(self.occupancy, cloud)
        render = sensors.render(self.scene, self.state.p, self.state.yaw, self.scheduler.active_label, cfg.camera)
        local = mapping.extract_local(self.occupancy, self.visits, self.state.p, self.state.yaw)
        return self._observe(render, local)

    def _spawn(self, rng: np.random.Generator) -> RobotState:
        cfg = self.config
        lo = self.scene.interior_min() + cfg.spawn_clearance
        hi = self.scene.interior_max() - cfg.spawn_clearance
        for _ in range(_SPAWN_TRIES):
            pos = rng.uniform(lo, hi)
            yaw = rng.uniform(0.0, 2.0 * np.pi)
            if self.scene.point_distance(pos) >= cfg.spawn_clearance:
                return RobotState.at(pos, yaw)
        raise GenerationError("no collision-free spawn found", cfg.seed)

    # -- stepping --------------------------------------------------------------

    def step(self, action) -> StepResult:
        if not self._started:
            raise StateError("reset() must be called before step()")
        if self._terminated != RUNNING:
            raise StateError(f"step() after terminal state {self._terminated!r}")
        cfg = self.config
        action = np.asarray(action, dtype=np.float64)
        command = scale_action(action, cfg.w_max)

        clock = time.perf_counter
        t0 = clock()
        fault = False
        try:
            self.state = step_dynamics(self.state, command, cfg.dynamics, cfg.noise, self._dyn_rng)
        except DynamicsFault:
            fault = True
        self.t += cfg.dynamics.control_dt
        self.step_count += 1

        crashed = fault or self.scene.point_distance(self.state.p) <= cfg.dynamics.collision_radius
        t1 = clock()

        cloud = sensors.lidar_scan(self.scene, self.state.p, self.state.yaw, cfg.lidar)
        mapping.integrate_pointcloud(self.occupancy, cloud)
        self.visits.record_visit(self.state.p)
        t2 = clock()

        active = self.scheduler.active_label
        render = sensors.render(self.scene, self.state.p, self.state.yaw, active, cfg.camera)
        t3 = clock()
        ledger = self.ledgers[active]
        f_step = rw.update_face_rewards(
            ledger, render.face_obj, render.face_id, render.depth, self._focus,
            self._sem_objects[active], cfg.reward,
        )
        local = mapping.extract_local(self.occupancy, self.visits, self.state.p, self.state.yaw)
        v = rw.semantic_search_reward(local.n_visits, cfg.reward)
        p = rw.collision_penalty(local.occupancy, cfg.reward, self.occupancy.resolution)
        breakdown = rw.RewardBreakdown(f=f_step, v=v, p=p)
        t4 = clock()
        st = self.stage_times
        st["dynamics"] += t1 - t0
        st["map"] += t2 - t1
        st["render"] += t3 - t2
        st["reward"] += t4 - t3

        self.scheduler.advance(render.mask, render.depth, self.t)

        if crashed:
            self._terminated = CRASH
        elif self.step_count >= cfg.max_steps:
            self._terminated = TIMEOUT

        obs = self._observe(render, local, prev_action=np.clip(action, -1.0, 1.0))
        self._prev_action = obs.prev_action
        info = {
            "coverage": ledger.coverage,
            "active_label": active,
            "n_visits": local.n_visits,
            "fault": fault,
            "t": self.t,
        }
        return StepResult(observation=obs, reward=breakdown, terminated=self._terminated, info=info)

    def _observe(self, render, local, prev_action=None) -> Observation:
        cfg = self.config
        noisy_state = perturb_state_observation(self.state, cfg.noise, self._obs_rng)
        noisy_depth = sensors.apply_depth_noise(render.depth, self._obs_rng, cfg.noise.depth_k_sigma)
        mask = sensors.apply_mask_dropout(render.mask, self._obs_rng, cfg.noise.mask_dropout)
        return Observation(
            state=noisy_state.as_vector(),
            prev_action=self._prev_action if prev_action is None else prev_action,
            masked_depth=noisy_depth * mask,
            local_occ=local.occupancy,
            local_svs=local.svs,
        )

    @property
    def terminated(self) -> str:
        return self._terminated


# -- episode replay files ------------------------------------------------------

REPLAY_MAGIC = b"SRRP"
REPLAY_VERSION = 1
_TERM_CODE = {RUNNING: 0, CRASH: 1, TIMEOUT: 2}
_TERM_NAME = {v: k for k, v in _TERM_CODE.items()}


class ReplayWriter:
    """Versioned little-endian episode log: config header + per-step records."""

    def __init__(self, path: str, config: EpisodeConfig):
        self._fh = open(path, "wb")
        self._fh.write(REPLAY_MAGIC)
        self._fh.write(struct.pack("<H", REPLAY_VERSION))
        blob = episode_config_to_text(config).encode()
        self._fh.write(struct.pack("<I", len(blob)))
        self._fh.write(blob)

    def record(self, action, breakdown: rw.RewardBreakdown, terminated: str) -> None:
        a = np.asarray(action, dtype="<f4")
        self._fh.write(a.tobytes())
        self._fh.write(np.array([breakdown.f, breakdown.v, breakdown.p], dtype="<f4").tobytes())
        self._fh.write(struct.pack("<B", _TERM_CODE[terminated]))

    def close(self) -> None:
        self._fh.close()


@dataclass
class ReplayRecord:
    action: np.ndarray
    reward: np.ndarray  # (f, v, p) as float32
    terminated: str


def load_replay(path: str) -> tuple[EpisodeConfig, list[ReplayRecord]]:
    with open(path, "rb") as fh:
        if fh.read(4) != REPLAY_MAGIC:
            raise ValueError("not a replay file (bad magic)")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != REPLAY_VERSION:
            raise ValueError(f"unsupported replay version {version}")
        (n,) = struct.unpack("<I", fh.read(4))
        config = episode_config_from_text(fh.read(n).decode())
        records = []
        rec_size = 4 * 4 + 3 * 4 + 1
        while True:
            chunk = fh.read(rec_size)
            if not chunk:
                break
            if len(chunk) != rec_size:
                raise ValueError("truncated replay record")
            action = np.frombuffer(chunk[:16], dtype="<f4").astype(np.float64)
            reward = np.frombuffer(chunk[16:28], dtype="<f4").copy()
            term = _TERM_NAME[chunk[28]]
            records.append(ReplayRecord(action=action, reward=reward, terminated=term))
    return config, records


def record_episode(path: str, config: EpisodeConfig, policy, max_steps: int | None = None) -> list[rw.RewardBreakdown]:
    """Run one episode with `policy(obs) -> action`, logging every step."""
    env = InspectionEnv(config)
    obs = env.reset()
    writer = ReplayWriter(path, config)
    rewards = []
    steps = 0
    try:
        while env.terminated == RUNNING and (max_steps is None or steps < max_steps):
            action = policy(obs)
            result = env.step(action)
            writer.record(action, result.reward, result.terminated)
            rewards.append(result.reward)
            obs = result.observation
            steps += 1
    finally:
        writer.close()
    return rewards


def verify_replay(path: str) -> tuple[bool, int]:
    """Re-run a replay and check the reward stream matches bit-exact (as f32).

    Returns (ok, steps_checked).
    """
    config, records = load_replay(path)
    env = InspectionEnv(config)
    env.reset()
    for i, rec in enumerate(records):
        result = env.step(rec.action)
        got = np.array([result.reward.f, result.reward.v, result.reward.p], dtype="<f4")
        if not np.array_equal(got.view(np.uint32), rec.reward.view(np.uint32)):
            return False, i
        if result.terminated != rec.terminated:
            return False, i
    return True, len(records)
