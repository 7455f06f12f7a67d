"""Episode/batch configuration and the flat key-value config file format.

Config files are plain text, one `section.field = value` per line; lists are
comma-separated and the semantic schedule is written as `label:budget` pairs.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from inspectsim.agent import DynamicsParams, NoiseParams
from inspectsim.reward import RewardParams
from inspectsim.scene import RoomSpec
from inspectsim.sensors import CameraModel, LidarModel

UNLIMITED = float("inf")


@dataclass(frozen=True)
class EpisodeConfig:
    episode_length: float = 90.0
    room: RoomSpec = field(default_factory=RoomSpec)
    w_max: tuple = (1.0, 1.0, 1.0, 1.0)
    noise: NoiseParams = field(default_factory=NoiseParams)
    dynamics: DynamicsParams = field(default_factory=DynamicsParams)
    reward: RewardParams = field(default_factory=RewardParams)
    camera: CameraModel = field(default_factory=CameraModel)
    lidar: LidarModel = field(default_factory=LidarModel)
    semantic_schedule: tuple = ((1, UNLIMITED),)  # (label, time budget in s)
    schedule_margin: float = 0.2  # inspection-distance band half-width around d_ref
    spawn_clearance: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.episode_length <= 0:
            raise ValueError("episode_length must be positive")
        if len(self.w_max) != 4:
            raise ValueError("w_max must have 4 entries")
        labels = [lab for lab, _ in self.semantic_schedule]
        if any(lab < 1 or lab > self.room.semantic_count for lab in labels):
            raise ValueError("schedule labels must exist in the scene")

    @property
    def max_steps(self) -> int:
        return int(round(self.episode_length / self.dynamics.control_dt))


@dataclass(frozen=True)
class BatchConfig:
    env_count: int = 512
    episodes_per_env: int = 6
    obstacle_counts: tuple = (0, 4, 9, 14, 19)
    policy: str = "random"
    output: str = "metrics.csv"
    master_seed: int = 0
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)

    def __post_init__(self):
        if self.env_count < 1 or self.episodes_per_env < 1:
            raise ValueError("counts must be positive")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def episode_config_to_text(cfg: EpisodeConfig) -> str:
    lines = [
        f"episode_length = {_fmt(cfg.episode_length)}",
        f"seed = {cfg.seed}",
        f"spawn_clearance = {_fmt(cfg.spawn_clearance)}",
        f"schedule_margin = {_fmt(cfg.schedule_margin)}",
        "w_max = " + ",".join(_fmt(float(x)) for x in cfg.w_max),
        "schedule = " + ",".join(f"{lab}:{_fmt(float(b))}" for lab, b in cfg.semantic_schedule),
        f"room.length = {_fmt(cfg.room.length)}",
        f"room.width = {_fmt(cfg.room.width)}",
        f"room.height = {_fmt(cfg.room.height)}",
        f"room.obstacle_count = {cfg.room.obstacle_count}",
        f"room.semantic_count = {cfg.room.semantic_count}",
        f"room.seed = {cfg.room.seed}",
        f"room.semantic_kind = {cfg.room.semantic_kind}",
        f"noise.wrench_std = {_fmt(cfg.noise.wrench_std)}",
        f"noise.position_noise = {_fmt(cfg.noise.position_noise)}",
        f"noise.velocity_noise = {_fmt(cfg.noise.velocity_noise)}",
        f"noise.quat_noise = {_fmt(cfg.noise.quat_noise)}",
        f"noise.omega_noise = {_fmt(cfg.noise.omega_noise)}",
        f"noise.depth_k_sigma = {_fmt(cfg.noise.depth_k_sigma)}",
        f"noise.mask_dropout = {_fmt(cfg.noise.mask_dropout)}",
        f"dynamics.tau_v = {_fmt(cfg.dynamics.tau_v)}",
        f"dynamics.tau_w = {_fmt(cfg.dynamics.tau_w)}",
        f"dynamics.physics_dt = {_fmt(cfg.dynamics.physics_dt)}",
        f"dynamics.control_dt = {_fmt(cfg.dynamics.control_dt)}",
        f"dynamics.collision_radius = {_fmt(cfg.dynamics.collision_radius)}",
        f"reward.alpha = {'auto' if cfg.reward.alpha is None else _fmt(cfg.reward.alpha)}",
        f"reward.beta = {_fmt(cfg.reward.beta)}",
        f"reward.gamma = {_fmt(cfg.reward.gamma)}",
        f"reward.delta = {_fmt(cfg.reward.delta)}",
        f"reward.d_ref = {_fmt(cfg.reward.d_ref)}",
        f"reward.d_coll = {_fmt(cfg.reward.d_coll)}",
        f"reward.incremental = {int(cfg.reward.incremental)}",
        f"camera.h_fov_deg = {_fmt(cfg.camera.h_fov_deg)}",
        f"camera.v_fov_deg = {_fmt(cfg.camera.v_fov_deg)}",
        f"camera.width = {cfg.camera.width}",
        f"camera.height = {cfg.camera.height}",
        f"camera.max_range = {_fmt(cfg.camera.max_range)}",
        f"lidar.h_rays = {cfg.lidar.h_rays}",
        f"lidar.v_rays = {cfg.lidar.v_rays}",
        f"lidar.max_range = {_fmt(cfg.lidar.max_range)}",
    ]
    return "\n".join(lines) + "\n"


def parse_flat_text(text: str) -> dict:
    kv = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"malformed config line: {raw!r}")
        kv[key.strip()] = val.strip()
    return kv


def episode_config_from_text(text: str) -> EpisodeConfig:
    kv = parse_flat_text(text)
    base = EpisodeConfig()

    def get(key, cast, default):
        return cast(kv[key]) if key in kv else default

    room = RoomSpec(
        length=get("room.length", float, base.room.length),
        width=get("room.width", float, base.room.width),
        height=get("room.height", float, base.room.height),
        obstacle_count=get("room.obstacle_count", int, base.room.obstacle_count),
        semantic_count=get("room.semantic_count", int, base.room.semantic_count),
        seed=get("room.seed", int, base.room.seed),
        semantic_kind=get("room.semantic_kind", str, base.room.semantic_kind),
    )
    noise = NoiseParams(
        wrench_std=get("noise.wrench_std", float, base.noise.wrench_std),
        position_noise=get("noise.position_noise", float, base.noise.position_noise),
        velocity_noise=get("noise.velocity_noise", float, base.noise.velocity_noise),
        quat_noise=get("noise.quat_noise", float, base.noise.quat_noise),
        omega_noise=get("noise.omega_noise", float, base.noise.omega_noise),
        depth_k_sigma=get("noise.depth_k_sigma", float, base.noise.depth_k_sigma),
        mask_dropout=get("noise.mask_dropout", float, base.noise.mask_dropout),
    )
    dynamics = DynamicsParams(
        tau_v=get("dynamics.tau_v", float, base.dynamics.tau_v),
        tau_w=get("dynamics.tau_w", float, base.dynamics.tau_w),
        physics_dt=get("dynamics.physics_dt", float, base.dynamics.physics_dt),
        control_dt=get("dynamics.control_dt", float, base.dynamics.control_dt),
        collision_radius=get("dynamics.collision_radius", float, base.dynamics.collision_radius),
    )
    alpha_raw = kv.get("reward.alpha", "auto")
    reward = RewardParams(
        alpha=None if alpha_raw == "auto" else float(alpha_raw),
        beta=get("reward.beta", float, base.reward.beta),
        gamma=get("reward.gamma", float, base.reward.gamma),
        delta=get("reward.delta", float, base.reward.delta),
        d_ref=get("reward.d_ref", float, base.reward.d_ref),
        d_coll=get("reward.d_coll", float, base.reward.d_coll),
        incremental=bool(get("reward.incremental", int, int(base.reward.incremental))),
    )
    camera = CameraModel(
        h_fov_deg=get("camera.h_fov_deg", float, base.camera.h_fov_deg),
        v_fov_deg=get("camera.v_fov_deg", float, base.camera.v_fov_deg),
        width=get("camera.width", int, base.camera.width),
        height=get("camera.height", int, base.camera.height),
        max_range=get("camera.max_range", float, base.camera.max_range),
    )
    lidar = LidarModel(
        h_rays=get("lidar.h_rays", int, base.lidar.h_rays),
        v_rays=get("lidar.v_rays", int, base.lidar.v_rays),
        max_range=get("lidar.max_range", float, base.lidar.max_range),
    )
    if "schedule" in kv:
        schedule = tuple(
            (int(part.split(":")[0]), float(part.split(":")[1])) for part in kv["schedule"].split(",")
        )
    else:
        schedule = base.semantic_schedule
    w_max = tuple(float(x) for x in kv["w_max"].split(",")) if "w_max" in kv else base.w_max
    return EpisodeConfig(
        episode_length=get("episode_length", float, base.episode_length),
        room=room,
        w_max=w_max,
        noise=noise,
        dynamics=dynamics,
        reward=reward,
        camera=camera,
        lidar=lidar,
        semantic_schedule=schedule,
        schedule_margin=get("schedule_margin", float, base.schedule_margin),
        spawn_clearance=get("spawn_clearance", float, base.spawn_clearance),
        seed=get("seed", int, base.seed),
    )


def load_episode_config(path: str) -> EpisodeConfig:
    with open(path) as fh:
        return episode_config_from_text(fh.read())
