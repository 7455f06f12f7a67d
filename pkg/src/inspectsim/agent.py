"""Robot state, action scaling, and first-order velocity-tracking flight dynamics.

The vehicle flies flat (roll/pitch zero); the commanded body-frame velocity and
yaw rate are tracked with first-order lags integrated exactly per 0.01 s substep,
with optional Gaussian disturbance accelerations.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from inspectsim.geometry import quat_from_yaw, yaw_from_quat, yaw_matrix

log = logging.getLogger(__name__)


class DynamicsFault(RuntimeError):
    """Non-finite state produced by integration; the episode aborts crash-equivalent."""


@dataclass(frozen=True)
class RobotState:
    p: np.ndarray  # position (3,), inertial frame
    q: np.ndarray  # unit quaternion (w, x, y, z)
    v: np.ndarray  # linear velocity (3,), inertial frame
    omega: np.ndarray  # angular velocity (3,), inertial frame

    @staticmethod
    def at(position, yaw: float = 0.0) -> "RobotState":
        return RobotState(
            p=np.asarray(position, dtype=np.float64),
            q=quat_from_yaw(yaw),
            v=np.zeros(3),
            omega=np.zeros(3),
        )

    @property
    def yaw(self) -> float:
        return yaw_from_quat(self.q)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.q, self.v, self.omega])


@dataclass(frozen=True)
class ActionCommand:
    v_ref: np.ndarray  # body-frame velocity reference (3,), m/s
    yaw_rate_ref: float  # rad/s


@dataclass(frozen=True)
class DynamicsParams:
    tau_v: float = 0.2
    tau_w: float = 0.1
    physics_dt: float = 0.01
    control_dt: float = 0.1
    collision_radius: float = 0.15

    def __post_init__(self):
        if not (0 < self.physics_dt <= self.control_dt):
            raise ValueError("need 0 < physics_dt <= control_dt")
        ratio = self.control_dt / self.physics_dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("control_dt must be an integer multiple of physics_dt")

    @property
    def substeps(self) -> int:
        return int(round(self.control_dt / self.physics_dt))


@dataclass(frozen=True)
class NoiseParams:
    # Disturbance and observation-noise magnitudes are engineering defaults; the
    # formulation (normal wrench, uniform state perturbation) is what matters.
    wrench_std: float = 0.1  # m/s^2 and rad/s^2 disturbance acceleration
    position_noise: float = 0.02  # m, uniform half-width
    velocity_noise: float = 0.05  # m/s
    quat_noise: float = 0.01
    omega_noise: float = 0.02  # rad/s
    depth_k_sigma: float = 0.01  # depth noise std = k_sigma * depth
    mask_dropout: float = 0.0

    @staticmethod
    def zero() -> "NoiseParams":
        return NoiseParams(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def scale_action(a, w_max) -> ActionCommand:
    """Element-wise product of the policy action with the command limits.

    Components outside [-1, 1] are clamped (external policies may emit slightly
    out-of-range floats).
    """
    a = np.asarray(a, dtype=np.float64)
    if np.any(np.abs(a) > 1.0):
        log.debug("clamping out-of-range action %s", a)
        a = np.clip(a, -1.0, 1.0)
    u = a * np.asarray(w_max, dtype=np.float64)
    return ActionCommand(v_ref=u[:3], yaw_rate_ref=float(u[3]))


def step_dynamics(
    state: RobotState,
    command: ActionCommand,
    params: DynamicsParams,
    noise: NoiseParams,
    rng: np.random.Generator | None,
    substeps: int | None = None,
) -> RobotState:
    """Integrate one control interval of first-order velocity tracking.

    Per substep the linear velocity and yaw rate decay exponentially towards the
    (yaw-rotated) reference; position and yaw use the exact integral of that
    response so noise-free runs match the closed-form solution.
    """
    if substeps is None:
        substeps = params.substeps
    dt = params.physics_dt
    decay_v = np.exp(-dt / params.tau_v)
    decay_w = np.exp(-dt / params.tau_w)
    p = state.p.copy()
    v = state.v.copy()
    yaw = state.yaw
    wz = float(state.omega[2])
    noisy = noise.wrench_std > 0.0 and rng is not None

    for _ in range(substeps):
        v_ref_inertial = yaw_matrix(yaw) @ command.v_ref
        # exact first-order step: v(t+dt) = ref + (v - ref) * e^(-dt/tau)
        dv = v - v_ref_inertial
        p = p + v_ref_inertial * dt + dv * params.tau_v * (1.0 - decay_v)
        v = v_ref_inertial + dv * decay_v
        dw = wz - command.yaw_rate_ref
        yaw = yaw + command.yaw_rate_ref * dt + dw * params.tau_w * (1.0 - decay_w)
        wz = command.yaw_rate_ref + dw * decay_w
        if noisy:
            acc = rng.normal(0.0, noise.wrench_std, 4)
            v = v + acc[:3] * dt
            wz = wz + acc[3] * dt

    out = RobotState(p=p, q=quat_from_yaw(yaw), v=v, omega=np.array([0.0, 0.0, wz]))
    vec = out.as_vector()
    if not np.all(np.isfinite(vec)):
        raise DynamicsFault(f"non-finite state after integration: {vec}")
    return out


def perturb_state_observation(state: RobotState, noise: NoiseParams, rng: np.random.Generator) -> RobotState:
    """Uniform additive observation noise per field; quaternion re-normalized."""
    p = state.p + rng.uniform(-noise.position_noise, noise.position_noise, 3)
    v = state.v + rng.uniform(-noise.velocity_noise, noise.velocity_noise, 3)
    q = state.q + rng.uniform(-noise.quat_noise, noise.quat_noise, 4)
    q = q / np.linalg.norm(q)
    omega = state.omega + rng.uniform(-noise.omega_noise, noise.omega_noise, 3)
    return RobotState(p=p, q=q, v=v, omega=omega)
