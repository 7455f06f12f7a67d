"""Action scaling, first-order velocity tracking against the closed-form
response, noise statistics, and bit-exact determinism."""

import numpy as np
import pytest

from inspectsim.agent import (
    ActionCommand,
    DynamicsParams,
    NoiseParams,
    RobotState,
    perturb_state_observation,
    scale_action,
    step_dynamics,
)


def test_scale_action_hover():
    cmd = scale_action(np.zeros(4), (1, 1, 1, 1))
    assert not cmd.v_ref.any()
    assert cmd.yaw_rate_ref == 0.0


def test_scale_action_training_limits():
    cmd = scale_action(np.ones(4), (1.0, 1.0, 1.0, 1.0))
    assert np.array_equal(cmd.v_ref, [1.0, 1.0, 1.0])
    assert cmd.yaw_rate_ref == 1.0


def test_scale_action_deployment_limits():
    cmd = scale_action([1.0, 0.0, 0.0, 1.0], (0.3, 0.3, 0.3, 0.6))
    assert np.allclose(cmd.v_ref, [0.3, 0.0, 0.0], atol=1e-15)
    assert cmd.yaw_rate_ref == pytest.approx(0.6, abs=1e-15)


def test_scale_action_clamps_out_of_range():
    cmd = scale_action([1.5, -2.0, 0.0, 0.5], (1, 1, 1, 1))
    assert np.allclose(cmd.v_ref, [1.0, -1.0, 0.0])


def test_dynamics_params_validation():
    with pytest.raises(ValueError):
        DynamicsParams(physics_dt=0.03, control_dt=0.1)
    with pytest.raises(ValueError):
        DynamicsParams(physics_dt=0.2, control_dt=0.1)
    assert DynamicsParams().substeps == 10


def test_hover_from_rest_is_fixed_point():
    state = RobotState.at([1.0, 2.0, 3.0], 0.4)
    out = step_dynamics(state, ActionCommand(np.zeros(3), 0.0), DynamicsParams(), NoiseParams.zero(), None)
    assert np.array_equal(out.p, state.p)
    assert np.array_equal(out.v, state.v)
    assert out.yaw == pytest.approx(0.4, abs=1e-12)


def test_first_order_response_matches_closed_form():
    # constant v_ref=(1,0,0) with tau=0.2 for 1 s:
    # v(t) = 1 - e^(-t/tau), p(t) = t - tau*(1 - e^(-t/tau))
    params = DynamicsParams()
    state = RobotState.at(np.zeros(3))
    cmd = ActionCommand(np.array([1.0, 0.0, 0.0]), 0.0)
    for _ in range(10):  # 10 control steps of 0.1 s
        state = step_dynamics(state, cmd, params, NoiseParams.zero(), None)
    tau = params.tau_v
    assert state.v[0] == pytest.approx(1.0 - np.exp(-1.0 / tau), abs=1e-3)
    assert state.p[0] == pytest.approx(1.0 - tau * (1.0 - np.exp(-1.0 / tau)), abs=1e-3)
    assert state.p[1] == 0.0 and state.p[2] == 0.0


def test_yaw_rate_integration():
    # yaw rate already converged at 1 rad/s: after pi seconds yaw advances by pi
    params = DynamicsParams()
    state = RobotState(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3), np.array([0.0, 0.0, 1.0]))
    cmd = ActionCommand(np.zeros(3), 1.0)
    steps = int(round(np.pi / params.control_dt))
    total = 0.0
    prev = state.yaw
    for _ in range(steps):
        state = step_dynamics(state, cmd, params, NoiseParams.zero(), None)
        total += (state.yaw - prev + np.pi) % (2.0 * np.pi) - np.pi
        prev = state.yaw
    assert total == pytest.approx(steps * params.control_dt, abs=1e-9)


def test_velocity_saturation_with_disturbance():
    params = DynamicsParams()
    noise = NoiseParams()  # wrench_std 0.1
    rng = np.random.Generator(np.random.PCG64(5))
    state = RobotState.at(np.zeros(3))
    w_max = np.array([1.0, 1.0, 1.0])
    cmd = ActionCommand(w_max.copy(), 1.0)
    bound = np.linalg.norm(w_max) + 3.0 * noise.wrench_std * params.tau_v
    for _ in range(300):
        state = step_dynamics(state, cmd, params, noise, rng)
        assert np.linalg.norm(state.v) <= bound


def test_step_determinism_bit_exact():
    params = DynamicsParams()
    noise = NoiseParams()
    outs = []
    for _ in range(2):
        rng = np.random.Generator(np.random.PCG64(77))
        state = RobotState.at([0.5, 0.5, 1.0], 0.2)
        for k in range(50):
            cmd = ActionCommand(np.array([0.3, -0.2, 0.1]), 0.5 if k % 2 else -0.5)
            state = step_dynamics(state, cmd, params, noise, rng)
        outs.append(state.as_vector())
    assert np.array_equal(outs[0], outs[1])


def test_perturb_zero_noise_is_identity():
    state = RobotState.at([1.0, 2.0, 3.0], 0.3)
    rng = np.random.Generator(np.random.PCG64(0))
    out = perturb_state_observation(state, NoiseParams.zero(), rng)
    assert np.array_equal(out.p, state.p)
    assert np.array_equal(out.v, state.v)
    assert np.allclose(out.q, state.q, atol=1e-15)


def test_perturb_quaternion_stays_unit():
    state = RobotState.at(np.zeros(3), 1.1)
    rng = np.random.Generator(np.random.PCG64(2))
    for _ in range(100):
        out = perturb_state_observation(state, NoiseParams(), rng)
        assert np.linalg.norm(out.q) == pytest.approx(1.0, abs=1e-12)


def test_perturb_position_noise_statistics():
    state = RobotState.at(np.zeros(3))
    noise = NoiseParams()
    rng = np.random.Generator(np.random.PCG64(31))
    deltas = np.array([perturb_state_observation(state, noise, rng).p for _ in range(100_00)])
    assert np.all(np.abs(deltas) <= noise.position_noise + 1e-12)
    assert np.abs(deltas.mean(axis=0)).max() < noise.position_noise * 0.05
    # uniform distribution: std = halfwidth / sqrt(3)
    assert np.allclose(deltas.std(axis=0), noise.position_noise / np.sqrt(3.0), rtol=0.1)
