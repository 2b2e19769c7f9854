import numpy as np
import pytest

from sensorgrad.envs.arm import (
    KNOTS_PER_JOINT,
    ArmState,
    ArmWorld,
    DartEnv,
    arm_dynamics,
    arm_energy,
    chain_terms,
    dart_trial,
    dart_trials,
    desired_trajectory,
    fingertip_state,
    split_dart_sensors,
)
from sensorgrad.seeding import substream

HOLD_POLICY = np.repeat([1.9, 2.0, 0.6], KNOTS_PER_JOINT)


def rk4(world, angles, velocities, torques, dt):
    def accel(q, v):
        return arm_dynamics(world, ArmState(q, v, 0.0), torques)

    k1v = accel(angles, velocities)
    k1a = velocities
    k2a = velocities + 0.5 * dt * k1v
    k2v = accel(angles + 0.5 * dt * k1a, k2a)
    k3a = velocities + 0.5 * dt * k2v
    k3v = accel(angles + 0.5 * dt * k2a, k3a)
    k4a = velocities + dt * k3v
    k4v = accel(angles + dt * k3a, k4a)
    q = angles + (dt / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
    v = velocities + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return q, v


def test_single_link_matches_the_pendulum_equation():
    world = ArmWorld(
        lengths=(0.5,),
        masses=(2.0,),
        kp=(1.0,),
        kd=(0.1,),
        torque_mult_std=(0.0,),
        torque_add_std=(0.0,),
        start_posture=(0.3,),
    )
    # rod about its end: m L^2 / 3; gravity torque: -g m (L/2) cos q
    inertia = 2.0 * 0.5**2 / 3.0
    torque = 1.2
    expected = (torque - 9.8 * 2.0 * 0.25 * np.cos(0.3)) / inertia
    accel = arm_dynamics(
        world, ArmState(np.array([0.3]), np.array([0.0]), 0.0), np.array([torque])
    )
    assert accel[0] == pytest.approx(expected, rel=1e-12)


def test_unforced_motion_conserves_energy_without_gravity():
    world = ArmWorld(gravity=0.0)
    q = np.array([1.9, 2.0, 0.6])
    v = np.array([1.5, -2.0, 3.0])
    start = arm_energy(world, ArmState(q, v, 0.0))
    dt = 1e-4
    torques = np.zeros(3)
    for _ in range(2000):
        q, v = rk4(world, q, v, torques, dt)
    end = arm_energy(world, ArmState(q, v, 0.2))
    assert abs(end - start) <= 1e-3 * abs(start)


def test_hanging_arm_is_an_equilibrium():
    world = ArmWorld()
    q = np.array([-np.pi / 2.0, 0.0, 0.0])
    accel = arm_dynamics(world, ArmState(q, np.zeros(3), 0.0), np.zeros(3))
    assert np.allclose(accel, 0.0, atol=1e-10)


def test_inertia_matrices_are_symmetric_positive_definite():
    world = ArmWorld()
    rng = substream(101)
    angles = rng.uniform(-np.pi, np.pi, size=(1000, 3))
    velocities = rng.normal(size=(1000, 3))
    mass, _, _ = chain_terms(world, angles, velocities)
    assert np.allclose(mass, np.swapaxes(mass, 1, 2), atol=1e-12)
    eigenvalues = np.linalg.eigvalsh(mass)
    assert eigenvalues.min() > 0.0


def test_fingertip_state_of_a_straight_arm():
    world = ArmWorld()
    position, velocity = fingertip_state(
        world, np.zeros(3), np.array([2.0, 0.0, 0.0])
    )
    total = sum(world.lengths)
    assert np.allclose(position, [total, 0.0], atol=1e-12)
    assert np.allclose(velocity, [0.0, 2.0 * total], atol=1e-12)


def test_desired_trajectory_interpolates_the_knots():
    world = ArmWorld()
    policy = HOLD_POLICY + 0.1 * substream(102).normal(size=world.policy_dim)
    knot_times = np.linspace(0.0, world.sim_duration, KNOTS_PER_JOINT + 1)
    positions, _ = desired_trajectory(world, policy, knot_times)
    assert np.allclose(positions[0], world.start_posture, atol=1e-12)
    knots = policy.reshape(world.dof, KNOTS_PER_JOINT)
    assert np.allclose(positions[1:], knots.T, atol=1e-12)


def test_trial_sensors_unpack_consistently():
    world = ArmWorld()
    trial = dart_trial(world, HOLD_POLICY, substream(103))
    angles, velocities, release = split_dart_sensors(world, trial.raw_sensors)
    assert angles.shape == (world.grid_steps + 1, 3)
    assert velocities.shape == angles.shape
    assert np.allclose(angles[0], world.start_posture)
    assert np.allclose(velocities[0], 0.0)
    assert release == trial.raw_sensors[-1]
    assert abs(release - world.sim_duration) < 6.0 * world.release_time_std
    with pytest.raises(ValueError, match="length mismatch"):
        split_dart_sensors(world, trial.raw_sensors[:-2])


def test_trials_are_deterministic():
    world = ArmWorld()
    a = dart_trial(world, HOLD_POLICY, substream(104))
    b = dart_trial(world, HOLD_POLICY, substream(104))
    assert a.score == b.score
    assert np.array_equal(a.raw_sensors, b.raw_sensors)
    batch_a = dart_trials(world, np.tile(HOLD_POLICY, (3, 1)), substream(105))
    batch_b = dart_trials(world, np.tile(HOLD_POLICY, (3, 1)), substream(105))
    for x, y in zip(batch_a, batch_b):
        assert x.score == y.score
        assert np.array_equal(x.raw_sensors, y.raw_sensors)


def test_score_is_continuous_in_the_policy():
    world = ArmWorld()
    base = dart_trial(world, HOLD_POLICY, substream(106))
    nudged = dart_trial(world, HOLD_POLICY + 1e-6, substream(106))
    assert abs(nudged.score - base.score) < 1e-2


def test_policy_validation():
    world = ArmWorld()
    with pytest.raises(ValueError, match="joint-major"):
        dart_trial(world, np.zeros(4), substream(107))
    with pytest.raises(ValueError, match="finite"):
        dart_trial(world, np.full(9, np.nan), substream(107))


def test_env_exposes_the_policy_dimension_and_passthrough_encoding():
    env = DartEnv()
    assert env.policy_dim == 9
    trial = env.sample_trial(HOLD_POLICY, substream(108))
    assert trial.raw_sensors.shape == (env.world.sensor_dim,)
    from sensorgrad.estimators import TrialBatch

    batch = TrialBatch(HOLD_POLICY, np.eye(9) * 0.01, (trial,))
    assert env.encode_batch(batch) is batch
