import numpy as np

from sensorgrad.envs.synthetic import (
    SyntheticEnv,
    SyntheticWorld,
    correlated_sensor_trial,
    synthetic_trial,
)
from sensorgrad.estimators import NoiseSpec
from sensorgrad.seeding import children, substream

TRUE_GRADIENT = np.array([1.5, -0.7])
SENSOR_SLOPE = np.array([0.8, -1.2])


def make_world(coupling=None, sensor_cov=None, output_variance=0.0, offset=0.0):
    noise = NoiseSpec(
        output_variance=output_variance,
        sensor_cov=np.zeros((2, 2)) if sensor_cov is None else sensor_cov,
        sensor_mean=np.array([0.5, -0.25]),
        policy_sensor_coupling=coupling,
        coupling_offset=np.array([0.1, 0.2]),
    )
    return SyntheticWorld(TRUE_GRADIENT, SENSOR_SLOPE, offset, noise)


def test_noiseless_trial_follows_the_score_equation():
    coupling = np.array([[0.6, -0.3], [0.2, 0.5]])
    world = make_world(coupling=coupling, offset=-2.0)
    policy = np.array([1.0, 2.0])
    trial = synthetic_trial(world, policy, substream(61))
    expected_sensed = (
        world.noise.sensor_mean + world.noise.coupling_offset + coupling.T @ policy
    )
    assert np.allclose(trial.raw_sensors, expected_sensed, atol=1e-12)
    expected_score = (
        float(policy @ TRUE_GRADIENT) + float(expected_sensed @ SENSOR_SLOPE) - 2.0
    )
    assert trial.score == expected_score
    assert np.array_equal(trial.raw_sensors, trial.encoded_sensors)


def test_noiseless_correlated_trial_flips_the_coupling_sign():
    coupling = np.array([[0.6, -0.3], [0.2, 0.5]])
    world = make_world(coupling=coupling)
    policy = np.array([1.0, 2.0])
    trial = correlated_sensor_trial(world, policy, substream(62))
    expected_sensed = (
        world.noise.sensor_mean + world.noise.coupling_offset - coupling.T @ policy
    )
    assert np.allclose(trial.raw_sensors, expected_sensed, atol=1e-12)
    # the score responds to the disturbance (zero here), not the reading
    assert trial.score == float(policy @ TRUE_GRADIENT)


def test_score_consistent_with_returned_sensors_under_noise():
    world = make_world(sensor_cov=np.array([[0.3, 0.1], [0.1, 0.2]]))
    policy = np.array([0.4, -1.0])
    trial = synthetic_trial(world, policy, substream(63))
    expected = float(policy @ TRUE_GRADIENT) + float(trial.raw_sensors @ SENSOR_SLOPE)
    assert trial.score == expected


def test_correlated_sensor_mean_tracks_the_policy():
    coupling = np.array([[0.6, -0.3], [0.2, 0.5]])
    sensor_cov = np.array([[0.2, -0.05], [-0.05, 0.4]])
    world = make_world(coupling=coupling, sensor_cov=sensor_cov)
    env = SyntheticEnv(world, correlated=True)
    policy = np.array([1.0, -0.5])
    count = 4000
    trials = env.sample_trials(np.tile(policy, (count, 1)), substream(64))
    sensed = np.array([t.raw_sensors for t in trials])
    expected = (
        world.noise.sensor_mean + world.noise.coupling_offset - coupling.T @ policy
    )
    se = sensed.std(axis=0, ddof=1) / np.sqrt(count)
    assert np.all(np.abs(sensed.mean(axis=0) - expected) < 4.0 * se)


def test_batch_sampling_matches_per_trial_streams():
    world = make_world(sensor_cov=np.eye(2) * 0.1, output_variance=0.2)
    env = SyntheticEnv(world)
    policies = substream(65).normal(size=(5, 2))
    batch = env.sample_trials(policies, substream(66))
    singles = [
        env.sample_trial(policies[i], stream)
        for i, stream in enumerate(children(substream(66), 5))
    ]
    for a, b in zip(batch, singles):
        assert a.score == b.score
        assert np.array_equal(a.raw_sensors, b.raw_sensors)


def test_mean_score_matches_the_analytic_value():
    sensor_cov = np.array([[0.2, -0.05], [-0.05, 0.4]])
    world = make_world(sensor_cov=sensor_cov, output_variance=0.09, offset=1.0)
    env = SyntheticEnv(world)
    policy = np.array([0.3, 0.6])
    count = 20000
    trials = env.sample_trials(np.tile(policy, (count, 1)), substream(67))
    scores = np.array([t.score for t in trials])
    analytic = (
        float(policy @ TRUE_GRADIENT)
        + float(
            (world.noise.sensor_mean + world.noise.coupling_offset) @ SENSOR_SLOPE
        )
        + 1.0
    )
    se = scores.std(ddof=1) / np.sqrt(count)
    assert abs(scores.mean() - analytic) < 4.0 * se
