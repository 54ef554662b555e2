import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rquad import env, sim
from rquad.env import EnvConfig, PerturbConfig, RewardCoeffs, TaskConfig
from rquad.sim import QuadParams, QuadState

TASK = TaskConfig()
COEFFS = RewardCoeffs()
CONFIG = EnvConfig()


def hovering_at(position, params=None):
    state = QuadState.at_rest(position)
    thrusts = np.full(4, sim.hover_thrust(params or QuadParams()))
    return QuadState(state.position, state.velocity, state.rotation, state.body_rates, thrusts)


def obs_at_goal(offset=(0.0, 0.0, 0.0)):
    return env.observe(QuadState.at_rest(TASK.goal + np.array(offset)), TASK)


def test_reward_coefficient_defaults():
    c = RewardCoeffs()
    assert (c.beta, c.alpha_a, c.alpha_p, c.alpha_v, c.alpha_omega, c.alpha_xi, c.alpha_rho) == (
        2.0, 0.025, 1.0, 0.05, 0.001, 0.02, 0.02,
    )


def test_reward_at_goal_is_alive_bonus():
    assert env.reward(obs_at_goal(), np.zeros(4), COEFFS) == pytest.approx(2.0, abs=1e-12)


def test_reward_unit_position_error():
    assert env.reward(obs_at_goal((1.0, 0.0, 0.0)), np.zeros(4), COEFFS) == pytest.approx(1.0, abs=1e-12)


def test_reward_full_action():
    assert env.reward(obs_at_goal(), np.ones(4), COEFFS) == pytest.approx(1.95, abs=1e-12)


def test_reward_attitude_and_rates_terms():
    rotation = sim.rotation_from_euler(0.2, -0.1, 1.0)
    state = QuadState(TASK.goal.copy(), np.array([0.0, 3.0, 4.0]), rotation, np.array([0.0, 0.0, 2.0]))
    got = env.reward(env.observe(state, TASK), np.zeros(4), COEFFS)
    expected = 2.0 - 0.05 * 5.0 - 0.001 * 2.0 - 0.02 * 0.2 - 0.02 * 0.1
    assert got == pytest.approx(expected, abs=1e-12)


@given(
    st.lists(st.floats(-3, 3), min_size=3, max_size=3),
    st.lists(st.floats(-1, 1), min_size=4, max_size=4),
)
def test_reward_never_exceeds_alive_bonus(offset, action):
    assert env.reward(obs_at_goal(offset), action, COEFFS) <= COEFFS.beta + 1e-12


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_reward_decreases_with_distance(a, b):
    near, far = sorted((a, b))
    r_near = env.reward(obs_at_goal((near, 0, 0)), np.zeros(4), COEFFS)
    r_far = env.reward(obs_at_goal((far, 0, 0)), np.zeros(4), COEFFS)
    assert r_far <= r_near + 1e-12


def test_observe_layout():
    rotation = sim.rotation_from_euler(0.1, 0.2, 0.3)
    state = QuadState(np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0]), rotation, np.array([7.0, 8.0, 9.0]))
    obs = env.observe(state, TASK)
    assert obs.shape == (env.OBS_DIM,)
    np.testing.assert_array_equal(obs[:3], [1.0, 2.0, -2.0])
    np.testing.assert_array_equal(obs[3:6], [4.0, 5.0, 6.0])
    np.testing.assert_array_equal(obs[6:15], rotation.ravel())
    np.testing.assert_array_equal(obs[15:], [7.0, 8.0, 9.0])
    e_p, e_v, r, e_w = env.split_observation(obs)
    np.testing.assert_array_equal(r, rotation)


def test_reset_degenerate_task_starts_at_goal():
    task = TaskConfig(init_cube_half=0.0, init_angle_bound=0.0, init_speed_max=0.0, init_rate_max=0.0)
    state = env.reset(task, np.random.default_rng(0), QuadParams())
    np.testing.assert_array_equal(state.position, task.goal)
    np.testing.assert_array_equal(state.rotation, np.eye(3))
    np.testing.assert_array_equal(state.velocity, np.zeros(3))
    np.testing.assert_allclose(state.rotor_thrusts, 3.67875)


def test_reset_distribution():
    rng = np.random.default_rng(5)
    states = [env.reset(TASK, rng) for _ in range(4000)]
    offsets = np.array([s.position - TASK.goal for s in states])
    assert np.abs(offsets).max() <= TASK.init_cube_half
    # uniform on [-1, 1]: mean 0, variance 1/3
    np.testing.assert_allclose(offsets.mean(axis=0), 0.0, atol=0.05)
    np.testing.assert_allclose(offsets.var(axis=0), 1 / 3, atol=0.03)
    speeds = np.array([np.linalg.norm(s.velocity) for s in states])
    assert speeds.max() <= TASK.init_speed_max
    assert speeds.mean() == pytest.approx(0.5, abs=0.03)
    rates = np.array([np.linalg.norm(s.body_rates) for s in states])
    assert rates.max() <= TASK.init_rate_max
    roll_pitch = np.array([sim.roll_pitch(s.rotation) for s in states])
    assert np.abs(roll_pitch).max() <= TASK.init_angle_bound + 1e-12
    for s in states[:50]:
        np.testing.assert_allclose(s.rotation.T @ s.rotation, np.eye(3), atol=1e-12)


def test_reset_is_seeded():
    a = env.reset(TASK, np.random.default_rng(9))
    b = env.reset(TASK, np.random.default_rng(9))
    np.testing.assert_array_equal(a.position, b.position)
    np.testing.assert_array_equal(a.rotation, b.rotation)


@pytest.mark.parametrize(
    "offset, step_index, done",
    [
        ((0.0, 0.0, 0.0), 0, False),
        ((0.0, 0.0, 0.0), 1499, False),
        ((0.0, 0.0, 0.0), 1500, True),
        ((0.999, -0.999, 0.999), 10, False),
        ((1.001, 0.0, 0.0), 10, True),
        ((0.0, 0.0, -1.5), 10, True),
    ],
)
def test_terminated(offset, step_index, done):
    state = QuadState.at_rest(TASK.goal + np.array(offset))
    assert env.terminated(state, step_index, TASK) is done


def test_perturb_zero_delta_draws_nothing():
    rng = np.random.default_rng(1)
    before = rng.bit_generator.state
    out = env.perturb_action(np.full(4, 0.3), 0.0, rng)
    assert rng.bit_generator.state == before
    np.testing.assert_array_equal(out, 0.3)


def test_perturb_full_delta_statistics():
    rng = np.random.default_rng(2)
    noise = np.array([env.perturb_action(np.zeros(4), 1.0, rng) for _ in range(20_000)])
    assert np.all(noise != 0.0)
    np.testing.assert_allclose(noise.mean(axis=0), 0.0, atol=0.02)
    np.testing.assert_allclose(noise.var(axis=0), 1 / 3, atol=0.02)


def test_perturb_fraction_matches_delta():
    rng = np.random.default_rng(3)
    hits = sum(np.any(env.perturb_action(np.zeros(4), 0.3, rng) != 0.0) for _ in range(20_000))
    assert hits / 20_000 == pytest.approx(0.3, abs=0.015)


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4), st.integers(0, 2**32 - 1))
def test_perturbed_action_stays_normalised(action, seed):
    out = env.perturb_action(action, 1.0, np.random.default_rng(seed))
    assert np.all(np.abs(out) <= 1.0)


def test_env_step_heavy_plant_sinks_at_half_g():
    state = hovering_at(TASK.goal)
    result = env.env_step(state, np.zeros(4), 0, CONFIG, np.random.default_rng(0), PerturbConfig(mass_ratio=2.0))
    dt, g = CONFIG.params.dt, CONFIG.params.gravity
    assert result.state.velocity[2] == pytest.approx(-0.5 * g * dt, abs=1e-12)
    np.testing.assert_allclose(result.state.velocity[:2], 0.0, atol=1e-15)


def test_env_step_nominal_hover_is_steady():
    state = hovering_at(TASK.goal)
    result = env.env_step(state, np.zeros(4), 0, CONFIG, np.random.default_rng(0))
    np.testing.assert_allclose(result.state.position, TASK.goal, atol=1e-12)
    assert result.reward == pytest.approx(2.0, abs=1e-9)
    assert not result.done
    np.testing.assert_array_equal(result.obs, env.observe(result.state, TASK))


def test_env_step_reward_uses_unperturbed_action():
    state = hovering_at(TASK.goal)
    result = env.env_step(state, np.zeros(4), 0, CONFIG, np.random.default_rng(0), PerturbConfig(delta=1.0))
    # the executed action is noisy, the charged action is zero
    expected = env.reward(result.obs, np.zeros(4), COEFFS)
    assert result.reward == expected
    assert np.linalg.norm(result.state.velocity) > 0


def test_env_step_last_tick_is_done():
    state = hovering_at(TASK.goal)
    result = env.env_step(state, np.zeros(4), TASK.max_steps - 1, CONFIG, np.random.default_rng(0))
    assert result.done


@pytest.mark.parametrize("kwargs", [dict(mass_ratio=0.0), dict(delta=-0.1), dict(delta=1.5)])
def test_perturb_config_validation(kwargs):
    with pytest.raises(ValueError):
        PerturbConfig(**kwargs)


def test_task_goal_and_horizon_defaults():
    np.testing.assert_array_equal(TASK.goal, [0.0, 0.0, 5.0])
    assert TASK.max_steps == 1500
    assert TASK.init_angle_bound == pytest.approx(math.pi / 3)
