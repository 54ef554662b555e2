"""Waypoint-reaching task built on :mod:`rquad.sim`.

Errors are always ``current - desired``; the desired velocity, attitude and
body rates are zero, the desired position is ``TaskConfig.goal_position``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import sim
from .sim import QuadParams, QuadState

OBS_DIM = 18
ACTION_DIM = 4


@dataclass(frozen=True)
class RewardCoeffs:
    beta: float = 2.0
    alpha_a: float = 0.025
    alpha_p: float = 1.0
    alpha_v: float = 0.05
    alpha_omega: float = 0.001
    alpha_xi: float = 0.02
    alpha_rho: float = 0.02

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value >= 0:
                raise ValueError(f"{name}: must be >= 0, got {value}")


@dataclass(frozen=True)
class TaskConfig:
    goal_position: tuple = (0.0, 0.0, 5.0)
    init_cube_half: float = 1.0
    bound_cube_half: float = 1.0
    max_steps: int = 1500
    init_angle_bound: float = math.pi / 3
    init_speed_max: float = 1.0
    init_rate_max: float = 1.0

    def __post_init__(self):
        goal = tuple(float(v) for v in self.goal_position)
        if len(goal) != 3:
            raise ValueError(f"goal_position: need 3 values, got {self.goal_position}")
        object.__setattr__(self, "goal_position", goal)
        for name in ("init_cube_half", "init_angle_bound", "init_speed_max", "init_rate_max"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name}: must be >= 0, got {getattr(self, name)}")
        if not self.bound_cube_half > 0:
            raise ValueError(f"bound_cube_half: must be > 0, got {self.bound_cube_half}")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ValueError(f"max_steps: must be an integer >= 1, got {self.max_steps}")

    @property
    def goal(self) -> np.ndarray:
        return np.array(self.goal_position)


@dataclass(frozen=True)
class PerturbConfig:
    """Test-time mismatch: mass ratio m_test/m_train and action-noise probability."""

    mass_ratio: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        if not self.mass_ratio > 0:
            raise ValueError(f"mass_ratio: must be > 0, got {self.mass_ratio}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta: must lie in [0, 1], got {self.delta}")


NOMINAL = PerturbConfig()


@dataclass(frozen=True)
class EnvConfig:
    """Everything needed to roll out an episode."""

    params: QuadParams = QuadParams()
    task: TaskConfig = TaskConfig()
    coeffs: RewardCoeffs = RewardCoeffs()


class StepResult(NamedTuple):
    state: QuadState
    obs: np.ndarray
    reward: float
    done: bool


def _random_direction(rng: np.random.Generator) -> np.ndarray:
    while True:
        v = rng.standard_normal(3)
        n = math.sqrt(float(v @ v))
        if n > 1e-12:
            return v / n


def reset(task: TaskConfig, rng: np.random.Generator, params: QuadParams | None = None) -> QuadState:
    """Sample an initial state around the goal.

    Position is uniform in the cube of half-width ``init_cube_half``; roll,
    pitch and yaw are uniform in +-``init_angle_bound``; linear and angular
    speeds have uniform magnitudes along isotropic directions.
    """
    h = task.init_cube_half
    position = task.goal + rng.uniform(-h, h, size=3)
    b = task.init_angle_bound
    roll, pitch, yaw = rng.uniform(-b, b, size=3)
    speed = rng.uniform(0.0, task.init_speed_max)
    velocity = speed * _random_direction(rng)
    rate = rng.uniform(0.0, task.init_rate_max)
    body_rates = rate * _random_direction(rng)
    thrusts = None
    if params is not None:
        thrusts = np.full(4, sim.hover_thrust(params))
    return QuadState(
        position=position,
        velocity=velocity,
        rotation=sim.rotation_from_euler(roll, pitch, yaw),
        body_rates=body_rates,
        rotor_thrusts=thrusts,
    )


def observe(state: QuadState, task: TaskConfig) -> np.ndarray:
    """18-vector ``(e_p, e_v, R row-major, e_omega)``."""
    return np.concatenate(
        [
            state.position - task.goal,
            state.velocity,
            state.rotation.reshape(9),
            state.body_rates,
        ]
    )


def split_observation(obs):
    obs = np.asarray(obs, dtype=float)
    return obs[0:3], obs[3:6], obs[6:15].reshape(3, 3), obs[15:18]


def reward(obs, action, coeffs: RewardCoeffs) -> float:
    """Alive bonus minus weighted action, state and roll/pitch error norms."""
    e_p, e_v, rotation, e_w = split_observation(obs)
    roll, pitch = sim.roll_pitch(rotation)
    action = np.asarray(action, dtype=float)
    return (
        coeffs.beta
        - coeffs.alpha_a * math.sqrt(float(action @ action))
        - coeffs.alpha_p * math.sqrt(float(e_p @ e_p))
        - coeffs.alpha_v * math.sqrt(float(e_v @ e_v))
        - coeffs.alpha_omega * math.sqrt(float(e_w @ e_w))
        - coeffs.alpha_xi * abs(roll)
        - coeffs.alpha_rho * abs(pitch)
    )


def terminated(state: QuadState, step_index: int, task: TaskConfig) -> bool:
    if step_index >= task.max_steps:
        return True
    offset = np.abs(state.position - task.goal)
    return bool(offset.max() > task.bound_cube_half)


def perturb_action(action, delta: float, rng: np.random.Generator) -> np.ndarray:
    """With probability ``delta`` add Uniform(-1, 1) noise to every component.

    No random numbers are drawn when ``delta`` is zero.
    """
    action = np.asarray(action, dtype=float)
    if delta <= 0.0:
        return action
    if rng.random() < delta:
        action = np.clip(action + rng.uniform(-1.0, 1.0, size=action.shape), -1.0, 1.0)
    return action


def env_step(
    state: QuadState,
    action,
    step_index: int,
    config: EnvConfig,
    rng: np.random.Generator,
    perturb: PerturbConfig = NOMINAL,
    plant: QuadParams | None = None,
) -> StepResult:
    """Apply one normalised action and advance the simulation by one tick.

    ``step_index`` is the number of steps already taken in the episode.
    Thrust scaling always uses the training mass in ``config.params``; the
    dynamics use ``plant`` (pass it to avoid rebuilding the perturbed
    parameters every tick) or ``config.params`` scaled by the mass ratio.
    The reward is charged on the agent's own, unperturbed action.
    """
    params = config.params
    if plant is None:
        plant = params.with_mass_ratio(perturb.mass_ratio)
    action = np.asarray(action, dtype=float)
    executed = perturb_action(action, perturb.delta, rng)
    command = sim.scale_action(executed, params)
    thrusts = sim.motor_lag_filter(command, state.rotor_thrusts, params)
    nxt = sim.step(state, thrusts, plant)
    obs = observe(nxt, config.task)
    r = reward(obs, action, config.coeffs)
    done = terminated(nxt, step_index + 1, config.task)
    return StepResult(nxt, obs, r, done)
