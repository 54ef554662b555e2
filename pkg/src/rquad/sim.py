"""Rigid-body quadcopter dynamics (X configuration).

Rotor layout, body frame (x forward, y left, z up), arm offsets of ``l``
along both body axes::

    rotor 2 (-l, +l)     rotor 1 (+l, +l)
    rotor 3 (-l, -l)     rotor 4 (+l, -l)

Rotors 2 and 4 produce positive yaw reaction torque, 1 and 3 negative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
from numba import njit

# Hull share of total mass used by the default inertia model.
HULL_MASS_FRACTION = 0.5

_clamped_actions = 0


@dataclass(frozen=True)
class QuadParams:
    """Physical constants of the vehicle and the world.

    ``inertia`` left as ``None`` selects the flat-cross default, see
    :meth:`inertia_diag`.
    """

    mass: float = 1.5
    arm_length: float = 0.13
    inertia: Optional[tuple] = None
    gravity: float = 9.81
    thrust_min: float = 0.0
    thrust_max: float = 15.0
    torque_ratio: float = 0.016
    motor_lag: float = 0.001
    dt: float = 0.01
    inertia_follows_mass: bool = True

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass: must be > 0, got {self.mass}")
        if not self.arm_length > 0:
            raise ValueError(f"arm_length: must be > 0, got {self.arm_length}")
        if self.inertia is not None:
            inertia = tuple(float(v) for v in self.inertia)
            if len(inertia) != 3 or min(inertia) <= 0:
                raise ValueError(f"inertia: need three positive values, got {self.inertia}")
            object.__setattr__(self, "inertia", inertia)
        if not self.thrust_max > self.thrust_min >= 0:
            raise ValueError(
                f"thrust_min/thrust_max: need thrust_max > thrust_min >= 0, "
                f"got [{self.thrust_min}, {self.thrust_max}]"
            )
        if not self.dt > 0:
            raise ValueError(f"dt: must be > 0, got {self.dt}")
        if not self.motor_lag >= 0:
            raise ValueError(f"motor_lag: must be >= 0, got {self.motor_lag}")

    @property
    def inertia_diag(self) -> np.ndarray:
        """Diagonal inertia (Ixx, Iyy, Izz).

        Default model: the hull is a solid sphere of radius l/2 holding
        ``HULL_MASS_FRACTION`` of the mass, the rest sits in four point
        masses at (+-l, +-l, 0)::

            Ixx = Iyy = m l^2 (1 - h + h/10)
            Izz       = m l^2 (2 (1 - h) + h/10)
        """
        if self.inertia is not None:
            return np.array(self.inertia, dtype=float)
        h = HULL_MASS_FRACTION
        ml2 = self.mass * self.arm_length**2
        ixx = ml2 * (1.0 - h + h / 10.0)
        izz = ml2 * (2.0 * (1.0 - h) + h / 10.0)
        return np.array([ixx, ixx, izz])

    def with_mass_ratio(self, ratio: float) -> "QuadParams":
        """Copy with mass scaled by ``ratio``.

        Explicit inertia is scaled by the same ratio unless
        ``inertia_follows_mass`` is off, in which case it is frozen at the
        current value.
        """
        if not ratio > 0:
            raise ValueError(f"mass_ratio: must be > 0, got {ratio}")
        if ratio == 1.0:
            return self
        if self.inertia_follows_mass:
            inertia = None if self.inertia is None else tuple(ratio * np.asarray(self.inertia))
        else:
            inertia = tuple(self.inertia_diag)
        return replace(self, mass=self.mass * ratio, inertia=inertia)


@dataclass(frozen=True)
class QuadState:
    position: np.ndarray
    velocity: np.ndarray
    rotation: np.ndarray
    body_rates: np.ndarray
    # Actual rotor thrusts for the motor-lag filter; None means no history.
    rotor_thrusts: Optional[np.ndarray] = field(default=None)

    @classmethod
    def at_rest(cls, position=(0.0, 0.0, 0.0)) -> "QuadState":
        return cls(
            position=np.array(position, dtype=float),
            velocity=np.zeros(3),
            rotation=np.eye(3),
            body_rates=np.zeros(3),
        )


class StateDerivative(NamedTuple):
    position: np.ndarray
    velocity: np.ndarray
    rotation: np.ndarray
    body_rates: np.ndarray


def _cross(a, b):
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def skew(w) -> np.ndarray:
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def rotation_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Body-to-world rotation for roll/pitch/yaw (Z-Y-X composition)."""
    sx, cx = math.sin(roll), math.cos(roll)
    sp, cp = math.sin(pitch), math.cos(pitch)
    sy, cy = math.sin(yaw), math.cos(yaw)
    return np.array(
        [
            [cy * cp, sx * sp * cy - sy * cx, sx * sy + sp * cx * cy],
            [sy * cp, sx * sy * sp + cx * cy, -sx * cy + sy * sp * cx],
            [-sp, sx * cp, cx * cp],
        ]
    )


def roll_pitch(rotation: np.ndarray) -> tuple[float, float]:
    """Inverse of :func:`rotation_from_euler` for the roll and pitch angles."""
    pitch = -math.asin(min(1.0, max(-1.0, rotation[2, 0])))
    roll = math.atan2(rotation[2, 1], rotation[2, 2])
    return roll, pitch


def body_torque(thrusts, params: QuadParams) -> np.ndarray:
    f1, f2, f3, f4 = thrusts
    arm = params.arm_length
    return np.array(
        [
            arm * (f1 + f2 - f3 - f4),
            arm * (-f1 + f2 + f3 - f4),
            params.torque_ratio * (-f1 + f2 - f3 + f4),
        ]
    )


def _linear_accel(rotation, total_thrust, mass, gravity):
    acc = rotation[:, 2] * (total_thrust / mass)
    acc[2] -= gravity
    return acc


def _angular_accel(omega, torque, inertia):
    return (torque - _cross(omega, inertia * omega)) / inertia


def derivatives(state: QuadState, thrusts, params: QuadParams) -> StateDerivative:
    """Time derivative of every state component under rotor ``thrusts``."""
    thrusts = np.asarray(thrusts, dtype=float)
    inertia = params.inertia_diag
    return StateDerivative(
        position=state.velocity.copy(),
        velocity=_linear_accel(state.rotation, thrusts.sum(), params.mass, params.gravity),
        rotation=state.rotation @ skew(state.body_rates),
        body_rates=_angular_accel(state.body_rates, body_torque(thrusts, params), inertia),
    )


@njit(cache=True)
def _cross3(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def _exp3(u):
    theta2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2]
    if theta2 < 1e-12:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        theta = math.sqrt(theta2)
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
    k = np.zeros((3, 3))
    k[0, 1], k[0, 2] = -u[2], u[1]
    k[1, 0], k[1, 2] = u[2], -u[0]
    k[2, 0], k[2, 1] = -u[1], u[0]
    return np.eye(3) + a * k + b * (k @ k)


@njit(cache=True)
def _lin_acc(rot, total, mass, gravity):
    acc = rot[:, 2] * (total / mass)
    acc[2] -= gravity
    return acc


@njit(cache=True)
def _ang_acc(w, torque, inertia):
    return (torque - _cross3(w, inertia * w)) / inertia


@njit(cache=True)
def _dexpinv(u, w):
    # truncated inverse of the exponential's derivative (right trivialisation)
    uw = _cross3(u, w)
    return w + 0.5 * uw + _cross3(u, uw) / 12.0


@njit(cache=True)
def _rkmk4(p0, v0, r0, w0, total, torque, mass, gravity, inertia, dt):
    kv1 = _lin_acc(r0, total, mass, gravity)
    kw1 = _ang_acc(w0, torque, inertia)
    ku1 = w0

    u = 0.5 * dt * ku1
    kp2 = v0 + 0.5 * dt * kv1
    w = w0 + 0.5 * dt * kw1
    kv2 = _lin_acc(r0 @ _exp3(u), total, mass, gravity)
    kw2 = _ang_acc(w, torque, inertia)
    ku2 = _dexpinv(u, w)

    u = 0.5 * dt * ku2
    kp3 = v0 + 0.5 * dt * kv2
    w = w0 + 0.5 * dt * kw2
    kv3 = _lin_acc(r0 @ _exp3(u), total, mass, gravity)
    kw3 = _ang_acc(w, torque, inertia)
    ku3 = _dexpinv(u, w)

    u = dt * ku3
    kp4 = v0 + dt * kv3
    w = w0 + dt * kw3
    kv4 = _lin_acc(r0 @ _exp3(u), total, mass, gravity)
    kw4 = _ang_acc(w, torque, inertia)
    ku4 = _dexpinv(u, w)

    h = dt / 6.0
    p = p0 + h * (v0 + 2.0 * kp2 + 2.0 * kp3 + kp4)
    v = v0 + h * (kv1 + 2.0 * kv2 + 2.0 * kv3 + kv4)
    w = w0 + h * (kw1 + 2.0 * kw2 + 2.0 * kw3 + kw4)
    r = r0 @ _exp3(h * (ku1 + 2.0 * ku2 + 2.0 * ku3 + ku4))
    # one Newton-Schulz polar iteration
    r = r @ (1.5 * np.eye(3) - 0.5 * (r.T @ r))
    return p, v, r, w


def so3_exp(u) -> np.ndarray:
    """Rodrigues formula for exp(skew(u))."""
    return _exp3(np.asarray(u, dtype=float))


def step(state: QuadState, thrusts, params: QuadParams) -> QuadState:
    """Advance ``state`` by ``params.dt`` with constant rotor thrusts.

    Fourth-order Runge-Kutta-Munthe-Kaas: translational and angular
    velocities use classic RK4 stages, the attitude is carried as a
    body-frame rotation vector, mapped back through the exponential and
    re-orthonormalised.
    """
    thrusts = np.asarray(thrusts, dtype=float)
    p, v, r, w = _rkmk4(
        state.position,
        state.velocity,
        np.ascontiguousarray(state.rotation),
        state.body_rates,
        float(thrusts.sum()),
        body_torque(thrusts, params),
        params.mass,
        params.gravity,
        params.inertia_diag,
        params.dt,
    )
    return QuadState(p, v, r, w, thrusts)


def motor_lag_filter(commanded, actual, params: QuadParams) -> np.ndarray:
    """First-order rotor lag; passes the command through when lag <= dt."""
    commanded = np.asarray(commanded, dtype=float)
    if actual is None:
        return commanded
    if params.motor_lag <= params.dt:
        return commanded.copy()
    coeff = params.dt / params.motor_lag
    return actual + coeff * (commanded - actual)


def hover_thrust(params: QuadParams) -> float:
    """Per-rotor thrust balancing the weight of a level vehicle."""
    return params.mass * params.gravity / 4.0


def scale_action(action, params: QuadParams) -> np.ndarray:
    """Map normalised actions in [-1, 1] to rotor thrusts around hover.

    Out-of-range actions are clipped and counted (see
    :func:`clamped_action_count`); results are clipped to the thrust range.
    """
    global _clamped_actions
    action = np.asarray(action, dtype=float)
    if action.min() < -1.0 or action.max() > 1.0:
        _clamped_actions += 1
        action = np.clip(action, -1.0, 1.0)
    half_range = 0.5 * (params.thrust_max - params.thrust_min)
    thrusts = hover_thrust(params) + action * half_range
    return np.clip(thrusts, params.thrust_min, params.thrust_max)


def clamped_action_count() -> int:
    """Number of :func:`scale_action` calls that received out-of-range input."""
    return _clamped_actions
