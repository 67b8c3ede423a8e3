"""Quadcopter plant: X-configuration mixer, Newton-Euler dynamics, sensors.

Frames are NED (world) and FRD (body).  Quaternions are scalar-first
``(w, x, y, z)`` and rotate body vectors into the world frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InvalidParameterError

GRAVITY = 9.81


# --- quaternion helpers -------------------------------------------------------

def quat_mul(p, q) -> np.ndarray:
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    return np.array(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ]
    )


def cross3(a, b) -> np.ndarray:
    """Cross product of two 3-vectors (much cheaper than ``np.cross`` for one pair)."""
    return np.array(
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    )


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / math.sqrt(float(q @ q))


def quat_to_rotmat(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotmat_to_quat(r) -> np.ndarray:
    """Shepperd's method; returns the representative with ``w >= 0``."""
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = 2.0 * math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        q = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
    elif r[1, 1] > r[2, 2]:
        s = 2.0 * math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        q = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        q = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def quat_rotate(q, v) -> np.ndarray:
    return quat_to_rotmat(q) @ np.asarray(v, dtype=float)


def quat_from_axis_angle(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[math.cos(angle / 2)], math.sin(angle / 2) * axis])


# --- parameters and state -----------------------------------------------------

@dataclass
class VehicleParams:
    mass: float = 2.0
    inertia: tuple[float, float, float] = (0.021, 0.021, 0.036)
    arm_length: float = 0.25
    thrust_coeff: float = 8e-6
    torque_coeff: float = 1e-7
    rotor_max: float = 1100.0
    rotor_time_constant: float = 0.02
    drag_coeff: tuple[float, float, float] = (0.3, 0.3, 0.3)

    def __post_init__(self):
        self.inertia = tuple(float(v) for v in self.inertia)
        self.drag_coeff = tuple(float(v) for v in self.drag_coeff)
        scalars = {
            "mass": self.mass,
            "arm_length": self.arm_length,
            "thrust_coeff": self.thrust_coeff,
            "torque_coeff": self.torque_coeff,
            "rotor_max": self.rotor_max,
            "rotor_time_constant": self.rotor_time_constant,
        }
        for name, value in scalars.items():
            if not value > 0:
                raise InvalidParameterError(f"{name} must be > 0, got {value}")
        if len(self.inertia) != 3 or min(self.inertia) <= 0:
            raise InvalidParameterError("inertia must be three positive values")
        if len(self.drag_coeff) != 3 or min(self.drag_coeff) < 0:
            raise InvalidParameterError("drag_coeff must be three non-negative values")

    @property
    def hover_thrust(self) -> float:
        return self.mass * GRAVITY

    @property
    def hover_speed(self) -> float:
        return math.sqrt(self.hover_thrust / (4.0 * self.thrust_coeff))

    @property
    def max_thrust(self) -> float:
        return 4.0 * self.thrust_coeff * self.rotor_max**2


@dataclass
class RigidBodyState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    attitude: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    # actual rotor speeds; lag behind the commanded ones
    rotors: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity, self.attitude, self.omega, self.rotors])

    @classmethod
    def from_vector(cls, x) -> "RigidBodyState":
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:10].copy(), x[10:13].copy(), x[13:17].copy())

    @classmethod
    def hover(cls, params: VehicleParams, position=(0.0, 0.0, 0.0)) -> "RigidBodyState":
        return cls(position=np.array(position, dtype=float), rotors=np.full(4, params.hover_speed))

    def copy(self) -> "RigidBodyState":
        return RigidBodyState.from_vector(self.as_vector())


@dataclass
class SensorNoiseConfig:
    gyro_std: float = 0.05
    pos_std: float = 0.0
    vel_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("gyro_std", "pos_std", "vel_std"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be >= 0")


@dataclass
class Measurements:
    position: np.ndarray
    velocity: np.ndarray
    attitude: np.ndarray
    omega: np.ndarray


# --- mixer --------------------------------------------------------------------

# Rotor layout (PX4 quad-X): 1 front-right CCW, 2 rear-left CCW,
# 3 front-left CW, 4 rear-right CW.  Body x forward, y right.
ROTOR_X = np.array([1.0, -1.0, 1.0, -1.0])
ROTOR_Y = np.array([1.0, -1.0, -1.0, 1.0])
ROTOR_SPIN = np.array([1.0, 1.0, -1.0, -1.0])


def allocation_matrix(params: VehicleParams) -> np.ndarray:
    """Maps squared rotor speeds to ``(thrust, roll, pitch, yaw)`` moments."""
    kt, km = params.thrust_coeff, params.torque_coeff
    r = params.arm_length / math.sqrt(2.0)
    return np.vstack(
        [
            kt * np.ones(4),
            -kt * r * ROTOR_Y,
            kt * r * ROTOR_X,
            km * ROTOR_SPIN,
        ]
    )


class Mixer:
    """Inverts the allocation matrix once; :meth:`mix` clips to the rotor range."""

    def __init__(self, params: VehicleParams):
        self.params = params
        self.forward = allocation_matrix(params)
        if abs(np.linalg.det(self.forward)) < 1e-300:
            raise InvalidParameterError("singular allocation matrix")
        self.inverse = np.linalg.inv(self.forward)

    def mix(self, thrust_sp: float, moment_sp) -> tuple[np.ndarray, bool]:
        if thrust_sp < 0:
            raise InvalidParameterError(f"thrust setpoint must be >= 0, got {thrust_sp}")
        wrench = np.array([thrust_sp, moment_sp[0], moment_sp[1], moment_sp[2]])
        sq = self.inverse @ wrench
        wmax = self.params.rotor_max**2
        saturated = bool(np.any(sq < 0) or np.any(sq > wmax))
        sq = np.clip(sq, 0.0, wmax)
        return np.sqrt(sq), saturated

    def wrench(self, speeds) -> np.ndarray:
        speeds = np.asarray(speeds, dtype=float)
        return self.forward @ (speeds * speeds)


def mix(thrust_sp: float, moment_sp, params: VehicleParams) -> np.ndarray:
    return Mixer(params).mix(thrust_sp, moment_sp)[0]


# --- dynamics -----------------------------------------------------------------

class Dynamics:
    """Fixed-step RK4 integrator of the rigid body plus first-order rotor lag."""

    def __init__(self, params: VehicleParams):
        self.params = params
        self.forward = allocation_matrix(params)
        self.inertia = np.array(params.inertia)
        self.drag = np.array(params.drag_coeff)

    def derivative(self, x: np.ndarray, rotor_cmd: np.ndarray) -> np.ndarray:
        p = self.params
        v = x[3:6]
        q = x[6:10]
        w = x[10:13]
        rotors = x[13:17]
        wrench = self.forward @ (rotors * rotors)
        qw, qx, qy, qz = q
        # third column of R(q): body z axis in world frame
        zb = np.array([2 * (qx * qz + qw * qy), 2 * (qy * qz - qw * qx), 1 - 2 * (qx * qx + qy * qy)])
        acc = (-wrench[0] / p.mass) * zb - (self.drag / p.mass) * v
        acc[2] += GRAVITY
        wx, wy, wz = w
        qdot = 0.5 * np.array(
            [
                -qx * wx - qy * wy - qz * wz,
                qw * wx + qy * wz - qz * wy,
                qw * wy - qx * wz + qz * wx,
                qw * wz + qx * wy - qy * wx,
            ]
        )
        ix, iy, iz = self.inertia
        gyro = np.array([(iz - iy) * wy * wz, (ix - iz) * wz * wx, (iy - ix) * wx * wy])
        wdot = (wrench[1:] - gyro) / self.inertia
        rdot = (rotor_cmd - rotors) / p.rotor_time_constant
        return np.concatenate([v, acc, qdot, wdot, rdot])

    def step(self, state: RigidBodyState, rotor_cmd, dt: float) -> RigidBodyState:
        return RigidBodyState.from_vector(self.step_vector(state.as_vector(), rotor_cmd, dt))

    def step_vector(self, x: np.ndarray, rotor_cmd, dt: float) -> np.ndarray:
        if not 0 < dt <= 1.0 / 200.0 + 1e-12:
            raise InvalidParameterError(f"dt must lie in (0, 1/200], got {dt}")
        u = np.asarray(rotor_cmd, dtype=float)
        return self._rk4(x, u, dt)

    def _rk4(self, x, u, dt):
        f = self.derivative
        k1 = f(x, u)
        k2 = f(x + 0.5 * dt * k1, u)
        k3 = f(x + 0.5 * dt * k2, u)
        k4 = f(x + dt * k3, u)
        out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(out)):
            raise DivergenceError(f"non-finite vehicle state {out}")
        q = out[6:10]
        out[6:10] = q / math.sqrt(float(q @ q))
        return out


def step_dynamics(state: RigidBodyState, rotor_speeds, params: VehicleParams, dt: float) -> RigidBodyState:
    return Dynamics(params).step(state, rotor_speeds, dt)


def kinetic_energy_rot(omega, inertia) -> float:
    omega = np.asarray(omega, dtype=float)
    return 0.5 * float(omega @ (np.asarray(inertia) * omega))


# --- sensors ------------------------------------------------------------------

def sense(state: RigidBodyState, noise: SensorNoiseConfig, rng: np.random.Generator) -> Measurements:
    """Noisy position, velocity and gyro; attitude is returned exactly.

    Always draws nine normals so the stream stays aligned whatever the
    configured standard deviations are.
    """
    n = rng.standard_normal(9)
    return Measurements(
        position=state.position + noise.pos_std * n[0:3],
        velocity=state.velocity + noise.vel_std * n[3:6],
        attitude=state.attitude.copy(),
        omega=state.omega + noise.gyro_std * n[6:9],
    )


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
