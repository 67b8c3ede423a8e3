"""Cascaded multicopter autopilot with optional RCAC augmentation.

Outer loop: position P (G_r) then velocity PID (G_v), producing a thrust
vector in NED.  Inner loop: quaternion-error attitude law (G_q) then
body-rate PI (G_w), producing a body moment.  Each linear block can be
augmented by an :class:`~deadzone_rcac.rcac.RcacState` whose output is
added after it.  The rate-loop adaptation sees the rate error through a
deadzone nonlinearity; the fixed PI always sees the raw error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import deadzone as dz
from .errors import InvalidParameterError, NumericError
from .mission import SetpointFrame
from .rcac import RcacConfig, RcacState
from .vehicle import GRAVITY, cross3, quat_conj, quat_mul, quat_normalize, rotmat_to_quat

LOOPS = ("r", "v", "q", "w")
LOOP_STRUCTURE = {"r": "P", "v": "PID", "q": "P", "w": "PI"}


def _vec3(v, name):
    v = tuple(float(x) for x in v)
    if len(v) != 3:
        raise InvalidParameterError(f"{name} must have three entries")
    return v


@dataclass
class Limits:
    max_tilt: float = math.radians(35.0)
    max_thrust: float = 35.0
    min_thrust: float = 2.0
    max_moment: float = 1.0
    # drag torque authority is an order of magnitude below roll/pitch
    max_yaw_moment: float = 0.15
    max_velocity: float = 3.0
    max_rate: float = 3.5
    velocity_integral: float = 5.0
    rate_integral: float = 0.3

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise InvalidParameterError(f"limits.{name} must be > 0, got {value}")
        if self.min_thrust >= self.max_thrust:
            raise InvalidParameterError("limits.min_thrust must be below limits.max_thrust")


def _default_rcac():
    return {loop: RcacConfig(n_channels=3, structure=LOOP_STRUCTURE[loop]) for loop in LOOPS}


@dataclass
class AutopilotConfig:
    mass: float = 2.0
    gr_gains: tuple = (0.95, 0.95, 1.0)
    gv_gains: tuple = ((4.0, 2.0, 0.2), (4.0, 2.0, 0.2), (8.0, 4.0, 0.4))
    gq_time_constant: float = 0.25
    gw_gains: tuple = ((0.15, 0.2), (0.15, 0.2), (0.2, 0.1))
    outer_rate_hz: float = 50.0
    inner_rate_hz: float = 250.0
    gyro_cutoff_hz: float = 0.0
    adaptive_flags: dict = field(default_factory=lambda: {loop: False for loop in LOOPS})
    rcac_configs: dict = field(default_factory=_default_rcac)
    deadzone: dz.DeadzoneConfig = field(default_factory=dz.DeadzoneConfig)
    limits: Limits = field(default_factory=Limits)

    def __post_init__(self):
        self.gr_gains = _vec3(self.gr_gains, "gr_gains")
        self.gv_gains = tuple(tuple(float(g) for g in row) for row in self.gv_gains)
        self.gw_gains = tuple(tuple(float(g) for g in row) for row in self.gw_gains)
        if len(self.gv_gains) != 3 or any(len(r) != 3 for r in self.gv_gains):
            raise InvalidParameterError("gv_gains must be 3 rows of (P, I, D)")
        if len(self.gw_gains) != 3 or any(len(r) != 2 for r in self.gw_gains):
            raise InvalidParameterError("gw_gains must be 3 rows of (P, I)")
        if not self.gq_time_constant > 0:
            raise InvalidParameterError("gq_time_constant must be > 0")
        if not self.outer_rate_hz > 0 or not self.inner_rate_hz > 0:
            raise InvalidParameterError("loop rates must be positive")
        ratio = self.inner_rate_hz / self.outer_rate_hz
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise InvalidParameterError("inner rate must be an integer multiple of the outer rate")
        if self.gyro_cutoff_hz < 0:
            raise InvalidParameterError("gyro_cutoff_hz must be >= 0")
        flags = {loop: False for loop in LOOPS}
        flags.update({k: bool(v) for k, v in self.adaptive_flags.items()})
        unknown = set(flags) - set(LOOPS)
        if unknown:
            raise InvalidParameterError(f"unknown adaptive loops {sorted(unknown)}")
        self.adaptive_flags = flags
        configs = _default_rcac()
        configs.update(self.rcac_configs)
        for loop, cfg in configs.items():
            if cfg.structure != LOOP_STRUCTURE[loop] or cfg.n_channels != 3:
                raise InvalidParameterError(
                    f"rcac_configs.{loop} must be 3-channel {LOOP_STRUCTURE[loop]}"
                )
        self.rcac_configs = configs

    @property
    def decimation(self) -> int:
        return int(round(self.inner_rate_hz / self.outer_rate_hz))

    @property
    def inner_dt(self) -> float:
        return 1.0 / self.inner_rate_hz

    @property
    def outer_dt(self) -> float:
        return 1.0 / self.outer_rate_hz

    @property
    def hover_thrust(self) -> float:
        return self.mass * GRAVITY


@dataclass
class ControlOutputs:
    thrust_vector_sp: np.ndarray
    moment_sp: np.ndarray
    rate_sp: np.ndarray
    z_omega: np.ndarray
    z_omega_dz: np.ndarray
    q_sp: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    saturation: int = 0


# saturation flag bits
SAT_VELOCITY = 1
SAT_TILT = 2
SAT_THRUST = 4
SAT_MOMENT = 8
SAT_MIXER = 16
SAT_THRUST_DIRECTION = 32


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite controller input {a}")


def saturate_thrust(f: np.ndarray, limits: Limits) -> tuple[np.ndarray, int]:
    """Clamp the upward component, then the tilt, then the magnitude."""
    flags = 0
    f = np.array(f, dtype=float)
    up = -f[2]
    if up < limits.min_thrust:
        up, flags = limits.min_thrust, flags | SAT_THRUST
    if up > limits.max_thrust:
        up, flags = limits.max_thrust, flags | SAT_THRUST
    f[2] = -up
    horiz = math.hypot(f[0], f[1])
    max_horiz = up * math.tan(limits.max_tilt)
    if horiz > max_horiz:
        f[:2] *= max_horiz / horiz
        flags |= SAT_TILT
    norm = float(np.linalg.norm(f))
    if norm > limits.max_thrust:
        f *= limits.max_thrust / norm
        flags |= SAT_THRUST
    return f, flags


def position_control(sp: SetpointFrame, meas_pos, meas_vel, cfg: AutopilotConfig, rcac_r=None,
                     rcac_v=None, state=None, dt=None):
    """Stateless convenience wrapper; see :meth:`Autopilot.position_control`."""
    ap = state if state is not None else Autopilot(cfg)
    if rcac_r is not None:
        ap.rcac["r"] = rcac_r
    if rcac_v is not None:
        ap.rcac["v"] = rcac_v
    return ap.position_control(sp, meas_pos, meas_vel, dt if dt is not None else cfg.outer_dt)


def attitude_from_thrust(thrust_vector_sp, azimuth_sp: float, eps: float = 1e-6):
    """Attitude whose body z axis opposes ``thrust_vector_sp`` with yaw ``azimuth_sp``.

    Returns ``None`` when the vector is too small to define a direction.
    """
    f = np.asarray(thrust_vector_sp, dtype=float)
    norm = float(np.linalg.norm(f))
    if norm <= eps:
        return None
    zb = -f / norm
    yc = np.array([-math.sin(azimuth_sp), math.cos(azimuth_sp), 0.0])
    xb = cross3(yc, zb)
    nx = float(np.linalg.norm(xb))
    if nx < 1e-9:
        # thrust horizontal and aligned with yc; pick any orthogonal x axis
        xb = cross3(np.array([0.0, 0.0, 1.0]), zb) if abs(zb[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        nx = float(np.linalg.norm(xb))
    xb /= nx
    yb = cross3(zb, xb)
    return rotmat_to_quat(np.column_stack([xb, yb, zb]))


def attitude_error(q_sp, q_meas) -> np.ndarray:
    """Twice the vector part of ``q_meas^-1 * q_sp``, sign-fixed to the short way round."""
    qe = quat_mul(quat_conj(q_meas), q_sp)
    sign = -1.0 if qe[0] < 0 else 1.0
    return 2.0 * sign * qe[1:]


class Autopilot:
    """Holds controller memory (integrators, filters, RCAC states)."""

    def __init__(self, cfg: AutopilotConfig):
        self.cfg = cfg
        self.rcac = {
            loop: RcacState(cfg.rcac_configs[loop]) for loop in LOOPS if cfg.adaptive_flags[loop]
        }
        self.reset()

    def reset(self):
        self.vel_integral = np.zeros(3)
        self.prev_vel = None
        self.rate_integral = np.zeros(3)
        self.gyro_filtered = None
        self.q_sp_prev = np.array([1.0, 0.0, 0.0, 0.0])
        for r in self.rcac.values():
            r.reset()

    def theta(self, loop: str) -> np.ndarray:
        if loop in self.rcac:
            return self.rcac[loop].theta.copy()
        return self.cfg.rcac_configs[loop].initial_theta() * 0.0

    # -- outer loop --------------------------------------------------------

    def position_control(self, sp: SetpointFrame, meas_pos, meas_vel, dt: float):
        """Returns ``(thrust_vector_sp, velocity_sp, saturation_flags)``."""
        cfg = self.cfg
        meas_pos = np.asarray(meas_pos, dtype=float)
        meas_vel = np.asarray(meas_vel, dtype=float)
        _check_finite(sp.position_sp, sp.velocity_sp, meas_pos, meas_vel)
        flags = 0
        e_r = sp.position_sp - meas_pos
        vel_sp = np.array(cfg.gr_gains) * e_r + sp.velocity_sp
        if "r" in self.rcac:
            vel_sp = vel_sp + self.rcac["r"].update(e_r, dt)
        speed = float(np.linalg.norm(vel_sp))
        if speed > cfg.limits.max_velocity:
            vel_sp *= cfg.limits.max_velocity / speed
            flags |= SAT_VELOCITY

        e_v = vel_sp - meas_vel
        gains = np.array(cfg.gv_gains)
        lim = cfg.limits.velocity_integral
        self.vel_integral = np.clip(self.vel_integral + e_v * dt, -lim, lim)
        vel_rate = np.zeros(3) if self.prev_vel is None else (meas_vel - self.prev_vel) / dt
        self.prev_vel = meas_vel.copy()
        f = gains[:, 0] * e_v + gains[:, 1] * self.vel_integral - gains[:, 2] * vel_rate
        if "v" in self.rcac:
            f = f + self.rcac["v"].update(e_v, dt)
        f[2] -= cfg.hover_thrust
        f, sat = saturate_thrust(f, cfg.limits)
        return f, vel_sp, flags | sat

    # -- inner loop --------------------------------------------------------

    def attitude_setpoint(self, thrust_vector_sp, azimuth_sp):
        q = attitude_from_thrust(thrust_vector_sp, azimuth_sp)
        if q is None:
            return self.q_sp_prev.copy(), SAT_THRUST_DIRECTION
        self.q_sp_prev = q
        return q, 0

    def attitude_control(self, q_sp, q_meas, dt: float, yaw_rate_ff: float = 0.0) -> np.ndarray:
        q_sp = np.asarray(q_sp, dtype=float)
        q_meas = np.asarray(q_meas, dtype=float)
        _check_finite(q_sp, q_meas)
        for q in (q_sp, q_meas):
            if abs(math.sqrt(float(q @ q)) - 1.0) > 1e-6:
                q[:] = quat_normalize(q)
        e_q = attitude_error(q_sp, q_meas)
        rate_sp = e_q / self.cfg.gq_time_constant
        rate_sp[2] += yaw_rate_ff
        if "q" in self.rcac:
            rate_sp = rate_sp + self.rcac["q"].update(e_q, dt)
        return np.clip(rate_sp, -self.cfg.limits.max_rate, self.cfg.limits.max_rate)

    def filter_gyro(self, gyro, dt: float) -> np.ndarray:
        gyro = np.asarray(gyro, dtype=float)
        fc = self.cfg.gyro_cutoff_hz
        if fc <= 0:
            return gyro
        if self.gyro_filtered is None:
            self.gyro_filtered = gyro.copy()
            return self.gyro_filtered.copy()
        a = 1.0 - math.exp(-2.0 * math.pi * fc * dt)
        self.gyro_filtered = self.gyro_filtered + a * (gyro - self.gyro_filtered)
        return self.gyro_filtered.copy()

    def rate_control(self, rate_sp, rate_meas, dt: float, deadzone: dz.DeadzoneConfig | None = None):
        """Returns ``(moment_sp, z_omega, z_omega_dz, theta_omega, saturated)``."""
        if not dt > 0:
            raise InvalidParameterError("dt must be > 0")
        cfg = self.cfg
        rate_sp = np.asarray(rate_sp, dtype=float)
        rate_meas = np.asarray(rate_meas, dtype=float)
        _check_finite(rate_sp, rate_meas)
        dzc = cfg.deadzone if deadzone is None else deadzone
        z = rate_sp - rate_meas
        z_dz = dz.apply(dzc, z)
        gains = np.array(cfg.gw_gains)
        lim = cfg.limits.rate_integral
        self.rate_integral = np.clip(self.rate_integral + z * dt, -lim, lim)
        moment = gains[:, 0] * z + gains[:, 1] * self.rate_integral
        if "w" in self.rcac:
            moment = moment + self.rcac["w"].update(z_dz, dt)
        m = np.array([cfg.limits.max_moment, cfg.limits.max_moment, cfg.limits.max_yaw_moment])
        saturated = bool(np.any(np.abs(moment) > m))
        moment = np.clip(moment, -m, m)
        return moment, z, z_dz, self.theta("w"), saturated

    def inner_step(self, thrust_vector_sp, azimuth_sp, azimuth_rate_sp, q_meas, gyro, dt):
        """Attitude and rate loops for one inner period."""
        q_sp, flags = self.attitude_setpoint(thrust_vector_sp, azimuth_sp)
        rate_sp = self.attitude_control(q_sp, q_meas, dt, azimuth_rate_sp)
        rate_meas = self.filter_gyro(gyro, dt)
        moment, z, z_dz, _, sat = self.rate_control(rate_sp, rate_meas, dt)
        if sat:
            flags |= SAT_MOMENT
        return ControlOutputs(
            thrust_vector_sp=np.asarray(thrust_vector_sp, dtype=float),
            moment_sp=moment,
            rate_sp=rate_sp,
            z_omega=z,
            z_omega_dz=z_dz,
            q_sp=q_sp,
            saturation=flags,
        ), rate_meas


def collective_thrust(thrust_vector_sp, q_meas) -> float:
    """Projection of the thrust vector on the current thrust axis (body -z)."""
    w, x, y, z = q_meas
    zb = np.array([2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y)])
    return max(float(-np.asarray(thrust_vector_sp) @ zb), 0.0)


def attitude_control(q_sp, q_meas, cfg: AutopilotConfig, rcac_q=None, state=None, dt=None):
    ap = state if state is not None else Autopilot(cfg)
    if rcac_q is not None:
        ap.rcac["q"] = rcac_q
    return ap.attitude_control(q_sp, q_meas, dt if dt is not None else cfg.inner_dt)


def rate_control(rate_sp, rate_meas, cfg: AutopilotConfig, rcac_w=None, deadzone=None, dt=None, state=None):
    """Functional form of :meth:`Autopilot.rate_control`; pass ``state`` to keep integrators."""
    ap = state if state is not None else Autopilot(cfg)
    if rcac_w is not None:
        ap.rcac["w"] = rcac_w
    return ap.rate_control(rate_sp, rate_meas, dt if dt is not None else cfg.inner_dt, deadzone)
