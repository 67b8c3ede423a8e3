"""Waypoint missions: Hilbert-curve generation and setpoint interpolation."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError

MAX_HILBERT_ORDER = 6
CORNER_RAMP_S = 0.5


def hilbert_d2xy(order: int, d: int) -> tuple[int, int]:
    """Grid cell of index ``d`` on the order-``order`` Hilbert curve."""
    n = 1 << order
    x = y = 0
    t = d
    s = 1
    while s < n:
        rx = 1 & (t // 2)
        ry = 1 & (t ^ rx)
        if ry == 0:
            if rx == 1:
                x = s - 1 - x
                y = s - 1 - y
            x, y = y, x
        x += s * rx
        y += s * ry
        t //= 4
        s *= 2
    return x, y


def hilbert_waypoints(order: int, side_length: float, altitude: float) -> list[np.ndarray]:
    """Vertices of the Hilbert curve scaled to a square, in NED.

    The curve starts at the origin corner; ``altitude`` is height above
    ground, so every waypoint has ``z = -altitude``.
    """
    if order < 1:
        raise InvalidParameterError(f"order must be >= 1, got {order}")
    if order > MAX_HILBERT_ORDER:
        raise InvalidParameterError(f"order {order} exceeds the plan-size limit {MAX_HILBERT_ORDER}")
    if not side_length > 0:
        raise InvalidParameterError("side_length must be > 0")
    cells = (1 << order) - 1
    step = side_length / cells
    return [
        np.array([x * step, y * step, -altitude], dtype=float)
        for x, y in (hilbert_d2xy(order, d) for d in range(4**order))
    ]


@dataclass
class SetpointFrame:
    t: float
    position_sp: np.ndarray
    velocity_sp: np.ndarray
    azimuth_sp: float = 0.0
    azimuth_rate_sp: float = 0.0


@dataclass
class MissionPlan:
    """Stop-and-go traversal of ``waypoints`` at ``cruise_speed``.

    Each leg accelerates over ``ramp_s``, cruises, then decelerates over
    ``ramp_s`` to rest at the next waypoint.  ``hold_time_s`` is spent at
    the first waypoint before the first leg starts.
    """

    waypoints: list = field(default_factory=list)
    cruise_speed: float = 1.0
    hold_time_s: float = 5.0
    altitude: float = 2.0
    ramp_s: float = CORNER_RAMP_S
    azimuth: float = 0.0

    def __post_init__(self):
        self.waypoints = [np.asarray(w, dtype=float).reshape(3) for w in self.waypoints]
        if len(self.waypoints) < 2:
            raise InvalidParameterError("a mission needs at least two waypoints")
        if not self.cruise_speed > 0:
            raise InvalidParameterError("cruise_speed must be > 0")
        if self.hold_time_s < 0 or self.ramp_s < 0:
            raise InvalidParameterError("hold_time_s and ramp_s must be >= 0")
        self._legs = []
        t = self.hold_time_s
        for a, b in zip(self.waypoints[:-1], self.waypoints[1:]):
            length = float(np.linalg.norm(b - a))
            if length == 0.0:
                continue
            vmax, t_acc, t_cruise = self._profile(length)
            duration = 2.0 * t_acc + t_cruise
            self._legs.append((t, duration, a, (b - a) / length, length, vmax, t_acc, t_cruise))
            t += duration
        self._starts = [leg[0] for leg in self._legs]
        self.end_time = t

    @classmethod
    def hilbert(cls, order: int = 2, side_length: float = 6.0, altitude: float = 2.0, **kwargs):
        return cls(waypoints=hilbert_waypoints(order, side_length, altitude), altitude=altitude, **kwargs)

    def _profile(self, length: float) -> tuple[float, float, float]:
        v, ramp = self.cruise_speed, self.ramp_s
        if ramp == 0.0:
            return v, 0.0, length / v
        if length >= v * ramp:
            return v, ramp, (length - v * ramp) / v
        # too short to reach cruise: triangular profile with the same acceleration
        acc = v / ramp
        t_acc = math.sqrt(length / acc)
        return acc * t_acc, t_acc, 0.0

    @property
    def path_length(self) -> float:
        return sum(leg[4] for leg in self._legs)

    @property
    def start_time(self) -> float:
        return self.hold_time_s

    def setpoints_at(self, t: float) -> SetpointFrame:
        if t < 0:
            raise InvalidParameterError("t must be >= 0")
        zero = np.zeros(3)
        if not self._legs or t <= self._starts[0]:
            return SetpointFrame(t, self.waypoints[0].copy(), zero, self.azimuth, 0.0)
        if t >= self.end_time:
            return SetpointFrame(t, self.waypoints[-1].copy(), zero, self.azimuth, 0.0)
        i = bisect.bisect_right(self._starts, t) - 1
        t0, duration, a, direction, length, vmax, t_acc, t_cruise = self._legs[i]
        tau = t - t0
        acc = vmax / t_acc if t_acc > 0 else 0.0
        if tau < t_acc:
            s, speed = 0.5 * acc * tau * tau, acc * tau
        elif tau < t_acc + t_cruise:
            s, speed = 0.5 * vmax * t_acc + vmax * (tau - t_acc), vmax
        else:
            rem = max(duration - tau, 0.0)
            s, speed = length - 0.5 * acc * rem * rem, acc * rem
        return SetpointFrame(t, a + s * direction, speed * direction, self.azimuth, 0.0)


def setpoints_at(t: float, plan: MissionPlan) -> SetpointFrame:
    return plan.setpoints_at(t)


def write_waypoints_csv(path, waypoints) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "north", "east", "down"])
        for i, w in enumerate(waypoints):
            writer.writerow([i, *(repr(float(v)) for v in w)])
