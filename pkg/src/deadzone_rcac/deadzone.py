"""Static deadzone nonlinearities for the adaptation performance variable.

Three shapes are provided, all odd and zero on ``[-s1, s1]``:

* ``n1`` -- hard deadzone, pass-through outside the band (discontinuous).
* ``n2`` -- cubic shoulder ``alpha*(|x|-s1)**3`` joined C1 to a unit-slope
  line at ``s2 = s1 + sqrt(1/(3*alpha))``; the line is offset from ``y=x``.
* ``n3`` -- Hermite cubic shoulder on ``[s1, s2]`` joined C1 to ``y=x``.

Every evaluator works on the magnitude and restores the sign with
``copysign``, so oddness holds bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidParameterError, NumericError

VARIANTS = ("none", "n1", "n2", "n3")

DEFAULT_S = 0.02
DEFAULT_ALPHA = 1.0
DEFAULT_S2 = 0.1


def eval_n1(x: float, s: float) -> float:
    if s < 0:
        raise InvalidParameterError(f"deadzone half-width must be >= 0, got {s}")
    return 0.0 if abs(x) <= s else x


def n2_upper_limit(s1: float, alpha: float) -> float:
    """Start of the linear section of ``n2``."""
    return s1 + math.sqrt(1.0 / (3.0 * alpha))


def _n2_magnitude(a: float, s1: float, s2: float, alpha: float) -> float:
    if a <= s1:
        return 0.0
    if a <= s2:
        d = a - s1
        return alpha * (d * d * d)
    h = s2 - s1
    return alpha * h**3 + 3.0 * alpha * h**2 * (a - s2)


def eval_n2(x: float, s1: float, alpha: float) -> float:
    if not s1 > 0 or not alpha > 0:
        raise InvalidParameterError(f"n2 needs s1 > 0 and alpha > 0, got s1={s1}, alpha={alpha}")
    s2 = n2_upper_limit(s1, alpha)
    return math.copysign(_n2_magnitude(abs(x), s1, s2, alpha), x) if abs(x) > s1 else 0.0


def _horner(c: Sequence[float], x: float) -> float:
    return c[0] + x * (c[1] + x * (c[2] + x * c[3]))


def hermite_system(s1: float, s2: float) -> tuple[np.ndarray, np.ndarray]:
    """Boundary-condition matrix and right-hand side for the lower cubic.

    Rows: value and slope at ``-s1``, value and slope at ``-s2``; columns
    multiply ``(1, x, x**2, x**3)``.
    """
    a = np.array(
        [
            [1.0, -s1, s1**2, -(s1**3)],
            [0.0, 1.0, -2.0 * s1, 3.0 * s1**2],
            [1.0, -s2, s2**2, -(s2**3)],
            [0.0, 1.0, -2.0 * s2, 3.0 * s2**2],
        ]
    )
    b = np.array([0.0, 0.0, -s2, 1.0])
    return a, b


def solve_cubic_coeffs(s1: float, s2: float) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Coefficients ``(c0, c1, c2, c3)`` of the lower and upper ``n3`` cubics.

    The upper set is the exact odd mirror of the lower one,
    ``(-c0, c1, -c2, c3)``, which is also the solution of the mirrored
    boundary conditions at ``+s1`` and ``+s2``.
    """
    if not s1 > 0 or not s2 > s1:
        raise InvalidParameterError(f"n3 needs s2 > s1 > 0, got s1={s1}, s2={s2}")
    a, b = hermite_system(s1, s2)
    try:
        c = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular boundary system for s1={s1}, s2={s2}") from exc
    if not np.all(np.isfinite(c)):
        raise NumericError(f"non-finite cubic coefficients for s1={s1}, s2={s2}")
    lower = tuple(float(v) for v in c)
    upper = (-lower[0], lower[1], -lower[2], lower[3])
    return lower, upper


@dataclass(frozen=True)
class DeadzoneConfig:
    """Which nonlinearity to apply and its shape parameters.

    Build through :meth:`make`; ``s2`` and the cubic coefficients are
    derived there.
    """

    variant: str = "none"
    s: float = DEFAULT_S
    s1: float = DEFAULT_S
    alpha: float = DEFAULT_ALPHA
    s2: float = DEFAULT_S2
    c_lower: tuple[float, ...] = field(default=(), repr=False)
    c_upper: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidParameterError(f"unknown deadzone variant {self.variant!r}")
        if self.variant == "n1" and self.s < 0:
            raise InvalidParameterError(f"n1 half-width must be >= 0, got {self.s}")
        if self.variant == "n2":
            if not self.s1 > 0 or not self.alpha > 0:
                raise InvalidParameterError("n2 needs s1 > 0 and alpha > 0")
            object.__setattr__(self, "s2", n2_upper_limit(self.s1, self.alpha))
        if self.variant == "n3":
            lower, upper = solve_cubic_coeffs(self.s1, self.s2)
            object.__setattr__(self, "c_lower", lower)
            object.__setattr__(self, "c_upper", upper)

    @classmethod
    def make(cls, variant: str = "none", **params) -> "DeadzoneConfig":
        variant = variant.lower()
        if variant == "n1" and "s1" in params and "s" not in params:
            params["s"] = params.pop("s1")
        return cls(variant=variant, **params)

    @property
    def half_width(self) -> float:
        if self.variant == "n1":
            return self.s
        if self.variant in ("n2", "n3"):
            return self.s1
        return 0.0

    def to_dict(self) -> dict:
        if self.variant == "none":
            return {"variant": "none"}
        if self.variant == "n1":
            return {"variant": "n1", "s": self.s}
        if self.variant == "n2":
            return {"variant": "n2", "s1": self.s1, "alpha": self.alpha}
        return {"variant": "n3", "s1": self.s1, "s2": self.s2}


def eval_n3(x: float, cfg: DeadzoneConfig) -> float:
    if cfg.variant != "n3" or len(cfg.c_upper) != 4:
        raise InvalidParameterError("eval_n3 needs an n3 DeadzoneConfig")
    a = abs(x)
    if a <= cfg.s1:
        return 0.0
    if a >= cfg.s2:
        return x
    return math.copysign(_horner(cfg.c_upper, a), x)


def evaluate(cfg: DeadzoneConfig, x: float) -> float:
    """Scalar evaluation of the configured nonlinearity."""
    v = cfg.variant
    if v == "none":
        return x
    if v == "n1":
        return 0.0 if abs(x) <= cfg.s else x
    if v == "n2":
        a = abs(x)
        if a <= cfg.s1:
            return 0.0
        return math.copysign(_n2_magnitude(a, cfg.s1, cfg.s2, cfg.alpha), x)
    return eval_n3(x, cfg)


def apply(cfg: DeadzoneConfig, z) -> np.ndarray:
    """Element-wise application to an array of any shape.

    Vectorised twin of :func:`evaluate`; both compute the magnitude from
    ``|x|`` with the same operations, so they agree bit-for-bit.
    """
    z = np.asarray(z, dtype=float)
    bad = np.flatnonzero(~np.isfinite(z))
    if bad.size:
        raise NumericError(f"non-finite performance value at index {int(bad[0])}")
    v = cfg.variant
    if v == "none":
        return z.copy()
    a = np.abs(z)
    if v == "n1":
        return np.where(a <= cfg.s, 0.0, z)
    if v == "n2":
        h = cfg.s2 - cfg.s1
        mag = np.where(
            a <= cfg.s2,
            cfg.alpha * ((a - cfg.s1) * (a - cfg.s1) * (a - cfg.s1)),
            cfg.alpha * h**3 + 3.0 * cfg.alpha * h**2 * (a - cfg.s2),
        )
    else:
        c = cfg.c_upper
        mag = np.where(a >= cfg.s2, a, c[0] + a * (c[1] + a * (c[2] + a * c[3])))
    return np.where(a <= cfg.half_width, 0.0, np.copysign(mag, z))
