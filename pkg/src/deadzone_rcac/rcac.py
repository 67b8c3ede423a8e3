"""Retrospective cost adaptive control (RCAC) for P/PI/PID gain adaptation.

Each instance adapts the gains of one decoupled multi-channel controller.
The control law is ``u(k) = Phi(k) @ theta`` with a block-diagonal
regressor holding, per channel, the error, its clamped integral and
(for PID) its backward difference.

The target model is the FIR filter ``G_f(q) = sum_i N_i q**-i``.  With
``Phi_f`` and ``u_f`` the filtered regressor and control histories, the
retrospective performance is

    zhat(theta) = z(k) + Phi_f(k) @ theta - u_f(k)

and ``theta(k+1)`` minimises the forgetting-weighted sum of ``|zhat|**2``
plus ``(theta - theta0)' (P0/lambda^k)^-1 (theta - theta0)``, computed by
one recursive-least-squares step per sample.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, NumericError

STRUCTURES = {"P": 1, "PI": 2, "PID": 3}


class CovarianceResetWarning(RuntimeWarning):
    """The RLS covariance lost positive-definiteness and was reset."""


@dataclass
class RcacConfig:
    n_channels: int = 3
    structure: str = "PI"
    p0: float = 1.0
    theta0: tuple[float, ...] | None = None
    filter_coeffs: tuple[float, ...] = (-1.0,)
    forgetting: float = 1.0
    integrator_clamp: float = 1.0
    adaptation_enabled: bool = True

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise InvalidParameterError(f"structure must be one of {sorted(STRUCTURES)}")
        if self.n_channels < 1:
            raise InvalidParameterError("n_channels must be >= 1")
        if not self.p0 > 0:
            raise InvalidParameterError(f"p0 must be > 0, got {self.p0}")
        if not 0 < self.forgetting <= 1:
            raise InvalidParameterError(f"forgetting must lie in (0, 1], got {self.forgetting}")
        self.filter_coeffs = tuple(float(c) for c in self.filter_coeffs)
        if not self.filter_coeffs or not any(self.filter_coeffs):
            raise InvalidParameterError("filter_coeffs must contain a nonzero entry")
        if not self.integrator_clamp > 0:
            raise InvalidParameterError("integrator_clamp must be > 0")
        if self.theta0 is not None:
            self.theta0 = tuple(float(v) for v in self.theta0)
            if len(self.theta0) != self.n_gains:
                raise InvalidParameterError(
                    f"theta0 has {len(self.theta0)} entries, expected {self.n_gains}"
                )

    @property
    def gains_per_channel(self) -> int:
        return STRUCTURES[self.structure]

    @property
    def n_gains(self) -> int:
        return self.n_channels * self.gains_per_channel

    @property
    def filter_length(self) -> int:
        return len(self.filter_coeffs)

    def initial_theta(self) -> np.ndarray:
        if self.theta0 is None:
            return np.zeros(self.n_gains)
        return np.array(self.theta0, dtype=float)


@dataclass
class RcacState:
    """Adaptive gains, covariance and the histories the update needs.

    ``phi_history[i]`` is ``Phi(k-1-i)``; ``theta_history[i]`` is the gain
    vector that produced ``u_history[i]``.
    """

    config: RcacConfig
    theta: np.ndarray = field(init=False)
    covariance: np.ndarray = field(init=False)
    integ_state: np.ndarray = field(init=False)
    prev_error: np.ndarray = field(init=False)
    phi_history: deque = field(init=False)
    u_history: deque = field(init=False)
    theta_history: deque = field(init=False)
    steps: int = field(init=False, default=0)
    covariance_resets: int = field(init=False, default=0)

    def __post_init__(self):
        self.reset()

    @classmethod
    def from_config(cls, config: RcacConfig | None = None, **kwargs) -> "RcacState":
        return cls(config if config is not None else RcacConfig(**kwargs))

    @property
    def filter_coeffs(self) -> tuple[float, ...]:
        return self.config.filter_coeffs

    @property
    def forgetting(self) -> float:
        return self.config.forgetting

    @property
    def warmup_steps(self) -> int:
        return max(self.config.filter_length, 2)

    def reset(self) -> "RcacState":
        cfg = self.config
        n = cfg.filter_length
        self.theta = cfg.initial_theta()
        self.covariance = cfg.p0 * np.eye(cfg.n_gains)
        self.integ_state = np.zeros(cfg.n_channels)
        self.prev_error = np.zeros(cfg.n_channels)
        self.phi_history = deque(maxlen=n)
        self.u_history = deque(maxlen=n)
        self.theta_history = deque(maxlen=n)
        self.steps = 0
        self.covariance_resets = 0
        return self

    def build_regressor(self, z, dt: float) -> np.ndarray:
        """Advance the integrators with ``z*dt`` and return ``Phi(k)``."""
        if not dt > 0:
            raise InvalidParameterError(f"dt must be > 0, got {dt}")
        cfg = self.config
        z = np.asarray(z, dtype=float).reshape(cfg.n_channels)
        if not np.all(np.isfinite(z)):
            raise NumericError(f"non-finite performance input {z}")
        clamp = cfg.integrator_clamp
        self.integ_state = np.clip(self.integ_state + z * dt, -clamp, clamp)
        m = cfg.gains_per_channel
        phi = np.zeros((cfg.n_channels, cfg.n_gains))
        for ch in range(cfg.n_channels):
            phi[ch, ch * m] = z[ch]
            if m > 1:
                phi[ch, ch * m + 1] = self.integ_state[ch]
            if m > 2:
                phi[ch, ch * m + 2] = (z[ch] - self.prev_error[ch]) / dt
        self.prev_error = z
        return phi

    def filtered_regressor(self) -> np.ndarray:
        """``Phi_f(k)`` from the buffered regressors."""
        out = np.zeros((self.config.n_channels, self.config.n_gains))
        for coeff, phi in zip(self.filter_coeffs, self.phi_history):
            out += coeff * phi
        return out

    def filtered_control(self) -> np.ndarray:
        out = np.zeros(self.config.n_channels)
        for coeff, u in zip(self.filter_coeffs, self.u_history):
            out += coeff * u
        return out

    def retrospective_performance(self, z, theta_hat) -> np.ndarray:
        """``zhat = z + Phi_f @ theta_hat - u_f``.

        Evaluated as ``z + sum_i N_i Phi(k-i) (theta_hat - theta_i)``, which
        is the same quantity since ``u(k-i) = Phi(k-i) theta_i``; it is
        exactly ``z`` when the gains have not moved over the window.
        """
        zhat = np.array(z, dtype=float)
        for coeff, phi, th in zip(self.filter_coeffs, self.phi_history, self.theta_history):
            zhat = zhat + coeff * (phi @ (theta_hat - th))
        return zhat

    def _rls_step(self, z):
        lam = self.config.forgetting
        phi_f = self.filtered_regressor()
        p = self.covariance
        pf = p @ phi_f.T
        gamma = lam * np.eye(self.config.n_channels) + phi_f @ pf
        gain = np.linalg.solve(gamma, pf.T).T
        innovation = self.retrospective_performance(z, self.theta)
        self.theta = self.theta - gain @ innovation
        p = (p - gain @ pf.T) / lam
        p = 0.5 * (p + p.T)
        try:
            np.linalg.cholesky(p)
        except np.linalg.LinAlgError:
            p = self.config.p0 * np.eye(self.config.n_gains)
            self.covariance_resets += 1
            warnings.warn(
                f"RLS covariance lost positive-definiteness at step {self.steps}; reset to p0*I",
                CovarianceResetWarning,
                stacklevel=3,
            )
        self.covariance = p

    def update(self, z, dt: float) -> np.ndarray:
        """One control step: adapt the gains, return ``u(k) = Phi(k) theta(k+1)``."""
        z = np.asarray(z, dtype=float).reshape(self.config.n_channels)
        phi = self.build_regressor(z, dt)
        if self.config.adaptation_enabled and self.steps >= self.warmup_steps:
            self._rls_step(z)
            if not np.all(np.isfinite(self.theta)):
                raise NumericError(f"non-finite adaptive gains at step {self.steps}")
        u = phi @ self.theta
        self.phi_history.appendleft(phi)
        self.u_history.appendleft(u)
        self.theta_history.appendleft(self.theta.copy())
        self.steps += 1
        return u


def rcac_update(state: RcacState, z, dt: float) -> tuple[RcacState, np.ndarray]:
    u = state.update(z, dt)
    return state, u


def batch_solution(
    z_seq, phi_f_seq, u_f_seq, theta0, p0: float, forgetting: float = 1.0
) -> np.ndarray:
    """Direct regularised least-squares minimiser of the retrospective cost.

    Used as an oracle for the recursive update; the three sequences hold
    ``z(i)``, ``Phi_f(i)`` and ``u_f(i)`` for ``i = 1..k``.
    """
    theta0 = np.asarray(theta0, dtype=float)
    k = len(z_seq)
    n = theta0.size
    lam_k = forgetting**k
    hess = lam_k / p0 * np.eye(n)
    rhs = lam_k / p0 * theta0
    for i, (z, phi_f, u_f) in enumerate(zip(z_seq, phi_f_seq, u_f_seq), start=1):
        w = forgetting ** (k - i)
        phi_f = np.atleast_2d(phi_f)
        hess = hess + w * phi_f.T @ phi_f
        rhs = rhs + w * phi_f.T @ (np.atleast_1d(u_f) - np.atleast_1d(z))
    return np.linalg.solve(hess, rhs)


def is_positive_definite(p: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(p)
    except np.linalg.LinAlgError:
        return False
    return True


def symmetry_error(p: np.ndarray) -> float:
    return float(np.max(np.abs(p - p.T))) if p.size else 0.0


__all__ = [
    "RcacConfig",
    "RcacState",
    "CovarianceResetWarning",
    "rcac_update",
    "batch_solution",
    "is_positive_definite",
    "symmetry_error",
]
