"""Flight logs and the offline metrics computed from them."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError

SCHEMA_VERSION = 1

# (name, width) in file order
LOG_FIELDS = (
    ("t", 1),
    ("pos_sp", 3),
    ("pos", 3),
    ("vel_sp", 3),
    ("vel", 3),
    ("q", 4),
    ("q_sp", 4),
    ("rate_sp", 3),
    ("rate_meas", 3),
    ("z_w", 3),
    ("z_w_dz", 3),
    ("moment_sp", 3),
    ("thrust_sp", 1),
    ("theta_w", 6),
    ("theta_v", 9),
    ("theta_r", 3),
    ("theta_q", 3),
    ("sat_flags", 1),
)


def _slices():
    out, start = {}, 0
    for name, width in LOG_FIELDS:
        out[name] = slice(start, start + width)
        start += width
    return out, start


FIELD_SLICES, N_COLUMNS = _slices()
PITCH = 1
OSCILLATION_CUTOFF_HZ = 10.0
OSCILLATION_THRESHOLD = 0.2
ACTIVE_WINDOW_TRIM_S = 5.0


def column_names() -> list[str]:
    names = []
    for name, width in LOG_FIELDS:
        names.extend([name] if width == 1 else [f"{name}_{i}" for i in range(width)])
    return names


class FlightLog:
    """Uniform-rate record of one flight; one row per inner-loop step."""

    def __init__(self, data: np.ndarray, dt: float):
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != N_COLUMNS:
            raise InvalidParameterError(f"log data must have {N_COLUMNS} columns")
        if not dt > 0:
            raise InvalidParameterError("dt must be > 0")
        self.data = data
        self.dt = float(dt)

    @classmethod
    def allocate(cls, n_steps: int, dt: float) -> "FlightLog":
        return cls(np.zeros((n_steps, N_COLUMNS)), dt)

    @classmethod
    def from_columns(cls, dt: float, **columns) -> "FlightLog":
        """Build a log from named arrays; missing fields are zero."""
        n = len(next(iter(columns.values())))
        log = cls.allocate(n, dt)
        log.data[:, FIELD_SLICES["t"]] = (np.arange(n) * dt)[:, None]
        for name, values in columns.items():
            values = np.asarray(values, dtype=float)
            log.data[:, FIELD_SLICES[name]] = values.reshape(n, -1)
        return log

    def record(self, k: int, **fields) -> None:
        row = self.data[k]
        for name, value in fields.items():
            row[FIELD_SLICES[name]] = value

    def truncated(self, n: int) -> "FlightLog":
        return FlightLog(self.data[:n].copy(), self.dt)

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        sl = FIELD_SLICES[name]
        col = self.data[:, sl]
        return col[:, 0] if sl.stop - sl.start == 1 else col

    @property
    def t(self) -> np.ndarray:
        return self["t"]

    def window(self, t_start: float, t_stop: float) -> np.ndarray:
        t = self.t
        return (t >= t_start - 1e-12) & (t <= t_stop + 1e-12)

    def active_mask(self, trim: float = ACTIVE_WINDOW_TRIM_S) -> np.ndarray:
        """Rows excluding the first and last ``trim`` seconds.

        Falls back to every row when the log is too short to trim.
        """
        t = self.t
        mask = (t >= t[0] + trim - 1e-12) & (t <= t[-1] - trim + 1e-12)
        return mask if mask.any() else np.ones_like(t, dtype=bool)

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            fh.write(f"# schema_version={SCHEMA_VERSION} dt={self.dt!r}\n")
            fh.write(",".join(column_names()) + "\n")
            for row in self.data:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def read_csv(cls, path) -> "FlightLog":
        path = Path(path)
        dt = None
        with path.open() as fh:
            first = fh.readline()
            if first.startswith("#"):
                meta = dict(item.split("=", 1) for item in first[1:].split())
                if int(meta.get("schema_version", SCHEMA_VERSION)) != SCHEMA_VERSION:
                    raise InvalidParameterError(f"unsupported log schema {meta['schema_version']}")
                dt = float(meta["dt"])
                header = next(csv.reader([fh.readline()]))
            else:
                header = next(csv.reader([first]))
            rows = [[float(v) for v in r] for r in csv.reader(fh) if r]
        names = column_names()
        missing = [n for n in names if n not in header]
        if missing:
            raise InvalidParameterError(f"log is missing columns {missing[:3]}")
        raw = np.array(rows, dtype=float).reshape(-1, len(header))
        data = raw[:, [header.index(n) for n in names]]
        if dt is None:
            dt = float(data[1, 0] - data[0, 0])
        return cls(data, dt)


@dataclass
class MetricsReport:
    J_r: float
    J_omega: float
    band_power_ratio: float
    theta_final_norm: float
    theta_max_norm: float
    oscillation_flag: bool
    theta_norm_at_10s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


def _require_rows(log: FlightLog):
    if len(log) == 0:
        raise InvalidParameterError("empty flight log")


def j_r(log: FlightLog, trim: float = ACTIVE_WINDOW_TRIM_S) -> float:
    """RMS position tracking error over the active window."""
    _require_rows(log)
    m = log.active_mask(trim)
    err = log["pos_sp"][m] - log["pos"][m]
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))


def j_omega(log: FlightLog, trim: float = ACTIVE_WINDOW_TRIM_S) -> float:
    """RMS pitch-rate error over the active window."""
    _require_rows(log)
    return _rms(log["z_w"][log.active_mask(trim), PITCH])


def spectrum(signal, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided magnitude spectrum of the mean-removed, Hann-windowed signal.

    Interior bins carry a factor of 2 so that
    ``sum(mag**2) * (1 + [interior]) / 2 / N`` matches the windowed energy;
    see :func:`spectral_energy`.
    """
    x = np.asarray(signal, dtype=float)
    if x.size < 64:
        raise InvalidParameterError(f"signal too short for a spectrum ({x.size} < 64)")
    xw = windowed(x)
    mag = np.abs(np.fft.rfft(xw))
    freqs = np.fft.rfftfreq(x.size, dt)
    return freqs, mag


def windowed(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return (x - x.mean()) * np.hanning(x.size)


def spectral_energy(mag: np.ndarray, n: int) -> float:
    """Time-domain energy recovered from a one-sided rfft magnitude."""
    power = mag * mag
    weights = np.full(mag.size, 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    return float(np.sum(weights * power) / n)


def band_power_ratio(spec: tuple[np.ndarray, np.ndarray], cutoff_hz: float) -> float:
    """Fraction of spectral power strictly above ``cutoff_hz``."""
    freqs, mag = spec
    if not 0 <= cutoff_hz <= freqs[-1]:
        raise InvalidParameterError(f"cutoff {cutoff_hz} Hz is outside [0, {freqs[-1]}]")
    power = mag * mag
    total = float(np.sum(power))
    if total == 0.0:
        return 0.0
    return float(np.sum(power[freqs > cutoff_hz]) / total)


def drift_trace(log: FlightLog) -> np.ndarray:
    """Per-step Euclidean norm of the six rate-loop gains."""
    _require_rows(log)
    return np.linalg.norm(log["theta_w"], axis=1)


def theta_norm_at(log: FlightLog, t: float) -> float:
    idx = int(np.searchsorted(log.t, t - 1e-12))
    idx = min(idx, len(log) - 1)
    return float(drift_trace(log)[idx])


def pitch_moment_ratio(log: FlightLog, cutoff_hz: float = OSCILLATION_CUTOFF_HZ,
                       trim: float = ACTIVE_WINDOW_TRIM_S) -> float:
    m = log.active_mask(trim)
    return band_power_ratio(spectrum(log["moment_sp"][m, PITCH], log.dt), cutoff_hz)


def evaluate(log: FlightLog, cutoff_hz: float = OSCILLATION_CUTOFF_HZ,
             threshold: float = OSCILLATION_THRESHOLD) -> MetricsReport:
    trace = drift_trace(log)
    ratio = pitch_moment_ratio(log, cutoff_hz)
    return MetricsReport(
        J_r=j_r(log),
        J_omega=j_omega(log),
        band_power_ratio=ratio,
        theta_final_norm=float(trace[-1]),
        theta_max_norm=float(trace.max()),
        oscillation_flag=bool(ratio > threshold),
        theta_norm_at_10s=theta_norm_at(log, 10.0),
    )
