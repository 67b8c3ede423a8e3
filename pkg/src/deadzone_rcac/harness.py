"""Scenario configuration, single runs and the five-way variant comparison."""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import metrics
from .autopilot import LOOP_STRUCTURE, LOOPS, AutopilotConfig, Limits
from .deadzone import DeadzoneConfig
from .errors import ConfigError, DivergenceError, InvalidParameterError, NumericError
from .metrics import FlightLog, MetricsReport
from .mission import MissionPlan
from .rcac import RcacConfig
from .simulation import SimulationSetup, simulate
from .vehicle import SensorNoiseConfig, VehicleParams

CONFIG_SCHEMA_VERSION = 1
VARIANTS = ("fixed", "none", "n1", "n2", "n3")
DEFAULT_CONFIG_NAME = "default_config.yaml"


def load_default_dict() -> dict:
    text = resources.files("deadzone_rcac").joinpath(DEFAULT_CONFIG_NAME).read_text()
    return yaml.safe_load(text)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _take(section: dict, path: str, allowed: set) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(path, "expected a mapping")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown field")
    return section


def _build(path: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except ConfigError:
        raise
    except (InvalidParameterError, NumericError, TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc


@dataclass
class OutputPaths:
    root: Path = Path("out")
    log_name: str = "log.csv"
    report_name: str = "report.json"


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce one flight.

    ``adaptive_loops`` lists the loops that receive RCAC augmentation when
    the variant is adaptive; the ``fixed`` variant turns all of them off.
    """

    vehicle: VehicleParams = field(default_factory=VehicleParams)
    autopilot: AutopilotConfig = field(default_factory=AutopilotConfig)
    mission: MissionPlan = field(default_factory=MissionPlan.hilbert)
    noise: SensorNoiseConfig = field(default_factory=SensorNoiseConfig)
    duration: float = 60.0
    variant: str = "none"
    adaptive_loops: tuple = ("w",)
    output: OutputPaths = field(default_factory=OutputPaths)
    schema_version: int = CONFIG_SCHEMA_VERSION
    raw: dict = field(default_factory=dict, repr=False)

    # -- construction --------------------------------------------------

    @classmethod
    def default(cls) -> "ScenarioConfig":
        return cls.from_dict({})

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read {path}: {exc}") from exc
        try:
            data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        except (yaml.YAMLError, json.JSONDecodeError) as exc:
            raise ConfigError("<file>", f"parse error: {exc}") from exc
        return cls.from_dict(data or {})

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        """Validate ``data`` layered over the shipped defaults."""
        _take(data, "", {"schema_version", "duration", "variant", "adaptive_loops", "vehicle",
                         "autopilot", "mission", "noise", "output"})
        d = _merge(load_default_dict(), data)
        if d.get("schema_version") != CONFIG_SCHEMA_VERSION:
            raise ConfigError("schema_version", f"expected {CONFIG_SCHEMA_VERSION}, got {d.get('schema_version')}")

        vehicle_d = _take(d["vehicle"], "vehicle", set(VehicleParams.__dataclass_fields__))
        vehicle = _build("vehicle", VehicleParams, **vehicle_d)

        noise_d = _take(d["noise"], "noise", set(SensorNoiseConfig.__dataclass_fields__))
        noise = _build("noise", SensorNoiseConfig, **noise_d)

        m = _take(d["mission"], "mission", {"order", "side_length", "altitude", "cruise_speed",
                                           "hold_time_s", "ramp_s", "azimuth"})
        mission = _build("mission", MissionPlan.hilbert, **m)

        variant = str(d["variant"]).lower()
        if variant not in VARIANTS:
            raise ConfigError("variant", f"must be one of {list(VARIANTS)}")
        loops = tuple(d["adaptive_loops"])
        bad = [l for l in loops if l not in LOOPS]
        if bad:
            raise ConfigError("adaptive_loops", f"unknown loop {bad[0]!r}")

        autopilot = _autopilot_from_dict(d["autopilot"], vehicle, variant, loops)

        duration = d["duration"]
        if not isinstance(duration, (int, float)) or not duration > 0:
            raise ConfigError("duration", "must be a positive number")

        out_d = _take(d["output"], "output", {"root", "log_name", "report_name"})
        output = OutputPaths(Path(out_d["root"]), out_d["log_name"], out_d["report_name"])
        return cls(vehicle, autopilot, mission, noise, float(duration), variant, loops, output,
                   CONFIG_SCHEMA_VERSION, raw=d)

    # -- derived -------------------------------------------------------

    def with_overrides(self, **overrides) -> "ScenarioConfig":
        """Re-validate with top-level or dotted-path overrides, e.g. ``noise.seed=3``."""
        data = copy.deepcopy(self.raw)
        for key, value in overrides.items():
            node = data
            parts = key.split(".")
            for p in parts[:-1]:
                node = node.setdefault(p, {})
            node[parts[-1]] = value
        return ScenarioConfig.from_dict(data)

    def setup(self) -> SimulationSetup:
        return SimulationSetup(self.vehicle, self.autopilot, self.mission, self.noise, self.duration)

    def config_hash(self) -> str:
        blob = json.dumps(_jsonable(self.raw), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _autopilot_from_dict(a: dict, vehicle: VehicleParams, variant: str, loops) -> AutopilotConfig:
    _take(a, "autopilot", {"gr_gains", "gv_gains", "gq_time_constant", "gw_gains", "outer_rate_hz",
                           "inner_rate_hz", "gyro_cutoff_hz", "limits", "rcac", "deadzone"})
    lim_d = dict(_take(a["limits"], "autopilot.limits", set(Limits.__dataclass_fields__) | {"max_tilt_deg"}))
    if "max_tilt_deg" in a["limits"]:
        lim_d["max_tilt"] = math.radians(lim_d.pop("max_tilt_deg"))
    limits = _build("autopilot.limits", Limits, **lim_d)

    rcac_d = _take(a["rcac"], "autopilot.rcac", set(LOOPS))
    rcac = {}
    for loop, cfg in rcac_d.items():
        cfg = dict(_take(cfg, f"autopilot.rcac.{loop}", {"p0", "theta0", "filter_coeffs", "forgetting",
                                                          "integrator_clamp", "adaptation_enabled"}))
        rcac[loop] = _build(f"autopilot.rcac.{loop}", RcacConfig, n_channels=3,
                            structure=LOOP_STRUCTURE[loop], **cfg)

    dz_d = dict(_take(a["deadzone"], "autopilot.deadzone", {"s", "s1", "alpha", "s2"}))
    dz_variant = "none" if variant == "fixed" else variant
    params = {k: dz_d[k] for k in _DEADZONE_PARAMS[dz_variant] if k in dz_d}
    deadzone = _build("autopilot.deadzone", DeadzoneConfig.make, variant=dz_variant, **params)

    flags = {loop: (variant != "fixed" and loop in loops) for loop in LOOPS}
    return _build(
        "autopilot",
        AutopilotConfig,
        mass=vehicle.mass,
        gr_gains=a["gr_gains"],
        gv_gains=a["gv_gains"],
        gq_time_constant=a["gq_time_constant"],
        gw_gains=a["gw_gains"],
        outer_rate_hz=a["outer_rate_hz"],
        inner_rate_hz=a["inner_rate_hz"],
        gyro_cutoff_hz=a["gyro_cutoff_hz"],
        adaptive_flags=flags,
        rcac_configs=rcac,
        deadzone=deadzone,
        limits=limits,
    )


_DEADZONE_PARAMS = {"none": (), "n1": ("s",), "n2": ("s1", "alpha"), "n3": ("s1", "s2")}


# --- running ---------------------------------------------------------------

@dataclass
class RunResult:
    variant: str
    log: FlightLog | None
    report: MetricsReport | None
    out_dir: Path | None = None
    error: str | None = None
    diverged_at: float | None = None


def run_scenario(cfg: ScenarioConfig, out_dir=None, write: bool = True) -> tuple[FlightLog, MetricsReport]:
    """Fly the scenario; optionally write ``log.csv`` and ``report.json``.

    On divergence the partial log is written before the
    :class:`DivergenceError` propagates.
    """
    out = Path(out_dir) if out_dir is not None else cfg.output.root
    try:
        log = simulate(cfg.setup())
    except DivergenceError as exc:
        partial = getattr(exc, "log", None)
        if write and partial is not None:
            partial.write_csv(out / cfg.output.log_name)
        raise
    report = metrics.evaluate(log)
    if write:
        log.write_csv(out / cfg.output.log_name)
        payload = {
            "variant": cfg.variant,
            "seed": cfg.noise.seed,
            "config_hash": cfg.config_hash(),
            "schema_version": cfg.schema_version,
            "metrics": report.to_dict(),
        }
        (out / cfg.output.report_name).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return log, report


def _run_variant(cfg: ScenarioConfig, variant: str, out_root: Path | None, write: bool) -> RunResult:
    vcfg = cfg.with_overrides(variant=variant)
    out_dir = out_root / variant if out_root is not None else None
    try:
        log, report = run_scenario(vcfg, out_dir, write=write and out_dir is not None)
    except DivergenceError as exc:
        t = None if exc.step is None else exc.step * vcfg.autopilot.inner_dt
        return RunResult(variant, getattr(exc, "log", None), None, out_dir, str(exc), t)
    except (NumericError, InvalidParameterError) as exc:
        return RunResult(variant, None, None, out_dir, str(exc))
    return RunResult(variant, log, report, out_dir)


TABLE_COLUMNS = ("variant", "J_r", "J_omega", "band_power_ratio", "theta_max_norm", "oscillation_flag", "status")


def compare(base: ScenarioConfig, variants=VARIANTS, out_root=None, write: bool = True,
            workers: int = 1) -> list[RunResult]:
    """Run each variant with the same seed and mission.

    A failing variant is recorded and the rest still run.  With
    ``workers > 1`` variants execute in separate processes; results keep
    the order of ``variants``.
    """
    variants = list(variants)
    if len(variants) < 2:
        raise InvalidParameterError("compare needs at least two variants")
    for v in variants:
        if v not in VARIANTS:
            raise InvalidParameterError(f"unknown variant {v!r}")
    root = Path(out_root) if out_root is not None else None
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_variant, base, v, root, write) for v in variants]
            results = [f.result() for f in futures]
    else:
        results = [_run_variant(base, v, root, write) for v in variants]
    if write and root is not None:
        write_comparison(results, root, base.config_hash())
    return results


def comparison_rows(results) -> list[dict]:
    rows = []
    for r in results:
        if r.report is None:
            rows.append({"variant": r.variant, "J_r": math.nan, "J_omega": math.nan,
                         "band_power_ratio": math.nan, "theta_max_norm": math.nan,
                         "oscillation_flag": "", "status": f"failed: {r.error}"})
        else:
            rows.append({"variant": r.variant, "J_r": r.report.J_r, "J_omega": r.report.J_omega,
                         "band_power_ratio": r.report.band_power_ratio,
                         "theta_max_norm": r.report.theta_max_norm,
                         "oscillation_flag": r.report.oscillation_flag, "status": "ok"})
    return rows


def format_table(results) -> str:
    rows = comparison_rows(results)
    lines = [f"{'variant':8s} {'J_r':>8s} {'J_omega':>8s} {'bpr>10Hz':>9s} {'|theta|max':>10s}  status"]
    for r in rows:
        lines.append(f"{r['variant']:8s} {r['J_r']:8.4f} {r['J_omega']:8.4f} {r['band_power_ratio']:9.4f} "
                     f"{r['theta_max_norm']:10.4f}  {r['status']}")
    return "\n".join(lines)


def write_comparison(results, root: Path, config_hash: str = "") -> None:
    root.mkdir(parents=True, exist_ok=True)
    rows = comparison_rows(results)
    with (root / "comparison.csv").open("w", newline="") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        writer = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    # long format, one bar per (metric, variant)
    with (root / "bar_chart.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "variant", "value"])
        for metric in ("J_r", "J_omega"):
            for r in rows:
                writer.writerow([metric, r["variant"], repr(float(r[metric]))])
    (root / "comparison.txt").write_text(format_table(results) + "\n")


def write_spectrum_csv(log: FlightLog, path, trim: float = metrics.ACTIVE_WINDOW_TRIM_S) -> None:
    """Pitch-moment spectrum over the active window plus the drift trace."""
    mask = log.active_mask(trim)
    freqs, mag = metrics.spectrum(log["moment_sp"][mask, metrics.PITCH], log.dt)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.column_stack([freqs, mag]), delimiter=",", header="freq_hz,magnitude",
               comments="", fmt="%.17g")
    trace = metrics.drift_trace(log)
    np.savetxt(path.with_name(path.stem + "_drift.csv"), np.column_stack([log.t, trace]),
               delimiter=",", header="t,theta_w_norm", comments="", fmt="%.17g")
