"""End-to-end acceptance checks, one test (and one printed verdict) per criterion.

The flight criteria share a session cache of 10 seeds x 5 variants of the
default 60 s Hilbert mission.  Set ``DEADZONE_RCAC_SEEDS`` to shrink the
sweep while iterating locally.
"""

import math
import os
import time

import numpy as np
import pytest

from deadzone_rcac.harness import VARIANTS, ScenarioConfig, run_scenario

from test_deadzone import run_property_suite
from test_metrics import DT as METRICS_DT
from test_rcac import batch_solution, record_run, run_lti_plant
from test_vehicle import _perturbed_run

N_SEEDS = int(os.environ.get("DEADZONE_RCAC_SEEDS", "10"))
SEEDS = tuple(range(N_SEEDS))
DEADZONES = ("n1", "n2", "n3")


def verdict(report, number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    report.append(line)
    print(line)
    return ok


@pytest.fixture(scope="session")
def flights():
    """{(seed, variant): MetricsReport} plus per-run wall time."""
    base = ScenarioConfig.default()
    out, times = {}, []
    for seed in SEEDS:
        for variant in VARIANTS:
            cfg = base.with_overrides(variant=variant, **{"noise.seed": seed})
            start = time.perf_counter()
            _, out[seed, variant] = run_scenario(cfg, write=False)
            times.append(time.perf_counter() - start)
    return out, times


def test_c1_deadzone_suite(acceptance_report):
    start = time.perf_counter()
    run_property_suite()
    elapsed = time.perf_counter() - start
    assert verdict(acceptance_report, 1, elapsed < 1.0, f"deadzone properties on 1e5 inputs in {elapsed:.2f} s")


def test_c2_rcac_oracle(acceptance_report):
    from deadzone_rcac.rcac import RcacConfig, RcacState

    start = time.perf_counter()
    rng = np.random.default_rng(3)
    cfg = RcacConfig(n_channels=2, structure="PI", p0=0.5, filter_coeffs=(-1.0,))
    state = RcacState(cfg)
    seen = record_run(state, rng.normal(size=(200, 2)))
    theta = batch_solution([s[0] for s in seen], [s[1] for s in seen], [s[2] for s in seen],
                           cfg.initial_theta(), cfg.p0, 1.0)
    rel = float(np.linalg.norm(state.theta - theta) / np.linalg.norm(theta))
    err = run_lti_plant()
    ratio = float(err[500] / err[10])
    elapsed = time.perf_counter() - start
    ok = rel < 1e-6 and ratio < 0.05 and elapsed < 1.0
    assert verdict(acceptance_report, 2, ok,
                   f"batch rel err {rel:.1e}, LTI err[500]/err[10] {ratio:.4f}, {elapsed:.2f} s")


def test_c3_quiescence(acceptance_report):
    cfg = ScenarioConfig.default().with_overrides(variant="n3", duration=20.0, **{"noise.gyro_std": 0.005})
    log, _ = run_scenario(cfg, write=False)
    s1 = cfg.autopilot.deadzone.s1
    quiet = np.r_[np.all(np.abs(log["z_w"]) <= s1, axis=1), False]
    theta = log["theta_w"]
    windows, start = [], None
    for k, q in enumerate(quiet):
        if q and start is None:
            start = k
        elif not q and start is not None:
            if k - start >= 25:
                windows.append((start, k - 1))
            start = None
    adapted = [(a, b) for a, b in windows if np.any(theta[a] != 0.0)]
    worst = max((float(np.linalg.norm(theta[b] - theta[a])) for a, b in windows), default=math.inf)
    ok = bool(adapted) and worst < 1e-12
    assert verdict(acceptance_report, 3, ok,
                   f"{len(windows)} quiet windows ({len(adapted)} after adaptation), max |dtheta| {worst:.1e}")


@pytest.mark.slow
def test_c4_drift_reproduction(flights, acceptance_report):
    reports, times = flights
    hits = []
    for seed in SEEDS:
        r = reports[seed, "none"]
        hits.append(r.oscillation_flag and r.theta_max_norm >= 3.0 * r.theta_norm_at_10s)
    growth = min(reports[s, "none"].theta_max_norm / reports[s, "none"].theta_norm_at_10s for s in SEEDS)
    need = math.ceil(0.8 * len(SEEDS))
    ok = sum(hits) >= need
    assert verdict(acceptance_report, 4, ok,
                   f"{sum(hits)}/{len(SEEDS)} seeds oscillate and drift (min growth {growth:.1f}x), "
                   f"{np.mean(times):.1f} s per 60 s flight")


@pytest.mark.slow
@pytest.mark.parametrize("variant", DEADZONES)
def test_c5_mitigation(flights, acceptance_report, variant):
    reports, _ = flights
    fails = []
    for seed in SEEDS:
        base, r = reports[seed, "none"], reports[seed, variant]
        if r.oscillation_flag or r.J_omega > 0.5 * base.J_omega or r.band_power_ratio * 5 > base.band_power_ratio:
            fails.append(seed)
    jw = np.mean([reports[s, variant].J_omega / reports[s, "none"].J_omega for s in SEEDS])
    bpr = np.mean([reports[s, variant].band_power_ratio for s in SEEDS])
    ok = not fails
    assert verdict(acceptance_report, f"5[{variant}]", ok,
                   f"{len(SEEDS) - len(fails)}/{len(SEEDS)} seeds; mean J_w ratio {jw:.2f}, mean bpr {bpr:.3f}")


@pytest.mark.slow
def test_c6_adaptation_benefit(flights, acceptance_report):
    reports, _ = flights
    ok, worst_spread = True, 0.0
    for seed in SEEDS:
        fixed = reports[seed, "fixed"].J_r
        adaptive = [reports[seed, v].J_r for v in ("none", *DEADZONES)]
        dz_jr = [reports[seed, v].J_r for v in DEADZONES]
        spread = max(dz_jr) / min(dz_jr)
        worst_spread = max(worst_spread, spread)
        ok &= all(j <= fixed for j in adaptive) and spread <= 1.10
    fixed_mean = np.mean([reports[s, "fixed"].J_r for s in SEEDS])
    none_mean = np.mean([reports[s, "none"].J_r for s in SEEDS])
    assert verdict(acceptance_report, 6, ok,
                   f"mean J_r fixed {fixed_mean:.3f} vs adaptive {none_mean:.3f}; "
                   f"deadzone J_r spread {100 * (worst_spread - 1):.1f}%")


def test_c7_physics_suite(acceptance_report):
    from deadzone_rcac.vehicle import Dynamics, Mixer, RigidBodyState, VehicleParams

    p = VehicleParams()
    dyn = Dynamics(p)
    x = RigidBodyState.hover(p).as_vector()
    x0 = x.copy()
    for _ in range(250):
        x = dyn.step_vector(x, np.full(4, p.hover_speed), 0.004)
    hover_err = float(np.max(np.abs(x[:3] - x0[:3])))

    ref = _perturbed_run(0.005 / 100)
    order_ratio = float(np.linalg.norm(_perturbed_run(0.005) - ref) / np.linalg.norm(_perturbed_run(0.0025) - ref))

    mixer = Mixer(p)
    rng = np.random.default_rng(0)
    remix = 0.0
    for _ in range(100):
        wrench = np.r_[rng.uniform(10, 25), rng.uniform(-0.2, 0.2, 2), rng.uniform(-0.02, 0.02)]
        speeds, sat = mixer.mix(wrench[0], wrench[1:])
        assert not sat
        remix = max(remix, float(np.max(np.abs(mixer.wrench(speeds) - wrench))))

    x[10:13] = [3.0, -2.0, 1.0]
    qnorm = 0.0
    for _ in range(500):
        x = dyn.step_vector(x, p.hover_speed * np.array([1.05, 0.95, 1.02, 0.98]), 0.004)
        qnorm = max(qnorm, abs(float(np.linalg.norm(x[6:10])) - 1.0))

    cfg = ScenarioConfig.default().with_overrides(duration=5.0, **{"noise.seed": 4})
    same = np.array_equal(run_scenario(cfg, write=False)[0].data, run_scenario(cfg, write=False)[0].data)

    ok = hover_err < 1e-9 and 8 <= order_ratio <= 32 and remix < 1e-9 and qnorm < 1e-9 and same
    assert verdict(acceptance_report, 7, ok,
                   f"hover {hover_err:.1e} m, RK4 ratio {order_ratio:.1f}, remix {remix:.1e}, "
                   f"|q|-1 {qnorm:.1e}, rerun bit-exact {same}")


def test_c8_metrics_suite(acceptance_report):
    from deadzone_rcac import metrics as mt

    n = 5000
    t = np.arange(n) * METRICS_DT
    z = np.zeros((n, 3))
    z[:, 1] = 0.1
    const = mt.j_omega(mt.FlightLog.from_columns(METRICS_DT, z_w=z))
    z[:, 1] = 0.7 * np.sin(2 * math.pi * 1.3 * t)
    sine = mt.j_omega(mt.FlightLog.from_columns(METRICS_DT, z_w=z))

    x = np.random.default_rng(1).normal(size=n) + np.sin(2 * math.pi * 12.5 * t)
    _, mag = mt.spectrum(x, METRICS_DT)
    energy = float(np.sum(mt.windowed(x) ** 2))
    parseval = abs(mt.spectral_energy(mag, n) - energy) / energy

    freqs, mag = mt.spectrum(np.sin(2 * math.pi * 37.3 * t), METRICS_DT)
    peak_off = abs(freqs[np.argmax(mag)] - 37.3) / (freqs[1] - freqs[0])

    ok = (abs(const - 0.1) < 1e-12 and abs(sine - 0.7 / math.sqrt(2)) < 1e-3
          and parseval < 1e-9 and peak_off <= 1.0)
    assert verdict(acceptance_report, 8, ok,
                   f"const {const:.6f}, sine err {abs(sine - 0.7 / math.sqrt(2)):.1e}, "
                   f"Parseval {parseval:.1e}, peak offset {peak_off:.2f} bins")
