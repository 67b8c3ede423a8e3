"""Closed-loop simulation: mission -> autopilot -> mixer -> dynamics -> sensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autopilot import SAT_MIXER, Autopilot, AutopilotConfig, collective_thrust
from .errors import DivergenceError
from .metrics import FlightLog
from .mission import MissionPlan
from .vehicle import Dynamics, Mixer, RigidBodyState, SensorNoiseConfig, VehicleParams, make_rng, sense


@dataclass
class SimulationSetup:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    autopilot: AutopilotConfig = field(default_factory=AutopilotConfig)
    mission: MissionPlan = field(default_factory=MissionPlan.hilbert)
    noise: SensorNoiseConfig = field(default_factory=SensorNoiseConfig)
    duration: float = 60.0


def simulate(setup: SimulationSetup) -> FlightLog:
    """Run the closed loop for ``setup.duration`` and return the log.

    On divergence a :class:`DivergenceError` is raised carrying the
    partial log in its ``log`` attribute.
    """
    ap_cfg = setup.autopilot
    dt = ap_cfg.inner_dt
    n_steps = int(round(setup.duration * ap_cfg.inner_rate_hz))
    decim = ap_cfg.decimation

    autopilot = Autopilot(ap_cfg)
    mixer = Mixer(setup.vehicle)
    dynamics = Dynamics(setup.vehicle)
    rng = make_rng(setup.noise.seed)
    state = RigidBodyState.hover(setup.vehicle, setup.mission.waypoints[0])
    x = state.as_vector()

    log = FlightLog.allocate(n_steps, dt)
    thrust_vec = np.array([0.0, 0.0, -ap_cfg.hover_thrust])
    outer_flags = 0
    sp = setup.mission.setpoints_at(0.0)
    for k in range(n_steps):
        t = k * dt
        state = RigidBodyState.from_vector(x)
        meas = sense(state, setup.noise, rng)
        if k % decim == 0:
            sp = setup.mission.setpoints_at(t)
            thrust_vec, _, outer_flags = autopilot.position_control(
                sp, meas.position, meas.velocity, ap_cfg.outer_dt
            )
        out, rate_meas = autopilot.inner_step(
            thrust_vec, sp.azimuth_sp, sp.azimuth_rate_sp, meas.attitude, meas.omega, dt
        )
        thrust = collective_thrust(thrust_vec, meas.attitude)
        speeds, mix_sat = mixer.mix(thrust, out.moment_sp)
        flags = outer_flags | out.saturation | (SAT_MIXER if mix_sat else 0)
        log.record(
            k,
            t=t,
            pos_sp=sp.position_sp,
            pos=meas.position,
            vel_sp=sp.velocity_sp,
            vel=meas.velocity,
            q=meas.attitude,
            q_sp=out.q_sp,
            rate_sp=out.rate_sp,
            rate_meas=rate_meas,
            z_w=out.z_omega,
            z_w_dz=out.z_omega_dz,
            moment_sp=out.moment_sp,
            thrust_sp=thrust,
            theta_w=autopilot.theta("w"),
            theta_v=autopilot.theta("v"),
            theta_r=autopilot.theta("r"),
            theta_q=autopilot.theta("q"),
            sat_flags=flags,
        )
        try:
            x = dynamics.step_vector(x, speeds, dt)
        except DivergenceError as exc:
            exc.step = k
            exc.log = log.truncated(k + 1)
            raise
    return log
