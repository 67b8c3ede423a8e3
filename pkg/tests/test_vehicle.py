import math

import numpy as np
import pytest

from deadzone_rcac.errors import DivergenceError, InvalidParameterError
from deadzone_rcac.vehicle import (
    GRAVITY,
    Dynamics,
    Mixer,
    RigidBodyState,
    SensorNoiseConfig,
    VehicleParams,
    allocation_matrix,
    kinetic_energy_rot,
    make_rng,
    mix,
    quat_from_axis_angle,
    quat_mul,
    quat_rotate,
    quat_to_rotmat,
    rotmat_to_quat,
    sense,
    step_dynamics,
)

P = VehicleParams()


def test_hover_mix_closed_form():
    speeds, sat = Mixer(P).mix(P.mass * GRAVITY, [0.0, 0.0, 0.0])
    omega = math.sqrt(P.mass * GRAVITY / (4 * P.thrust_coeff))
    np.testing.assert_allclose(speeds, omega, rtol=1e-12)
    assert not sat
    assert P.hover_speed == pytest.approx(omega)


def test_pitch_moment_slows_front_speeds_rear():
    hover, _ = Mixer(P).mix(P.hover_thrust, [0.0, 0.0, 0.0])
    speeds, _ = Mixer(P).mix(P.hover_thrust, [0.0, -0.2, 0.0])
    front = [0, 2]   # front-right, front-left
    rear = [1, 3]
    assert np.all(speeds[front] < hover[front]) and np.all(speeds[rear] > hover[rear])
    d2 = speeds**2 - hover**2
    assert d2[0] == pytest.approx(d2[2]) and d2[1] == pytest.approx(d2[3])
    assert d2[0] == pytest.approx(-d2[1])


def test_positive_pitch_moment_pitches_nose_up():
    hover = RigidBodyState.hover(P)
    speeds, _ = Mixer(P).mix(P.hover_thrust, [0.0, 0.1, 0.0])
    wrench = Mixer(P).wrench(speeds)
    assert wrench[2] == pytest.approx(0.1)
    x = Dynamics(P).step_vector(hover.as_vector(), speeds, 0.004)
    assert x[11] > 0  # body y rate


def test_mixer_round_trip():
    mixer = Mixer(P)
    rng = np.random.default_rng(0)
    for _ in range(200):
        thrust = rng.uniform(5, 30)
        moment = rng.uniform(-0.3, 0.3, 3) * np.array([1, 1, 0.1])
        speeds, sat = mixer.mix(thrust, moment)
        if sat:
            continue
        np.testing.assert_allclose(mixer.wrench(speeds), [thrust, *moment], atol=1e-9)


def test_mixer_saturation_flag_and_bounds():
    speeds, sat = Mixer(P).mix(80.0, [2.0, 0.0, 0.0])
    assert sat
    assert np.all(speeds >= 0) and np.all(speeds <= P.rotor_max)
    assert mix(P.hover_thrust, [0, 0, 0], P).shape == (4,)
    with pytest.raises(InvalidParameterError):
        Mixer(P).mix(-1.0, [0, 0, 0])


def test_allocation_rows():
    a = allocation_matrix(P)
    assert a.shape == (4, 4)
    assert np.all(a[0] == P.thrust_coeff)
    assert np.count_nonzero(a[3] > 0) == 2


def test_hover_equilibrium():
    state = RigidBodyState.hover(P, (1.0, 2.0, -3.0))
    dyn = Dynamics(P)
    x = state.as_vector()
    cmd = np.full(4, P.hover_speed)
    for _ in range(250):
        x = dyn.step_vector(x, cmd, 0.004)
    assert np.max(np.abs(x[0:3] - [1.0, 2.0, -3.0])) < 1e-9


def test_free_fall():
    params = VehicleParams(drag_coeff=(0.0, 0.0, 0.0))
    dyn = Dynamics(params)
    x = RigidBodyState().as_vector()
    for _ in range(100):
        x = dyn.step_vector(x, np.zeros(4), 0.005)
    assert x[5] == pytest.approx(GRAVITY * 0.5, abs=1e-6)


def test_torque_free_motion():
    params = VehicleParams(inertia=(0.02, 0.03, 0.045), drag_coeff=(0, 0, 0))
    dyn = Dynamics(params)
    # pure spin about z is an equilibrium
    x = RigidBodyState(omega=np.array([0.0, 0.0, 3.0])).as_vector()
    for _ in range(100):
        x = dyn.step_vector(x, np.zeros(4), 0.004)
    np.testing.assert_allclose(x[10:13], [0.0, 0.0, 3.0], atol=1e-12)
    # off-axis spin conserves rotational kinetic energy
    w0 = np.array([1.0, -0.7, 2.0])
    x = RigidBodyState(omega=w0).as_vector()
    e0 = kinetic_energy_rot(w0, params.inertia)
    for _ in range(500):
        x = dyn.step_vector(x, np.zeros(4), 0.004)
    assert abs(kinetic_energy_rot(x[10:13], params.inertia) - e0) < 1e-6


def _perturbed_run(dt, t_end=0.4):
    dyn = Dynamics(P)
    state = RigidBodyState.hover(P)
    state.omega = np.array([0.3, -0.2, 0.1])
    state.velocity = np.array([0.5, 0.0, -0.2])
    x = state.as_vector()
    cmd = P.hover_speed * np.array([1.02, 0.99, 1.0, 0.985])
    for _ in range(int(round(t_end / dt))):
        x = dyn._rk4(x, cmd, dt)
    return x


def test_rk4_order():
    ref = _perturbed_run(0.005 / 100)
    e1 = np.linalg.norm(_perturbed_run(0.005) - ref)
    e2 = np.linalg.norm(_perturbed_run(0.0025) - ref)
    assert 8.0 <= e1 / e2 <= 32.0


def test_quaternion_norm_preserved():
    dyn = Dynamics(P)
    x = RigidBodyState.hover(P).as_vector()
    x[10:13] = [4.0, -3.0, 2.0]
    cmd = P.hover_speed * np.array([1.1, 0.9, 1.05, 0.95])
    for _ in range(500):
        x = dyn.step_vector(x, cmd, 0.004)
        assert abs(np.linalg.norm(x[6:10]) - 1.0) < 1e-9


def test_step_dt_bounds_and_divergence():
    dyn = Dynamics(P)
    x = RigidBodyState.hover(P).as_vector()
    with pytest.raises(InvalidParameterError):
        dyn.step_vector(x, np.zeros(4), 0.01)
    with pytest.raises(InvalidParameterError):
        dyn.step_vector(x, np.zeros(4), 0.0)
    bad = x.copy()
    bad[3] = np.nan
    with pytest.raises(DivergenceError):
        dyn.step_vector(bad, np.zeros(4), 0.004)


def test_step_dynamics_wrapper_matches_class():
    s = RigidBodyState.hover(P)
    a = step_dynamics(s, np.full(4, 500.0), P, 0.004)
    b = Dynamics(P).step(s, np.full(4, 500.0), 0.004)
    np.testing.assert_array_equal(a.as_vector(), b.as_vector())


def test_sense_noise_free_is_exact():
    s = RigidBodyState.hover(P, (1, 2, 3))
    s.omega = np.array([0.1, 0.2, 0.3])
    m = sense(s, SensorNoiseConfig(gyro_std=0.0), make_rng(0))
    np.testing.assert_array_equal(m.position, s.position)
    np.testing.assert_array_equal(m.omega, s.omega)
    np.testing.assert_array_equal(m.attitude, s.attitude)


def test_gyro_noise_statistics():
    rng = make_rng(42)
    s = RigidBodyState()
    noise = SensorNoiseConfig(gyro_std=0.05)
    samples = np.array([sense(s, noise, rng).omega[0] for _ in range(100_000)])
    assert 0.049 <= samples.std() <= 0.051


def test_sense_is_deterministic_per_seed():
    s = RigidBodyState()
    noise = SensorNoiseConfig(gyro_std=0.05, pos_std=0.1, vel_std=0.1)
    a = [sense(s, noise, make_rng(9)).omega for _ in range(3)]
    r1, r2 = make_rng(9), make_rng(9)
    seq1 = np.array([sense(s, noise, r1).omega for _ in range(50)])
    seq2 = np.array([sense(s, noise, r2).omega for _ in range(50)])
    assert np.array_equal(seq1, seq2)
    assert np.array_equal(a[0], a[1])


def test_quaternion_helpers():
    q = quat_from_axis_angle([0, 0, 1], math.pi / 2)
    np.testing.assert_allclose(quat_rotate(q, [1, 0, 0]), [0, 1, 0], atol=1e-15)
    r = quat_to_rotmat(quat_mul(q, quat_from_axis_angle([1, 0, 0], 0.3)))
    q2 = rotmat_to_quat(r)
    np.testing.assert_allclose(quat_to_rotmat(q2), r, atol=1e-14)
    assert q2[0] >= 0


@pytest.mark.parametrize("kwargs", [dict(mass=0.0), dict(inertia=(0.1, 0.0, 0.1)), dict(rotor_max=-1.0),
                                    dict(drag_coeff=(-0.1, 0, 0))])
def test_params_validation(kwargs):
    with pytest.raises(InvalidParameterError):
        VehicleParams(**kwargs)


def test_noise_validation():
    with pytest.raises(InvalidParameterError):
        SensorNoiseConfig(gyro_std=-0.1)
