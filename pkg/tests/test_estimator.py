import numpy as np
import pytest

from drivestep.estimator import (
    NX,
    NZ,
    Estimate,
    FilterState,
    NoiseParams,
    NonFiniteError,
    SensorFrame,
    StateEstimator,
    build_measurement,
    correct,
    gravity_compensate,
    init_filter,
    measurement_noise_diag,
    measurement_series,
    observation_matrix,
    predict,
    process_noise_diag,
    transition_matrices,
)
from drivestep.gait import GaitSchedule
from drivestep.kinematics import RobotModel, rot_x, rot_zyx
from drivestep.sim import (
    Scenario,
    NoiseSpec,
    estimator_for_scenario,
    generate,
    run_estimator,
)

MODEL = RobotModel.default()


def random_frame(rng, t=0.0):
    q = np.zeros((4, 4))
    q[:, 0] = rng.uniform(-0.3, 0.3, 4)
    q[:, 1] = rng.uniform(-0.6, 0.6, 4)
    q[:, 2] = rng.uniform(-2.0, -0.8, 4)
    q[:, 3] = rng.uniform(-5.0, 5.0, 4)
    return SensorFrame(
        t=t,
        accel=rng.uniform(-1, 1, 3) + [0, 0, 9.81],
        omega=rng.uniform(-0.5, 0.5, 3),
        R=rot_zyx(*rng.uniform(-0.4, 0.4, 3)),
        q=q,
        qdot=rng.uniform(-3, 3, (4, 4)),
    )


class TestGravityCompensate:
    def test_level_rest(self):
        u = gravity_compensate([0.0, 0.0, 9.81], np.eye(3))
        np.testing.assert_allclose(u, 0.0, atol=1e-12)

    def test_rolled_rest(self):
        R = rot_x(np.pi)
        a_body = R.T @ np.array([0.0, 0.0, 9.81])
        np.testing.assert_allclose(gravity_compensate(a_body, R), 0.0, atol=1e-12)

    def test_forward_push(self):
        u = gravity_compensate([1.0, 0.0, 9.81], np.eye(3))
        np.testing.assert_allclose(u, [1.0, 0.0, 0.0], atol=1e-12)


class TestFilterPrimitives:
    def test_init(self):
        s = init_filter(np.zeros(NX), 1.0)
        np.testing.assert_array_equal(s.P, np.eye(NX))
        with pytest.raises(ValueError):
            init_filter(np.zeros(NX), 0.0)

    def test_noise_params_validation(self):
        with pytest.raises(ValueError):
            NoiseParams(q_p=0.0)

    def test_transition_structure(self):
        F, B = transition_matrices(0.01)
        np.testing.assert_array_equal(F[0:3, 3:6], 0.01 * np.eye(3))
        np.testing.assert_array_equal(F[6:9, 9:12], 0.01 * np.eye(3))
        np.testing.assert_array_equal(B[3:6], 0.01 * np.eye(3))
        assert np.count_nonzero(F) == NX + 6 and np.count_nonzero(B) == 3

    def test_observation_structure(self):
        H = observation_matrix()
        for i in range(4):
            r = 3 * i
            np.testing.assert_array_equal(H[r : r + 3, 0:3], np.eye(3))
            np.testing.assert_array_equal(H[r : r + 3, 6:9], -np.eye(3))
            np.testing.assert_array_equal(H[r : r + 3, 12 + r : 15 + r], -np.eye(3))
            np.testing.assert_array_equal(H[12 + r : 15 + r, 3:6], np.eye(3))
            np.testing.assert_array_equal(H[12 + r : 15 + r, 9:12], -np.eye(3))
            np.testing.assert_array_equal(H[24 + r : 27 + r, 9:12], np.eye(3))
        assert np.count_nonzero(H) == 72  # 18 unit entries per leg

    def test_predict_integrates_position(self):
        s = init_filter(np.zeros(NX), 1.0)
        s.x[3:6] = [1.0, 0.0, 0.0]
        out = predict(s, np.zeros(3), 0.01, NoiseParams(), np.ones(12))
        np.testing.assert_allclose(out.x[0:3], [0.01, 0.0, 0.0], atol=1e-15)
        np.testing.assert_array_equal(out.x[6:9], 0.0)

    def test_predict_input_drives_body_velocity_only(self):
        s = init_filter(np.zeros(NX), 1.0)
        out = predict(s, [1.0, 0.0, 0.0], 0.01, NoiseParams(), np.ones(12))
        np.testing.assert_allclose(out.x[3:6], [0.01, 0.0, 0.0], atol=1e-15)
        np.testing.assert_array_equal(out.x[9:12], 0.0)

    def test_predict_grows_covariance(self):
        s = FilterState(x=np.zeros(NX), P=np.zeros((NX, NX)))
        out = predict(s, np.zeros(3), 0.01, NoiseParams(), np.ones(12))
        np.testing.assert_array_equal(out.x, s.x)
        expected = process_noise_diag(NoiseParams(), 0.01, np.ones(12))
        np.testing.assert_allclose(np.diag(out.P), expected, atol=1e-15)
        np.testing.assert_array_equal(out.P - np.diag(np.diag(out.P)), 0.0)

    def test_predict_nonfinite(self):
        s = init_filter(np.zeros(NX), 1.0)
        with pytest.raises(NonFiniteError):
            predict(s, [np.nan, 0.0, 0.0], 0.01, NoiseParams(), np.ones(12))

    def test_correct_zero_innovation(self):
        rng = np.random.default_rng(0)
        s = init_filter(rng.uniform(-1, 1, NX), 1.0)
        H = observation_matrix()
        z = H @ s.x
        out = correct(s, z, NoiseParams(), np.ones(12))
        np.testing.assert_allclose(out.x, s.x, atol=1e-12)
        assert np.trace(out.P) <= np.trace(s.P) + 1e-12

    def test_correct_symmetrizes(self):
        rng = np.random.default_rng(1)
        s = init_filter(rng.uniform(-1, 1, NX), 0.5)
        out = correct(s, rng.uniform(-1, 1, NZ), NoiseParams(), np.ones(12))
        np.testing.assert_array_equal(out.P, out.P.T)

    def test_untrusted_leg_equals_exclusion(self):
        # inflating one leg's noise approaches removing its measurement rows
        # outright; the residual leakage shrinks like the inverse inflation.
        # Reference: a standard KF update with the leg's rows deleted.
        rng = np.random.default_rng(2)
        s = init_filter(rng.uniform(-0.01, 0.01, NX), 1e-6)
        z = rng.uniform(-0.01, 0.01, NZ)
        H = observation_matrix()
        keep = np.ones(NZ, dtype=bool)
        for blk in range(3):
            keep[12 * blk : 12 * blk + 3] = False
        Hs = H[keep]
        rs = measurement_noise_diag(NoiseParams(), np.ones(12))[keep]
        S = Hs @ s.P @ Hs.T + np.diag(rs)
        K = s.P @ Hs.T @ np.linalg.inv(S)
        x_deleted = s.x + K @ (z[keep] - Hs @ s.x)

        trusted = correct(s, z, NoiseParams(), np.ones(12))
        response = np.abs(trusted.x - x_deleted).max()
        xi = np.ones(12)
        xi[0:3] = 1.0 + 1e6
        leak = np.abs(correct(s, z, NoiseParams(), xi).x - x_deleted).max()
        # the innovation-regularization floor keeps this from shrinking
        # indefinitely, but at 1e6 inflation the leg is effectively gone
        assert leak < 1e-5 * response

    def test_process_and_measurement_noise_layout(self):
        xi = np.arange(1.0, 13.0)
        q = process_noise_diag(NoiseParams(), 1e-3, xi)
        np.testing.assert_allclose(q[12:24], NoiseParams().q_pcp * 1e-3 * xi, atol=1e-18)
        r = measurement_noise_diag(NoiseParams(), xi)
        np.testing.assert_allclose(r[0:12], NoiseParams().r_pcp * xi, atol=1e-18)
        np.testing.assert_allclose(r[24:36], NoiseParams().r_pdotw * xi, atol=1e-18)


class TestMeasurementBuilders:
    def test_fast_path_matches_reference(self):
        from drivestep.estimator import _GeomArrays, _measurement_fast

        rng = np.random.default_rng(3)
        for wheel_aware in (True, False):
            ga = _GeomArrays(MODEL, wheel_aware)
            for _ in range(25):
                frame = random_frame(rng)
                z_ref, fz_ref, fl_ref = build_measurement(MODEL, frame, wheel_aware)
                z, fz, fl = _measurement_fast(ga, MODEL.shoulders, frame, wheel_aware)
                np.testing.assert_allclose(z, z_ref, atol=1e-12)
                np.testing.assert_allclose(fz, fz_ref, atol=1e-12)
                np.testing.assert_array_equal(fl, fl_ref)

    def test_series_matches_reference(self):
        rng = np.random.default_rng(4)
        frames = [random_frame(rng, t=k * 1e-3) for k in range(40)]
        R = np.stack([f.R for f in frames])
        q = np.stack([f.q for f in frames])
        qd = np.stack([f.qdot for f in frames])
        om = np.stack([f.omega for f in frames])
        for wheel_aware in (True, False):
            Z, fz, fl = measurement_series(MODEL, R, q, qd, om, wheel_aware)
            for k, frame in enumerate(frames):
                z_ref, fz_ref, fl_ref = build_measurement(MODEL, frame, wheel_aware)
                np.testing.assert_allclose(Z[k], z_ref, atol=1e-12)
                np.testing.assert_allclose(fz[k], fz_ref, atol=1e-12)
                np.testing.assert_array_equal(fl[k], fl_ref)

    def test_baseline_mode_has_no_driving_rows(self):
        rng = np.random.default_rng(5)
        frame = random_frame(rng)
        z, _, _ = build_measurement(MODEL, frame, wheel_aware=False)
        np.testing.assert_array_equal(z[24:36], 0.0)


def _true_state(truth, k):
    """24-element state consistent with the oracle truth at step k."""
    x = np.empty(NX)
    x[0:3] = truth.p[k]
    x[3:6] = truth.pdot[k]
    x[6:9] = truth.p_drive[k]
    x[9:12] = truth.pdot_drive[k]
    x[12:24] = (truth.foot_pos[k] - truth.p_drive[k]).ravel()
    return x


class TestMeasurementCalibration:
    """The sign/frame conventions of the measurement are pinned by requiring
    zero innovation against the truth state on perfect stance data."""

    def test_zero_innovation_on_perfect_drive_data(self):
        s = Scenario(duration=2.0, gait=GaitSchedule.stand(),
                     v_drive=((0.0, (0.8, 0.0, 0.0)),))
        truth, sensors = generate(s)
        H = observation_matrix()
        Z, _, _ = measurement_series(
            MODEL, sensors.R, sensors.q, sensors.qdot, sensors.omega, True
        )
        worst = 0.0
        for k in range(0, len(truth), 101):
            worst = max(worst, np.abs(Z[k] - H @ _true_state(truth, k)).max())
        assert worst < 1e-9

    def test_zero_innovation_on_stance_legs_while_trotting(self):
        s = Scenario(duration=2.0, gait=GaitSchedule.trot(),
                     v_step=((0.0, (0.4, 0.0, 0.0)),))
        truth, sensors = generate(s)
        H = observation_matrix()
        Z, _, _ = measurement_series(
            MODEL, sensors.R, sensors.q, sensors.qdot, sensors.omega, True
        )
        worst = 0.0
        for k in range(0, len(truth), 17):
            resid = np.abs(Z[k] - H @ _true_state(truth, k))
            rows = np.zeros(NZ, dtype=bool)
            stance = np.repeat(truth.contact[k] == 1, 3)
            rows[0:12] = stance
            rows[12:24] = stance
            rows[24:36] = stance
            worst = max(worst, resid[rows].max())
        assert worst < 1e-9

    def test_initial_innovation_after_fk_seeding(self):
        s = Scenario(duration=1.0, gait=GaitSchedule.stand())
        truth, sensors = generate(s)
        est = estimator_for_scenario(s, truth, sensors)
        z, _, _ = build_measurement(MODEL, sensors.frame(0), True)
        y = z - observation_matrix() @ est.state.x
        assert np.abs(y).max() < 1e-9


class TestStateEstimator:
    def test_run_series_matches_stepping(self):
        s = Scenario(
            duration=1.5,
            gait=GaitSchedule.trot(),
            v_step=((0.0, (0.4, 0.0, 0.0)),),
            v_drive=((0.0, (0.2, 0.0, 0.0)),),
            noise=NoiseSpec(sigma_accel=0.05, sigma_joint_vel=0.01),
            seed=11,
        )
        truth, sensors = generate(s)
        est_a = estimator_for_scenario(s, truth, sensors)
        log = run_estimator(est_a, sensors)

        est_b = estimator_for_scenario(s, truth, sensors)
        for k in range(len(sensors)):
            out = est_b.step(sensors.frame(k))
            np.testing.assert_array_equal(log.p[k], out.p)
            np.testing.assert_array_equal(log.pdot[k], out.pdot)
            np.testing.assert_array_equal(log.p_drive[k], out.p_drive)
            np.testing.assert_array_equal(log.pdot_drive[k], out.pdot_drive)
            np.testing.assert_array_equal(log.trust[k], out.trust)
            np.testing.assert_array_equal(log.s_hat[k], out.s_hat)
        np.testing.assert_array_equal(est_a.state.x, est_b.state.x)
        np.testing.assert_array_equal(est_a.state.P, est_b.state.P)

    def test_gait_velocity_identity(self):
        s = Scenario(duration=1.0, gait=GaitSchedule.trot(),
                     v_step=((0.0, (0.3, 0.0, 0.0)),))
        truth, sensors = generate(s)
        log = run_estimator(estimator_for_scenario(s, truth, sensors), sensors)
        np.testing.assert_array_equal(log.v_gait, log.pdot - log.pdot_drive)

    def test_drive_velocity_split(self):
        # pure driving converges to pdot_drive = command and v_gait = 0
        s = Scenario(duration=3.0, gait=GaitSchedule.stand(),
                     v_drive=((0.0, (1.0, 0.0, 0.0)),))
        truth, sensors = generate(s)
        log = run_estimator(estimator_for_scenario(s, truth, sensors), sensors)
        tail = slice(len(truth) // 2, None)
        assert np.abs(log.pdot_drive[tail] - [1.0, 0.0, 0.0]).max() < 1e-6
        assert np.abs(log.v_gait[tail]).max() < 1e-6

    def test_dead_reckoning_when_all_contacts_distrusted(self):
        # with every measurement row excluded the filter reduces to double
        # integration of the IMU input
        s = Scenario(duration=0.5, gait=GaitSchedule.stand(),
                     v_drive=((0.0, (0.5, 0.0, 0.0)),))
        truth, sensors = generate(s)
        est = estimator_for_scenario(s, truth, sensors)
        n = len(sensors)
        for k in range(n):
            frame = sensors.frame(k)
            frame.s_hat = np.zeros(4, dtype=int)
            out = est.step(frame)
        # truth integrates the same inputs, so the final estimate must agree
        np.testing.assert_allclose(out.p, truth.p[-1], atol=1e-6)
        np.testing.assert_allclose(out.pdot, truth.pdot[-1], atol=1e-6)

    def test_health_collection(self):
        s = Scenario(duration=0.5, gait=GaitSchedule.trot(),
                     v_step=((0.0, (0.3, 0.0, 0.0)),))
        truth, sensors = generate(s)
        est = estimator_for_scenario(s, truth, sensors, collect_health=True)
        run_estimator(est, sensors)
        assert len(est.health) == len(sensors)
        assert max(h.sym_err for h in est.health) < 1e-9
        assert min(h.min_eig for h in est.health) > -1e-9

    def test_nonfinite_input_raises(self):
        s = Scenario(duration=0.1, gait=GaitSchedule.stand())
        truth, sensors = generate(s)
        est = estimator_for_scenario(s, truth, sensors)
        est.step(sensors.frame(0))
        frame = sensors.frame(1)
        frame.accel = np.array([np.nan, 0.0, 0.0])
        with pytest.raises(NonFiniteError):
            est.step(frame)
            est.step(sensors.frame(2))  # prediction consumes the bad input

    def test_run_series_annotates_failures(self):
        s = Scenario(duration=0.1, gait=GaitSchedule.stand())
        truth, sensors = generate(s)
        sensors.accel[50, 0] = np.nan
        est = estimator_for_scenario(s, truth, sensors)
        with pytest.raises(NonFiniteError, match="step 51"):
            run_estimator(est, sensors)

    def test_estimate_record_fields(self):
        s = Scenario(duration=0.1, gait=GaitSchedule.stand())
        truth, sensors = generate(s)
        est = estimator_for_scenario(s, truth, sensors)
        out = est.step(sensors.frame(0))
        assert isinstance(out, Estimate)
        np.testing.assert_array_equal(out.v_gait, out.pdot - out.pdot_drive)
        assert out.p_contact.shape == (4, 3)
        assert out.trust.shape == (4,)
