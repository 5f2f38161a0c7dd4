"""Linear Kalman filter over the 24-element hybrid driving-stepping state.

State layout (world frame):
    x = (p, pdot, p_drive, pdot_drive, p_cp^1 .. p_cp^4)
where p / pdot are body position and velocity, p_drive / pdot_drive the
contribution of wheel driving to them, and p_cp^i the drive-discounted world
anchor of each leg's contact point.

The 36-element measurement stacks, per leg, the contact position relative to
the body and the kinematic and driving contact-velocity contributions.  Sign
conventions of the measurement builder are pinned by requiring zero innovation
on perfect stance data from the synthetic oracle:
    z_pos_i  = -R p_cp_body_i        (observes p - p_drive - p_cp^i)
    z_kin_i  = -pdot_cp_k_i          (observes pdot - pdot_drive)
    z_drive_i =  pdot_cp_w_i         (observes pdot_drive)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .gait import GaitSchedule, apply_limit_override, contact_schedule
from .kinematics import (
    BaseAttitude,
    LegJointState,
    RobotModel,
    contact_velocity,
    euler_rates_zyx,
    euler_zyx_from_rot,
    is_near_singular,
)
from .trust import TrustParams, covariance_gain_diag, height_trust, phase_trust

GRAVITY = 9.81

NX = 24  # state size
NZ = 36  # measurement size


class NonFiniteError(ArithmeticError):
    """A filter step produced a non-finite state or covariance entry."""


class SingularInnovationError(np.linalg.LinAlgError):
    """Innovation covariance not invertible (misconfigured zero noise)."""


@dataclass(frozen=True)
class NoiseParams:
    """Process noise densities (scaled by dt) and measurement variances."""

    q_p: float = 1e-4
    q_pdot: float = 1e-3
    q_dp: float = 1e-4
    q_dpdot: float = 1e-3
    q_pcp: float = 1e-5
    r_pcp: float = 1e-4
    r_pdotk: float = 1e-3
    r_pdotw: float = 1e-3

    def __post_init__(self) -> None:
        if any(v <= 0.0 for v in self.__dict__.values()):
            raise ValueError("all noise parameters must be strictly positive")


@dataclass
class FilterState:
    """State estimate and its covariance."""

    x: np.ndarray  # (24,)
    P: np.ndarray  # (24, 24)

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float).reshape(NX)
        self.P = np.asarray(self.P, dtype=float).reshape(NX, NX)


@dataclass
class SensorFrame:
    """One timestep of sensing: IMU, orientation and per-leg joint states."""

    t: float
    accel: np.ndarray          # body-frame specific force [m/s^2]
    omega: np.ndarray          # body-frame angular velocity [rad/s]
    R: np.ndarray              # body->world orientation
    q: np.ndarray              # (4, 4) joint positions per leg
    qdot: np.ndarray           # (4, 4) joint velocities per leg
    s_hat: np.ndarray | None = None  # optional expected contacts override


@dataclass
class Estimate:
    """Per-step estimator output."""

    t: float
    p: np.ndarray
    pdot: np.ndarray
    p_drive: np.ndarray
    pdot_drive: np.ndarray
    v_gait: np.ndarray
    p_contact: np.ndarray   # (4, 3) contact anchors from the state
    trust: np.ndarray       # (4,) combined per-leg trust C_phi * C_z
    s_hat: np.ndarray       # (4,) expected contacts after limit override
    R: np.ndarray           # orientation pass-through


def init_filter(x0: np.ndarray, p0_scale: float) -> FilterState:
    """Initial state with isotropic covariance p0_scale * I."""
    if p0_scale <= 0.0:
        raise ValueError("p0_scale must be positive")
    return FilterState(x=np.array(x0, dtype=float), P=p0_scale * np.eye(NX))


def gravity_compensate(a_imu: np.ndarray, R: np.ndarray) -> np.ndarray:
    """World-frame net acceleration from the body-frame specific force.

    The accelerometer of a resting robot reads +g along body z; rotating to
    the world frame and subtracting the gravity reading leaves the net
    acceleration: u = R a_imu - [0, 0, g].
    """
    u = np.asarray(R, dtype=float) @ np.asarray(a_imu, dtype=float)
    u[2] -= GRAVITY
    return u


def transition_matrices(dt: float) -> tuple[np.ndarray, np.ndarray]:
    """State transition F (24x24) and input matrix B (24x3) for step dt."""
    F = np.eye(NX)
    F[0:3, 3:6] = dt * np.eye(3)    # p integrates pdot
    F[6:9, 9:12] = dt * np.eye(3)   # p_drive integrates pdot_drive
    B = np.zeros((NX, 3))
    B[3:6, :] = dt * np.eye(3)      # u drives the body velocity only
    return F, B


def process_noise_diag(np_: NoiseParams, dt: float, xi_diag: np.ndarray) -> np.ndarray:
    """Diagonal of Q with the contact block inflated by xi."""
    q = np.empty(NX)
    q[0:3] = np_.q_p * dt
    q[3:6] = np_.q_pdot * dt
    q[6:9] = np_.q_dp * dt
    q[9:12] = np_.q_dpdot * dt
    q[12:24] = np_.q_pcp * dt * xi_diag
    return q


def observation_matrix() -> np.ndarray:
    """The constant 36x24 observation matrix H."""
    H = np.zeros((NZ, NX))
    I3 = np.eye(3)
    for i in range(4):
        r = 3 * i
        H[r : r + 3, 0:3] = I3                      # p
        H[r : r + 3, 6:9] = -I3                     # -p_drive
        H[r : r + 3, 12 + r : 15 + r] = -I3         # -p_cp^i
        H[12 + r : 15 + r, 3:6] = I3                # pdot
        H[12 + r : 15 + r, 9:12] = -I3              # -pdot_drive
        H[24 + r : 27 + r, 9:12] = I3               # pdot_drive
    return H


_H = observation_matrix()


def measurement_noise_diag(np_: NoiseParams, xi_diag: np.ndarray) -> np.ndarray:
    """Diagonal of R with xi applied to every 12-element measurement block."""
    return np.concatenate(
        (np_.r_pcp * xi_diag, np_.r_pdotk * xi_diag, np_.r_pdotw * xi_diag)
    )


def predict(
    s: FilterState,
    u: np.ndarray,
    dt: float,
    noise: NoiseParams,
    xi_diag: np.ndarray,
    F: np.ndarray | None = None,
    B: np.ndarray | None = None,
) -> FilterState:
    """KF prediction x <- F x + B u, P <- F P F' + Q(xi)."""
    if F is None or B is None:
        F, B = transition_matrices(dt)
    x = F @ s.x + B @ np.asarray(u, dtype=float)
    P = F @ s.P @ F.T
    P[np.diag_indices(NX)] += process_noise_diag(noise, dt, xi_diag)
    if not (np.isfinite(x).all() and np.isfinite(P).all()):
        raise NonFiniteError("non-finite state after prediction")
    return FilterState(x=x, P=P)


def correct(
    s: FilterState,
    z: np.ndarray,
    noise: NoiseParams,
    xi_diag: np.ndarray,
    r_diag: np.ndarray | None = None,
) -> FilterState:
    """Standard KF correction with trust-inflated measurement noise.

    ``r_diag`` overrides the measurement noise diagonal (used to exclude the
    rows of legs whose contact model does not apply).
    """
    z = np.asarray(z, dtype=float).reshape(NZ)
    if r_diag is None:
        r_diag = measurement_noise_diag(noise, xi_diag)
    P = s.P
    PHt = P @ _H.T
    S = _H @ PHt
    S[np.diag_indices(NZ)] += r_diag
    # guard against misconfigured zero noise
    S[np.diag_indices(NZ)] += 1e-12 * np.trace(S) / NZ
    y = z - _H @ s.x
    try:
        K = np.linalg.solve(S, PHt.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularInnovationError(str(exc)) from exc
    x = s.x + K @ y
    P_new = P - K @ PHt.T
    P_new = 0.5 * (P_new + P_new.T)
    if not (np.isfinite(x).all() and np.isfinite(P_new).all()):
        raise NonFiniteError("non-finite state after correction")
    return FilterState(x=x, P=P_new)


def build_measurement(
    model: RobotModel, frame: SensorFrame, wheel_aware: bool = True
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Measurement vector z plus per-leg auxiliaries.

    Returns (z, foot_z_rel, singular_flags): ``foot_z_rel`` is the world-frame
    z of each contact relative to the body origin (for the height trust),
    ``singular_flags`` marks legs near their kinematic limits.  In baseline
    (non wheel-aware) mode the contact is the chain tip and the driving
    velocity block is zero.
    """
    R = np.asarray(frame.R, dtype=float)
    yaw, pitch, roll = euler_zyx_from_rot(R)
    phidot, thetadot = euler_rates_zyx(roll, pitch, frame.omega)
    att = BaseAttitude(
        R=R, phi=roll, theta=pitch, omega=frame.omega, phidot=phidot, thetadot=thetadot
    )
    z = np.zeros(NZ)
    foot_z_rel = np.zeros(4)
    flags = np.zeros(4, dtype=bool)
    for i in range(4):
        geom = model.legs[i] if wheel_aware else model.legs[i].point_contact()
        joints = LegJointState(q=frame.q[i], qdot=frame.qdot[i])
        ck = contact_velocity(geom, joints, att)
        p_cp_body = model.shoulders[i] + ck.p_cp
        rel = R @ p_cp_body
        # the omega cross-term of pdot_cp_k must use the shoulder-inclusive
        # contact position; contact_velocity only sees the leg-frame part
        omega_w = R @ frame.omega
        pdot_k = ck.pdot_cp_k + np.cross(omega_w, R @ model.shoulders[i])
        r = 3 * i
        z[r : r + 3] = -rel
        z[12 + r : 15 + r] = -pdot_k
        if wheel_aware:
            z[24 + r : 27 + r] = ck.pdot_cp_w
        foot_z_rel[i] = rel[2]
        flags[i] = is_near_singular(model.legs[i], joints, model.singularity_fraction)
    return z, foot_z_rel, flags


class _GeomArrays:
    """Per-leg geometry constants stacked into arrays for the fast path."""

    def __init__(self, model: RobotModel, wheel_aware: bool) -> None:
        legs = model.legs if wheel_aware else tuple(g.point_contact() for g in model.legs)
        self.L1 = np.array([g.L1 for g in legs])
        self.L2 = np.array([g.L2 for g in legs])
        self.L3 = np.array([g.L3 for g in legs])
        self.a_end = np.array([g.a_end for g in legs])
        self.b_end = np.array([g.b_end for g in legs])
        self.m = np.array([float(g.mirror) for g in legs])
        # singularity check always uses the true leg geometry
        full = model.legs
        self.sing_L2 = np.array([g.L2 for g in full])
        self.sing_L3 = np.array([g.L3 for g in full])
        self.sing_thresh = model.singularity_fraction * (self.sing_L2 + self.sing_L3)


def _measurement_fast(
    ga: _GeomArrays, shoulders: np.ndarray, frame: SensorFrame, wheel_aware: bool
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized equivalent of build_measurement (all four legs at once)."""
    R = frame.R
    yaw, pitch, roll = euler_zyx_from_rot(R)
    phidot, thetadot = euler_rates_zyx(roll, pitch, frame.omega)
    q = frame.q
    qd = frame.qdot

    q1m = ga.m * q[:, 0]
    s1, c1 = np.sin(q1m), np.cos(q1m)
    s2, c2 = np.sin(q[:, 1]), np.cos(q[:, 1])
    q23 = q[:, 1] + q[:, 2]
    s23, c23 = np.sin(q23), np.cos(q23)
    a = ga.L3 * c23 + ga.L2 * c2 + (ga.a_end - ga.b_end)
    d2 = ga.L3 * s23 + ga.L2 * s2

    p_cp_body = np.empty((4, 3))
    p_cp_body[:, 0] = d2 + shoulders[:, 0]
    p_cp_body[:, 1] = ga.m * (ga.L1 * c1 + a * s1) + shoulders[:, 1]
    p_cp_body[:, 2] = ga.L1 * s1 - a * c1 - ga.b_end + shoulders[:, 2]
    rel = p_cp_body @ R.T

    qd1m = ga.m * qd[:, 0]
    Jqd = np.empty((4, 3))
    Jqd[:, 0] = (ga.L3 * c23 + ga.L2 * c2) * qd[:, 1] + ga.L3 * c23 * qd[:, 2]
    Jqd[:, 1] = ga.m * (
        (-ga.L1 * s1 + a * c1) * qd1m
        - s1 * d2 * qd[:, 1]
        - s1 * ga.L3 * s23 * qd[:, 2]
    )
    Jqd[:, 2] = (
        (ga.L1 * c1 + a * s1) * qd1m
        + c1 * d2 * qd[:, 1]
        + c1 * ga.L3 * s23 * qd[:, 2]
    )
    ow = R @ frame.omega
    pdot_k = Jqd @ R.T
    pdot_k[:, 0] += ow[1] * rel[:, 2] - ow[2] * rel[:, 1]
    pdot_k[:, 1] += ow[2] * rel[:, 0] - ow[0] * rel[:, 2]
    pdot_k[:, 2] += ow[0] * rel[:, 1] - ow[1] * rel[:, 0]

    z = np.empty(NZ)
    z[0:12] = (-rel).ravel()
    z[12:24] = (-pdot_k).ravel()
    if wheel_aware:
        r_eff = ga.a_end - ga.b_end * np.sin(ga.m * (q[:, 0] + roll))
        local = np.zeros((4, 3))
        local[:, 0] = (
            thetadot * np.cos(q[:, 0]) + qd[:, 1] + qd[:, 2] + qd[:, 3]
        ) * r_eff
        local[:, 1] = (phidot + qd[:, 0]) * ga.b_end
        z[24:36] = (local @ R.T).ravel()
    else:
        z[24:36] = 0.0

    ext = np.sqrt(
        ga.sing_L2**2 + ga.sing_L3**2 + 2.0 * ga.sing_L2 * ga.sing_L3 * np.cos(q[:, 2])
    )
    flags = ext >= ga.sing_thresh
    return z, rel[:, 2].copy(), flags


def measurement_series(
    model: RobotModel,
    R: np.ndarray,
    q: np.ndarray,
    qdot: np.ndarray,
    omega: np.ndarray,
    wheel_aware: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """build_measurement vectorized over a whole sensor stream.

    Arguments are stacked arrays: R (N,3,3), q/qdot (N,4,4), omega (N,3).
    Returns (Z (N,36), foot_z_rel (N,4), singular_flags (N,4)).
    """
    ga = _GeomArrays(model, wheel_aware)
    shoulders = np.asarray(model.shoulders, dtype=float)
    n = R.shape[0]

    roll = np.arctan2(R[:, 2, 1], R[:, 2, 2])
    pitch = np.arctan2(-R[:, 2, 0], np.hypot(R[:, 2, 1], R[:, 2, 2]))
    sphi, cphi = np.sin(roll), np.cos(roll)
    ttheta = np.tan(pitch)
    phidot = omega[:, 0] + sphi * ttheta * omega[:, 1] + cphi * ttheta * omega[:, 2]
    thetadot = cphi * omega[:, 1] - sphi * omega[:, 2]

    q1m = ga.m * q[:, :, 0]
    s1, c1 = np.sin(q1m), np.cos(q1m)
    s2, c2 = np.sin(q[:, :, 1]), np.cos(q[:, :, 1])
    q23 = q[:, :, 1] + q[:, :, 2]
    s23, c23 = np.sin(q23), np.cos(q23)
    a = ga.L3 * c23 + ga.L2 * c2 + (ga.a_end - ga.b_end)
    d2 = ga.L3 * s23 + ga.L2 * s2

    p_cp_body = np.empty((n, 4, 3))
    p_cp_body[:, :, 0] = d2 + shoulders[:, 0]
    p_cp_body[:, :, 1] = ga.m * (ga.L1 * c1 + a * s1) + shoulders[:, 1]
    p_cp_body[:, :, 2] = ga.L1 * s1 - a * c1 - ga.b_end + shoulders[:, 2]
    rel = np.einsum("nij,nlj->nli", R, p_cp_body)

    qd1m = ga.m * qdot[:, :, 0]
    Jqd = np.empty((n, 4, 3))
    Jqd[:, :, 0] = (ga.L3 * c23 + ga.L2 * c2) * qdot[:, :, 1] + ga.L3 * c23 * qdot[:, :, 2]
    Jqd[:, :, 1] = ga.m * (
        (-ga.L1 * s1 + a * c1) * qd1m
        - s1 * d2 * qdot[:, :, 1]
        - s1 * ga.L3 * s23 * qdot[:, :, 2]
    )
    Jqd[:, :, 2] = (
        (ga.L1 * c1 + a * s1) * qd1m
        + c1 * d2 * qdot[:, :, 1]
        + c1 * ga.L3 * s23 * qdot[:, :, 2]
    )
    ow = np.einsum("nij,nj->ni", R, omega)
    pdot_k = np.einsum("nij,nlj->nli", R, Jqd) + np.cross(ow[:, None, :], rel)

    Z = np.empty((n, NZ))
    Z[:, 0:12] = (-rel).reshape(n, 12)
    Z[:, 12:24] = (-pdot_k).reshape(n, 12)
    if wheel_aware:
        r_eff = ga.a_end - ga.b_end * np.sin(ga.m * (q[:, :, 0] + roll[:, None]))
        local = np.zeros((n, 4, 3))
        local[:, :, 0] = (
            thetadot[:, None] * np.cos(q[:, :, 0])
            + qdot[:, :, 1] + qdot[:, :, 2] + qdot[:, :, 3]
        ) * r_eff
        local[:, :, 1] = (phidot[:, None] + qdot[:, :, 0]) * ga.b_end
        Z[:, 24:36] = np.einsum("nij,nlj->nli", R, local).reshape(n, 12)
    else:
        Z[:, 24:36] = 0.0

    ext = np.sqrt(
        ga.sing_L2**2 + ga.sing_L3**2
        + 2.0 * ga.sing_L2 * ga.sing_L3 * np.cos(q[:, :, 2])
    )
    flags = ext >= ga.sing_thresh
    return Z, rel[:, :, 2].copy(), flags


@dataclass
class HealthRecord:
    """Per-step covariance health metrics."""

    sym_err: float
    min_eig: float


class StateEstimator:
    """Estimation loop tying kinematics, gait, trust and the KF together.

    Owns a FilterState; ``step`` is not reentrant on the same instance.
    """

    def __init__(
        self,
        model: RobotModel,
        gait: GaitSchedule,
        trust_params: TrustParams | None = None,
        noise: NoiseParams | None = None,
        dt: float = 1e-3,
        wheel_aware: bool = True,
        trust_enabled: bool = True,
        x0: np.ndarray | None = None,
        p0_scale: float = 1e-2,
        collect_health: bool = False,
    ) -> None:
        self.model = model
        self.gait = gait
        self.trust_params = trust_params if trust_params is not None else TrustParams()
        self.noise = noise if noise is not None else NoiseParams()
        self.dt = float(dt)
        self.wheel_aware = wheel_aware
        self.trust_enabled = trust_enabled
        self.collect_health = collect_health
        self.health: list[HealthRecord] = []
        self.state = init_filter(np.zeros(NX) if x0 is None else x0, p0_scale)
        self._F, self._B = transition_matrices(self.dt)
        self._ground_z = 0.0
        self._cz_prev = np.ones(4)
        self._u_prev: np.ndarray | None = None
        self._s_prev = np.ones(4, dtype=int)
        self.anchor_reset_var = 1e-4
        self._ga = _GeomArrays(model, wheel_aware)
        self._shoulders = np.asarray(model.shoulders, dtype=float)
        self._diag_nx = np.diag_indices(NX)
        self._diag_nz = np.diag_indices(NZ)

    def seed_contacts_from_frame(self, frame: SensorFrame) -> None:
        """Seed the contact anchors of the state from FK at the given pose."""
        z, _, _ = build_measurement(self.model, frame, self.wheel_aware)
        for i in range(4):
            r = 3 * i
            self.state.x[12 + r : 15 + r] = (
                self.state.x[0:3] - self.state.x[6:9] - z[r : r + 3]
            )

    def _reset_anchor(self, i: int, z: np.ndarray) -> None:
        """Re-seed the contact anchor of leg i from the current measurement."""
        r = 12 + 3 * i
        x, P = self.state.x, self.state.P
        x[r : r + 3] = x[0:3] - x[6:9] - z[3 * i : 3 * i + 3]
        P[r : r + 3, :] = 0.0
        P[:, r : r + 3] = 0.0
        P[r : r + 3, r : r + 3] = self.anchor_reset_var * np.eye(3)

    def _predict_inplace(self, u: np.ndarray, q_diag: np.ndarray) -> None:
        """In-place equivalent of predict() exploiting the sparsity of F."""
        x, P = self.state.x, self.state.P
        dt = self.dt
        x[0:3] += dt * x[3:6]
        x[6:9] += dt * x[9:12]
        x[3:6] += dt * u
        P[0:3, :] += dt * P[3:6, :]
        P[6:9, :] += dt * P[9:12, :]
        P[:, 0:3] += dt * P[:, 3:6]
        P[:, 6:9] += dt * P[:, 9:12]
        P[self._diag_nx] += q_diag
        if not (np.isfinite(x).all() and np.isfinite(P).all()):
            raise NonFiniteError("non-finite state after prediction")

    def _correct_inplace(self, z: np.ndarray, r_diag: np.ndarray) -> None:
        """In-place equivalent of correct() exploiting the sparsity of H."""
        x, P = self.state.x, self.state.P
        PHt = np.empty((NX, NZ))
        A = P[:, 0:3] - P[:, 6:9]
        for i in range(4):
            PHt[:, 3 * i : 3 * i + 3] = A - P[:, 12 + 3 * i : 15 + 3 * i]
        PHt[:, 12:24].reshape(NX, 4, 3)[:] = (P[:, 3:6] - P[:, 9:12])[:, None, :]
        PHt[:, 24:36].reshape(NX, 4, 3)[:] = P[:, 9:12][:, None, :]
        S = np.empty((NZ, NZ))
        A2 = PHt[0:3] - PHt[6:9]
        for i in range(4):
            S[3 * i : 3 * i + 3] = A2 - PHt[12 + 3 * i : 15 + 3 * i]
        S[12:24].reshape(4, 3, NZ)[:] = (PHt[3:6] - PHt[9:12])[None]
        S[24:36].reshape(4, 3, NZ)[:] = PHt[9:12][None]
        S[self._diag_nz] += r_diag
        S[self._diag_nz] += 1e-12 * np.trace(S) / NZ
        y = np.empty(NZ)
        rel = x[0:3] - x[6:9]
        for i in range(4):
            y[3 * i : 3 * i + 3] = rel - x[12 + 3 * i : 15 + 3 * i]
        y[12:24].reshape(4, 3)[:] = x[3:6] - x[9:12]
        y[24:36].reshape(4, 3)[:] = x[9:12]
        np.subtract(z, y, out=y)
        try:
            cf = cho_factor(S, lower=True, check_finite=False)
            W = cho_solve(cf, PHt.T, check_finite=False)  # S^-1 H P
        except np.linalg.LinAlgError as exc:
            raise SingularInnovationError(str(exc)) from exc
        x += W.T @ y
        P -= PHt @ W
        P += P.T.copy()
        P *= 0.5
        if not (np.isfinite(x).all() and np.isfinite(P).all()):
            raise NonFiniteError("non-finite state after correction")

    def run_series(
        self,
        t: np.ndarray,
        u: np.ndarray,
        Z: np.ndarray,
        foot_z_rel: np.ndarray,
        flags: np.ndarray,
        log,
    ) -> None:
        """Advance the filter over a whole precomputed measurement series.

        Equivalent to calling step() once per frame; ``u`` is the
        gravity-compensated world acceleration per step and ``log`` any object
        with (N,·) arrays p, pdot, p_drive, pdot_drive, v_gait, trust, s_hat.
        Runtime failures are annotated with the failing timestep.
        """
        from .gait import contact_schedule_batch

        s_hat_sched, phi = contact_schedule_batch(self.gait, t)
        s_hat_all = np.where(flags, 0, s_hat_sched)
        c_phi_all = phase_trust(phi, s_hat_all, self.trust_params.W)
        tp = self.trust_params
        nz = self.noise
        dt = self.dt
        q_diag = np.empty(NX)
        q_diag[0:3] = nz.q_p * dt
        q_diag[3:6] = nz.q_pdot * dt
        q_diag[6:9] = nz.q_dp * dt
        q_diag[9:12] = nz.q_dpdot * dt
        r_diag = np.empty(NZ)
        ones12 = np.ones(12)
        for k in range(t.size):
            try:
                s_hat = s_hat_all[k]
                c_phi = c_phi_all[k]
                x = self.state.x
                fz = x[2] + foot_z_rel[k]
                w = s_hat * c_phi * self._cz_prev
                ws = w.sum()
                if ws > 1e-9:
                    self._ground_z = float(np.dot(w, fz) / ws)
                dz = fz - self._ground_z
                c_z = np.exp(-np.where(dz >= 0.0, tp.k_plus, tp.k_minus) * dz * dz)
                self._cz_prev = c_z
                if self.trust_enabled:
                    c = np.empty(12)
                    c[0::3] = c_phi
                    c[1::3] = c_phi
                    c[2::3] = c_phi * c_z
                    xi = 1.0 + tp.kappa * (1.0 - c)
                else:
                    xi = ones12
                if self._u_prev is not None:
                    q_diag[12:24] = nz.q_pcp * dt * xi
                    self._predict_inplace(self._u_prev, q_diag)
                self._u_prev = u[k]
                if self.trust_enabled and (s_hat > self._s_prev).any():
                    for i in range(4):
                        if s_hat[i] == 1 and self._s_prev[i] == 0:
                            self._reset_anchor(i, Z[k])
                self._s_prev = s_hat
                r_diag[0:12] = nz.r_pcp * xi
                r_diag[12:24] = nz.r_pdotk * xi
                r_diag[24:36] = nz.r_pdotw * xi
                f12 = np.where(np.repeat(s_hat == 0, 3), 1e12, 1.0)
                r_diag[0:12] *= f12
                r_diag[12:24] *= f12
                r_diag[24:36] *= f12
                self._correct_inplace(Z[k], r_diag)
            except (ArithmeticError, np.linalg.LinAlgError) as exc:
                raise type(exc)(f"step {k} (t={t[k]:.4f} s): {exc}") from exc
            if self.collect_health:
                P = self.state.P
                self.health.append(
                    HealthRecord(
                        sym_err=float(np.abs(P - P.T).max()),
                        min_eig=float(np.linalg.eigvalsh(P).min()),
                    )
                )
            x = self.state.x
            log.p[k] = x[0:3]
            log.pdot[k] = x[3:6]
            log.p_drive[k] = x[6:9]
            log.pdot_drive[k] = x[9:12]
            log.v_gait[k] = x[3:6] - x[9:12]
            log.trust[k] = c_phi * c_z
            log.s_hat[k] = s_hat

    def step(self, frame: SensorFrame) -> Estimate:
        """Advance the filter by one sensor frame."""
        cs = contact_schedule(self.gait, frame.t)
        z, foot_z_rel, flags = _measurement_fast(
            self._ga, self._shoulders, frame, self.wheel_aware
        )
        cs = apply_limit_override(cs, flags)
        if frame.s_hat is not None:
            cs.s_hat = np.minimum(cs.s_hat, np.asarray(frame.s_hat, dtype=int))

        c_phi = phase_trust(cs.phi_c, cs.s_hat, self.trust_params.W)
        foot_z = self.state.x[2] + foot_z_rel
        w = cs.s_hat * c_phi * self._cz_prev
        if w.sum() > 1e-9:
            self._ground_z = float(np.dot(w, foot_z) / w.sum())
        c_z = height_trust(foot_z - self._ground_z, self.trust_params)
        self._cz_prev = c_z
        if self.trust_enabled:
            xi_diag = covariance_gain_diag(c_phi, c_z, self.trust_params.kappa)
        else:
            xi_diag = np.ones(12)

        # measurement z belongs to the current frame time, so the prediction
        # covers the previous interval and uses the IMU input sampled there
        if self._u_prev is not None:
            self._predict_inplace(
                self._u_prev, process_noise_diag(self.noise, self.dt, xi_diag)
            )
        self._u_prev = gravity_compensate(frame.accel, frame.R)
        # touchdown: the anchor state still refers to the previous foothold.
        # Part of the trust-based anchor management is re-seeding it from the
        # current kinematics (after the prediction, so body state and
        # measurement refer to the same instant) instead of letting the update
        # drag the body estimate toward the stale anchor.  With trust disabled
        # the anchors keep their small constant process noise, which is the
        # prior behavior the height-invariance comparison is made against.
        if self.trust_enabled:
            for i in range(4):
                if cs.s_hat[i] == 1 and self._s_prev[i] == 0:
                    self._reset_anchor(i, z)
        self._s_prev = cs.s_hat.copy()
        # legs the schedule expects to swing have no valid contact model:
        # exclude their measurement rows entirely (the trust gain only grades
        # the touchdown/liftoff windows and the contact height)
        r_diag = measurement_noise_diag(self.noise, xi_diag)
        swing = np.repeat(cs.s_hat == 0, 3)
        r_diag[np.tile(swing, 3)] *= 1e12
        self._correct_inplace(z, r_diag)

        if self.collect_health:
            P = self.state.P
            self.health.append(
                HealthRecord(
                    sym_err=float(np.abs(P - P.T).max()),
                    min_eig=float(np.linalg.eigvalsh(P).min()),
                )
            )

        x = self.state.x
        return Estimate(
            t=frame.t,
            p=x[0:3].copy(),
            pdot=x[3:6].copy(),
            p_drive=x[6:9].copy(),
            pdot_drive=x[9:12].copy(),
            v_gait=x[3:6] - x[9:12],
            p_contact=x[12:24].reshape(4, 3).copy(),
            trust=np.asarray(c_phi * c_z),
            s_hat=cs.s_hat.copy(),
            R=np.asarray(frame.R, dtype=float).copy(),
        )
