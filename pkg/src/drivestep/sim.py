"""Synthetic kinematic oracle for hybrid driving-stepping scenarios.

Generates ground-truth body and foot trajectories consistent with a gait
schedule, terrain plateaus and no-slip rolling contacts, then synthesizes
sensor streams (IMU, joint and wheel encoders) for the estimator.

The oracle is purely kinematic: body truth integrates the commanded
velocities, stance feet roll forward at the drive velocity, swing feet follow
smooth interpolants, and joint streams come from closed-form IK.  Identical
scenarios (including the seed) produce bit-identical streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimator import Estimate, SensorFrame, StateEstimator
from .gait import GaitSchedule, contact_schedule_batch
from .kinematics import (
    NearSingularError,
    RobotModel,
    UnreachableError,
    contact_position_batch,
    leg_ik_batch,
    leg_jacobian_batch,
)

GRAVITY = 9.81


class IkFailureError(RuntimeError):
    """Commanded motion drives a foot out of the workspace."""


class LengthMismatchError(ValueError):
    """Truth and estimate series do not share timestamps."""


@dataclass(frozen=True)
class Terrain:
    """Axis-aligned plateaus (x_start, x_end, height) on otherwise flat ground."""

    steps: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self) -> None:
        spans = sorted((s[0], s[1]) for s in self.steps)
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            if b0 < a1:
                raise ValueError("terrain steps must not overlap")
        for x0, x1, h in self.steps:
            if x1 <= x0 or not math.isfinite(h):
                raise ValueError("invalid terrain step")

    def height_at(self, x: float, y: float = 0.0) -> float:
        for x0, x1, h in self.steps:
            if x0 <= x < x1:
                return h
        return 0.0


@dataclass(frozen=True)
class SlipEvent:
    """Extra foot velocity injected during stance of one leg."""

    t_start: float
    t_end: float
    leg: int
    velocity: tuple[float, float, float]


@dataclass(frozen=True)
class NoiseSpec:
    """Sensor noise levels; all zero by default (perfect sensors)."""

    sigma_accel: float = 0.0
    sigma_gyro: float = 0.0
    sigma_joint_pos: float = 0.0
    sigma_joint_vel: float = 0.0
    wheel_encoder_ppr: float | None = None  # None disables quantization
    slip_events: tuple[SlipEvent, ...] = ()

    def __post_init__(self) -> None:
        if min(self.sigma_accel, self.sigma_gyro, self.sigma_joint_pos, self.sigma_joint_vel) < 0:
            raise ValueError("noise sigmas must be non-negative")
        if self.wheel_encoder_ppr is not None and self.wheel_encoder_ppr <= 0:
            raise ValueError("wheel_encoder_ppr must be positive")


@dataclass(frozen=True)
class Scenario:
    """Full description of one synthetic run."""

    duration: float = 10.0
    dt: float = 1e-3
    gait: GaitSchedule = field(default_factory=GaitSchedule.stand)
    # piecewise-constant profiles: list of (t_start, value); heading frame
    v_drive: tuple = ((0.0, (0.0, 0.0, 0.0)),)
    v_step: tuple = ((0.0, (0.0, 0.0, 0.0)),)
    yaw_rate: tuple = ((0.0, 0.0),)
    terrain: Terrain = field(default_factory=Terrain)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    body_height: float = 0.30
    swing_height: float = 0.05

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.duration < self.dt:
            raise ValueError("require dt > 0 and duration >= dt")
        if self.body_height <= 0:
            raise ValueError("body_height must be positive")


@dataclass
class TruthStream:
    """Ground-truth trajectory arrays (struct of arrays)."""

    t: np.ndarray
    p: np.ndarray            # (N, 3)
    pdot: np.ndarray
    p_drive: np.ndarray
    pdot_drive: np.ndarray
    R: np.ndarray            # (N, 3, 3)
    foot_pos: np.ndarray     # (N, 4, 3) world contact positions
    contact: np.ndarray      # (N, 4)

    def __len__(self) -> int:
        return self.t.size


@dataclass
class SensorStream:
    """Sensor arrays matching the truth timestamps."""

    t: np.ndarray
    accel: np.ndarray        # (N, 3) body-frame specific force
    omega: np.ndarray        # (N, 3)
    R: np.ndarray            # (N, 3, 3) orientation (from the IMU hardware)
    q: np.ndarray            # (N, 4, 4)
    qdot: np.ndarray         # (N, 4, 4)
    s_hat: np.ndarray        # (N, 4)

    def __len__(self) -> int:
        return self.t.size

    def frame(self, k: int) -> SensorFrame:
        return SensorFrame(
            t=float(self.t[k]),
            accel=self.accel[k],
            omega=self.omega[k],
            R=self.R[k],
            q=self.q[k],
            qdot=self.qdot[k],
        )


def _eval_profile(profile, t: np.ndarray, dim: int) -> np.ndarray:
    """Piecewise-constant profile evaluated on the time grid."""
    entries = sorted(profile, key=lambda e: e[0])
    starts = np.array([e[0] for e in entries])
    values = np.array([np.atleast_1d(np.asarray(e[1], dtype=float)) for e in entries])
    if values.shape[1] != dim:
        raise ValueError(f"profile values must have dimension {dim}")
    idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(entries) - 1)
    return values[idx]


def _interp_state(t: float, t0: float, dt: float, series: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """Piecewise-linear lookup of an Euler-integrated series, with extrapolation."""
    n = series.shape[0]
    k = int(math.floor((t - t0) / dt))
    k = max(0, min(n - 1, k))
    return series[k] + (t - (t0 + k * dt)) * rates[k]


def generate(s: Scenario, model: RobotModel | None = None) -> tuple[TruthStream, SensorStream]:
    """Generate truth and sensor streams for a scenario."""
    if model is None:
        model = RobotModel.default()
    n = int(round(s.duration / s.dt))
    dt = s.dt
    t = np.arange(n) * dt

    vd_h = _eval_profile(s.v_drive, t, 3)
    vs_h = _eval_profile(s.v_step, t, 3)
    if np.any(vd_h[:, 1:] != 0.0):
        raise ValueError("v_drive must act along the rolling (x) direction")
    psidot = _eval_profile(s.yaw_rate, t, 1)[:, 0]

    psi = np.concatenate(([0.0], np.cumsum(psidot[:-1]) * dt))
    cps, sps = np.cos(psi), np.sin(psi)
    R = np.zeros((n, 3, 3))
    R[:, 0, 0], R[:, 0, 1] = cps, -sps
    R[:, 1, 0], R[:, 1, 1] = sps, cps
    R[:, 2, 2] = 1.0

    vd_w = np.einsum("nij,nj->ni", R, vd_h)
    vs_w = np.einsum("nij,nj->ni", R, vs_h)
    pdot = vd_w + vs_w
    p = np.empty((n, 3))
    p[0] = (0.0, 0.0, s.body_height)
    np.cumsum(pdot[:-1] * dt, axis=0, out=p[1:])
    p[1:] += p[0]
    p_drive = np.zeros((n, 3))
    np.cumsum(vd_w[:-1] * dt, axis=0, out=p_drive[1:])
    omega = np.zeros((n, 3))
    omega[:, 2] = psidot

    s_hat, _phi = contact_schedule_batch(s.gait, t)

    cum_drive = np.zeros((n, 3))
    np.cumsum(vd_w[:-1] * dt, axis=0, out=cum_drive[1:])

    def body_xy_at(tq: float) -> np.ndarray:
        return _interp_state(tq, 0.0, dt, p, pdot)[:2]

    def psi_at(tq: float) -> float:
        return float(_interp_state(tq, 0.0, dt, psi[:, None], psidot[:, None])[0])

    def cumdrive_at(tq: float) -> np.ndarray:
        return _interp_state(tq, 0.0, dt, cum_drive, vd_w)

    def vstep_at(tq: float) -> np.ndarray:
        k = max(0, min(n - 1, int(math.floor(tq / dt))))
        return vs_w[k]

    neutral = model.neutral_foot_offsets()
    foot_pos = np.empty((n, 4, 3))
    foot_vel = np.empty((n, 4, 3))

    # per-leg slip velocity on the grid
    slip_v = np.zeros((n, 4, 3))
    for ev in s.noise.slip_events:
        k0 = max(0, int(math.ceil(ev.t_start / dt)))
        k1 = min(n, int(math.ceil(ev.t_end / dt)))
        slip_v[k0:k1, ev.leg] += np.asarray(ev.velocity, dtype=float)
    cum_slip = np.zeros((n, 4, 3))
    np.cumsum(slip_v[:-1] * dt, axis=0, out=cum_slip[1:])

    gait = s.gait
    T = gait.period
    t_st = gait.t_stance

    for leg in range(4):
        off = gait.offsets[leg]
        if gait.duty >= 1.0 or gait.name == "stand":
            stance_starts = [-T]
        else:
            n_lo = int(math.floor(off)) - 2
            n_hi = int(math.ceil(s.duration / T + off)) + 1
            stance_starts = [(m - off) * T for m in range(n_lo, n_hi + 1)]

        def touchdown(tq: float) -> np.ndarray:
            c, sn = math.cos(psi_at(tq)), math.sin(psi_at(tq))
            nx, ny = neutral[leg]
            xy = body_xy_at(tq) + np.array([c * nx - sn * ny, sn * nx + c * ny])
            xy = xy + 0.5 * t_st * vstep_at(tq)[:2]
            z = s.terrain.height_at(xy[0], xy[1])
            return np.array([xy[0], xy[1], z])

        def fill_stance(t_c: float, t_e: float, td: np.ndarray) -> np.ndarray:
            k0 = max(0, int(math.ceil(t_c / dt - 1e-9)))
            k1 = min(n, int(math.ceil(t_e / dt - 1e-9)))
            base = cumdrive_at(t_c) + _interp_state(t_c, 0.0, dt, cum_slip[:, leg], slip_v[:, leg])
            if k1 > k0:
                drift = (
                    cum_drive[k0:k1]
                    + cum_slip[k0:k1, leg]
                    - base
                )
                foot_pos[k0:k1, leg, :2] = td[None, :2] + drift[:, :2]
                foot_pos[k0:k1, leg, 2] = td[2] + drift[:, 2]
                foot_vel[k0:k1, leg] = vd_w[k0:k1] + slip_v[k0:k1, leg]
                foot_vel[k0:k1, leg, 2] = slip_v[k0:k1, leg, 2]
            end_drift = cumdrive_at(t_e) + _interp_state(t_e, 0.0, dt, cum_slip[:, leg], slip_v[:, leg]) - base
            lift = td + end_drift
            return lift

        def fill_swing(t_lo: float, t_td: float, lift: np.ndarray, td: np.ndarray) -> None:
            k0 = max(0, int(math.ceil(t_lo / dt - 1e-9)))
            k1 = min(n, int(math.ceil(t_td / dt - 1e-9)))
            if k1 <= k0:
                return
            t_sw = t_td - t_lo
            tau = (t[k0:k1] - t_lo) / t_sw
            blend = 0.5 * (1.0 - np.cos(np.pi * tau))
            dblend = 0.5 * np.pi * np.sin(np.pi * tau) / t_sw
            delta = td - lift
            foot_pos[k0:k1, leg] = lift[None, :] + delta[None, :] * blend[:, None]
            foot_vel[k0:k1, leg] = delta[None, :] * dblend[:, None]
            foot_pos[k0:k1, leg, 2] += s.swing_height * np.sin(np.pi * tau)
            foot_vel[k0:k1, leg, 2] += s.swing_height * np.pi * np.cos(np.pi * tau) / t_sw

        prev_end: float | None = None
        prev_lift: np.ndarray | None = None
        for t_c in stance_starts:
            t_e = t_c + t_st if gait.duty < 1.0 else s.duration + dt
            if t_e <= -T:
                continue
            td = touchdown(t_c)
            if prev_end is not None and t_c > prev_end:
                fill_swing(prev_end, t_c, prev_lift, td)
            prev_lift = fill_stance(t_c, t_e, td)
            prev_end = t_e
            if t_c >= s.duration:
                break

    # joint streams from closed-form IK; drive the wheel so the contact rolls
    # at the commanded drive velocity (no slip)
    q = np.zeros((n, 4, 4))
    qdot = np.zeros((n, 4, 4))
    for leg in range(4):
        geom = model.legs[leg]
        rel = np.einsum("nji,nj->ni", R, foot_pos[:, leg] - p) - model.shoulders[leg]
        try:
            q123 = leg_ik_batch(geom, rel, model.knee_sign, model.singularity_fraction)
        except (UnreachableError, NearSingularError) as exc:
            raise IkFailureError(f"leg {leg}: {exc}") from exc
        q[:, leg, :3] = q123
        p_cp = contact_position_batch(geom, q123)
        p_cp_body = p_cp + model.shoulders[leg]
        rhs = (
            np.einsum("nji,nj->ni", R, foot_vel[:, leg] - pdot)
            - np.cross(omega, p_cp_body)
        )
        J = leg_jacobian_batch(geom, q123)
        qdot[:, leg, :3] = np.linalg.solve(J, rhs[:, :, None])[:, :, 0]
        r_eff = geom.a_end - geom.b_end * np.sin(geom.mirror * q123[:, 0])
        qdot[:, leg, 3] = vd_h[:, 0] / r_eff - qdot[:, leg, 1] - qdot[:, leg, 2]
        q[1:, leg, 3] = np.cumsum(qdot[:-1, leg, 3]) * dt

    # IMU: discrete acceleration so that integrating it reproduces pdot exactly
    a_true = np.zeros((n, 3))
    a_true[:-1] = (pdot[1:] - pdot[:-1]) / dt
    a_true[:, 2] += GRAVITY
    accel = np.einsum("nji,nj->ni", R, a_true)

    rng = np.random.default_rng(s.seed)
    ns = s.noise
    if ns.sigma_accel > 0:
        accel = accel + rng.normal(0.0, ns.sigma_accel, accel.shape)
    omega_meas = omega.copy()
    if ns.sigma_gyro > 0:
        omega_meas += rng.normal(0.0, ns.sigma_gyro, omega_meas.shape)
    q_meas = q.copy()
    if ns.sigma_joint_pos > 0:
        q_meas += rng.normal(0.0, ns.sigma_joint_pos, q_meas.shape)
    qdot_meas = qdot.copy()
    if ns.sigma_joint_vel > 0:
        qdot_meas += rng.normal(0.0, ns.sigma_joint_vel, qdot_meas.shape)
    if ns.wheel_encoder_ppr:
        step = 2.0 * np.pi / ns.wheel_encoder_ppr
        qdot_meas[:, :, 3] = np.round(qdot_meas[:, :, 3] / step) * step

    truth = TruthStream(
        t=t, p=p, pdot=pdot, p_drive=p_drive, pdot_drive=vd_w, R=R,
        foot_pos=foot_pos, contact=s_hat.copy(),
    )
    sensors = SensorStream(
        t=t, accel=accel, omega=omega_meas, R=R.copy(), q=q_meas,
        qdot=qdot_meas, s_hat=s_hat,
    )
    return truth, sensors


@dataclass
class EstimateLog:
    """Estimator outputs stacked over a run."""

    t: np.ndarray
    p: np.ndarray
    pdot: np.ndarray
    p_drive: np.ndarray
    pdot_drive: np.ndarray
    v_gait: np.ndarray
    trust: np.ndarray       # (N, 4)
    s_hat: np.ndarray       # (N, 4)

    def __len__(self) -> int:
        return self.t.size


def run_estimator(est: StateEstimator, sensors: SensorStream) -> EstimateLog:
    """Feed a sensor stream through the estimator and stack the outputs.

    Uses the batched filter driver: measurements are precomputed for the whole
    stream, which is equivalent to stepping frame by frame but much faster.
    """
    from .estimator import GRAVITY as _G
    from .estimator import measurement_series

    n = len(sensors)
    log = EstimateLog(
        t=sensors.t.copy(),
        p=np.empty((n, 3)),
        pdot=np.empty((n, 3)),
        p_drive=np.empty((n, 3)),
        pdot_drive=np.empty((n, 3)),
        v_gait=np.empty((n, 3)),
        trust=np.empty((n, 4)),
        s_hat=np.empty((n, 4), dtype=int),
    )
    Z, foot_z_rel, flags = measurement_series(
        est.model, sensors.R, sensors.q, sensors.qdot, sensors.omega,
        est.wheel_aware,
    )
    u = np.einsum("nij,nj->ni", sensors.R, sensors.accel)
    u[:, 2] -= _G
    est.run_series(sensors.t, u, Z, foot_z_rel, flags, log)
    return log


def estimator_for_scenario(
    s: Scenario,
    truth: TruthStream,
    sensors: SensorStream,
    model: RobotModel | None = None,
    wheel_aware: bool = True,
    trust_enabled: bool = True,
    trust_params=None,
    noise_params=None,
    collect_health: bool = False,
) -> StateEstimator:
    """Estimator initialized at the truth state with FK-seeded contacts."""
    if model is None:
        model = RobotModel.default()
    x0 = np.zeros(24)
    x0[0:3] = truth.p[0]
    x0[3:6] = truth.pdot[0]
    x0[9:12] = truth.pdot_drive[0]
    est = StateEstimator(
        model=model,
        gait=s.gait,
        trust_params=trust_params,
        noise=noise_params,
        dt=s.dt,
        wheel_aware=wheel_aware,
        trust_enabled=trust_enabled,
        x0=x0,
        collect_health=collect_health,
    )
    est.seed_contacts_from_frame(sensors.frame(0))
    return est


def metrics(truth: TruthStream, est: EstimateLog, skip: float = 0.0) -> dict[str, float]:
    """RMSE / max-abs error report between truth and estimate.

    ``skip`` excludes an initial convergence window (seconds) from the
    statistics.  Raises LengthMismatchError on misaligned series.
    """
    if len(truth) != len(est) or not np.array_equal(truth.t, est.t):
        raise LengthMismatchError("truth and estimate timestamps differ")
    k0 = int(np.searchsorted(truth.t, skip))
    if k0 >= len(truth):
        raise ValueError("skip window longer than the run")
    sl = slice(k0, None)

    def rmse(err: np.ndarray) -> np.ndarray:
        return np.sqrt(np.mean(err * err, axis=0))

    e_pos = est.p[sl] - truth.p[sl]
    e_vel = est.pdot[sl] - truth.pdot[sl]
    e_dvel = est.pdot_drive[sl] - truth.pdot_drive[sl]
    out: dict[str, float] = {}
    for name, err in (("pos", e_pos), ("vel", e_vel), ("drive_vel", e_dvel)):
        r = rmse(err)
        m = np.abs(err).max(axis=0)
        for i, ax in enumerate("xyz"):
            out[f"rmse_{name}_{ax}"] = float(r[i])
            out[f"max_{name}_{ax}"] = float(m[i])
    out["rmse_height"] = out["rmse_pos_z"]
    out["max_height"] = out["max_pos_z"]
    out["rmse_pos"] = float(np.sqrt(np.mean(np.sum(e_pos * e_pos, axis=1))))
    out["rmse_vel"] = float(np.sqrt(np.mean(np.sum(e_vel * e_vel, axis=1))))
    out["mean_trust"] = float(est.trust[sl].mean())
    out["n_steps"] = float(len(truth))
    out["skip"] = float(skip)
    return out
