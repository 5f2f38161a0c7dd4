"""Wheel-aware leg kinematics for a 4-DoF quadruped leg.

Each leg is an ab/ad roll joint (q1), hip pitch (q2), knee pitch (q3) and a
wheel spin joint (q4), terminated by a torus-shaped wheel of outer radius
``a_end`` and tube radius ``b_end``.  The ground contact point is the lowest
point of the wheel, offset from the wheel center by the end-effector geometry.

Conventions used project-wide:
  - body frame: +x forward, +y left, +z up; leg frames are attached at the
    shoulder (ab/ad axis) of each leg.
  - the nominal (mirror=+1) chain extends toward +y; mirror=-1 selects the
    reflected chain for the opposite side.
  - positive wheel spin q4 rolls the robot toward +x for every leg.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

LEG_NAMES = ("FR", "FL", "RR", "RL")  # fixed leg index order, project-wide

# fraction of full planar extension L2+L3 beyond which a leg counts as
# near-singular (knee soft-stop)
DEFAULT_SINGULARITY_FRACTION = 0.97


class UnreachableError(ValueError):
    """Inverse kinematics target lies outside the leg workspace."""


class NearSingularError(ValueError):
    """Inverse kinematics target requires a nearly stretched leg."""


@dataclass(frozen=True)
class LegGeometry:
    """Link lengths and wheel radii of one leg.

    ``mirror`` is +1 for the nominal (left) chain and -1 for the reflected
    (right) chain.  ``b_end = 0`` degenerates the wheel to a ball of radius
    ``a_end``; ``a_end = b_end = 0`` degenerates to a point foot at the chain
    tip (used by the baseline estimator mode).
    """

    L1: float = 0.062
    L2: float = 0.209
    L3: float = 0.19
    a_end: float = 0.05
    b_end: float = 0.02
    mirror: int = 1

    def __post_init__(self) -> None:
        if self.L1 <= 0 or self.L2 <= 0 or self.L3 <= 0:
            raise ValueError("link lengths must be positive")
        if self.a_end < 0 or self.b_end < 0 or self.b_end > self.a_end:
            raise ValueError("wheel radii must satisfy 0 <= b_end <= a_end")
        if self.mirror not in (-1, 1):
            raise ValueError("mirror must be +1 or -1")

    @property
    def r(self) -> float:
        """Length of the last (end-effector) link, a_end - b_end."""
        return self.a_end - self.b_end

    def point_contact(self) -> "LegGeometry":
        """Degenerate copy with the contact at the chain tip (wheel center)."""
        return replace(self, a_end=0.0, b_end=0.0)


@dataclass
class LegJointState:
    """Joint positions and velocities (q1 ab/ad, q2 hip, q3 knee, q4 wheel)."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self) -> None:
        self.q = np.asarray(self.q, dtype=float).reshape(4)
        self.qdot = np.asarray(self.qdot, dtype=float).reshape(4)
        if not (np.isfinite(self.q).all() and np.isfinite(self.qdot).all()):
            raise ValueError("joint state must be finite")


@dataclass
class BaseAttitude:
    """Base orientation (body->world), Euler angles and angular rates.

    Euler convention is Z-Y-X (yaw-pitch-roll); ``omega`` is the body-frame
    angular velocity.
    """

    R: np.ndarray
    phi: float = 0.0
    theta: float = 0.0
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    phidot: float = 0.0
    thetadot: float = 0.0

    def __post_init__(self) -> None:
        self.R = np.asarray(self.R, dtype=float).reshape(3, 3)
        self.omega = np.asarray(self.omega, dtype=float).reshape(3)

    @classmethod
    def level(cls) -> "BaseAttitude":
        return cls(R=np.eye(3))


@dataclass
class ContactKinematics:
    """Contact point position, velocity decomposition and leg Jacobian."""

    p_cp: np.ndarray          # body-attached leg frame [m]
    pdot_cp_k: np.ndarray     # kinematic contribution, world frame [m/s]
    pdot_cp_w: np.ndarray     # wheel/driving contribution, world frame [m/s]
    pdot_cp: np.ndarray       # sum of the two [m/s]
    r_eff: float
    J: np.ndarray             # 3x4 leg Jacobian, body frame


def rot_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(pitch: float) -> np.ndarray:
    c, s = math.cos(pitch), math.sin(pitch)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_x(roll: float) -> np.ndarray:
    c, s = math.cos(roll), math.sin(roll)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_zyx(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Body->world rotation for Z-Y-X (yaw-pitch-roll) Euler angles."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def euler_zyx_from_rot(R: np.ndarray) -> tuple[float, float, float]:
    """(yaw, pitch, roll) extracted under the Z-Y-X convention."""
    pitch = math.atan2(-R[2, 0], math.hypot(R[2, 1], R[2, 2]))
    yaw = math.atan2(R[1, 0], R[0, 0])
    roll = math.atan2(R[2, 1], R[2, 2])
    return yaw, pitch, roll


def euler_rates_zyx(phi: float, theta: float, omega_body: np.ndarray) -> tuple[float, float]:
    """Roll and pitch rates (phidot, thetadot) from body angular velocity."""
    wx, wy, wz = omega_body
    sphi, cphi = math.sin(phi), math.cos(phi)
    ttheta = math.tan(theta)
    phidot = wx + sphi * ttheta * wy + cphi * ttheta * wz
    thetadot = cphi * wy - sphi * wz
    return phidot, thetadot


def contact_position(geom: LegGeometry, q: LegJointState | np.ndarray) -> np.ndarray:
    """Contact point in the leg's body-attached frame, end effector included."""
    qa = q.q if isinstance(q, LegJointState) else np.asarray(q, dtype=float)
    m = geom.mirror
    q1 = m * qa[0]
    s1, c1 = math.sin(q1), math.cos(q1)
    s2, c2 = math.sin(qa[1]), math.cos(qa[1])
    s23, c23 = math.sin(qa[1] + qa[2]), math.cos(qa[1] + qa[2])
    a = geom.L3 * c23 + geom.L2 * c2 + geom.r
    x = geom.L3 * s23 + geom.L2 * s2
    y = geom.L1 * c1 + a * s1
    z = geom.L1 * s1 - a * c1 - geom.b_end
    return np.array([x, m * y, z])


def leg_jacobian(geom: LegGeometry, q: LegJointState | np.ndarray) -> np.ndarray:
    """3x4 Jacobian of contact_position w.r.t. (q1..q4); column 4 is zero."""
    qa = q.q if isinstance(q, LegJointState) else np.asarray(q, dtype=float)
    m = geom.mirror
    q1 = m * qa[0]
    s1, c1 = math.sin(q1), math.cos(q1)
    s2, c2 = math.sin(qa[1]), math.cos(qa[1])
    s23, c23 = math.sin(qa[1] + qa[2]), math.cos(qa[1] + qa[2])
    a = geom.L3 * c23 + geom.L2 * c2 + geom.r
    d2 = geom.L3 * s23 + geom.L2 * s2
    J = np.zeros((3, 4))
    # nominal-chain columns; includes the end-effector terms (r inside a)
    J[:, 0] = (0.0, -geom.L1 * s1 + a * c1, geom.L1 * c1 + a * s1)
    J[:, 1] = (geom.L3 * c23 + geom.L2 * c2, -s1 * d2, c1 * d2)
    J[:, 2] = (geom.L3 * c23, -s1 * geom.L3 * s23, c1 * geom.L3 * s23)
    # mirror: reflect the y row and the q1 input axis
    J[1, :] *= m
    J[:, 0] *= m
    return J


def effective_radius(geom: LegGeometry, q1: float, phi: float) -> float:
    """Lever arm between wheel axle and contact point (mirror-aware)."""
    return geom.a_end - geom.b_end * math.sin(geom.mirror * (q1 + phi))


def wheel_contact_velocity(
    geom: LegGeometry, q: LegJointState, att: BaseAttitude
) -> np.ndarray:
    """Driving contribution of the end effector to the contact velocity.

    Rolling direction is body +x; the local vector is rotated into the world
    frame with the base orientation.
    """
    r_eff = effective_radius(geom, q.q[0], att.phi)
    c1 = math.cos(q.q[0])
    vx = (att.thetadot * c1 + q.qdot[1] + q.qdot[2] + q.qdot[3]) * r_eff
    vy = (att.phidot + q.qdot[0]) * geom.b_end
    return att.R @ np.array([vx, vy, 0.0])


def contact_velocity(
    geom: LegGeometry, q: LegJointState, att: BaseAttitude
) -> ContactKinematics:
    """Full contact kinematics: position, Jacobian and velocity decomposition.

    ``pdot_cp_k = R J qdot + omega_w x (R p_cp)`` is the world-frame velocity
    of the geometric contact point relative to the (translating) body;
    ``pdot_cp_w`` is the rolling contribution of the wheel surface.
    """
    p_cp = contact_position(geom, q)
    J = leg_jacobian(geom, q)
    omega_w = att.R @ att.omega
    pdot_k = att.R @ (J @ q.qdot) + np.cross(omega_w, att.R @ p_cp)
    pdot_w = wheel_contact_velocity(geom, q, att)
    return ContactKinematics(
        p_cp=p_cp,
        pdot_cp_k=pdot_k,
        pdot_cp_w=pdot_w,
        pdot_cp=pdot_k + pdot_w,
        r_eff=effective_radius(geom, q.q[0], att.phi),
        J=J,
    )


def planar_extension(geom: LegGeometry, q3: float) -> float:
    """Hip-to-wheel-center distance in the sagittal plane."""
    return math.sqrt(
        geom.L2 * geom.L2
        + geom.L3 * geom.L3
        + 2.0 * geom.L2 * geom.L3 * math.cos(q3)
    )


def is_near_singular(
    geom: LegGeometry,
    q: LegJointState | np.ndarray,
    fraction: float = DEFAULT_SINGULARITY_FRACTION,
) -> bool:
    """True when the knee is close to full extension (soft-stop region)."""
    qa = q.q if isinstance(q, LegJointState) else np.asarray(q, dtype=float)
    return planar_extension(geom, qa[2]) >= fraction * (geom.L2 + geom.L3)


def leg_ik(
    geom: LegGeometry,
    p_target: np.ndarray,
    knee_sign: int = -1,
    singularity_fraction: float = DEFAULT_SINGULARITY_FRACTION,
) -> LegJointState:
    """Closed-form inverse kinematics of contact_position.

    ``knee_sign`` selects the knee-bend branch (default knee-backward, q3<=0).
    Raises UnreachableError outside the workspace and NearSingularError inside
    the knee soft-stop region.
    """
    p = np.asarray(p_target, dtype=float).reshape(3)
    m = geom.mirror
    y, zp = m * p[1], p[2] + geom.b_end
    lat_sq = y * y + zp * zp
    a_sq = lat_sq - geom.L1 * geom.L1
    if a_sq < 0.0:
        raise UnreachableError("target inside the ab/ad offset cylinder")
    a = math.sqrt(a_sq)
    d = a - geom.r
    rho_sq = p[0] * p[0] + d * d
    c3 = (rho_sq - geom.L2 * geom.L2 - geom.L3 * geom.L3) / (2.0 * geom.L2 * geom.L3)
    if abs(c3) > 1.0:
        raise UnreachableError("target outside the reachable annulus")
    q3 = knee_sign * math.acos(c3)
    ext = math.sqrt(rho_sq)
    if ext >= singularity_fraction * (geom.L2 + geom.L3):
        raise NearSingularError("target requires a nearly stretched leg")
    s3 = math.sin(q3)
    q2 = math.atan2(p[0], d) - math.atan2(geom.L3 * s3, geom.L2 + geom.L3 * c3)
    c1 = (geom.L1 * y - a * zp) / lat_sq
    s1 = (geom.L1 * zp + a * y) / lat_sq
    q1 = m * math.atan2(s1, c1)
    return LegJointState(q=np.array([q1, q2, q3, 0.0]), qdot=np.zeros(4))


# ---------------------------------------------------------------------------
# batched variants used by the synthetic oracle (operate on (N, ...) arrays)

def contact_position_batch(geom: LegGeometry, q: np.ndarray) -> np.ndarray:
    """contact_position over an (N, >=3) array of joint vectors -> (N, 3)."""
    m = geom.mirror
    q1 = m * q[:, 0]
    s1, c1 = np.sin(q1), np.cos(q1)
    s2, c2 = np.sin(q[:, 1]), np.cos(q[:, 1])
    s23, c23 = np.sin(q[:, 1] + q[:, 2]), np.cos(q[:, 1] + q[:, 2])
    a = geom.L3 * c23 + geom.L2 * c2 + geom.r
    out = np.empty((q.shape[0], 3))
    out[:, 0] = geom.L3 * s23 + geom.L2 * s2
    out[:, 1] = m * (geom.L1 * c1 + a * s1)
    out[:, 2] = geom.L1 * s1 - a * c1 - geom.b_end
    return out


def leg_jacobian_batch(geom: LegGeometry, q: np.ndarray) -> np.ndarray:
    """First three Jacobian columns over an (N, >=3) array -> (N, 3, 3)."""
    m = geom.mirror
    q1 = m * q[:, 0]
    s1, c1 = np.sin(q1), np.cos(q1)
    s2, c2 = np.sin(q[:, 1]), np.cos(q[:, 1])
    s23, c23 = np.sin(q[:, 1] + q[:, 2]), np.cos(q[:, 1] + q[:, 2])
    a = geom.L3 * c23 + geom.L2 * c2 + geom.r
    d2 = geom.L3 * s23 + geom.L2 * s2
    n = q.shape[0]
    J = np.zeros((n, 3, 3))
    J[:, 1, 0] = -geom.L1 * s1 + a * c1
    J[:, 2, 0] = geom.L1 * c1 + a * s1
    J[:, 0, 1] = geom.L3 * c23 + geom.L2 * c2
    J[:, 1, 1] = -s1 * d2
    J[:, 2, 1] = c1 * d2
    J[:, 0, 2] = geom.L3 * c23
    J[:, 1, 2] = -s1 * geom.L3 * s23
    J[:, 2, 2] = c1 * geom.L3 * s23
    J[:, 1, :] *= m
    J[:, :, 0] *= m
    return J


def leg_ik_batch(
    geom: LegGeometry,
    targets: np.ndarray,
    knee_sign: int = -1,
    singularity_fraction: float = DEFAULT_SINGULARITY_FRACTION,
) -> np.ndarray:
    """Vectorized leg_ik over (N, 3) targets -> (N, 3) joint angles q1..q3.

    Raises UnreachableError / NearSingularError if any sample fails.
    """
    p = np.asarray(targets, dtype=float).reshape(-1, 3)
    m = geom.mirror
    y, zp = m * p[:, 1], p[:, 2] + geom.b_end
    lat_sq = y * y + zp * zp
    a_sq = lat_sq - geom.L1 * geom.L1
    if np.any(a_sq < 0.0):
        raise UnreachableError("target inside the ab/ad offset cylinder")
    a = np.sqrt(a_sq)
    d = a - geom.r
    rho_sq = p[:, 0] * p[:, 0] + d * d
    c3 = (rho_sq - geom.L2 * geom.L2 - geom.L3 * geom.L3) / (2.0 * geom.L2 * geom.L3)
    if np.any(np.abs(c3) > 1.0):
        raise UnreachableError("target outside the reachable annulus")
    if np.any(np.sqrt(rho_sq) >= singularity_fraction * (geom.L2 + geom.L3)):
        raise NearSingularError("target requires a nearly stretched leg")
    q3 = knee_sign * np.arccos(c3)
    s3 = np.sin(q3)
    q2 = np.arctan2(p[:, 0], d) - np.arctan2(geom.L3 * s3, geom.L2 + geom.L3 * c3)
    c1 = (geom.L1 * y - a * zp) / lat_sq
    s1 = (geom.L1 * zp + a * y) / lat_sq
    q1 = m * np.arctan2(s1, c1)
    return np.stack([q1, q2, q3], axis=1)


@dataclass(frozen=True)
class RobotModel:
    """Four legs plus their shoulder mount points in the body frame."""

    legs: tuple[LegGeometry, LegGeometry, LegGeometry, LegGeometry]
    shoulders: np.ndarray  # (4, 3) body-frame shoulder positions
    singularity_fraction: float = DEFAULT_SINGULARITY_FRACTION
    knee_sign: int = -1

    @classmethod
    def default(
        cls,
        geometry: LegGeometry | None = None,
        half_length: float = 0.19,
        half_width: float = 0.049,
        **kwargs,
    ) -> "RobotModel":
        """Standard model: FR=0, FL=1, RR=2, RL=3; right legs mirrored."""
        base = geometry if geometry is not None else LegGeometry()
        legs = (
            replace(base, mirror=-1),  # FR
            replace(base, mirror=1),   # FL
            replace(base, mirror=-1),  # RR
            replace(base, mirror=1),   # RL
        )
        shoulders = np.array(
            [
                [half_length, -half_width, 0.0],
                [half_length, half_width, 0.0],
                [-half_length, -half_width, 0.0],
                [-half_length, half_width, 0.0],
            ]
        )
        return cls(legs=legs, shoulders=shoulders, **kwargs)

    def point_foot(self) -> "RobotModel":
        """Baseline variant: contact points at the chain tips (wheel centers)."""
        return replace(self, legs=tuple(g.point_contact() for g in self.legs))

    def neutral_foot_offsets(self) -> np.ndarray:
        """(4, 2) body-frame xy of each foot directly below its ab/ad link."""
        out = np.empty((4, 2))
        for i, g in enumerate(self.legs):
            out[i] = self.shoulders[i, 0], self.shoulders[i, 1] + g.mirror * g.L1
        return out
