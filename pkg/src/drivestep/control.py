"""Controller deltas for hybrid driving-stepping: drive-discounted footstep
targeting and wheel torque/velocity conversion.

Pure functions only; the surrounding MPC/WBC stack is out of scope.  Hardware
limits default to the wheel module figures: 2.1 Nm peak torque and 2150 rpm
(~225 rad/s), which at r_eff = 0.05 m corresponds to ~11.3 m/s (~40 km/h).
"""

from __future__ import annotations

import numpy as np

DEFAULT_TORQUE_LIMIT = 2.1     # N*m
DEFAULT_SPEED_LIMIT = 225.0    # rad/s (~2150 rpm)
GRAVITY = 9.81


def gait_velocity(pdot: np.ndarray, pdot_drive: np.ndarray) -> np.ndarray:
    """Body velocity without the contribution of driving."""
    return np.asarray(pdot, dtype=float) - np.asarray(pdot_drive, dtype=float)


def footstep_target(
    v_gait: np.ndarray,
    v_cmd: np.ndarray,
    t_stance: float,
    g_v: float,
    pdot: np.ndarray,
    omega: np.ndarray,
    h: float,
    g: float = GRAVITY,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Footstep target split into symmetry and centrifugal offsets.

    The symmetry term uses only the drive-discounted gait velocity; the
    centrifugal term uses the total body velocity.  Returns
    (p_target, p_symmetry, p_centrifugal).
    """
    if t_stance <= 0:
        raise ValueError("t_stance must be positive")
    if h <= 0:
        raise ValueError("body height must be positive")
    v_gait = np.asarray(v_gait, dtype=float)
    p_symmetry = 0.5 * t_stance * v_gait + g_v * (v_gait - np.asarray(v_cmd, dtype=float))
    p_centrifugal = (h / (2.0 * g)) * np.cross(
        np.asarray(pdot, dtype=float), np.asarray(omega, dtype=float)
    )
    return p_symmetry + p_centrifugal, p_symmetry, p_centrifugal


def corrective_velocity(k_p: float, p_error_filtered: np.ndarray) -> np.ndarray:
    """Corrective foot velocity along the rolling direction only."""
    e = np.asarray(p_error_filtered, dtype=float)
    return np.array([k_p * e[0], 0.0, 0.0])


def error_filter(prev: np.ndarray, raw: np.ndarray, alpha: float = 0.1) -> np.ndarray:
    """Exponential moving average of the foot position error."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    return alpha * np.asarray(raw, dtype=float) + (1.0 - alpha) * np.asarray(prev, dtype=float)


def wheel_torque(
    r_eff: float,
    R: np.ndarray,
    F: np.ndarray,
    tau_max: float = DEFAULT_TORQUE_LIMIT,
) -> float:
    """Feed-forward wheel torque from a world-frame reaction force.

    ``R`` maps world to body (rolling direction is body x); the result is
    clamped to the hardware torque limit.
    """
    if r_eff <= 0:
        raise ValueError("r_eff must be positive")
    tau = r_eff * float((np.asarray(R, dtype=float) @ np.asarray(F, dtype=float))[0])
    return float(np.clip(tau, -tau_max, tau_max))


def wheel_velocity(
    r_eff: float,
    R: np.ndarray,
    v_cmd: np.ndarray,
    v_corr: np.ndarray | None = None,
    qdot_max: float = DEFAULT_SPEED_LIMIT,
) -> float:
    """Wheel joint velocity tracking a world-frame commanded foot velocity."""
    if r_eff <= 0:
        raise ValueError("r_eff must be positive")
    v = np.asarray(v_cmd, dtype=float)
    if v_corr is not None:
        v = v + np.asarray(v_corr, dtype=float)
    qdot = float((np.asarray(R, dtype=float) @ v)[0]) / r_eff
    return float(np.clip(qdot, -qdot_max, qdot_max))
