"""Contact trust modeling: phase trust, height trust and covariance inflation.

Trust values are confidence weights in [0, 1].  Untrusted legs get their
process and measurement noise inflated by up to 1 + kappa, which effectively
removes them from the filter update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf


@dataclass(frozen=True)
class TrustParams:
    """Mistrust window W, height distrust gains k+/k- and inflation kappa."""

    W: float = 0.2
    k_plus: float = 400.0
    k_minus: float = 100.0
    kappa: float = 100.0

    def __post_init__(self) -> None:
        if not (0.0 < self.W <= 1.0):
            raise ValueError("W must lie in (0, 1]")
        if not (self.k_plus > self.k_minus >= 0.0):
            raise ValueError("gains must satisfy k_plus > k_minus >= 0")
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")


def phase_trust(phi_c, s_hat, W: float):
    """Erf-windowed trust over the stance phase, clamped to [0, 1].

    Zero for expected-swing legs; low inside the mistrust window of width ~W
    at both ends of the contact interval.  Accepts scalars or arrays.
    """
    phi_c = np.asarray(phi_c, dtype=float)
    s_hat = np.asarray(s_hat, dtype=float)
    c = 0.5 * s_hat * (erf(4.0 * phi_c / W - 2.0) + erf(4.0 * (1.0 - phi_c) / W - 2.0))
    return np.clip(c, 0.0, 1.0)


def height_trust(z_cp, p: TrustParams):
    """Asymmetric Gaussian decay of trust with contact height.

    ``z_cp`` is the contact height relative to the estimated ground plane;
    negative heights decay with the smaller gain k_minus, so lower surfaces
    stay more trustworthy than higher ones.  Accepts scalars or arrays.
    """
    z = np.asarray(z_cp, dtype=float)
    gain = np.where(z >= 0.0, p.k_plus, p.k_minus)
    return np.exp(-gain * z * z)


def trust_matrix(c_phi: float, c_z: float) -> np.ndarray:
    """Per-leg 3x3 trust: x/y scaled by C_phi, z by C_phi * C_z."""
    return float(c_phi) * np.diag([1.0, 1.0, float(c_z)])


def covariance_gain_diag(c_phi, c_z, kappa: float) -> np.ndarray:
    """Diagonal of the 12x12 noise covariance update gain.

    Entries are 1 for a fully trusted axis up to 1 + kappa for an untrusted
    one; ordering is (x, y, z) per leg for legs 0..3.
    """
    c_phi = np.asarray(c_phi, dtype=float).reshape(4)
    c_z = np.asarray(c_z, dtype=float).reshape(4)
    c = np.empty(12)
    c[0::3] = c_phi
    c[1::3] = c_phi
    c[2::3] = c_phi * c_z
    return 1.0 + kappa * (1.0 - c)


def covariance_gain(C: list[np.ndarray] | np.ndarray, kappa: float) -> np.ndarray:
    """12x12 noise covariance update gain from per-leg 3x3 trust matrices."""
    blocks = [np.asarray(c, dtype=float).reshape(3, 3) for c in C]
    if len(blocks) != 4:
        raise ValueError("expected four per-leg trust matrices")
    block = np.zeros((12, 12))
    for i, c in enumerate(blocks):
        block[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] = c
    return np.eye(12) + kappa * (np.eye(12) - block)
