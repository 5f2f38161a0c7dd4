"""Shared oracles for the test suite.

The forward-kinematics oracle below is built purely from homogeneous
transforms (4x4 matrix products of elementary rotations/translations), so it
shares no closed-form trigonometric expressions with the library code.
"""

import numpy as np

from drivestep.kinematics import LegGeometry


def _rx(a: float) -> np.ndarray:
    T = np.eye(4)
    c, s = np.cos(a), np.sin(a)
    T[1:3, 1:3] = [[c, -s], [s, c]]
    return T


def _ry(a: float) -> np.ndarray:
    T = np.eye(4)
    c, s = np.cos(a), np.sin(a)
    T[0, 0], T[0, 2], T[2, 0], T[2, 2] = c, s, -s, c
    return T


def _trans(x: float, y: float, z: float) -> np.ndarray:
    T = np.eye(4)
    T[:3, 3] = (x, y, z)
    return T


def fk_oracle(geom: LegGeometry, q) -> np.ndarray:
    """Contact position from an independent homogeneous-transform chain.

    Chain for the nominal (mirror=+1) leg: roll about x by q1, translate L1
    along +y, pitch about -y by q2, translate -L2 along z, pitch about -y by
    q3, translate -L3 along z, then step down by the end-effector link
    r = a_end - b_end (which rolls with q1) and finally by b_end straight
    down in the leg frame.  The mirrored leg is the nominal chain evaluated
    at a negated roll angle, reflected through the x-z plane.
    """
    q = np.asarray(q, dtype=float)
    m = geom.mirror
    T = (
        _rx(m * q[0])
        @ _trans(0.0, geom.L1, 0.0)
        @ _ry(-q[1])
        @ _trans(0.0, 0.0, -geom.L2)
        @ _ry(-q[2])
        @ _trans(0.0, 0.0, -geom.L3)
    )
    # the end-effector link of length r stays in the rolled leg plane (it
    # does not pitch with q2/q3), so it hangs from the roll frame only
    tip = T[:3, 3] + _rx(m * q[0])[:3, :3] @ np.array([0.0, 0.0, -geom.r])
    tip = tip + np.array([0.0, 0.0, -geom.b_end])
    if m == -1:
        tip = tip * np.array([1.0, -1.0, 1.0])
    return tip


def random_geometry(rng: np.random.Generator) -> LegGeometry:
    a_end = rng.uniform(0.02, 0.06)
    return LegGeometry(
        L1=rng.uniform(0.03, 0.1),
        L2=rng.uniform(0.15, 0.3),
        L3=rng.uniform(0.15, 0.3),
        a_end=a_end,
        b_end=rng.uniform(0.0, a_end),
        mirror=int(rng.choice([-1, 1])),
    )


def random_joints(rng: np.random.Generator, n: int) -> np.ndarray:
    """(n, 4) joint vectors well inside the workspace (knee-backward)."""
    q = np.empty((n, 4))
    q[:, 0] = rng.uniform(-0.5, 0.5, n)
    q[:, 1] = rng.uniform(-1.0, 1.0, n)
    q[:, 2] = rng.uniform(-2.4, -0.6, n)
    q[:, 3] = rng.uniform(-10.0, 10.0, n)
    return q
