"""Periodic phase-based contact scheduling for Trot, Walk, Pronk, Bound, Stand.

Leg index order is FR=0, FL=1, RR=2, RL=3 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

# float-dust tolerance for phase boundaries: a sample landing exactly on a
# touchdown instant counts as stance, one landing on a liftoff instant as
# swing, regardless of rounding in t / period
_EDGE = 1e-7


@dataclass(frozen=True)
class GaitSchedule:
    """Gait period, stance duty fraction and per-leg phase offsets."""

    name: str = "trot"
    period: float = 0.4
    duty: float = 0.5
    offsets: tuple[float, float, float, float] = (0.0, 0.5, 0.5, 0.0)

    def __post_init__(self) -> None:
        if self.period <= 0:
            raise ValueError("period must be positive")
        if not (0.0 < self.duty <= 1.0):
            raise ValueError("duty must lie in (0, 1]")
        if any(not (0.0 <= o < 1.0) for o in self.offsets):
            raise ValueError("offsets must lie in [0, 1)")

    @property
    def t_stance(self) -> float:
        return self.duty * self.period

    @classmethod
    def stand(cls, period: float = 0.4) -> "GaitSchedule":
        return cls(name="stand", period=period, duty=1.0, offsets=(0.0,) * 4)

    @classmethod
    def trot(cls, period: float = 0.4, duty: float = 0.5) -> "GaitSchedule":
        return cls(name="trot", period=period, duty=duty, offsets=(0.0, 0.5, 0.5, 0.0))

    @classmethod
    def walk(cls, period: float = 0.8, duty: float = 0.75) -> "GaitSchedule":
        return cls(name="walk", period=period, duty=duty, offsets=(0.0, 0.5, 0.25, 0.75))

    @classmethod
    def pronk(cls, period: float = 0.4, duty: float = 0.4) -> "GaitSchedule":
        return cls(name="pronk", period=period, duty=duty, offsets=(0.0,) * 4)

    @classmethod
    def bound(cls, period: float = 0.4, duty: float = 0.5) -> "GaitSchedule":
        return cls(name="bound", period=period, duty=duty, offsets=(0.0, 0.0, 0.5, 0.5))

    @classmethod
    def named(cls, name: str, **overrides) -> "GaitSchedule":
        try:
            preset = {
                "stand": cls.stand,
                "trot": cls.trot,
                "walk": cls.walk,
                "pronk": cls.pronk,
                "bound": cls.bound,
            }[name.lower()]
        except KeyError:
            raise ValueError(f"unknown gait {name!r}") from None
        return replace(preset(), **overrides) if overrides else preset()


@dataclass
class ContactState:
    """Expected contacts and contact-phase variables at one instant."""

    s_hat: np.ndarray    # (4,) int, 1 = expected contact
    phi_c: np.ndarray    # (4,) phase in [0, 1): stance progress if s_hat=1
    t_stance: float


def contact_schedule(g: GaitSchedule, t: float) -> ContactState:
    """Expected contact state at time t >= 0.

    Each leg's local gait phase is (t/T + offset) mod 1; the leg is in contact
    while the phase is below the duty fraction.  The contact phase variable is
    the linear progress through the scheduled stance interval; for swing legs
    it carries the swing progress instead (unused by the trust model).
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if g.name == "stand" or g.duty >= 1.0:
        # permanently mid-stance: no mistrust windows while standing
        return ContactState(
            s_hat=np.ones(4, dtype=int), phi_c=np.full(4, 0.5), t_stance=g.period
        )
    theta = (t / g.period + np.asarray(g.offsets)) % 1.0
    theta = np.where(theta > 1.0 - _EDGE, 0.0, theta)
    s_hat = (theta < g.duty - _EDGE).astype(int)
    phi_c = np.where(s_hat == 1, theta / g.duty, (theta - g.duty) / (1.0 - g.duty))
    phi_c = np.clip(phi_c, 0.0, 1.0)
    return ContactState(s_hat=s_hat, phi_c=phi_c, t_stance=g.t_stance)


def contact_schedule_batch(g: GaitSchedule, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(s_hat, phi_c) as (N, 4) arrays for a vector of times."""
    t = np.asarray(t, dtype=float)
    if g.name == "stand" or g.duty >= 1.0:
        return np.ones((t.size, 4), dtype=int), np.full((t.size, 4), 0.5)
    theta = (t[:, None] / g.period + np.asarray(g.offsets)[None, :]) % 1.0
    theta = np.where(theta > 1.0 - _EDGE, 0.0, theta)
    s_hat = (theta < g.duty - _EDGE).astype(int)
    phi_c = np.where(s_hat == 1, theta / g.duty, (theta - g.duty) / (1.0 - g.duty))
    phi_c = np.clip(phi_c, 0.0, 1.0)
    return s_hat, phi_c


def apply_limit_override(cs: ContactState, flags) -> ContactState:
    """Zero the expected contact of legs flagged near their kinematic limits."""
    flags = np.asarray(flags, dtype=bool).reshape(4)
    return ContactState(
        s_hat=np.where(flags, 0, cs.s_hat), phi_c=cs.phi_c.copy(), t_stance=cs.t_stance
    )
