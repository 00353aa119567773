"""Parametric slew-time model for re-orienting between observation targets.

A single-axis bang-bang maneuver (accelerate at the limit, optionally cruise
at the rate limit, decelerate) plus a fixed settle time stands in for a full
attitude trajectory optimizer. The scheduler only needs a fast lookup of the
time to re-point from one ground target to another, with orbital motion of
the spacecraft between the two observation instants included.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .orbits import OrbitalElements, propagate


@dataclass(frozen=True)
class SlewModel:
    """Single-axis agility limits of a satellite bus."""

    max_rate_deg_s: float = 2.0
    max_accel_deg_s2: float = 1.0
    settle_time_s: float = 5.0

    def __post_init__(self) -> None:
        if self.max_rate_deg_s <= 0 or self.max_accel_deg_s2 <= 0 or self.settle_time_s <= 0:
            raise ValueError("slew model parameters must be strictly positive")

    @property
    def rate_saturation_angle_deg(self) -> float:
        # Largest eigen-angle still covered by a triangular (accel/decel) profile.
        return self.max_rate_deg_s**2 / self.max_accel_deg_s2


def maneuver_time_s(angle_deg: float | np.ndarray, model: SlewModel) -> float | np.ndarray:
    """Bang-bang maneuver time for an eigen-angle, excluding settle time.

    Below the rate-saturation angle the profile is triangular
    (t = 2*sqrt(angle/accel)); above it the peak rate is held
    (t = angle/rate + rate/accel). The two branches agree at the boundary.
    """
    angle = np.abs(np.asarray(angle_deg, dtype=float))
    tri = 2.0 * np.sqrt(angle / model.max_accel_deg_s2)
    sat = angle / model.max_rate_deg_s + model.max_rate_deg_s / model.max_accel_deg_s2
    out = np.where(angle <= model.rate_saturation_angle_deg, tri, sat)
    return float(out) if np.ndim(angle_deg) == 0 else out


def eigen_angle_deg(u: np.ndarray, v: np.ndarray) -> float | np.ndarray:
    """Angle between unit-normalized vectors, in degrees. Broadcasts."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    un = u / np.linalg.norm(u, axis=-1, keepdims=True)
    vn = v / np.linalg.norm(v, axis=-1, keepdims=True)
    cos_a = np.clip(np.sum(un * vn, axis=-1), -1.0, 1.0)
    ang = np.degrees(np.arccos(cos_a))
    return float(ang) if ang.ndim == 0 else ang


def slew_time_between_angles(angle_deg: float | np.ndarray, model: SlewModel) -> float | np.ndarray:
    """Settle time plus bang-bang maneuver time for an eigen-angle."""
    return model.settle_time_s + maneuver_time_s(angle_deg, model)


def pointing_vector(sat_pos_km: np.ndarray, gp_pos_km: np.ndarray) -> np.ndarray:
    """Unit vector from a satellite position to a ground point."""
    d = np.asarray(gp_pos_km, dtype=float) - np.asarray(sat_pos_km, dtype=float)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def slew_time(
    elements: OrbitalElements,
    gp_before_pos_km: np.ndarray,
    t_before_s: float,
    gp_now_pos_km: np.ndarray,
    t_now_s: float,
    model: SlewModel,
) -> float:
    """Time to re-point from one ground target to another.

    The eigen-angle is taken between the target-pointing vectors evaluated at
    their respective observation times, so the spacecraft's own orbital
    motion over the interval is part of the required rotation. Monotone
    non-decreasing in eigen-angle; equals the settle time for a zero angle.
    """
    if t_now_s <= t_before_s:
        raise ValueError("t_now must be after t_before")
    u = pointing_vector(propagate(elements, t_before_s), gp_before_pos_km)
    v = pointing_vector(propagate(elements, t_now_s), gp_now_pos_km)
    return float(slew_time_between_angles(eigen_angle_deg(u, v), model))


def slew_bounds(
    model: SlewModel,
    for_half_angle_deg: float,
    nadir_drift_rate_deg_s: float = 0.0,
) -> tuple[float, float]:
    """Lower/upper slew-time bounds over any pair of in-field-of-regard targets.

    The minimum is the settle time (zero eigen-angle). The maximum comes from
    the field-of-regard diameter (2x half-angle); when a nadir drift rate is
    given, the bound also absorbs nadir rotation accumulated while the
    maneuver itself runs (fixed-point iteration, converges for slow drift).
    """
    min_slew = model.settle_time_s
    angle = 2.0 * for_half_angle_deg
    max_slew = float(slew_time_between_angles(min(angle, 180.0), model))
    if nadir_drift_rate_deg_s > 0.0:
        for _ in range(4):
            widened = min(angle + nadir_drift_rate_deg_s * max_slew, 180.0)
            max_slew = float(slew_time_between_angles(widened, model))
    return min_slew, max_slew
