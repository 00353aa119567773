"""Constellation geometry: Walker constellations, circular two-body propagation
over a rotating spherical Earth, ground-point access within a field of regard,
inter-satellite / satellite-ground contacts, and region access-gap statistics.

All positions are Earth-centered Earth-fixed (ECEF) kilometres; simulation time
is seconds from a common epoch at t=0, when the ECEF and inertial frames are
aligned. Deliberately low-fidelity (no J2, no drag): downstream consumers see
only access windows, contact intervals and ranges, so consistent geometry is
what matters.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

EARTH_RADIUS_KM = 6378.14
EARTH_MU_KM3_S2 = 398600.4418
SIDEREAL_DAY_S = 86164.0
EARTH_ROT_RATE_RAD_S = 2.0 * math.pi / SIDEREAL_DAY_S

DEFAULT_FOR_HALF_ANGLE_DEG = 55.0
DEFAULT_OCCLUSION_MARGIN_KM = 100.0
DEFAULT_GS_ELEVATION_MASK_DEG = 10.0


class ConfigurationError(ValueError):
    """Raised for invalid constellation or grid configuration."""


@dataclass(frozen=True)
class OrbitalElements:
    """Circular-orbit elements of one satellite.

    Angles in degrees, semi-major axis in km, epoch in simulation seconds.
    """

    sat_id: int
    semi_major_axis_km: float
    inclination_deg: float
    raan_deg: float
    true_anomaly_epoch_deg: float
    epoch_s: float = 0.0

    def __post_init__(self) -> None:
        if self.semi_major_axis_km <= EARTH_RADIUS_KM:
            raise ConfigurationError(
                f"semi-major axis {self.semi_major_axis_km} km must exceed "
                f"Earth radius {EARTH_RADIUS_KM} km"
            )
        if not 0.0 <= self.inclination_deg < 180.0:
            raise ConfigurationError(
                f"inclination {self.inclination_deg} deg outside [0, 180)"
            )

    @property
    def mean_motion_rad_s(self) -> float:
        return math.sqrt(EARTH_MU_KM3_S2 / self.semi_major_axis_km**3)

    @property
    def period_s(self) -> float:
        return 2.0 * math.pi / self.mean_motion_rad_s


@dataclass(frozen=True)
class GridPoint:
    """One discretized ground cell of a region of interest."""

    gp_id: int
    lat_deg: float
    lon_deg: float
    region_id: int
    watershed_id: int

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ConfigurationError(f"latitude {self.lat_deg} outside [-90, 90]")
        if not -180.0 <= self.lon_deg < 180.0:
            raise ConfigurationError(f"longitude {self.lon_deg} outside [-180, 180)")


@dataclass
class RegionGrid:
    """A square region discretized into grid points on a local tangent plane."""

    region_id: int
    center_lat_deg: float
    center_lon_deg: float
    extent_km: float = 80.0
    resolution_km: float = 0.9
    grid_points: list[GridPoint] = field(default_factory=list)

    @property
    def n_per_side(self) -> int:
        return math.ceil(self.extent_km / self.resolution_km)


@dataclass(frozen=True)
class AccessWindow:
    """Interval during which a grid point lies inside a satellite's field of regard."""

    sat_id: int
    gp_id: int
    start_s: float
    end_s: float
    off_nadir_profile_deg: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.start_s >= self.end_s:
            raise ValueError(f"window start {self.start_s} must precede end {self.end_s}")


@dataclass(frozen=True)
class ContactInterval:
    """One line-of-sight interval between two nodes (satellite or ground station).

    Ground-station nodes are identified by negative ids.
    """

    node_a: int
    node_b: int
    start_s: float
    end_s: float
    range_profile_km: tuple[float, ...] = ()
    rate_fn_id: str = "default"


@dataclass
class ContactPlan:
    """Time-tagged link opportunities for a set of nodes."""

    intervals: list[ContactInterval] = field(default_factory=list)

    def active_at(self, t: float) -> list[ContactInterval]:
        return [c for c in self.intervals if c.start_s <= t < c.end_s]

    def range_at(self, interval: ContactInterval, t: float, timestep_s: float = 1.0) -> float:
        """Sampled range at time t within an interval (nearest sample)."""
        if not interval.range_profile_km:
            return 0.0
        idx = int(round((t - interval.start_s) / timestep_s))
        idx = min(max(idx, 0), len(interval.range_profile_km) - 1)
        return interval.range_profile_km[idx]


def build_walker(
    n_sats: int,
    n_planes: int,
    altitude_km: float,
    inclination_deg: float,
    phasing: int = 1,
    raan0_deg: float = 0.0,
) -> list[OrbitalElements]:
    """Build a Walker-delta constellation of circular orbits.

    Satellites are spread evenly in RAAN across planes and in true anomaly
    within each plane; adjacent planes are offset in anomaly by
    ``phasing * 360 / n_sats`` degrees.

    Args:
        n_sats: Total satellite count; must be divisible by n_planes.
        n_planes: Number of orbital planes.
        altitude_km: Orbit altitude above the spherical Earth.
        inclination_deg: Common inclination.
        phasing: Walker phasing index F in [0, n_planes).
        raan0_deg: RAAN of the first plane.

    Returns:
        One OrbitalElements per satellite, sat_id 0..n_sats-1, plane-major order.

    Raises:
        ConfigurationError: if n_sats is not divisible by n_planes.
    """
    if n_sats <= 0 or n_planes <= 0:
        raise ConfigurationError("n_sats and n_planes must be positive")
    if n_sats % n_planes != 0:
        raise ConfigurationError(
            f"n_sats={n_sats} not divisible by n_planes={n_planes}"
        )
    per_plane = n_sats // n_planes
    a = EARTH_RADIUS_KM + altitude_km
    elements = []
    for plane in range(n_planes):
        raan = (raan0_deg + 360.0 * plane / n_planes) % 360.0
        for slot in range(per_plane):
            anomaly = (360.0 * slot / per_plane + 360.0 * phasing * plane / n_sats) % 360.0
            elements.append(
                OrbitalElements(
                    sat_id=plane * per_plane + slot,
                    semi_major_axis_km=a,
                    inclination_deg=inclination_deg,
                    raan_deg=raan,
                    true_anomaly_epoch_deg=anomaly,
                )
            )
    return elements


def propagate_eci(elements: OrbitalElements, t: float | np.ndarray) -> np.ndarray:
    """Inertial position (km) of a circular two-body orbit at time t.

    Accepts a scalar or an array of times; returns shape (3,) or (n, 3).
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    u = np.radians(elements.true_anomaly_epoch_deg) + elements.mean_motion_rad_s * (
        t_arr - elements.epoch_s
    )
    a = elements.semi_major_axis_km
    inc = math.radians(elements.inclination_deg)
    raan = math.radians(elements.raan_deg)
    # Position in the orbital plane, then rotate by inclination and RAAN.
    x_orb = a * np.cos(u)
    y_orb = a * np.sin(u)
    cos_i, sin_i = math.cos(inc), math.sin(inc)
    cos_o, sin_o = math.cos(raan), math.sin(raan)
    x = cos_o * x_orb - sin_o * cos_i * y_orb
    y = sin_o * x_orb + cos_o * cos_i * y_orb
    z = sin_i * y_orb
    out = np.stack([x, y, z], axis=-1)
    return out[0] if np.isscalar(t) or np.ndim(t) == 0 else out


def propagate(elements: OrbitalElements, t: float | np.ndarray) -> np.ndarray:
    """ECEF position (km) at time t: inertial motion plus Earth rotation.

    The ECEF frame rotates at the sidereal rate and coincides with the
    inertial frame at t=0.
    """
    eci = np.atleast_2d(propagate_eci(elements, np.atleast_1d(np.asarray(t, dtype=float))))
    theta = EARTH_ROT_RATE_RAD_S * np.atleast_1d(np.asarray(t, dtype=float))
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    x = cos_t * eci[:, 0] + sin_t * eci[:, 1]
    y = -sin_t * eci[:, 0] + cos_t * eci[:, 1]
    out = np.stack([x, y, eci[:, 2]], axis=-1)
    return out[0] if np.isscalar(t) or np.ndim(t) == 0 else out


def geodetic_to_ecef(lat_deg: float | np.ndarray, lon_deg: float | np.ndarray) -> np.ndarray:
    """Spherical-Earth surface point(s) in ECEF km."""
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    lon = np.radians(np.asarray(lon_deg, dtype=float))
    return np.stack(
        [
            EARTH_RADIUS_KM * np.cos(lat) * np.cos(lon),
            EARTH_RADIUS_KM * np.cos(lat) * np.sin(lon),
            EARTH_RADIUS_KM * np.sin(lat),
        ],
        axis=-1,
    )


def build_region_grid(
    region_id: int,
    center_lat_deg: float,
    center_lon_deg: float,
    extent_km: float = 80.0,
    resolution_km: float = 0.9,
    n_watersheds: int = 4,
    seed: int = 0,
    gp_id_offset: int = 0,
    watershed_id_offset: int = 0,
) -> RegionGrid:
    """Discretize a square region into grid points with watershed membership.

    Cells are laid out on a local tangent plane at the region center and
    mapped back to lat/lon with a small-angle projection (negligible error
    at the default 80 km extent). Watersheds partition the cells via seeded
    k-means on the tangent-plane coordinates, so each watershed is a
    contiguous Voronoi-like cluster.
    """
    from scipy.cluster.vq import kmeans2

    if extent_km <= 0 or resolution_km <= 0:
        raise ConfigurationError("extent and resolution must be positive")
    n = math.ceil(extent_km / resolution_km)
    # Cell centers of an n x n grid spanning the extent.
    offsets = (np.arange(n) + 0.5) * (extent_km / n) - extent_km / 2.0
    xx, yy = np.meshgrid(offsets, offsets)  # x east, y north, km
    xy = np.column_stack([xx.ravel(), yy.ravel()])

    n_watersheds = max(1, min(n_watersheds, len(xy)))
    if n_watersheds == 1:
        labels = np.zeros(len(xy), dtype=int)
    else:
        rng = np.random.default_rng(seed)
        _, labels = kmeans2(xy, n_watersheds, minit="++", seed=rng)
        # Guard against empty clusters: relabel to consecutive ids.
        _, labels = np.unique(labels, return_inverse=True)

    lat0 = math.radians(center_lat_deg)
    dlat = np.degrees(xy[:, 1] / EARTH_RADIUS_KM)
    dlon = np.degrees(xy[:, 0] / (EARTH_RADIUS_KM * math.cos(lat0)))
    grid = RegionGrid(
        region_id=region_id,
        center_lat_deg=center_lat_deg,
        center_lon_deg=center_lon_deg,
        extent_km=extent_km,
        resolution_km=resolution_km,
    )
    for i in range(len(xy)):
        lon = center_lon_deg + dlon[i]
        lon = (lon + 180.0) % 360.0 - 180.0
        grid.grid_points.append(
            GridPoint(
                gp_id=gp_id_offset + i,
                lat_deg=center_lat_deg + dlat[i],
                lon_deg=lon,
                region_id=region_id,
                watershed_id=watershed_id_offset + int(labels[i]),
            )
        )
    return grid


def grid_points_ecef(grid_points: list[GridPoint]) -> np.ndarray:
    """ECEF positions of grid points, shape (n_gp, 3)."""
    if not grid_points:
        return np.zeros((0, 3))
    lats = np.array([gp.lat_deg for gp in grid_points])
    lons = np.array([gp.lon_deg for gp in grid_points])
    return geodetic_to_ecef(lats, lons)


def off_nadir_angles_deg(sat_pos: np.ndarray, gp_pos: np.ndarray) -> np.ndarray:
    """Off-nadir angle (deg) from each satellite position to each ground point.

    sat_pos: (T, 3), gp_pos: (G, 3); returns (G, T).
    """
    sat_pos = np.atleast_2d(sat_pos)
    gp_pos = np.atleast_2d(gp_pos)
    to_gp = gp_pos[:, None, :] - sat_pos[None, :, :]  # (G, T, 3)
    nadir = -sat_pos / np.linalg.norm(sat_pos, axis=-1, keepdims=True)  # (T, 3)
    num = np.einsum("gti,ti->gt", to_gp, nadir)
    den = np.linalg.norm(to_gp, axis=-1)
    cos_eta = np.clip(num / np.maximum(den, 1e-12), -1.0, 1.0)
    return np.degrees(np.arccos(cos_eta))


def above_horizon_mask(sat_pos: np.ndarray, gp_pos: np.ndarray) -> np.ndarray:
    """True where the satellite is above each ground point's local horizon."""
    sat_pos = np.atleast_2d(sat_pos)
    gp_pos = np.atleast_2d(gp_pos)
    to_sat = sat_pos[None, :, :] - gp_pos[:, None, :]
    return np.einsum("gti,gi->gt", to_sat, gp_pos) > 0.0


def access_mask(
    elements: OrbitalElements,
    grid_points: list[GridPoint],
    horizon: tuple[float, float],
    for_half_angle_deg: float = DEFAULT_FOR_HALF_ANGLE_DEG,
    timestep_s: float = 1.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """In-field-of-regard boolean mask over (grid point, timestep).

    Returns (times, mask, off_nadir_deg) with times shape (T,), mask and
    off-nadir shape (G, T). A point is accessible when its off-nadir angle is
    within the field-of-regard half-angle and the satellite is above its
    horizon.
    """
    if not 0.0 < for_half_angle_deg < 90.0:
        raise ConfigurationError(
            f"field-of-regard half-angle {for_half_angle_deg} outside (0, 90)"
        )
    t0, t1 = horizon
    n_steps = int(round((t1 - t0) / timestep_s))
    if abs(t0 + n_steps * timestep_s - t1) > 1e-9:
        raise ConfigurationError("timestep must divide the horizon exactly")
    times = t0 + np.arange(n_steps + 1) * timestep_s
    if not grid_points:
        return times, np.zeros((0, len(times)), dtype=bool), np.zeros((0, len(times)))
    sat_pos = propagate(elements, times)
    gp_pos = grid_points_ecef(grid_points)
    eta = off_nadir_angles_deg(sat_pos, gp_pos)
    mask = (eta <= for_half_angle_deg) & above_horizon_mask(sat_pos, gp_pos)
    return times, mask, eta


def compute_access(
    elements: OrbitalElements,
    grid: RegionGrid,
    horizon: tuple[float, float],
    for_half_angle_deg: float = DEFAULT_FOR_HALF_ANGLE_DEG,
    timestep_s: float = 1.0,
) -> list[AccessWindow]:
    """Access windows of one satellite over a region grid.

    Contiguous accessible timesteps are merged into windows; a window covers
    [first sample, last sample + timestep).
    """
    times, mask, eta = access_mask(
        elements, grid.grid_points, horizon, for_half_angle_deg, timestep_s
    )
    windows: list[AccessWindow] = []
    for gi, gp in enumerate(grid.grid_points):
        row = mask[gi]
        if not row.any():
            continue
        # Run-length encode contiguous True stretches.
        padded = np.diff(np.concatenate([[0], row.view(np.int8), [0]]))
        starts = np.flatnonzero(padded == 1)
        ends = np.flatnonzero(padded == -1)  # exclusive
        for s, e in zip(starts, ends):
            windows.append(
                AccessWindow(
                    sat_id=elements.sat_id,
                    gp_id=gp.gp_id,
                    start_s=float(times[s]),
                    end_s=float(times[e - 1] + timestep_s),
                    off_nadir_profile_deg=tuple(np.round(eta[gi, s:e], 4)),
                )
            )
    return windows


def compute_contacts(
    constellation: list[OrbitalElements],
    ground_stations: list[tuple[int, float, float]],
    horizon: tuple[float, float],
    timestep_s: float = 1.0,
    occlusion_margin_km: float = DEFAULT_OCCLUSION_MARGIN_KM,
    elevation_mask_deg: float = DEFAULT_GS_ELEVATION_MASK_DEG,
) -> ContactPlan:
    """Line-of-sight contact plan for satellites and ground stations.

    Satellite pairs are in contact when the straight line between them clears
    the Earth radius plus an occlusion margin; satellite-station pairs when
    the elevation exceeds the mask angle. Ground stations are given as
    (node_id, lat_deg, lon_deg) with node_id < 0.

    Contiguous timesteps merge into ContactIntervals carrying sampled ranges.
    """
    if not constellation and not ground_stations:
        raise ConfigurationError("at least one node required")
    t0, t1 = horizon
    n_steps = int(round((t1 - t0) / timestep_s))
    times = t0 + np.arange(n_steps + 1) * timestep_s
    sat_pos = {e.sat_id: propagate(e, times) for e in constellation}
    gs_pos = {gs_id: geodetic_to_ecef(lat, lon) for gs_id, lat, lon in ground_stations}

    plan = ContactPlan()
    sat_ids = sorted(sat_pos)

    def emit(node_a: int, node_b: int, visible: np.ndarray, ranges: np.ndarray) -> None:
        padded = np.diff(np.concatenate([[0], visible.view(np.int8), [0]]))
        starts = np.flatnonzero(padded == 1)
        ends = np.flatnonzero(padded == -1)
        for s, e in zip(starts, ends):
            plan.intervals.append(
                ContactInterval(
                    node_a=node_a,
                    node_b=node_b,
                    start_s=float(times[s]),
                    end_s=float(times[e - 1] + timestep_s),
                    range_profile_km=tuple(np.round(ranges[s:e], 3)),
                )
            )

    min_clear = EARTH_RADIUS_KM + occlusion_margin_km
    for i, a in enumerate(sat_ids):
        for b in sat_ids[i + 1 :]:
            pa, pb = sat_pos[a], sat_pos[b]
            seg = pb - pa
            seg_len2 = np.einsum("ti,ti->t", seg, seg)
            # Closest approach of the segment to the Earth center.
            tau = np.clip(
                -np.einsum("ti,ti->t", pa, seg) / np.maximum(seg_len2, 1e-12), 0.0, 1.0
            )
            closest = pa + tau[:, None] * seg
            clear = np.linalg.norm(closest, axis=-1) >= min_clear
            ranges = np.sqrt(seg_len2)
            # Coincident satellites: zero-length segment above the surface.
            clear |= seg_len2 < 1e-12
            emit(a, b, clear, ranges)

    sin_mask = math.sin(math.radians(elevation_mask_deg))
    for gs_id, lat, lon in ground_stations:
        g = gs_pos[gs_id]
        g_hat = g / np.linalg.norm(g)
        for a in sat_ids:
            rel = sat_pos[a] - g
            rng = np.linalg.norm(rel, axis=-1)
            sin_el = rel @ g_hat / np.maximum(rng, 1e-12)
            emit(a, gs_id, sin_el >= sin_mask, rng)

    return plan


def region_level_windows(
    windows: list[AccessWindow], gp_region: dict[int, int], region_id: int
) -> list[tuple[int, float, float]]:
    """Merge per-gp access windows into per-satellite region access intervals.

    Returns (sat_id, start, end) tuples sorted by start.
    """
    by_sat: dict[int, list[tuple[float, float]]] = {}
    for w in windows:
        if gp_region.get(w.gp_id) != region_id:
            continue
        by_sat.setdefault(w.sat_id, []).append((w.start_s, w.end_s))
    merged: list[tuple[int, float, float]] = []
    for sat_id, spans in by_sat.items():
        spans.sort()
        cur_s, cur_e = spans[0]
        for s, e in spans[1:]:
            if s <= cur_e:
                cur_e = max(cur_e, e)
            else:
                merged.append((sat_id, cur_s, cur_e))
                cur_s, cur_e = s, e
        merged.append((sat_id, cur_s, cur_e))
    merged.sort(key=lambda x: (x[1], x[2], x[0]))
    return merged


def region_access_gaps(
    region_id: int,
    windows: list[AccessWindow],
    gp_region: dict[int, int],
) -> list[tuple[tuple[int, int], float]]:
    """Gaps between consecutive region accesses by distinct satellites.

    For each consecutive pair of region-level accesses by different
    satellites, emits ((earlier_sat, later_sat), later.start - earlier.end).
    Fewer than two accesses yield an empty list.
    """
    merged = region_level_windows(windows, gp_region, region_id)
    gaps: list[tuple[tuple[int, int], float]] = []
    for (sat_a, _, end_a), (sat_b, start_b, _) in zip(merged, merged[1:]):
        if sat_a == sat_b:
            continue
        gaps.append(((sat_a, sat_b), start_b - end_a))
    return gaps


def next_region_access(
    windows: list[AccessWindow],
    gp_region: dict[int, int],
    region_id: int,
    sat_id: int,
    after_s: float,
) -> float | None:
    """Start of the satellite's next region access strictly after a time, if any."""
    best: float | None = None
    for s, start, end in region_level_windows(windows, gp_region, region_id):
        if s != sat_id:
            continue
        if end <= after_s:
            continue
        candidate = max(start, after_s)
        if best is None or candidate < best:
            best = candidate
    return best


def write_access_csv(windows: list[AccessWindow], path: str) -> None:
    """Export access windows as CSV: sat_id, gp_id, start_s, end_s, max_off_nadir_deg."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sat_id", "gp_id", "start_s", "end_s", "max_off_nadir_deg"])
        for w in windows:
            max_eta = max(w.off_nadir_profile_deg) if w.off_nadir_profile_deg else ""
            writer.writerow([w.sat_id, w.gp_id, f"{w.start_s:.3f}", f"{w.end_s:.3f}", max_eta])


def write_contacts_csv(plan: ContactPlan, path: str) -> None:
    """Export contacts as CSV: node_a, node_b, start_s, end_s, min/max range, rate_fn_id."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["node_a", "node_b", "start_s", "end_s", "min_range_km", "max_range_km", "rate_fn_id"]
        )
        for c in plan.intervals:
            rmin = min(c.range_profile_km) if c.range_profile_km else ""
            rmax = max(c.range_profile_km) if c.range_profile_km else ""
            writer.writerow(
                [c.node_a, c.node_b, f"{c.start_s:.3f}", f"{c.end_s:.3f}", rmin, rmax, c.rate_fn_id]
            )


def read_contacts_csv(path: str) -> ContactPlan:
    """Import a contact plan previously written by write_contacts_csv.

    Range profiles collapse to the (min, max) endpoints recorded in the CSV.
    """
    plan = ContactPlan()
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            profile: tuple[float, ...] = ()
            if row["min_range_km"]:
                profile = (float(row["min_range_km"]), float(row["max_range_km"]))
            plan.intervals.append(
                ContactInterval(
                    node_a=int(row["node_a"]),
                    node_b=int(row["node_b"]),
                    start_s=float(row["start_s"]),
                    end_s=float(row["end_s"]),
                    range_profile_km=profile,
                    rate_fn_id=row["rate_fn_id"],
                )
            )
    return plan
