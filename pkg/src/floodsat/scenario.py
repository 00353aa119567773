"""Synthetic flood scenarios: seeded precipitation truth, watershed flood
response, perturbed initial estimates, and the observation-value map.

Precipitation is a sum of seeded space-time Gaussian bumps per region. Flood
magnitude (streamflow normalized by the 2-year recurrence flow, so >= 1 means
flooding) is the watershed-mean precipitation convolved with a lagged response
kernel through a fixed linear gain, then assigned uniformly to every grid
point of the watershed. The initial estimate perturbs the true precipitation
with a mean-one lognormal Gaussian random field and runs it through the same
response, so initial/true ratios are controlled by the perturbation spec.

The flood response here is linear in precipitation by construction; real
hydrologic models are not. That keeps the estimate-correction law meaningful
while staying reproducible at desk scale.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .orbits import GridPoint, RegionGrid, build_region_grid

DEFAULT_SLOT_S = 900.0
DEFAULT_VALUE_TABLE: tuple[tuple[float, float], ...] = (
    (0.0, 0.0),
    (0.5, 10.0),
    (1.0, 100.0),
    (2.0, 200.0),
    (3.0, 255.0),
)


class ScenarioError(ValueError):
    """Raised for invalid scenario parameters or degenerate inputs."""


@dataclass(frozen=True)
class GaussianBump:
    """One space-time precipitation cell: amplitude mm/slot at the peak."""

    x_km: float
    y_km: float
    t_s: float
    amplitude_mm: float
    sigma_km: float
    sigma_s: float


@dataclass(frozen=True)
class ResponseKernel:
    """Lagged linear watershed response: flood = gain * (kernel (*) mean precip)."""

    lag_slots: int = 1
    shape_slots: float = 2.0
    length_slots: int = 8

    def weights(self) -> np.ndarray:
        j = np.arange(self.length_slots, dtype=float)
        w = (j / self.shape_slots) * np.exp(-j / self.shape_slots)
        s = w.sum()
        return w / s if s > 0 else w


@dataclass(frozen=True)
class PerturbationSpec:
    """Mean-one lognormal Gaussian-random-field multiplier for precipitation.

    correlation_length_km sets the spatial smoothness, sigma the log-space
    std-dev, bias a deterministic multiplicative offset (bias 1, sigma 0
    reproduces the truth exactly).
    """

    correlation_length_km: float = 20.0
    sigma: float = 0.3
    bias: float = 1.0

    def __post_init__(self) -> None:
        if self.correlation_length_km <= 0:
            raise ScenarioError("perturbation correlation length must be positive")
        if self.sigma < 0 or self.bias <= 0:
            raise ScenarioError("perturbation sigma must be >= 0 and bias > 0")


@dataclass
class PrecipField:
    """Precipitation per (grid point, time slot), mm per slot interval."""

    values: np.ndarray  # (n_gp, n_slots), non-negative
    slot_s: float = DEFAULT_SLOT_S

    def slot_of(self, t_s: float) -> int:
        return min(max(int(t_s // self.slot_s), 0), self.values.shape[1] - 1)


@dataclass
class FloodField:
    """Flood magnitude per (grid point, time slot); constant within a watershed."""

    values: np.ndarray  # (n_gp, n_slots), non-negative
    slot_s: float = DEFAULT_SLOT_S

    def slot_of(self, t_s: float) -> int:
        return min(max(int(t_s // self.slot_s), 0), self.values.shape[1] - 1)

    def at(self, gp_index: int, t_s: float) -> float:
        return float(self.values[gp_index, self.slot_of(t_s)])


def region_xy_km(grid: RegionGrid) -> np.ndarray:
    """Tangent-plane coordinates (x east, y north, km) of a region's grid points."""
    lat0 = math.radians(grid.center_lat_deg)
    pts = grid.grid_points
    out = np.zeros((len(pts), 2))
    for i, gp in enumerate(pts):
        dlon = (gp.lon_deg - grid.center_lon_deg + 540.0) % 360.0 - 180.0
        out[i, 0] = math.radians(dlon) * 6378.14 * math.cos(lat0)
        out[i, 1] = math.radians(gp.lat_deg - grid.center_lat_deg) * 6378.14
    return out


def _bump_precip(
    xy_km: np.ndarray, slot_times: np.ndarray, bumps: list[GaussianBump]
) -> np.ndarray:
    values = np.zeros((len(xy_km), len(slot_times)))
    for b in bumps:
        d2 = (xy_km[:, 0] - b.x_km) ** 2 + (xy_km[:, 1] - b.y_km) ** 2
        spatial = np.exp(-0.5 * d2 / b.sigma_km**2)
        temporal = np.exp(-0.5 * ((slot_times - b.t_s) / b.sigma_s) ** 2)
        values += b.amplitude_mm * spatial[:, None] * temporal[None, :]
    return values


def random_bumps(
    rng: np.random.Generator,
    extent_km: float,
    horizon_s: float,
    n_bumps: int,
    amplitude_mm: float,
    sigma_km: float,
    sigma_s: float,
    drift_km_s: float = 0.0,
) -> list[GaussianBump]:
    """Seeded bump set for one region; drift shifts centers over a bump sequence."""
    bumps = []
    for k in range(n_bumps):
        t_c = rng.uniform(0.1, 0.9) * horizon_s
        bumps.append(
            GaussianBump(
                x_km=float(rng.uniform(-0.4, 0.4) * extent_km + drift_km_s * t_c),
                y_km=float(rng.uniform(-0.4, 0.4) * extent_km),
                t_s=float(t_c),
                amplitude_mm=float(amplitude_mm * rng.uniform(0.6, 1.4)),
                sigma_km=float(sigma_km * rng.uniform(0.7, 1.3)),
                sigma_s=float(sigma_s * rng.uniform(0.7, 1.3)),
            )
        )
    return bumps


def watershed_mean(values: np.ndarray, watershed_ids: np.ndarray) -> dict[int, np.ndarray]:
    """Mean over the grid points of each watershed, per time slot."""
    out: dict[int, np.ndarray] = {}
    for w in np.unique(watershed_ids):
        out[int(w)] = values[watershed_ids == w].mean(axis=0)
    return out


def flood_response(
    precip: PrecipField,
    watershed_ids: np.ndarray,
    kernel: ResponseKernel,
    gain: float,
) -> FloodField:
    """Linear lagged flood response of watershed-mean precipitation.

    flood(w, t) = gain * sum_j kernel[j] * mean_precip(w, t - lag - j),
    broadcast to every grid point of watershed w. Scaling the precipitation
    by a scalar scales the response by the same scalar.
    """
    n_gp, n_slots = precip.values.shape
    weights = kernel.weights()
    flood = np.zeros((n_gp, n_slots))
    for w, mean_series in watershed_mean(precip.values, watershed_ids).items():
        convolved = np.convolve(mean_series, weights)[:n_slots]
        shifted = np.zeros(n_slots)
        if kernel.lag_slots < n_slots:
            shifted[kernel.lag_slots :] = convolved[: n_slots - kernel.lag_slots]
        flood[watershed_ids == w] = gain * shifted
    return FloodField(values=flood, slot_s=precip.slot_s)


@dataclass
class Scenario:
    """A generated scenario: grids, truth fields, initial estimate, value map."""

    grids: list[RegionGrid]
    gp_ids: np.ndarray
    gp_region: np.ndarray
    gp_watershed: np.ndarray
    precip_truth: PrecipField
    flood_truth: FloodField
    precip_est: PrecipField
    flood_init: FloodField
    kernel: ResponseKernel
    gain: float
    value_table: tuple[tuple[float, float], ...]
    horizon_s: float
    seed: int
    region_precip_ratios: dict[int, float] = field(default_factory=dict)

    @property
    def grid_points(self) -> list[GridPoint]:
        return [gp for grid in self.grids for gp in grid.grid_points]

    @property
    def gp_index(self) -> dict[int, int]:
        return {int(g): i for i, g in enumerate(self.gp_ids)}

    @property
    def n_slots(self) -> int:
        return self.precip_truth.values.shape[1]

    def content_hash(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        for arr in (
            self.precip_truth.values,
            self.flood_truth.values,
            self.precip_est.values,
            self.flood_init.values,
            self.gp_watershed,
        ):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(json.dumps(self.value_table, sort_keys=True).encode())
        return h.hexdigest()


def generate_truth(
    grids: list[RegionGrid],
    horizon_s: float,
    seed: int,
    n_bumps_per_region: int = 3,
    bump_amplitude_mm: float = 10.0,
    bump_sigma_km: float = 25.0,
    bump_sigma_s: float = 3600.0,
    bump_drift_km_s: float = 0.0,
    target_peak: float = 2.0,
    kernel: ResponseKernel = ResponseKernel(),
    slot_s: float = DEFAULT_SLOT_S,
) -> tuple[PrecipField, FloodField, float]:
    """Generate the ground-truth precipitation and flood fields.

    Returns (precip, flood, gain); the gain maps watershed-mean precipitation
    to flood magnitude and is frozen so the same linear response applies to
    perturbed inputs. The gain is chosen so the true peak flood magnitude
    equals target_peak (zero precipitation yields a zero field and zero gain).

    Raises:
        ScenarioError: if no regions are given or target_peak is outside
            the supported [0.5, 3] flood-ratio range.
    """
    if not grids:
        raise ScenarioError("at least one region required")
    if not 0.5 <= target_peak <= 3.0:
        raise ScenarioError(f"target peak {target_peak} outside [0.5, 3]")
    n_slots = int(math.ceil(horizon_s / slot_s))
    slot_times = (np.arange(n_slots) + 0.5) * slot_s

    gp_chunks = []
    watershed_chunks = []
    for grid in grids:
        rng = np.random.default_rng([seed, grid.region_id, 0x5EED])
        xy = region_xy_km(grid)
        bumps = random_bumps(
            rng,
            grid.extent_km,
            horizon_s,
            n_bumps_per_region,
            bump_amplitude_mm,
            bump_sigma_km,
            bump_sigma_s,
            bump_drift_km_s,
        )
        gp_chunks.append(_bump_precip(xy, slot_times, bumps))
        watershed_chunks.append(np.array([gp.watershed_id for gp in grid.grid_points]))

    precip = PrecipField(values=np.vstack(gp_chunks), slot_s=slot_s)
    watershed_ids = np.concatenate(watershed_chunks)

    unit = flood_response(precip, watershed_ids, kernel, gain=1.0)
    peak = float(unit.values.max())
    gain = target_peak / peak if peak > 0 else 0.0
    flood = FloodField(values=gain * unit.values, slot_s=slot_s)
    return precip, flood, gain


def generate_initial_estimate(
    truth: PrecipField,
    grids: list[RegionGrid],
    watershed_ids: np.ndarray,
    kernel: ResponseKernel,
    gain: float,
    seed: int,
    perturbation: PerturbationSpec = PerturbationSpec(),
) -> tuple[PrecipField, FloodField, dict[int, float]]:
    """Perturb the truth into an initial estimate and derive its flood field.

    The multiplier is a static-in-time lognormal Gaussian random field per
    region (mean bias, log-space std sigma, spatially correlated). The flood
    estimate runs the perturbed precipitation through the same response
    kernel and gain as the truth. Returns the per-region realized ratio
    sum(precip_est)/sum(precip_truth) alongside the fields.

    Raises:
        ScenarioError: if the truth field is identically zero (ratios undefined).
    """
    if float(truth.values.sum()) <= 0.0:
        raise ScenarioError("degenerate zero truth field: precipitation ratio undefined")
    multipliers = np.ones(truth.values.shape[0])
    offset = 0
    for grid in grids:
        n_side = grid.n_per_side
        n_pts = len(grid.grid_points)
        rng = np.random.default_rng([seed, grid.region_id, 0xF1E1D])
        noise = rng.standard_normal((n_side, n_side))
        sigma_cells = perturbation.correlation_length_km / (grid.extent_km / n_side)
        smooth = gaussian_filter(noise, sigma=sigma_cells, mode="nearest")
        std = smooth.std()
        z = smooth / std if std > 0 else smooth
        mult = perturbation.bias * np.exp(
            perturbation.sigma * z - 0.5 * perturbation.sigma**2
        )
        multipliers[offset : offset + n_pts] = mult.ravel()[:n_pts]
        offset += n_pts

    est_values = truth.values * multipliers[:, None]
    precip_est = PrecipField(values=est_values, slot_s=truth.slot_s)
    flood_init = flood_response(precip_est, watershed_ids, kernel, gain)

    ratios: dict[int, float] = {}
    offset = 0
    for grid in grids:
        n_pts = len(grid.grid_points)
        t_sum = float(truth.values[offset : offset + n_pts].sum())
        e_sum = float(est_values[offset : offset + n_pts].sum())
        if t_sum > 0:
            ratios[grid.region_id] = e_sum / t_sum
        offset += n_pts
    return precip_est, flood_init, ratios


def value_map(
    flood_values: np.ndarray,
    table: tuple[tuple[float, float], ...] = DEFAULT_VALUE_TABLE,
) -> np.ndarray:
    """Map flood magnitude to 8-bit observation value via piecewise-linear breakpoints.

    Breakpoints must be strictly increasing in magnitude with values in
    [0, 255] non-decreasing; inputs beyond the table clamp to its ends.
    Rounds half up to the nearest integer.
    """
    mags = [m for m, _ in table]
    vals = [v for _, v in table]
    if any(b <= a for a, b in zip(mags, mags[1:])):
        raise ScenarioError("value table breakpoints must be strictly increasing")
    if any(b < a for a, b in zip(vals, vals[1:])) or min(vals) < 0 or max(vals) > 255:
        raise ScenarioError("value table values must be non-decreasing within [0, 255]")
    interp = np.interp(np.asarray(flood_values, dtype=float), mags, vals)
    return np.clip(np.floor(interp + 0.5), 0, 255).astype(np.uint8)


def value_init(flood: FloodField, table: tuple[tuple[float, float], ...] = DEFAULT_VALUE_TABLE) -> np.ndarray:
    """Initial 8-bit value field over (grid point, time slot)."""
    return value_map(flood.values, table)


def generate_scenario(
    region_specs: list[dict],
    horizon_s: float,
    seed: int,
    extent_km: float = 80.0,
    resolution_km: float = 0.9,
    n_watersheds: int = 4,
    perturbation: PerturbationSpec = PerturbationSpec(),
    value_table: tuple[tuple[float, float], ...] = DEFAULT_VALUE_TABLE,
    kernel: ResponseKernel = ResponseKernel(),
    slot_s: float = DEFAULT_SLOT_S,
    **truth_kwargs,
) -> Scenario:
    """Build a full scenario from region definitions.

    region_specs entries carry at least center_lat/center_lon and may override
    extent_km / resolution_km / n_watersheds per region.
    """
    grids: list[RegionGrid] = []
    gp_offset = 0
    ws_offset = 0
    for i, spec in enumerate(region_specs):
        grid = build_region_grid(
            region_id=i,
            center_lat_deg=spec["center_lat"],
            center_lon_deg=spec["center_lon"],
            extent_km=spec.get("extent_km", extent_km),
            resolution_km=spec.get("resolution_km", resolution_km),
            n_watersheds=spec.get("n_watersheds", n_watersheds),
            seed=seed + i,
            gp_id_offset=gp_offset,
            watershed_id_offset=ws_offset,
        )
        grids.append(grid)
        gp_offset += len(grid.grid_points)
        ws_offset += 1 + max(gp.watershed_id for gp in grid.grid_points)

    precip, flood, gain = generate_truth(
        grids, horizon_s, seed, kernel=kernel, slot_s=slot_s, **truth_kwargs
    )
    all_gps = [gp for grid in grids for gp in grid.grid_points]
    watershed_ids = np.array([gp.watershed_id for gp in all_gps])
    precip_est, flood_init, ratios = generate_initial_estimate(
        precip, grids, watershed_ids, kernel, gain, seed, perturbation
    )
    return Scenario(
        grids=grids,
        gp_ids=np.array([gp.gp_id for gp in all_gps]),
        gp_region=np.array([gp.region_id for gp in all_gps]),
        gp_watershed=watershed_ids,
        precip_truth=precip,
        flood_truth=flood,
        precip_est=precip_est,
        flood_init=flood_init,
        kernel=kernel,
        gain=gain,
        value_table=tuple(tuple(row) for row in value_table),
        horizon_s=horizon_s,
        seed=seed,
        region_precip_ratios=ratios,
    )


def save_scenario(scenario: Scenario, out_dir: str) -> None:
    """Write a scenario directory: .npy fields, grid CSV, and a JSON header."""
    os.makedirs(out_dir, exist_ok=True)
    np.save(os.path.join(out_dir, "precip_truth.npy"), scenario.precip_truth.values)
    np.save(os.path.join(out_dir, "flood_truth.npy"), scenario.flood_truth.values)
    np.save(os.path.join(out_dir, "precip_est.npy"), scenario.precip_est.values)
    np.save(os.path.join(out_dir, "flood_init.npy"), scenario.flood_init.values)
    with open(os.path.join(out_dir, "grid.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["gp_id", "region_id", "watershed_id", "lat_deg", "lon_deg"])
        for gp in scenario.grid_points:
            writer.writerow(
                [gp.gp_id, gp.region_id, gp.watershed_id, f"{gp.lat_deg:.8f}", f"{gp.lon_deg:.8f}"]
            )
    header = {
        "format_version": 1,
        "seed": scenario.seed,
        "horizon_s": scenario.horizon_s,
        "slot_s": scenario.precip_truth.slot_s,
        "n_gp": int(len(scenario.gp_ids)),
        "n_t": scenario.n_slots,
        "gain": scenario.gain,
        "kernel": {
            "lag_slots": scenario.kernel.lag_slots,
            "shape_slots": scenario.kernel.shape_slots,
            "length_slots": scenario.kernel.length_slots,
        },
        "value_table": [list(row) for row in scenario.value_table],
        "region_precip_ratios": {str(k): v for k, v in scenario.region_precip_ratios.items()},
        "regions": [
            {
                "region_id": g.region_id,
                "center_lat": g.center_lat_deg,
                "center_lon": g.center_lon_deg,
                "extent_km": g.extent_km,
                "resolution_km": g.resolution_km,
            }
            for g in scenario.grids
        ],
        "content_hash": scenario.content_hash(),
    }
    with open(os.path.join(out_dir, "scenario.json"), "w") as f:
        json.dump(header, f, indent=2, sort_keys=True)
        f.write("\n")


def load_scenario(in_dir: str) -> Scenario:
    """Load a scenario directory written by save_scenario."""
    with open(os.path.join(in_dir, "scenario.json")) as f:
        header = json.load(f)
    rows = []
    with open(os.path.join(in_dir, "grid.csv"), newline="") as f:
        for row in csv.DictReader(f):
            rows.append(row)
    grids: dict[int, RegionGrid] = {}
    for meta in header["regions"]:
        grids[meta["region_id"]] = RegionGrid(
            region_id=meta["region_id"],
            center_lat_deg=meta["center_lat"],
            center_lon_deg=meta["center_lon"],
            extent_km=meta["extent_km"],
            resolution_km=meta["resolution_km"],
        )
    for row in rows:
        gp = GridPoint(
            gp_id=int(row["gp_id"]),
            lat_deg=float(row["lat_deg"]),
            lon_deg=float(row["lon_deg"]),
            region_id=int(row["region_id"]),
            watershed_id=int(row["watershed_id"]),
        )
        grids[gp.region_id].grid_points.append(gp)

    slot_s = header["slot_s"]
    kernel = ResponseKernel(**header["kernel"])
    grid_list = [grids[k] for k in sorted(grids)]
    all_gps = [gp for grid in grid_list for gp in grid.grid_points]
    scenario = Scenario(
        grids=grid_list,
        gp_ids=np.array([gp.gp_id for gp in all_gps]),
        gp_region=np.array([gp.region_id for gp in all_gps]),
        gp_watershed=np.array([gp.watershed_id for gp in all_gps]),
        precip_truth=PrecipField(np.load(os.path.join(in_dir, "precip_truth.npy")), slot_s),
        flood_truth=FloodField(np.load(os.path.join(in_dir, "flood_truth.npy")), slot_s),
        precip_est=PrecipField(np.load(os.path.join(in_dir, "precip_est.npy")), slot_s),
        flood_init=FloodField(np.load(os.path.join(in_dir, "flood_init.npy")), slot_s),
        kernel=kernel,
        gain=header["gain"],
        value_table=tuple(tuple(row) for row in header["value_table"]),
        horizon_s=header["horizon_s"],
        seed=header["seed"],
        region_precip_ratios={int(k): v for k, v in header["region_precip_ratios"].items()},
    )
    return scenario
