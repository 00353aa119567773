"""Run metrics and comparisons: total observed flood magnitude, per-observation
magnitude, flood-category counts, runtime fractions, consensus statistics,
and predictor-error curves over hypothetical observation schedules.

Scoring always reads the TRUE flood field at executed observation tuples;
estimates never leak into metrics. Simultaneous observations of the same
(grid point, time slot) by different satellites earn credit once: redundancy
carries no extra value, which is exactly what centralized planning trades
information freshness for.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .executive import ObservationEntry, RunResult
from .network import latency_stats
from .predictor import Observation, apply_observation_updates
from .scenario import Scenario

DEFAULT_CATEGORY_THRESHOLDS = {"action": 1.0, "minor": 1.5, "moderate": 2.0}


class ComparisonMismatchError(ValueError):
    """Raised when runs being compared do not share a scenario."""


@dataclass
class RunMetrics:
    """Headline numbers of one run."""

    mode: str
    total_flood_magnitude: float
    n_observations: int
    per_observation: float
    unique_observed_nodes: int
    category_counts: dict[str, int]
    consensus: dict | None = None
    conservation: dict[str, int] = field(default_factory=dict)
    n_plans: int = 0
    n_plans_skipped: int = 0
    max_wall_runtime_s: float = 0.0
    max_modeled_runtime_s: float = 0.0
    plan_horizon_s: float = 0.0

    def as_dict(self, include_wall_times: bool = False) -> dict:
        """JSON-ready dict; wall-clock timings are excluded by default so the
        deterministic metrics file stays byte-identical across reruns."""
        out = {
            "mode": self.mode,
            "total_flood_magnitude": round(self.total_flood_magnitude, 9),
            "n_observations": self.n_observations,
            "per_observation": round(self.per_observation, 9),
            "unique_observed_nodes": self.unique_observed_nodes,
            "category_counts": self.category_counts,
            "conservation": self.conservation,
            "n_plans": self.n_plans,
            "n_plans_skipped": self.n_plans_skipped,
            "max_modeled_runtime_s": round(self.max_modeled_runtime_s, 6),
            "plan_horizon_s": self.plan_horizon_s,
        }
        if self.consensus is not None:
            c = dict(self.consensus)
            c.pop("consensus", None)
            c.pop("per_priority", None)
            c.pop("per_region", None)
            out["latency_summary"] = {
                k: (round(v, 6) if isinstance(v, float) else v) for k, v in c.items()
            }
        if include_wall_times:
            out["max_wall_runtime_s"] = self.max_wall_runtime_s
        return out


def total_flood_magnitude(
    scenario: Scenario, logs: dict[int, list[ObservationEntry]]
) -> tuple[float, int]:
    """Summed true flood magnitude over executed observations, credited once
    per (grid point, time slot) across the whole constellation.

    Returns (total, number of distinct credited nodes).
    """
    flood = scenario.flood_truth
    seen: set[tuple[int, int]] = set()
    total = 0.0
    for entries in logs.values():
        for e in entries:
            key = (e.gp_index, flood.slot_of(e.t_s))
            if key in seen:
                continue
            seen.add(key)
            total += float(flood.values[key[0], key[1]])
    return total, len(seen)


def category_counts(
    scenario: Scenario,
    logs: dict[int, list[ObservationEntry]],
    thresholds: dict[str, float] | None = None,
) -> dict[str, int]:
    """Distinct observed (gp, slot) nodes at or above each flood category."""
    thresholds = thresholds or DEFAULT_CATEGORY_THRESHOLDS
    flood = scenario.flood_truth
    seen: set[tuple[int, int]] = set()
    for entries in logs.values():
        for e in entries:
            seen.add((e.gp_index, flood.slot_of(e.t_s)))
    out = {}
    for name, thr in sorted(thresholds.items(), key=lambda kv: kv[1]):
        out[name] = sum(1 for gp, slot in seen if flood.values[gp, slot] >= thr)
    return out


def compute_run_metrics(
    scenario: Scenario,
    result: RunResult,
    mode: str,
    plan_horizon_s: float,
    thresholds: dict[str, float] | None = None,
) -> RunMetrics:
    """Full metric set for one run."""
    total, unique_nodes = total_flood_magnitude(scenario, result.observation_logs)
    n_obs = result.total_observations
    consensus = None
    delivered = [r for r in result.delivery_records if r.latency_s is not None]
    if delivered:
        consensus = latency_stats(result.delivery_records, result.region_gaps)
    wall = [e.wall_runtime_s for e in result.plan_events]
    modeled = [e.modeled_runtime_s for e in result.plan_events]
    return RunMetrics(
        mode=mode,
        total_flood_magnitude=total,
        n_observations=n_obs,
        per_observation=total / n_obs if n_obs else 0.0,
        unique_observed_nodes=unique_nodes,
        category_counts=category_counts(scenario, result.observation_logs, thresholds),
        consensus=consensus,
        conservation=result.conservation,
        n_plans=len(result.plan_events),
        n_plans_skipped=sum(1 for e in result.plan_events if e.skipped),
        max_wall_runtime_s=max(wall) if wall else 0.0,
        max_modeled_runtime_s=max(modeled) if modeled else 0.0,
        plan_horizon_s=plan_horizon_s,
    )


def watershed_centroid_gps(scenario: Scenario) -> dict[int, int]:
    """Most central grid point of each watershed (nearest to its mean lat/lon).

    The centroid sees the watershed-representative perturbation, so the
    correction ratio measured there stands in for the whole cluster.
    """
    lats = np.array([gp.lat_deg for gp in scenario.grid_points])
    lons = np.array([gp.lon_deg for gp in scenario.grid_points])
    out: dict[int, int] = {}
    for w in np.unique(scenario.gp_watershed):
        rows = np.flatnonzero(scenario.gp_watershed == w)
        d2 = (lats[rows] - lats[rows].mean()) ** 2 + (lons[rows] - lons[rows].mean()) ** 2
        out[int(w)] = int(rows[np.argmin(d2)])
    return out


def hypothetical_schedule(
    scenario: Scenario, n_updates: int, frequency: int
) -> list[Observation]:
    """Deterministic synthetic observation schedule for predictor evaluation.

    frequency picks that many time slots, centered and uniformly spread over
    the horizon; at each sampled slot, n_updates watershed-centroid grid
    points are observed round-robin across watersheds (one per watershed
    before reusing any).
    """
    n_slots = scenario.n_slots
    frequency = max(1, min(frequency, n_slots))
    slot_picks = np.unique(
        ((np.arange(frequency) + 0.5) * n_slots / frequency).astype(int)
    )
    watersheds = np.unique(scenario.gp_watershed)
    centroid = watershed_centroid_gps(scenario)
    slot_s = scenario.precip_truth.slot_s
    observations: list[Observation] = []
    for slot in slot_picks:
        t_obs = (slot + 1) * slot_s - 1.0
        for k in range(n_updates):
            w = int(watersheds[k % len(watersheds)])
            gp = centroid[w]
            observations.append(
                Observation(
                    sat_id=0,
                    gp_index=gp,
                    t_s=float(t_obs),
                    precip_mm=float(scenario.precip_truth.values[gp, slot]),
                )
            )
    return observations


def estimate_error(scenario: Scenario, observations: list[Observation]) -> float:
    """Normalized L1 error between corrected estimate and truth over (gp, t).

    With no observations this is the error of the unperturbed initial
    estimate (the baseline cell of the evaluation grid).
    """
    est, _, _ = apply_observation_updates(
        scenario.flood_init,
        scenario.precip_est,
        observations,
        scenario.gp_watershed,
    )
    truth = scenario.flood_truth.values
    denom = float(np.abs(truth).sum())
    if denom <= 0:
        raise ValueError("degenerate scenario: zero truth flood field")
    return float(np.abs(est - truth).sum()) / denom


def predictor_error_curve(
    scenario: Scenario,
    n_updates_grid: list[int],
    frequency_grid: list[int],
) -> list[dict]:
    """Estimate-vs-truth error over a grid of hypothetical schedules.

    Returns rows {n_updates, frequency, n_samples, error}; error should fall
    (or hold) as either axis grows on a well-formed scenario.
    """
    if not n_updates_grid or not frequency_grid:
        raise ValueError("empty evaluation grid")
    rows = []
    for n_up in n_updates_grid:
        for freq in frequency_grid:
            obs = hypothetical_schedule(scenario, n_up, freq)
            rows.append(
                {
                    "n_updates": n_up,
                    "frequency": freq,
                    "n_samples": len(obs),
                    "error": estimate_error(scenario, obs),
                }
            )
    return rows


def compare_modes(
    rows: list[dict],
    scenario_hashes: list[str] | None = None,
) -> list[dict]:
    """Comparison table across runs of the same scenario.

    rows carry at least {label, total_flood_magnitude, per_observation,
    max_modeled_runtime_s, plan_horizon_s}; the best row by total gets
    delta annotations of 0 and every other row its percentage shortfall.

    Raises:
        ComparisonMismatchError: when fewer than two rows are given or the
            runs reference different scenarios.
    """
    if len(rows) < 2:
        raise ComparisonMismatchError("comparison requires at least two runs")
    if scenario_hashes is not None and len(set(scenario_hashes)) > 1:
        raise ComparisonMismatchError(
            f"runs reference different scenarios: {sorted(set(scenario_hashes))}"
        )
    best_total = max(r["total_flood_magnitude"] for r in rows)
    best_per_obs = max(r["per_observation"] for r in rows)
    out = []
    for r in rows:
        horizon = r.get("plan_horizon_s") or 0.0
        runtime = r.get("max_modeled_runtime_s") or 0.0
        entry = dict(r)
        entry["total_delta_pct"] = (
            0.0
            if best_total == 0
            else round(100.0 * (r["total_flood_magnitude"] - best_total) / best_total, 3)
        )
        entry["per_observation_delta_pct"] = (
            0.0
            if best_per_obs == 0
            else round(100.0 * (r["per_observation"] - best_per_obs) / best_per_obs, 3)
        )
        entry["runtime_per_unit_horizon"] = (
            round(runtime / horizon, 6) if horizon else 0.0
        )
        entry["is_best"] = r["total_flood_magnitude"] == best_total
        out.append(entry)
    return out


def write_comparison_csv(rows: list[dict], path: str) -> None:
    """Table-shaped CSV of compare_modes output."""
    cols = [
        "label",
        "total_flood_magnitude",
        "total_delta_pct",
        "per_observation",
        "per_observation_delta_pct",
        "n_observations",
        "max_modeled_runtime_s",
        "runtime_per_unit_horizon",
        "is_best",
    ]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(cols)
        for r in rows:
            writer.writerow([r.get(c, "") for c in cols])


def write_error_curve_csv(rows: list[dict], path: str) -> None:
    """Long-format CSV of the predictor error grid."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["n_updates", "frequency", "n_samples", "error"])
        for r in rows:
            writer.writerow(
                [r["n_updates"], r["frequency"], r["n_samples"], f"{r['error']:.9f}"]
            )
