"""Observation-responsive prediction: correcting flood-magnitude estimates
from observed precipitation, decaying and suppressing observation value, and
scoring candidate schedules.

The correction law compares cumulative observed precipitation against the
cumulative initial estimate at an observed grid point. The resulting ratio
rescales the initial flood prediction for the whole watershed after the
observation time: a linear correction above a 0.5 ratio, and a hard
suppression to 5% of the initial prediction below it (an observation showing
far less rain than expected disconfirms the flood). Repeated observations of
the same watershed re-anchor on the initial prediction with the latest
cumulative ratio rather than compounding corrections.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scenario import FloodField, PrecipField, value_map

CORRECTION_COEFFICIENT = 1.85
SUPPRESSION_RATIO_THRESHOLD = 0.5
SUPPRESSION_FACTOR = 0.05
SUPPRESSION_WINDOW_S = 900.0


@dataclass(frozen=True)
class Observation:
    """One executed observation: truth precipitation sampled at a grid point."""

    sat_id: int
    gp_index: int
    t_s: float
    precip_mm: float


@dataclass
class ModelParams:
    """A satellite's knowledge of observations and peer schedules.

    observations hold precipitation samples from this satellite and any peers
    whose bundles arrived; t_src records the freshness of each source;
    known_paths the reported schedules (only nodes at or before the source's
    t_src are trustworthy, which the ingest path enforces).
    """

    observations: list[Observation] = field(default_factory=list)
    t_src: dict[int, float] = field(default_factory=dict)
    known_paths: dict[int, list[tuple[int, float]]] = field(default_factory=dict)

    def ingest(
        self,
        source_sat: int,
        t_src: float,
        observations: list[Observation],
        path: list[tuple[int, float]],
    ) -> None:
        """Merge a source's report, keeping only samples at or before its t_src."""
        if t_src <= self.t_src.get(source_sat, -math.inf):
            return
        self.t_src[source_sat] = t_src
        have = {(o.sat_id, o.gp_index, o.t_s) for o in self.observations}
        for o in observations:
            if o.t_s <= t_src and (o.sat_id, o.gp_index, o.t_s) not in have:
                self.observations.append(o)
                have.add((o.sat_id, o.gp_index, o.t_s))
        self.known_paths[source_sat] = [(g, t) for g, t in path if t <= t_src]


@dataclass(frozen=True)
class PathValue:
    """A candidate schedule and its per-observation score."""

    path: tuple[tuple[int, float], ...]
    pathval: float
    total: float = 0.0


class EstimateUpdateError(ValueError):
    """Raised when a correction cannot be computed (zero expected precipitation)."""


def cumulative_ratio(
    obs_by_slot: dict[int, float],
    precip_est: np.ndarray,
    gp_index: int,
    max_slot: int,
) -> float | None:
    """Observed/expected cumulative precipitation ratio at one grid point.

    Sums run over the slots actually sampled, up to and including max_slot,
    so a sparse observation history compares like with like. Returns None
    when the expected cumulative precipitation is zero.
    """
    slots = [s for s in obs_by_slot if s <= max_slot]
    if not slots:
        return None
    obs_sum = sum(obs_by_slot[s] for s in slots)
    est_sum = float(sum(precip_est[gp_index, s] for s in slots))
    if est_sum <= 0.0:
        return None
    return obs_sum / est_sum


def correction_factor(ratio: float, coefficient: float = CORRECTION_COEFFICIENT) -> float:
    """Multiplier applied to the initial flood prediction for a precip ratio."""
    if ratio >= SUPPRESSION_RATIO_THRESHOLD:
        return 1.0 + coefficient * (ratio - 1.0)
    return SUPPRESSION_FACTOR


def update_flood_estimate(
    flood_est: np.ndarray,
    flood_init: np.ndarray,
    obs_by_slot: dict[int, float],
    precip_est: np.ndarray,
    gp_index: int,
    t_obs_s: float,
    watershed_mask: np.ndarray,
    slot_s: float,
    coefficient: float = CORRECTION_COEFFICIENT,
) -> tuple[np.ndarray, float | None]:
    """Apply one observation's correction to the flood estimate field.

    Rescales the initial prediction of the observed point's watershed for all
    slots strictly after the observation slot. Returns the updated field and
    the realized ratio; a zero expected-precipitation denominator leaves the
    field unchanged and returns ratio None (flagged to the caller).
    """
    n_slots = flood_init.shape[1]
    obs_slot = min(max(int(t_obs_s // slot_s), 0), n_slots - 1)
    ratio = cumulative_ratio(obs_by_slot, precip_est, gp_index, obs_slot)
    if ratio is None:
        return flood_est, None
    factor = correction_factor(ratio, coefficient)
    updated = flood_est.copy()
    updated[np.ix_(watershed_mask, np.arange(obs_slot + 1, n_slots))] = (
        factor * flood_init[np.ix_(watershed_mask, np.arange(obs_slot + 1, n_slots))]
    )
    return updated, ratio


def apply_observation_updates(
    flood_init: FloodField,
    precip_est: PrecipField,
    observations: list[Observation],
    watershed_ids: np.ndarray,
    coefficient: float = CORRECTION_COEFFICIENT,
) -> tuple[np.ndarray, dict[int, float], int]:
    """Fold all known observations into a corrected flood-estimate field.

    Observations are applied in time order (grid-point index breaks ties).
    Each observed grid point accumulates its sample history; every
    observation re-derives its watershed's post-observation estimate from the
    initial prediction using the cumulative ratio at that time. Returns the
    estimate field, the last realized ratio per watershed, and the number of
    observations flagged for a zero expected-precipitation denominator.
    """
    est = flood_init.values.copy()
    slot_s = flood_init.slot_s
    history: dict[int, dict[int, float]] = {}
    last_ratio: dict[int, float] = {}
    flagged = 0
    for obs in sorted(observations, key=lambda o: (o.t_s, o.gp_index, o.sat_id)):
        slot = flood_init.slot_of(obs.t_s)
        history.setdefault(obs.gp_index, {})[slot] = obs.precip_mm
        mask = watershed_ids == watershed_ids[obs.gp_index]
        est, ratio = update_flood_estimate(
            est,
            flood_init.values,
            history[obs.gp_index],
            precip_est.values,
            obs.gp_index,
            obs.t_s,
            mask,
            slot_s,
            coefficient,
        )
        if ratio is None:
            flagged += 1
        else:
            last_ratio[int(watershed_ids[obs.gp_index])] = ratio
    return est, last_ratio, flagged


def decay_value(
    value_est: np.ndarray,
    gp_index: int,
    prior_path: list[tuple[int, float]],
    t_plan_now_s: float,
    horizon_start_s: float,
) -> np.ndarray:
    """Divide one grid point's value by (1 + prior scheduled observations).

    The count covers prior-path nodes of the same grid point between the
    horizon start and the planning time; the +1 keeps the unobserved case at
    full value. Returns the decayed time series for that grid point.
    """
    n_obs = sum(
        1
        for g, t in prior_path
        if g == gp_index and horizon_start_s <= t <= t_plan_now_s
    )
    return np.asarray(value_est, dtype=float) / (1.0 + n_obs)


def decay_field(
    value_est: np.ndarray,
    prior_path: list[tuple[int, float]],
    t_plan_now_s: float,
    horizon_start_s: float,
) -> np.ndarray:
    """Vectorized decay over all grid points of a (gp, time) value field."""
    counts = np.zeros(value_est.shape[0])
    for g, t in prior_path:
        if horizon_start_s <= t <= t_plan_now_s:
            counts[g] += 1
    return value_est / (1.0 + counts[:, None])


def suppress_recent(
    value_new: np.ndarray,
    times_s: np.ndarray,
    observations: list[tuple[int, float]],
    window_s: float = SUPPRESSION_WINDOW_S,
) -> np.ndarray:
    """Zero the value of observed grid points for the window after observation.

    For each observed (gp, t_obs), value is zero on [t_obs, t_obs + window]
    inclusive and untouched outside it. Idempotent.
    """
    out = np.array(value_new, dtype=float, copy=True)
    for gp_index, t_obs in observations:
        cols = (times_s >= t_obs) & (times_s <= t_obs + window_s)
        out[gp_index, cols] = 0.0
    return out


def path_contributions(
    path: list[tuple[int, float]],
    value_at,
    window_s: float = SUPPRESSION_WINDOW_S,
) -> list[float]:
    """Per-node value of a schedule, with the schedule's own revisits handled.

    A node revisiting a grid point within the suppression window of an
    earlier node contributes zero; a later revisit is decayed by the number
    of prior visits. value_at is a callable (gp_index, t_s) -> float.
    """
    seen: dict[int, list[float]] = {}
    contributions = []
    for gp_index, t in path:
        prior = seen.setdefault(gp_index, [])
        if prior and t - prior[-1] <= window_s:
            contributions.append(0.0)
        else:
            contributions.append(float(value_at(gp_index, t)) / (1.0 + len(prior)))
        prior.append(t)
    return contributions


def path_value(
    path: list[tuple[int, float]],
    value_at,
    window_s: float = SUPPRESSION_WINDOW_S,
) -> PathValue:
    """Score a candidate schedule: summed node value normalized per observation."""
    contributions = path_contributions(path, value_at, window_s)
    total = float(sum(contributions))
    return PathValue(
        path=tuple(path),
        pathval=total / max(1, len(path)),
        total=total,
    )


@dataclass
class ValueSnapshot:
    """Value of observing each grid point at each candidate time in a plan window."""

    times_s: np.ndarray  # (T,)
    values: np.ndarray  # (n_gp, T)

    def value_at(self, gp_index: int, t_s: float) -> float:
        col = int(np.searchsorted(self.times_s, t_s))
        col = min(max(col, 0), len(self.times_s) - 1)
        return float(self.values[gp_index, col])


def build_value_snapshot(
    times_s: np.ndarray,
    flood_init: FloodField,
    precip_est: PrecipField,
    params: ModelParams,
    watershed_ids: np.ndarray,
    value_table,
    own_prior_path: list[tuple[int, float]] | None = None,
    coefficient: float = CORRECTION_COEFFICIENT,
    window_s: float = SUPPRESSION_WINDOW_S,
) -> ValueSnapshot:
    """Value field over a plan window given current knowledge.

    Pipeline: fold observation corrections into the flood estimate, map to
    8-bit value, decay by the satellite's own already-committed schedule,
    then suppress every known observed (gp, t) and committed node for the
    suppression window.
    """
    est, _, _ = apply_observation_updates(
        flood_init, precip_est, params.observations, watershed_ids, coefficient
    )
    slots = np.minimum(
        (times_s // flood_init.slot_s).astype(int), flood_init.values.shape[1] - 1
    )
    values = value_map(est, value_table)[:, slots].astype(float)

    own_prior_path = own_prior_path or []
    if own_prior_path and len(times_s):
        values = decay_field(values, own_prior_path, float(times_s[0]), float(times_s[0]) - window_s)

    observed_pairs = [(o.gp_index, o.t_s) for o in params.observations]
    observed_pairs += [(g, t) for path in params.known_paths.values() for g, t in path]
    observed_pairs += list(own_prior_path)
    values = suppress_recent(values, times_s, observed_pairs, window_s)
    return ValueSnapshot(times_s=times_s, values=values)


def value_update(
    candidate_paths: list[list[tuple[int, float]]],
    times_s: np.ndarray,
    flood_init: FloodField,
    precip_est: PrecipField,
    params: ModelParams,
    watershed_ids: np.ndarray,
    value_table,
    own_prior_path: list[tuple[int, float]] | None = None,
    coefficient: float = CORRECTION_COEFFICIENT,
) -> tuple[list[PathValue], list[Observation]]:
    """Score candidate schedules against current knowledge.

    Returns one PathValue per candidate (same order) plus the observation
    samples that informed the correction, for downstream bundling.
    """
    snapshot = build_value_snapshot(
        times_s,
        flood_init,
        precip_est,
        params,
        watershed_ids,
        value_table,
        own_prior_path,
        coefficient,
    )
    scored = [path_value(p, snapshot.value_at) for p in candidate_paths]
    return scored, list(params.observations)
