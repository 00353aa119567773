"""Per-satellite execution loop and centralized ground variant.

Onboard mode: every satellite advances on the shared 1 s simulation clock.
At its replan epochs it drains the bundle inbox, folds peers' reported
observations and schedules into its knowledge, plans the next horizon, and
splices the new plan onto the committed schedule (committed near-term nodes
are kept; the tail from the splice point forward is replaced, with slew
feasibility re-checked at the seam). At execution times it observes, updates
its model knowledge, and queues bundles to every peer.

Ground mode: a single centralized planner accumulates downlinked observations
and replans one satellite at each of its ground-station contacts, with the
planning horizon equal to the contact cadence. The central planner knows
every schedule it has uplinked, so redundant observations are excluded by
construction; the price is information staleness between contacts.

Scheduler runtime inside the simulation is modeled deterministically as
work-units x per-unit cost x hardware slowdown, so identical (config, seed)
runs replay bit-identically; wall-clock timings are reported separately and
never feed back into simulation state.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import orbits
from .attitude import SlewModel, eigen_angle_deg, maneuver_time_s
from .network import BundlePayload, DTNSimulator, assign_priority, constant_rate
from .orbits import OrbitalElements
from .predictor import ModelParams, Observation, build_value_snapshot
from .scenario import Scenario
from .scheduler import (
    PlanInstance,
    SchedulePath,
    overlapping_coordination,
    schedule,
)

logger = logging.getLogger(__name__)


@dataclass
class ExecutiveConfig:
    """Run-mode and timing parameters of the execution loop."""

    mode: str = "onboard"  # onboard | ground
    plan_horizon_s: float = 600.0
    replan_interval_s: float = 300.0
    plan_lead_time_s: float = 60.0
    gs_contact_cadence_s: float = 5940.0
    plan_resolution_s: float = 1.0
    bundle_interval_s: float = 60.0
    bundle_size_bits: float = 2000.0
    rate_bps: float = 1000.0
    ttl_cap_s: float = 5940.0
    agility: bool = True
    footprint_km: float = 8.0
    for_half_angle_deg: float = 55.0
    suppression_window_s: float = 900.0
    permutation_cap: int = 10_000
    hardware_slowdown: float = 4.0
    scheduler_cost_per_unit_s: float = 2e-8

    def __post_init__(self) -> None:
        if self.mode not in ("onboard", "ground"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.replan_interval_s > self.plan_horizon_s:
            raise ValueError("replan interval must not exceed the plan horizon")


@dataclass(frozen=True)
class ObservationEntry:
    """One executed observation with the truth values sampled there."""

    sat_id: int
    gp_index: int
    t_s: float
    precip_mm: float
    flood_true: float


@dataclass
class PlanEvent:
    """Diagnostics for one planning cycle."""

    sat_id: int
    epoch_s: float
    work_units: int
    modeled_runtime_s: float
    wall_runtime_s: float
    skipped: bool
    n_nodes: int


@dataclass
class RunResult:
    """Everything a run produces, before any file export."""

    observation_logs: dict[int, list[ObservationEntry]]
    delivery_records: list
    schedules: dict[int, list[tuple[int, float]]]
    region_gaps: dict[int, list[tuple[tuple[int, int], float]]]
    plan_events: list[PlanEvent]
    conservation: dict[str, int]
    warnings: list[str] = field(default_factory=list)

    @property
    def total_observations(self) -> int:
        return sum(len(v) for v in self.observation_logs.values())


class SimulationSetup:
    """Precomputed geometry shared by every mode of one run.

    Holds satellite positions on the 1 s clock, per-satellite field-of-regard
    masks over all grid points, region-level access windows, and the
    inter-satellite contact plan.
    """

    def __init__(
        self,
        constellation: list[OrbitalElements],
        scenario: Scenario,
        sim_duration_s: float,
        config: ExecutiveConfig,
        slew_model: SlewModel | None = None,
        ground_stations: list[tuple[int, float, float]] | None = None,
    ):
        self.constellation = sorted(constellation, key=lambda e: e.sat_id)
        self.scenario = scenario
        self.config = config
        self.slew_model = slew_model or SlewModel()
        self.sim_duration_s = float(sim_duration_s)
        self.times = np.arange(0.0, sim_duration_s + 1e-9, 1.0)

        altitude = self.constellation[0].semi_major_axis_km - orbits.EARTH_RADIUS_KM
        if config.agility:
            self.for_half_angle_deg = config.for_half_angle_deg
        else:
            self.for_half_angle_deg = math.degrees(
                math.atan((config.footprint_km / 2.0) / altitude)
            )
        self.nadir_drift_deg_s = math.degrees(self.constellation[0].mean_motion_rad_s)

        self.gp_pos = orbits.grid_points_ecef(scenario.grid_points)
        self.sat_pos: dict[int, np.ndarray] = {}
        self.in_for: dict[int, np.ndarray] = {}
        for e in self.constellation:
            pos = orbits.propagate(e, self.times)
            self.sat_pos[e.sat_id] = pos
            eta = orbits.off_nadir_angles_deg(pos, self.gp_pos)
            mask = (eta <= self.for_half_angle_deg) & orbits.above_horizon_mask(
                pos, self.gp_pos
            )
            self.in_for[e.sat_id] = mask

        # Region-level access windows per satellite: merged [start, end) runs.
        self.region_windows: dict[tuple[int, int], list[tuple[float, float]]] = {}
        region_ids = sorted({int(r) for r in scenario.gp_region})
        for e in self.constellation:
            for rid in region_ids:
                rows = scenario.gp_region == rid
                any_in = self.in_for[e.sat_id][rows].any(axis=0)
                runs = _true_runs(any_in, self.times)
                self.region_windows[(e.sat_id, rid)] = runs

        gs = ground_stations or []
        self.contact_plan = orbits.compute_contacts(
            self.constellation, gs, (0.0, sim_duration_s), timestep_s=1.0
        )

    def next_region_access(self, sat_id: int, region_id: int, t: float) -> float | None:
        for start, end in self.region_windows.get((sat_id, region_id), []):
            if end > t:
                return max(start, t)
        return None

    def region_gaps(self) -> dict[int, list[tuple[tuple[int, int], float]]]:
        """Gaps between consecutive region accesses by distinct satellites."""
        out: dict[int, list[tuple[tuple[int, int], float]]] = {}
        for rid in sorted({int(r) for r in self.scenario.gp_region}):
            merged = []
            for e in self.constellation:
                for start, end in self.region_windows[(e.sat_id, rid)]:
                    merged.append((e.sat_id, start, end))
            merged.sort(key=lambda x: (x[1], x[2], x[0]))
            gaps = []
            for (sa, _, ea), (sb, tb, _) in zip(merged, merged[1:]):
                if sa != sb:
                    gaps.append(((sa, sb), tb - ea))
            out[rid] = gaps
        return out


def _true_runs(mask: np.ndarray, times: np.ndarray) -> list[tuple[float, float]]:
    if not mask.any():
        return []
    padded = np.diff(np.concatenate([[0], mask.view(np.int8), [0]]))
    starts = np.flatnonzero(padded == 1)
    ends = np.flatnonzero(padded == -1)
    return [
        (float(times[s]), float(times[min(e, len(times) - 1)])) for s, e in zip(starts, ends)
    ]


@dataclass
class _SatState:
    sat_id: int
    params: ModelParams
    committed: list[tuple[int, float]] = field(default_factory=list)
    node_at: dict[float, int] = field(default_factory=dict)
    log: list[ObservationEntry] = field(default_factory=list)
    last_emit_s: float = -math.inf
    has_new_obs: bool = False

    def set_committed(self, nodes: list[tuple[int, float]]) -> None:
        self.committed = nodes
        self.node_at = {t: g for g, t in nodes}


def _build_instance(
    setup: SimulationSetup,
    sat_id: int,
    window: tuple[float, float],
    state: _SatState,
    extra_suppressed: list[tuple[int, float]] | None = None,
    claimed_nodes: set[tuple[int, float]] | None = None,
) -> PlanInstance | None:
    """Plan instance for one satellite over a window, from its knowledge."""
    config = setup.config
    t0, t1 = window
    i0 = int(max(0, math.ceil(t0)))
    i1 = int(min(len(setup.times) - 1, math.floor(t1)))
    if i1 <= i0:
        return None
    step = max(1, int(round(config.plan_resolution_s)))
    cols = np.arange(i0, i1 + 1, step)
    mask = setup.in_for[sat_id][:, cols]
    active = mask.any(axis=0)
    if not active.any():
        return None
    cols = cols[active]
    mask = mask[:, active]
    rows = np.flatnonzero(mask.any(axis=1))
    mask = mask[rows]
    times = setup.times[cols]

    params = state.params
    if extra_suppressed:
        params = ModelParams(
            observations=list(state.params.observations),
            t_src=dict(state.params.t_src),
            known_paths=dict(state.params.known_paths),
        )
        params.known_paths[-1] = list(extra_suppressed)

    # Committed nodes inside the window are about to be replaced; only the
    # retained near-term schedule should decay or suppress the new plan.
    retained = [n for n in state.committed if n[1] < t0]
    snapshot = build_value_snapshot(
        times,
        setup.scenario.flood_init,
        setup.scenario.precip_est,
        params,
        setup.scenario.gp_watershed,
        setup.scenario.value_table,
        own_prior_path=retained,
        window_s=config.suppression_window_s,
    )
    values = snapshot.values[rows]

    if claimed_nodes:
        for gp_index, t in claimed_nodes:
            r = np.flatnonzero(rows == gp_index)
            c = np.flatnonzero(np.isclose(times, t))
            if len(r) and len(c):
                mask[int(r[0]), int(c[0])] = False

    sat_positions = setup.sat_pos[sat_id][cols]  # (T, 3)
    diff = setup.gp_pos[rows][:, None, :] - sat_positions[None, :, :]
    pointing = diff / np.linalg.norm(diff, axis=-1, keepdims=True)

    return PlanInstance(
        sat_id=sat_id,
        gp_indices=rows,
        times_s=times,
        in_for=mask,
        values=values,
        pointing=pointing,
        slew_model=setup.slew_model,
        for_half_angle_deg=setup.for_half_angle_deg,
        nadir_drift_rate_deg_s=setup.nadir_drift_deg_s,
        suppression_window_s=config.suppression_window_s,
    )


def _splice(
    setup: SimulationSetup,
    sat_id: int,
    committed: list[tuple[int, float]],
    new_nodes: list[tuple[int, float]],
    splice_at_s: float,
) -> list[tuple[int, float]]:
    """Keep committed nodes before the splice point, then the new plan.

    The seam leg (last retained node to first new node) is re-checked for
    slew feasibility; infeasible leading new nodes are dropped.
    """
    retained = [n for n in committed if n[1] < splice_at_s]
    incoming = [n for n in new_nodes if n[1] >= splice_at_s]
    if retained and incoming:
        g0, t0 = retained[-1]
        model = setup.slew_model
        while incoming:
            g1, t1 = incoming[0]
            dt = t1 - t0
            if dt <= 0:
                incoming.pop(0)
                continue
            u = _pointing_at(setup, sat_id, g0, t0)
            v = _pointing_at(setup, sat_id, g1, t1)
            slew = model.settle_time_s + float(
                maneuver_time_s(eigen_angle_deg(u, v), model)
            )
            if slew <= dt + 1e-9:
                break
            incoming.pop(0)
    return retained + incoming


def _pointing_at(setup: SimulationSetup, sat_id: int, gp_index: int, t_s: float) -> np.ndarray:
    ti = int(round(t_s))
    ti = min(max(ti, 0), len(setup.times) - 1)
    d = setup.gp_pos[gp_index] - setup.sat_pos[sat_id][ti]
    return d / np.linalg.norm(d)


def _plan_runtime(config: ExecutiveConfig, work_units: int) -> float:
    return work_units * config.scheduler_cost_per_unit_s * config.hardware_slowdown


def _overlap_groups(
    setup: SimulationSetup, instances: dict[int, PlanInstance]
) -> list[list[int]]:
    """Group satellites whose plan instances share accessible grid points."""
    sat_ids = sorted(instances)
    reach = {
        s: set(np.asarray(instances[s].gp_indices)[instances[s].in_for.any(axis=1)].tolist())
        for s in sat_ids
    }
    parent = {s: s for s in sat_ids}

    def find(s: int) -> int:
        while parent[s] != s:
            parent[s] = parent[parent[s]]
            s = parent[s]
        return s

    for i, a in enumerate(sat_ids):
        for b in sat_ids[i + 1 :]:
            if reach[a] & reach[b]:
                parent[find(a)] = find(b)
    groups: dict[int, list[int]] = {}
    for s in sat_ids:
        groups.setdefault(find(s), []).append(s)
    return list(groups.values())


def _execute_observation(
    setup: SimulationSetup, state: _SatState, t: float
) -> ObservationEntry | None:
    gp_index = state.node_at.get(t)
    if gp_index is None:
        return None
    ti = int(round(t))
    if not setup.in_for[state.sat_id][gp_index, ti]:
        logger.debug("sat %d scheduled node outside access at t=%s", state.sat_id, t)
        return None
    sc = setup.scenario
    slot = sc.precip_truth.slot_of(t)
    entry = ObservationEntry(
        sat_id=state.sat_id,
        gp_index=int(gp_index),
        t_s=float(t),
        precip_mm=float(sc.precip_truth.values[gp_index, slot]),
        flood_true=float(sc.flood_truth.values[gp_index, slot]),
    )
    state.log.append(entry)
    state.params.observations.append(
        Observation(
            sat_id=state.sat_id,
            gp_index=int(gp_index),
            t_s=float(t),
            precip_mm=entry.precip_mm,
        )
    )
    state.params.t_src[state.sat_id] = float(t)
    state.has_new_obs = True
    return entry


def run_onboard(
    setup: SimulationSetup,
) -> RunResult:
    """Decentralized execution: plan, execute, and broadcast on every satellite."""
    config = setup.config
    scenario = setup.scenario
    states = {
        e.sat_id: _SatState(sat_id=e.sat_id, params=ModelParams())
        for e in setup.constellation
    }
    sat_ids = sorted(states)
    net = DTNSimulator(setup.contact_plan, rate_fn=constant_rate(config.rate_bps))
    plan_events: list[PlanEvent] = []
    warnings: list[str] = []
    orbit_period = setup.constellation[0].period_s
    gp_region = {i: int(r) for i, r in enumerate(scenario.gp_region)}

    t_end = setup.sim_duration_s
    t = 0.0
    while t <= t_end:
        net.step(t, 1.0)

        if t % config.replan_interval_s == 0:
            # Drain inboxes and ingest before anyone plans this epoch.
            for s in sat_ids:
                state = states[s]
                for bundle in net.drain_inbox(s, t):
                    p = bundle.payload
                    if p is None:
                        continue
                    state.params.ingest(
                        p.source_sat, p.t_src, p.observations, p.path_nodes
                    )
            window = (t + config.plan_lead_time_s, t + config.plan_lead_time_s + config.plan_horizon_s)
            instances: dict[int, PlanInstance] = {}
            walls: dict[int, float] = {}
            for s in sat_ids:
                w0 = time.perf_counter()
                inst = _build_instance(setup, s, window, states[s])
                walls[s] = time.perf_counter() - w0
                if inst is not None:
                    instances[s] = inst

            new_paths: dict[int, SchedulePath] = {}
            works: dict[int, int] = {}
            for group in _overlap_groups(setup, instances):
                if len(group) == 1:
                    s = group[0]
                    w0 = time.perf_counter()
                    res = schedule(instances[s])
                    walls[s] += time.perf_counter() - w0
                    new_paths[s] = res.path
                    works[s] = res.work_units
                else:
                    group_insts = [instances[s] for s in group]
                    w0 = time.perf_counter()
                    results = [
                        schedule(inst, collect_node_paths=True) for inst in group_insts
                    ]
                    paths, _ = overlapping_coordination(
                        group_insts, results, config.permutation_cap
                    )
                    wall = time.perf_counter() - w0
                    for s, res, p in zip(group, results, paths):
                        walls[s] += wall / len(group)
                        new_paths[s] = p
                        works[s] = res.work_units

            for s in sat_ids:
                if s not in instances:
                    continue
                work = works.get(s, 0)
                modeled = _plan_runtime(config, work)
                skipped = modeled > config.plan_lead_time_s
                if skipped:
                    msg = (
                        f"sat {s} plan at t={t:.0f}s skipped: modeled runtime "
                        f"{modeled:.1f}s exceeds lead time {config.plan_lead_time_s:.1f}s"
                    )
                    logger.warning(msg)
                    warnings.append(msg)
                else:
                    states[s].set_committed(
                        _splice(
                            setup, s, states[s].committed, new_paths[s].nodes, window[0]
                        )
                    )
                plan_events.append(
                    PlanEvent(
                        sat_id=s,
                        epoch_s=t,
                        work_units=work,
                        modeled_runtime_s=modeled,
                        wall_runtime_s=walls[s],
                        skipped=skipped,
                        n_nodes=len(new_paths.get(s, SchedulePath(sat_id=s)).nodes),
                    )
                )

        for s in sat_ids:
            _execute_observation(setup, states[s], t)

        for s in sat_ids:
            state = states[s]
            if not state.has_new_obs:
                continue
            if t - state.last_emit_s < config.bundle_interval_s:
                continue
            state.last_emit_s = t
            state.has_new_obs = False
            last_obs = state.params.observations[-1]
            region_id = gp_region[last_obs.gp_index]
            payload = BundlePayload(
                source_sat=s,
                region_id=region_id,
                t_src=t,
                observations=[
                    o for o in state.params.observations if o.sat_id == s
                ],
                path_nodes=[n for n in state.committed if n[1] <= t],
            )
            for c in sat_ids:
                if c == s:
                    continue
                nxt = setup.next_region_access(c, region_id, t)
                ttl = config.ttl_cap_s if nxt is None else min(nxt - t, orbit_period)
                ttl = min(max(ttl, 1.0), config.ttl_cap_s)
                priority = assign_priority(
                    c,
                    region_id,
                    setup.next_region_access,
                    sat_ids,
                    t,
                )
                net.create_bundle(
                    src_sat=s,
                    dst_sat=c,
                    t_s=t,
                    ttl_s=ttl,
                    size_bits=config.bundle_size_bits,
                    priority=priority,
                    payload=payload,
                )
        t += 1.0

    return RunResult(
        observation_logs={s: states[s].log for s in sat_ids},
        delivery_records=list(net.records.values()),
        schedules={s: list(states[s].committed) for s in sat_ids},
        region_gaps=setup.region_gaps(),
        plan_events=plan_events,
        conservation=net.conservation(),
        warnings=warnings,
    )


def run_ground(
    setup: SimulationSetup,
) -> RunResult:
    """Centralized execution: plans refresh only at ground-station contacts.

    One planner holds the union of all downlinked observations (ground
    stations sync instantly among themselves) and every schedule it has
    uplinked, so it never assigns a node another satellite already holds and
    suppresses value around already-scheduled observations. Each satellite's
    knowledge refreshes only at its contacts; between them it flies the last
    uplinked plan. Contact cadence staggers evenly across the constellation.
    """
    config = setup.config
    states = {
        e.sat_id: _SatState(sat_id=e.sat_id, params=ModelParams())
        for e in setup.constellation
    }
    sat_ids = sorted(states)
    ground = ModelParams()
    plan_events: list[PlanEvent] = []
    warnings: list[str] = []
    cadence = config.gs_contact_cadence_s
    t_end = setup.sim_duration_s
    # Contact epochs stagger evenly across the constellation, on whole seconds.
    contact_times: dict[int, set[float]] = {}
    for i, s in enumerate(sat_ids):
        offset = round(cadence * i / len(sat_ids))
        contact_times[s] = {
            float(offset + k * round(cadence))
            for k in range(int(t_end // max(cadence, 1.0)) + 2)
            if offset + k * round(cadence) <= t_end
        }

    t = 0.0
    while t <= t_end:
        for s in sat_ids:
            if t not in contact_times[s]:
                continue
            state = states[s]
            # Downlink: the ground absorbs everything this satellite knows.
            ground.ingest(
                s,
                t,
                [o for o in state.params.observations if o.sat_id == s],
                [n for n in state.committed if n[1] <= t],
            )
            # Centralized replan for this satellite over the contact gap.
            window = (t, t + cadence)
            claimed = {
                node
                for other, st in states.items()
                if other != s
                for node in st.committed
                if node[1] >= t
            }
            other_nodes = [
                node
                for other, st in states.items()
                if other != s
                for node in st.committed
            ]
            ground_state = _SatState(
                sat_id=s, params=ground, committed=state.committed
            )
            w0 = time.perf_counter()
            inst = _build_instance(
                setup,
                s,
                window,
                ground_state,
                extra_suppressed=other_nodes,
                claimed_nodes=claimed,
            )
            if inst is None:
                plan_events.append(
                    PlanEvent(s, t, 0, 0.0, time.perf_counter() - w0, False, 0)
                )
            else:
                res = schedule(inst)
                wall = time.perf_counter() - w0
                modeled = _plan_runtime(config, res.work_units)
                # Uplink within the contact; the new plan takes effect now.
                state.set_committed(
                    _splice(setup, s, state.committed, res.path.nodes, t)
                )
                plan_events.append(
                    PlanEvent(
                        sat_id=s,
                        epoch_s=t,
                        work_units=res.work_units,
                        modeled_runtime_s=modeled,
                        wall_runtime_s=wall,
                        skipped=False,
                        n_nodes=len(res.path.nodes),
                    )
                )

        for s in sat_ids:
            _execute_observation(setup, states[s], t)
        t += 1.0

    return RunResult(
        observation_logs={s: states[s].log for s in sat_ids},
        delivery_records=[],
        schedules={s: list(states[s].committed) for s in sat_ids},
        region_gaps=setup.region_gaps(),
        plan_events=plan_events,
        conservation={"created": 0, "delivered": 0, "dropped": 0, "in_flight": 0},
        warnings=warnings,
    )


def run(setup: SimulationSetup) -> RunResult:
    """Dispatch on the configured mode."""
    if setup.config.mode == "ground":
        return run_ground(setup)
    return run_onboard(setup)
