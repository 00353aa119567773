"""Dynamic-programming observation scheduler over a time-expanded lattice.

Nodes of the lattice are (grid point, time) pairs where the grid point lies
inside the satellite's field of regard. A schedule is a time-increasing path
through the lattice whose consecutive legs each fit the slew time between the
two pointing directions. The planner sweeps times in order; at every node it
extends the best stored path from a bounded predecessor window — maneuvers
shorter than the minimum slew or longer than the maximum slew cannot end at
the node, so only predecessors inside [t - max_slew, t - min_slew] are
scanned. Exactly one path is stored per node; candidates are ranked by
cumulative credited value (higher per-observation score breaking ties) and
the best slew-feasible one is committed.

Crediting: a revisit of a grid point inside the suppression window
contributes zero, later revisits decay by the visit count. Zero-credit
re-observations still extend paths, which is how a schedule waits out a dead
stretch between valuable targets without leaving the lattice.

Exhaustive enumeration oracles (single satellite and joint) provide the true
optimum on small instances for optimality testing; they admit any
time-feasible leg, not just window-bounded ones.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .attitude import SlewModel, eigen_angle_deg, maneuver_time_s, slew_bounds

logger = logging.getLogger(__name__)

PERMUTATION_CAP = 10_000
ORACLE_MAX_SATS = 3
ORACLE_MAX_GPS = 6
ORACLE_MAX_TIMES = 25


class OracleCapacityError(ValueError):
    """Raised when an instance is too large for exhaustive enumeration."""


@dataclass
class SchedulePath:
    """An ordered observation schedule for one satellite.

    total is the credited cumulative value; pathval the per-observation
    normalized score (total / path length).
    """

    sat_id: int
    nodes: list[tuple[int, float]] = field(default_factory=list)  # (gp_index, t_s)
    pathval: float = 0.0
    total: float = 0.0

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass
class PlanInstance:
    """One satellite's scheduling problem over a plan window.

    gp_indices are scenario grid-point indices; times_s the candidate
    observation instants (ascending); in_for marks lattice nodes; values the
    observation-value snapshot; pointing the unit vector from the satellite
    to each grid point at each time (orbital motion folded in).
    """

    sat_id: int
    gp_indices: np.ndarray
    times_s: np.ndarray
    in_for: np.ndarray
    values: np.ndarray
    pointing: np.ndarray
    slew_model: SlewModel = SlewModel()
    for_half_angle_deg: float = 55.0
    nadir_drift_rate_deg_s: float = 0.0
    suppression_window_s: float = 900.0

    @property
    def n_gp(self) -> int:
        return len(self.gp_indices)

    @property
    def n_times(self) -> int:
        return len(self.times_s)

    def bounds(self) -> tuple[float, float]:
        return slew_bounds(
            self.slew_model, self.for_half_angle_deg, self.nadir_drift_rate_deg_s
        )

    def slew_time_leg(self, g_from: int, ti_from: int, g_to: int, ti_to: int) -> float:
        angle = eigen_angle_deg(
            self.pointing[g_from, ti_from], self.pointing[g_to, ti_to]
        )
        return self.slew_model.settle_time_s + float(
            maneuver_time_s(angle, self.slew_model)
        )

    def value_at(self, gp_index: int, t_s: float) -> float:
        g = int(np.flatnonzero(self.gp_indices == gp_index)[0])
        ti = int(np.searchsorted(self.times_s, t_s))
        ti = min(max(ti, 0), self.n_times - 1)
        return float(self.values[g, ti])


def instance_from_angles(
    sat_id: int,
    angles_deg: np.ndarray,
    times_s: np.ndarray,
    values: np.ndarray,
    slew_model: SlewModel,
    in_for: np.ndarray | None = None,
    suppression_window_s: float = 900.0,
) -> PlanInstance:
    """Synthetic instance with stationary targets laid out by bearing angle.

    Grid point g sits at a fixed pointing direction angles_deg[g]; the slew
    between two targets is driven purely by their angular separation. Used by
    tests and oracle comparisons where orbital geometry is irrelevant.
    """
    angles = np.radians(np.asarray(angles_deg, dtype=float))
    n_gp, n_t = len(angles), len(times_s)
    pointing = np.zeros((n_gp, n_t, 3))
    pointing[:, :, 0] = np.cos(angles)[:, None]
    pointing[:, :, 1] = np.sin(angles)[:, None]
    if in_for is None:
        in_for = np.ones((n_gp, n_t), dtype=bool)
    span = float(np.max(angles_deg) - np.min(angles_deg)) if n_gp else 0.0
    return PlanInstance(
        sat_id=sat_id,
        gp_indices=np.arange(n_gp),
        times_s=np.asarray(times_s, dtype=float),
        in_for=np.asarray(in_for, dtype=bool),
        values=np.asarray(values, dtype=float),
        pointing=pointing,
        slew_model=slew_model,
        for_half_angle_deg=max(span / 2.0, 1e-6),
        suppression_window_s=suppression_window_s,
    )


@dataclass
class DPResult:
    """Output of one dynamic-programming sweep."""

    path: SchedulePath
    work_units: int = 0
    anytime: list[tuple[float, float]] = field(default_factory=list)
    node_paths: list[SchedulePath] = field(default_factory=list)


def schedule(
    instance: PlanInstance,
    full_scan: bool = False,
    collect_node_paths: bool = False,
) -> DPResult:
    """Best observation path over the plan window for one satellite.

    Sweeps candidate times in order and, per in-field node, commits the
    highest-ranked slew-feasible extension: largest credited total, ties
    broken by lowest predecessor grid index then earliest predecessor time; a
    fresh single-node path is committed only when it strictly beats every
    extension. With full_scan the predecessor scan covers every earlier time
    instead of only the bounded window, for pruning-soundness checks;
    admissible legs are identical.

    Returns the best path over all lattice nodes (empty when no grid point is
    ever accessible), a work counter, and the anytime trace of the best total
    available after each time step.
    """
    n_gp, n_t = instance.n_gp, instance.n_times
    result = DPResult(path=SchedulePath(sat_id=instance.sat_id))
    if n_gp == 0 or n_t == 0 or not instance.in_for.any():
        return result

    min_slew, max_slew = instance.bounds()
    times = instance.times_s
    window_s = instance.suppression_window_s
    settle = instance.slew_model.settle_time_s

    total = np.full((n_gp, n_t), -np.inf)
    length = np.zeros((n_gp, n_t), dtype=np.int32)
    parent_g = np.full((n_gp, n_t), -1, dtype=np.int32)
    parent_t = np.full((n_gp, n_t), -1, dtype=np.int32)
    last_obs = np.full((n_gp, n_t, n_gp), -np.inf, dtype=np.float32)
    counts = np.zeros((n_gp, n_t, n_gp), dtype=np.uint16)

    best_node: tuple[float, int, int] | None = None  # (total, g, ti)
    work = 0

    def consider_best(btotal: float, g: int, ti: int) -> None:
        nonlocal best_node
        key = (btotal, -g, -ti)
        if best_node is None or key > (best_node[0], -best_node[1], -best_node[2]):
            best_node = (btotal, g, ti)

    for ti in range(n_t):
        t = float(times[ti])
        # One extra sample beyond the max-slew cutoff absorbs time-grid
        # rounding: a maneuver of max_slew seconds may only be startable at
        # the next older grid sample.
        j0_base = int(np.searchsorted(times, t - max_slew, side="left"))
        j0 = max(j0_base - 1, 0)
        j1 = int(np.searchsorted(times, t - min_slew, side="right"))
        j1 = min(j1, ti)
        if full_scan:
            j0 = 0
        gs = np.flatnonzero(instance.in_for[:, ti])
        if len(gs) == 0:
            result.anytime.append((t, best_node[0] if best_node else 0.0))
            continue
        v_now = instance.values[gs, ti].astype(float)

        ext_total = np.full(len(gs), -np.inf)
        ext_flat = np.zeros(len(gs), dtype=np.int64)
        n_win = j1 - j0
        if n_win > 0:
            valid_pred = np.isfinite(total[:, j0:j1])
            if valid_pred.any():
                work += int(valid_pred.size) * len(gs)
                dt = t - times[j0:j1]
                # (Gn, G, W) tensors over candidate predecessors.
                angles = eigen_angle_deg(
                    instance.pointing[None, :, j0:j1, :],
                    instance.pointing[gs, ti][:, None, None, :],
                )
                slew = settle + maneuver_time_s(angles, instance.slew_model)
                feasible = valid_pred[None, :, :] & (slew <= dt[None, None, :] + 1e-9)
                if full_scan:
                    window_ok = dt <= max_slew + 1e-9
                    if 0 <= j0_base - 1 < j1:
                        window_ok[j0_base - 1] = True
                    feasible &= window_ok[None, None, :]
                lo = last_obs[:, j0:j1, :][:, :, gs].transpose(2, 0, 1)
                ct = counts[:, j0:j1, :][:, :, gs].transpose(2, 0, 1).astype(float)
                contrib = np.where(
                    (ct > 0) & (t - lo <= window_s),
                    0.0,
                    v_now[:, None, None] / (1.0 + ct),
                )
                cand_total = np.where(
                    feasible, total[None, :, j0:j1] + contrib, -np.inf
                )
                flat_cands = cand_total.reshape(len(gs), -1)
                ext_flat = np.argmax(flat_cands, axis=1)
                ext_total = flat_cands[np.arange(len(gs)), ext_flat]

        for k, g in enumerate(gs):
            v = float(v_now[k])
            if np.isfinite(ext_total[k]) and ext_total[k] >= v:
                gb, jb = divmod(int(ext_flat[k]), max(n_win, 1))
                jb += j0
                total[g, ti] = float(ext_total[k])
                length[g, ti] = length[gb, jb] + 1
                parent_g[g, ti], parent_t[g, ti] = gb, jb
                last_obs[g, ti] = last_obs[gb, jb]
                counts[g, ti] = counts[gb, jb]
                last_obs[g, ti, g] = t
                counts[g, ti, g] += 1
            else:
                total[g, ti] = v
                length[g, ti] = 1
                last_obs[g, ti, g] = t
                counts[g, ti, g] = 1
            work += 1
            consider_best(float(total[g, ti]), int(g), ti)

        result.anytime.append((t, best_node[0] if best_node else 0.0))

    def extract(g: int, ti: int) -> SchedulePath:
        nodes: list[tuple[int, float]] = []
        while g >= 0:
            nodes.append((int(instance.gp_indices[g]), float(times[ti])))
            g, ti = int(parent_g[g, ti]), int(parent_t[g, ti])
        nodes.reverse()
        return SchedulePath(sat_id=instance.sat_id, nodes=nodes)

    if best_node is not None:
        btotal, g, ti = best_node
        path = extract(g, ti)
        path.total = float(btotal)
        path.pathval = float(btotal / length[g, ti])
        result.path = path

    if collect_node_paths:
        for g in range(n_gp):
            for ti in range(n_t):
                if np.isfinite(total[g, ti]):
                    p = extract(g, ti)
                    p.total = float(total[g, ti])
                    p.pathval = float(total[g, ti] / length[g, ti])
                    result.node_paths.append(p)

    result.work_units = work
    return result


def validate_path(instance: PlanInstance, path: SchedulePath) -> bool:
    """Independent feasibility recheck: in-field nodes, increasing times, slews fit."""
    index_of = {int(gp): i for i, gp in enumerate(instance.gp_indices)}
    prev: tuple[int, int] | None = None
    for gp_index, t in path.nodes:
        g = index_of.get(gp_index)
        ti_candidates = np.flatnonzero(np.isclose(instance.times_s, t))
        if g is None or len(ti_candidates) == 0:
            return False
        ti = int(ti_candidates[0])
        if not instance.in_for[g, ti]:
            return False
        if prev is not None:
            g0, t0 = prev
            dt = t - instance.times_s[t0]
            if dt <= 0 or instance.slew_time_leg(g0, t0, g, ti) > dt + 1e-9:
                return False
        prev = (g, ti)
    return True


def _credited_events(
    paths: list[SchedulePath], window_s: float, value_of, forbid_shared_nodes: bool
) -> dict[int, float] | None:
    """Credited total per satellite with each grid point credited once per window.

    Observations merge in global (time, sat) order; a node within the
    suppression window of any earlier observation of the same grid point by
    any satellite contributes zero, and later revisits by the same satellite
    decay by its own visit count. Returns None when two satellites claim the
    identical (gp, t) node and such permutations are forbidden.
    """
    events: list[tuple[float, int, int]] = []
    for p in paths:
        for gp, t in p.nodes:
            events.append((t, p.sat_id, gp))
    events.sort()
    seen_nodes: set[tuple[int, float]] = set()
    last_any: dict[int, float] = {}
    own_count: dict[tuple[int, int], int] = {}
    credited: dict[int, float] = {p.sat_id: 0.0 for p in paths}
    for t, sat, gp in events:
        if forbid_shared_nodes:
            if (gp, t) in seen_nodes:
                return None
            seen_nodes.add((gp, t))
        k = own_count.get((sat, gp), 0)
        if gp in last_any and t - last_any[gp] <= window_s:
            contribution = 0.0
        else:
            contribution = value_of(sat, gp, t) / (1.0 + k)
        credited[sat] += contribution
        own_count[(sat, gp)] = k + 1
        last_any[gp] = t
    return credited


def _make_value_of(instances: list[PlanInstance]):
    lookup = {inst.sat_id: inst for inst in instances}
    index = {
        inst.sat_id: {int(g): i for i, g in enumerate(inst.gp_indices)}
        for inst in instances
    }

    def value_of(sat: int, gp: int, t: float) -> float:
        inst = lookup[sat]
        g = index[sat][gp]
        ti = int(np.searchsorted(inst.times_s, t))
        ti = min(max(ti, 0), inst.n_times - 1)
        return float(inst.values[g, ti])

    return value_of


def joint_value_of(paths: list[SchedulePath], instances: list[PlanInstance]) -> float:
    """Shared-credit joint total of given paths under the instances' values."""
    window_s = max(i.suppression_window_s for i in instances)
    credited = _credited_events(
        paths, window_s, _make_value_of(instances), forbid_shared_nodes=False
    )
    return sum(credited.values()) if credited else 0.0


def overlapping_coordination(
    instances: list[PlanInstance],
    results: list[DPResult],
    permutation_cap: int = PERMUTATION_CAP,
) -> tuple[list[SchedulePath], bool]:
    """Pick one stored path per satellite maximizing the shared-credit joint total.

    Enumerates permutations of candidate paths (every stored lattice path
    plus the empty path, per satellite), scores each with once-per-grid-point
    crediting, and keeps the best feasible permutation; permutations where
    two satellites claim the same (gp, t) are infeasible, so exactly one
    satellite owns any contested node. Above the permutation cap it falls
    back to sequential greedy selection in satellite-id order (each satellite
    picks its best path given the nodes already claimed) and logs a warning.

    Returns the chosen paths and whether the fallback was used.
    """
    value_of = _make_value_of(instances)
    window_s = max(inst.suppression_window_s for inst in instances)

    candidates: list[list[SchedulePath]] = []
    for res, inst in zip(results, instances):
        paths = list(res.node_paths) or [res.path]
        paths = sorted(paths, key=lambda p: (-p.total, -p.pathval, p.nodes))
        candidates.append(paths + [SchedulePath(sat_id=inst.sat_id)])

    n_perms = math.prod(len(c) for c in candidates)
    if n_perms > permutation_cap:
        logger.warning(
            "overlap coordination: %d permutations exceed cap %d; "
            "falling back to sequential selection",
            n_perms,
            permutation_cap,
        )
        chosen: list[SchedulePath] = []
        for cand in candidates:  # instances arrive in sat-id order
            best, best_val = None, -np.inf
            for p in cand:
                trial = chosen + [p]
                credited = _credited_events(
                    trial, window_s, value_of, forbid_shared_nodes=True
                )
                if credited is None:
                    continue
                val = sum(credited.values())
                if val > best_val:
                    best, best_val = p, val
            chosen.append(
                best if best is not None else SchedulePath(sat_id=cand[-1].sat_id)
            )
        return chosen, True

    best_perm: list[SchedulePath] | None = None
    best_val = -np.inf
    for combo in itertools.product(*candidates):
        credited = _credited_events(
            list(combo), window_s, value_of, forbid_shared_nodes=True
        )
        if credited is None:
            continue
        val = sum(credited.values())
        if val > best_val:
            best_val = val
            best_perm = list(combo)
    if best_perm is None:
        best_perm = [SchedulePath(sat_id=inst.sat_id) for inst in instances]
    return best_perm, False


def schedule_constellation(
    instances: list[PlanInstance],
    permutation_cap: int = PERMUTATION_CAP,
) -> list[SchedulePath]:
    """Coordinated schedules for satellites whose fields of regard may overlap.

    Satellites whose accessible grid-point sets never intersect are scheduled
    independently; overlapping groups run the permutation selection (or its
    sequential fallback) over their stored candidate paths.
    """
    instances = sorted(instances, key=lambda i: i.sat_id)
    accessible = [
        set(np.asarray(inst.gp_indices)[inst.in_for.any(axis=1)].tolist())
        for inst in instances
    ]
    parent = list(range(len(instances)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(instances)):
        for j in range(i + 1, len(instances)):
            if accessible[i] & accessible[j]:
                parent[find(i)] = find(j)

    groups: dict[int, list[int]] = {}
    for i in range(len(instances)):
        groups.setdefault(find(i), []).append(i)

    out: dict[int, SchedulePath] = {}
    for members in groups.values():
        if len(members) == 1:
            inst = instances[members[0]]
            out[inst.sat_id] = schedule(inst).path
        else:
            group_instances = [instances[i] for i in members]
            results = [
                schedule(inst, collect_node_paths=True) for inst in group_instances
            ]
            paths, _ = overlapping_coordination(
                group_instances, results, permutation_cap
            )
            for p in paths:
                out[p.sat_id] = p
    return [out[inst.sat_id] for inst in instances]


def _oracle_guard(instances: list[PlanInstance]) -> None:
    if len(instances) > ORACLE_MAX_SATS:
        raise OracleCapacityError(f"oracle limited to {ORACLE_MAX_SATS} satellites")
    for inst in instances:
        if inst.n_gp > ORACLE_MAX_GPS or inst.n_times > ORACLE_MAX_TIMES:
            raise OracleCapacityError(
                f"oracle limited to {ORACLE_MAX_GPS} grid points and "
                f"{ORACLE_MAX_TIMES} timesteps"
            )


def _per_gp_future_max(instance: PlanInstance) -> np.ndarray:
    """max value of each grid point over times >= ti, shape (n_gp, n_t + 1)."""
    n_gp, n_t = instance.n_gp, instance.n_times
    out = np.zeros((n_gp, n_t + 1))
    vals = np.where(instance.in_for, instance.values, 0.0)
    for ti in range(n_t - 1, -1, -1):
        out[:, ti] = np.maximum(out[:, ti + 1], vals[:, ti])
    return out


def _credit_allowance(span_s: float, window_s: float) -> int:
    """Max times one grid point can be credited over a span, given suppression."""
    if span_s <= 0:
        return 1
    return 1 + int(span_s // max(window_s, 1e-9))


def exhaustive_oracle(instance: PlanInstance) -> SchedulePath:
    """True optimum schedule by branch-and-bound depth-first enumeration.

    Maximizes the credited cumulative value over every time-feasible path
    (any leg whose slew fits the time gap is allowed, with no
    predecessor-window restriction), so the returned value upper-bounds what
    the windowed planner can score. Small instances only.

    Raises:
        OracleCapacityError: above the size caps (combinatorial explosion guard).
    """
    _oracle_guard([instance])
    times = instance.times_s
    window_s = instance.suppression_window_s
    nodes = [
        (ti, g)
        for ti in range(instance.n_times)
        for g in range(instance.n_gp)
        if instance.in_for[g, ti]
    ]
    best = SchedulePath(sat_id=instance.sat_id)
    if not nodes:
        return best

    future_max = _per_gp_future_max(instance)
    span = float(times[-1] - times[0]) if len(times) > 1 else 0.0
    allowance = _credit_allowance(span, window_s)
    best_total = 0.0
    best_key = (0.0, 0.0)

    def remaining_bound(ti_next: int, visited: dict[int, list[float]]) -> float:
        # Each grid point is creditable at most `allowance` times in total;
        # decay can only lower contributions, so raw values are admissible.
        bound = 0.0
        col = future_max[:, min(ti_next, instance.n_times)]
        for g in range(instance.n_gp):
            used = len(visited.get(g, []))
            remaining = max(0, allowance - used)
            bound += col[g] * remaining
        return bound

    def dfs(path: list[tuple[int, int]], total: float, visits: dict[int, list[float]]):
        nonlocal best, best_total, best_key
        mean = total / max(1, len(path))
        if (total, mean) > best_key:
            best_key = (total, mean)
            best_total = total
            best = SchedulePath(
                sat_id=instance.sat_id,
                nodes=[
                    (int(instance.gp_indices[g]), float(times[ti])) for ti, g in path
                ],
                pathval=mean,
                total=total,
            )
        ti_last, g_last = path[-1]
        if total + remaining_bound(ti_last + 1, visits) <= best_total + 1e-12:
            return
        for ti, g in nodes:
            if ti <= ti_last:
                continue
            dt = float(times[ti] - times[ti_last])
            if instance.slew_time_leg(g_last, ti_last, g, ti) > dt + 1e-9:
                continue
            prior = visits.get(g, [])
            if prior and times[ti] - prior[-1] <= window_s:
                contribution = 0.0
            else:
                contribution = float(instance.values[g, ti]) / (1.0 + len(prior))
            visits.setdefault(g, []).append(float(times[ti]))
            path.append((ti, g))
            dfs(path, total + contribution, visits)
            path.pop()
            visits[g].pop()
            if not visits[g]:
                del visits[g]

    for ti, g in nodes:
        dfs([(ti, g)], float(instance.values[g, ti]), {g: [float(times[ti])]})
    return best


def exhaustive_oracle_joint(
    instances: list[PlanInstance],
) -> tuple[list[SchedulePath], float]:
    """True joint optimum over all satellites with shared-credit accounting.

    Depth-first over globally time-ordered observation sequences with
    branch-and-bound on the remaining creditable value. Small instances only.
    """
    _oracle_guard(instances)
    instances = sorted(instances, key=lambda i: i.sat_id)
    window_s = max(i.suppression_window_s for i in instances)
    n = len(instances)

    per_sat_nodes = []
    for inst in instances:
        per_sat_nodes.append(
            [
                (float(inst.times_s[ti]), ti, g)
                for ti in range(inst.n_times)
                for g in range(inst.n_gp)
                if inst.in_for[g, ti]
            ]
        )

    # Global bound data: per external gp id, the max value over all sats/times
    # past a given global time.
    all_gp_ids = sorted({int(g) for inst in instances for g in inst.gp_indices})
    all_times = sorted({float(t) for inst in instances for t in inst.times_s})
    gp_row = {gp: i for i, gp in enumerate(all_gp_ids)}
    future = np.zeros((len(all_gp_ids), len(all_times) + 1))
    for inst in instances:
        for ti in range(inst.n_times):
            col = all_times.index(float(inst.times_s[ti]))
            for g in range(inst.n_gp):
                if inst.in_for[g, ti]:
                    row = gp_row[int(inst.gp_indices[g])]
                    future[row, col] = max(future[row, col], inst.values[g, ti])
    for col in range(len(all_times) - 1, -1, -1):
        future[:, col] = np.maximum(future[:, col], future[:, col + 1])
    span = all_times[-1] - all_times[0] if len(all_times) > 1 else 0.0
    allowance = _credit_allowance(span, window_s)

    best_paths = [SchedulePath(sat_id=i.sat_id) for i in instances]
    best_total = 0.0
    state_paths: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    totals = [0.0] * n
    credits_used: dict[int, int] = {}
    last_any: dict[int, float] = {}

    def bound_after(t_last: float) -> float:
        col = int(np.searchsorted(np.asarray(all_times), t_last, side="right"))
        out = 0.0
        for gp, row in gp_row.items():
            remaining = max(0, allowance - credits_used.get(gp, 0))
            out += future[row, min(col, len(all_times))] * remaining
        return out

    def dfs(last_event: tuple[float, int]) -> None:
        nonlocal best_paths, best_total
        total_now = sum(totals)
        if total_now > best_total + 1e-12:
            best_total = total_now
            best_paths = [
                SchedulePath(
                    sat_id=instances[s].sat_id,
                    nodes=[
                        (
                            int(instances[s].gp_indices[g]),
                            float(instances[s].times_s[ti]),
                        )
                        for ti, g in state_paths[s]
                    ],
                    pathval=totals[s] / max(1, len(state_paths[s])),
                    total=totals[s],
                )
                for s in range(n)
            ]
        if total_now + bound_after(last_event[0]) <= best_total + 1e-12:
            return
        t_last, s_last = last_event
        for s in range(n):
            inst = instances[s]
            prev = state_paths[s][-1] if state_paths[s] else None
            for t, ti, g in per_sat_nodes[s]:
                if (t, s) <= (t_last, s_last):
                    continue
                if prev is not None:
                    ti0, g0 = prev
                    dt = t - float(inst.times_s[ti0])
                    if dt <= 0 or inst.slew_time_leg(g0, ti0, g, ti) > dt + 1e-9:
                        continue
                gp = int(inst.gp_indices[g])
                own_prior = sum(1 for _, gj in state_paths[s] if gj == g)
                suppressed = gp in last_any and t - last_any[gp] <= window_s
                contribution = (
                    0.0 if suppressed else float(inst.values[g, ti]) / (1.0 + own_prior)
                )
                prev_last = last_any.get(gp)
                last_any[gp] = t
                if not suppressed:
                    credits_used[gp] = credits_used.get(gp, 0) + 1
                state_paths[s].append((ti, g))
                totals[s] += contribution
                dfs((t, s))
                totals[s] -= contribution
                state_paths[s].pop()
                if not suppressed:
                    credits_used[gp] -= 1
                if prev_last is None:
                    del last_any[gp]
                else:
                    last_any[gp] = prev_last

    dfs((-math.inf, -1))
    return best_paths, best_total


def write_schedule_csv(
    paths: list[SchedulePath],
    path_file: str,
    gp_id_of: dict[int, int] | None = None,
    contributions: dict[int, list[float]] | None = None,
) -> None:
    """Export schedules as CSV: sat_id, gp_id, t_s, value_contribution."""
    with open(path_file, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sat_id", "gp_id", "t_s", "value_contribution"])
        for p in paths:
            contrib = contributions.get(p.sat_id, []) if contributions else []
            for i, (gp, t) in enumerate(p.nodes):
                gp_id = gp_id_of.get(gp, gp) if gp_id_of else gp
                c = f"{contrib[i]:.6f}" if i < len(contrib) else ""
                writer.writerow([p.sat_id, gp_id, f"{t:.3f}", c])
