"""Store-and-forward bundle networking over an intermittent contact plan.

Bundles are flooded epidemically with per-neighbor dedup: every node forwards
each stored bundle at most once to each neighbor, so copies spread along every
contact but traffic stays bounded. Each directed link of an active contact is
an independent full-rate channel transmitting one bundle at a time,
non-preemptively, in (priority, creation time) order. Bundles expire at their
time-to-live: expired copies are purged, transmissions completing after
expiry do not count as deliveries, and an undelivered bundle whose TTL passes
is recorded as dropped.

Ground stations are DTN nodes with a shared store (interconnected at zero
latency), identified by negative node ids.
"""
from __future__ import annotations

import csv
import logging
import statistics
from dataclasses import dataclass, field

from .predictor import Observation

logger = logging.getLogger(__name__)

DEFAULT_BUNDLE_SIZE_BITS = 2000.0
DEFAULT_RATE_BPS = 1000.0

# Payload layout for size accounting (fixed field order, bits):
#   region_id:16, t_src:32, n_observations:16, n_path_nodes:16,
#   per observation (gp_id:24, t:20, precip sample:16),
#   per path node (gp_id:24, t:20).
_HEADER_BITS = 16 + 32 + 16 + 16
_OBS_BITS = 24 + 20 + 16
_NODE_BITS = 24 + 20


@dataclass
class BundlePayload:
    """Observed schedule fragment plus model-parameter summary from one source."""

    source_sat: int
    region_id: int
    t_src: float
    observations: list[Observation] = field(default_factory=list)
    path_nodes: list[tuple[int, float]] = field(default_factory=list)

    def size_bits(self) -> int:
        return (
            _HEADER_BITS
            + _OBS_BITS * len(self.observations)
            + _NODE_BITS * len(self.path_nodes)
        )


@dataclass
class Bundle:
    """One DTN message from a source to a single destination."""

    bundle_id: int
    src_sat: int
    dst_sat: int
    created_at_s: float
    ttl_s: float
    size_bits: float = DEFAULT_BUNDLE_SIZE_BITS
    priority: int = 0
    payload: BundlePayload | None = None

    def __post_init__(self) -> None:
        if self.ttl_s < 0:
            raise ValueError("ttl must be non-negative")

    @property
    def expiry_s(self) -> float:
        return self.created_at_s + self.ttl_s


@dataclass
class DeliveryRecord:
    """Outcome of one bundle at its destination."""

    bundle_id: int
    src_sat: int
    dst_sat: int
    created_at_s: float
    priority: int
    delivered_at_s: float | None = None
    dropped: bool = False
    hops: int = 0

    @property
    def latency_s(self) -> float | None:
        if self.delivered_at_s is None:
            return None
        return self.delivered_at_s - self.created_at_s


def assign_priority(
    dst_sat: int,
    region_id: int,
    next_access_fn,
    all_sats: list[int],
    t_s: float,
) -> int:
    """Priority ordinal for a bundle: destinations ranked by next region access.

    next_access_fn(sat_id, region_id, t) returns the start of the satellite's
    next access to the region strictly after t, or None. Rank 0 (most urgent)
    goes to the soonest-access destination; destinations with no future
    access share the lowest priority class, one past the last rank.
    """
    accesses = []
    for sat in all_sats:
        nxt = next_access_fn(sat, region_id, t_s)
        if nxt is not None:
            accesses.append((nxt, sat))
    accesses.sort()
    for rank, (_, sat) in enumerate(accesses):
        if sat == dst_sat:
            return rank
    return len(all_sats)


def constant_rate(bps: float = DEFAULT_RATE_BPS):
    """Rate function ignoring range: bps within line of sight."""

    def rate(range_km: float) -> float:
        return bps

    return rate


def table_rate(rows: list[tuple[float, float]]):
    """Piecewise rate: rows of (max_range_km, bps), first matching row wins."""

    ordered = sorted(rows)

    def rate(range_km: float) -> float:
        for max_range, bps in ordered:
            if range_km <= max_range:
                return bps
        return 0.0

    return rate


class _Channel:
    """One directed link of an active contact: at most one bundle in flight."""

    __slots__ = ("bundle_id", "finish_s")

    def __init__(self) -> None:
        self.bundle_id: int | None = None
        self.finish_s = 0.0


class DTNSimulator:
    """Discrete-time bundle relay over a contact plan.

    Advance with step(t, dt) on a single clock; all state mutation happens
    there. Ground-station nodes (negative ids) share a single store.
    """

    def __init__(self, contact_plan, rate_fn=None, timestep_s: float = 1.0):
        self.plan = contact_plan
        self.rate_fn = rate_fn or constant_rate()
        self.timestep_s = timestep_s
        self.bundles: dict[int, Bundle] = {}
        self.records: dict[int, DeliveryRecord] = {}
        # store key -> {bundle_id: hops taken to reach this store}
        self.stores: dict[int | str, dict[int, int]] = {}
        self.forwarded: set[tuple[int, int | str, int | str]] = set()
        self.channels: dict[tuple[int, int], _Channel] = {}
        self.inboxes: dict[int, list[int]] = {}
        self._next_id = 0
        # Index contact intervals for fast active lookup.
        self._intervals = sorted(self.plan.intervals, key=lambda c: c.start_s)

    @staticmethod
    def store_key(node: int) -> int | str:
        return "GS" if node < 0 else node

    def create_bundle(
        self,
        src_sat: int,
        dst_sat: int,
        t_s: float,
        ttl_s: float,
        size_bits: float = DEFAULT_BUNDLE_SIZE_BITS,
        priority: int = 0,
        payload: BundlePayload | None = None,
    ) -> Bundle:
        """Enqueue a new bundle at its source; zero TTL drops immediately."""
        bundle = Bundle(
            bundle_id=self._next_id,
            src_sat=src_sat,
            dst_sat=dst_sat,
            created_at_s=t_s,
            ttl_s=ttl_s,
            size_bits=size_bits,
            priority=priority,
            payload=payload,
        )
        self._next_id += 1
        self.bundles[bundle.bundle_id] = bundle
        self.records[bundle.bundle_id] = DeliveryRecord(
            bundle_id=bundle.bundle_id,
            src_sat=src_sat,
            dst_sat=dst_sat,
            created_at_s=t_s,
            priority=priority,
        )
        if ttl_s <= 0:
            self.records[bundle.bundle_id].dropped = True
            return bundle
        self.stores.setdefault(self.store_key(src_sat), {})[bundle.bundle_id] = 0
        return bundle

    def _active_contacts(self, t: float):
        for c in self._intervals:
            if c.start_s <= t < c.end_s:
                yield c

    def _expire(self, t: float) -> None:
        for bid, rec in self.records.items():
            if rec.delivered_at_s is None and not rec.dropped:
                if t >= self.bundles[bid].expiry_s:
                    rec.dropped = True
        expired = {
            bid
            for bid, b in self.bundles.items()
            if t >= b.expiry_s
        }
        for store in self.stores.values():
            for bid in expired & set(store):
                del store[bid]

    def _receive(self, bundle: Bundle, node: int, hops: int, t: float) -> None:
        key = self.store_key(node)
        store = self.stores.setdefault(key, {})
        if bundle.bundle_id not in store:
            store[bundle.bundle_id] = hops
        rec = self.records[bundle.bundle_id]
        reached_dst = node == bundle.dst_sat or (
            bundle.dst_sat < 0 and node < 0
        )
        if reached_dst and rec.delivered_at_s is None and not rec.dropped:
            rec.delivered_at_s = t
            rec.hops = hops
            self.inboxes.setdefault(bundle.dst_sat, []).append(bundle.bundle_id)

    def _next_transmittable(self, sender: int, receiver: int, t: float) -> Bundle | None:
        key = self.store_key(sender)
        rkey = self.store_key(receiver)
        if key == rkey:
            return None
        store = self.stores.get(key, {})
        best: Bundle | None = None
        for bid in store:
            b = self.bundles[bid]
            if t >= b.expiry_s:
                continue
            if (bid, key, rkey) in self.forwarded:
                continue
            if bid in self.stores.get(rkey, {}):
                continue
            if best is None or (b.priority, b.created_at_s, b.bundle_id) < (
                best.priority,
                best.created_at_s,
                best.bundle_id,
            ):
                best = b
        return best

    def step(self, t: float, dt: float) -> None:
        """Advance the network clock over [t, t+dt)."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        self._expire(t)
        active = list(self._active_contacts(t))
        active_pairs = set()
        for c in active:
            active_pairs.add((c.node_a, c.node_b))
            active_pairs.add((c.node_b, c.node_a))

        # Complete or abort in-flight transmissions.
        for (sender, receiver), ch in list(self.channels.items()):
            if ch.bundle_id is None:
                continue
            if (sender, receiver) not in active_pairs:
                # Contact ended mid-transmission: bundle stays queued for later.
                ch.bundle_id = None
                continue
            if ch.finish_s <= t + dt:
                bundle = self.bundles[ch.bundle_id]
                done = ch.finish_s
                ch.bundle_id = None
                skey, rkey = self.store_key(sender), self.store_key(receiver)
                self.forwarded.add((bundle.bundle_id, skey, rkey))
                if done <= bundle.expiry_s:
                    hops = self.stores.get(skey, {}).get(bundle.bundle_id, 0) + 1
                    self._receive(bundle, receiver, hops, done)

        # Start new transmissions on idle directed channels.
        for c in active:
            rng_km = self.plan.range_at(c, t, self.timestep_s)
            rate = self.rate_fn(rng_km)
            if rate <= 0:
                continue
            for sender, receiver in ((c.node_a, c.node_b), (c.node_b, c.node_a)):
                ch = self.channels.setdefault((sender, receiver), _Channel())
                if ch.bundle_id is not None:
                    continue
                bundle = self._next_transmittable(sender, receiver, t)
                if bundle is None:
                    continue
                duration = bundle.size_bits / rate
                if t + duration > c.end_s:
                    continue  # does not fit in the remaining contact
                ch.bundle_id = bundle.bundle_id
                ch.finish_s = t + duration

    def drain_inbox(self, sat_id: int, t: float) -> list[Bundle]:
        """Bundles delivered to a satellite and not yet consumed, up to time t."""
        pending = self.inboxes.get(sat_id, [])
        ready = [
            bid
            for bid in pending
            if self.records[bid].delivered_at_s is not None
            and self.records[bid].delivered_at_s <= t
        ]
        self.inboxes[sat_id] = [bid for bid in pending if bid not in ready]
        return [self.bundles[bid] for bid in ready]

    def conservation(self) -> dict[str, int]:
        """Created = delivered + dropped + in-flight, per the whole simulation."""
        delivered = sum(1 for r in self.records.values() if r.delivered_at_s is not None)
        dropped = sum(1 for r in self.records.values() if r.dropped)
        created = len(self.records)
        return {
            "created": created,
            "delivered": delivered,
            "dropped": dropped,
            "in_flight": created - delivered - dropped,
        }


def latency_stats(
    records: list[DeliveryRecord],
    gaps: dict[int, list[tuple[tuple[int, int], float]]],
) -> dict:
    """Latency and access-gap summary with per-pair consensus flags.

    records: delivery records (at least one required). gaps: per-region
    output of the region access-gap analysis. The consensus flag for a
    (satellite pair, region) is true when the pair's worst delivery latency
    beats the region's smallest access gap for that pair, i.e. information
    always arrives before the next opportunity.
    """
    if not records:
        raise ValueError("latency statistics require at least one delivery record")
    latencies = [r.latency_s for r in records if r.latency_s is not None]
    by_priority: dict[int, list[float]] = {}
    for r in records:
        if r.latency_s is not None:
            by_priority.setdefault(r.priority, []).append(r.latency_s)
    per_priority = {
        p: {"median": statistics.median(v), "max": max(v), "count": len(v)}
        for p, v in sorted(by_priority.items())
    }

    per_region = {}
    consensus = {}
    pair_latency: dict[tuple[int, int], float] = {}
    for r in records:
        if r.latency_s is None:
            continue
        pair = (r.src_sat, r.dst_sat)
        pair_latency[pair] = max(pair_latency.get(pair, 0.0), r.latency_s)
    for region_id, region_gaps in gaps.items():
        gap_values = [g for _, g in region_gaps]
        if gap_values:
            per_region[region_id] = {
                "median_gap": statistics.median(gap_values),
                "min_gap": min(gap_values),
                "count": len(gap_values),
            }
        pair_min_gap: dict[tuple[int, int], float] = {}
        for pair, gap in region_gaps:
            pair_min_gap[pair] = min(pair_min_gap.get(pair, float("inf")), gap)
        for pair, min_gap in pair_min_gap.items():
            if pair in pair_latency:
                consensus[(pair, region_id)] = pair_latency[pair] < min_gap

    all_gaps = [g for region_gaps in gaps.values() for _, g in region_gaps]
    summary = {
        "median_latency": statistics.median(latencies) if latencies else None,
        "max_latency": max(latencies) if latencies else None,
        "delivered": len(latencies),
        "per_priority": per_priority,
        "per_region": per_region,
        "consensus": consensus,
    }
    if latencies and all_gaps:
        summary["median_gap"] = statistics.median(all_gaps)
        summary["latency_gap_ratio"] = (
            summary["median_latency"] / summary["median_gap"]
            if summary["median_gap"] > 0
            else float("inf")
        )
    return summary


def write_deliveries_csv(records: list[DeliveryRecord], path: str) -> None:
    """Export delivery records: bundle_id, src, dst, created_at, delivered_at, priority, hops, status."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["bundle_id", "src", "dst", "created_at_s", "delivered_at_s", "priority", "hops", "status"]
        )
        for r in sorted(records, key=lambda x: x.bundle_id):
            status = "delivered" if r.delivered_at_s is not None else (
                "dropped" if r.dropped else "in_flight"
            )
            writer.writerow(
                [
                    r.bundle_id,
                    r.src_sat,
                    r.dst_sat,
                    f"{r.created_at_s:.3f}",
                    f"{r.delivered_at_s:.3f}" if r.delivered_at_s is not None else "",
                    r.priority,
                    r.hops,
                    status,
                ]
            )
