"""Sequential trip synthesis with crowd-level feedback.

Each individual is walked through the generation horizon day by day. Every
trip picks, in order: a departure time slot, a departure minute inside it, a
destination, a route, and a duration. Slot choice multiplies three factor
families: a logic factor that discounts slots the clock has passed or that
are reserved for later trips of the day, a feedback factor that compares the
running share of generated departures per slot against the seed data (kept
separately per traveller type), and the individual's own historical slot and
slot-given-origin preferences.
"""
from __future__ import annotations

import logging
import random
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .ingest import DurationPool, PathCatalog, ReferenceAggregates
from .model import (
    MINUTES_PER_DAY,
    TYPE_ORDER,
    CorruptInputError,
    GenClock,
    IndividualProfile,
    TimeSlot,
    TimeSlotPartition,
    TravellerType,
    TripRecord,
)

log = logging.getLogger(__name__)

# Floor applied to absolute share overshoots when every candidate minute is
# already at or above its reference share; keeps inverse weights finite.
DELTA_FLOOR = 1e-12


class InvalidParams(ValueError):
    """Generation parameters violate the required priority ordering."""


@dataclass
class GenParams:
    """Weighting constants and horizon for one generation run.

    The defaults satisfy kappa * blowup = 1: a slot that is merely behind on
    its aggregate share can at best draw level with, never overtake, a slot
    that is still logically available. epsilon keeps every available slot
    reachable but far below any genuine historical preference.
    """

    kappa: float = 1e-9
    epsilon: float = 1e-6
    mu: float = 1.0
    blowup: float = 1e9
    min_gap: int = 1
    horizon_start: GenClock = GenClock(0, 1)
    horizon_end: GenClock = GenClock(6, MINUTES_PER_DAY)
    rng_seed: int = 0

    def check(self, max_trip_frequency: int = 0) -> None:
        """Reject constant choices that break factor priorities."""
        if self.kappa <= 0.0:
            raise InvalidParams("kappa must be positive")
        if self.epsilon <= 0.0:
            raise InvalidParams("epsilon must be positive")
        if self.blowup <= 1.0:
            raise InvalidParams("blowup must exceed 1")
        if self.mu != 1.0:
            raise InvalidParams("only the unit imbalance domain (mu=1) is supported")
        if self.min_gap < 0:
            raise InvalidParams("min_gap must be >= 0")
        if 1.0 / self.blowup >= self.epsilon:
            raise InvalidParams("1/blowup must stay below epsilon")
        if max_trip_frequency > 0 and self.epsilon >= 1.0 / max_trip_frequency:
            raise InvalidParams(
                "epsilon must stay below 1/max_trip_frequency "
                f"(= 1/{max_trip_frequency})"
            )
        if not 0.5 <= self.kappa * self.blowup <= 2.0:
            raise InvalidParams("kappa * blowup must stay near 1")


class AggregationLedger:
    """Running per-type departure counts of already generated trips.

    Shares are defined as 0 while a type has no generated trips yet.
    """

    def __init__(self):
        self._slot = defaultdict(Counter)
        self._minute = defaultdict(Counter)
        self._total = Counter()

    def record(self, ttype: TravellerType, slot_id: int, minute: int) -> None:
        self._slot[ttype][slot_id] += 1
        self._minute[ttype][minute] += 1
        self._total[ttype] += 1

    def total(self, ttype: TravellerType) -> int:
        return self._total[ttype]

    def slot_share(self, ttype: TravellerType, slot_id: int) -> float:
        total = self._total[ttype]
        if total == 0:
            return 0.0
        return self._slot[ttype][slot_id] / total

    def period_share(self, ttype: TravellerType, minute: int) -> float:
        total = self._total[ttype]
        if total == 0:
            return 0.0
        return self._minute[ttype][minute] / total

    def slot_counts(self, ttype: TravellerType) -> dict:
        return dict(self._slot[ttype])

    def minute_counts(self, ttype: TravellerType) -> dict:
        return dict(self._minute[ttype])


@dataclass
class GenCursor:
    """Mutable per-individual generation state."""

    profile: IndividualProfile
    clock: GenClock
    location: str
    daily_quota: int
    generated_today: int = 0


@dataclass
class GenStats:
    """Bookkeeping for one generation run."""

    trips: int = 0
    relocations: int = 0  # trips whose origin was relocated off the cursor
    chain_breaks: int = 0  # relocations that broke a consecutive-trip pair
    continuity_pairs: int = 0  # consecutive same-individual trip pairs
    quarantined: list = field(default_factory=list)


def initial_location(profile: IndividualProfile) -> str:
    """The zone this individual most frequently touched (origins plus
    destinations); lexicographically smallest id wins ties."""
    combined = Counter(profile.per_origin)
    combined.update(profile.per_destination)
    if not combined:
        raise CorruptInputError(f"profile {profile.traveller_id!r} has no trips")
    return max(sorted(combined), key=combined.__getitem__)


def most_frequent_origin(profile: IndividualProfile) -> str:
    """The zone this individual most frequently departed from (relocation
    target); lexicographically smallest id wins ties."""
    if not profile.per_origin:
        raise CorruptInputError(f"profile {profile.traveller_id!r} has no trips")
    return max(sorted(profile.per_origin), key=profile.per_origin.__getitem__)


def daily_quota(profile: IndividualProfile, rng: random.Random) -> int:
    """Trips to attempt today: floor of the mean daily rate, plus one with
    probability equal to the fractional remainder."""
    days = profile.observed_days
    base, rem = divmod(profile.total_trips, days)
    return base + (1 if rng.random() < rem / days else 0)


def subsequent_slots(partition: TimeSlotPartition, clock: GenClock, remaining: int):
    """Partition today's slots around the clock.

    Returns (reachable, reserved, active): `reachable` holds the slot under
    the clock and everything later; `reserved` holds the latest
    min(remaining - 1, len(reachable) - 1) of those, held back so later
    trips of the day keep somewhere to go; `active` is the difference and is
    never empty.
    """
    if remaining < 1:
        raise ValueError("remaining must be >= 1")
    first = partition.slot_of(clock.minute).slot_id
    reachable = list(range(first, len(partition) + 1))
    held = min(remaining - 1, len(reachable) - 1)
    active = reachable[: len(reachable) - held] if held > 0 else reachable
    reserved = reachable[len(active):]
    return frozenset(reachable), frozenset(reserved), frozenset(active)


def logic_factor(slot_id: int, active, kappa: float) -> float:
    """1 for an active slot, kappa for everything else."""
    return 1.0 if slot_id in active else kappa


def balance_weight(x: float, blowup: float) -> float:
    """Feedback curve over the share imbalance x in [-1, 1].

    Decreasing, with value 1 at balance, 0 at full overshoot, and blowup at
    full deficit: overshoots are damped linearly while deficits are boosted
    exponentially.
    """
    if x >= 0.0:
        return max(0.0, 1.0 - x)
    return blowup ** min(-x, 1.0)


def aggregation_factor(
    ledger: AggregationLedger,
    reference: ReferenceAggregates,
    ttype: TravellerType,
    slot_id: int,
    params: GenParams,
) -> float:
    """Feedback weight for one slot: generated share minus reference share,
    pushed through the balance curve."""
    if reference.total(ttype) == 0:
        raise CorruptInputError(f"no reference departures for type {ttype.value!r}")
    x = ledger.slot_share(ttype, slot_id) - reference.slot_share(ttype, slot_id)
    return balance_weight(x, params.blowup)


def preference_factors(
    profile: IndividualProfile, current_zone: str, slot_id: int
):
    """Individual preference weights for one slot.

    Returns (slot share of the individual's history, share of departures
    from `current_zone` that fall in this slot). The second term is 0 when
    the individual never departed from `current_zone`.
    """
    if profile.total_trips == 0:
        raise CorruptInputError(f"profile {profile.traveller_id!r} has no trips")
    slot_pref = profile.slot_total(slot_id) / profile.total_trips
    from_zone = profile.per_origin.get(current_zone, 0)
    if from_zone == 0:
        origin_pref = 0.0
    else:
        origin_pref = (
            profile.slot_origin_counts.get(slot_id, {}).get(current_zone, 0) / from_zone
        )
    return slot_pref, origin_pref


def slot_weights(
    partition: TimeSlotPartition,
    profile: IndividualProfile,
    current_zone: str,
    ledger: AggregationLedger,
    reference: ReferenceAggregates,
    clock: GenClock,
    remaining: int,
    params: GenParams,
) -> dict:
    """Unnormalized selection weight for every slot of the day."""
    _, _, active = subsequent_slots(partition, clock, remaining)
    ttype = profile.traveller_type
    weights = {}
    for slot in partition:
        cs = logic_factor(slot.slot_id, active, params.kappa)
        cr = aggregation_factor(ledger, reference, ttype, slot.slot_id, params)
        cp, cop = preference_factors(profile, current_zone, slot.slot_id)
        weights[slot.slot_id] = cs * cr * (cp * (1.0 + cop) + params.epsilon)
    return weights


def weighted_draw(labels, weights, rng: random.Random, k=None):
    """Draw from `labels` proportionally to non-negative `weights`.

    With k=None returns a single label; otherwise a list of k draws from the
    same cumulative table.
    """
    if len(labels) != len(weights):
        raise ValueError("labels and weights differ in length")
    if not labels:
        raise ValueError("nothing to draw from")
    if min(weights) < 0 or sum(weights) <= 0:
        raise ValueError("weights must be non-negative with positive sum")
    if k is None:
        return rng.choices(labels, weights=weights)[0]
    return rng.choices(labels, weights=weights, k=k)


def select_time_slot(weights: dict, rng: random.Random, allowed=None) -> int:
    """Sample a slot id proportionally to its weight.

    `allowed` optionally restricts (conditions) the draw to a subset of
    slots; weights are renormalized implicitly.
    """
    items = sorted(weights.items())
    if allowed is not None:
        items = [(s, w) for s, w in items if s in allowed]
    return weighted_draw([s for s, _ in items], [w for _, w in items], rng)


def period_weights(
    slot: TimeSlot,
    clock: GenClock,
    ledger: AggregationLedger,
    reference: ReferenceAggregates,
    ttype: TravellerType,
    floor: float = DELTA_FLOOR,
):
    """Candidate departure minutes inside `slot` with selection weights.

    Candidates run from max(slot start, clock minute) to the slot end. Where
    some minutes still trail their reference share, weights are those
    shortfalls (deficit-proportional); once every candidate is at or past
    its reference share, weights are inverse absolute overshoots, floored.
    """
    if reference.total(ttype) == 0:
        raise CorruptInputError(f"no reference departures for type {ttype.value!r}")
    start = max(slot.start, clock.minute)
    if start > slot.end:
        raise ValueError(f"slot {slot.slot_id} has no minutes left at {clock.minute}")
    minutes = list(range(start, slot.end + 1))
    deltas = [
        reference.period_share(ttype, m) - ledger.period_share(ttype, m)
        for m in minutes
    ]
    if any(d > 0.0 for d in deltas):
        weights = [max(0.0, d) for d in deltas]
    else:
        weights = [1.0 / max(abs(d), floor) for d in deltas]
    return minutes, weights


def select_time_period(
    slot: TimeSlot,
    clock: GenClock,
    ledger: AggregationLedger,
    reference: ReferenceAggregates,
    ttype: TravellerType,
    rng: random.Random,
) -> int:
    """Sample a departure minute inside the chosen slot."""
    minutes, weights = period_weights(slot, clock, ledger, reference, ttype)
    return weighted_draw(minutes, weights, rng)


def destination_weights(profile: IndividualProfile, origin: str):
    """Destination candidates and weights from `origin`, relocating to the
    individual's most frequent historical origin when `origin` has none.

    Returns (origin_used, destinations, weights, relocated).
    """
    row = profile.od_counts.get(origin)
    relocated = False
    if not row:
        origin = most_frequent_origin(profile)
        row = profile.od_counts[origin]
        relocated = True
    dests = sorted(row)
    return origin, dests, [row[d] for d in dests], relocated


def select_destination(profile: IndividualProfile, origin: str, rng: random.Random):
    """Sample a destination proportionally to the individual's historical
    OD counts from `origin`. Returns (destination, relocated)."""
    _, dests, weights, relocated = destination_weights(profile, origin)
    return weighted_draw(dests, weights, rng), relocated


def select_path(catalog: PathCatalog, o_zone: str, d_zone: str, rng: random.Random):
    """Sample a pooled route for the OD pair proportionally to crowd counts."""
    entries = catalog.get(o_zone, d_zone)
    if not entries:
        raise CorruptInputError(f"no pooled path for OD pair ({o_zone}, {d_zone})")
    return entries[
        weighted_draw(range(len(entries)), [e.crowd_count for e in entries], rng)
    ]


def sample_duration(
    pools: DurationPool, path_id: str, slot_id: int, rng: random.Random
) -> int:
    """Uniform draw from historical durations of (path, slot); falls back to
    the path-only pool when that slot was never observed."""
    pool = pools.samples.get((path_id, slot_id))
    if not pool:
        pool = pools.fallback.get(path_id)
    if not pool:
        raise CorruptInputError(f"no recorded durations for path {path_id!r}")
    return pool[rng.randrange(len(pool))]


def generate_trip(
    cursor: GenCursor,
    partition: TimeSlotPartition,
    ledger: AggregationLedger,
    reference: ReferenceAggregates,
    catalog: PathCatalog,
    pools: DurationPool,
    params: GenParams,
    rng: random.Random,
) -> TripRecord:
    """Generate one trip and advance the cursor.

    The slot draw is conditioned on slots that still have minutes at or
    after the clock; a slot already entirely in the past carries only a
    kappa-scale weight anyway, and no departure minute inside it could
    respect the clock. Records the trip in the ledger, moves the location
    to the destination and pushes the clock past arrival plus the minimum
    gap, rolling over midnight if needed.
    """
    profile = cursor.profile
    remaining = cursor.daily_quota - cursor.generated_today
    if remaining < 1:
        raise ValueError("no remaining quota today")
    weights = slot_weights(
        partition, profile, cursor.location, ledger, reference,
        cursor.clock, remaining, params,
    )
    reachable, _, active = subsequent_slots(partition, cursor.clock, remaining)
    if any(weights[s] > 0.0 for s in reachable):
        slot_id = select_time_slot(weights, rng, allowed=reachable)
    else:
        # Degenerate corner: every reachable slot weighs exactly 0 (possible
        # only when feedback hits full overshoot on zero-preference slots).
        slot_id = rng.choice(sorted(active))
    slot = partition.by_id(slot_id)
    ttype = profile.traveller_type
    departure = select_time_period(slot, cursor.clock, ledger, reference, ttype, rng)
    destination, relocated = select_destination(profile, cursor.location, rng)
    origin = most_frequent_origin(profile) if relocated else cursor.location
    entry = select_path(catalog, origin, destination, rng)
    duration = sample_duration(pools, entry.path_id, slot_id, rng)

    trip = TripRecord(
        traveller_id=profile.traveller_id,
        traveller_type=ttype,
        date=cursor.clock.day,
        departure=departure,
        slot=slot_id,
        o_zone=origin,
        d_zone=destination,
        path=entry.path,
        duration=duration,
    )
    ledger.record(ttype, slot_id, departure)

    minute = departure + duration + params.min_gap
    day = cursor.clock.day
    while minute > MINUTES_PER_DAY:
        minute -= MINUTES_PER_DAY
        day += 1
    cursor.location = destination
    cursor.clock = GenClock(day, minute)
    cursor.generated_today += 1
    return trip


def _generate_individual(
    profile, partition, ledger, reference, catalog, pools, params, rng
) -> list:
    """All trips of one individual over the horizon, chronological."""
    cursor = GenCursor(
        profile=profile,
        clock=params.horizon_start,
        location=initial_location(profile),
        daily_quota=daily_quota(profile, rng),
    )
    trips = []
    while cursor.clock <= params.horizon_end:
        if cursor.generated_today >= cursor.daily_quota:
            # Today's quota is done: jump to the start of the next day.
            cursor.clock = GenClock(cursor.clock.day + 1, 1)
            cursor.daily_quota = daily_quota(profile, rng)
            cursor.generated_today = 0
            continue
        day_before = cursor.clock.day
        trips.append(
            generate_trip(
                cursor, partition, ledger, reference, catalog, pools, params, rng
            )
        )
        if cursor.clock.day != day_before:
            # Trip spilled past midnight; the old day's unmet quota is dropped.
            cursor.daily_quota = daily_quota(profile, rng)
            cursor.generated_today = 0
    return trips


def _tally(profile, trips, stats: GenStats) -> None:
    """Fold one individual's result into the run statistics."""
    stats.trips += len(trips)
    prev = None
    expected = initial_location(profile)
    for trip in trips:
        if trip.o_zone != expected:
            stats.relocations += 1
            if prev is not None:
                stats.chain_breaks += 1
        if prev is not None:
            stats.continuity_pairs += 1
        prev = trip
        expected = trip.d_zone


def generate_all(
    profiles: dict,
    reference: ReferenceAggregates,
    catalog: PathCatalog,
    pools: DurationPool,
    params: GenParams,
    partition: TimeSlotPartition,
    *,
    workers: int = 1,
    stats: GenStats | None = None,
):
    """Generate trips for every profile; yields records grouped by traveller
    type (fixed type order), individuals in id order, trips chronological.

    Each type runs against its own feedback ledger and an independent RNG
    stream derived from (rng_seed, type), so types may run concurrently
    without changing the output. An individual that fails mid-generation is
    quarantined (dropped, logged, listed in stats) and the run continues;
    its ledger contributions up to the failure remain.
    """
    params.check(max((p.total_trips for p in profiles.values()), default=0))
    stats = stats if stats is not None else GenStats()

    by_type = defaultdict(list)
    for tid in sorted(profiles):
        by_type[profiles[tid].traveller_type].append(profiles[tid])
    active_types = [t for t in TYPE_ORDER if by_type[t]]

    def run_type(ttype: TravellerType):
        rng = random.Random(f"{params.rng_seed}:{ttype.value}")
        ledger = AggregationLedger()
        out = []
        local = GenStats()
        for profile in by_type[ttype]:
            try:
                trips = _generate_individual(
                    profile, partition, ledger, reference, catalog, pools, params, rng
                )
            except Exception:
                local.quarantined.append(profile.traveller_id)
                log.warning(
                    "quarantined individual %s", profile.traveller_id, exc_info=True
                )
                continue
            _tally(profile, trips, local)
            out.extend(trips)
        return out, local

    if workers > 1 and len(active_types) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {t: pool.submit(run_type, t) for t in active_types}
            results = [(t, futures[t].result()) for t in active_types]
    else:
        results = [(t, run_type(t)) for t in active_types]

    for _, (out, local) in results:
        stats.trips += local.trips
        stats.relocations += local.relocations
        stats.chain_breaks += local.chain_breaks
        stats.continuity_pairs += local.continuity_pairs
        stats.quarantined.extend(local.quarantined)
        yield from out
