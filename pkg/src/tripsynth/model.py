"""Core domain types for trip synthesis.

Time is a 1-based minute-of-day grid (1..1440) plus an integer day index.
Calendar dates only exist at the CSV boundary; see `ingest` and `cli`.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum

MINUTES_PER_DAY = 1440

# A time period is one minute of the day, 1-based: minute 1 starts at 00:00,
# minute 1440 starts at 23:59.
TimePeriod = int


class UnknownRoadError(LookupError):
    """A path references a road that is not part of the road network."""


class CorruptInputError(ValueError):
    """Prepared inputs are internally inconsistent (e.g. a missing OD entry)."""


def hhmm_to_minute(text: str) -> int:
    """Parse 'HH:MM' into a 1-based minute of day ('00:00' -> 1)."""
    hh, _, mm = text.partition(":")
    if not (hh.isdigit() and mm.isdigit() and len(mm) == 2):
        raise ValueError(f"bad time of day: {text!r}")
    if int(mm) >= 60:
        raise ValueError(f"bad time of day: {text!r}")
    minute = int(hh) * 60 + int(mm) + 1
    if not 1 <= minute <= MINUTES_PER_DAY:
        raise ValueError(f"time of day out of range: {text!r}")
    return minute


def minute_to_hhmm(minute: int) -> str:
    """Render a 1-based minute of day as 'HH:MM' (1 -> '00:00')."""
    if not 1 <= minute <= MINUTES_PER_DAY:
        raise ValueError(f"minute out of range: {minute}")
    return f"{(minute - 1) // 60:02d}:{(minute - 1) % 60:02d}"


class TravellerType(Enum):
    """Behavioural classes used to keep aggregate feedback separate."""

    COMMUTER = "commuter"
    STABLE = "stable"
    RANDOM = "random"
    HIGH_FREQ = "high_freq"
    PASSBY = "passby"

    @classmethod
    def parse(cls, text: str) -> "TravellerType":
        """Parse a CSV label, tolerating case, spaces, hyphens and a
        trailing 'traveller' word ('High-freq traveller' -> HIGH_FREQ)."""
        key = text.strip().lower().replace("-", "_").replace(" ", "_")
        for suffix in ("_traveller", "_traveler"):
            if key.endswith(suffix):
                key = key[: -len(suffix)]
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown traveller type: {text!r}")


TYPE_ORDER: tuple[TravellerType, ...] = tuple(TravellerType)


@dataclass(frozen=True)
class TimeSlot:
    """A contiguous run of minutes [start, end], both 1-based inclusive."""

    slot_id: int
    start: int
    end: int

    def __post_init__(self):
        if not (1 <= self.start <= self.end <= MINUTES_PER_DAY):
            raise ValueError(f"bad slot bounds: [{self.start}, {self.end}]")

    def __contains__(self, minute: int) -> bool:
        return self.start <= minute <= self.end

    def width(self) -> int:
        return self.end - self.start + 1

    def label(self) -> str:
        """Clock-interval label, e.g. [421, 480] -> '07:00-08:00'."""
        lo = self.start - 1
        hi = self.end  # exclusive right edge in wall-clock terms
        return f"{lo // 60:02d}:{lo % 60:02d}-{hi // 60:02d}:{hi % 60:02d}"


class TimeSlotPartition:
    """An ordered partition of the 1440-minute day into disjoint slots.

    Every minute belongs to exactly one slot; slot ids are 1-based and
    ordered by start minute.
    """

    def __init__(self, slots):
        slots = tuple(slots)
        if not slots:
            raise ValueError("empty partition")
        if slots[0].start != 1 or slots[-1].end != MINUTES_PER_DAY:
            raise ValueError("partition must cover minutes 1..1440")
        for prev, cur in zip(slots, slots[1:]):
            if cur.start != prev.end + 1:
                raise ValueError(
                    f"partition gap/overlap between slot {prev.slot_id} and {cur.slot_id}"
                )
        for i, slot in enumerate(slots, start=1):
            if slot.slot_id != i:
                raise ValueError("slot ids must run 1..n in order")
        self.slots = slots
        self._starts = [s.start for s in slots]

    @classmethod
    def from_boundaries(cls, starts) -> "TimeSlotPartition":
        """Build from ascending slot start minutes; the first must be 1."""
        starts = sorted(set(int(s) for s in starts))
        if not starts or starts[0] != 1:
            raise ValueError("slot starts must begin at minute 1")
        if starts[-1] > MINUTES_PER_DAY:
            raise ValueError("slot start beyond end of day")
        ends = [s - 1 for s in starts[1:]] + [MINUTES_PER_DAY]
        return cls(
            TimeSlot(i, a, b) for i, (a, b) in enumerate(zip(starts, ends), start=1)
        )

    @classmethod
    def hourly(cls) -> "TimeSlotPartition":
        return cls.from_boundaries(range(1, MINUTES_PER_DAY + 1, 60))

    def slot_of(self, minute: int) -> TimeSlot:
        """The unique slot containing a 1-based minute of day."""
        if not 1 <= minute <= MINUTES_PER_DAY:
            raise ValueError(f"minute out of range: {minute}")
        idx = bisect.bisect_right(self._starts, minute) - 1
        return self.slots[idx]

    def by_id(self, slot_id: int) -> TimeSlot:
        if not 1 <= slot_id <= len(self.slots):
            raise ValueError(f"unknown slot id: {slot_id}")
        return self.slots[slot_id - 1]

    def __len__(self):
        return len(self.slots)

    def __iter__(self):
        return iter(self.slots)

    def __eq__(self, other):
        return isinstance(other, TimeSlotPartition) and self.slots == other.slots

    def boundaries(self) -> list[int]:
        return list(self._starts)


@dataclass(frozen=True, order=True)
class GenClock:
    """Generation-time position: (day index, minute of day). Orders lexically."""

    day: int
    minute: int

    def __post_init__(self):
        if not 1 <= self.minute <= MINUTES_PER_DAY:
            raise ValueError(f"clock minute out of range: {self.minute}")


@dataclass(frozen=True)
class Zone:
    """A traffic zone with a representative point and its bounding roads."""

    zone_id: str
    longitude: float
    latitude: float
    roads: frozenset = frozenset()


class RoadNetwork:
    """Directed road adjacency; roads are opaque string ids."""

    def __init__(self, adjacency):
        adj = {}
        roads = set()
        for road, neighbors in adjacency.items():
            adj[road] = frozenset(neighbors)
            roads.add(road)
            roads.update(neighbors)
        for road in roads:
            adj.setdefault(road, frozenset())
        self._adjacency = adj
        self.roads = frozenset(roads)

    @classmethod
    def from_edges(cls, edges) -> "RoadNetwork":
        """Build from (road, neighbor) pairs, one direction per pair."""
        adj: dict = {}
        for a, b in edges:
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set())
        return cls(adj)

    @classmethod
    def from_paths(cls, paths) -> "RoadNetwork":
        """Infer adjacency from consecutive roads of observed trip paths."""
        adj: dict = {}
        for path in paths:
            for a, b in zip(path, path[1:]):
                adj.setdefault(a, set()).add(b)
                adj.setdefault(b, set())
            if path:
                adj.setdefault(path[0], set())
        return cls(adj)

    def __contains__(self, road: str) -> bool:
        return road in self.roads

    def neighbors(self, road: str) -> frozenset:
        try:
            return self._adjacency[road]
        except KeyError:
            raise UnknownRoadError(road) from None

    def adjacent(self, a: str, b: str) -> bool:
        return b in self.neighbors(a)

    def edges(self):
        """Iterate (road, neighbor) pairs in sorted order."""
        for road in sorted(self._adjacency):
            for nb in sorted(self._adjacency[road]):
                yield road, nb


def path_is_continuous(path, net: RoadNetwork) -> bool:
    """True iff every consecutive road pair of `path` is adjacent in `net`.

    A single-road path is continuous. Raises UnknownRoadError for roads
    absent from the network.
    """
    if not path:
        raise ValueError("empty path")
    for road in path:
        if road not in net:
            raise UnknownRoadError(road)
    return all(net.adjacent(a, b) for a, b in zip(path, path[1:]))


@dataclass(frozen=True)
class TripRecord:
    """One observed or synthesized trip."""

    traveller_id: str
    traveller_type: TravellerType
    date: int  # day index relative to the configured epoch
    departure: int  # 1-based minute of day
    slot: int  # slot id within the active partition
    o_zone: str
    d_zone: str
    path: tuple
    duration: int  # minutes

    def __post_init__(self):
        if not 1 <= self.departure <= MINUTES_PER_DAY:
            raise ValueError(f"departure out of range: {self.departure}")
        if self.duration < 1:
            raise ValueError(f"non-positive duration: {self.duration}")
        if not self.path:
            raise ValueError("empty path")
        if not self.o_zone or not self.d_zone:
            raise ValueError("missing zone id")


@dataclass(frozen=True)
class IndividualProfile:
    """Aggregated trip history of one individual over an observation window.

    All counters are plain dicts over observed keys only; missing keys mean
    zero. `od_counts` maps origin -> {destination: trips}; the per-slot
    origin breakdown `slot_origin_counts` maps slot id -> {origin: trips}.
    """

    traveller_id: str
    traveller_type: TravellerType
    total_trips: int
    per_period: dict = field(repr=False)
    per_origin: dict = field(repr=False)
    per_destination: dict = field(repr=False)
    od_counts: dict = field(repr=False)
    slot_origin_counts: dict = field(repr=False)
    observed_days: int = 1

    def slot_total(self, slot_id: int) -> int:
        """Trips departing within one slot (sum over origins)."""
        return sum(self.slot_origin_counts.get(slot_id, {}).values())

    def slot_totals(self) -> dict:
        return {s: sum(by_origin.values()) for s, by_origin in self.slot_origin_counts.items()}
