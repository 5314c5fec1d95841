"""Parse historical trip tables and build the aggregates generation needs.

Input formats are flat CSV: a trip table, a zone table, and an optional road
adjacency edge list. Malformed trip rows are collected, not fatal; a parse
returns both the accepted records and per-row errors.
"""
from __future__ import annotations

import csv
import datetime as dt
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .model import (
    CorruptInputError,
    IndividualProfile,
    RoadNetwork,
    TimeSlotPartition,
    TravellerType,
    TripRecord,
    Zone,
    hhmm_to_minute,
)

log = logging.getLogger(__name__)

TRIP_COLUMNS = (
    "traveller_id",
    "traveller_type",
    "date",
    "departure_time",
    "time_slot",
    "o_zone",
    "d_zone",
    "path",
    "duration",
)

ZONE_COLUMNS = ("zone_id", "longitude", "latitude", "roads")

PATH_SEPARATOR = "-"
ROAD_LIST_SEPARATOR = ";"


@dataclass(frozen=True)
class RowError:
    """One rejected CSV row: physical line number plus a stable reason kind."""

    line: int
    reason: str
    detail: str = ""


@dataclass
class ParseResult:
    records: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def error_counts(self) -> Counter:
        return Counter(err.reason for err in self.errors)


def _header_index(header, wanted, schema=None, what="trip"):
    """Map canonical column names to indices, case-insensitively.

    `schema` optionally renames canonical -> actual CSV column names.
    A missing column is a hard error: nothing row-level can recover it.
    """
    schema = schema or {}
    lookup = {name.strip().lower(): i for i, name in enumerate(header)}
    index = {}
    for name in wanted:
        actual = schema.get(name, name).strip().lower()
        if actual not in lookup:
            raise ValueError(f"{what} table is missing column {actual!r}")
        index[name] = lookup[actual]
    return index


def parse_day_index(text: str, epoch: dt.date) -> int:
    """Day index from either an ISO date or a bare integer offset."""
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    return (dt.date.fromisoformat(text) - epoch).days


def parse_trips(
    stream,
    partition: TimeSlotPartition,
    epoch: dt.date,
    *,
    schema=None,
    duration_divisor: float = 1.0,
    delimiter: str = ",",
) -> ParseResult:
    """Parse a historical trip CSV into TripRecords.

    The slot of each record is derived from its departure minute under
    `partition`; the textual time-slot column is not trusted. Durations are
    divided by `duration_divisor` (60.0 for input in seconds) and rounded to
    whole minutes. Bad rows become RowErrors and parsing continues.
    """
    reader = csv.reader(stream, delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("trip table is empty") from None
    col = _header_index(header, TRIP_COLUMNS, schema)

    result = ParseResult()
    for row in reader:
        if not row or all(not cell.strip() for cell in row):
            continue
        line = reader.line_num
        if len(row) <= max(col.values()):
            result.errors.append(RowError(line, "short row", f"{len(row)} fields"))
            continue
        try:
            ttype = TravellerType.parse(row[col["traveller_type"]])
        except ValueError:
            result.errors.append(
                RowError(line, "unknown traveller type", row[col["traveller_type"]])
            )
            continue
        try:
            day = parse_day_index(row[col["date"]], epoch)
        except ValueError:
            result.errors.append(RowError(line, "bad date", row[col["date"]]))
            continue
        try:
            departure = hhmm_to_minute(row[col["departure_time"]])
        except ValueError:
            result.errors.append(
                RowError(line, "bad departure time", row[col["departure_time"]])
            )
            continue
        try:
            raw = float(row[col["duration"]])
            duration = round(raw / duration_divisor)
        except ValueError:
            result.errors.append(RowError(line, "bad duration", row[col["duration"]]))
            continue
        if duration < 1:
            result.errors.append(RowError(line, "bad duration", row[col["duration"]]))
            continue
        path = tuple(p for p in row[col["path"]].split(PATH_SEPARATOR) if p)
        if not path:
            result.errors.append(RowError(line, "empty path"))
            continue
        o_zone = row[col["o_zone"]].strip()
        d_zone = row[col["d_zone"]].strip()
        if not o_zone or not d_zone:
            result.errors.append(RowError(line, "missing zone"))
            continue
        result.records.append(
            TripRecord(
                traveller_id=row[col["traveller_id"]].strip(),
                traveller_type=ttype,
                date=day,
                departure=departure,
                slot=partition.slot_of(departure).slot_id,
                o_zone=o_zone,
                d_zone=d_zone,
                path=path,
                duration=duration,
            )
        )
    if result.errors:
        log.warning(
            "rejected %d trip rows: %s",
            len(result.errors),
            dict(result.error_counts),
        )
    return result


def parse_zones(stream, *, schema=None, delimiter: str = ",") -> list:
    """Parse the zone table. Duplicate zone ids are a hard error."""
    reader = csv.reader(stream, delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("zone table is empty") from None
    col = _header_index(header, ZONE_COLUMNS, schema, what="zone")
    zones = []
    seen = set()
    for row in reader:
        if not row or all(not cell.strip() for cell in row):
            continue
        zone_id = row[col["zone_id"]].strip()
        if not zone_id:
            raise ValueError(f"line {reader.line_num}: missing zone id")
        if zone_id in seen:
            raise ValueError(f"line {reader.line_num}: duplicate zone id {zone_id!r}")
        seen.add(zone_id)
        roads = frozenset(
            r for r in row[col["roads"]].split(ROAD_LIST_SEPARATOR) if r.strip()
        )
        zones.append(
            Zone(
                zone_id=zone_id,
                longitude=float(row[col["longitude"]]),
                latitude=float(row[col["latitude"]]),
                roads=roads,
            )
        )
    return zones


def parse_network(stream) -> RoadNetwork:
    """Parse a road adjacency edge list: one `road_id,neighbor_id` per line.

    A leading header line is tolerated and skipped.
    """
    edges = []
    for i, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 or not all(parts):
            raise ValueError(f"line {i}: expected 'road_id,neighbor_id', got {raw!r}")
        if i == 1 and parts[0].lower() == "road_id":
            continue
        edges.append((parts[0], parts[1]))
    return RoadNetwork.from_edges(edges)


def build_profiles(trips, partition: TimeSlotPartition, window_days: int) -> dict:
    """Fold trips into per-individual history profiles.

    Returns {traveller_id: IndividualProfile}. If an individual appears under
    more than one traveller type, the first-seen type wins and a warning is
    logged.
    """
    if window_days < 1:
        raise ValueError("window_days must be >= 1")
    types: dict = {}
    per_period: dict = defaultdict(Counter)
    per_origin: dict = defaultdict(Counter)
    per_destination: dict = defaultdict(Counter)
    od_counts: dict = defaultdict(lambda: defaultdict(Counter))
    slot_origin: dict = defaultdict(lambda: defaultdict(Counter))
    conflicted = set()

    for trip in trips:
        tid = trip.traveller_id
        if tid not in types:
            types[tid] = trip.traveller_type
        elif types[tid] is not trip.traveller_type:
            conflicted.add(tid)
        per_period[tid][trip.departure] += 1
        per_origin[tid][trip.o_zone] += 1
        per_destination[tid][trip.d_zone] += 1
        od_counts[tid][trip.o_zone][trip.d_zone] += 1
        slot_origin[tid][partition.slot_of(trip.departure).slot_id][trip.o_zone] += 1

    if conflicted:
        log.warning(
            "%d individuals appear under multiple traveller types; keeping first-seen",
            len(conflicted),
        )

    profiles = {}
    for tid in sorted(types):
        profiles[tid] = IndividualProfile(
            traveller_id=tid,
            traveller_type=types[tid],
            total_trips=sum(per_period[tid].values()),
            per_period=dict(per_period[tid]),
            per_origin=dict(per_origin[tid]),
            per_destination=dict(per_destination[tid]),
            od_counts={o: dict(dst) for o, dst in od_counts[tid].items()},
            slot_origin_counts={s: dict(by_o) for s, by_o in slot_origin[tid].items()},
            observed_days=window_days,
        )
    return profiles


@dataclass(frozen=True)
class PathEntry:
    """One pooled route between a zone pair, with its crowd-level count."""

    path_id: str
    path: tuple
    crowd_count: int


class PathCatalog:
    """Crowd-level route pool: (o_zone, d_zone) -> observed paths with counts."""

    def __init__(self, entries):
        self.entries = {od: tuple(paths) for od, paths in entries.items()}

    def get(self, o_zone: str, d_zone: str):
        return self.entries.get((o_zone, d_zone), ())

    def __contains__(self, od) -> bool:
        return od in self.entries

    def od_pairs(self):
        return sorted(self.entries)

    def __len__(self):
        return len(self.entries)


def path_id_of(path) -> str:
    """Canonical identity of a road sequence (the rendered sequence itself)."""
    return PATH_SEPARATOR.join(path)


def build_path_catalog(trips) -> PathCatalog:
    """Pool paths across all individuals per OD pair, counting occurrences."""
    counts: dict = defaultdict(Counter)
    paths_by_id: dict = {}
    for trip in trips:
        pid = path_id_of(trip.path)
        counts[(trip.o_zone, trip.d_zone)][pid] += 1
        paths_by_id[pid] = trip.path
    entries = {}
    for od in sorted(counts):
        entries[od] = tuple(
            PathEntry(pid, paths_by_id[pid], n)
            for pid, n in sorted(counts[od].items())
        )
    return PathCatalog(entries)


@dataclass
class DurationPool:
    """Historical trip durations pooled by (path, slot), with path-only fallback."""

    samples: dict = field(default_factory=dict)  # (path_id, slot_id) -> tuple
    fallback: dict = field(default_factory=dict)  # path_id -> tuple


def build_duration_pools(trips, partition: TimeSlotPartition) -> DurationPool:
    samples: dict = defaultdict(list)
    fallback: dict = defaultdict(list)
    for trip in trips:
        pid = path_id_of(trip.path)
        slot_id = partition.slot_of(trip.departure).slot_id
        samples[(pid, slot_id)].append(trip.duration)
        fallback[pid].append(trip.duration)
    return DurationPool(
        samples={k: tuple(sorted(v)) for k, v in samples.items()},
        fallback={k: tuple(sorted(v)) for k, v in fallback.items()},
    )


@dataclass
class TypeAggregate:
    """Crowd-level departure-time counts for one traveller type."""

    u_slot: dict
    u_period: dict
    total: int

    @classmethod
    def from_period_counts(cls, u_period, partition: TimeSlotPartition) -> "TypeAggregate":
        u_slot: Counter = Counter()
        for minute, n in u_period.items():
            u_slot[partition.slot_of(minute).slot_id] += n
        return cls(u_slot=dict(u_slot), u_period=dict(u_period), total=sum(u_period.values()))

    def slot_share(self, slot_id: int) -> float:
        if self.total == 0:
            return 0.0
        return self.u_slot.get(slot_id, 0) / self.total

    def period_share(self, minute: int) -> float:
        if self.total == 0:
            return 0.0
        return self.u_period.get(minute, 0) / self.total


class ReferenceAggregates:
    """Per-type reference departure-time distributions from the seed data."""

    def __init__(self, by_type):
        self.by_type = dict(by_type)

    def aggregate(self, ttype: TravellerType) -> TypeAggregate:
        try:
            return self.by_type[ttype]
        except KeyError:
            raise CorruptInputError(
                f"no reference aggregate for type {ttype.value!r}"
            ) from None

    def total(self, ttype: TravellerType) -> int:
        agg = self.by_type.get(ttype)
        return agg.total if agg else 0

    def slot_share(self, ttype: TravellerType, slot_id: int) -> float:
        agg = self.by_type.get(ttype)
        return agg.slot_share(slot_id) if agg else 0.0

    def period_share(self, ttype: TravellerType, minute: int) -> float:
        agg = self.by_type.get(ttype)
        return agg.period_share(minute) if agg else 0.0


def build_reference_aggregates(trips, partition: TimeSlotPartition) -> ReferenceAggregates:
    """Count departures per minute and per slot, keyed by traveller type."""
    per_type_minutes: dict = defaultdict(Counter)
    for trip in trips:
        per_type_minutes[trip.traveller_type][trip.departure] += 1
    return ReferenceAggregates(
        {
            ttype: TypeAggregate.from_period_counts(minutes, partition)
            for ttype, minutes in per_type_minutes.items()
        }
    )
