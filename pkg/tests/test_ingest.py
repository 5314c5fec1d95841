import datetime as dt
import io

import pytest

from tripsynth.ingest import (
    DurationPool,
    build_duration_pools,
    build_path_catalog,
    build_profiles,
    build_reference_aggregates,
    parse_network,
    parse_trips,
    parse_zones,
    path_id_of,
)
from tripsynth.model import (
    CorruptInputError,
    TimeSlotPartition,
    TravellerType,
    TripRecord,
)

EPOCH = dt.date(2019, 8, 12)
HOURLY = TimeSlotPartition.hourly()

HEADER = "traveller_ID,traveller_type,Date,Departure_time,Time_slot,O_zone,D_zone,Path,Duration"


def parse(rows, **kw):
    text = HEADER + "\n" + "\n".join(rows) + "\n"
    return parse_trips(io.StringIO(text), HOURLY, EPOCH, **kw)


def test_parse_single_row():
    result = parse(["V1,commuter,2019-08-12,07:31,07:00-08:00,Z3,Z9,r1-r4-r7,14"])
    assert not result.errors
    (trip,) = result.records
    assert trip.traveller_id == "V1"
    assert trip.traveller_type is TravellerType.COMMUTER
    assert trip.date == 0
    assert trip.departure == 452
    assert trip.slot == 8
    assert trip.o_zone == "Z3" and trip.d_zone == "Z9"
    assert trip.path == ("r1", "r4", "r7")
    assert trip.duration == 14


def test_slot_comes_from_departure_not_the_column():
    # mislabelled slot text must not leak into the record
    result = parse(["V1,commuter,2019-08-12,07:31,23:00-24:00,Z3,Z9,r1,14"])
    assert result.records[0].slot == 8


def test_date_accepts_bare_day_index():
    result = parse(["V1,commuter,3,07:31,,Z3,Z9,r1,14"])
    assert result.records[0].date == 3


def test_bad_rows_become_errors():
    result = parse(
        [
            "V1,commuter,2019-08-12,07:31,,Z3,Z9,r1,14",
            "V2,wizard,2019-08-12,07:31,,Z3,Z9,r1,14",
            "V3,commuter,teatime,07:31,,Z3,Z9,r1,14",
            "V4,commuter,2019-08-12,25:99,,Z3,Z9,r1,14",
            "V5,commuter,2019-08-12,07:31,,Z3,Z9,r1,soon",
            "V6,commuter,2019-08-12,07:31,,Z3,Z9,r1,0",
            "V7,commuter,2019-08-12,07:31,,Z3,Z9,,14",
            "V8,commuter,2019-08-12,07:31,,,Z9,r1,14",
            "V9,commuter",
        ]
    )
    assert len(result.records) == 1
    assert result.error_counts == {
        "unknown traveller type": 1,
        "bad date": 1,
        "bad departure time": 1,
        "bad duration": 2,
        "empty path": 1,
        "missing zone": 1,
        "short row": 1,
    }


def test_blank_lines_skipped():
    result = parse(["", "V1,commuter,0,07:31,,Z3,Z9,r1,14", " , , "])
    assert len(result.records) == 1 and not result.errors


def test_schema_renames_columns():
    text = "uid,kind,Date,Departure_time,Time_slot,O_zone,D_zone,Path,Duration\n" \
        "V1,commuter,0,07:31,,Z3,Z9,r1,14\n"
    result = parse_trips(
        io.StringIO(text),
        HOURLY,
        EPOCH,
        schema={"traveller_id": "uid", "traveller_type": "kind"},
    )
    assert result.records[0].traveller_id == "V1"


def test_missing_column_is_fatal():
    text = "traveller_ID,traveller_type,Date,O_zone,D_zone,Path,Duration\nV1,commuter,0,Z3,Z9,r1,14\n"
    with pytest.raises(ValueError, match="departure_time"):
        parse_trips(io.StringIO(text), HOURLY, EPOCH)


def test_empty_stream_is_fatal():
    with pytest.raises(ValueError, match="empty"):
        parse_trips(io.StringIO(""), HOURLY, EPOCH)


def test_duration_divisor_converts_seconds():
    result = parse(
        ["V1,commuter,0,07:31,,Z3,Z9,r1,870"],
        duration_divisor=60.0,
    )
    assert result.records[0].duration == 14  # 870 s -> 14.5 min, banker's round


def test_parse_zones():
    text = "Zone_ID,Longitude,Latitude,Roads\nZ1,116.3,39.9,r1;r2\nZ2,116.4,39.9,\n"
    zones = parse_zones(io.StringIO(text))
    assert [z.zone_id for z in zones] == ["Z1", "Z2"]
    assert zones[0].roads == {"r1", "r2"}
    assert zones[1].roads == frozenset()


def test_parse_zones_duplicate_id_is_fatal():
    text = "Zone_ID,Longitude,Latitude,Roads\nZ1,0,0,\nZ1,1,1,\n"
    with pytest.raises(ValueError, match="duplicate"):
        parse_zones(io.StringIO(text))


def test_parse_network_tolerates_header():
    net = parse_network(io.StringIO("road_id,neighbor_id\nr1,r2\nr2,r3\n"))
    assert net.adjacent("r1", "r2") and net.adjacent("r2", "r3")
    with pytest.raises(ValueError):
        parse_network(io.StringIO("r1,r2,r3\n"))


def trip(tid, ttype, day, dep, o, d, path=("r1",), dur=10):
    return TripRecord(
        traveller_id=tid,
        traveller_type=ttype,
        date=day,
        departure=dep,
        slot=HOURLY.slot_of(dep).slot_id,
        o_zone=o,
        d_zone=d,
        path=path,
        duration=dur,
    )


@pytest.fixture
def history():
    t = TravellerType.COMMUTER
    return [
        trip("V1", t, 0, 452, "Z3", "Z9", ("r1", "r4")),
        trip("V1", t, 0, 1052, "Z9", "Z3", ("r4", "r1")),
        trip("V1", t, 1, 455, "Z3", "Z9", ("r1", "r4"), dur=12),
        trip("V2", TravellerType.RANDOM, 0, 600, "Z1", "Z2"),
    ]


class TestBuildProfiles:
    def test_counts(self, history):
        profiles = build_profiles(history, HOURLY, window_days=7)
        assert sorted(profiles) == ["V1", "V2"]
        p = profiles["V1"]
        assert p.traveller_type is TravellerType.COMMUTER
        assert p.total_trips == 3
        assert p.per_origin == {"Z3": 2, "Z9": 1}
        assert p.per_destination == {"Z9": 2, "Z3": 1}
        assert p.od_counts == {"Z3": {"Z9": 2}, "Z9": {"Z3": 1}}
        assert p.per_period == {452: 1, 455: 1, 1052: 1}
        assert p.observed_days == 7

    def test_marginals_agree(self, history):
        for p in build_profiles(history, HOURLY, window_days=7).values():
            assert sum(p.per_period.values()) == p.total_trips
            assert sum(p.per_origin.values()) == p.total_trips
            assert sum(p.per_destination.values()) == p.total_trips
            od_total = sum(n for dst in p.od_counts.values() for n in dst.values())
            assert od_total == p.total_trips

    def test_slot_origin_consistency(self, history):
        # departures in a slot, summed over origins, must match the
        # per-minute counts falling inside that slot
        p = build_profiles(history, HOURLY, window_days=7)["V1"]
        for slot in HOURLY:
            in_slot = sum(
                n for minute, n in p.per_period.items() if minute in slot
            )
            assert p.slot_total(slot.slot_id) == in_slot
        assert p.slot_origin_counts[8] == {"Z3": 2}

    def test_first_seen_type_wins(self, history):
        flipped = history + [trip("V1", TravellerType.PASSBY, 2, 700, "Z3", "Z9")]
        profiles = build_profiles(flipped, HOURLY, window_days=7)
        assert profiles["V1"].traveller_type is TravellerType.COMMUTER
        assert profiles["V1"].total_trips == 4

    def test_window_days_validated(self, history):
        with pytest.raises(ValueError):
            build_profiles(history, HOURLY, window_days=0)


class TestPathCatalog:
    def test_pooling(self, history):
        catalog = build_path_catalog(history)
        entries = catalog.get("Z3", "Z9")
        assert len(entries) == 1
        assert entries[0].path_id == "r1-r4"
        assert entries[0].path == ("r1", "r4")
        assert entries[0].crowd_count == 2
        assert ("Z3", "Z9") in catalog
        assert catalog.get("Z9", "Z1") == ()
        assert catalog.od_pairs() == [("Z1", "Z2"), ("Z3", "Z9"), ("Z9", "Z3")]
        assert len(catalog) == 3

    def test_path_id_of(self):
        assert path_id_of(("r1", "r4", "r7")) == "r1-r4-r7"


def test_duration_pools(history):
    pools = build_duration_pools(history, HOURLY)
    assert isinstance(pools, DurationPool)
    assert pools.samples[("r1-r4", 8)] == (10, 12)
    assert pools.samples[("r4-r1", 18)] == (10,)
    assert pools.fallback["r1-r4"] == (10, 12)


class TestReferenceAggregates:
    def test_shares(self, history):
        ref = build_reference_aggregates(history, HOURLY)
        agg = ref.aggregate(TravellerType.COMMUTER)
        assert agg.total == 3
        assert agg.u_slot == {8: 2, 18: 1}
        assert ref.slot_share(TravellerType.COMMUTER, 8) == pytest.approx(2 / 3)
        assert ref.period_share(TravellerType.COMMUTER, 452) == pytest.approx(1 / 3)
        assert sum(
            agg.slot_share(s.slot_id) for s in HOURLY
        ) == pytest.approx(1.0)
        assert sum(
            agg.period_share(m) for m in range(1, 1441)
        ) == pytest.approx(1.0)

    def test_missing_type(self, history):
        ref = build_reference_aggregates(history, HOURLY)
        with pytest.raises(CorruptInputError):
            ref.aggregate(TravellerType.PASSBY)
        assert ref.total(TravellerType.PASSBY) == 0
        assert ref.slot_share(TravellerType.PASSBY, 1) == 0.0

    def test_zero_total_share(self):
        from tripsynth.ingest import TypeAggregate

        agg = TypeAggregate(u_slot={}, u_period={}, total=0)
        assert agg.slot_share(1) == 0.0
        assert agg.period_share(1) == 0.0
