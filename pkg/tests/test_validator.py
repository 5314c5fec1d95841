import math

import pytest
from hypothesis import given, strategies as st

from tripsynth.model import TimeSlotPartition, TravellerType, TripRecord
from tripsynth.validator import (
    Distribution,
    ValidationReport,
    build_report,
    continuity_ratio,
    daily_frequency_by_individual,
    default_day_class,
    destination_entropy,
    entropy_by_individual,
    js_divergence,
    kl_divergence,
    od_pair_counts,
    overlap_ratio,
    road_access_counts,
    temporal_distribution,
    topk_od,
    topk_zones,
    zone_visit_counts,
)

HOURLY = TimeSlotPartition.hourly()


def dist(*mass):
    return Distribution(bins=tuple(range(len(mass))), mass=tuple(mass))


class TestDistribution:
    def test_from_counts_normalizes(self):
        d = Distribution.from_counts({"a": 3, "b": 1})
        assert d.bins == ("a", "b")
        assert d.mass == (0.75, 0.25)
        assert d.as_dict() == {"a": 0.75, "b": 0.25}

    def test_forced_bins_pad_with_zero(self):
        d = Distribution.from_counts({"b": 2}, bins=("a", "b", "c"))
        assert d.mass == (0.0, 1.0, 0.0)

    def test_counts_outside_bins_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            Distribution.from_counts({"z": 1}, bins=("a",))

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty distribution"):
            Distribution.from_counts({})
        with pytest.raises(ValueError, match="empty distribution"):
            Distribution.from_counts({"a": 0})

    def test_mass_validated(self):
        with pytest.raises(ValueError):
            Distribution(bins=(1, 2), mass=(0.5,))
        with pytest.raises(ValueError):
            Distribution(bins=(1,), mass=(-0.1,))
        with pytest.raises(ValueError):
            Distribution(bins=(1, 2), mass=(0.6, 0.6))


class TestKL:
    def test_self_is_zero(self):
        p = dist(0.5, 0.5)
        assert kl_divergence(p, p) == 0.0

    def test_missing_support_is_infinite(self):
        assert kl_divergence(dist(1.0, 0.0), dist(0.0, 1.0)) == math.inf

    def test_zero_mass_p_bins_ignored(self):
        assert kl_divergence(dist(0.0, 1.0), dist(0.5, 0.5)) == pytest.approx(
            math.log(2)
        )

    def test_bin_mismatch(self):
        with pytest.raises(ValueError):
            kl_divergence(dist(1.0), Distribution(bins=("x",), mass=(1.0,)))


class TestJS:
    def test_self_is_exactly_zero(self):
        for p in (dist(1.0), dist(0.25, 0.25, 0.5), dist(0.1, 0.9)):
            assert js_divergence(p, p) == 0.0

    def test_disjoint_support_is_ln2(self):
        got = js_divergence(dist(1.0, 0.0), dist(0.0, 1.0))
        assert got == pytest.approx(math.log(2), abs=1e-12)

    def test_point_against_uniform(self):
        got = js_divergence(dist(1.0, 0.0), dist(0.5, 0.5))
        assert got == pytest.approx(0.75 * math.log(4 / 3), abs=1e-12)
        assert got == pytest.approx(0.2158, abs=1e-4)

    @given(
        st.lists(st.floats(min_value=0.001, max_value=1.0), min_size=2, max_size=8),
        st.lists(st.floats(min_value=0.001, max_value=1.0), min_size=2, max_size=8),
    )
    def test_symmetric_and_bounded(self, a, b):
        n = min(len(a), len(b))
        p = Distribution.from_counts({i: a[i] for i in range(n)}, bins=range(n))
        q = Distribution.from_counts({i: b[i] for i in range(n)}, bins=range(n))
        left = js_divergence(p, q)
        assert left == pytest.approx(js_divergence(q, p), abs=1e-12)
        assert 0.0 <= left <= math.log(2) + 1e-12


class TestOverlapRatio:
    def test_values(self):
        assert overlap_ratio({"a", "b"}, {"a", "b"}) == 1.0
        assert overlap_ratio({"a", "b"}, {"c", "d"}) == 0.0
        assert overlap_ratio({"a", "b", "c", "d"}, {"a", "b", "x", "y"}) == 0.5

    def test_size_mismatch(self):
        with pytest.raises(ValueError, match="differ in size"):
            overlap_ratio({"a"}, {"a", "b"})
        with pytest.raises(ValueError, match="empty"):
            overlap_ratio(set(), set())


def trip(tid="V1", ttype=TravellerType.COMMUTER, day=0, dep=452, o="Z1", d="Z2",
         path=("r1",), dur=10):
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


class TestTemporalDistribution:
    def test_bin_assignment(self):
        d = temporal_distribution([trip(dep=452)], granularity=15)
        assert len(d.bins) == 96
        assert d.as_dict()[31] == 1.0  # minute 452 sits in window 31

    def test_minute_edges(self):
        d = temporal_distribution([trip(dep=15), trip(dep=16)], granularity=15)
        by_bin = d.as_dict()
        assert by_bin[1] == 0.5 and by_bin[2] == 0.5

    def test_granularity_must_divide_day(self):
        with pytest.raises(ValueError):
            temporal_distribution([trip()], granularity=17)

    def test_type_and_day_filters(self):
        trips = [
            trip("V1", TravellerType.COMMUTER, day=0, dep=100),
            trip("V2", TravellerType.PASSBY, day=5, dep=700),
        ]
        d = temporal_distribution(trips, ttype=TravellerType.PASSBY)
        assert d.as_dict()[(700 - 1) // 15 + 1] == 1.0
        d = temporal_distribution(trips, day_filter=lambda day: day < 5)
        assert d.as_dict()[(100 - 1) // 15 + 1] == 1.0


def test_zone_visit_counts_touch_both_ends():
    counts = zone_visit_counts([trip(o="Z1", d="Z2"), trip(o="Z2", d="Z3")])
    assert counts == {"Z1": 1, "Z2": 2, "Z3": 1}


def test_od_pair_counts():
    counts = od_pair_counts([trip(), trip(), trip(o="Z9")])
    assert counts == {("Z1", "Z2"): 2, ("Z9", "Z2"): 1}


class TestTopK:
    trips = [
        trip(o="Z1", d="Z2"),
        trip(o="Z1", d="Z2"),
        trip(o="Z2", d="Z3"),
        trip(o="Z3", d="Z4"),
    ]

    def test_ceil_of_fraction(self):
        # 4 zones visited, top 50% -> 2 zones; Z1 and Z2 lead
        assert topk_zones(self.trips, 0.5) == {"Z1", "Z2"}
        # top 10% of 4 -> ceil(0.4) = 1
        assert topk_zones(self.trips, 0.1) == {"Z2"}

    def test_ties_resolve_lexicographically(self):
        # Z3 and Z4 both visited twice... craft equal counts
        tied = [trip(o="Za", d="Zb"), trip(o="Zb", d="Za")]
        assert topk_zones(tied, 0.5) == {"Za"}

    def test_universe_overrides_base(self):
        assert topk_zones(self.trips, 0.5, universe=2) == {"Z2"}

    def test_topk_od(self):
        # 3 distinct pairs, top 30% -> ceil(0.9) = 1
        assert topk_od(self.trips, 0.3) == {("Z1", "Z2")}

    def test_rejects_bad_fraction(self):
        with pytest.raises(ValueError):
            topk_zones(self.trips, 0.0)
        with pytest.raises(ValueError):
            topk_zones(self.trips, 1.5)
        with pytest.raises(ValueError):
            topk_zones([], 0.5)

    def test_universe_larger_than_ranked(self):
        with pytest.raises(ValueError, match="ranked"):
            topk_zones(self.trips, 1.0, universe=10)


def test_road_access_counts_distinct_per_trip():
    trips = [
        trip(path=("r1", "r2", "r1")),  # r1 twice in one path counts once
        trip(path=("r2",)),
    ]
    assert road_access_counts(trips) == {"r1": 1, "r2": 2}


class TestContinuity:
    def test_perfect_chain(self):
        trips = [
            trip(dep=100, o="A", d="B"),
            trip(dep=300, o="B", d="C"),
            trip(dep=500, o="C", d="A"),
        ]
        assert continuity_ratio(trips) == {TravellerType.COMMUTER: 1.0}

    def test_break_counted(self):
        trips = [
            trip(dep=100, o="A", d="B"),
            trip(dep=300, o="X", d="C"),  # break
            trip(dep=500, o="C", d="A"),
        ]
        assert continuity_ratio(trips)[TravellerType.COMMUTER] == pytest.approx(0.5)

    def test_singletons_contribute_nothing(self):
        trips = [trip("V1"), trip("V2", ttype=TravellerType.PASSBY)]
        assert continuity_ratio(trips) == {}

    def test_pairs_follow_time_order_not_input_order(self):
        trips = [
            trip(dep=500, o="C", d="A"),
            trip(dep=100, o="A", d="B"),
            trip(dep=300, o="B", d="C"),
        ]
        assert continuity_ratio(trips) == {TravellerType.COMMUTER: 1.0}


class TestEntropy:
    def test_uniform_is_ln_k(self):
        for k in (2, 3, 5, 8):
            trips = [trip(d=f"Z{i}") for i in range(k)]
            assert destination_entropy(trips) == pytest.approx(
                math.log(k), abs=1e-12
            )

    def test_single_destination_is_zero(self):
        assert destination_entropy([trip(), trip()]) == 0.0

    def test_by_individual(self):
        trips = [trip("V1", d="Z1"), trip("V1", d="Z2"), trip("V2", d="Z1")]
        ent = entropy_by_individual(trips)
        assert ent["V1"] == pytest.approx(math.log(2))
        assert ent["V2"] == 0.0


def test_daily_frequency_uses_observed_days():
    trips = [
        trip("V1", day=0), trip("V1", day=0), trip("V1", day=1),
        trip("V2", day=1),
    ]
    freq = daily_frequency_by_individual(trips)
    assert freq == {"V1": 1.5, "V2": 0.5}
    assert daily_frequency_by_individual([]) == {}


def test_default_day_class():
    assert [default_day_class(d) for d in range(7)] == [
        "weekday"] * 5 + ["holiday"] * 2
    assert default_day_class(12) == "holiday"
    assert default_day_class(14) == "weekday"


class TestValidationReport:
    def test_cells_and_text(self):
        report = ValidationReport()
        report.add("js_time", "commuter", "all", 0.00123456789)
        report.add("note", "", "", "empty distribution")
        assert report.get("js_time", "commuter", "all") == 0.00123456789
        assert report.numeric("js_time", "commuter", "all") == 0.00123456789
        with pytest.raises(ValueError):
            report.numeric("note")
        text = report.to_text()
        lines = text.splitlines()
        assert lines[0].startswith("# trip table validation report")
        assert lines[2] == "metric,type,param,value"
        assert "js_time,commuter,all,0.00123456789" in lines
        assert "note,,,empty distribution" in lines
        assert text.endswith("\n")

    def test_missing_cell_raises(self):
        with pytest.raises(KeyError):
            ValidationReport().get("js_time")


class TestBuildReport:
    def sample(self):
        trips = []
        for day in range(7):
            trips.append(trip("V1", day=day, dep=452, o="A", d="B", path=("r1", "r2")))
            trips.append(trip("V1", day=day, dep=1052, o="B", d="A", path=("r2", "r1")))
            # one passby trip per individual: the type never forms pairs
            trips.append(
                trip(f"P{day}", TravellerType.PASSBY, day, 700, "W", "E", ("r3",))
            )
        return trips

    def test_identity_comparison(self):
        trips = self.sample()
        report = build_report(trips, trips)
        assert report.numeric("trips", "", "reference") == len(trips)
        assert report.numeric("js_time", "", "all") == 0.0
        assert report.numeric("js_time", "commuter", "all") == 0.0
        assert report.numeric("js_time", "commuter", "weekday") == 0.0
        assert report.numeric("js_time", "commuter", "holiday") == 0.0
        assert report.numeric("hotzone_overlap", "commuter", "0.1") == 1.0
        assert report.numeric("od_overlap", "commuter", "0.5") == 1.0
        assert report.numeric("js_road", "", "") == 0.0
        assert report.numeric("continuity", "commuter", "reference") == 1.0
        assert report.numeric("continuity", "commuter", "generated") == 1.0
        assert report.numeric("js_frequency", "commuter", "") == 0.0
        assert report.numeric("js_entropy", "passby", "") == 0.0

    def test_absent_type_carries_error_text(self):
        trips = self.sample()
        only_commuter = [
            t for t in trips if t.traveller_type is TravellerType.COMMUTER
        ]
        report = build_report(trips, only_commuter)
        cell = report.get("js_time", "passby", "all")
        assert isinstance(cell, str) and "empty" in cell

    def test_passby_has_no_continuity_pairs(self):
        trips = self.sample()
        report = build_report(trips, trips)
        cell = report.get("continuity", "passby", "reference")
        assert isinstance(cell, str) and "pairs" in cell
