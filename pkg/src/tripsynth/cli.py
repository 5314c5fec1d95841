"""Command line pipeline around the library.

Four subcommands share one declarative YAML config: `corpus` emits a
synthetic seed dataset, `ingest` parses seed tables into a reusable store,
`generate` synthesizes a trip table from the store, and `validate` compares
generated output against the seed. Exit codes: 0 on success, 1 on runtime
failure, 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import yaml

from .corpus import CorpusSpec, synth_corpus
from .generator import (
    GenParams,
    GenStats,
    InvalidParams,
    generate_all,
)
from .ingest import (
    DurationPool,
    PathCatalog,
    ReferenceAggregates,
    TypeAggregate,
    build_duration_pools,
    build_path_catalog,
    build_profiles,
    build_reference_aggregates,
    parse_network,
    parse_trips,
    parse_zones,
)
from .model import (
    MINUTES_PER_DAY,
    TYPE_ORDER,
    GenClock,
    IndividualProfile,
    RoadNetwork,
    TimeSlotPartition,
    TravellerType,
    Zone,
    minute_to_hhmm,
)
from .validator import build_report

log = logging.getLogger(__name__)

STORE_VERSION = 1

TRIP_HEADER = (
    "traveller_ID",
    "traveller_type",
    "Date",
    "Departure_time",
    "Time_slot",
    "O_zone",
    "D_zone",
    "Path",
    "Duration",
)


class ConfigError(ValueError):
    """The config file is missing, malformed, or inconsistent."""


@dataclass
class Config:
    """Validated run configuration; paths are resolved next to the file."""

    paths: dict
    epoch: dt.date
    window_days: int
    duration_unit: str
    csv_delimiter: str
    partition: TimeSlotPartition
    params: GenParams
    workers: int
    granularity: int
    holiday_weekdays: tuple
    holiday_days: tuple
    topk_zone_fractions: tuple
    topk_od_fractions: tuple
    corpus_spec: CorpusSpec

    def day_class(self, day: int) -> str:
        if day in self.holiday_days or day % 7 in self.holiday_weekdays:
            return "holiday"
        return "weekday"

    def duration_divisor(self) -> float:
        return 60.0 if self.duration_unit == "seconds" else 1.0

    def path(self, key: str) -> Path:
        try:
            return self.paths[key]
        except KeyError:
            raise ConfigError(f"config paths section is missing {key!r}") from None


def _check_keys(section, allowed, where):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {where}")


def _section(doc, name) -> dict:
    value = doc.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return value


def load_config(path) -> Config:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(
        doc,
        {
            "paths", "epoch", "window_days", "duration_unit", "csv_delimiter",
            "partition", "generation", "validation", "corpus",
        },
        "config root",
    )

    base = path.parent
    raw_paths = _section(doc, "paths")
    _check_keys(
        raw_paths,
        {"trips", "zones", "network", "store", "generated", "report"},
        "paths",
    )
    paths = {k: (base / str(v)).resolve() for k, v in raw_paths.items() if v}

    epoch = doc.get("epoch", dt.date(2019, 8, 12))
    if isinstance(epoch, str):
        try:
            epoch = dt.date.fromisoformat(epoch)
        except ValueError:
            raise ConfigError(f"bad epoch date: {epoch!r}") from None
    if not isinstance(epoch, dt.date):
        raise ConfigError("epoch must be an ISO date")

    window_days = int(doc.get("window_days", 7))
    if window_days < 1:
        raise ConfigError("window_days must be >= 1")

    duration_unit = str(doc.get("duration_unit", "minutes"))
    if duration_unit not in ("minutes", "seconds"):
        raise ConfigError(f"duration_unit must be minutes or seconds, got {duration_unit!r}")

    delimiter = str(doc.get("csv_delimiter", ","))
    if len(delimiter) != 1:
        raise ConfigError("csv_delimiter must be a single character")

    part_cfg = doc.get("partition", "hourly")
    try:
        if part_cfg == "hourly":
            partition = TimeSlotPartition.hourly()
        elif isinstance(part_cfg, list):
            partition = TimeSlotPartition.from_boundaries(part_cfg)
        else:
            raise ValueError(f"partition must be 'hourly' or a list of slot starts")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    gen = _section(doc, "generation")
    _check_keys(
        gen,
        {"kappa", "epsilon", "blowup", "min_gap", "seed", "horizon_days",
         "start_day", "workers"},
        "generation",
    )
    horizon_days = int(gen.get("horizon_days", 7))
    if horizon_days < 0:
        raise ConfigError("horizon_days must be >= 0")
    start_day = int(gen.get("start_day", 0))
    params = GenParams(
        kappa=float(gen.get("kappa", 1e-9)),
        epsilon=float(gen.get("epsilon", 1e-6)),
        blowup=float(gen.get("blowup", 1e9)),
        min_gap=int(gen.get("min_gap", 1)),
        horizon_start=GenClock(start_day, 1),
        horizon_end=GenClock(start_day + horizon_days - 1, MINUTES_PER_DAY),
        rng_seed=int(gen.get("seed", 0)),
    )
    try:
        params.check()
    except InvalidParams as exc:
        raise ConfigError(str(exc)) from None
    workers = int(gen.get("workers", len(TYPE_ORDER)))
    if workers < 1:
        raise ConfigError("workers must be >= 1")

    val = _section(doc, "validation")
    _check_keys(
        val,
        {"granularity", "holiday_weekdays", "holiday_days", "topk_zones", "topk_od"},
        "validation",
    )
    granularity = int(val.get("granularity", 15))
    if granularity < 1 or MINUTES_PER_DAY % granularity:
        raise ConfigError("granularity must divide 1440")
    holiday_weekdays = tuple(int(d) for d in val.get("holiday_weekdays", (5, 6)))
    holiday_days = tuple(int(d) for d in val.get("holiday_days", ()))
    topk_zones = tuple(float(k) for k in val.get("topk_zones", (0.10,)))
    topk_od = tuple(float(k) for k in val.get("topk_od", (0.50,)))
    for k in topk_zones + topk_od:
        if not 0.0 < k <= 1.0:
            raise ConfigError(f"top-k fraction out of (0, 1]: {k}")

    cor = _section(doc, "corpus")
    _check_keys(
        cor,
        {"grid_side", "days", "seed", "individuals", "route_split", "zipf_exponent"},
        "corpus",
    )
    corpus_spec = CorpusSpec()
    if "grid_side" in cor:
        corpus_spec.grid_side = int(cor["grid_side"])
    if "days" in cor:
        corpus_spec.days = int(cor["days"])
    if "seed" in cor:
        corpus_spec.rng_seed = int(cor["seed"])
    if "route_split" in cor:
        corpus_spec.route_split = float(cor["route_split"])
    if "zipf_exponent" in cor:
        corpus_spec.zipf_exponent = float(cor["zipf_exponent"])
    if "individuals" in cor:
        raw = cor["individuals"]
        if not isinstance(raw, dict):
            raise ConfigError("corpus individuals must map type name to count")
        counts = []
        for ttype in TYPE_ORDER:
            if ttype.value in raw:
                counts.append((ttype, int(raw[ttype.value])))
        leftover = set(raw) - {t.value for t in TYPE_ORDER}
        if leftover:
            raise ConfigError(f"unknown traveller type in corpus individuals: {sorted(leftover)[0]!r}")
        corpus_spec.individuals = tuple(counts)

    return Config(
        paths=paths,
        epoch=epoch,
        window_days=window_days,
        duration_unit=duration_unit,
        csv_delimiter=delimiter,
        partition=partition,
        params=params,
        workers=workers,
        granularity=granularity,
        holiday_weekdays=holiday_weekdays,
        holiday_days=holiday_days,
        topk_zone_fractions=topk_zones,
        topk_od_fractions=topk_od,
        corpus_spec=corpus_spec,
    )


# ---------------------------------------------------------------------------
# CSV writers (the exact shapes `ingest` parses back).


def write_trips_csv(records, stream, epoch: dt.date, partition: TimeSlotPartition,
                    delimiter: str = ",") -> int:
    writer = csv.writer(stream, delimiter=delimiter, lineterminator="\n")
    writer.writerow(TRIP_HEADER)
    n = 0
    for trip in records:
        writer.writerow(
            (
                trip.traveller_id,
                trip.traveller_type.value,
                (epoch + dt.timedelta(days=trip.date)).isoformat(),
                minute_to_hhmm(trip.departure),
                partition.by_id(trip.slot).label(),
                trip.o_zone,
                trip.d_zone,
                "-".join(trip.path),
                trip.duration,
            )
        )
        n += 1
    return n


def write_zones_csv(zones, stream, delimiter: str = ",") -> None:
    writer = csv.writer(stream, delimiter=delimiter, lineterminator="\n")
    writer.writerow(("Zone_ID", "Longitude", "Latitude", "Roads"))
    for zone in zones:
        writer.writerow(
            (zone.zone_id, zone.longitude, zone.latitude, ";".join(sorted(zone.roads)))
        )


def write_network_csv(network: RoadNetwork, stream) -> None:
    stream.write("road_id,neighbor_id\n")
    for road, neighbor in network.edges():
        stream.write(f"{road},{neighbor}\n")


# ---------------------------------------------------------------------------
# Intermediate store: versioned, deterministic JSON.


def save_store(path, *, partition, window_days, profiles, catalog, pools,
               reference, zones, network) -> None:
    doc = {
        "version": STORE_VERSION,
        "window_days": window_days,
        "partition": partition.boundaries(),
        "profiles": {
            tid: {
                "type": p.traveller_type.value,
                "observed_days": p.observed_days,
                "per_period": {str(k): v for k, v in p.per_period.items()},
                "per_origin": p.per_origin,
                "per_destination": p.per_destination,
                "od": p.od_counts,
                "slot_origin": {
                    str(s): by_o for s, by_o in p.slot_origin_counts.items()
                },
            }
            for tid, p in profiles.items()
        },
        "catalog": {
            f"{o}|{d}": [[e.path_id, e.crowd_count] for e in catalog.get(o, d)]
            for o, d in catalog.od_pairs()
        },
        "pools": {
            "samples": {
                f"{pid}|{slot}": list(v)
                for (pid, slot), v in sorted(pools.samples.items())
            },
            "fallback": {pid: list(v) for pid, v in sorted(pools.fallback.items())},
        },
        "reference": {
            ttype.value: {str(m): n for m, n in agg.u_period.items()}
            for ttype, agg in sorted(reference.by_type.items(), key=lambda kv: kv[0].value)
        },
        "zones": [
            [z.zone_id, z.longitude, z.latitude, sorted(z.roads)] for z in zones
        ],
        "network": {road: sorted(nbrs) for road, nbrs in
                    ((r, network.neighbors(r)) for r in sorted(network.roads))},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


@dataclass
class Store:
    """Everything `generate` needs, as rebuilt from the persisted form."""

    partition: TimeSlotPartition
    window_days: int
    profiles: dict
    catalog: PathCatalog
    pools: DurationPool
    reference: ReferenceAggregates
    zones: list
    network: RoadNetwork


def load_store(path) -> Store:
    doc = json.loads(Path(path).read_text())
    version = doc.get("version")
    if version != STORE_VERSION:
        raise ValueError(f"unsupported store version: {version!r}")
    partition = TimeSlotPartition.from_boundaries(doc["partition"])

    profiles = {}
    for tid, raw in doc["profiles"].items():
        per_period = {int(k): v for k, v in raw["per_period"].items()}
        profiles[tid] = IndividualProfile(
            traveller_id=tid,
            traveller_type=TravellerType(raw["type"]),
            total_trips=sum(per_period.values()),
            per_period=per_period,
            per_origin=dict(raw["per_origin"]),
            per_destination=dict(raw["per_destination"]),
            od_counts={o: dict(d) for o, d in raw["od"].items()},
            slot_origin_counts={
                int(s): dict(by_o) for s, by_o in raw["slot_origin"].items()
            },
            observed_days=raw["observed_days"],
        )

    from .ingest import PathEntry

    entries = {}
    for key, rows in doc["catalog"].items():
        o, _, d = key.partition("|")
        entries[(o, d)] = tuple(
            PathEntry(pid, tuple(pid.split("-")), count) for pid, count in rows
        )
    catalog = PathCatalog(entries)

    samples = {}
    for key, values in doc["pools"]["samples"].items():
        pid, _, slot = key.rpartition("|")
        samples[(pid, int(slot))] = tuple(values)
    pools = DurationPool(
        samples=samples,
        fallback={pid: tuple(v) for pid, v in doc["pools"]["fallback"].items()},
    )

    reference = ReferenceAggregates(
        {
            TravellerType(name): TypeAggregate.from_period_counts(
                {int(m): n for m, n in counts.items()}, partition
            )
            for name, counts in doc["reference"].items()
        }
    )

    zones = [
        Zone(zone_id=zid, longitude=lon, latitude=lat, roads=frozenset(roads))
        for zid, lon, lat, roads in doc["zones"]
    ]
    network = RoadNetwork({road: set(nbrs) for road, nbrs in doc["network"].items()})
    return Store(
        partition=partition,
        window_days=doc["window_days"],
        profiles=profiles,
        catalog=catalog,
        pools=pools,
        reference=reference,
        zones=zones,
        network=network,
    )


# ---------------------------------------------------------------------------
# Commands.


def cmd_corpus(config: Config) -> int:
    built = synth_corpus(config.corpus_spec)
    trips_path = config.path("trips")
    trips_path.parent.mkdir(parents=True, exist_ok=True)
    with open(trips_path, "w", newline="") as fh:
        n = write_trips_csv(
            built.trips, fh, config.epoch, built.partition, config.csv_delimiter
        )
    zones_path = config.path("zones")
    with open(zones_path, "w", newline="") as fh:
        write_zones_csv(built.zones, fh, config.csv_delimiter)
    network_path = config.path("network")
    with open(network_path, "w", newline="") as fh:
        write_network_csv(built.network, fh)
    log.info("corpus: %d trips, %d zones -> %s", n, len(built.zones), trips_path.parent)
    return 0


def cmd_ingest(config: Config) -> int:
    with open(config.path("trips"), newline="") as fh:
        parsed = parse_trips(
            fh,
            config.partition,
            config.epoch,
            duration_divisor=config.duration_divisor(),
            delimiter=config.csv_delimiter,
        )
    if not parsed.records:
        log.error("no usable trip rows (rejected: %d)", len(parsed.errors))
        return 1
    with open(config.path("zones"), newline="") as fh:
        zones = parse_zones(fh, delimiter=config.csv_delimiter)
    if "network" in config.paths and config.paths["network"].exists():
        with open(config.paths["network"]) as fh:
            network = parse_network(fh)
    else:
        log.info("no network file; inferring adjacency from observed paths")
        network = RoadNetwork.from_paths(t.path for t in parsed.records)

    unknown_roads = {
        road for t in parsed.records for road in t.path if road not in network
    }
    if unknown_roads:
        log.warning("%d roads in paths missing from network", len(unknown_roads))

    profiles = build_profiles(parsed.records, config.partition, config.window_days)
    catalog = build_path_catalog(parsed.records)
    pools = build_duration_pools(parsed.records, config.partition)
    reference = build_reference_aggregates(parsed.records, config.partition)

    store_path = config.path("store")
    store_path.parent.mkdir(parents=True, exist_ok=True)
    save_store(
        store_path,
        partition=config.partition,
        window_days=config.window_days,
        profiles=profiles,
        catalog=catalog,
        pools=pools,
        reference=reference,
        zones=zones,
        network=network,
    )
    log.info(
        "ingest: %d trips from %d individuals (%d rows rejected) -> %s",
        len(parsed.records), len(profiles), len(parsed.errors), store_path,
    )
    return 0


def cmd_generate(config: Config, workers=None, seed=None) -> int:
    store = load_store(config.path("store"))
    params = config.params
    if seed is not None:
        params = GenParams(
            kappa=params.kappa,
            epsilon=params.epsilon,
            blowup=params.blowup,
            min_gap=params.min_gap,
            horizon_start=params.horizon_start,
            horizon_end=params.horizon_end,
            rng_seed=seed,
        )
    stats = GenStats()
    records = generate_all(
        store.profiles,
        store.reference,
        store.catalog,
        store.pools,
        params,
        store.partition,
        workers=workers if workers is not None else config.workers,
        stats=stats,
    )
    out_path = config.path("generated")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        n = write_trips_csv(
            records, fh, config.epoch, store.partition, config.csv_delimiter
        )
    log.info(
        "generate: %d trips, %d relocations (%d chain breaks / %d pairs), "
        "%d quarantined -> %s",
        n, stats.relocations, stats.chain_breaks, stats.continuity_pairs,
        len(stats.quarantined), out_path,
    )
    return 0


def cmd_validate(config: Config, reference=None, generated=None) -> int:
    ref_path = Path(reference) if reference else config.path("trips")
    gen_path = Path(generated) if generated else config.path("generated")
    with open(ref_path, newline="") as fh:
        ref = parse_trips(
            fh, config.partition, config.epoch,
            duration_divisor=config.duration_divisor(),
            delimiter=config.csv_delimiter,
        )
    with open(gen_path, newline="") as fh:
        gen = parse_trips(
            fh, config.partition, config.epoch,
            duration_divisor=config.duration_divisor(),
            delimiter=config.csv_delimiter,
        )
    report = build_report(
        ref.records,
        gen.records,
        granularity=config.granularity,
        day_class=config.day_class,
        topk_zone_fractions=config.topk_zone_fractions,
        topk_od_fractions=config.topk_od_fractions,
    )
    text = report.to_text()
    if "report" in config.paths:
        report_path = config.path("report")
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(text)
        log.info("validate: report -> %s", report_path)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tripsynth",
        description="Synthesize and validate individual-level trip tables.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", required=True, help="YAML config file")
        return p

    add("corpus", "write a synthetic seed dataset (trips, zones, network)")
    add("ingest", "parse seed tables and build the generation store")
    p_gen = add("generate", "synthesize a trip table from the store")
    p_gen.add_argument("--workers", type=int, help="parallel traveller types")
    p_gen.add_argument("--seed", type=int, help="override the generation seed")
    p_val = add("validate", "compare generated trips against the seed data")
    p_val.add_argument("--reference", help="override the reference trip CSV")
    p_val.add_argument("--generated", help="override the generated trip CSV")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = load_config(args.config)
        if args.command == "corpus":
            return cmd_corpus(config)
        if args.command == "ingest":
            return cmd_ingest(config)
        if args.command == "generate":
            return cmd_generate(config, workers=args.workers, seed=args.seed)
        if args.command == "validate":
            return cmd_validate(config, args.reference, args.generated)
        raise AssertionError(args.command)
    except (ConfigError, InvalidParams) as exc:
        log.error("config error: %s", exc)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
