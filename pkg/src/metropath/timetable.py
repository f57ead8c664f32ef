"""Deterministic train timetable and its CSV format.

CSV columns: ``train_id,line,direction,cars,station,arrival,departure`` with
clock times as ``HH:MM:SS``; one row per stop, rows of a run in stop order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .domain import ConfigurationError, Network, format_clock, parse_clock

COLUMNS = ("train_id", "line", "direction", "cars", "station", "arrival", "departure")


@dataclass(frozen=True)
class Stop:
    station: str
    arrival: int
    departure: int


@dataclass(frozen=True)
class TrainRun:
    train_id: str
    line: str
    direction: int
    cars: int
    stops: tuple[Stop, ...]

    def __post_init__(self):
        if self.cars < 1:
            raise ConfigurationError(f"train {self.train_id}: car count must be >= 1")
        last = None
        for s in self.stops:
            if s.departure < s.arrival:
                raise ConfigurationError(f"train {self.train_id}: departs before arriving at {s.station}")
            if last is not None and s.arrival <= last:
                raise ConfigurationError(f"train {self.train_id}: times not increasing at {s.station}")
            last = s.departure

    def _stop(self, station: str) -> Stop | None:
        for s in self.stops:
            if s.station == station:
                return s
        return None

    def departure_at(self, station: str) -> int | None:
        s = self._stop(station)
        return None if s is None else s.departure

    def arrival_at(self, station: str) -> int | None:
        s = self._stop(station)
        return None if s is None else s.arrival


class Timetable:
    def __init__(self, runs):
        self.runs: list[TrainRun] = list(runs)
        ids = [r.train_id for r in self.runs]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("duplicate train ids in timetable")
        self._by_line: dict[tuple[str, int], list[TrainRun]] = {}
        for r in self.runs:
            self._by_line.setdefault((r.line, r.direction), []).append(r)

    def runs_for(self, line: str, direction: int) -> list[TrainRun]:
        return self._by_line.get((line, direction), [])

    def check_patterns(self, network: Network) -> None:
        """Every run must call at all stations of its line pattern, in order."""
        for r in self.runs:
            line = network.lines.get((r.line, r.direction))
            if line is None:
                raise ConfigurationError(f"train {r.train_id}: unknown line {r.line}/{r.direction}")
            if tuple(s.station for s in r.stops) != line.stations:
                raise ConfigurationError(
                    f"train {r.train_id}: stop pattern differs from line {r.line}/{r.direction}"
                )


def read_timetable(path) -> Timetable:
    rows: dict[str, list[dict]] = {}
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigurationError(f"timetable {path}: missing columns {sorted(missing)}")
        for row in reader:
            rows.setdefault(row["train_id"], []).append(row)
    runs = []
    for tid, stops in rows.items():
        head = stops[0]
        runs.append(
            TrainRun(
                train_id=tid,
                line=head["line"],
                direction=int(head["direction"]),
                cars=int(head["cars"]),
                stops=tuple(
                    Stop(s["station"], parse_clock(s["arrival"]), parse_clock(s["departure"]))
                    for s in stops
                ),
            )
        )
    return Timetable(runs)


def write_timetable(timetable: Timetable, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in timetable.runs:
            for s in r.stops:
                w.writerow(
                    [r.train_id, r.line, r.direction, r.cars, s.station,
                     format_clock(s.arrival), format_clock(s.departure)]
                )


def periodic_runs(
    line: str,
    direction: int,
    stations,
    run_times,
    first: int,
    last: int,
    headway: int,
    cars: int = 1,
    dwell: int = 30,
    prefix: str | None = None,
) -> list[TrainRun]:
    """Regular-headway runs over a stop pattern (used by the toy presets)."""
    prefix = prefix or f"{line}{direction}"
    runs = []
    t0 = first
    k = 0
    while t0 <= last:
        stops = []
        t = t0
        for i, st in enumerate(stations):
            arr = t
            dep = t + (dwell if 0 < i < len(stations) - 1 else 0)
            if i == 0:
                arr, dep = t, t
            stops.append(Stop(st, arr, dep))
            if i < len(stations) - 1:
                t = dep + run_times[i]
        runs.append(TrainRun(f"{prefix}-{k:03d}", line, direction, cars, tuple(stops)))
        t0 += headway
        k += 1
    return runs
