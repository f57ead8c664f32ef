"""Network, path sets, the aggregated time grid and path attributes.

Times are integer seconds since midnight throughout the package.  Walk
times are seconds; path attributes are expressed in minutes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Iterable, Mapping, Sequence

import numpy as np

ATTRIBUTE_NAMES = ("in_vehicle_time", "transfers", "rel_walk_time", "commonality")


class ConfigurationError(ValueError):
    """Raised for inconsistent run or network configuration."""


class InvalidPathError(ValueError):
    pass


class UnservablePathError(ValueError):
    """A path leg has no scheduled service."""


def parse_clock(text: str | int) -> int:
    """``"HH:MM[:SS]"`` -> seconds since midnight (ints pass through)."""
    if isinstance(text, (int, np.integer)):
        return int(text)
    parts = str(text).strip().split(":")
    if len(parts) not in (2, 3):
        raise ValueError(f"bad clock time {text!r}")
    h, m = int(parts[0]), int(parts[1])
    s = int(parts[2]) if len(parts) == 3 else 0
    if not (0 <= m < 60 and 0 <= s < 60 and h >= 0):
        raise ValueError(f"bad clock time {text!r}")
    return h * 3600 + m * 60 + s


def format_clock(seconds: int) -> str:
    seconds = int(seconds)
    return f"{seconds // 3600:02d}:{seconds % 3600 // 60:02d}:{seconds % 60:02d}"


# --------------------------------------------------------------------------
# time grid


@dataclass(frozen=True)
class TimeGrid:
    """Study period split into ``n`` intervals of ``tau`` seconds.

    Exit intervals continue past the period end for ``tail`` seconds so that
    passengers entering late in the period still exit into a distinct bin.
    """

    start: int
    end: int
    tau: int
    tail: int = 0

    @property
    def n(self) -> int:
        return (self.end - self.start) // self.tau

    @property
    def n_exit(self) -> int:
        return self.n + math.ceil(self.tail / self.tau)

    def interval_bounds(self, m: int) -> tuple[int, int]:
        lo = self.start + m * self.tau
        return lo, lo + self.tau

    def entry_interval(self, t: int) -> int | None:
        if t < self.start or t >= self.end:
            return None
        return (t - self.start) // self.tau

    def exit_interval(self, t):
        """Exit bin of time(s) ``t``; times past the horizon land in the last bin."""
        idx = (np.asarray(t) - self.start) // self.tau
        return np.clip(idx, 0, self.n_exit - 1)

    def labels(self) -> list[str]:
        return [
            f"{format_clock(lo)}-{format_clock(lo + self.tau)}"
            for lo in range(self.start, self.end, self.tau)
        ]


def build_time_grid(period: tuple[str | int, str | int], tau: int, tail: int = 0) -> TimeGrid:
    """Aggregated time grid; ``tau`` in seconds must divide the period."""
    start, end = parse_clock(period[0]), parse_clock(period[1])
    if tau <= 0:
        raise ConfigurationError("tau must be positive")
    if end <= start:
        raise ConfigurationError("period end must be after its start")
    if (end - start) % tau:
        raise ConfigurationError(
            f"period of {end - start}s is not divisible by tau={tau}s"
        )
    if tail < 0:
        raise ConfigurationError("tail must be non-negative")
    return TimeGrid(start, end, int(tau), int(tail))


# --------------------------------------------------------------------------
# physical network


@dataclass(frozen=True)
class Station:
    id: str
    name: str = ""
    platforms: tuple[str, ...] = ()


@dataclass(frozen=True)
class Platform:
    id: str
    station: str
    line: str
    direction: int
    access_walk: int = 0
    egress_walk: int = 0
    transfer_walk: Mapping[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Line:
    """One direction of a line: its stop pattern and link distances."""

    id: str
    direction: int
    stations: tuple[str, ...]
    distances: tuple[float, ...] = ()

    @property
    def key(self) -> tuple[str, int]:
        return (self.id, self.direction)


@dataclass(frozen=True)
class Leg:
    board: str
    alight: str


@dataclass
class Path:
    """A route between two stations as an ordered list of legs.

    ``stations`` and the attribute fields are filled by
    :meth:`Network.resolve_path` and :func:`path_attributes`.
    """

    origin: str
    destination: str
    legs: tuple[Leg, ...]
    stations: tuple[str, ...] = ()

    @property
    def od(self) -> tuple[str, str]:
        return (self.origin, self.destination)

    @property
    def n_transfers(self) -> int:
        return len(self.legs) - 1


class Network:
    def __init__(
        self,
        stations: Iterable[Station],
        platforms: Iterable[Platform],
        lines: Iterable[Line],
    ):
        self.platforms: dict[str, Platform] = {}
        for p in platforms:
            if p.id in self.platforms:
                raise ConfigurationError(f"duplicate platform id {p.id}")
            if p.access_walk < 0 or p.egress_walk < 0 or any(
                w < 0 for w in p.transfer_walk.values()
            ):
                raise ConfigurationError(f"negative walk time on platform {p.id}")
            self.platforms[p.id] = p
        by_station: dict[str, list[str]] = {}
        for p in self.platforms.values():
            by_station.setdefault(p.station, []).append(p.id)
        self.stations: dict[str, Station] = {}
        for s in stations:
            if s.id in self.stations:
                raise ConfigurationError(f"duplicate station id {s.id}")
            plats = tuple(s.platforms) or tuple(by_station.get(s.id, ()))
            self.stations[s.id] = Station(s.id, s.name, plats)
        self.lines: dict[tuple[str, int], Line] = {}
        for ln in lines:
            if ln.distances and len(ln.distances) != len(ln.stations) - 1:
                raise ConfigurationError(f"line {ln.key}: one distance per link required")
            self.lines[ln.key] = ln
        self.platform_index = {pid: k for k, pid in enumerate(self.platforms)}

    # station/platform helpers -------------------------------------------
    def platform_at(self, station: str, line: str, direction: int) -> Platform | None:
        for pid in self.stations[station].platforms if station in self.stations else ():
            p = self.platforms[pid]
            if p.line == line and p.direction == direction:
                return p
        return None

    def transfer_walk(self, from_platform: str, to_platform: str) -> int:
        a = self.platforms[from_platform]
        if from_platform == to_platform:
            return 0
        try:
            return int(a.transfer_walk[to_platform])
        except KeyError:
            raise InvalidPathError(
                f"no transfer walk from {from_platform} to {to_platform}"
            ) from None

    def leg_stations(self, leg: Leg) -> tuple[str, ...]:
        """Stations traversed by a leg, board and alight inclusive."""
        b, a = self.platforms[leg.board], self.platforms[leg.alight]
        if (b.line, b.direction) != (a.line, a.direction):
            raise InvalidPathError(f"leg {leg} changes line or direction")
        line = self.lines.get((b.line, b.direction))
        if line is None:
            raise InvalidPathError(f"unknown line {b.line}/{b.direction}")
        try:
            i, j = line.stations.index(b.station), line.stations.index(a.station)
        except ValueError:
            raise InvalidPathError(f"leg {leg} not on line {line.key}") from None
        if j <= i:
            raise InvalidPathError(f"leg {leg} runs against the line direction")
        return line.stations[i : j + 1]

    def leg_distance(self, leg: Leg) -> float:
        b = self.platforms[leg.board]
        line = self.lines[(b.line, b.direction)]
        seq = self.leg_stations(leg)
        i = line.stations.index(seq[0])
        if line.distances:
            return float(sum(line.distances[i : i + len(seq) - 1]))
        return float(len(seq) - 1)

    def resolve_path(self, path: Path) -> Path:
        """Check leg chaining and fill the station sequence."""
        if not path.legs:
            raise InvalidPathError(f"path {path.od} has no legs")
        seq: list[str] = []
        for k, leg in enumerate(path.legs):
            for pid in (leg.board, leg.alight):
                if pid not in self.platforms:
                    raise InvalidPathError(f"unknown platform {pid}")
            stations = self.leg_stations(leg)
            if k == 0:
                seq.extend(stations)
            else:
                if stations[0] != seq[-1]:
                    raise InvalidPathError(f"legs of path {path.od} do not chain")
                seq.extend(stations[1:])
        if seq[0] != path.origin or seq[-1] != path.destination:
            raise InvalidPathError(f"path {path.od} does not join its OD")
        path.stations = tuple(seq)
        return path


# --------------------------------------------------------------------------
# path attributes


def commonality_factor(path: Path, path_set: Sequence[Path], gamma: float = 5.0) -> float:
    """C-logit commonality factor ``ln sum_r' (L_rr' / (L_r L_r'))**gamma``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    own = set(path.stations)
    if not own:
        raise InvalidPathError("path with empty station sequence")
    total = 0.0
    for other in path_set:
        if not other.stations:
            raise InvalidPathError("path with empty station sequence")
        common = len(own.intersection(other.stations))
        total += (common / (len(path.stations) * len(other.stations))) ** gamma
    return math.log(total)


def scheduled_run_time(timetable, board: Platform, alight: Platform) -> int:
    """Median scheduled in-vehicle seconds between two platforms of a line."""
    runs = timetable.runs_for(board.line, board.direction)
    times = []
    for run in runs:
        dep = run.departure_at(board.station)
        arr = run.arrival_at(alight.station)
        if dep is not None and arr is not None and arr > dep:
            times.append(arr - dep)
    if not times:
        raise UnservablePathError(
            f"no service from {board.id} to {alight.id} on line {board.line}"
        )
    return int(np.median(times))


def path_attributes(
    path: Path,
    timetable,
    network: Network,
    cf: float,
    distance_mode: str = "stations",
) -> np.ndarray:
    """Attribute vector (ivt min, transfers, walk min / distance, CF)."""
    if not path.stations:
        network.resolve_path(path)
    ivt = 0
    for leg in path.legs:
        ivt += scheduled_run_time(
            timetable, network.platforms[leg.board], network.platforms[leg.alight]
        )
    walk = network.platforms[path.legs[0].board].access_walk
    walk += network.platforms[path.legs[-1].alight].egress_walk
    for prev, nxt in zip(path.legs, path.legs[1:]):
        walk += network.transfer_walk(prev.alight, nxt.board)
    if distance_mode == "stations":
        distance = float(len(path.stations) - 1)
    elif distance_mode == "links":
        distance = sum(network.leg_distance(leg) for leg in path.legs)
    else:
        raise ConfigurationError(f"unknown distance mode {distance_mode!r}")
    if distance <= 0:
        raise InvalidPathError(f"path {path.od} has zero route distance")
    return np.array([ivt / 60.0, float(path.n_transfers), walk / 60.0 / distance, cf])


def validate_network(network: Network, paths: Mapping, timetable=None) -> list[str]:
    """Diagnostics for dangling references, unservable paths and empty ODs."""
    issues: list[str] = []
    for p in network.platforms.values():
        if p.station not in network.stations:
            issues.append(f"platform {p.id} references unknown station {p.station}")
        for other in p.transfer_walk:
            q = network.platforms.get(other)
            if q is None:
                issues.append(f"platform {p.id} transfer to unknown platform {other}")
            elif q.station != p.station:
                issues.append(f"platform {p.id} transfer to {other} at another station")
    for s in network.stations.values():
        if not s.platforms:
            issues.append(f"station {s.id} has no platforms")
    for od, plist in paths.items():
        if not plist:
            issues.append(f"OD {od[0]}-{od[1]} has no paths")
            continue
        for r, path in enumerate(plist):
            try:
                network.resolve_path(path)
                if timetable is not None:
                    for leg in path.legs:
                        scheduled_run_time(
                            timetable,
                            network.platforms[leg.board],
                            network.platforms[leg.alight],
                        )
            except (InvalidPathError, UnservablePathError) as exc:
                issues.append(f"OD {od[0]}-{od[1]} path {r}: {exc}")
    return issues


# --------------------------------------------------------------------------
# dense indexing of share variables


class ChoiceIndex:
    """Dense index over (origin, interval, destination, path) share variables.

    A *group* is one ``(origin, m, destination)`` choice situation; its
    variables occupy ``slice(group_ptr[g], group_ptr[g+1])``.
    """

    def __init__(self, od_pairs: Sequence[tuple[str, str]], n_paths: Sequence[int], n_intervals: int):
        self.od_pairs = list(od_pairs)
        self.n_intervals = n_intervals
        self.groups: list[tuple[str, int, str]] = []
        ptr = [0]
        var_group, var_path = [], []
        for m in range(n_intervals):
            for (o, d), k in zip(self.od_pairs, n_paths):
                g = len(self.groups)
                self.groups.append((o, m, d))
                var_group += [g] * k
                var_path += list(range(k))
                ptr.append(ptr[-1] + k)
        self.group_ptr = np.array(ptr, dtype=np.int64)
        self.var_group = np.array(var_group, dtype=np.int64)
        self.var_path = np.array(var_path, dtype=np.int64)
        self._group_of = {key: g for g, key in enumerate(self.groups)}

    @classmethod
    def from_paths(cls, paths: Mapping[tuple[str, str], Sequence[Path]], n_intervals: int):
        ods = list(paths)
        return cls(ods, [len(paths[od]) for od in ods], n_intervals)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def n_vars(self) -> int:
        return int(self.group_ptr[-1])

    def group(self, origin: str, m: int, destination: str) -> int:
        return self._group_of[(origin, m, destination)]

    def var(self, origin: str, m: int, destination: str, r: int) -> int:
        g = self.group(origin, m, destination)
        lo, hi = self.group_ptr[g], self.group_ptr[g + 1]
        if not 0 <= r < hi - lo:
            raise KeyError((origin, m, destination, r))
        return int(lo + r)

    def triple(self, v: int) -> tuple[str, int, str, int]:
        o, m, d = self.groups[self.var_group[v]]
        return (o, m, d, int(self.var_path[v]))

    def group_slice(self, g: int) -> slice:
        return slice(int(self.group_ptr[g]), int(self.group_ptr[g + 1]))

    def group_sizes(self) -> np.ndarray:
        return np.diff(self.group_ptr)

    def group_sums(self, values: np.ndarray) -> np.ndarray:
        """Sum per group of a per-variable array (rows if 2-D)."""
        return np.add.reduceat(values, self.group_ptr[:-1], axis=0)


@dataclass
class BetaVector:
    in_vehicle_time: float = 0.0
    transfers: float = 0.0
    rel_walk_time: float = 0.0
    commonality: float = 0.0

    @classmethod
    def from_array(cls, values) -> "BetaVector":
        arr = np.asarray(values, dtype=float)
        if arr.shape != (4,) or not np.all(np.isfinite(arr)):
            raise ValueError(f"beta must be 4 finite coefficients, got {values!r}")
        return cls(*map(float, arr))

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.in_vehicle_time, self.transfers, self.rel_walk_time, self.commonality]
        )

    def to_dict(self) -> dict[str, float]:
        return dict(zip(ATTRIBUTE_NAMES, self.to_array().tolist()))


def path_flows(counts: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Path flow per exit interval: assigned count times delay rate."""
    return np.asarray(counts, dtype=float)[:, None] * np.asarray(mu, dtype=float)


# --------------------------------------------------------------------------
# JSON ingestion


def load_network(source) -> Network:
    data = _load_json(source)
    stations = [Station(str(s["id"]), s.get("name", "")) for s in data["stations"]]
    platforms = [
        Platform(
            id=str(p["id"]),
            station=str(p["station"]),
            line=str(p["line"]),
            direction=int(p["direction"]),
            access_walk=int(p.get("access_walk", 0)),
            egress_walk=int(p.get("egress_walk", 0)),
            transfer_walk={str(k): int(v) for k, v in p.get("transfer_walk", {}).items()},
        )
        for p in data["platforms"]
    ]
    lines = [
        Line(
            id=str(ln["id"]),
            direction=int(ln["direction"]),
            stations=tuple(str(s) for s in ln["stations"]),
            distances=tuple(float(x) for x in ln.get("distances", ())),
        )
        for ln in data["lines"]
    ]
    return Network(stations, platforms, lines)


def network_to_dict(network: Network) -> dict:
    return {
        "stations": [{"id": s.id, "name": s.name} for s in network.stations.values()],
        "platforms": [
            {
                "id": p.id,
                "station": p.station,
                "line": p.line,
                "direction": p.direction,
                "access_walk": p.access_walk,
                "egress_walk": p.egress_walk,
                "transfer_walk": dict(p.transfer_walk),
            }
            for p in network.platforms.values()
        ],
        "lines": [
            {
                "id": ln.id,
                "direction": ln.direction,
                "stations": list(ln.stations),
                **({"distances": list(ln.distances)} if ln.distances else {}),
            }
            for ln in network.lines.values()
        ],
    }


def load_paths(source, network: Network | None = None) -> dict[tuple[str, str], list[Path]]:
    """Path-set JSON: ``{"o-d": [{"legs": [{"board":..,"alight":..}, ..]}, ..]}``."""
    data = _load_json(source)
    out: dict[tuple[str, str], list[Path]] = {}
    for key, plist in data.items():
        o, sep, d = key.partition("-")
        if not sep:
            raise ConfigurationError(f"path-set key {key!r} is not 'origin-destination'")
        out[(o, d)] = [
            Path(o, d, tuple(Leg(str(l["board"]), str(l["alight"])) for l in p["legs"]))
            for p in plist
        ]
        if network is not None:
            for p in out[(o, d)]:
                network.resolve_path(p)
    return out


def paths_to_dict(paths: Mapping[tuple[str, str], Sequence[Path]]) -> dict:
    return {
        f"{o}-{d}": [
            {"legs": [{"board": l.board, "alight": l.alight} for l in p.legs]}
            for p in plist
        ]
        for (o, d), plist in paths.items()
    }


def _load_json(source):
    if isinstance(source, (dict, list)):
        return source
    with open(FsPath(source)) as fh:
        return json.load(fh)
