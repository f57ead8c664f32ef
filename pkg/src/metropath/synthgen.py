"""Toy network presets and synthetic AFC generation from a known beta."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .afc import AfcRecord
from .clogit import shares_from_beta
from .domain import (
    ConfigurationError,
    Leg,
    Line,
    Network,
    Path,
    Platform,
    Station,
    TimeGrid,
    build_time_grid,
    parse_clock,
)
from .loading import LoadingModel, LoadingResult, SimConfig
from .scenario import Scenario
from .timetable import Timetable, periodic_runs

# coefficients of the survey C-logit model used as synthetic ground truth
SYNTHETIC_BETA = np.array([-0.147, -0.573, -1.271, -3.679])
BETA_LOWER = np.array([-2.0, -4.0, -6.0, -10.0])
BETA_UPPER = np.zeros(4)

PRESETS = ("figure2_two_path", "figure3_five_station", "grid_small")


@dataclass
class ToyInstance:
    name: str
    network: Network
    paths: dict
    timetable: Timetable
    grid: TimeGrid
    sim_config: SimConfig
    demand: dict  # (origin, m, destination) -> passengers
    tapins: dict | None = None  # (origin, m, destination) -> tap-in seconds
    notes: dict = field(default_factory=dict)

    def scenario(self, **kwargs) -> Scenario:
        return Scenario(self.network, self.timetable, self.paths, self.grid, **kwargs)

    def od_flows(self, scenario: Scenario) -> np.ndarray:
        return demand_array(self.demand, scenario.index)

    def preset_shares(self, scenario: Scenario):
        """Fixed per-OD shares repeated over intervals, when the preset prescribes them."""
        if "shares" not in self.notes:
            return None
        return np.tile(np.asarray(self.notes["shares"], dtype=float), scenario.grid.n)

    def tapin_groups(self, scenario: Scenario):
        if self.tapins is None:
            return None
        return {scenario.index.group(*k): v for k, v in self.tapins.items()}


def demand_array(demand: dict, index) -> np.ndarray:
    q = np.zeros(index.n_groups)
    for key, value in demand.items():
        q[index.group(*key)] = value
    return q


def _pid(station, line, direction):
    return f"{station}:{line}:{direction}"


def build_toy_network(name: str, **options) -> ToyInstance:
    """Deterministic preset instances used by the examples and tests.

    ``grid_small`` accepts ``tau`` (seconds), ``demand_scale`` and
    ``capacity_per_car`` overrides.
    """
    if name == "figure2_two_path" and not options:
        return _figure2()
    if name == "figure3_five_station" and not options:
        return _figure3()
    if name == "grid_small":
        unknown = set(options) - {"tau", "demand_scale", "capacity_per_car"}
        if unknown:
            raise ConfigurationError(f"unknown grid_small options {sorted(unknown)}")
        return _grid_small(**options)
    if name in PRESETS:
        raise ConfigurationError(f"preset {name!r} takes no options")
    raise ConfigurationError(f"unknown toy network {name!r}; choose from {PRESETS}")


def _figure2() -> ToyInstance:
    """Two stations joined by two parallel single-link lines.

    Train capacities (one passenger per car) make 2 of 3 path-1 and 4 of 7
    path-2 passengers catch the first train; the rest wait for the second.
    """
    stations = [Station("i"), Station("j")]
    platforms = [
        Platform(_pid(s, ln, 0), s, ln, 0, access_walk=20, egress_walk=20)
        for ln in ("R", "B") for s in ("i", "j")
    ]
    lines = [Line("R", 0, ("i", "j")), Line("B", 0, ("i", "j"))]
    net = Network(stations, platforms, lines)
    paths = {
        ("i", "j"): [
            Path("i", "j", (Leg(_pid("i", "R", 0), _pid("j", "R", 0)),)),
            Path("i", "j", (Leg(_pid("i", "B", 0), _pid("j", "B", 0)),)),
        ]
    }
    from .timetable import Stop, TrainRun

    c = parse_clock
    runs = [
        TrainRun("R-1", "R", 0, 2, (Stop("i", c("7:05"), c("7:05")), Stop("j", c("7:10"), c("7:10")))),
        TrainRun("R-2", "R", 0, 2, (Stop("i", c("7:20"), c("7:20")), Stop("j", c("7:25"), c("7:25")))),
        TrainRun("B-1", "B", 0, 4, (Stop("i", c("7:06"), c("7:06")), Stop("j", c("7:12"), c("7:12")))),
        TrainRun("B-2", "B", 0, 4, (Stop("i", c("7:18"), c("7:18")), Stop("j", c("7:24"), c("7:24")))),
    ]
    grid = build_time_grid(("7:00", "7:30"), 900, tail=0)
    for ps in paths.values():
        for p in ps:
            net.resolve_path(p)
    return ToyInstance(
        "figure2_two_path",
        net,
        paths,
        Timetable(runs),
        grid,
        SimConfig(capacity_per_car=1, warmup=0, cooldown=0, probes=True),
        demand={("i", 0, "j"): 10},
        tapins={("i", 0, "j"): [c("7:00") + 30 * k for k in range(10)]},
        notes={"shares": [0.3, 0.7]},
    )


def _figure3() -> ToyInstance:
    """Five stations; ODs 1-5 and 2-5 each choose between transferring at 4 or 3."""
    stations = [Station(str(k)) for k in range(1, 6)]
    walks = {  # (station, line): (access, egress)
        ("1", "R"): (60, 60), ("1", "B"): (60, 60),
        ("2", "R"): (45, 45), ("2", "B"): (45, 45),
        ("4", "R"): (40, 40), ("4", "G"): (40, 40),
        ("3", "B"): (40, 40), ("3", "Y"): (40, 40),
        ("5", "G"): (50, 50), ("5", "Y"): (50, 50),
    }
    transfer = {
        (_pid("4", "R", 0), _pid("4", "G", 0)): 60,
        (_pid("3", "B", 0), _pid("3", "Y", 0)): 60,
    }
    platforms = []
    for (s, ln), (acc, egr) in walks.items():
        pid = _pid(s, ln, 0)
        tw = {b: w for (a, b), w in transfer.items() if a == pid}
        platforms.append(Platform(pid, s, ln, 0, acc, egr, tw))
    lines = [
        Line("R", 0, ("1", "2", "4")),
        Line("B", 0, ("1", "2", "3")),
        Line("G", 0, ("4", "5")),
        Line("Y", 0, ("3", "5")),
    ]
    net = Network(stations, platforms, lines)

    def two_leg(o, b1, a1, line1, b2, a2, line2):
        return Path(o, "5", (Leg(_pid(b1, line1, 0), _pid(a1, line1, 0)),
                             Leg(_pid(b2, line2, 0), _pid(a2, line2, 0))))

    paths = {
        (o, "5"): [
            two_leg(o, o, "4", "R", "4", "5", "G"),
            two_leg(o, o, "3", "B", "3", "5", "Y"),
        ]
        for o in ("1", "2")
    }
    for ps in paths.values():
        for p in ps:
            net.resolve_path(p)
    first, last = parse_clock("7:00"), parse_clock("9:30")
    runs = (
        periodic_runs("R", 0, ("1", "2", "4"), (120, 180), first, last, 300)
        + periodic_runs("B", 0, ("1", "2", "3"), (120, 240), first + 60, last, 300)
        + periodic_runs("G", 0, ("4", "5"), (120,), first, last, 240)
        + periodic_runs("Y", 0, ("3", "5"), (150,), first, last, 240)
    )
    grid = build_time_grid(("8:00", "8:15"), 900, tail=3600)
    return ToyInstance(
        "figure3_five_station",
        net,
        paths,
        Timetable(runs),
        grid,
        SimConfig(capacity_per_car=230),
        demand={("1", 0, "5"): 40, ("2", 0, "5"): 30},
    )


# 3 x 3 grid, stations numbered row by row; one line per row and per column
_GRID = (("1", "2", "3"), ("4", "5", "6"), ("7", "8", "9"))
_ROW_LINES = ("H1", "H2", "H3")
_COL_LINES = ("V1", "V2", "V3")
_PARALLEL = {"H2": ("X2",)}  # express line sharing the stations of H2


def _walk_hash(*parts) -> int:
    return sum(ord(ch) * (i + 3) for i, ch in enumerate(":".join(map(str, parts))))


def grid_paths(network: Network) -> dict:
    """All monotone lattice paths between grid stations, one leg per straight run.

    A straight run along a row with a parallel line yields one path per line.
    """
    pos = {s: (r, c) for r, row in enumerate(_GRID) for c, s in enumerate(row)}

    def leg(a, b, line):
        ln = network.lines[(line, 0)]
        d = 0 if ln.stations.index(a) < ln.stations.index(b) else 1
        return Leg(_pid(a, line, d), _pid(b, line, d))

    paths = {}
    for o, (r0, c0) in pos.items():
        for d, (r1, c1) in pos.items():
            if o == d:
                continue
            dr, dc = r1 - r0, c1 - c0
            moves = "V" * abs(dr) + "H" * abs(dc)
            plist = []
            for seq in sorted(set(itertools.permutations(moves))):
                r, c = r0, c0
                options = []
                k = 0
                while k < len(seq):
                    j = k
                    while j < len(seq) and seq[j] == seq[k]:
                        j += 1
                    a = _GRID[r][c]
                    if seq[k] == "V":
                        r += (j - k) * (1 if dr > 0 else -1)
                        options.append([leg(a, _GRID[r][c], _COL_LINES[c])])
                    else:
                        c += (j - k) * (1 if dc > 0 else -1)
                        lines = (_ROW_LINES[r],) + _PARALLEL.get(_ROW_LINES[r], ())
                        options.append([leg(a, _GRID[r][c], ln) for ln in lines])
                    k = j
                for legs in itertools.product(*options):
                    plist.append(network.resolve_path(Path(o, d, tuple(legs))))
            paths[(o, d)] = plist
    return paths


def _grid_small(tau: int = 300, demand_scale: float = 1.0, capacity_per_car: int = 330) -> ToyInstance:
    """Nine stations on a 3 x 3 grid served by row lines H1-H3 and column lines V1-V3.

    Every monotone lattice path between two stations is in the path set, so
    paths of one OD have equal length while transfers, overlap (CF),
    in-vehicle and walking times vary.  Express line X2 shares the stations of
    H2, so some paths overlap completely; H2 runs short trains and is the
    congested corridor.
    """
    seq = {}
    for r, ln in enumerate(_ROW_LINES):
        seq[ln] = _GRID[r]
    for c, ln in enumerate(_COL_LINES):
        seq[ln] = tuple(row[c] for row in _GRID)
    seq["X2"] = _GRID[1]
    run_times = {
        "H1": (150, 180), "H2": (240, 210), "H3": (120, 150),
        "V1": (210, 180), "V2": (120, 150), "V3": (180, 240),
        "X2": (150, 150),
    }
    headway = {"H1": 240, "H2": 300, "H3": 240, "V1": 300, "V2": 240, "V3": 300, "X2": 420}
    cars = {"H1": 2, "H2": 1, "H3": 2, "V1": 2, "V2": 2, "V3": 2, "X2": 1}

    lines, plat_keys = [], []
    for ln, sts in seq.items():
        lines += [Line(ln, 0, sts), Line(ln, 1, tuple(reversed(sts)))]
        plat_keys += [(s, ln, d) for d in (0, 1) for s in sts]
    platforms = []
    for s, ln, d in plat_keys:
        # deterministic spread: 30-150 s access/egress, 40-240 s transfers
        tw = {
            _pid(s2, ln2, d2): 40 + _walk_hash(s, ln, s2, ln2) % 201
            for s2, ln2, d2 in plat_keys
            if s2 == s and ln2 != ln
        }
        platforms.append(Platform(
            _pid(s, ln, d), s, ln, d,
            30 + _walk_hash(s, ln, d, "a") % 121,
            30 + _walk_hash(s, ln, d, "e") % 121,
            tw,
        ))
    stations = [Station(s) for row in _GRID for s in row]
    net = Network(stations, platforms, lines)
    paths = grid_paths(net)

    first, last = parse_clock("16:40"), parse_clock("20:30")
    runs = []
    for ln, sts in seq.items():
        rt = run_times[ln]
        runs += periodic_runs(ln, 0, sts, rt, first, last, headway[ln], cars[ln])
        runs += periodic_runs(ln, 1, tuple(reversed(sts)), tuple(reversed(rt)),
                              first + headway[ln] // 2, last, headway[ln], cars[ln])
    grid = build_time_grid(("18:00", "19:00"), tau, tail=3600)

    # gravity-style demand peaking mid-hour; longer trips weighted up
    all_st = [s for row in _GRID for s in row]
    col = {s: c for row in _GRID for c, s in enumerate(row)}.get
    weight_o = dict(zip(all_st, (5, 3, 4, 6, 8, 3, 4, 3, 2)))
    weight_d = dict(zip(all_st, (2, 3, 4, 3, 8, 6, 4, 3, 5)))
    demand = {}
    rate = 1.2 * tau / 300  # passengers per interval scale with its length
    for m in range(grid.n):
        peak = 1.0 + 0.5 * np.sin(np.pi * (m + 0.5) / grid.n)
        for (o, d), plist in paths.items():
            n_lattice = math.comb(len(plist[0].stations) - 1, abs(col(o) - col(d)))
            val = int(round(demand_scale * rate * peak * weight_o[o] * weight_d[d] * n_lattice))
            if val:
                demand[(o, m, d)] = val
    return ToyInstance(
        "grid_small",
        net,
        paths,
        Timetable(runs),
        grid,
        SimConfig(capacity_per_car=capacity_per_car, warmup=3600, cooldown=3600, probes_per_path=5),
        demand=demand,
    )


# --------------------------------------------------------------------------


@dataclass
class SyntheticData:
    records: list[AfcRecord]
    shares: np.ndarray
    mu: np.ndarray
    loading: LoadingResult
    beta: np.ndarray


def generate_synthetic_afc(
    scenario: Scenario,
    od_flows: np.ndarray,
    beta_true,
    config: SimConfig,
    seed: int | None = None,
    tapins=None,
    shares=None,
    backend: str | None = None,
) -> SyntheticData:
    """Simulate passengers under ``beta_true`` and emit one AFC record each."""
    beta_true = np.asarray(beta_true, dtype=float)
    if shares is None:
        shares = shares_from_beta(beta_true, scenario.design, scenario.index.group_ptr)
    model = LoadingModel(scenario, config)
    res = model.run(od_flows, shares, seed=seed, tapins=tapins, backend=backend)
    tr = res.trace
    index = scenario.index
    horizon_out = scenario.grid.start + scenario.grid.n_exit * scenario.grid.tau
    records = []
    card = 0
    for pid in np.flatnonzero(tr.weight > 0):
        o, m, d, r = index.triple(int(tr.var[pid]))
        out = int(tr.tap_out[pid]) if not tr.stranded[pid] else horizon_out
        records.append(AfcRecord(str(card), o, int(tr.tap_in[pid]), d, out))
        card += 1
    return SyntheticData(records, shares, res.mu, res, beta_true)
