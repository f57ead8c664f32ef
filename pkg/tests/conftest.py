import numpy as np
import pytest

from metropath.domain import Leg, Line, Network, Path, Platform, Station, build_time_grid, parse_clock
from metropath.loading import SimConfig
from metropath.scenario import Scenario
from metropath.synthgen import build_toy_network
from metropath.timetable import Stop, Timetable, TrainRun, periodic_runs


@pytest.fixture(scope="session")
def figure2():
    return build_toy_network("figure2_two_path")


@pytest.fixture(scope="session")
def figure3():
    return build_toy_network("figure3_five_station")


@pytest.fixture(scope="session")
def figure3_scenario(figure3):
    return figure3.scenario()


def pid(station, line):
    return f"{station}:{line}"


def shuttle(n_trains=3, cars=1, headway=300, first="8:02", run=120, access=0, egress=0):
    """Two stations a -> b on one line, with a train every ``headway`` seconds."""
    net = Network(
        [Station("a"), Station("b")],
        [Platform(pid("a", "L"), "a", "L", 0, access, egress), Platform(pid("b", "L"), "b", "L", 0, access, egress)],
        [Line("L", 0, ("a", "b"))],
    )
    t0 = parse_clock(first)
    runs = [
        TrainRun(f"L{k}", "L", 0, cars, (Stop("a", t0 + k * headway, t0 + k * headway),
                                          Stop("b", t0 + k * headway + run, t0 + k * headway + run)))
        for k in range(n_trains)
    ]
    paths = {("a", "b"): [Path("a", "b", (Leg(pid("a", "L"), pid("b", "L")),))]}
    return net, Timetable(runs), paths


def random_instance(rng: np.random.Generator):
    """Small random line network with an optional parallel line, demand and shares.

    Returns ``(scenario, od_flows, shares, sim_config)``.
    """
    n_st = int(rng.integers(2, 5))
    names = [f"s{k}" for k in range(n_st)]
    lines = ["L"] + (["M"] if rng.random() < 0.6 else [])
    platforms = []
    for ln in lines:
        for s in names:
            others = {pid(s, o): int(rng.integers(20, 90)) for o in lines if o != ln}
            platforms.append(Platform(pid(s, ln), s, ln, 0, int(rng.integers(0, 60)),
                                      int(rng.integers(0, 60)), others))
    net = Network([Station(s) for s in names], platforms, [Line(ln, 0, tuple(names)) for ln in lines])
    first, last = parse_clock("7:40"), parse_clock("9:00")
    runs = []
    for ln in lines:
        run_times = tuple(int(x) for x in rng.integers(60, 200, size=n_st - 1))
        runs += periodic_runs(ln, 0, tuple(names), run_times, first + int(rng.integers(0, 120)), last,
                              int(rng.integers(150, 420)), cars=int(rng.integers(1, 3)), dwell=20)
    paths = {}
    for i in range(n_st):
        for j in range(i + 1, n_st):
            if rng.random() < 0.7 or not paths:
                paths[(names[i], names[j])] = [
                    Path(names[i], names[j], (Leg(pid(names[i], ln), pid(names[j], ln)),)) for ln in lines
                ]
    grid = build_time_grid(("8:00", "8:30"), 900, tail=1800)
    sc = Scenario(net, Timetable(runs), paths, grid)
    q = rng.integers(0, 40, size=sc.index.n_groups).astype(float)
    shares = np.empty(sc.index.n_vars)
    for g in range(sc.index.n_groups):
        sl = sc.index.group_slice(g)
        shares[sl] = rng.dirichlet(np.ones(sl.stop - sl.start))
    cfg = SimConfig(capacity_per_car=int(rng.integers(2, 25)), warmup=1200, cooldown=1800,
                    probes_per_path=int(rng.integers(1, 4)))
    return sc, q, shares, cfg


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
