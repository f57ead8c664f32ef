"""Event-based network loading under first-in-first-board and strict capacity.

Passengers are discrete.  Each ``(origin, m, destination)`` demand is split
over paths by largest-remainder apportionment, tap-in times are uniform
within the entry interval, and the timetable drives two event types: train
arrival (alight transferees and exiters) and train departure (board the
platform queue in arrival order up to the remaining capacity).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from ..domain import ConfigurationError, UnservablePathError, format_clock
from ..scenario import Scenario
from . import _backend


class MissingShareError(ValueError):
    pass


class ConsistencyError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    capacity_per_car: int = 230
    warmup: int = 3600
    cooldown: int = 3600
    seed: int = 0
    probes: bool = True
    probes_per_path: int = 5

    def __post_init__(self):
        if self.capacity_per_car < 1:
            raise ConfigurationError("capacity per car must be >= 1")
        if self.warmup < 0 or self.cooldown < 0:
            raise ConfigurationError("warm-up and cool-down must be >= 0")
        if self.probes and self.probes_per_path < 1:
            raise ConfigurationError("probes_per_path must be >= 1")


# --------------------------------------------------------------------------
# apportionment


def apportion(total: int, shares, rng: np.random.Generator) -> np.ndarray:
    """Largest-remainder split of ``total`` passengers; exact sum."""
    shares = np.asarray(shares, dtype=float)
    exact = total * shares
    counts = np.floor(exact + 1e-9).astype(np.int64)
    remainder = int(total - counts.sum())
    if remainder > 0:
        frac = np.round(exact - counts, 12)
        tiebreak = rng.permutation(len(shares))
        order = np.lexsort((tiebreak, -frac))
        counts[order[:remainder]] += 1
    return counts


def assign_paths(od_flows, shares, index, rng: np.random.Generator) -> np.ndarray:
    """Integer passenger count per share variable."""
    od_flows = np.asarray(od_flows, dtype=float)
    shares = np.asarray(shares, dtype=float)
    if od_flows.shape != (index.n_groups,) or shares.shape != (index.n_vars,):
        raise ValueError("flow/share arrays do not match the choice index")
    if np.any(od_flows < 0):
        raise ValueError("negative OD entry flow")
    totals = np.round(od_flows)
    if np.any(np.abs(totals - od_flows) > 1e-9):
        raise ValueError("OD entry flows must be whole passenger counts")
    counts = np.zeros(index.n_vars, dtype=np.int64)
    for g in np.flatnonzero(totals > 0):
        sl = index.group_slice(g)
        p = shares[sl]
        if np.any(np.isnan(p)):
            raise MissingShareError(f"no path shares for {index.groups[g]}")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12) or abs(p.sum() - 1) > 1e-9:
            raise ValueError(f"invalid shares for {index.groups[g]}: {p}")
        counts[sl] = apportion(int(totals[g]), np.clip(p, 0, 1), rng)
    return counts


# --------------------------------------------------------------------------
# outputs


@dataclass
class Trace:
    """Per-passenger record of one simulation run (ids in tap-in order)."""

    var: np.ndarray
    group: np.ndarray
    weight: np.ndarray
    tap_in: np.ndarray
    leg_ptr: np.ndarray
    leg_platform: np.ndarray
    leg_arrive: np.ndarray
    leg_board: np.ndarray
    leg_alight: np.ndarray
    tap_out: np.ndarray
    stranded: np.ndarray

    @property
    def n(self) -> int:
        return len(self.var)

    def records(self, index, platform_ids):
        for pid in range(self.n):
            o, m, d, r = index.triple(int(self.var[pid]))
            lo, hi = self.leg_ptr[pid], self.leg_ptr[pid + 1]
            yield {
                "id": pid,
                "origin": o,
                "destination": d,
                "interval": m,
                "path": r,
                "weight": int(self.weight[pid]),
                "tap_in": format_clock(self.tap_in[pid]),
                "legs": [
                    {
                        "platform": platform_ids[self.leg_platform[k]],
                        "arrive": _clock_or_none(self.leg_arrive[k]),
                        "board": _clock_or_none(self.leg_board[k]),
                        "alight": _clock_or_none(self.leg_alight[k]),
                    }
                    for k in range(lo, hi)
                ],
                "tap_out": None if self.stranded[pid] else format_clock(self.tap_out[pid]),
                "stranded": bool(self.stranded[pid]),
            }

    def write_ndjson(self, path, index, platform_ids) -> None:
        with open(path, "w") as fh:
            for rec in self.records(index, platform_ids):
                fh.write(json.dumps(rec) + "\n")


def _clock_or_none(t):
    return None if t < 0 else format_clock(t)


@dataclass
class PlatformIndicators:
    """Arrivals, boardings and left-behind per platform and clock window."""

    platforms: list[str]
    windows: list[tuple[int, int]]
    arrivals: np.ndarray  # (platform, window)
    boardings: np.ndarray
    denied: np.ndarray
    initial_queue: np.ndarray

    @property
    def left_behind_rate(self) -> np.ndarray:
        waiting = self.denied + self.boardings
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(waiting > 0, self.denied / np.maximum(waiting, 1), 0.0)

    def rows(self):
        lbr = self.left_behind_rate
        for i, pid in enumerate(self.platforms):
            for w, (lo, hi) in enumerate(self.windows):
                yield {
                    "platform": pid,
                    "window_start": format_clock(lo),
                    "window_end": format_clock(hi),
                    "arrivals": int(self.arrivals[i, w]),
                    "boardings": int(self.boardings[i, w]),
                    "denied": int(self.denied[i, w]),
                    "left_behind_rate": round(float(lbr[i, w]), 6),
                }

    def write_csv(self, path) -> None:
        fields = ["platform", "window_start", "window_end", "arrivals",
                  "boardings", "denied", "left_behind_rate"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            for row in self.rows():
                w.writerow(row)

    def congested(self, threshold: float = 0.0) -> list[str]:
        """Platforms with a whole-period left-behind rate above ``threshold``."""
        lbr = self.left_behind_rate[:, -1]
        return [p for p, x in zip(self.platforms, lbr) if x > threshold]


@dataclass
class LoadingResult:
    counts: np.ndarray  # assigned real passengers per share variable
    mu: np.ndarray  # (n_vars, n_exit) delay rates
    entry_exit: np.ndarray  # (n_groups, n_exit) real passengers
    indicators: PlatformIndicators
    trace: Trace
    departures: dict = field(repr=False, default_factory=dict)

    @property
    def n_stranded(self) -> int:
        return int(np.sum(self.trace.stranded & (self.trace.weight > 0)))


# --------------------------------------------------------------------------
# model


class LoadingModel:
    """Pre-flattened network and timetable ready for repeated loading runs."""

    def __init__(self, scenario: Scenario, config: SimConfig = SimConfig()):
        self.scenario = scenario
        self.config = config
        net, tt, grid = scenario.network, scenario.timetable, scenario.grid
        self.platform_ids = list(net.platforms)
        pidx = net.platform_index
        self.sim_start = grid.start - config.warmup
        self.sim_end = grid.end + config.cooldown

        patterns = {key: ln.stations for key, ln in net.lines.items()}
        s_plat, s_train, s_base, s_pos, s_cap, s_arr, s_dep, s_last = ([] for _ in range(8))
        for t_idx, run in enumerate(tt.runs):
            pattern = patterns[(run.line, run.direction)]
            base = len(s_plat)
            for pos, stop in enumerate(run.stops):
                plat = net.platform_at(stop.station, run.line, run.direction)
                if plat is None:
                    raise ConfigurationError(
                        f"train {run.train_id} calls at {stop.station} with no platform "
                        f"for line {run.line}/{run.direction}"
                    )
                s_plat.append(pidx[plat.id])
                s_train.append(t_idx)
                s_base.append(base)
                s_pos.append(pos)
                s_cap.append(run.cars * config.capacity_per_car)
                s_arr.append(stop.arrival)
                s_dep.append(stop.departure)
                s_last.append(pos == len(pattern) - 1)
        as64 = lambda x: np.asarray(x, dtype=np.int64)
        self.stop_platform = as64(s_plat)
        self.stop_train = as64(s_train)
        self.stop_base = as64(s_base)
        self.stop_pos = as64(s_pos)
        self.stop_capacity = as64(s_cap)
        self.stop_arrival = as64(s_arr)
        self.stop_departure = as64(s_dep)
        self.n_trains = len(tt.runs)

        n_stop = len(s_plat)
        stops = np.arange(n_stop)
        in_arr = (self.stop_arrival >= self.sim_start) & (self.stop_arrival <= self.sim_end)
        in_dep = (
            (self.stop_departure >= self.sim_start)
            & (self.stop_departure <= self.sim_end)
            & ~np.asarray(s_last, dtype=bool)
        )
        times = np.concatenate([self.stop_arrival[in_arr], self.stop_departure[in_dep]])
        kinds = np.concatenate([np.zeros(in_arr.sum()), np.ones(in_dep.sum())]).astype(np.int64)
        ids = np.concatenate([stops[in_arr], stops[in_dep]])
        order = np.lexsort((ids, kinds, times))
        self.event_time = as64(times[order])
        self.event_kind = as64(kinds[order])
        self.event_stop = as64(ids[order])

        # leg templates per share variable
        index = scenario.index
        leg_plat, leg_alight_pos, leg_walk, access = [], [], [], []
        var_leg_ptr = [0]
        for v in range(index.n_vars):
            path = scenario.path_of(v)
            for k, leg in enumerate(path.legs):
                b, a = net.platforms[leg.board], net.platforms[leg.alight]
                if not tt.runs_for(b.line, b.direction):
                    raise UnservablePathError(f"no service on line {b.line}/{b.direction}")
                pattern = patterns[(b.line, b.direction)]
                leg_plat.append(pidx[b.id])
                leg_alight_pos.append(pattern.index(a.station))
                if k + 1 < len(path.legs):
                    leg_walk.append(net.transfer_walk(a.id, path.legs[k + 1].board))
                else:
                    leg_walk.append(a.egress_walk)
            access.append(net.platforms[path.legs[0].board].access_walk)
            var_leg_ptr.append(len(leg_plat))
        self.tpl_platform = as64(leg_plat)
        self.tpl_alight_pos = as64(leg_alight_pos)
        self.tpl_walk = as64(leg_walk)
        self.var_access = as64(access)
        self.var_leg_ptr = as64(var_leg_ptr)

    # ------------------------------------------------------------------
    def _passengers(self, od_flows, shares, seed, tapins):
        index, grid, cfg = self.scenario.index, self.scenario.grid, self.config
        # independent streams: tap-in times and the within-group ranking depend
        # on the group totals only, so a small share change moves few passengers
        rng_share, rng_tap, rng_rank = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
        counts = assign_paths(od_flows, shares, index, rng_share)
        group_lo = grid.start + grid.tau * np.array([m for _, m, _ in index.groups], dtype=np.int64)

        totals = index.group_sums(counts).astype(np.int64)
        real_group = np.repeat(np.arange(index.n_groups), totals)
        if tapins is None:
            real_tap = group_lo[real_group] + rng_tap.integers(0, grid.tau, size=len(real_group))
        else:
            real_tap = np.empty(len(real_group), dtype=np.int64)
            starts = np.concatenate([[0], np.cumsum(totals)])
            for g in np.flatnonzero(totals):
                times = np.asarray(tapins.get(g, ()), dtype=np.int64)
                if len(times) != totals[g]:
                    raise ValueError(f"{len(times)} tap-in times given for {totals[g]} passengers of {index.groups[g]}")
                real_tap[starts[g] : starts[g + 1]] = times
        # rank passengers within each group at random; paths fill the ranks in order
        rank = np.lexsort((rng_rank.random(len(real_group)), real_group))
        real_tap = real_tap[rank]
        real_var = np.repeat(np.arange(index.n_vars), counts)

        if cfg.probes:
            demanded = np.asarray(od_flows) > 0
            pvars = np.flatnonzero(demanded[index.var_group])
            k = cfg.probes_per_path
            offsets = ((np.arange(k) + 0.5) * grid.tau / k).astype(np.int64)
            probe_var = np.repeat(pvars, k)
            probe_tap = group_lo[index.var_group[probe_var]] + np.tile(offsets, len(pvars))
        else:
            probe_var = probe_tap = np.zeros(0, dtype=np.int64)

        var = np.concatenate([real_var, probe_var]).astype(np.int64)
        tap = np.concatenate([real_tap, probe_tap]).astype(np.int64)
        weight = np.concatenate([np.ones(len(real_var)), np.zeros(len(probe_var))]).astype(np.int64)
        order = np.lexsort((np.arange(len(var)), tap))
        return counts, var[order], tap[order], weight[order]

    def run(self, od_flows, shares, seed: int | None = None, tapins=None, backend: str | None = None) -> LoadingResult:
        """Load the network once; ``tapins`` optionally fixes tap-in times per group."""
        scen, grid = self.scenario, self.scenario.grid
        index = scen.index
        seed = self.config.seed if seed is None else seed
        counts, var, tap, weight = self._passengers(od_flows, shares, seed, tapins)

        nl = np.diff(self.var_leg_ptr)[var]
        leg_ptr = np.concatenate([[0], np.cumsum(nl)]).astype(np.int64)
        flat = np.repeat(self.var_leg_ptr[var] - leg_ptr[:-1], nl) + np.arange(leg_ptr[-1])
        arrival0 = tap + self.var_access[var]

        kernel = _backend.get_kernel(backend)
        out = kernel(
            arrival0.astype(np.int64),
            (1 - weight).astype(np.int64),
            leg_ptr,
            self.tpl_platform[flat],
            self.tpl_alight_pos[flat],
            self.tpl_walk[flat],
            self.stop_platform,
            self.stop_train,
            self.stop_base,
            self.stop_capacity,
            self.event_time,
            self.event_kind,
            self.event_stop,
            len(self.platform_ids),
            self.n_trains,
        )
        if np.any(out["dep_load"] > self.stop_capacity):
            raise AssertionError("train capacity exceeded at a departure")

        stranded = out["pass_exit"] < 0
        trace = Trace(
            var=var,
            group=index.var_group[var],
            weight=weight,
            tap_in=tap,
            leg_ptr=leg_ptr,
            leg_platform=self.tpl_platform[flat],
            leg_arrive=out["leg_arrive"],
            leg_board=out["leg_board"],
            leg_alight=out["leg_alight"],
            tap_out=out["pass_exit"],
            stranded=stranded,
        )
        entry_exit = np.zeros((index.n_groups, grid.n_exit))
        bins = exit_bins(trace, grid)
        real = weight > 0
        np.add.at(entry_exit, (trace.group[real], bins[real]), 1.0)
        mu = delay_rates_from_trace(trace, grid, index, od_flows)
        indicators = self._indicators(trace, out)
        return LoadingResult(counts, mu, entry_exit, indicators, trace, out)

    def _indicators(self, trace: Trace, out) -> PlatformIndicators:
        grid = self.scenario.grid
        windows = [grid.interval_bounds(m) for m in range(grid.n)] + [(grid.start, grid.end)]
        n_p = len(self.platform_ids)
        arrivals = np.zeros((n_p, len(windows)), dtype=np.int64)
        boardings = np.zeros_like(arrivals)
        denied = np.zeros_like(arrivals)
        initial = np.zeros_like(arrivals)

        real_leg = np.repeat(trace.weight > 0, np.diff(trace.leg_ptr))
        la, lb = trace.leg_arrive, trace.leg_board
        dep_t = self.stop_departure
        for w, (lo, hi) in enumerate(windows):
            sel = real_leg & (la >= lo) & (la < hi)
            arrivals[:, w] = np.bincount(trace.leg_platform[sel], minlength=n_p)
            waiting = real_leg & (la >= 0) & (la < lo) & ((lb < 0) | (lb >= lo))
            initial[:, w] = np.bincount(trace.leg_platform[waiting], minlength=n_p)
            in_w = (dep_t >= lo) & (dep_t < hi)
            boardings[:, w] = np.bincount(self.stop_platform[in_w], weights=out["dep_boarded"][in_w], minlength=n_p)
            denied[:, w] = np.bincount(self.stop_platform[in_w], weights=out["dep_denied"][in_w], minlength=n_p)
        return PlatformIndicators(self.platform_ids, windows, arrivals, boardings, denied, initial)


def exit_bins(trace: Trace, grid) -> np.ndarray:
    """Exit interval per passenger; stranded passengers go to the last bin."""
    bins = grid.exit_interval(np.where(trace.stranded, grid.start, trace.tap_out))
    return np.where(trace.stranded, grid.n_exit - 1, bins).astype(np.int64)


def delay_rates_from_trace(trace: Trace, grid, index, od_flows=None) -> np.ndarray:
    """Exit-interval histogram per share variable, normalised per row.

    Rows with real passengers use them alone; otherwise the zero-weight
    probes count with equal unit weights.
    """
    bins = exit_bins(trace, grid)
    real = trace.weight > 0
    hist_real = np.zeros((index.n_vars, grid.n_exit))
    hist_probe = np.zeros_like(hist_real)
    np.add.at(hist_real, (trace.var[real], bins[real]), 1.0)
    np.add.at(hist_probe, (trace.var[~real], bins[~real]), 1.0)
    n_real = hist_real.sum(axis=1)
    n_probe = hist_probe.sum(axis=1)
    hist = np.where((n_real > 0)[:, None], hist_real, hist_probe)
    total = np.where(n_real > 0, n_real, n_probe)
    if od_flows is not None:
        demanded = np.asarray(od_flows)[index.var_group] > 0
        bad = demanded & (total == 0)
        if np.any(bad):
            v = int(np.flatnonzero(bad)[0])
            raise ConsistencyError(f"no traversal recorded for demanded path {index.triple(v)}")
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = np.where((total > 0)[:, None], hist / np.maximum(total, 1)[:, None], 0.0)
    return mu
