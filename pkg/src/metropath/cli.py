"""Command-line entry point: ``metropath estimate|simulate|synth``.

Each command reads one YAML configuration file; relative file paths in it
resolve against the file's directory.  Exit status 1 marks invalid input,
2 a solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .afc import IngestionReport, observed_flows_from_afc, read_afc, tapins_from_afc, write_afc
from .alc import read_constraints
from .clogit import shares_from_beta
from .domain import (
    ATTRIBUTE_NAMES,
    ConfigurationError,
    InvalidPathError,
    UnservablePathError,
    build_time_grid,
    format_clock,
    load_network,
    load_paths,
    network_to_dict,
    paths_to_dict,
)
from .estimator import (
    EstimationError,
    RunConfig,
    objective,
    read_shares_csv,
    rmse,
    run_estimation,
    write_convergence_csv,
    write_shares_csv,
)
from .loading import LoadingModel, MissingShareError, SimConfig
from .qp import QpInfeasible
from .scenario import Scenario
from .synthgen import PRESETS, SYNTHETIC_BETA, build_toy_network, generate_synthetic_afc
from .timetable import read_timetable, write_timetable

log = logging.getLogger("metropath")

TOP_KEYS = {
    "seed", "network", "paths", "timetable", "afc", "period", "tau", "tail", "gamma",
    "distance_mode", "reference_shares", "sim", "estimation", "simulate", "synth",
}
SIM_KEYS = {"capacity_per_car", "warmup", "cooldown", "probes", "probes_per_path", "tapins"}
EST_KEYS = {
    "k_total", "k_burn", "beta_init", "w1", "w2", "beta_prior", "lower", "upper", "alc_samples",
    "alc_tolerance", "alc_cross_interval", "replications", "constraints_override",
}
SIMULATE_KEYS = {"shares", "beta"}
SYNTH_KEYS = {"preset", "options", "beta"}


class CliError(Exception):
    def __init__(self, module: str, message: str, code: int):
        super().__init__(message)
        self.module = module
        self.code = code


# --------------------------------------------------------------------------
# configuration


def load_config(path) -> tuple[dict, Path]:
    path = Path(path)
    if not path.is_file():
        raise CliError("cli", f"config file not found: {path}", 1)
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh) or {}
    except yaml.YAMLError as exc:
        raise CliError("cli", f"cannot parse {path}: {exc}", 1) from exc
    if not isinstance(cfg, dict):
        raise CliError("cli", f"{path}: top level must be a mapping", 1)
    _check_keys(cfg, TOP_KEYS, "config")
    for section, keys in (("sim", SIM_KEYS), ("estimation", EST_KEYS),
                          ("simulate", SIMULATE_KEYS), ("synth", SYNTH_KEYS)):
        if section in cfg:
            if not isinstance(cfg[section], dict):
                raise CliError("cli", f"section {section!r} must be a mapping", 1)
            _check_keys(cfg[section], keys, section)
    return cfg, path.parent


def _check_keys(section: dict, allowed: set, name: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise CliError("cli", f"unknown keys in {name}: {unknown}", 1)


def _file(cfg: dict, base: Path, key: str, required: bool = True) -> Path | None:
    if key not in cfg or cfg[key] is None:
        if required:
            raise CliError("cli", f"config is missing {key!r}", 1)
        return None
    p = Path(cfg[key])
    p = p if p.is_absolute() else base / p
    if not p.is_file():
        raise CliError("cli", f"{key} file not found: {p}", 1)
    return p


def sim_config(cfg: dict, seed: int) -> SimConfig:
    s = cfg.get("sim", {})
    return SimConfig(
        capacity_per_car=int(s.get("capacity_per_car", 230)),
        warmup=int(s.get("warmup", 3600)),
        cooldown=int(s.get("cooldown", 3600)),
        seed=seed,
        probes=bool(s.get("probes", True)),
        probes_per_path=int(s.get("probes_per_path", 5)),
    )


def run_config(cfg: dict, seed: int) -> RunConfig:
    e = cfg.get("estimation", {})
    kwargs = {}
    for key in ("k_total", "k_burn", "alc_samples", "replications"):
        if key in e:
            kwargs[key] = int(e[key])
    for key in ("w1", "w2", "alc_tolerance"):
        if key in e:
            kwargs[key] = float(e[key])
    for key in ("beta_init", "beta_prior", "lower", "upper"):
        if key in e and e[key] is not None:
            kwargs[key] = tuple(_beta_values(e[key], key))
    if "alc_cross_interval" in e:
        kwargs["alc_cross_interval"] = bool(e["alc_cross_interval"])
    return RunConfig(seed=seed, **kwargs)


def _beta_values(value, name: str) -> list[float]:
    if isinstance(value, dict):
        missing = set(ATTRIBUTE_NAMES) - set(value)
        if missing:
            raise ConfigurationError(f"{name} lacks {sorted(missing)}")
        return [float(value[k]) for k in ATTRIBUTE_NAMES]
    values = [float(x) for x in value]
    if len(values) != len(ATTRIBUTE_NAMES):
        raise ConfigurationError(f"{name} needs {len(ATTRIBUTE_NAMES)} values")
    return values


class Inputs:
    """Network, timetable, paths, grid and AFC-derived flows of one run."""

    def __init__(self, cfg: dict, base: Path, seed: int):
        self.cfg = cfg
        self.sim = sim_config(cfg, seed)
        try:
            network = load_network(_file(cfg, base, "network"))
            timetable = read_timetable(_file(cfg, base, "timetable"))
            paths = load_paths(_file(cfg, base, "paths"), network)
            if "period" not in cfg or "tau" not in cfg:
                raise ConfigurationError("config needs 'period' and 'tau'")
            period = cfg["period"]
            if not isinstance(period, (list, tuple)) or len(period) != 2:
                raise ConfigurationError("period must be [start, end]")
            tail = int(cfg.get("tail", self.sim.cooldown))
            self.grid = build_time_grid(tuple(period), int(cfg["tau"]), tail)
            self.scenario = Scenario(network, timetable, paths, self.grid,
                                     float(cfg.get("gamma", 5.0)),
                                     str(cfg.get("distance_mode", "stations")))
        except (ConfigurationError, InvalidPathError, UnservablePathError, KeyError, ValueError) as exc:
            raise CliError("domain", str(exc), 1) from exc
        afc_path = _file(cfg, base, "afc")
        self.report = IngestionReport()
        self.records = read_afc(afc_path, self.report)
        index = self.scenario.index
        self.od_flows, self.observed = observed_flows_from_afc(self.records, self.grid, index, self.report)
        mode = cfg.get("sim", {}).get("tapins", "uniform")
        if mode not in ("uniform", "afc"):
            raise CliError("cli", f"sim.tapins must be 'uniform' or 'afc', not {mode!r}", 1)
        self.tapins = tapins_from_afc(self.records, self.grid, index) if mode == "afc" else None
        ref = _file(cfg, base, "reference_shares", required=False)
        self.reference = None if ref is None else read_shares_csv(self.scenario, ref)


# --------------------------------------------------------------------------
# writers


def _write_json(path: Path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def _write_mu(path: Path, scenario: Scenario, mu: np.ndarray) -> None:
    index = scenario.index
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["origin", "interval", "destination", "path", "exit_interval", "mu"])
        for v, n in zip(*np.nonzero(mu)):
            o, m, d, r = index.triple(int(v))
            w.writerow([o, m, d, r, int(n), repr(float(mu[v, n]))])


def _write_entry_exit(path: Path, scenario: Scenario, flows: np.ndarray) -> None:
    index = scenario.index
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["origin", "interval", "destination", "exit_interval", "flow"])
        for g, n in zip(*np.nonzero(flows)):
            o, m, d = index.groups[int(g)]
            w.writerow([o, m, d, int(n), repr(float(flows[g, n]))])


def _beta_dict(beta) -> dict:
    return {k: float(v) for k, v in zip(ATTRIBUTE_NAMES, beta)}


# --------------------------------------------------------------------------
# commands


def cmd_estimate(config_path, out_dir, seed: int | None = None) -> int:
    cfg, base = load_config(config_path)
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = Inputs(cfg, base, seed)
    try:
        rc = run_config(cfg, seed)
    except ConfigurationError as exc:
        raise CliError("estimator", str(exc), 1) from exc
    override = cfg.get("estimation", {}).get("constraints_override")
    extra = None
    if override is not None:
        try:
            extra = read_constraints(_file({"o": override}, base, "o"), inputs.scenario.index)
        except (ConfigurationError, KeyError, ValueError) as exc:
            raise CliError("alc", f"bad constraint override: {exc}", 1) from exc
    try:
        result = run_estimation(inputs.scenario, inputs.od_flows, inputs.observed, rc, inputs.sim,
                                reference_shares=inputs.reference, extra_constraints=extra,
                                tapins=inputs.tapins)
    except EstimationError as exc:
        module = {"qp": "qp", "logit": "clogit", "loading": "loading_sim"}[exc.stage]
        if isinstance(exc.cause, QpInfeasible):
            cert = exc.cause.to_dict(inputs.scenario.index)
            _write_json(out / "infeasibility.json", {"iteration": exc.iteration, "certificate": cert})
            raise CliError(module, f"{exc}; certificate: {json.dumps(cert)}", 2) from exc
        raise CliError(module, str(exc), 2) from exc

    sc = inputs.scenario
    write_shares_csv(sc, result.shares, out / "shares.csv")
    write_convergence_csv(result.records, out / "convergence.csv")
    result.loading.indicators.write_csv(out / "indicators.csv")
    result.constraints.write_json(out / "constraints.json", sc.index)
    _write_json(out / "report.json", {
        "command": "estimate",
        "version": __version__,
        "config": cfg,
        "seed": seed,
        "ingestion": inputs.report.to_dict(),
        "alc": result.dof,
        "beta": _beta_dict(result.beta),
        "objective": result.objective,
        "initial_objective": result.initial_objective,
        "rmse": result.rmse,
        "stranded": result.loading.n_stranded,
        "iterations": [r.to_dict() for r in result.records],
    })
    print(f"beta = {np.round(result.beta, 4).tolist()}  objective = {result.objective:.1f}")
    return 0


def cmd_simulate(config_path, out_dir, seed: int | None = None) -> int:
    cfg, base = load_config(config_path)
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = Inputs(cfg, base, seed)
    sc = inputs.scenario
    spec = cfg.get("simulate", {})
    source = spec.get("shares", "uniform")
    if source == "uniform":
        shares = sc.uniform_shares()
    elif source == "beta":
        if "beta" not in spec:
            raise CliError("cli", "simulate.shares = 'beta' needs simulate.beta", 1)
        try:
            beta = _beta_values(spec["beta"], "simulate.beta")
        except ConfigurationError as exc:
            raise CliError("clogit", str(exc), 1) from exc
        shares = shares_from_beta(beta, sc.design, sc.index.group_ptr)
    else:
        path = _file({"s": source}, base, "s")
        try:
            shares = read_shares_csv(sc, path)
        except (KeyError, ValueError) as exc:
            raise CliError("estimator", f"cannot read shares {path}: {exc}", 1) from exc
    model = LoadingModel(sc, inputs.sim)
    try:
        res = model.run(inputs.od_flows, shares, seed=seed, tapins=inputs.tapins)
    except (MissingShareError, ValueError) as exc:
        raise CliError("loading_sim", str(exc), 1) from exc

    _write_mu(out / "mu.csv", sc, res.mu)
    _write_entry_exit(out / "entry_exit.csv", sc, res.entry_exit)
    res.indicators.write_csv(out / "indicators.csv")
    res.trace.write_ndjson(out / "trace.ndjson", sc.index, model.platform_ids)
    obj = objective(res.entry_exit, inputs.observed)
    ind = res.indicators
    served = ind.boardings[:, -1] + ind.denied[:, -1] > 0
    report = {
        "command": "simulate",
        "version": __version__,
        "config": cfg,
        "seed": seed,
        "shares": source,
        "ingestion": inputs.report.to_dict(),
        "objective": obj,
        "rmse": None if inputs.reference is None else rmse(shares, inputs.reference),
        "stranded": res.n_stranded,
        "average_left_behind": float(ind.left_behind_rate[served, -1].mean()) if served.any() else 0.0,
        "congested_platforms": ind.congested(),
    }
    _write_json(out / "report.json", report)
    print(f"objective = {obj:.1f}  stranded = {res.n_stranded}")
    return 0


def cmd_synth(config_path, out_dir, seed: int | None = None) -> int:
    cfg, base = load_config(config_path)
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    spec = cfg.get("synth", {})
    preset = spec.get("preset")
    if preset not in PRESETS:
        raise CliError("synthgen", f"unknown toy network {preset!r}; choose from {list(PRESETS)}", 1)
    try:
        inst = build_toy_network(preset, **(spec.get("options") or {}))
        beta = _beta_values(spec.get("beta", SYNTHETIC_BETA.tolist()), "synth.beta")
    except (ConfigurationError, TypeError) as exc:
        raise CliError("synthgen", str(exc), 1) from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sc = inst.scenario()
    q = inst.od_flows(sc)
    shares = inst.preset_shares(sc)
    syn = generate_synthetic_afc(sc, q, beta, inst.sim_config, seed=seed,
                                 tapins=inst.tapin_groups(sc), shares=shares)

    _write_json(out / "network.json", network_to_dict(inst.network))
    _write_json(out / "paths.json", paths_to_dict(inst.paths))
    write_timetable(inst.timetable, out / "timetable.csv")
    write_afc(syn.records, out / "afc.csv")
    write_shares_csv(sc, syn.shares, out / "reference_shares.csv")
    _write_mu(out / "reference_mu.csv", sc, syn.mu)
    _write_json(out / "beta.json", _beta_dict(beta))
    grid = sc.grid
    sim = inst.sim_config
    run_cfg = {
        # estimation draws its own simulation stream, disjoint from the generator's
        "seed": seed + 1000,
        "network": "network.json",
        "paths": "paths.json",
        "timetable": "timetable.csv",
        "afc": "afc.csv",
        "reference_shares": "reference_shares.csv",
        "period": [format_clock(grid.start), format_clock(grid.end)],
        "tau": grid.tau,
        "tail": grid.tail,
        "sim": {
            "capacity_per_car": sim.capacity_per_car,
            "warmup": sim.warmup,
            "cooldown": sim.cooldown,
            "probes_per_path": sim.probes_per_path,
            "tapins": "afc" if inst.tapins is not None else "uniform",
        },
        "estimation": {
            "k_total": 15,
            "k_burn": 13,
            "beta_init": [0.0, 0.0, 0.0, 0.0],
            "replications": 8 if preset == "grid_small" else 1,
        },
        "simulate": {"shares": "reference_shares.csv"},
    }
    with open(out / "config.yaml", "w") as fh:
        yaml.safe_dump(run_cfg, fh, sort_keys=False)
    print(f"{len(syn.records)} AFC records written to {out / 'afc.csv'}")
    return 0


COMMANDS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="metropath", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"metropath {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args.config, args.out, args.seed)
    except CliError as exc:
        print(f"metropath {args.command} [{exc.module}]: {exc}", file=sys.stderr)
        return exc.code
    except ConfigurationError as exc:
        print(f"metropath {args.command} [config]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
