"""The eight acceptance criteria, each at its stated tolerance and time budget."""

import dataclasses
import json
import time

import numpy as np
import pytest
import yaml

from metropath.alc import construct_alc, sample_betas
from metropath.cli import Inputs, cmd_estimate, cmd_simulate, cmd_synth, load_config, run_config
from metropath.clogit import fit_fractional_logit, shares_from_beta
from metropath.domain import path_flows
from metropath.estimator import run_estimation
from metropath.loading import LoadingModel
from metropath.qp import primal_violation, solve_qp
from metropath.synthgen import BETA_LOWER, BETA_UPPER, SYNTHETIC_BETA, build_toy_network

from acceptance_log import criterion
from conftest import random_instance
from oracles import share_qp_oracle
from qp_cases import random_qp
from sim_checks import check_run

SYNTH_SEED = 1
CONVERGENCE_BAND = 0.1  # max over k >= K_b of |beta_k - beta_Kt|, infinity norm


@pytest.fixture(scope="module")
def grid_dataset(tmp_path_factory):
    """grid_small synthetic data from the true beta plus one full estimation through the CLI."""
    root = tmp_path_factory.mktemp("acceptance")
    (root / "synth.yaml").write_text(f"seed: {SYNTH_SEED}\nsynth:\n  preset: grid_small\n")
    data = root / "data"
    assert cmd_synth(root / "synth.yaml", data) == 0
    t0 = time.perf_counter()
    assert cmd_estimate(data / "config.yaml", root / "est") == 0
    elapsed = time.perf_counter() - t0
    report = json.loads((root / "est" / "report.json").read_text())
    return {"root": root, "data": data, "est": root / "est", "report": report, "elapsed": elapsed}


def test_c1_worked_example(figure2):
    with criterion("C1 worked example") as notes:
        t0 = time.perf_counter()
        sc = figure2.scenario()
        idx = sc.index
        p = figure2.preset_shares(sc)
        mu = np.zeros((idx.n_vars, sc.grid.n_exit))
        mu[:2, :2] = [[2 / 3, 1 / 3], [4 / 7, 3 / 7]]
        counts = np.rint(figure2.od_flows(sc)[idx.var_group] * p)
        flows = path_flows(counts, mu)
        assert np.array_equal(np.rint(flows[:2, :2]), flows[:2, :2])
        assert flows[:2, :2].astype(int).tolist() == [[2, 1], [4, 3]]
        assert idx.group_sums(flows)[0].astype(int).tolist() == [6, 4]
        # the simulator reaches the same numbers from the timetable alone
        res = LoadingModel(sc, figure2.sim_config).run(figure2.od_flows(sc), p, seed=0, tapins=figure2.tapin_groups(sc))
        assert np.allclose(res.mu[:2, :2], mu[:2, :2], rtol=0, atol=1e-12)
        assert res.entry_exit[0].astype(int).tolist() == [6, 4]
        notes["entry_exit"] = res.entry_exit[0].astype(int).tolist()
        assert time.perf_counter() - t0 < 1.0


def test_c2_logit_round_trip():
    with criterion("C2 fractional logit round trip") as notes:
        t0 = time.perf_counter()
        rng = np.random.default_rng(2)
        worst = 0.0
        for _ in range(20):
            sizes = rng.integers(2, 5, size=15)
            ptr = np.concatenate([[0], np.cumsum(sizes)])
            design = rng.normal(size=(ptr[-1], 4)) * [5.0, 1.0, 0.5, 1.5]
            beta = rng.uniform(BETA_LOWER, BETA_UPPER)
            fit = fit_fractional_logit(shares_from_beta(beta, design, ptr), rng.uniform(1, 100, 15), design, ptr)
            assert fit.identifiable
            worst = max(worst, float(np.max(np.abs(fit.beta - beta))))
        notes["max_error"] = f"{worst:.1e}"
        assert worst <= 1e-4
        assert time.perf_counter() - t0 < 10.0


def test_c3_cross_od_equalities(figure3_scenario):
    with criterion("C3 cross-OD equalities") as notes:
        t0 = time.perf_counter()
        sc = figure3_scenario
        idx = sc.index
        cs = construct_alc(sc.design, idx, BETA_LOWER, BETA_UPPER, samples=50, seed=0)
        want = {(idx.var("1", m, "5", r), idx.var("2", m, "5", r)) for m in range(sc.grid.n) for r in range(2)}
        assert set(cs.equalities) == want
        fresh = sample_betas(BETA_LOWER, BETA_UPPER, 100, seed=12345)
        gap = max(abs(p[a] - p[b]) for p in (shares_from_beta(b, sc.design, idx.group_ptr) for b in fresh)
                  for a, b in cs.equalities)
        notes["equalities"] = len(cs.equalities)
        notes["max_gap"] = f"{gap:.1e}"
        assert gap <= 1e-12
        assert time.perf_counter() - t0 < 5.0


def test_c4_qp_against_enumeration():
    with criterion("C4 share QP vs enumeration") as notes:
        t0 = time.perf_counter()
        rng = np.random.default_rng(4)
        worst_obj = worst_kkt = 0.0
        for _ in range(25):
            prob = random_qp(rng, max_vars=8)
            sol = solve_qp(prob)
            _, val = share_qp_oracle(prob)
            worst_obj = max(worst_obj, abs(sol.objective - val) / max(1.0, abs(val)))
            worst_kkt = max(worst_kkt, max(v for k, v in sol.kkt.items() if k != "scale"))
            assert primal_violation(prob, sol.shares) <= 1e-8
        notes["objective_gap"] = f"{worst_obj:.1e}"
        notes["kkt"] = f"{worst_kkt:.1e}"
        assert worst_obj <= 1e-6 and worst_kkt <= 1e-6
        assert time.perf_counter() - t0 < 30.0


def test_c5_synthetic_recovery(grid_dataset):
    with criterion("C5 synthetic recovery") as notes:
        rep = grid_dataset["report"]
        beta = np.array(list(rep["beta"].values()))
        notes["beta"] = np.round(beta, 4).tolist()
        notes["rmse"] = round(rep["rmse"], 3)
        n_passengers = rep["ingestion"]["accepted"]
        # the generated config simulates the reference shares by default
        root, data = grid_dataset["root"], grid_dataset["data"]
        assert cmd_simulate(data / "config.yaml", root / "sim_truth") == 0
        congested = json.loads((root / "sim_truth" / "report.json").read_text())["congested_platforms"]
        notes["passengers"] = n_passengers
        notes["congested_platforms"] = len(congested)
        notes["estimate_s"] = round(grid_dataset["elapsed"], 1)
        assert n_passengers >= 5000
        assert len(congested) >= 1
        assert np.all(np.abs(beta[:3] - SYNTHETIC_BETA[:3]) <= 0.1)
        assert abs(beta[3] - SYNTHETIC_BETA[3]) <= 0.5
        assert rep["rmse"] <= 5.0
        iterates = np.array([list(r["beta"].values()) for r in rep["iterations"]])
        k_burn = rep["config"]["estimation"]["k_burn"]
        band = float(np.max(np.abs(iterates[k_burn - 1:] - iterates[-1])))
        notes["band"] = round(band, 4)
        assert band <= CONVERGENCE_BAND
        assert rep["objective"] <= rep["initial_objective"]
        assert grid_dataset["elapsed"] < 600


def test_c6_initial_beta_robustness(grid_dataset):
    with criterion("C6 initial beta robustness") as notes:
        cfg, base = load_config(grid_dataset["data"] / "config.yaml")
        seed = int(cfg["seed"])
        inputs = Inputs(cfg, base, seed)
        base_rc = run_config(cfg, seed)
        inits = np.random.default_rng(6).uniform(BETA_LOWER, BETA_UPPER, size=(5, 4))
        runs = [run_estimation(inputs.scenario, inputs.od_flows, inputs.observed,
                               dataclasses.replace(base_rc, beta_init=tuple(b)), inputs.sim,
                               reference_shares=inputs.reference, tapins=inputs.tapins)
                for b in inits]
        objs = np.array([r.objective for r in runs])
        betas = np.array([r.beta for r in runs])
        spread = betas[:, :3].max(axis=0) - betas[:, :3].min(axis=0)
        notes["objectives"] = np.round(objs, 1).tolist()
        notes["spread"] = np.round(spread, 4).tolist()
        assert (objs.max() - objs.min()) <= 0.05 * objs.min()
        assert np.all(spread <= 0.1)


def test_c7_simulator_invariants():
    with criterion("C7 simulator invariants") as notes:
        t0 = time.perf_counter()
        rng = np.random.default_rng(7)
        for k in range(100):
            sc, q, shares, cfg = random_instance(rng)
            check_run(sc, q, shares, cfg, seed=k)
        notes["instances"] = 100
        assert time.perf_counter() - t0 < 60.0


def test_c8_indicator_ordering(grid_dataset):
    with criterion("C8 indicator ordering") as notes:
        data, root = grid_dataset["data"], grid_dataset["root"]
        objs = {}
        for name, source in (("estimated", str(grid_dataset["est"] / "shares.csv")),
                             ("uniform", "uniform"), ("reference", "reference_shares.csv")):
            cfg = yaml.safe_load((data / "config.yaml").read_text())
            cfg["simulate"] = {"shares": source}
            (data / f"sim_{name}.yaml").write_text(yaml.safe_dump(cfg, sort_keys=False))
            assert cmd_simulate(data / f"sim_{name}.yaml", root / f"sim_{name}") == 0
            report = json.loads((root / f"sim_{name}" / "report.json").read_text())
            objs[name] = report["objective"]
            assert "average_left_behind" in report
        notes.update({k: round(v, 1) for k, v in objs.items()})
        assert objs["estimated"] < objs["uniform"]
