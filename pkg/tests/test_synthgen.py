import numpy as np
import pytest

from metropath.afc import observed_flows_from_afc
from metropath.domain import ConfigurationError
from metropath.synthgen import PRESETS, SYNTHETIC_BETA, build_toy_network, generate_synthetic_afc


def synth(inst, seed=1, **kw):
    sc = inst.scenario()
    q = inst.od_flows(sc)
    data = generate_synthetic_afc(sc, q, SYNTHETIC_BETA, inst.sim_config, seed=seed,
                                  tapins=inst.tapin_groups(sc), shares=inst.preset_shares(sc), **kw)
    return sc, q, data


def test_figure2_ten_records_reaggregate(figure2):
    sc, q, data = synth(figure2)
    assert len(data.records) == 10
    q_obs, flows = observed_flows_from_afc(data.records, sc.grid, sc.index)
    assert np.array_equal(q_obs, q)
    assert flows[0].tolist() == [6.0, 4.0]


@pytest.mark.parametrize("name", ["figure3_five_station", "grid_small"])
def test_afc_round_trip_matches_simulated_flows(name):
    inst = build_toy_network(name) if name != "grid_small" else build_toy_network(name, demand_scale=0.2)
    sc, q, data = synth(inst, seed=4)
    q_obs, flows = observed_flows_from_afc(data.records, sc.grid, sc.index)
    assert np.array_equal(flows, data.loading.entry_exit)
    assert np.array_equal(q_obs, q)


def test_reference_mu_rows_sum_to_one(figure3):
    sc, q, data = synth(figure3)
    served = data.mu.sum(axis=1) > 0
    assert np.allclose(data.mu[served].sum(axis=1), 1.0)
    assert np.all(data.mu >= 0)


def test_single_path_od_gets_share_one():
    from metropath.domain import build_time_grid
    from metropath.loading import SimConfig
    from metropath.scenario import Scenario

    from conftest import shuttle

    net, tt, paths = shuttle(n_trains=4)
    sc = Scenario(net, tt, paths, build_time_grid(("8:00", "8:10"), 300, tail=900))
    q = np.array([5.0, 3.0])
    data = generate_synthetic_afc(sc, q, SYNTHETIC_BETA, SimConfig(capacity_per_car=50), seed=0)
    assert data.shares.tolist() == [1.0, 1.0]
    assert len(data.records) == 8


def test_same_seed_same_records():
    inst = build_toy_network("grid_small", demand_scale=0.1)
    a = synth(inst, seed=9)[2].records
    b = synth(inst, seed=9)[2].records
    assert a == b


def test_preset_validation():
    with pytest.raises(ConfigurationError):
        build_toy_network("ring_large")
    with pytest.raises(ConfigurationError):
        build_toy_network("figure2_two_path", tau=60)
    with pytest.raises(ConfigurationError):
        build_toy_network("grid_small", lines=3)
    assert set(PRESETS) == {"figure2_two_path", "figure3_five_station", "grid_small"}


def test_grid_small_shape():
    inst = build_toy_network("grid_small")
    sc = inst.scenario()
    assert sum(inst.demand.values()) >= 5000
    assert sc.index.n_vars > 0 and sc.grid.tau == 300
    assert np.any(sc.index.group_sizes() > 1)


def test_infinite_capacity_delays_ignore_demand_level(figure3):
    import dataclasses

    from sim_checks import schedule_determined

    sc = figure3.scenario()
    q = figure3.od_flows(sc)
    roomy = dataclasses.replace(figure3.sim_config, capacity_per_car=10**6)
    runs = [generate_synthetic_afc(sc, scale * q, SYNTHETIC_BETA, roomy, seed=s).loading
            for scale, s in ((1, 1), (3, 2), (10, 3))]
    assert all(r.n_stranded == 0 for r in runs)
    assert schedule_determined(runs)
