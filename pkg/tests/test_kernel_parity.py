import os
import subprocess
import sys

import numpy as np
import pytest

from metropath.loading import BACKEND, LoadingModel, available_backends
from metropath.loading._backend import get_kernel

from conftest import random_instance

needs_compiled = pytest.mark.skipif("cython" not in available_backends(), reason="compiled kernel not built")


@needs_compiled
@pytest.mark.parametrize("seed", range(15))
def test_kernels_agree_on_random_instances(seed):
    sc, q, shares, cfg = random_instance(np.random.default_rng(500 + seed))
    model = LoadingModel(sc, cfg)
    a = model.run(q, shares, seed=seed, backend="python")
    b = model.run(q, shares, seed=seed, backend="cython")
    for name in ("leg_arrive", "leg_board", "leg_alight", "pass_exit", "dep_boarded", "dep_denied", "dep_load"):
        assert np.array_equal(np.asarray(a.departures[name]), np.asarray(b.departures[name])), name
    assert np.array_equal(a.mu, b.mu)


@needs_compiled
def test_kernels_agree_on_grid_small():
    from metropath.clogit import shares_from_beta
    from metropath.synthgen import SYNTHETIC_BETA, build_toy_network

    inst = build_toy_network("grid_small", demand_scale=0.3)
    sc = inst.scenario()
    q = inst.od_flows(sc)
    p = shares_from_beta(SYNTHETIC_BETA, sc.design, sc.index.group_ptr)
    model = LoadingModel(sc, inst.sim_config)
    a = model.run(q, p, seed=3, backend="python")
    b = model.run(q, p, seed=3, backend="cython")
    assert np.array_equal(a.trace.tap_out, b.trace.tap_out)
    assert np.array_equal(a.entry_exit, b.entry_exit)


def test_default_backend_is_available():
    assert BACKEND in available_backends()
    assert callable(get_kernel())
    with pytest.raises(ValueError):
        get_kernel("fortran")


def test_pure_python_fallback_selected_by_environment():
    env = dict(os.environ, METROPATH_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from metropath.loading import BACKEND; print(BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
