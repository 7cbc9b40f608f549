"""Shared, session-scoped physics so the expensive sweeps run once."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mbeon.hpo import HPOConfig, PropagationCache, optimize_network_powers, optimize_span_power
from mbeon.network import load_fixture, precompute_ccr
from mbeon.physics import build_channel_grid, c_band_plan, default_fiber, lcs_band_plan, span_of
from mbeon.qot import TransceiverSpec

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

SPAN_LENGTHS_KM = (50, 60, 70, 80, 90, 100)


@pytest.fixture(scope="session")
def lcs_grid():
    return build_channel_grid(lcs_band_plan())


@pytest.fixture(scope="session")
def c_grid():
    return build_channel_grid(c_band_plan())


@pytest.fixture(scope="session")
def fiber():
    return default_fiber()


@pytest.fixture(scope="session")
def trx():
    return TransceiverSpec()


@pytest.fixture(scope="session")
def span_sweep(lcs_grid, fiber, trx):
    """FLP and FRP optimum per span length; ``{L: (flp, frp)}`` plus runtime."""
    import time

    t0 = time.perf_counter()
    out = {}
    for km in SPAN_LENGTHS_KM:
        span = span_of(km, fiber)
        flp = optimize_span_power(span, lcs_grid, trx, HPOConfig(mode="FLP"))
        frp = optimize_span_power(span, lcs_grid, trx, HPOConfig(mode="FRP"),
                                  flp_optimum=flp.optimal_flat_power)
        out[km] = (flp, frp)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="session")
def fixture_topology(fiber):
    return load_fixture(seed=1, fiber=fiber)


@pytest.fixture(scope="session")
def network_hpo(fixture_topology, lcs_grid, trx):
    cache = PropagationCache()
    flp = optimize_network_powers(fixture_topology, lcs_grid, trx, HPOConfig(mode="FLP"),
                                  prop_cache=cache)
    frp = optimize_network_powers(fixture_topology, lcs_grid, trx, HPOConfig(mode="FRP"),
                                  prop_cache=cache)
    return {"FLP": flp, "FRP": frp}


@pytest.fixture(scope="session")
def fixture_ccr(fixture_topology, lcs_grid, trx, network_hpo):
    return {mode: precompute_ccr(fixture_topology, lcs_grid, trx, res)
            for mode, res in network_hpo.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
