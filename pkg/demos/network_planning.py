"""Plan the bundled six-node network end to end.

Optimizes per-link launch powers, builds the channel-connection tables,
then loads the network with seeded demand sequences under each
modulation policy and prints the throughput at 1% blocking.

    python demos/network_planning.py [iterations]
"""

import sys

from mbeon import (HPOConfig, TransceiverSpec, build_channel_grid, lcs_band_plan, load_fixture,
                   optimize_network_powers, precompute_ccr, run_iterations)
from mbeon.hpo import PropagationCache

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 5
grid = build_channel_grid(lcs_band_plan())
trx = TransceiverSpec()
topo = load_fixture(seed=1)
print(f"{len(topo.nodes)} nodes, {len(topo.links)} links, core pairs {len(topo.core_pairs())}")

cache = PropagationCache()
seeds = range(1, iterations + 1)
for mode in ("FLP", "FRP"):
    powers = optimize_network_powers(topo, grid, trx, HPOConfig(mode=mode), prop_cache=cache)
    p = [r.optimal_flat_power for r in powers.values()]
    ccr = precompute_ccr(topo, grid, trx, powers)
    print(f"{mode}: per-link optimum {min(p):.2f}..{max(p):.2f} dBm")
    for policy in ("CBG", "WPB", "WAB"):
        curve = run_iterations(topo, ccr, seeds, 1000, "MinMaxF", policy)
        thr, censored = curve.throughput_at(0.01)
        note = " (never reached 1% BBP)" if censored else ""
        print(f"  {policy}: {thr / 1e3:7.1f} Tb/s at 1% BBP{note}")
