"""Flat launch versus flat received power on a single span.

Runs the first-descent scan in both modes for a few span lengths and
prints the capacity and GSNR flatness of each optimum.

    python demos/span_power.py [length_km ...]
"""

import sys

from mbeon import HPOConfig, TransceiverSpec, build_channel_grid, lcs_band_plan, optimize_span_power, span_of

lengths = [float(x) for x in sys.argv[1:]] or [50.0, 70.0, 100.0]
grid = build_channel_grid(lcs_band_plan())
trx = TransceiverSpec()

print(f"{'km':>5} {'mode':>4} {'P_opt dBm':>9} {'TC Tb/s':>8} {'GSNR std':>8} {'max-min':>7} {'S mean':>6}")
for km in lengths:
    span = span_of(km)
    flp = optimize_span_power(span, grid, trx, HPOConfig(mode="FLP"))
    frp = optimize_span_power(span, grid, trx, HPOConfig(mode="FRP"), flp_optimum=flp.optimal_flat_power)
    for r in (flp, frp):
        g = r.stats["gsnr"]
        print(f"{km:5g} {r.mode:>4} {r.optimal_flat_power:9.2f} {r.total_capacity / 1e12:8.1f} "
              f"{g['all']['std']:8.2f} {g['all']['max_min']:7.2f} {g['S']['mean']:6.2f}")
# FRP trades launch flatness for received flatness: the S band launches
# higher to pay for the power it hands to the L band.
