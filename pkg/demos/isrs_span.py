"""Power evolution through one fully loaded L+C+S span.

Launches every channel at 0 dBm into 70 km of standard fiber, prints how
ISRS tilts the received spectrum, then fits the three-parameter loss
model and reports how well it tracks the solver.

    python demos/isrs_span.py
"""

import numpy as np

from mbeon import build_channel_grid, default_fiber, fit_loss_model, lcs_band_plan, solve_pep, span_of
from mbeon.physics import dbm_to_w, w_to_dbm

grid = build_channel_grid(lcs_band_plan())
fiber = default_fiber()
span = span_of(70, fiber)

pep = solve_pep(np.full(grid.n_channels, dbm_to_w(0.0)), span, grid)
rx = w_to_dbm(pep.received)
flat = -fiber.alpha_db_km(grid.frequencies) * 70
print(f"{grid.n_channels} channels, {pep.z.size} samples along {span.length / 1e3:g} km")
for band in grid.band_names():
    m = grid.band_mask(band)
    print(f"  {band}: received {rx[m].mean():6.2f} dBm, ISRS shift {np.mean(rx[m] - flat[m]):+5.2f} dB")

# Going back from the received spectrum recovers the launch.
back = solve_pep(pep.received, span, grid, "backward")
print(f"round trip error {np.max(np.abs(w_to_dbm(back.launch))):.1e} dB")

fit = fit_loss_model(pep, grid)
print(f"fit: worst RMS {fit.fit_rms_error:.3f} dB, M = {fit.M}")
i = int(np.argmax(fit.rms_error_db))
print(f"  worst channel {i} ({grid.bands[i]}): alpha0 {fit.alpha0[i]:.3e}/m, "
      f"alpha1 {fit.alpha1[i]:+.3e}/m, sigma {fit.sigma[i]:.3e}/m")
