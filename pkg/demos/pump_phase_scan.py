# %% [markdown]
# # Steering the pair phase with the pump polarization
#
# Each pair consumes two pump photons, so a phase `phi_p` between the H and
# V pump components shows up twice in the two-photon state, on top of the
# loop's residual birefringence phase `phi_b`.  Scanning the pump and
# reconstructing the state recovers a line of slope 2.

# %%
import math

import numpy as np

from pmloop.cli import scan_phase
from pmloop.config import preset_config
from pmloop.source import extinction_ratio_db, pump_with_phase, solve_pump_plates

cfg = preset_config("linear")
grid = np.linspace(-0.3, 0.3, 7)
rows = scan_phase(cfg, grid)
for phi_p, phase, fid in rows:
    print(f"phi_p={phi_p:+.3f}  reconstructed={phase:+.4f}  expected={2 * phi_p + cfg.phi_b_rad:+.4f}  F={fid:.4f}")

slope, intercept = np.polyfit(grid, np.unwrap([r[1] for r in rows]), 1)
print(f"fit: slope={slope:.5f}, intercept={intercept:.5f} rad")

# %% [markdown]
# Cancelling `phi_b = 0.24` needs `phi_p = -0.12`.  The plate angles that
# produce that pump behind a vertical polarizer come from a small solve.

# %%
target = pump_with_phase(-cfg.phi_b_rad / 2)
qwp, hwp = solve_pump_plates(target, math.radians(cfg.pump_polarizer_deg))
print(f"QWP {math.degrees(qwp):.3f} deg, HWP {math.degrees(hwp):.3f} deg, "
      f"extinction ratio {extinction_ratio_db(target):.2f} dB")
