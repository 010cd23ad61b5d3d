"""Fit the talent-boundary model and decode unit samples through it.

The boundary model turns the discrete Pareto archive into a continuous,
always-feasible parameterization: a range interval, conditional speed
quantile curves, and a quadratic capacity surface.  Any point of the unit
square decodes to a talent vector inside the band.
"""

import numpy as np

from codesign.boundary import decode_talents, fit_surface, unit_from_talents
from codesign.morphology import DEFAULT_BOUNDS
from codesign.pareto import GaConfig, multi_run_pareto

archive = multi_run_pareto(GaConfig(48, 24, 3, seed=7), DEFAULT_BOUNDS)
model = fit_surface(archive)

print(f"fitted from {len(archive)} Pareto points")
print("fit quality:", {k: round(v, 4) for k, v in sorted(model.stats.items())})
print(f"range interval: [{model.range_min:.2f}, {model.range_max:.2f}] km\n")

print("conditional speed band along the range axis:")
for r in np.linspace(model.range_min, model.range_max, 6):
    lo, hi = model.speed_bounds(r)
    print(f"  range {r:7.2f} km -> speed in [{lo[0]:5.2f}, {hi[0]:5.2f}] m/s")

print("\ndecoding the unit square (u1 scales range, u2 scales speed):")
for u in ([0.0, 0.0], [0.0, 1.0], [0.5, 0.5], [1.0, 0.0], [1.0, 1.0]):
    t = decode_talents(u, model)
    print(
        f"  u={u} -> range {t.flight_range:7.2f} km, speed {t.nominal_speed:5.2f} m/s, "
        f"capacity {t.package_capacity:5.2f}"
    )

print("\nthe decoder and its inverse agree:")
u = np.array([0.3, 0.8])
t = decode_talents(u, model)
print(f"  u {u} -> talents -> u {np.round(unit_from_talents(t, model), 6)}")
