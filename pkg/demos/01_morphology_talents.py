"""Walk through the morphology design space and its talent map.

Evaluates the physics surrogate at a few hand-picked designs, then sweeps the
battery capacity to show the built-in trade-off: more stored energy buys
flight range but the added pack mass costs cruise speed.
"""

import numpy as np

from codesign.morphology import (
    DEFAULT_BOUNDS,
    MorphologyVector,
    evaluate_talents,
    geometric_constraints,
    random_morphology,
)

print("design-space box:")
for name, lo, up in zip(
    DEFAULT_BOUNDS.lower.__dataclass_fields__,
    DEFAULT_BOUNDS.lower.to_array(),
    DEFAULT_BOUNDS.upper.to_array(),
):
    print(f"  {name:22s} [{lo:g}, {up:g}]")

print("\na small, a medium, and a large quad:")
designs = {
    "small": DEFAULT_BOUNDS.lower,
    "medium": MorphologyVector(0.35, 0.05, 250.0, 175.0, 0.7, 0.40, 2.0),
    "large": DEFAULT_BOUNDS.upper,
}
for name, x in designs.items():
    t = evaluate_talents(x)
    g = geometric_constraints(x)
    print(
        f"  {name:6s}: range {t.flight_range:6.1f} km, speed {t.nominal_speed:5.1f} m/s, "
        f"capacity {t.package_capacity:5.2f} pkg, constraints {np.round(g, 3)}"
    )

print("\nbattery sweep at the medium design (range up, speed down):")
base = designs["medium"]
for wh in (75.0, 125.0, 175.0, 225.0, 275.0):
    x = MorphologyVector(
        base.arm_length,
        base.arm_width,
        base.motor_power,
        wh,
        base.battery_mass_fraction,
        base.propeller_diameter,
        base.payload_mass_budget,
    )
    t = evaluate_talents(x)
    print(f"  {wh:5.0f} Wh -> range {t.flight_range:6.1f} km, speed {t.nominal_speed:5.2f} m/s")

print("\nfive random designs from the box:")
for seed in range(5):
    x = random_morphology(DEFAULT_BOUNDS, seed)
    t = evaluate_talents(x)
    feasible = bool(np.all(geometric_constraints(x) <= 0))
    print(
        f"  seed {seed}: range {t.flight_range:6.1f} km, speed {t.nominal_speed:5.1f} m/s, "
        f"capacity {t.package_capacity:5.2f}, feasible={feasible}"
    )
