"""Quadcopter design space, geometric constraints, and the morphology->talent map.

The talent map is a momentum-theory surrogate for a quad-H delivery UAV:

* component masses are linear in the design variables (frame areal density,
  motor mass per watt, battery pack mass from capacity / energy density /
  pack mass fraction),
* maximum thrust follows from actuator-disk theory,
  ``T = (eta_prop * P_total)^(2/3) * (2 * rho * A_disk)^(1/3)``,
* nominal speed scales with the square root of the spare thrust-to-weight
  margin, ``v = k * sqrt(max(T/W - 1, 0))``,
* hover power is ``(m*g)^1.5 / sqrt(2 * rho * A_disk) / eta_power`` and cruise
  power a fixed fraction of it,
* flight range is usable battery energy divided by cruise power times speed,
* package capacity is the spare lift mass (thrust margin beyond dry weight,
  capped by the payload budget) divided by the 0.4 kg package mass.  It is
  kept continuous here; the simulator floors it to an integer.

Every talent improves monotonically along a designated direction
(flight range in ``battery_mass_fraction``, nominal speed in
``propeller_diameter``, package capacity in ``payload_mass_budget``) and the
talents conflict elsewhere in the box (battery capacity trades range against
speed, payload budget trades capacity against speed and range).

All functions are pure and safe for unrestricted parallel invocation.
"""

import math
from dataclasses import dataclass, fields, replace

import numpy as np

FIELD_NAMES = (
    "arm_length",
    "arm_width",
    "motor_power",
    "battery_capacity",
    "battery_mass_fraction",
    "propeller_diameter",
    "payload_mass_budget",
)

N_DESIGN_VARS = len(FIELD_NAMES)

#: Designated direction of monotone improvement for each talent.
MONOTONE_DIRECTIONS = {
    "flight_range": "battery_mass_fraction",
    "nominal_speed": "propeller_diameter",
    "package_capacity": "payload_mass_budget",
}


@dataclass(frozen=True)
class MorphologyVector:
    """Design variables of the quad-H delivery UAV (SI units unless noted)."""

    arm_length: float            # m
    arm_width: float             # m
    motor_power: float           # W per motor
    battery_capacity: float      # Wh
    battery_mass_fraction: float # cell mass / pack mass, in (0, 1]
    propeller_diameter: float    # m
    payload_mass_budget: float   # kg

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in FIELD_NAMES], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "MorphologyVector":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (N_DESIGN_VARS,):
            raise ValueError(f"expected {N_DESIGN_VARS} design variables, got shape {arr.shape}")
        return cls(*(float(v) for v in arr))


@dataclass(frozen=True)
class TalentVector:
    """Capability metrics fully mediating morphology's effect on behavior."""

    flight_range: float      # km
    nominal_speed: float     # m/s
    package_capacity: float  # count of 0.4 kg packages (continuous pre-rounding)

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.flight_range, self.nominal_speed, self.package_capacity],
            dtype=np.float64,
        )

    @classmethod
    def from_array(cls, arr) -> "TalentVector":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class MorphologyBounds:
    """Box bounds on the design variables plus the single-robot scale factor."""

    lower: MorphologyVector
    upper: MorphologyVector
    srta_scale: float = 3.5

    def validate(self):
        lo, up = self.lower.to_array(), self.upper.to_array()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(up))):
            raise ValueError("bounds must be finite")
        if np.any(lo <= 0):
            raise ValueError("lower bounds must be strictly positive")
        if np.any(lo >= up):
            bad = [FIELD_NAMES[i] for i in np.nonzero(lo >= up)[0]]
            raise ValueError(f"lower must be < upper componentwise; violated for {bad}")
        if not 3.0 <= self.srta_scale <= 4.0:
            raise ValueError("srta_scale must lie in [3, 4]")
        return self

    def arrays(self):
        return self.lower.to_array(), self.upper.to_array()

    def srta_scaled(self) -> "MorphologyBounds":
        """Bounds for the single-robot study: upper bounds scaled by srta_scale.

        ``battery_mass_fraction`` is a physical fraction and is capped at 0.95
        instead of scaled.
        """
        up = self.upper.to_array() * self.srta_scale
        frac_idx = FIELD_NAMES.index("battery_mass_fraction")
        up[frac_idx] = min(self.upper.to_array()[frac_idx], 0.95)
        return MorphologyBounds(self.lower, MorphologyVector.from_array(up), self.srta_scale)


@dataclass(frozen=True)
class UavPhysics:
    """Coefficients of the surrogate physics model."""

    air_density: float = 1.225              # kg/m^3
    gravity: float = 9.81                   # m/s^2
    frame_areal_density: float = 6.0        # kg per m^2 of arm planform (4 arms)
    base_frame_mass: float = 0.35           # kg, hub/fuselage
    motor_mass_per_watt: float = 0.0008     # kg/W, per motor
    electronics_mass: float = 0.25          # kg
    battery_energy_density: float = 200.0   # Wh/kg at cell level
    battery_usable_fraction: float = 0.9    # usable depth of discharge
    prop_efficiency: float = 0.80           # electrical -> ideal disk power
    powertrain_efficiency: float = 0.70     # ideal hover power -> electrical draw
    cruise_power_factor: float = 0.85       # cruise draw relative to hover
    speed_coefficient: float = 16.0         # m/s per unit sqrt thrust margin
    thrust_margin: float = 1.25             # required T/W when sizing payload
    package_mass: float = 0.4               # kg per package


DEFAULT_PHYSICS = UavPhysics()

DEFAULT_BOUNDS = MorphologyBounds(
    lower=MorphologyVector(0.15, 0.02, 100.0, 50.0, 0.5, 0.1, 0.4),
    upper=MorphologyVector(0.5, 0.08, 400.0, 300.0, 0.9, 0.6, 4.0),
    srta_scale=3.5,
)


def _split(X):
    return (X[:, 0], X[:, 1], X[:, 2], X[:, 3], X[:, 4], X[:, 5], X[:, 6])


def _dry_mass(X, phys):
    arm_l, arm_w, power, cap, frac, _, _ = _split(X)
    frame = phys.frame_areal_density * 4.0 * arm_l * arm_w + phys.base_frame_mass
    motors = 4.0 * phys.motor_mass_per_watt * power
    battery = cap / (phys.battery_energy_density * frac)
    return frame + motors + battery + phys.electronics_mass


def _max_thrust(X, phys):
    power, prop = X[:, 2], X[:, 5]
    disk_area = 4.0 * math.pi * (prop / 2.0) ** 2
    total_power = 4.0 * power * phys.prop_efficiency
    return total_power ** (2.0 / 3.0) * (2.0 * phys.air_density * disk_area) ** (1.0 / 3.0)


def talents_array(X, phys=DEFAULT_PHYSICS) -> np.ndarray:
    """Vectorized talent map: (n, 7) designs -> (n, 3) talents."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != N_DESIGN_VARS:
        raise ValueError(f"expected shape (n, {N_DESIGN_VARS}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("design variables must be finite")

    g = phys.gravity
    m_dry = _dry_mass(X, phys)
    thrust = _max_thrust(X, phys)
    prop = X[:, 5]
    disk_area = 4.0 * math.pi * (prop / 2.0) ** 2

    spare_lift = thrust / (g * phys.thrust_margin) - m_dry
    capacity_mass = np.clip(spare_lift, 0.0, X[:, 6])
    capacity = capacity_mass / phys.package_mass

    m_typical = m_dry + 0.5 * capacity_mass
    margin = thrust / (m_typical * g) - 1.0
    speed = phys.speed_coefficient * np.sqrt(np.maximum(margin, 0.0))

    hover_power = (m_typical * g) ** 1.5 / np.sqrt(2.0 * phys.air_density * disk_area)
    cruise_power = phys.cruise_power_factor * hover_power / phys.powertrain_efficiency
    usable_energy = X[:, 3] * 3600.0 * phys.battery_usable_fraction  # J
    flight_range = usable_energy / cruise_power * speed / 1000.0      # km

    return np.stack([flight_range, speed, capacity], axis=1)


def constraints_array(X, phys=DEFAULT_PHYSICS) -> np.ndarray:
    """Vectorized constraint values g(X) (each <= 0 means satisfied)."""
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError("design variables must be finite")
    overlap = X[:, 5] - math.sqrt(2.0) * X[:, 0]
    m_dry = _dry_mass(X, phys)
    thrust = _max_thrust(X, phys)
    spare_lift = thrust / (phys.gravity * phys.thrust_margin) - m_dry
    takeoff_mass = m_dry + np.clip(spare_lift, 0.0, X[:, 6])
    lift_deficit = takeoff_mass * phys.gravity - thrust
    return np.stack([overlap, lift_deficit], axis=1)


def evaluate_talents(x: MorphologyVector, phys=DEFAULT_PHYSICS) -> TalentVector:
    """Map one morphology to its talent vector (deterministic, pure).

    Valid for infeasible designs too; feasibility is the caller's concern.
    """
    talents = talents_array(x.to_array()[None, :], phys)[0]
    return TalentVector.from_array(talents)


def geometric_constraints(x: MorphologyVector, phys=DEFAULT_PHYSICS) -> np.ndarray:
    """Constraint values for one design: [propeller overlap, lift deficit]."""
    return constraints_array(x.to_array()[None, :], phys)[0]


def random_morphology(bounds: MorphologyBounds, seed) -> MorphologyVector:
    """Uniform sample within the box; deterministic for a fixed seed."""
    lo, up = bounds.arrays()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return MorphologyVector.from_array(lo + rng.random(N_DESIGN_VARS) * (up - lo))


def load_morphology_config(path):
    """Load bounds and physics coefficients from a key/value config file.

    Schema (all keys optional; defaults fill the gaps)::

        [bounds.lower]   one ``field = value`` line per design variable
        [bounds.upper]   one ``field = value`` line per design variable
        [bounds]         srta_scale = <float in [3, 4]>
        [physics]        one ``coefficient = value`` line per UavPhysics field

    Returns (MorphologyBounds, UavPhysics).
    """
    from codesign.fileio import read_kv

    sections = read_kv(path)
    lower, upper = DEFAULT_BOUNDS.lower, DEFAULT_BOUNDS.upper
    for name, current in (("bounds.lower", lower), ("bounds.upper", upper)):
        if name in sections:
            values = {k: float(v) for k, v in sections[name].items()}
            unknown = set(values) - set(FIELD_NAMES)
            if unknown:
                raise ValueError(f"unknown design variables in [{name}]: {sorted(unknown)}")
            current = replace(current, **values)
        if name.endswith("lower"):
            lower = current
        else:
            upper = current
    srta_scale = float(sections.get("bounds", {}).get("srta_scale", DEFAULT_BOUNDS.srta_scale))

    phys = DEFAULT_PHYSICS
    if "physics" in sections:
        coeff_names = {f.name for f in fields(UavPhysics)}
        values = {k: float(v) for k, v in sections["physics"].items()}
        unknown = set(values) - coeff_names
        if unknown:
            raise ValueError(f"unknown physics coefficients: {sorted(unknown)}")
        phys = replace(phys, **values)

    return MorphologyBounds(lower, upper, srta_scale).validate(), phys
