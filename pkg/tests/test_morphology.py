import math

import numpy as np
import pytest

from codesign.morphology import (
    DEFAULT_BOUNDS,
    DEFAULT_PHYSICS,
    FIELD_NAMES,
    MONOTONE_DIRECTIONS,
    MorphologyBounds,
    MorphologyVector,
    TalentVector,
    constraints_array,
    evaluate_talents,
    geometric_constraints,
    load_morphology_config,
    random_morphology,
    talents_array,
)

TALENT_INDEX = {"flight_range": 0, "nominal_speed": 1, "package_capacity": 2}


def test_lower_bound_design_has_positive_talents():
    talents = evaluate_talents(DEFAULT_BOUNDS.lower)
    assert talents.flight_range > 0
    assert talents.nominal_speed > 0
    assert talents.package_capacity > 0
    # frozen regression values for the documented surrogate at the lower corner
    np.testing.assert_allclose(
        talents.to_array(),
        [5.4542089240099951, 8.8004579751251661, 0.32726112271179386],
        rtol=1e-12,
    )


def test_battery_capacity_trades_range_against_speed():
    base = MorphologyVector(0.4, 0.05, 300.0, 100.0, 0.7, 0.45, 2.0)
    bigger = MorphologyVector(0.4, 0.05, 300.0, 250.0, 0.7, 0.45, 2.0)
    t0, t1 = evaluate_talents(base), evaluate_talents(bigger)
    assert t1.flight_range > t0.flight_range
    assert t1.nominal_speed < t0.nominal_speed


def test_min_thrust_design_has_zero_capacity():
    heavy = MorphologyVector(0.5, 0.08, 100.0, 300.0, 0.5, 0.1, 0.4)
    talents = evaluate_talents(heavy)
    assert talents.package_capacity == 0.0
    # and a thrust-capable design with a 0.4 kg budget carries one package
    light = MorphologyVector(0.4, 0.04, 300.0, 150.0, 0.8, 0.5, 0.4)
    assert evaluate_talents(light).package_capacity == pytest.approx(1.0)


def test_talents_deterministic_bit_for_bit():
    x = random_morphology(DEFAULT_BOUNDS, seed=123)
    a = evaluate_talents(x).to_array()
    b = evaluate_talents(x).to_array()
    np.testing.assert_array_equal(a, b)


def test_non_finite_input_rejected():
    x = MorphologyVector(0.3, 0.05, math.nan, 100.0, 0.7, 0.3, 1.0)
    with pytest.raises(ValueError):
        evaluate_talents(x)
    with pytest.raises(ValueError):
        geometric_constraints(x)


def test_propeller_overlap_constraint_boundary():
    arm = 0.3
    at_limit = MorphologyVector(arm, 0.05, 200.0, 100.0, 0.7, math.sqrt(2.0) * arm, 1.0)
    assert geometric_constraints(at_limit)[0] == 0.0
    violated = MorphologyVector(arm, 0.05, 200.0, 100.0, 0.7, 2.0 * (math.sqrt(2.0) * arm), 1.0)
    assert geometric_constraints(violated)[0] == pytest.approx(math.sqrt(2.0) * arm)


def test_overweight_design_violates_thrust_constraint():
    heavy = MorphologyVector(0.5, 0.08, 100.0, 300.0, 0.5, 0.1, 0.4)
    constraints = geometric_constraints(heavy)
    assert constraints[1] > 0.0


def test_random_morphology_determinism_and_box():
    a = random_morphology(DEFAULT_BOUNDS, seed=7)
    b = random_morphology(DEFAULT_BOUNDS, seed=7)
    assert a == b
    c = random_morphology(DEFAULT_BOUNDS, seed=8)
    assert any(
        getattr(a, f) != getattr(c, f) for f in FIELD_NAMES
    ), "different seeds should differ"
    lo, up = DEFAULT_BOUNDS.arrays()
    rng = np.random.default_rng(11)
    samples = np.stack([random_morphology(DEFAULT_BOUNDS, rng).to_array() for _ in range(10_000)])
    assert np.all(samples >= lo) and np.all(samples <= up)


def test_monotone_goodness_audit():
    # each talent nondecreasing along its designated direction at 100 points
    lo, up = DEFAULT_BOUNDS.arrays()
    rng = np.random.default_rng(42)
    base = lo + rng.random((100, 7)) * (up - lo)
    names = list(FIELD_NAMES)
    for talent, variable in MONOTONE_DIRECTIONS.items():
        j = names.index(variable)
        stepped = base.copy()
        stepped[:, j] = np.minimum(stepped[:, j] + 0.05 * (up[j] - lo[j]), up[j])
        delta = talents_array(stepped)[:, TALENT_INDEX[talent]] - talents_array(base)[:, TALENT_INDEX[talent]]
        assert np.all(delta >= -1e-12), f"{talent} not monotone in {variable}"


def test_conflict_audit_over_random_pairs():
    lo, up = DEFAULT_BOUNDS.arrays()
    rng = np.random.default_rng(43)
    A = lo + rng.random((1000, 7)) * (up - lo)
    B = lo + rng.random((1000, 7)) * (up - lo)
    ya, yb = talents_array(A), talents_array(B)
    a_range_b_speed = (ya[:, 0] > yb[:, 0]) & (ya[:, 1] < yb[:, 1])
    assert a_range_b_speed.sum() > 10


def test_bounds_validation():
    with pytest.raises(ValueError):
        MorphologyBounds(
            lower=DEFAULT_BOUNDS.upper, upper=DEFAULT_BOUNDS.lower
        ).validate()
    with pytest.raises(ValueError):
        MorphologyBounds(DEFAULT_BOUNDS.lower, DEFAULT_BOUNDS.upper, srta_scale=5.0).validate()


def test_srta_scaled_bounds():
    scaled = DEFAULT_BOUNDS.srta_scaled().validate()
    lo, up = DEFAULT_BOUNDS.arrays()
    slo, sup = scaled.arrays()
    np.testing.assert_array_equal(slo, lo)
    frac = FIELD_NAMES.index("battery_mass_fraction")
    for i in range(len(FIELD_NAMES)):
        if i == frac:
            assert sup[i] <= 0.95
        else:
            assert sup[i] == pytest.approx(up[i] * 3.5)


def test_config_roundtrip(tmp_path):
    path = tmp_path / "morph.cfg"
    path.write_text(
        "[bounds.upper]\n"
        "battery_capacity = 500\n"
        "\n"
        "[bounds]\n"
        "srta_scale = 3.0\n"
        "\n"
        "[physics]\n"
        "speed_coefficient = 14.0\n"
    )
    bounds, phys = load_morphology_config(path)
    assert bounds.upper.battery_capacity == 500.0
    assert bounds.srta_scale == 3.0
    assert phys.speed_coefficient == 14.0
    assert bounds.lower == DEFAULT_BOUNDS.lower
    with pytest.raises(ValueError):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[physics]\nnot_a_coefficient = 1\n")
        load_morphology_config(bad)


def test_constraints_vectorized_matches_scalar():
    rng = np.random.default_rng(5)
    lo, up = DEFAULT_BOUNDS.arrays()
    X = lo + rng.random((50, 7)) * (up - lo)
    batch = constraints_array(X)
    for i in range(50):
        single = geometric_constraints(MorphologyVector.from_array(X[i]))
        np.testing.assert_array_equal(batch[i], single)
