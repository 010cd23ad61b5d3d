import numpy as np
import pytest

from codesign.boundary import (
    DegenerateDataError,
    TalentBoundaryModel,
    decode_talents,
    eval_quantile,
    fit_quantile,
    fit_quantile_pair,
    fit_surface,
    pinball_loss,
    quantile_coverage,
    surface_features,
    unit_from_talents,
)
from codesign.morphology import DEFAULT_BOUNDS, TalentVector
from codesign.pareto import GaConfig, ParetoArchive, multi_run_pareto


@pytest.fixture(scope="module")
def desk_archive():
    cfg = GaConfig(population_size=48, generations=24, runs=3, seed=7)
    return multi_run_pareto(cfg, DEFAULT_BOUNDS)


@pytest.fixture(scope="module")
def desk_model(desk_archive):
    return fit_surface(desk_archive)


def test_quantile_constant_targets():
    xs = np.linspace(0.0, 1.0, 30)
    ys = np.full(30, 4.2)
    for q in (0.05, 0.5, 0.95):
        coeffs = fit_quantile(xs, ys, q)
        np.testing.assert_allclose(eval_quantile(coeffs, xs), 4.2, atol=1e-9)


def test_quantile_median_recovers_generating_slope():
    rng = np.random.default_rng(0)
    xs = rng.uniform(-2.0, 2.0, 400)
    true_slope = 1.7
    ys = 0.5 + true_slope * xs + rng.normal(0.0, 0.3, size=400)
    coeffs = fit_quantile(xs, ys, 0.5)
    assert coeffs[1] == pytest.approx(true_slope, rel=0.10)


def test_quantile_pair_ordering_and_coverage():
    rng = np.random.default_rng(1)
    xs = rng.uniform(0.0, 10.0, 300)
    ys = 3.0 + 0.5 * xs - 0.02 * xs**2 + rng.normal(0.0, 1.0, size=300)
    low, high = fit_quantile_pair(xs, ys, 0.05, 0.95)
    assert np.all(eval_quantile(low, xs) <= eval_quantile(high, xs) + 1e-12)
    assert quantile_coverage(low, xs, ys) == pytest.approx(0.05, abs=0.07)
    assert quantile_coverage(high, xs, ys) == pytest.approx(0.95, abs=0.07)


def test_quantile_input_validation():
    with pytest.raises(DegenerateDataError):
        fit_quantile(np.ones(20), np.arange(20.0), 0.5)
    with pytest.raises(ValueError):
        fit_quantile(np.arange(5.0), np.arange(5.0), 0.5)
    with pytest.raises(ValueError):
        fit_quantile(np.arange(20.0), np.arange(20.0), 1.5)


def test_pinball_loss_basic():
    assert pinball_loss([1.0], [0.0], 0.9) == pytest.approx(0.9)
    assert pinball_loss([0.0], [1.0], 0.9) == pytest.approx(0.1)


def test_surface_recovers_known_quadratic():
    rng = np.random.default_rng(2)
    true = np.array([5.0, -0.2, 0.4, 0.01, -0.03, 0.002])
    r = rng.uniform(5.0, 50.0, 60)
    s = rng.uniform(10.0, 30.0, 60)
    c = surface_features(r, s) @ true
    archive = ParetoArchive(np.zeros((60, 1)), np.stack([r, s, c], axis=1))
    model = fit_surface(archive)
    np.testing.assert_allclose(model.surface_coeffs, true, atol=1e-6)


def test_surface_r_squared_gate_on_real_archive(desk_model):
    assert desk_model.stats["r_squared"] >= 0.8


def test_quantile_coverage_on_real_archive(desk_model):
    assert desk_model.stats["coverage_low"] == pytest.approx(0.05, abs=0.07)
    assert desk_model.stats["coverage_high"] == pytest.approx(0.95, abs=0.07)


def test_band_ordering_at_probes(desk_model):
    r = np.linspace(desk_model.range_min, desk_model.range_max, 100)
    lo, hi = desk_model.speed_bounds(r)
    assert np.all(lo <= hi)


def test_range_extrema_stable_to_interior_deletion(desk_archive):
    talents = desk_archive.talents
    interior = np.argsort(talents[:, 0])[len(talents) // 2]
    keep = np.ones(len(talents), dtype=bool)
    keep[interior] = False
    reduced = ParetoArchive(desk_archive.morphologies[keep], talents[keep])
    model_full = fit_surface(desk_archive)
    model_reduced = fit_surface(reduced)
    assert model_reduced.range_min == model_full.range_min
    assert model_reduced.range_max == model_full.range_max


def test_surface_rank_deficiency_names_feature():
    rng = np.random.default_rng(3)
    r = rng.uniform(5.0, 50.0, 30)
    s = np.full(30, 20.0)  # constant speed -> speed columns dependent
    c = rng.uniform(0.0, 5.0, 30)
    archive = ParetoArchive(np.zeros((30, 1)), np.stack([r, s, c], axis=1))
    with pytest.raises(DegenerateDataError, match="speed"):
        fit_surface(archive)


def test_small_archive_rejected():
    archive = ParetoArchive(np.zeros((5, 1)), np.random.default_rng(0).random((5, 3)))
    with pytest.raises(ValueError):
        fit_surface(archive)


def test_decode_corners_exact(desk_model):
    low = decode_talents(np.array([0.0, 0.0]), desk_model)
    hi = decode_talents(np.array([1.0, 1.0]), desk_model)
    assert low.flight_range == desk_model.range_min
    assert hi.flight_range == desk_model.range_max
    lo_band, _ = desk_model.speed_bounds(desk_model.range_min)
    _, hi_band = desk_model.speed_bounds(desk_model.range_max)
    assert low.nominal_speed == float(lo_band[0])
    assert hi.nominal_speed == float(hi_band[0])


def test_decode_band_membership_10k(desk_model):
    rng = np.random.default_rng(4)
    for _ in range(10_000):
        t = decode_talents(rng.random(2), desk_model)
        assert desk_model.range_min <= t.flight_range <= desk_model.range_max
        lo, hi = desk_model.speed_bounds(t.flight_range)
        assert lo[0] - 1e-12 <= t.nominal_speed <= hi[0] + 1e-12
        assert t.package_capacity >= 0.0


def test_decode_monotone_in_units(desk_model):
    u1 = np.linspace(0.0, 1.0, 25)
    ranges = [decode_talents([u, 0.3], desk_model).flight_range for u in u1]
    assert np.all(np.diff(ranges) > 0)
    speeds = [decode_talents([0.4, u], desk_model).nominal_speed for u in u1]
    assert np.all(np.diff(speeds) >= 0)


def test_decode_clamps_out_of_range_inputs(desk_model):
    t = decode_talents(np.array([-0.5, 1.5]), desk_model)
    assert t.flight_range == desk_model.range_min
    _, hi = desk_model.speed_bounds(desk_model.range_min)
    assert t.nominal_speed == float(hi[0])


def test_unit_from_talents_inverts_decode(desk_model):
    rng = np.random.default_rng(5)
    for _ in range(100):
        u = rng.random(2)
        t = decode_talents(u, desk_model)
        u_back = unit_from_talents(t, desk_model)
        np.testing.assert_allclose(u_back, u, atol=1e-9)


def test_model_save_load_roundtrip(tmp_path, desk_model):
    path = tmp_path / "boundary.txt"
    desk_model.save(path)
    loaded = TalentBoundaryModel.load(path)
    assert loaded.range_min == desk_model.range_min
    assert loaded.range_max == desk_model.range_max
    np.testing.assert_array_equal(loaded.speed_quantile_low, desk_model.speed_quantile_low)
    np.testing.assert_array_equal(loaded.speed_quantile_high, desk_model.speed_quantile_high)
    np.testing.assert_array_equal(loaded.surface_coeffs, desk_model.surface_coeffs)
    u = np.array([0.3, 0.8])
    assert decode_talents(u, loaded) == decode_talents(u, desk_model)


def test_decoded_capacity_consistent_with_surface(desk_model):
    t = decode_talents([0.2, 0.9], desk_model)
    expected = float(desk_model.surface_value(t.flight_range, t.nominal_speed)[0])
    assert t.package_capacity == expected
