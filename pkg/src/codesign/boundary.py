"""Parametric model of the talent Pareto boundary and the talent decoder.

The boundary model consists of

* the flight-range interval observed over the Pareto archive,
* 5th/95th conditional quantile curves of speed given range (quadratic
  polynomial features, fitted by subgradient descent on the pinball loss), and
* a least-squares 2-d quadratic response surface expressing package capacity
  as a function of range and speed, clamped below at zero.

``decode_talents`` maps unit-interval network outputs onto talent values that
satisfy the boundary constraints by construction: range is interpolated
between the archive extremes, speed between the conditional quantiles at the
decoded range, and capacity comes from the fitted surface.  Interpolation is
computed as ``(1-u)*lo + u*hi`` so the u=0 / u=1 corners hit the band edges
exactly in floating point.

Fitted models are immutable and safe for concurrent reads.
"""

from dataclasses import dataclass, field

import numpy as np

from codesign import fileio
from codesign.morphology import TalentVector

QUANTILE_ITERATIONS = 5000
SURFACE_FEATURE_NAMES = ("1", "range", "speed", "range^2", "range*speed", "speed^2")


class DegenerateDataError(ValueError):
    """Raised when the training data cannot identify the requested fit."""


class QuantileCrossingError(RuntimeError):
    """Raised when the fitted low quantile exceeds the high quantile."""


def quadratic_features(x) -> np.ndarray:
    """Features [1, x, x^2] for a scalar predictor, shape (n, 3)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    return np.stack([np.ones_like(x), x, x * x], axis=1)


def surface_features(r, s) -> np.ndarray:
    """Features [1, r, s, r^2, r*s, s^2], shape (n, 6)."""
    r = np.asarray(r, dtype=np.float64).ravel()
    s = np.asarray(s, dtype=np.float64).ravel()
    return np.stack([np.ones_like(r), r, s, r * r, r * s, s * s], axis=1)


def pinball_loss(y, y_hat, q) -> float:
    """Mean quantile (pinball) loss."""
    e = np.asarray(y) - np.asarray(y_hat)
    return float(np.mean(np.maximum(q * e, (q - 1.0) * e)))


def _standardize(xs, ys):
    mu_x, sigma_x = xs.mean(), xs.std()
    if sigma_x == 0.0:
        raise DegenerateDataError("all predictor values equal; quantile curve unidentifiable")
    mu_y, sigma_y = ys.mean(), ys.std()
    if sigma_y == 0.0:
        sigma_y = 1.0
    return (xs - mu_x) / sigma_x, (ys - mu_y) / sigma_y, (mu_x, sigma_x, mu_y, sigma_y)


def _unstandardize_coeffs(theta, scales) -> np.ndarray:
    """Fold the (x, y) standardization back into raw-space coefficients."""
    mu_x, sigma_x, mu_y, sigma_y = scales
    a0, a1, a2 = theta
    c2 = a2 / sigma_x**2
    c1 = a1 / sigma_x - 2.0 * a2 * mu_x / sigma_x**2
    c0 = a0 - a1 * mu_x / sigma_x + a2 * mu_x**2 / sigma_x**2
    raw = np.array([c0, c1, c2]) * sigma_y
    raw[0] += mu_y
    return raw


def _pinball_subgradient_fit(Z, w, q, iterations, step0=0.5):
    theta, *_ = np.linalg.lstsq(Z, w, rcond=None)
    best_theta, best_loss = theta.copy(), pinball_loss(w, Z @ theta, q)
    for t in range(1, iterations + 1):
        residual = w - Z @ theta
        slope = np.where(residual > 0.0, q, q - 1.0)
        grad = -(Z * slope[:, None]).mean(axis=0)
        theta -= step0 / np.sqrt(t) * grad
        loss = pinball_loss(w, Z @ theta, q)
        if loss < best_loss:
            best_loss, best_theta = loss, theta.copy()
    return best_theta


def _check_inputs(xs, ys, q):
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    if len(xs) != len(ys):
        raise ValueError("xs and ys must have equal length")
    if len(xs) < 10:
        raise ValueError(f"need at least 10 points to fit a quantile, got {len(xs)}")
    if not 0.0 < q < 1.0:
        raise ValueError("quantile level must lie in (0, 1)")
    return xs, ys


def fit_quantile(xs, ys, q, iterations=QUANTILE_ITERATIONS) -> np.ndarray:
    """Fit a quadratic conditional quantile curve by pinball subgradient descent.

    Features are standardized internally and the returned coefficients are
    expressed in raw feature space [1, x, x^2].  The fit starts from the
    least-squares solution and follows a 1/sqrt(t) step schedule, keeping the
    best iterate by training loss.
    """
    xs, ys = _check_inputs(xs, ys, q)
    z, w, scales = _standardize(xs, ys)
    theta = _pinball_subgradient_fit(quadratic_features(z), w, q, iterations)
    return _unstandardize_coeffs(theta, scales)


def fit_quantile_pair(
    xs, ys, q_low=0.05, q_high=0.95, iterations=QUANTILE_ITERATIONS, probes=100
) -> tuple[np.ndarray, np.ndarray]:
    """Fit non-crossing low/high quantile curves.

    Both curves are first fitted independently.  Where the Pareto band pinches
    near the range extremes the two quadratics can cross slightly; in that case
    a joint subgradient refinement minimizes the summed pinball losses plus a
    hinge penalty on low-above-high at probe points inside the data interval.
    Raises QuantileCrossingError if a crossing persists.
    """
    xs, ys = _check_inputs(xs, ys, q_low)
    z, w, scales = _standardize(xs, ys)
    Z = quadratic_features(z)
    theta_low = _pinball_subgradient_fit(Z, w, q_low, iterations)
    theta_high = _pinball_subgradient_fit(Z, w, q_high, iterations)

    z_probe = np.linspace(z.min(), z.max(), probes)
    P = quadratic_features(z_probe)

    def crossing(tl, th):
        return np.maximum(P @ tl - P @ th, 0.0)

    if crossing(theta_low, theta_high).max() > 0.0:
        penalty = 10.0
        tl, th = theta_low.copy(), theta_high.copy()
        best = None
        step0 = 0.25
        for t in range(1, iterations + 1):
            res_l, res_h = w - Z @ tl, w - Z @ th
            slope_l = np.where(res_l > 0.0, q_low, q_low - 1.0)
            slope_h = np.where(res_h > 0.0, q_high, q_high - 1.0)
            grad_l = -(Z * slope_l[:, None]).mean(axis=0)
            grad_h = -(Z * slope_h[:, None]).mean(axis=0)
            violating = (P @ tl - P @ th) > 0.0
            if violating.any():
                hinge = (P * violating[:, None]).mean(axis=0)
                grad_l = grad_l + penalty * hinge
                grad_h = grad_h - penalty * hinge
            step = step0 / np.sqrt(t)
            tl -= step * grad_l
            th -= step * grad_h
            cross = crossing(tl, th).max()
            loss = pinball_loss(w, Z @ tl, q_low) + pinball_loss(w, Z @ th, q_high)
            key = (cross > 0.0, loss + penalty * cross)
            if best is None or key < best[0]:
                best = (key, tl.copy(), th.copy())
        _, theta_low, theta_high = best
        if crossing(theta_low, theta_high).max() > 0.0:
            raise QuantileCrossingError(
                "quantile curves still cross after joint non-crossing refinement"
            )
    return _unstandardize_coeffs(theta_low, scales), _unstandardize_coeffs(theta_high, scales)


def eval_quantile(coeffs, x):
    return quadratic_features(x) @ np.asarray(coeffs, dtype=np.float64)


def quantile_coverage(coeffs, xs, ys, *, below=True) -> float:
    """Fraction of training points at or below the fitted curve."""
    y_hat = eval_quantile(coeffs, xs)
    return float(np.mean(np.asarray(ys).ravel() <= y_hat))


@dataclass(frozen=True)
class TalentBoundaryModel:
    """Fitted Pareto-surface surrogate plus conditional quantile bounds."""

    range_min: float
    range_max: float
    speed_quantile_low: np.ndarray   # Q(0.05 | range), raw quadratic coeffs
    speed_quantile_high: np.ndarray  # Q(0.95 | range)
    surface_coeffs: np.ndarray       # capacity = f(range, speed), 6 terms
    stats: dict = field(default_factory=dict, compare=False)

    def speed_bounds(self, r):
        """Conditional (low, high) speed bounds at flight range(s) r."""
        lo = eval_quantile(self.speed_quantile_low, r)
        hi = eval_quantile(self.speed_quantile_high, r)
        return lo, hi

    def surface_value(self, r, s):
        """Package capacity on the fitted Pareto surface, clamped at 0."""
        value = surface_features(r, s) @ self.surface_coeffs
        return np.maximum(value, 0.0)

    def validate(self, probes=100):
        if not self.range_min < self.range_max:
            raise ValueError("range_min must be < range_max")
        r = np.linspace(self.range_min, self.range_max, probes)
        lo, hi = self.speed_bounds(r)
        if np.any(lo > hi):
            worst = float(np.max(lo - hi))
            raise QuantileCrossingError(
                f"low quantile exceeds high quantile by up to {worst:.3g} inside the range box"
            )
        return self

    def save(self, path):
        fileio.write_kv(
            path,
            {
                "boundary": {
                    "version": 1,
                    "range_min": self.range_min,
                    "range_max": self.range_max,
                },
                "speed_quantiles": {
                    "low": self.speed_quantile_low,
                    "high": self.speed_quantile_high,
                },
                "surface": {"coeffs": self.surface_coeffs},
                "stats": {k: v for k, v in sorted(self.stats.items())},
            },
        )

    @classmethod
    def load(cls, path) -> "TalentBoundaryModel":
        sections = fileio.read_kv(path)
        version = int(sections["boundary"]["version"])
        if version != 1:
            raise ValueError(f"unsupported boundary model version {version}")
        parse = lambda text: np.array([float(v) for v in text.split()])
        return cls(
            range_min=float(sections["boundary"]["range_min"]),
            range_max=float(sections["boundary"]["range_max"]),
            speed_quantile_low=parse(sections["speed_quantiles"]["low"]),
            speed_quantile_high=parse(sections["speed_quantiles"]["high"]),
            surface_coeffs=parse(sections["surface"]["coeffs"]),
            stats={k: float(v) for k, v in sections.get("stats", {}).items()},
        ).validate()


def _name_degenerate_feature(r, s, A) -> str:
    """Identify which surface feature makes the design matrix rank deficient."""
    if np.std(s) == 0.0:
        return "speed"
    if np.std(r) == 0.0:
        return "range"
    norms = np.linalg.norm(A, axis=0)
    for j in range(1, A.shape[1]):
        others = np.delete(A, j, axis=1)
        coef, *_ = np.linalg.lstsq(others, A[:, j], rcond=None)
        residual = A[:, j] - others @ coef
        if np.linalg.norm(residual) / norms[j] < 1e-8:
            return SURFACE_FEATURE_NAMES[j]
    return "unknown"


def fit_surface(archive, quantile_iterations=QUANTILE_ITERATIONS) -> TalentBoundaryModel:
    """Fit the full boundary model from a Pareto archive.

    Least-squares quadratic surface for capacity(range, speed), range bounds
    from the archive extremes, and both speed quantile curves.  Raises
    DegenerateDataError naming the offending feature when the surface design
    matrix is rank deficient.
    """
    talents = np.asarray(archive.talents, dtype=np.float64)
    if len(talents) < 12:
        raise ValueError(f"archive of {len(talents)} points is too small (need >= 12)")
    r, s, c = talents[:, 0], talents[:, 1], talents[:, 2]

    A = surface_features(r, s)
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise DegenerateDataError(
            f"surface design matrix is rank deficient: feature "
            f"'{_name_degenerate_feature(r, s, A)}' is linearly dependent"
        )
    coeffs, *_ = np.linalg.lstsq(A, c, rcond=None)
    prediction = A @ coeffs
    ss_res = float(np.sum((c - prediction) ** 2))
    ss_tot = float(np.sum((c - c.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0

    low, high = fit_quantile_pair(r, s, 0.05, 0.95, iterations=quantile_iterations)

    model = TalentBoundaryModel(
        range_min=float(r.min()),
        range_max=float(r.max()),
        speed_quantile_low=low,
        speed_quantile_high=high,
        surface_coeffs=coeffs,
        stats={
            "r_squared": r_squared,
            "coverage_low": quantile_coverage(low, r, s),
            "coverage_high": quantile_coverage(high, r, s),
            "n_points": float(len(talents)),
        },
    )
    return model.validate()


def decode_talents(u, model: TalentBoundaryModel) -> TalentVector:
    """Map unit-interval outputs to a talent vector inside the modeled band.

    Inputs are clamped to [0, 1]; the first component interpolates the range
    extremes, the second the conditional speed quantiles at that range, and
    capacity is read off the fitted surface (clamped at zero).
    """
    u = np.clip(np.asarray(u, dtype=np.float64).ravel(), 0.0, 1.0)
    if u.shape != (2,):
        raise ValueError(f"expected 2 unit talent values, got shape {u.shape}")
    r = (1.0 - u[0]) * model.range_min + u[0] * model.range_max
    lo, hi = model.speed_bounds(r)
    lo, hi = float(lo[0]), float(hi[0])
    s = (1.0 - u[1]) * lo + u[1] * hi
    c = float(model.surface_value(r, s)[0])
    return TalentVector(float(r), float(s), c)


def unit_from_talents(talents: TalentVector, model: TalentBoundaryModel) -> np.ndarray:
    """Inverse of the decoder's first two components, clipped to [0, 1]."""
    span_r = model.range_max - model.range_min
    u0 = (talents.flight_range - model.range_min) / span_r if span_r > 0 else 0.5
    lo, hi = model.speed_bounds(talents.flight_range)
    lo, hi = float(lo[0]), float(hi[0])
    u1 = (talents.nominal_speed - lo) / (hi - lo) if hi > lo else 0.5
    return np.clip(np.array([u0, u1]), 0.0, 1.0)
