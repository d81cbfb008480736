"""Dimension of mu: the upper bound 2(k-1) + log d / lambda_k and a measured
local dimension.

The measured value is the median over sample points x of the slope of
log #{y : dist(x, y) < r} against log r, i.e. the local dimension of mu at
typical points as far as a finite sample resolves it. It is a proxy for the
Hausdorff dimension of mu, not an estimate of it. The correlation dimension
(the same slope for the pooled pair count) is reported alongside; it is
biased low for measures with singular densities, such as Lattes measures
whose density blows up like 1/dist at the postcritical points.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
from scipy.stats import linregress, qmc

from greenlab.errors import DomainError
from greenlab.green_measure import MeasureSample
from greenlab.greenlab import greenlab
from greenlab.lyapunov import exponent_minimality_test
from greenlab.projective import ProjPoint, pairwise_fs_distances

logger = logging.getLogger(__name__)

MIN_POINTS = 2000
MIN_PAIRS = 100
N_RADII = 10
MIN_USABLE_RADII = 3
BOOTSTRAP_RESAMPLES = 200
BOOTSTRAP_SEED = 0x5EED
RADIUS_PAIRS = 20000
WIDENING = 1.5

# FS radii below MIN_RADIUS are resolved by roundoff, above MAX_RADIUS the
# curvature of P^k bends the counting curves
MIN_RADIUS = 1e-6
MAX_RADIUS = 0.2

MAXIMAL_DIMENSION_SLACK = 0.2

# the median pointwise slope of an exactly d-dimensional sample runs a few
# hundredths above d at small neighbour counts
BOUND_SLACK = 0.05


@dataclass(frozen=True)
class DimensionReport:
    upper_bound: Optional[float]
    measured_local_dim: float
    ci95: Tuple[float, float]
    r_range: Tuple[float, float]
    n_pairs: int
    k: int = 1
    d: Optional[int] = None
    lambda_k: Optional[float] = None
    correlation_dim: Optional[float] = None
    n_points_used: int = 0
    radii: Tuple[float, ...] = field(default_factory=tuple)
    counts: Tuple[int, ...] = field(default_factory=tuple)

    def to_dict(self):
        return {
            "k": self.k,
            "d": self.d,
            "lambda_k": self.lambda_k,
            "upper_bound": self.upper_bound,
            "measured": self.measured_local_dim,
            "ci95": list(self.ci95),
            "correlation_dim": self.correlation_dim,
            "r_range": list(self.r_range),
            "n_pairs": self.n_pairs,
            "n_points_used": self.n_points_used,
            "radii": list(self.radii),
            "counts": list(self.counts),
        }


@dataclass(frozen=True)
class ConsistencyVerdict:
    within_bound: bool
    maximal_candidate: bool
    minimal_exponents: Optional[bool]
    consistent: bool
    upper_bound: float
    measured: float


def dim_upper_bound(k, d, lambda_k):
    """2(k - 1) + log d / lambda_k."""
    if lambda_k <= 0.0:
        raise DomainError("lambda_k must be positive, got {}".format(lambda_k))
    if lambda_k < 0.5 * np.log(d) - 1e-6:
        logger.warning(
            "lambda_k = %.6f is below the Briend-Duval bound %.6f", lambda_k, 0.5 * np.log(d)
        )

    return 2.0 * (k - 1) + np.log(d) / lambda_k


def _neighbour_counts(coords, rows, radii):
    distances = pairwise_fs_distances(coords[rows.start : rows.stop], coords)
    counts = np.stack([np.sum(distances < r, axis=1) for r in radii], axis=1)
    # every point is its own neighbour
    return counts - 1


def _auto_radii(coords, rng):
    n = len(coords)
    first = rng.integers(n, size=RADIUS_PAIRS)
    second = rng.integers(n, size=RADIUS_PAIRS)
    distinct = first != second
    overlaps = np.abs(np.sum(coords[first[distinct]].conj() * coords[second[distinct]], axis=1))
    distances = np.arccos(np.clip(overlaps, 0.0, 1.0))

    r_max = min(float(np.percentile(distances, 50)), MAX_RADIUS)
    r_min = min(float(np.percentile(distances, 5)), r_max / 4.0)
    return r_min, r_max


def pointwise_slopes(log_radii, counts):
    """Least-squares slope of log counts[i] against log_radii for every row,
    over the radii where the count is positive. Rows with fewer than
    MIN_USABLE_RADII such radii are left out."""
    usable = counts > 0
    weights = usable.astype(float)
    n_usable = weights.sum(axis=1)
    keep = n_usable >= MIN_USABLE_RADII

    weights, n_usable = weights[keep], n_usable[keep]
    logs = np.log(np.where(usable[keep], counts[keep], 1))

    centred = log_radii[None, :] - (weights @ log_radii / n_usable)[:, None]
    return np.sum(weights * centred * logs, axis=1) / np.sum(weights * centred ** 2, axis=1)


def local_dimension(sample, r_min=None, r_max=None, upper_bound=None):
    """Median pointwise dimension of the sample over N_RADII log-spaced radii
    in [r_min, r_max], with a bootstrap 95% interval over resampled points.

    Radii default to the 5th and 50th percentiles of pairwise distances (the
    upper one capped at MAX_RADIUS); r_min is widened while fewer than
    MIN_PAIRS pairs fall below it.
    """
    if sample.count < MIN_POINTS:
        raise DomainError(
            "local dimension needs at least {} points, got {}".format(MIN_POINTS, sample.count)
        )

    coords = sample.coords()
    rng = np.random.default_rng(BOOTSTRAP_SEED)

    if r_min is None or r_max is None:
        auto_min, auto_max = _auto_radii(coords, rng)
        r_min = auto_min if r_min is None else r_min
        r_max = auto_max if r_max is None else r_max

    if not MIN_RADIUS < r_min < r_max <= MAX_RADIUS:
        raise DomainError(
            "radii must satisfy {} < r_min < r_max <= {}, got ({}, {})".format(
                MIN_RADIUS, MAX_RADIUS, r_min, r_max
            )
        )

    while True:
        radii = np.geomspace(r_min, r_max, N_RADII)
        counts = greenlab.count_pairs(coords, _neighbour_counts, radii)
        pairs = counts.sum(axis=0) // 2

        if pairs[0] >= MIN_PAIRS or r_min * WIDENING >= r_max / 2.0:
            break

        logger.warning(
            "only %d pairs closer than r_min = %.3g, widening to %.3g", pairs[0], r_min, r_min * WIDENING
        )
        r_min *= WIDENING

    n = len(coords)
    log_radii = np.log(radii)

    slopes = pointwise_slopes(log_radii, counts)
    if len(slopes) < n // 2:
        raise DomainError(
            "only {} of {} points have neighbours at {} radii in [{:.3g}, {:.3g}]".format(
                len(slopes), n, MIN_USABLE_RADII, radii[0], radii[-1]
            )
        )
    measured = float(np.median(slopes))

    medians = [np.median(slopes[rng.integers(len(slopes), size=len(slopes))]) for _ in range(BOOTSTRAP_RESAMPLES)]
    low, high = np.percentile(medians, [2.5, 97.5])
    ci95 = (float(min(low, measured)), float(max(high, measured)))

    correlation = None
    if np.all(pairs > 0):
        correlation = float(linregress(log_radii, np.log(counts.sum(axis=0) / (n * (n - 1.0)))).slope)

    logger.info(
        "local dimension of %s: %.4f %s (correlation dimension %s)",
        sample.map_label,
        measured,
        np.round(ci95, 4),
        "n/a" if correlation is None else "{:.4f}".format(correlation),
    )

    return DimensionReport(
        upper_bound=upper_bound,
        measured_local_dim=measured,
        ci95=ci95,
        r_range=(float(radii[0]), float(radii[-1])),
        n_pairs=int(pairs[0]),
        k=sample.dim,
        correlation_dim=correlation,
        n_points_used=len(slopes),
        radii=tuple(float(r) for r in radii),
        counts=tuple(int(p) for p in pairs),
    )


def with_upper_bound(report, spectrum, d):
    """The report completed with the bound computed from a spectrum estimate."""
    lambda_k = spectrum.lambdas[-1]
    return replace(
        report,
        upper_bound=float(dim_upper_bound(spectrum.dim, d, lambda_k)),
        d=d,
        lambda_k=float(lambda_k),
    )


def dimension_consistency(report, spectrum, d):
    """Measured dimension against the bound, and maximal dimension against
    minimal exponents (a maximal-dimension measure has all exponents equal to
    1/2 log d)."""
    k = spectrum.dim
    bound = dim_upper_bound(k, d, spectrum.lambdas[-1])

    within_bound = report.ci95[0] <= bound + BOUND_SLACK
    maximal = report.measured_local_dim > 2 * k - MAXIMAL_DIMENSION_SLACK
    minimal = exponent_minimality_test(spectrum, d).minimal if maximal else None

    return ConsistencyVerdict(
        within_bound=bool(within_bound),
        maximal_candidate=bool(maximal),
        minimal_exponents=minimal,
        consistent=bool(within_bound and (not maximal or minimal)),
        upper_bound=float(bound),
        measured=report.measured_local_dim,
    )


def _synthetic_sample(label, coords):
    points = tuple(ProjPoint(c / np.linalg.norm(c)) for c in coords)
    return MeasureSample(
        map_label=label,
        points=points,
        method="quasi_random",
        burn_in=0,
        seed=0,
        count=len(points),
    )


def uniform_sphere_sample(count, k=1):
    """Quasi-random points of P^k equidistributed for the FS volume."""
    halton = qmc.Halton(d=2 * k, scramble=False)
    halton.fast_forward(1)
    u = halton.random(count)

    if k == 1:
        # |z_0|^2 uniform on [0, 1] is the round measure on P^1 = S^2
        moduli = np.stack([np.sqrt(u[:, 0]), np.sqrt(1.0 - u[:, 0])], axis=1)
    else:
        root = np.sqrt(u[:, 0])
        weights = np.stack([1.0 - root, root * (1.0 - u[:, 1]), root * u[:, 1]], axis=1)
        moduli = np.sqrt(weights)

    phases = np.exp(2j * np.pi * u[:, k:])
    coords = moduli.astype(complex)
    coords[:, 1:] *= phases
    return _synthetic_sample("uniform_sphere", coords)


def uniform_circle_sample(count):
    """Quasi-random points of the circle {|z| = |w|} in P^1."""
    halton = qmc.Halton(d=1, scramble=False)
    halton.fast_forward(1)
    angles = 2.0 * np.pi * halton.random(count)[:, 0]
    coords = np.stack([np.ones(count), np.exp(1j * angles)], axis=1) / np.sqrt(2.0)
    return _synthetic_sample("uniform_circle", coords)
