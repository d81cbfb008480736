"""Lyapunov spectrum of (P^k, f, mu) from the differential cocycle.

Exponents are time averages over many short orbits started at mu-sampled
points: lambda_i = mean_x log sigma_i(d_0 f^n_x) / n, with standard errors
from the spread across orbits. Orbits should start at independent points
and, on a repelling Julia set of measure zero (z^d, Chebyshev), be read off
backward chains: a forward orbit loses the set after about
-log(roundoff) / lambda steps.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from greenlab.endomorphism import cocycle, log_jacobian_sq_along
from greenlab.errors import DomainError
from greenlab.greenlab import greenlab

logger = logging.getLogger(__name__)

MIN_STEPS = 50
MIN_ORBITS = 100
MAX_DROPPED_FRACTION = 0.01
SIGMAS = 3.0

# Absolute slack on the Briend-Duval bound, for estimates with zero spread
BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class SpectrumEstimate:
    lambdas: Tuple[float, ...]
    standard_errors: Tuple[float, ...]
    n_steps: int
    n_orbits: int
    sum_check_residual: float
    sum_check_se: float = 0.0
    dropped: int = 0

    @property
    def dim(self):
        return len(self.lambdas)


@dataclass(frozen=True)
class BriendDuvalReport:
    half_log_d: float
    bound_margin: float
    bound_margin_se: float
    bound_holds: bool
    narrow_spectrum_margin: float
    narrow_spectrum_margin_se: float
    narrow_spectrum: bool


@dataclass(frozen=True)
class MinimalityVerdict:
    minimal: bool
    margin: float
    deviations: Tuple[float, ...]


def in_se_units(difference, standard_error):
    """difference / standard_error, with 0/0 = 0 and x/0 = +-inf."""
    if standard_error > 0.0:
        return difference / standard_error
    if difference == 0.0:
        return 0.0
    return float(np.copysign(np.inf, difference))


def _orbit_exponents(start, f, n_steps, hint):
    point, orbit = start
    c = cocycle(f, point, n_steps, hint, orbit)
    if c.near_critical:
        return None

    log_jacobian_sq = log_jacobian_sq_along(f, point, n_steps, orbit)
    if log_jacobian_sq is None:
        return None

    return c.log_singular_values / n_steps, log_jacobian_sq / n_steps


def lyapunov_spectrum(f, sample, n_steps, hint=None):
    """Estimate lambda_1 <= ... <= lambda_k over the points of `sample`.

    `hint` is passed to the chart construction (a unitary frame); the
    estimate must not depend on it. Orbits stored in the sample (see
    green_measure.sample_orbits) are used when long enough, forward
    evaluation otherwise.
    """
    if n_steps < MIN_STEPS:
        raise DomainError("n_steps must be at least {}, got {}".format(MIN_STEPS, n_steps))
    if sample.count < MIN_ORBITS:
        raise DomainError("need at least {} orbits, got {}".format(MIN_ORBITS, sample.count))

    if sample.orbits is not None and sample.orbits.shape[1] > n_steps:
        starts = list(zip(sample.points, sample.orbits[:, : n_steps + 1]))
    else:
        starts = [(point, None) for point in sample.points]

    results = greenlab.map_points(starts, _orbit_exponents, f, n_steps, hint)
    kept = [result for result in results if result is not None]
    dropped = len(results) - len(kept)

    if dropped > MAX_DROPPED_FRACTION * len(results):
        logger.warning(
            "dropped %d of %d near-critical orbits of %s", dropped, len(results), f.label
        )
    if len(kept) < 2:
        raise DomainError("fewer than two usable orbits for {}".format(f.label))

    per_orbit = np.array([result[0] for result in kept])
    jacobians = np.array([result[1] for result in kept])
    n_orbits = len(kept)

    lambdas = per_orbit.mean(axis=0)
    standard_errors = per_orbit.std(axis=0, ddof=1) / np.sqrt(n_orbits)

    sums = per_orbit.sum(axis=1)
    residual = abs(float(np.sum(lambdas)) - 0.5 * float(np.mean(jacobians)))
    sum_se = float(np.std(sums, ddof=1) / np.sqrt(n_orbits))

    logger.info(
        "lyapunov spectrum of %s: %s (SE %s, %d orbits x %d steps)",
        f.label,
        np.round(lambdas, 6),
        np.round(standard_errors, 6),
        n_orbits,
        n_steps,
    )

    return SpectrumEstimate(
        lambdas=tuple(float(v) for v in lambdas),
        standard_errors=tuple(float(v) for v in standard_errors),
        n_steps=n_steps,
        n_orbits=n_orbits,
        sum_check_residual=residual,
        sum_check_se=sum_se,
        dropped=dropped,
    )


def briend_duval_check(est, d):
    """lambda_1 >= 1/2 log d (3 sigma) and the narrow-spectrum hypothesis
    lambda_k < 2 lambda_1 (3 sigma), both reported as margins."""
    half_log_d = 0.5 * np.log(d)
    se_1 = est.standard_errors[0]
    se_k = est.standard_errors[-1]

    bound_margin = est.lambdas[0] - half_log_d
    bound_holds = bound_margin >= -SIGMAS * se_1 - BOUND_SLACK

    narrow_margin = 2.0 * est.lambdas[0] - est.lambdas[-1]
    narrow_se = float(np.sqrt(4.0 * se_1 ** 2 + se_k ** 2))
    narrow_spectrum = narrow_margin > -SIGMAS * narrow_se

    if not bound_holds:
        logger.warning(
            "Briend-Duval bound violated: lambda_1 = %.6f < %.6f (SE %.2e)",
            est.lambdas[0],
            half_log_d,
            se_1,
        )

    return BriendDuvalReport(
        half_log_d=float(half_log_d),
        bound_margin=float(bound_margin),
        bound_margin_se=in_se_units(bound_margin, se_1),
        bound_holds=bool(bound_holds),
        narrow_spectrum_margin=float(narrow_margin),
        narrow_spectrum_margin_se=in_se_units(narrow_margin, narrow_se),
        narrow_spectrum=bool(narrow_spectrum),
    )


def exponent_minimality_test(est, d):
    """Minimal iff every |lambda_i - 1/2 log d| < 3 SE_i; the margin is the
    largest deviation in SE units."""
    half_log_d = 0.5 * np.log(d)
    deviations = tuple(abs(l - half_log_d) for l in est.lambdas)
    margins = [in_se_units(dev, se) for dev, se in zip(deviations, est.standard_errors)]
    margin = max(margins)

    return MinimalityVerdict(minimal=bool(margin < SIGMAS), margin=float(margin), deviations=deviations)


def report_dict(est, d):
    bd = briend_duval_check(est, d)
    minimality = exponent_minimality_test(est, d)

    return {
        "lambdas": list(est.lambdas),
        "ses": list(est.standard_errors),
        "half_log_d": bd.half_log_d,
        "bd_margin": bd.bound_margin,
        "bd_margin_se": bd.bound_margin_se,
        "bd_holds": bd.bound_holds,
        "narrow_spectrum_margin": bd.narrow_spectrum_margin,
        "narrow_spectrum": bd.narrow_spectrum,
        "minimality_margin": minimality.margin,
        "minimal": minimality.minimal,
        "n_steps": est.n_steps,
        "n_orbits": est.n_orbits,
        "dropped": est.dropped,
        "sum_check_residual": est.sum_check_residual,
        "sum_check_se": est.sum_check_se,
    }
