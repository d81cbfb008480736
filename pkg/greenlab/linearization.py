"""Memberships in B_n(rho), LB_n(rho, tau), V_n(nu), their mu-masses and the
renormalization tests.

Renormalized maps are evaluated in homogeneous coordinates along the orbit
and read in charts only at both ends, so no intermediate chart can be left:

    Psi_n(u) = tau_{f^n x}^{-1} f^n tau_x (d_0 f^n_x)^{-1} u.

Injectivity is tested on a fixed quasi-random set of the ball, which makes
b_membership one-sided: a fold between test points is missed, a genuine
member near the boundary of the test may be rejected.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import pdist
from scipy.stats import qmc

from greenlab.endomorphism import cocycle, cocycles, evaluate_many
from greenlab.errors import ConfigError, DomainError
from greenlab.green_measure import MassEstimate
from greenlab.greenlab import greenlab
from greenlab.projective import (
    ProjPoint,
    chart_apply_many,
    chart_at,
    chart_inverse_many,
    fs_distance,
    fs_distances,
    pairwise_fs_distances,
    transition_differential,
)

logger = logging.getLogger(__name__)

# Radius of the target ball B(0, R_0), in chart units
R_0 = 0.3

RHO_GRID = (0.2, 0.1, 0.05, 0.02)
TAU_GRID = (2.0, 10.0, 50.0)
NU_GRID = (0.5, 0.3, 0.1)

MEMBERSHIP_POINTS = 200
TRACE_POINTS = 100
INJECTIVITY_MARGIN = 1e-3
MIN_MASS_SAMPLE = 500

MAX_BALL_RADIUS = 0.1
CONVERGED_DEVIATION = 1e-3
MIN_RECURRENCES = 3
DIVERGENCE_GROWTH = 2.0
ROTATION_TOLERANCE = 0.5
# Grid displacement below which the cocycle alone carries the grid
HEAD_DISPLACEMENT = 1e-8

CONVERGING = "converging"
DIVERGING = "diverging"
INCONCLUSIVE = "inconclusive"

SQRT_D = "sqrt_d"
INVERSE_DIFFERENTIAL = "inverse_differential"


def ball_points(k, count):
    """`count` deterministic quasi-random points of the unit ball of C^k."""
    halton = qmc.Halton(d=2 * k, scramble=False)
    halton.fast_forward(1)

    points = []
    while len(points) < count:
        raw = 2.0 * halton.random(count) - 1.0
        inside = raw[np.sum(raw ** 2, axis=1) < 1.0]
        points.extend(inside[:, :k] + 1j * inside[:, k:])

    return np.array(points[:count])


@dataclass(frozen=True, eq=False)
class MembershipRecord:
    point: ProjPoint
    n: int
    rho: float
    tau: float
    nu: float
    in_B: bool
    in_LB: bool
    in_V: bool
    sigma_max_inv: float
    log_jac_ratio: float
    injectivity_margin: float = 0.0
    image_radius: float = 0.0


def _renormalized_images(f, c, us, hint):
    """Chart coordinates at f^n(x) of f^n(tau_x(u)) for every row of `us`."""
    source = chart_at(c.base, hint)
    target = chart_at(c.end, hint)

    lifts = chart_apply_many(source, us)
    for _ in range(c.n):
        lifts = evaluate_many(f, lifts)

    images = chart_inverse_many(target, lifts)
    if not np.all(np.isfinite(images)):
        logger.debug("renormalized image left the chart at %s", c.end.coords)
    return images


def _b_diagnostics(f, c, rho, hint):
    """(member, injectivity margin, largest image radius) of Psi_n on B(0, rho)."""
    if c.near_critical:
        return False, 0.0, np.inf

    us = rho * ball_points(c.base.dim, MEMBERSHIP_POINTS)
    images = _renormalized_images(f, c, us @ c.inverse_matrix().T, hint)

    if not np.all(np.isfinite(images)):
        return False, 0.0, np.inf

    radius = float(np.max(np.linalg.norm(images, axis=1)))
    if radius >= R_0:
        return False, 0.0, radius

    ratios = pdist(_as_real(images)) / pdist(_as_real(us))
    margin = float(ratios.min())

    return margin > INJECTIVITY_MARGIN, margin, radius


def _as_real(z):
    return np.concatenate([z.real, z.imag], axis=1)


def _sigma_max_inv(c):
    return float(np.exp(-c.log_singular_values.min()))


def _log_jac_ratio(c, d):
    return 2.0 * c.log_det - c.base.dim * c.n * np.log(d)


def _check_parameters(rho=None, tau=None, nu=None):
    if rho is not None and not 0.0 < rho <= R_0:
        raise DomainError("rho must lie in (0, R_0 = {}], got {}".format(R_0, rho))
    if tau is not None and tau <= 0.0:
        raise DomainError("tau must be positive, got {}".format(tau))
    if nu is not None and not 0.0 < nu <= 1.0:
        raise DomainError("nu must lie in (0, 1], got {}".format(nu))


def b_membership(f, x, n, rho, hint=None):
    """x in B_n(rho): Psi_n maps the test points of B(0, rho) into B(0, R_0)
    with pairwise expansion ratios above INJECTIVITY_MARGIN."""
    _check_parameters(rho=rho)
    return _b_diagnostics(f, cocycle(f, x, n, hint), rho, hint)[0]


def lb_membership(f, x, n, rho, tau, hint=None):
    """x in LB_n(rho, tau): x in B_n(rho) and |(d_0 f^n_x)^{-1}| <= tau d^{-n/2}."""
    _check_parameters(rho=rho, tau=tau)
    c = cocycle(f, x, n, hint)
    if c.near_critical:
        return False
    return _sigma_max_inv(c) <= tau * f.degree ** (-n / 2) and _b_diagnostics(f, c, rho, hint)[0]


def v_membership(f, x, n, nu, hint=None):
    """x in V_n(nu): nu^2 d^{kn} <= |J_0 f^n_x|^2 <= d^{kn} / nu^2."""
    _check_parameters(nu=nu)
    c = cocycle(f, x, n, hint)
    if c.near_critical:
        return False
    return abs(_log_jac_ratio(c, f.degree)) <= 2.0 * np.log(1.0 / nu)


def membership(f, x, n, rho, tau, nu, hint=None):
    _check_parameters(rho, tau, nu)
    c = cocycle(f, x, n, hint)
    return _record(f, c, rho, tau, nu, hint)


def _record(f, c, rho, tau, nu, hint):
    in_B, margin, radius = _b_diagnostics(f, c, rho, hint)

    if c.near_critical:
        sigma_max_inv, ratio, in_V = np.inf, -np.inf, False
    else:
        sigma_max_inv = _sigma_max_inv(c)
        ratio = _log_jac_ratio(c, f.degree)
        in_V = abs(ratio) <= 2.0 * np.log(1.0 / nu)

    return MembershipRecord(
        point=c.base,
        n=c.n,
        rho=rho,
        tau=tau,
        nu=nu,
        in_B=bool(in_B),
        in_LB=bool(in_B and sigma_max_inv <= tau * f.degree ** (-c.n / 2)),
        in_V=bool(in_V),
        sigma_max_inv=float(sigma_max_inv),
        log_jac_ratio=float(ratio),
        injectivity_margin=margin,
        image_radius=radius,
    )


def _point_memberships(point, f, n_range, rhos, taus, nus, hint):
    """Boolean array [n, rho, tau, nu, (B, LB, V)] for one point."""
    wanted = sorted(set(n_range))
    flags = np.zeros((len(wanted), len(rhos), len(taus), len(nus), 3), dtype=bool)
    log_nus = 2.0 * np.log(1.0 / np.asarray(nus))
    d = f.degree

    position = 0
    for c in cocycles(f, point, wanted[-1], hint):
        if c.n != wanted[position]:
            if c.near_critical:
                break
            continue

        if not c.near_critical:
            in_V = np.abs(_log_jac_ratio(c, d)) <= log_nus
            bounded = _sigma_max_inv(c) <= np.asarray(taus) * d ** (-c.n / 2)
            for r, rho in enumerate(rhos):
                in_B = _b_diagnostics(f, c, rho, hint)[0]
                flags[position, r, :, :, 0] = in_B
                flags[position, r, :, :, 1] = in_B & bounded[:, None]
                flags[position, r, :, :, 2] = in_V[None, :]

        position += 1
        if c.near_critical or position == len(wanted):
            break

    return flags


def mass_curves_grid(f, sample, n_range, rhos=RHO_GRID, taus=TAU_GRID, nus=NU_GRID, hint=None):
    """{(rho, tau, nu): mass-curve table} over the whole parameter grid,
    computed in one pass per sample point."""
    if sample.count < MIN_MASS_SAMPLE:
        raise DomainError(
            "mass curves need at least {} points, got {}".format(MIN_MASS_SAMPLE, sample.count)
        )
    if not len(n_range) or not len(rhos) or not len(taus) or not len(nus):
        raise ConfigError("mass curves need non-empty n, rho, tau and nu grids")
    if min(n_range) < 0:
        raise DomainError("iteration counts must be nonnegative, got {}".format(min(n_range)))
    for rho in rhos:
        _check_parameters(rho=rho)
    for tau in taus:
        _check_parameters(tau=tau)
    for nu in nus:
        _check_parameters(nu=nu)

    flags = np.array(
        greenlab.map_points(
            list(sample.points), _point_memberships, f, list(n_range), tuple(rhos), tuple(taus), tuple(nus), hint
        )
    )
    hits = flags.sum(axis=0)
    count = flags.shape[0]
    ns = sorted(set(n_range))

    tables = {}
    for r, rho in enumerate(rhos):
        for t, tau in enumerate(taus):
            for v, nu in enumerate(nus):
                rows = []
                for i, n in enumerate(ns):
                    row = dict(n=n)
                    for j, name in enumerate(("B", "LB", "V")):
                        mass = MassEstimate.from_hits(int(hits[i, r, t, v, j]), count)
                        row["mass_" + name] = mass.value
                        row["se_" + name] = mass.standard_error
                    rows.append(row)
                tables[(rho, tau, nu)] = pd.DataFrame(
                    rows, columns=["n", "mass_B", "se_B", "mass_LB", "se_LB", "mass_V", "se_V"]
                )

    return tables


def mass_curves(f, sample, n_range, rho, tau, nu, hint=None):
    """Empirical mu-masses of B_n(rho), LB_n(rho, tau), V_n(nu) for every n."""
    return mass_curves_grid(f, sample, n_range, (rho,), (tau,), (nu,), hint)[(rho, tau, nu)]


def _distortion(point, f, n, rho, tau, nu, hint):
    c = cocycle(f, point, n, hint)
    if c.near_critical:
        return np.nan, False, False

    condition = float(np.exp(c.log_singular_values.max() - c.log_singular_values.min()))
    record = _record(f, c, rho, tau, nu, hint)
    return condition, record.in_LB, record.in_V


def distortion_profile(f, sample, n, rho=0.05, tau=10.0, nu=0.3, hint=None):
    """Condition numbers of (d_0 f^n_x)^{-1} over the sample.

    On LB_n(rho, tau) and V_n(nu) the singular values are squeezed between
    nu tau^{1-k} d^{-n/2} and tau d^{-n/2}, so the condition number is at
    most tau^k / nu; `within_bound` records that check per point.
    """
    _check_parameters(rho, tau, nu)
    rows = greenlab.map_points(list(sample.points), _distortion, f, n, rho, tau, nu, hint)

    frame = pd.DataFrame(rows, columns=["condition", "in_LB", "in_V"])
    bound = tau ** f.dim / nu
    frame["bound"] = bound
    frame["within_bound"] = ~(frame.in_LB & frame.in_V) | (frame.condition <= bound)
    return frame


@dataclass(frozen=True, eq=False)
class RenormalizationTrace:
    """Successive renormalized maps along an extraction n_j of the recurrence
    times of x.

    `recurrence_times` lists every return that passed the recurrence filter;
    `subsequence` is the extraction whose consecutive sup deviations are
    reported. A diverging verdict only concerns the tested times; other
    extractions may still converge.
    """

    point: ProjPoint
    subsequence: Tuple[int, ...]
    sup_deviation: Tuple[float, ...]
    recurrence_radius: float
    verdict: str
    kind: str = SQRT_D
    ball_radius: float = 0.01
    reason: str = ""
    recurrence_times: Tuple[int, ...] = field(default_factory=tuple)
    diameters: Tuple[float, ...] = field(default_factory=tuple)
    exit_step: Optional[int] = None
    rotation_tolerance: float = ROTATION_TOLERANCE

    def to_dict(self):
        return {
            "point": [[float(z.real), float(z.imag)] for z in self.point.coords],
            "kind": self.kind,
            "subsequence": list(self.subsequence),
            "sup_deviation": list(self.sup_deviation),
            "recurrence_times": list(self.recurrence_times),
            "diameters": list(self.diameters),
            "recurrence_radius": self.recurrence_radius,
            "rotation_tolerance": self.rotation_tolerance,
            "ball_radius": self.ball_radius,
            "exit_step": self.exit_step,
            "verdict": self.verdict,
            "reason": self.reason,
        }


def dump_trace(trace, path):
    with open(path, "w") as file:
        json.dump(trace.to_dict(), file, indent=2, sort_keys=True)
        file.write("\n")


def _polar_unitary(matrix):
    W, _, Vh = np.linalg.svd(matrix)
    return W @ Vh


def _returns(x, chart_x, c, kind, recurrence_radius, hint):
    """f^n(x) is back within recurrence_radius of x and, for the homothety
    renormalization, the derivative of f^n read in the chart at x has its
    unitary part within ROTATION_TOLERANCE of the identity."""
    if fs_distance(c.end, x) >= recurrence_radius:
        return False
    if kind != SQRT_D:
        return True

    scaled = c.unitary_left @ np.diag(np.exp(c.log_singular_values - c.log_singular_values.max())) @ c.unitary_right
    linear = transition_differential(chart_x, chart_at(c.end, hint)) @ scaled
    return np.linalg.norm(_polar_unitary(linear) - np.eye(x.dim), 2) < ROTATION_TOLERANCE


def _head_start(history, kind, d, ball_radius):
    """Latest cocycle d_0 f^m_x that carries the renormalized grid to a
    displacement below HEAD_DISPLACEMENT; the remaining n - m steps are
    evaluated on the grid itself."""
    c = history[-1]
    limit = np.log(HEAD_DISPLACEMENT / ball_radius)

    for start in reversed(history[1:-1]):
        if kind == SQRT_D:
            size = start.log_singular_values.max() - 0.5 * c.n * np.log(d)
        else:
            size = start.log_singular_values.max() - c.log_singular_values.min()
        if size <= limit:
            return start

    return history[0]


def _renormalized_lifts(f, chart_x, history, grid, kind, ball_radius, hint, orbit):
    """Unit lifts of f^n(tau_x(L_n u)) for every row u of `grid`, with L_n the
    homothety d^{-n/2} or the inverse of d_0 f^n_x read in the chart at x."""
    c = history[-1]
    start = _head_start(history, kind, f.degree, ball_radius)
    steps = c.n - start.n

    if kind == SQRT_D:
        log_scale = start.log_singular_values - 0.5 * c.n * np.log(f.degree)
        head = start.unitary_left @ np.diag(np.exp(log_scale)) @ start.unitary_right
    else:
        tail = c if start.n == 0 else cocycle(f, start.end, steps, hint, None if orbit is None else orbit[start.n :])
        head = tail.inverse_matrix() @ np.linalg.inv(transition_differential(chart_x, chart_at(c.end, hint)))

    lifts = chart_apply_many(chart_at(start.end, hint), grid @ head.T)
    for _ in range(steps):
        lifts = evaluate_many(f, lifts)
    return lifts


def _recentered(chart_x, lifts):
    """Grid images translated so that the image of the center sits at x."""
    coords = chart_inverse_many(chart_x, lifts)
    shifted = coords[1:] - coords[0]
    if not np.all(np.isfinite(shifted)):
        return None
    return chart_apply_many(chart_x, shifted)


def _deviation(shape, previous):
    if shape is None or previous is None:
        return np.inf
    return float(np.max(fs_distances(shape, previous)))


def _renormalization_test(f, x, max_n, ball_radius, recurrence_radius, kind, hint, orbit):
    if not 0.0 < ball_radius <= MAX_BALL_RADIUS:
        raise DomainError("ball_radius must lie in (0, {}], got {}".format(MAX_BALL_RADIUS, ball_radius))
    if recurrence_radius <= 0.0:
        raise DomainError("recurrence_radius must be positive, got {}".format(recurrence_radius))
    if max_n < 0:
        raise DomainError("max_n must be nonnegative, got {}".format(max_n))

    k = x.dim
    chart_x = chart_at(x, hint)
    grid = np.vstack([np.zeros((1, k), dtype=complex), ball_radius * ball_points(k, TRACE_POINTS)])
    center = np.broadcast_to(x.coords, (TRACE_POINTS, k + 1))
    exit_distance = np.arctan(R_0)
    orbit = None if orbit is None else np.asarray(orbit)

    history = []
    recurrences, diameters = [], []
    subsequence, deviations = [], []
    previous = None
    exit_step = None
    reason = ""

    for c in cocycles(f, x, max_n, hint, orbit):
        history.append(c)
        if c.near_critical:
            reason = "orbit met the critical set at step {}".format(c.n)
            break
        if c.n > 0 and not _returns(x, chart_x, c, kind, recurrence_radius, hint):
            continue

        lifts = _renormalized_lifts(f, chart_x, history, grid, kind, ball_radius, hint, orbit)
        recurrences.append(c.n)
        diameters.append(float(np.max(pairwise_fs_distances(lifts[1:], lifts[1:]))))

        escaped = np.max(fs_distances(lifts[1:], center)) > exit_distance
        if exit_step is None and escaped and diameters[-1] >= DIVERGENCE_GROWTH * diameters[0]:
            exit_step = c.n

        # the extraction keeps a return only when it brings the renormalized
        # map closer to the last kept one than that one was to its predecessor
        shape = _recentered(chart_x, lifts)
        if previous is None:
            subsequence.append(c.n)
            previous = shape
        else:
            deviation = _deviation(shape, previous)
            if not deviations or deviation < deviations[-1]:
                subsequence.append(c.n)
                deviations.append(deviation)
                previous = shape

        settled = len(subsequence) >= MIN_RECURRENCES and deviations[-1] < CONVERGED_DEVIATION
        if len(recurrences) >= MIN_RECURRENCES and (exit_step is not None or settled):
            break

    if len(recurrences) < MIN_RECURRENCES:
        verdict = INCONCLUSIVE
        reason = reason or "only {} recurrence times up to n = {}".format(len(recurrences), max_n)
    elif exit_step is not None:
        verdict = DIVERGING
    elif len(subsequence) >= MIN_RECURRENCES and deviations[-1] < CONVERGED_DEVIATION:
        verdict = CONVERGING
    else:
        verdict = INCONCLUSIVE
        reason = reason or "deviations did not settle below {} by n = {}".format(CONVERGED_DEVIATION, max_n)

    logger.debug("%s test at %s: %s after %d steps", kind, x.coords, verdict, history[-1].n)

    return RenormalizationTrace(
        point=x,
        subsequence=tuple(subsequence),
        sup_deviation=tuple(deviations),
        recurrence_radius=recurrence_radius,
        verdict=verdict,
        kind=kind,
        ball_radius=ball_radius,
        reason=reason,
        recurrence_times=tuple(recurrences),
        diameters=tuple(diameters),
        exit_step=exit_step,
    )


def sqrt_d_linearization_test(f, x, max_n, ball_radius=0.01, recurrence_radius=0.1, hint=None, orbit=None):
    """Track f^{n_j} o tau_x o (d^{-n_j/2} Id) on a grid of B(0, ball_radius)
    along recurrence times n_j <= max_n of x (n_0 = 0).

    A time n recurs when f^n(x) is within `recurrence_radius` of x and the
    unitary part of d^{-n/2} d_0 f^n_x, read in the chart at x, is within
    ROTATION_TOLERANCE of the identity; returns that flip the chart
    orientation cannot bring the renormalized maps together. Among the
    recurrence times the tested subsequence keeps each return that lands
    closer to the previously kept map, maps being compared after
    re-centering their image of 0 at x.

    converging: at least three kept times and a last sup deviation below
    1e-3 (kept deviations decrease by construction). diverging: at some
    recurrence time a grid image leaves B(0, R_0) while the image diameter
    is at least twice its initial value. The run stops as soon as either is
    decided. `orbit` (unit lifts of x, f(x), ...) replaces forward
    evaluation of the base orbit, as in `cocycles`.
    """
    return _renormalization_test(f, x, max_n, ball_radius, recurrence_radius, SQRT_D, hint, orbit)


def linearization_test(f, x, max_n, ball_radius=0.01, recurrence_radius=0.1, hint=None, orbit=None):
    """Same test with the renormalization (d_0 f^n_x)^{-1}, the differential
    read in the chart at x at both ends. The rotation condition is then void."""
    return _renormalization_test(f, x, max_n, ball_radius, recurrence_radius, INVERSE_DIFFERENTIAL, hint, orbit)
