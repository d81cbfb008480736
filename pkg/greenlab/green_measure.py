"""Green function of the lift and sampling of the equilibrium measure mu.

mu is sampled by backward iteration: starting from a fixed point of P^k,
each step replaces x by one of its d^k preimages (counted with multiplicity)
chosen uniformly at random. The preimages of a point of P^1 are the roots of
a binary form; on P^2 they are only available for symmetric squares, through
the preimages of the underlying map of P^1.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from greenlab.endomorphism import (
    DEGENERACY_TOLERANCE,
    critical_proximity,
    evaluate,
    evaluate_many,
    lift,
)
from greenlab.errors import ConfigError, ConvergenceError, DegeneracyError, DomainError, UnsupportedError
from greenlab.greenlab import greenlab
from greenlab.projective import ProjPoint, fs_distances, normalize
from greenlab.utils.tools import derive_seed
from greenlab.workloads.chain_sampler import ChainPlan

logger = logging.getLogger(__name__)

BACKWARD_ITERATION = "backward_iteration"
FORWARD_BIRKHOFF = "forward_birkhoff"
METHODS = (BACKWARD_ITERATION, FORWARD_BIRKHOFF)

DEFAULT_BURN_IN = 30
START_POINT = np.array([1.0, 0.37 + 0.21j])

GREEN_TOLERANCE = 1e-12
GREEN_MAX_ITERATIONS = 200

ROOT_RESIDUAL = 1e-8
ZERO_COEFFICIENT = 1e-14
MAX_RESAMPLES = 5
TARGET_PERTURBATION = 1e-9
SAMPLE_CRITICAL_PROXIMITY = 1e-10

# Forward orbits are restarted from fresh backward points at this length,
# before roundoff is expanded off the support of mu.
FORWARD_SEGMENT = 16

MIN_MASS_COUNT = 100


@dataclass(frozen=True, eq=False)
class GreenEvaluation:
    point_lift: np.ndarray
    value: float
    iterations: int
    residual: float


@dataclass(frozen=True, eq=False)
class MeasureSample:
    map_label: str
    points: Tuple[ProjPoint, ...]
    method: str
    burn_in: int
    seed: int
    count: int
    chains: int = 1
    # (count, n + 1, k + 1) unit lifts of x, f(x), ..., f^n(x), from sample_orbits
    orbits: Optional[np.ndarray] = None

    def coords(self):
        return np.array([point.coords for point in self.points])

    @property
    def dim(self):
        return self.points[0].dim


@dataclass(frozen=True)
class MassEstimate:
    value: float
    standard_error: float
    count: int

    @classmethod
    def from_hits(cls, hits, count):
        p = hits / count
        return cls(value=p, standard_error=float(np.sqrt(p * (1.0 - p) / count)), count=count)


@dataclass(frozen=True)
class BranchMasses:
    ball: MassEstimate
    branches: Tuple[MassEstimate, ...] = field(default_factory=tuple)

    @property
    def preimage(self):
        return sum(branch.value for branch in self.branches)


def green_function(f, v, tol=GREEN_TOLERANCE):
    """G(v) = lim d^{-n} log |F^n(v)| for the lift F of f.

    Accumulates log|v| + sum_j d^{-j} log |F(u_{j-1})| over unit vectors u_j;
    stops once the increment and the geometric bound on the tail are both
    below `tol`.
    """
    v = np.asarray(v, dtype=complex)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise DomainError("the Green function is not defined at the origin")

    d = f.degree
    value = float(np.log(norm))
    u = v / norm
    largest = 1.0

    for j in range(1, GREEN_MAX_ITERATIONS + 1):
        image = lift(f, u)
        image_norm = np.linalg.norm(image)
        if image_norm < DEGENERACY_TOLERANCE:
            raise DegeneracyError("lift of {} vanishes along the iteration".format(f.label))

        log_norm = float(np.log(image_norm))
        increment = log_norm / d ** j
        value += increment
        u = image / image_norm
        largest = max(largest, abs(log_norm))

        if abs(increment) < tol and largest / d ** j < tol * (d - 1):
            return GreenEvaluation(point_lift=v, value=value, iterations=j, residual=abs(increment))

    raise ConvergenceError(
        "Green function of {} did not converge in {} iterations".format(f.label, GREEN_MAX_ITERATIONS)
    )


def binary_form_roots(coefficients):
    """Roots of sum_i c_i z^{d-i} w^i on P^1, with multiplicity.

    Returns (unit vectors of shape (d, 2), largest relative residual). Vanishing
    leading / trailing coefficients give roots at [1:0] / [0:1]; the remaining
    polynomial is solved by companion-matrix eigenvalues in whichever affine
    chart keeps its leading coefficient largest, then polished by one Newton
    step.
    """
    c = np.asarray(coefficients, dtype=complex)
    d = len(c) - 1
    scale = np.linalg.norm(c)
    if scale == 0.0:
        raise DegeneracyError("the zero binary form has no isolated roots")

    small = np.abs(c) <= ZERO_COEFFICIENT * scale
    lead = int(np.argmin(small)) if not small.all() else d + 1
    trail = int(np.argmin(small[::-1]))

    roots = [np.array([1.0, 0.0], dtype=complex)] * lead
    roots += [np.array([0.0, 1.0], dtype=complex)] * trail

    core = c[lead : d + 1 - trail]
    if len(core) > 1:
        affine_in_z = abs(core[0]) >= abs(core[-1])
        polynomial = core if affine_in_z else core[::-1]
        for t in np.roots(polynomial):
            t = _newton_polish(polynomial, t)
            roots.append(np.array([t, 1.0]) if affine_in_z else np.array([1.0, t]))

    roots = np.array(roots, dtype=complex)
    roots /= np.linalg.norm(roots, axis=1, keepdims=True)

    powers = np.array([roots[:, 0] ** (d - i) * roots[:, 1] ** i for i in range(d + 1)])
    residual = float(np.max(np.abs(c @ powers)) / scale)

    return roots, residual


def _newton_polish(polynomial, t):
    value = np.polyval(polynomial, t)
    slope = np.polyval(np.polyder(polynomial), t)
    if slope == 0:
        return t

    polished = t - value / slope
    if abs(np.polyval(polynomial, polished)) < abs(value):
        return polished
    return t


def _p1_preimages(f, target):
    a, b = target
    P, Q = f.coefficients
    return binary_form_roots(b * P - a * Q)


def _symmetric_square_preimages(f, target):
    base = f.base_map
    # [s0:s1:s2] <-> roots of s0 X^2 + s1 XY + s2 Y^2, a root [p:q] being the
    # linear factor of the point [-q:p]
    roots, residual = binary_form_roots(target)
    factors = [normalize(np.array([-q, p])) for p, q in roots]

    first, first_residual = _p1_preimages(base, factors[0].coords)
    second, second_residual = _p1_preimages(base, factors[1].coords)

    pairs = []
    for r in first:
        for s in second:
            pairs.append([r[0] * s[0], r[0] * s[1] + r[1] * s[0], r[1] * s[1]])

    pairs = np.array(pairs, dtype=complex)
    pairs /= np.linalg.norm(pairs, axis=1, keepdims=True)
    return pairs, max(residual, first_residual, second_residual)


def has_preimage_solver(f):
    return f.dim == 1 or (f.construction == "ueda_sym2" and f.base_map is not None)


def preimages(f, y):
    """The d^k preimages of y (unit vectors, with multiplicity) and the
    largest root residual."""
    if f.dim == 1:
        return _p1_preimages(f, y.coords)
    if has_preimage_solver(f):
        return _symmetric_square_preimages(f, y.coords)

    raise UnsupportedError(
        "no preimage solver for {}: backward sampling on P^2 needs a symmetric square".format(
            f.label
        )
    )


def _backward_step(f, x, rng):
    target = x
    for attempt in range(MAX_RESAMPLES + 1):
        candidates, residual = preimages(f, target)
        if residual <= ROOT_RESIDUAL:
            break

        logger.warning(
            "root residual %.2e above %.0e for %s, resampling with a perturbed target",
            residual,
            ROOT_RESIDUAL,
            f.label,
        )
        noise = rng.standard_normal(x.dim + 1) + 1j * rng.standard_normal(x.dim + 1)
        target = normalize(x.coords + TARGET_PERTURBATION * noise)
    else:
        raise ConvergenceError("preimages of {} stay inaccurate after resampling".format(x.coords))

    remaining = list(range(len(candidates)))
    while remaining:
        choice = remaining.pop(int(rng.integers(len(remaining))))
        point = ProjPoint(candidates[choice])
        if critical_proximity(f, point) >= SAMPLE_CRITICAL_PROXIMITY:
            return point
        logger.debug("preimage %s is near-critical, choosing another branch", point.coords)

    raise DegeneracyError("every preimage of {} is near-critical".format(x.coords))


def _start_point(k):
    return normalize(START_POINT if k == 1 else np.append(START_POINT, 0.29 - 0.11j))


def _run_chain(chain_index, length, f, burn_in, seed, method):
    rng = np.random.default_rng(derive_seed(seed, chain_index))
    x = _start_point(f.dim)

    for _ in range(burn_in):
        x = _backward_step(f, x, rng)

    emitted = []
    if method == BACKWARD_ITERATION:
        for _ in range(length):
            x = _backward_step(f, x, rng)
            emitted.append(x.coords)
        return emitted

    # forward Birkhoff: forward orbit segments of backward-generated points
    while len(emitted) < length:
        for _ in range(FORWARD_SEGMENT):
            x = _backward_step(f, x, rng)
        y = x
        for _ in range(min(FORWARD_SEGMENT, length - len(emitted))):
            emitted.append(y.coords)
            y = evaluate(f, y)

    return emitted


def sample_measure(f, count, burn_in=DEFAULT_BURN_IN, seed=0, method=BACKWARD_ITERATION, chains=1):
    """A reproducible batch of mu-distributed points.

    `count` points are split over `chains` independent chains, chain i being
    seeded with derive_seed(seed, i); the result does not depend on the
    number of workers.
    """
    if method not in METHODS:
        raise ConfigError("unknown sampling method {!r}".format(method))
    if count < 1 or burn_in < 0:
        raise ConfigError("count must be positive and burn_in nonnegative")
    if not has_preimage_solver(f):
        raise UnsupportedError(
            "{} sampling is unavailable for {} (no preimage solver)".format(method, f.label)
        )

    plan = ChainPlan(count, chains)
    coords = greenlab.run_chains(plan, _run_chain, f, burn_in, seed, method)

    logger.info(
        "sampled %d points of mu for %s (%s, burn-in %d, seed %d, %d chains)",
        count,
        f.label,
        method,
        burn_in,
        seed,
        plan.nb_chains,
    )

    return MeasureSample(
        map_label=f.label,
        points=tuple(ProjPoint(c) for c in coords),
        method=method,
        burn_in=burn_in,
        seed=seed,
        count=count,
        chains=plan.nb_chains,
    )


def _run_orbit_chain(chain_index, length, f, burn_in, seed, n_steps):
    rng = np.random.default_rng(derive_seed(seed, chain_index))
    x = _start_point(f.dim)

    for _ in range(burn_in):
        x = _backward_step(f, x, rng)

    orbits = []
    for _ in range(length):
        path = [x.coords]
        for _ in range(n_steps):
            x = _backward_step(f, x, rng)
            path.append(x.coords)
        orbits.append(np.array(path[::-1]))
        x = _backward_step(f, x, rng)

    return orbits


def sample_orbits(f, count, n_steps, burn_in=DEFAULT_BURN_IN, seed=0, chains=None):
    """`count` mu-distributed points together with their forward orbits of
    length n_steps, read off backward chains (one chain per orbit by default).

    A backward chain x_0, x_1, ..., x_n with f(x_{j+1}) = x_j, reversed, is
    the forward orbit of x_n; it stays on the Julia set where forward
    evaluation of x_n would be expanded off it.
    """
    if count < 1 or n_steps < 0 or burn_in < 0:
        raise ConfigError("count must be positive, n_steps and burn_in nonnegative")
    if not has_preimage_solver(f):
        raise UnsupportedError("orbit sampling is unavailable for {} (no preimage solver)".format(f.label))

    plan = ChainPlan(count, count if chains is None else chains)
    orbits = np.array(greenlab.run_chains(plan, _run_orbit_chain, f, burn_in, seed, n_steps))

    logger.info(
        "sampled %d orbits of length %d for %s (burn-in %d, seed %d)", count, n_steps, f.label, burn_in, seed
    )

    return MeasureSample(
        map_label=f.label,
        points=tuple(ProjPoint(orbit[0]) for orbit in orbits),
        method=BACKWARD_ITERATION,
        burn_in=burn_in,
        seed=seed,
        count=count,
        chains=plan.nb_chains,
        orbits=orbits,
    )


def empirical_mass(sample, predicate):
    """Fraction of sample points satisfying `predicate`, with binomial SE."""
    if sample.count < MIN_MASS_COUNT:
        raise DomainError(
            "empirical masses need at least {} points, got {}".format(MIN_MASS_COUNT, sample.count)
        )

    hits = sum(1 for point in sample.points if predicate(point))
    return MassEstimate.from_hits(hits, len(sample.points))


def preimage_branch_masses(f, sample, center, radius):
    """mu(B) and the mu-masses of the pieces of f^{-1}(B), one per inverse branch.

    f^* mu = d^k mu makes every piece carry mu(B) / d^k for small balls B.
    """
    coords = sample.coords()
    count = len(coords)

    in_ball = fs_distances(coords, np.broadcast_to(center.coords, coords.shape)) < radius
    images = evaluate_many(f, coords)
    pulled = fs_distances(images, np.broadcast_to(center.coords, images.shape)) < radius

    branch_centers, _ = preimages(f, center)
    overlaps = np.abs(coords[pulled].conj() @ branch_centers.T)
    nearest = np.argmax(overlaps, axis=1) if len(overlaps) else np.zeros(0, dtype=int)

    branches = tuple(
        MassEstimate.from_hits(int(np.sum(nearest == b)), count) for b in range(len(branch_centers))
    )
    return BranchMasses(ball=MassEstimate.from_hits(int(np.sum(in_ball)), count), branches=branches)


def default_test_functions(k):
    """Smooth real test functions on P^k: the real and imaginary parts of the
    entries of x x^* and their pairwise products (20 functions)."""
    basic = []
    for i in range(k + 1):
        for j in range(i, k + 1):
            basic.append(lambda X, i=i, j=j: np.real(X[:, i] * np.conj(X[:, j])))
            if i != j:
                basic.append(lambda X, i=i, j=j: np.imag(X[:, i] * np.conj(X[:, j])))

    functions = list(basic)
    for a in range(len(basic)):
        for b in range(a, len(basic)):
            functions.append(lambda X, a=a, b=b: basic[a](X) * basic[b](X))

    return functions[:20]


def invariance_zscores(f, sample, test_functions=None):
    """|mean phi(f(x)) - mean phi(x)| in units of the combined standard error,
    one entry per test function (the empirical f_* mu = mu check)."""
    coords = sample.coords()
    images = evaluate_many(f, coords)
    test_functions = test_functions or default_test_functions(sample.dim)

    zscores = []
    for phi in test_functions:
        before = phi(coords)
        after = phi(images)
        difference = abs(np.mean(after) - np.mean(before))
        error = np.sqrt(np.var(before, ddof=1) / len(before) + np.var(after, ddof=1) / len(after))
        if error == 0.0:
            zscores.append(0.0 if difference == 0.0 else np.inf)
        else:
            zscores.append(difference / error)

    return np.array(zscores)


def mixing_profile(f, sample, test_function, lags):
    """Correlations mean(phi(x) phi(f^n x)) - mean(phi)^2 for every lag n,
    with standard errors; mixing of mu makes them decay to 0."""
    coords = sample.coords()
    base = test_function(coords)
    mean = np.mean(base)

    rows = []
    images = coords
    lag = 0
    for target in sorted(set(int(n) for n in lags)):
        while lag < target:
            images = evaluate_many(f, images)
            lag += 1
        products = (base - mean) * (test_function(images) - mean)
        rows.append(
            dict(
                lag=target,
                correlation=float(np.mean(products)),
                se=float(np.std(products, ddof=1) / np.sqrt(len(products))),
            )
        )

    return pd.DataFrame(rows, columns=["lag", "correlation", "se"])


def sample_frame(sample):
    columns = {}
    coords = sample.coords()
    for i in range(coords.shape[1]):
        columns["re_{}".format(i)] = coords[:, i].real
        columns["im_{}".format(i)] = coords[:, i].imag
    return pd.DataFrame(columns)


def export_sample(sample, path):
    """CSV: `# key=value` header lines, then re_0, im_0, ..., re_k, im_k."""
    header = dict(
        map_label=sample.map_label,
        method=sample.method,
        burn_in=sample.burn_in,
        seed=sample.seed,
        count=sample.count,
        chains=sample.chains,
    )
    with open(path, "w", newline="") as file:
        for key, value in header.items():
            file.write("# {}={}\n".format(key, value))
        sample_frame(sample).to_csv(file, index=False, float_format="%.17g")


def load_sample(path):
    header = {}
    with open(path) as file:
        for line in file:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            header[key] = value

    frame = pd.read_csv(path, comment="#")
    k = frame.shape[1] // 2 - 1
    coords = np.column_stack(
        [frame["re_{}".format(i)].to_numpy() + 1j * frame["im_{}".format(i)].to_numpy() for i in range(k + 1)]
    )

    return MeasureSample(
        map_label=header.get("map_label", "map"),
        points=tuple(ProjPoint(c) for c in coords),
        method=header.get("method", BACKWARD_ITERATION),
        burn_in=int(header.get("burn_in", 0)),
        seed=int(header.get("seed", 0)),
        count=len(coords),
        chains=int(header.get("chains", 1)),
    )
