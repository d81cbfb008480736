"""Holomorphic endomorphisms of P^k given by homogeneous polynomial lifts.

The chart expression f_x = tau_{f(x)}^{-1} o f o tau_x has derivative at 0

    d_0 f_x = E_{f(x)}^* DF(X) E_x / |F(X)|

(the component of DF(X) E_x along F(X) is killed by E_{f(x)}^*). Products of
these matrices along an orbit are kept in log-scaled SVD form by `cocycles`.
"""

import itertools
import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import qmc

from greenlab.errors import ConfigError, DegeneracyError, DomainError
from greenlab.projective import (
    ProjPoint,
    chart_apply,
    chart_at,
    chart_inverse,
    normalize,
)

logger = logging.getLogger(__name__)

DEGENERACY_TOLERANCE = 1e-14
NEAR_CRITICAL = 1e-12
RESULTANT_TOLERANCE = 1e-10
COMMON_ZERO_TOLERANCE = 1e-10
NONDEGENERACY_STARTS = 10_000
REFINED_STARTS = 20


def monomial_exponents(k, d):
    """Exponent vectors of the degree-d monomials in k+1 variables, in
    descending lexicographic order (z_0^d first, z_k^d last)."""
    return np.array(
        [e for e in itertools.product(range(d, -1, -1), repeat=k + 1) if sum(e) == d],
        dtype=int,
    )


def _powers(V, d):
    P = np.ones(V.shape + (d + 1,), dtype=complex)
    for e in range(1, d + 1):
        P[..., e] = P[..., e - 1] * V
    return P


def _monomials(P, exponents):
    variables = np.arange(exponents.shape[1])
    return P[..., variables, exponents].prod(axis=-1)


@dataclass(frozen=True, eq=False)
class HomogeneousMap:
    """f = [F_0 : ... : F_k] with every F_i homogeneous of degree d.

    `coefficients[i, m]` multiplies monomial `monomial_exponents(k, d)[m]` in
    F_i. `construction` and `base_map` record how special maps were built so
    that their preimage solver can be recovered (see green_measure).
    """

    dim: int
    degree: int
    coefficients: np.ndarray
    label: str = "map"
    construction: Optional[str] = None
    base_map: Optional["HomogeneousMap"] = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise DomainError("only P^1 and P^2 are supported, got k={}".format(self.dim))
        if self.degree < 2:
            raise DomainError("degree must be at least 2, got {}".format(self.degree))

        exponents = monomial_exponents(self.dim, self.degree)
        coefficients = np.array(self.coefficients, dtype=complex)
        if coefficients.shape != (self.dim + 1, len(exponents)):
            raise DomainError(
                "expected coefficients of shape {}, got {}".format(
                    (self.dim + 1, len(exponents)), coefficients.shape
                )
            )
        if not np.all(np.isfinite(coefficients)):
            raise DomainError("coefficients of {} must be finite".format(self.label))
        coefficients.setflags(write=False)
        object.__setattr__(self, "coefficients", coefficients)
        object.__setattr__(self, "exponents", exponents)

        derivative_exponents = []
        for j in range(self.dim + 1):
            shifted = exponents.copy()
            shifted[:, j] = np.maximum(shifted[:, j] - 1, 0)
            derivative_exponents.append(shifted)
        object.__setattr__(self, "derivative_exponents", derivative_exponents)

        check_nondegenerate(self)

    @property
    def topological_degree(self):
        return self.degree ** self.dim

    def __call__(self, x):
        return evaluate(self, x)


def from_components(components, label="map", construction=None, base_map=None):
    """Build a map from `components[i] = {exponent tuple: coefficient}`."""
    components = [dict(component) for component in components]
    k = len(components) - 1
    degrees = {sum(e) for component in components for e in component}
    if len(degrees) != 1:
        raise DomainError("components are not homogeneous of a single degree")
    d = degrees.pop()

    exponents = [tuple(e) for e in monomial_exponents(k, d)]
    position = {e: m for m, e in enumerate(exponents)}
    coefficients = np.zeros((k + 1, len(exponents)), dtype=complex)
    for i, component in enumerate(components):
        for e, value in component.items():
            coefficients[i, position[tuple(e)]] += value

    return HomogeneousMap(
        dim=k,
        degree=d,
        coefficients=coefficients,
        label=label,
        construction=construction,
        base_map=base_map,
    )


def lift(f, V):
    """F(V) for one vector or a batch of vectors (last axis = k+1)."""
    V = np.asarray(V, dtype=complex)
    return _monomials(_powers(V, f.degree), f.exponents) @ f.coefficients.T


def lift_jacobian(f, V):
    """DF(V)[..., i, j] = dF_i / dz_j."""
    V = np.asarray(V, dtype=complex)
    P = _powers(V, f.degree)
    columns = [
        (f.exponents[:, j] * _monomials(P, f.derivative_exponents[j])) @ f.coefficients.T
        for j in range(f.dim + 1)
    ]
    return np.stack(columns, axis=-1)


def resultant(f):
    """Resultant of the two binary forms of a map of P^1 (Sylvester determinant)."""
    if f.dim != 1:
        raise DomainError("the resultant test applies to maps of P^1 only")

    a, b = f.coefficients
    d = f.degree
    sylvester = np.zeros((2 * d, 2 * d), dtype=complex)
    for i in range(d):
        sylvester[i, i : i + d + 1] = a
        sylvester[d + i, i : i + d + 1] = b

    return np.linalg.det(sylvester)


def check_nondegenerate(f):
    if f.dim == 1:
        a, b = f.coefficients
        scale = np.linalg.norm(a) ** f.degree * np.linalg.norm(b) ** f.degree
        if not abs(resultant(f)) > RESULTANT_TOLERANCE * scale > 0.0:
            raise DegeneracyError("components of {} share a common zero".format(f.label))
        return

    starts = _quasi_random_lifts(f.dim, NONDEGENERACY_STARTS)
    norms = np.linalg.norm(lift(f, starts), axis=1)
    scale = max(np.linalg.norm(f.coefficients), 1.0)

    for v in starts[np.argsort(norms)[:REFINED_STARTS]]:
        if np.linalg.norm(lift(f, _refine_common_zero(f, v))) < COMMON_ZERO_TOLERANCE * scale:
            raise DegeneracyError("components of {} share a common zero".format(f.label))


def _refine_common_zero(f, v, steps=60):
    """Gauss-Newton on F(v) = 0 over the unit sphere, moving orthogonally to v."""
    for _ in range(steps):
        frame = chart_at(ProjPoint(v)).frame
        step = np.linalg.lstsq(lift_jacobian(f, v) @ frame, -lift(f, v), rcond=None)[0]
        v = v + frame @ step
        v = v / np.linalg.norm(v)
    return v


def _quasi_random_lifts(k, count):
    halton = qmc.Halton(d=2 * (k + 1), scramble=False)
    halton.fast_forward(1)
    raw = 2.0 * halton.random(count) - 1.0
    lifts = raw[:, : k + 1] + 1j * raw[:, k + 1 :]
    return lifts / np.linalg.norm(lifts, axis=1, keepdims=True)


def evaluate(f, x):
    """f(x) as a ProjPoint; independent of the phase of x.coords."""
    image = lift(f, x.coords)
    if np.linalg.norm(image) < DEGENERACY_TOLERANCE:
        raise DegeneracyError("lift of {} vanishes at {}".format(f.label, x.coords))
    return normalize(image)


def evaluate_many(f, lifts):
    """Unit lifts of f at every row of `lifts`."""
    images = lift(f, lifts)
    norms = np.linalg.norm(images, axis=-1, keepdims=True)
    if np.any(norms < DEGENERACY_TOLERANCE):
        raise DegeneracyError("lift of {} vanishes on a batch point".format(f.label))
    return images / norms


def orbit(f, x, n):
    points = [x]
    for _ in range(n):
        points.append(evaluate(f, points[-1]))
    return points


def _chart_step(f, x, hint=None, image_point=None):
    X = x.coords
    image = lift(f, X)
    norm = np.linalg.norm(image)
    if norm < DEGENERACY_TOLERANCE:
        raise DegeneracyError("lift of {} vanishes at {}".format(f.label, X))

    y = normalize(image) if image_point is None else image_point
    E_x = chart_at(x, hint).frame
    E_y = chart_at(y, hint).frame
    matrix = E_y.conj().T @ lift_jacobian(f, X) @ E_x / norm

    return matrix, y


def chart_differential(f, x, hint=None):
    """The k x k matrix d_0 f_x in the charts at x and f(x)."""
    return _chart_step(f, x, hint)[0]


def finite_difference_differential(f, x, h=1e-5, hint=None):
    """Central-difference d_0 f_x, the oracle for `chart_differential`."""
    source = chart_at(x, hint)
    target = chart_at(evaluate(f, x), hint)

    def f_x(u):
        return chart_inverse(target, evaluate(f, chart_apply(source, u)))

    columns = []
    for e in np.eye(x.dim, dtype=complex):
        columns.append((f_x(h * e) - f_x(-h * e)) / (2 * h))

    return np.column_stack(columns)


def critical_proximity(f, x, hint=None):
    """Smallest singular value of d_0 f_x; zero exactly on the critical set."""
    return float(np.linalg.svd(chart_differential(f, x, hint), compute_uv=False).min())


@dataclass(frozen=True, eq=False)
class Cocycle:
    """d_0 f^n_x = unitary_left diag(exp(log_singular_values)) unitary_right.

    log_singular_values is sorted ascending. When the orbit meets
    sigma_min < NEAR_CRITICAL the accumulation stops there and `near_critical`
    is set; `n` is then the step at which it stopped.
    """

    base: ProjPoint
    n: int
    unitary_left: np.ndarray
    unitary_right: np.ndarray
    log_singular_values: np.ndarray
    end: ProjPoint
    near_critical: bool = False

    @property
    def log_det(self):
        return float(np.sum(self.log_singular_values))

    def matrix(self):
        return (
            self.unitary_left
            @ np.diag(np.exp(self.log_singular_values))
            @ self.unitary_right
        )

    def inverse_matrix(self):
        return (
            self.unitary_right.conj().T
            @ np.diag(np.exp(-self.log_singular_values))
            @ self.unitary_left.conj().T
        )


def _orbit_points(orbit, n_max):
    if orbit is None:
        return None
    if len(orbit) < n_max + 1:
        raise DomainError("orbit of length {} is shorter than {} steps".format(len(orbit), n_max))
    return [ProjPoint(v) for v in orbit[: n_max + 1]]


def cocycles(f, x, n_max, hint=None, orbit=None):
    """Yield the cocycles of lengths 0, 1, ..., n_max along the orbit of x.

    Each step multiplies by d_0 f_{f^j(x)} and re-factorizes; the largest
    singular value comes from the SVD and the remaining one from the
    accumulated log|det|, so small singular values keep full relative accuracy.

    `orbit`, when given, holds unit lifts of x, f(x), f^2(x), ... (a reversed
    backward chain) and replaces forward evaluation. Forward orbits drift
    away from a repelling Julia set at the rate of the exponent; a backward
    chain stays on it.
    """
    if n_max < 0:
        raise DomainError("cocycle length must be nonnegative, got {}".format(n_max))
    known = _orbit_points(orbit, n_max)

    k = x.dim
    U = np.eye(k, dtype=complex)
    Vh = np.eye(k, dtype=complex)
    log_sv = np.zeros(k)
    log_det = 0.0
    point = x

    yield Cocycle(x, 0, U, Vh, log_sv, x)

    for n in range(1, n_max + 1):
        matrix, image = _chart_step(f, point, hint, None if known is None else known[n])
        singular_values = np.linalg.svd(matrix, compute_uv=False)

        if singular_values.min() < NEAR_CRITICAL:
            logger.debug("near-critical orbit of %s at step %d", x.coords, n)
            yield Cocycle(x, n, U, Vh, log_sv, image, near_critical=True)
            return

        log_det += float(np.sum(np.log(singular_values)))

        scale = log_sv.max()
        Ua, sa, Vha = np.linalg.svd(matrix @ U @ np.diag(np.exp(log_sv - scale)))
        descending = np.log(sa) + scale
        descending[-1] = log_det - np.sum(descending[:-1])

        order = np.argsort(descending, kind="stable")
        log_sv = descending[order]
        U = Ua[:, order]
        Vh = (Vha @ Vh)[order, :]
        point = image

        yield Cocycle(x, n, U, Vh, log_sv, image)


def cocycle(f, x, n, hint=None, orbit=None):
    """The cocycle d_0 f^n_x (or the flagged prefix of a near-critical orbit)."""
    last = None
    for last in cocycles(f, x, n, hint, orbit):
        pass
    return last


def log_jacobian_sq(c):
    """log |J_0 f^n_x|^2 = 2 * sum of the log singular values."""
    return 2.0 * float(np.sum(c.log_singular_values))


def log_jacobian_sq_along(f, x, n, orbit=None):
    """log |J_0 f^n_x|^2 from det DF along the orbit, without any SVD.

    In the unitary bases (X, E_x) and (F(X)/|F(X)|, E_{f(x)}) the matrix DF(X)
    is block triangular (Euler: DF(X) X = d F(X)), hence
    |det DF(X)| = d |F(X)|^{k+1} |det d_0 f_x|.
    Returns None when the orbit meets the critical set. `orbit` is as in
    `cocycles`.
    """
    k = f.dim
    total = 0.0
    X = x.coords
    known = _orbit_points(orbit, n)

    for j in range(n):
        image = lift(f, X)
        norm = np.linalg.norm(image)
        if norm < DEGENERACY_TOLERANCE:
            return None

        sign, log_abs_det = np.linalg.slogdet(lift_jacobian(f, X))
        if sign == 0:
            return None

        total += 2.0 * (log_abs_det - np.log(f.degree) - (k + 1) * np.log(norm))
        X = image / norm if known is None else known[j + 1].coords

    return total


def map_to_dict(f):
    components = []
    for row in f.coefficients:
        components.append(
            [
                {"exponents": [int(e) for e in exponent], "re": float(c.real), "im": float(c.imag)}
                for exponent, c in zip(f.exponents, row)
                if c != 0
            ]
        )

    data = {"k": f.dim, "d": f.degree, "label": f.label, "components": components}
    if f.construction is not None:
        data["construction"] = {"kind": f.construction}
        if f.base_map is not None:
            data["construction"]["base"] = map_to_dict(f.base_map)

    return data


def map_from_dict(data):
    try:
        k = int(data["k"])
        d = int(data["d"])
        label = str(data.get("label", "map"))
        raw_components = data["components"]
    except (KeyError, TypeError, ValueError) as error:
        raise ConfigError("malformed map definition: {}".format(error))

    if len(raw_components) != k + 1:
        raise ConfigError("expected {} components, got {}".format(k + 1, len(raw_components)))

    components = []
    for index, raw in enumerate(raw_components):
        component = {}
        for term in raw:
            exponents = tuple(int(e) for e in term["exponents"])
            if len(exponents) != k + 1 or sum(exponents) != d or min(exponents) < 0:
                raise ConfigError(
                    "component {} has monomial {} not of degree {} in {} variables".format(
                        index, exponents, d, k + 1
                    )
                )
            value = complex(float(term.get("re", 0.0)), float(term.get("im", 0.0)))
            component[exponents] = component.get(exponents, 0) + value
        if not component:
            component[(d,) + (0,) * k] = 0.0
        components.append(component)

    construction = data.get("construction")
    kind = construction.get("kind") if construction else None
    base = map_from_dict(construction["base"]) if construction and "base" in construction else None

    return from_components(components, label=label, construction=kind, base_map=base)


def dump_map(f, path):
    with open(path, "w") as file:
        json.dump(map_to_dict(f), file, indent=2, sort_keys=True)
        file.write("\n")


def load_map(path):
    try:
        with open(path) as file:
            data = json.load(file)
    except (OSError, json.JSONDecodeError) as error:
        raise ConfigError("cannot read map definition {}: {}".format(path, error))

    return map_from_dict(data)
