"""Reference endomorphisms with known exponents and dimensions.

Every special construction is checked against an independent oracle before it
is returned: w + 1/w for Chebyshev maps, the chord-tangent group law for the
elliptic doubling, pi o (g x g) = f o pi for symmetric squares.
"""

import json
import logging
import os
from dataclasses import dataclass
from math import comb
from typing import Optional, Tuple

import numpy as np

from greenlab.endomorphism import (
    evaluate_many,
    from_components,
    lift,
    map_from_dict,
    map_to_dict,
    monomial_exponents,
)
from greenlab.errors import ConfigError, DomainError, NumericalError
from greenlab.projective import fs_distances

logger = logging.getLogger(__name__)

ORACLE_POINTS = 500
ORACLE_SEED = 20231
CHEBYSHEV_TOLERANCE = 1e-10
DOUBLING_TOLERANCE = 1e-9
SEMICONJUGACY_TOLERANCE = 1e-9
COEFFICIENT_RESIDUAL = 1e-8
DISCRIMINANT_TOLERANCE = 1e-10

# Curve points too close to 2-torsion have an ill-conditioned tangent slope
MIN_ORDINATE = 1e-3
ORACLE_DISK = 2.0


@dataclass(frozen=True)
class Expected:
    lambdas: Optional[Tuple[float, ...]]
    dimension: Optional[float]
    lattes: bool
    notes: str = ""
    # (g2, g3) of the elliptic curve behind a Lattes map
    curve: Optional[Tuple[float, float]] = None

    def to_dict(self):
        return {
            "lambdas": None if self.lambdas is None else list(self.lambdas),
            "dimension": self.dimension,
            "lattes": self.lattes,
            "notes": self.notes,
            "curve": None if self.curve is None else list(self.curve),
        }

    @classmethod
    def from_dict(cls, data):
        lambdas = data.get("lambdas")
        return cls(
            lambdas=None if lambdas is None else tuple(float(l) for l in lambdas),
            dimension=data.get("dimension"),
            lattes=bool(data.get("lattes", False)),
            notes=str(data.get("notes", "")),
            curve=None if data.get("curve") is None else tuple(float(c) for c in data["curve"]),
        )


@dataclass(frozen=True, eq=False)
class ZooEntry:
    map: object
    expected: Expected

    def __post_init__(self):
        if self.expected.lattes:
            half_log_d = 0.5 * np.log(self.map.degree)
            lambdas = self.expected.lambdas
            if lambdas is None or len(lambdas) != self.map.dim or not np.allclose(lambdas, half_log_d):
                raise ConfigError(
                    "Lattes entry {} must expect every exponent at 1/2 log d".format(self.label)
                )

    @property
    def label(self):
        return self.map.label


def power_map(d, k=1):
    """[z_0^d : ... : z_k^d]."""
    if d < 2 or k not in (1, 2):
        raise DomainError("power maps need d >= 2 and k in (1, 2), got d={} k={}".format(d, k))

    components = []
    for i in range(k + 1):
        exponent = [0] * (k + 1)
        exponent[i] = d
        components.append({tuple(exponent): 1.0})

    f = from_components(components, label="power_{}_{}".format(d, k))
    return ZooEntry(
        f,
        Expected(
            lambdas=(float(np.log(d)),) * k,
            dimension=float(k),
            lattes=False,
            notes="mu is the Haar measure of the real torus |z_0| = ... = |z_k|",
        ),
    )


def chebyshev_coefficients(d):
    """Coefficients (highest degree first) of C_d with C_d(w + 1/w) = w^d + w^-d."""
    previous = np.array([2.0])
    current = np.array([1.0, 0.0])
    for _ in range(d - 1):
        previous, current = current, np.polysub(np.polymul([1.0, 0.0], current), previous)
    return current


def chebyshev(d):
    """Homogenized Chebyshev map z -> C_d(z); mu is the arcsine law on [-2, 2]."""
    if d < 2:
        raise DomainError("Chebyshev maps need d >= 2, got {}".format(d))

    coefficients = chebyshev_coefficients(d)

    angles = np.linspace(0.0, 2.0 * np.pi, 100, endpoint=False) + 0.1
    w = np.exp(1j * angles)
    residual = np.max(np.abs(np.polyval(coefficients, w + 1.0 / w) - (w ** d + w ** -d)))
    if residual > CHEBYSHEV_TOLERANCE:
        raise NumericalError("Chebyshev semiconjugacy residual {:.2e}".format(residual))

    numerator = {(d - m, m): c for m, c in enumerate(coefficients) if c != 0}
    f = from_components([numerator, {(0, d): 1.0}], label="chebyshev_{}".format(d))

    return ZooEntry(
        f,
        Expected(
            lambdas=(float(np.log(d)),),
            dimension=1.0,
            lattes=False,
            notes="semiconjugate to w -> w^{} by z = w + 1/w".format(d),
        ),
    )


def doubling_components(g2, g3):
    """x(2P) as a function of x(P) on y^2 = 4x^3 - g2 x - g3, homogenized in (x, w)."""
    # (x^2 + g2/4 w^2)^2 + 2 g3 x w^3
    numerator = {(4, 0): 1.0, (2, 2): g2 / 2.0, (1, 3): 2.0 * g3, (0, 4): g2 ** 2 / 16.0}
    # w (4x^3 - g2 x w^2 - g3 w^3)
    denominator = {(3, 1): 4.0, (1, 3): -g2, (0, 4): -g3}
    return numerator, denominator


def doubling_residual(f, g2, g3, count=ORACLE_POINTS, seed=ORACLE_SEED):
    """Largest relative gap between f(x(P)) and x(2P) computed by the
    chord-tangent law, over random points P of the curve."""
    rng = np.random.default_rng(seed)

    xs = []
    while len(xs) < count:
        radius = ORACLE_DISK * np.sqrt(rng.random(count))
        x = radius * np.exp(2j * np.pi * rng.random(count))
        y = np.sqrt(4 * x ** 3 - g2 * x - g3)
        xs.extend(x[np.abs(y) >= MIN_ORDINATE])
    x = np.array(xs[:count])
    y = np.sqrt(4 * x ** 3 - g2 * x - g3)

    slope = (12 * x ** 2 - g2) / (2 * y)
    doubled = slope ** 2 / 4 - 2 * x

    images = lift(f, np.stack([x, np.ones_like(x)], axis=1))
    mapped = images[:, 0] / images[:, 1]

    return float(np.max(np.abs(mapped - doubled) / np.maximum(1.0, np.abs(doubled))))


def lattes_p1_doubling(g2=4.0, g3=0.0):
    """The degree-4 Lattes map induced by P -> 2P on y^2 = 4x^3 - g2 x - g3."""
    discriminant = g2 ** 3 - 27 * g3 ** 2
    if abs(discriminant) <= DISCRIMINANT_TOLERANCE * max(abs(g2) ** 3, 27 * abs(g3) ** 2, 1.0):
        raise DomainError("the curve with g2={}, g3={} is singular".format(g2, g3))

    label = "lattes_doubling" if (g2, g3) == (4.0, 0.0) else "lattes_doubling_{:g}_{:g}".format(g2, g3)
    f = from_components(list(doubling_components(g2, g3)), label=label)

    residual = doubling_residual(f, g2, g3)
    if residual > DOUBLING_TOLERANCE:
        raise NumericalError("doubling map fails the chord-tangent check ({:.2e})".format(residual))
    logger.debug("doubling map for g2=%g g3=%g, commutation residual %.2e", g2, g3, residual)

    return ZooEntry(
        f,
        Expected(
            lambdas=(float(np.log(2.0)),),
            dimension=2.0,
            lattes=True,
            notes="elliptic doubling on y^2 = 4x^3 - {:g}x - {:g}".format(g2, g3),
            curve=(float(g2), float(g3)),
        ),
    )


def _symmetric_monomial_matrix(d):
    """Column m: the expansion of s_0^a s_1^b s_2^c (s = [ac : ad+bc : bd]) in
    the bihomogeneous basis a^i b^{d-i} c^j d^{d-j}, indexed i (d+1) + j."""
    exponents = monomial_exponents(2, d)
    matrix = np.zeros(((d + 1) ** 2, len(exponents)))

    for m, (alpha, beta, gamma) in enumerate(exponents):
        for t in range(beta + 1):
            i = alpha + t
            j = alpha + beta - t
            matrix[i * (d + 1) + j, m] += comb(beta, t)

    return exponents, matrix


def _by_power_of_first(row, d):
    """Base coefficients re-indexed by the exponent of the first variable."""
    coefficients = np.zeros(d + 1, dtype=complex)
    for m, c in enumerate(row):
        coefficients[d - m] = c
    return coefficients


def _pair_products(first, second):
    return np.stack(
        [
            first[..., 0] * second[..., 0],
            first[..., 0] * second[..., 1] + first[..., 1] * second[..., 0],
            first[..., 1] * second[..., 1],
        ],
        axis=-1,
    )


def semiconjugacy_residual(f, g, count=ORACLE_POINTS, seed=ORACLE_SEED):
    """max FS distance between pi(g(p), g(q)) and f(pi(p, q)) over random pairs."""
    rng = np.random.default_rng(seed)
    p = rng.standard_normal((count, 2)) + 1j * rng.standard_normal((count, 2))
    q = rng.standard_normal((count, 2)) + 1j * rng.standard_normal((count, 2))

    pairs = _pair_products(p, q)
    pairs /= np.linalg.norm(pairs, axis=1, keepdims=True)

    upstairs = _pair_products(evaluate_many(g, p), evaluate_many(g, q))
    upstairs /= np.linalg.norm(upstairs, axis=1, keepdims=True)

    return float(np.max(fs_distances(upstairs, evaluate_many(f, pairs))))


def ueda_sym2(entry):
    """The map of P^2 = Sym^2(P^1) induced by g x g, with topological degree d^2."""
    g = entry.map
    if g.dim != 1:
        raise DomainError("symmetric squares are built from maps of P^1")

    d = g.degree
    g0 = _by_power_of_first(g.coefficients[0], d)
    g1 = _by_power_of_first(g.coefficients[1], d)
    targets = [
        np.outer(g0, g0),
        np.outer(g0, g1) + np.outer(g1, g0),
        np.outer(g1, g1),
    ]

    exponents, matrix = _symmetric_monomial_matrix(d)
    components = []
    for target in targets:
        target = target.ravel()
        solution = np.linalg.lstsq(matrix, target, rcond=None)[0]
        residual = np.linalg.norm(matrix @ solution - target) / max(np.linalg.norm(target), 1.0)
        if residual > COEFFICIENT_RESIDUAL:
            raise NumericalError(
                "symmetric square of {} leaves a remainder {:.2e}".format(g.label, residual)
            )
        solution[np.abs(solution) < 1e-13] = 0.0
        components.append({tuple(e): c for e, c in zip(exponents, solution) if c != 0})

    f = from_components(components, label="ueda_" + g.label, construction="ueda_sym2", base_map=g)

    residual = semiconjugacy_residual(f, g)
    if residual > SEMICONJUGACY_TOLERANCE:
        raise NumericalError("symmetric square semiconjugacy residual {:.2e}".format(residual))

    expected = entry.expected
    return ZooEntry(
        f,
        Expected(
            lambdas=None if expected.lambdas is None else tuple(expected.lambdas) * 2,
            dimension=None if expected.dimension is None else 2.0 * expected.dimension,
            lattes=expected.lattes,
            notes="symmetric square of {}".format(g.label),
            curve=expected.curve,
        ),
    )


def perturbed_power_map(c=0.1):
    """[z^2 + c w^2 : w^2], a non-Lattes negative control."""
    f = from_components([{(2, 0): 1.0, (0, 2): c}, {(0, 2): 1.0}], label="perturbed_power_{:g}".format(c))
    return ZooEntry(
        f,
        Expected(lambdas=None, dimension=None, lattes=False, notes="z^2 + {:g}, a small perturbation of z^2".format(c)),
    )


def oracle_residual(entry):
    """(name, residual, tolerance) of the independent check behind a special
    construction, or None for maps built from plain formulas."""
    f = entry.map
    if f.construction == "ueda_sym2" and f.base_map is not None:
        return "semiconjugacy", semiconjugacy_residual(f, f.base_map), SEMICONJUGACY_TOLERANCE
    if entry.expected.curve is not None and f.dim == 1:
        g2, g3 = entry.expected.curve
        return "doubling", doubling_residual(f, g2, g3), DOUBLING_TOLERANCE
    return None


_REGISTRY = {
    "power_2_1": lambda: power_map(2, 1),
    "power_3_1": lambda: power_map(3, 1),
    "power_2_2": lambda: power_map(2, 2),
    "chebyshev_2": lambda: chebyshev(2),
    "chebyshev_3": lambda: chebyshev(3),
    "lattes_doubling": lambda: lattes_p1_doubling(4.0, 0.0),
    "ueda_power_2_1": lambda: ueda_sym2(power_map(2, 1)),
    "ueda_lattes_doubling": lambda: ueda_sym2(lattes_p1_doubling(4.0, 0.0)),
    "perturbed_power_0.1": lambda: perturbed_power_map(0.1),
}

ZOO_LABELS = tuple(_REGISTRY)


def zoo_entry(label):
    try:
        factory = _REGISTRY[label]
    except KeyError:
        raise ConfigError("unknown zoo label {!r}; known: {}".format(label, ", ".join(ZOO_LABELS)))
    return factory()


def save_entry(entry, root):
    """Write root/<label>/map.json and root/<label>/expected.json."""
    directory = os.path.join(root, entry.label)
    os.makedirs(directory, exist_ok=True)

    paths = []
    for name, payload in (("map.json", map_to_dict(entry.map)), ("expected.json", entry.expected.to_dict())):
        path = os.path.join(directory, name)
        with open(path, "w") as file:
            json.dump(payload, file, indent=2, sort_keys=True)
            file.write("\n")
        paths.append(path)

    return paths


def load_entry(directory):
    try:
        with open(os.path.join(directory, "map.json")) as file:
            definition = json.load(file)
        with open(os.path.join(directory, "expected.json")) as file:
            expected = json.load(file)
    except (OSError, json.JSONDecodeError) as error:
        raise ConfigError("cannot read zoo entry {}: {}".format(directory, error))

    return ZooEntry(map_from_dict(definition), Expected.from_dict(expected))
