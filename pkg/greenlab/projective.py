"""Points of P^k (k = 1, 2), Fubini-Study geometry and the chart family tau_x.

Points are stored as unit-norm homogeneous coordinate vectors. The chart at x
is tau_x(u) = normalize(x + E u) where the columns of E complete x to an
orthonormal basis of C^{k+1}; its pullback of the Fubini-Study form is the
standard Hermitian form at 0.
"""

from dataclasses import dataclass

import numpy as np

from greenlab.errors import DomainError

NORM_TOLERANCE = 1e-12
EQUALITY_TOLERANCE = 1e-10

# Chart-coordinate radius inside which the FS metric distortion stays below 2
CHART_RADIUS = 0.5


@dataclass(frozen=True, eq=False)
class ProjPoint:
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=complex)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

        norm = np.linalg.norm(coords)
        if not np.isfinite(norm) or abs(norm - 1.0) > NORM_TOLERANCE:
            raise DomainError("ProjPoint coordinates must have unit norm, got {}".format(norm))

    @property
    def dim(self):
        return self.coords.shape[0] - 1

    def __eq__(self, other):
        if not isinstance(other, ProjPoint):
            return NotImplemented
        if other.coords.shape != self.coords.shape:
            return False
        return abs(np.vdot(self.coords, other.coords)) >= 1.0 - EQUALITY_TOLERANCE

    __hash__ = None

    def affine(self):
        """Affine coordinates z_i / z_k (infinite when z_k = 0)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coords[:-1] / self.coords[-1]


@dataclass(frozen=True)
class Chart:
    center: ProjPoint
    frame: np.ndarray
    radius_of_validity: float = CHART_RADIUS

    @property
    def dim(self):
        return self.frame.shape[1]


def normalize(v):
    """Return the ProjPoint represented by the nonzero vector `v`."""
    v = np.asarray(v, dtype=complex)
    norm = np.linalg.norm(v)

    if norm == 0.0 or not np.isfinite(norm):
        raise DomainError("cannot normalize vector {!r}".format(v))

    return ProjPoint(v / norm)


def chart_at(x, hint=None):
    """Deterministic chart centered at `x`.

    Gram-Schmidt runs over the columns of `hint` (a unitary matrix, the
    canonical basis by default), taken in order of increasing overlap with x
    so that near-parallel vectors come last and are dropped.
    """
    X = x.coords
    k = x.dim
    basis = np.eye(k + 1, dtype=complex) if hint is None else np.asarray(hint, dtype=complex)

    overlaps = np.abs(basis.conj().T @ X)
    order = np.argsort(overlaps, kind="stable")

    columns = []
    for index in order:
        v = basis[:, index] - np.vdot(X, basis[:, index]) * X
        for column in columns:
            v = v - np.vdot(column, v) * column
        # second pass keeps orthogonality at roundoff level
        v = v - np.vdot(X, v) * X
        for column in columns:
            v = v - np.vdot(column, v) * column

        norm = np.linalg.norm(v)
        if norm > 1e-8:
            columns.append(v / norm)
        if len(columns) == k:
            break

    frame = np.column_stack(columns)
    frame.setflags(write=False)
    return Chart(center=x, frame=frame)


def chart_apply(c, u):
    """tau_x(u) = normalize(center + frame u)."""
    u = np.asarray(u, dtype=complex)
    return normalize(c.center.coords + c.frame @ u)


def chart_apply_many(c, us):
    """Unit homogeneous coordinates of tau_x(u) for every row of `us`."""
    us = np.atleast_2d(np.asarray(us, dtype=complex))
    if not np.all(np.isfinite(us)):
        raise DomainError("chart coordinates must be finite")
    lifts = c.center.coords[None, :] + us @ c.frame.T
    return lifts / np.linalg.norm(lifts, axis=1, keepdims=True)


def chart_inverse(c, y):
    """Chart coordinates u with tau_x(u) = y.

    Defined away from the hyperplane orthogonal to the center; points there
    are sent to infinity.
    """
    Y = y.coords if isinstance(y, ProjPoint) else np.asarray(y, dtype=complex)
    return chart_inverse_many(c, Y[None, :])[0]


def chart_inverse_many(c, ys):
    ys = np.atleast_2d(np.asarray(ys, dtype=complex))
    denominators = ys @ c.center.coords.conj()
    with np.errstate(divide="ignore", invalid="ignore"):
        return (ys @ c.frame.conj()) / denominators[:, None]


def transition_differential(c_from, c_to):
    """Derivative at 0 of tau_from^{-1} o tau_to (a k x k matrix)."""
    X = c_from.center.coords
    Y = c_to.center.coords
    E_from = c_from.frame
    E_to = c_to.frame

    overlap = np.vdot(X, Y)
    if abs(overlap) < 1e-14:
        raise DomainError("chart centers are orthogonal, no common domain at 0")

    first = (E_from.conj().T @ E_to) / overlap
    second = np.outer(E_from.conj().T @ Y, X.conj() @ E_to) / overlap ** 2
    return first - second


def fs_distance(x, y):
    """Fubini-Study distance arccos |<x, y>| in [0, pi/2], computed stably."""
    return float(fs_distances(x.coords[None, :], y.coords[None, :])[0])


def fs_distances(xs, ys):
    """Row-wise FS distances between two arrays of unit homogeneous vectors."""
    xs = np.atleast_2d(xs)
    ys = np.atleast_2d(ys)
    inner = np.sum(xs.conj() * ys, axis=1)
    orthogonal = ys - inner[:, None] * xs
    return np.arctan2(np.linalg.norm(orthogonal, axis=1), np.abs(inner))


def pairwise_fs_distances(xs, ys):
    """Matrix of FS distances between rows of `xs` and rows of `ys`."""
    gram = np.abs(np.asarray(xs).conj() @ np.asarray(ys).T)
    np.clip(gram, 0.0, 1.0, out=gram)
    # accurate down to ~1e-7 rad, well below any correlation radius
    return np.arctan2(np.sqrt(np.clip(1.0 - gram ** 2, 0.0, None)), gram)


def pullback_gram(c, h=1e-6):
    """Finite-difference real Gram matrix of tau_x^* omega at 0.

    Directions are e_1, ..., e_k, i e_1, ..., i e_k; the result is the
    identity for every chart built by `chart_at`.
    """
    k = c.dim
    X = c.center.coords
    directions = np.concatenate([np.eye(k), 1j * np.eye(k)]).astype(complex)

    derivatives = []
    for w in directions:
        forward = chart_apply(c, h * w).coords
        backward = chart_apply(c, -h * w).coords
        D = (forward - backward) / (2 * h)
        derivatives.append(D - np.vdot(X, D) * X)

    D = np.array(derivatives)
    return np.real(D.conj() @ D.T)


def random_points(rng, count, k):
    """`count` points drawn from the unitary-invariant (FS volume) distribution."""
    raw = rng.standard_normal((count, k + 1)) + 1j * rng.standard_normal((count, k + 1))
    return [normalize(row) for row in raw]
