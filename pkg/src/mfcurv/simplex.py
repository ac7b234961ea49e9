"""Finite-state-space calculus: measures, potentials, edge fields.

Conventions: the discrete gradient of a potential is
``grad(psi)[x, y] = psi_y - psi_x``, the divergence of an edge field is
``div(Psi)[x] = 0.5 * sum_y (Psi_xy - Psi_yx)``, and the inner products are
``<psi, phi> = sum_x psi_x phi_x`` on vertices and
``<Psi, Phi> = 0.5 * sum_{x,y} Psi_xy Phi_xy`` on edges.  Integration by
parts ``<psi, div(Phi)> = -<grad(psi), Phi>`` holds exactly.

All types are immutable values; all operations are pure.
"""

from dataclasses import dataclass, field

import numpy as np

# Construction-time tolerance for mass / zero-sum / symmetry checks.
SUM_TOL = 1e-12
# Tolerance for summation identities (integration by parts, gradient kernel).
IDENTITY_TOL = 1e-10


def _frozen(arr, dtype=np.float64):
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class StateSpace:
    """A finite set of n >= 2 states with unique labels."""

    n: int
    labels: tuple = ()

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"state space needs n >= 2, got {self.n}")
        labels = tuple(self.labels) if self.labels else tuple(
            str(i) for i in range(self.n))
        if len(labels) != self.n:
            raise ValueError("number of labels must match n")
        if len(set(labels)) != self.n:
            raise ValueError("labels must be unique")
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True, eq=False)
class ProbabilityMeasure:
    """A point of the probability simplex over n states."""

    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or w.size < 2:
            raise ValueError("weights must be a vector of length >= 2")
        if np.any(w < -SUM_TOL):
            raise ValueError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > SUM_TOL:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.weights.size

    def is_interior(self, margin):
        """Membership in the open simplex with the given positive margin."""
        if margin <= 0.0:
            raise ValueError("margin must be positive")
        return bool(np.all(self.weights >= margin))

    @staticmethod
    def uniform(n):
        return ProbabilityMeasure(np.full(n, 1.0 / n))


@dataclass(frozen=True, eq=False)
class Potential:
    """A function on states; equality is modulo additive constants."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 1:
            raise ValueError("values must be a vector")
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.size

    def canonical(self):
        """Mean-zero representative of the equivalence class."""
        return self.values - self.values.mean()

    def equals(self, other, tol=SUM_TOL):
        other_values = as_vector(other)
        if other_values.size != self.n:
            return False
        diff = self.canonical() - (other_values - other_values.mean())
        return bool(np.max(np.abs(diff)) <= tol)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A zero-sum direction along the simplex."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 1:
            raise ValueError("values must be a vector")
        if abs(float(v.sum())) > SUM_TOL * max(1.0, float(np.abs(v).max(initial=0.0))):
            raise ValueError(f"components must sum to 0, got {v.sum()!r}")
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.size


SYMMETRIC = "symmetric"
ANTISYMMETRIC = "antisymmetric"
NONE = "none"


@dataclass(frozen=True, eq=False)
class EdgeField:
    """An n x n array indexed by ordered state pairs, zero on the diagonal."""

    values: np.ndarray
    symmetry: str = NONE

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("values must be a square matrix")
        if np.max(np.abs(np.diagonal(v)), initial=0.0) > SUM_TOL:
            raise ValueError("diagonal entries must vanish")
        if self.symmetry == SYMMETRIC:
            if np.max(np.abs(v - v.T)) > SUM_TOL:
                raise ValueError("field is not symmetric")
        elif self.symmetry == ANTISYMMETRIC:
            if np.max(np.abs(v + v.T)) > SUM_TOL:
                raise ValueError("field is not antisymmetric")
        elif self.symmetry != NONE:
            raise ValueError(f"unknown symmetry tag {self.symmetry!r}")
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.shape[0]


def as_vector(x):
    """Accept a Potential/TangentVector/ProbabilityMeasure or a raw vector."""
    if isinstance(x, (Potential, TangentVector)):
        return x.values
    if isinstance(x, ProbabilityMeasure):
        return x.weights
    return np.asarray(x, dtype=np.float64)


def as_matrix(x):
    if isinstance(x, EdgeField):
        return x.values
    return np.asarray(x, dtype=np.float64)


def gradient_matrix(psi):
    """Raw n x n discrete gradient, grad[x, y] = psi_y - psi_x."""
    v = as_vector(psi)
    return v[None, :] - v[:, None]


def gradient(psi):
    """Discrete gradient of a potential as an antisymmetric edge field."""
    return EdgeField(gradient_matrix(psi), ANTISYMMETRIC)


def divergence_vector(Psi):
    m = as_matrix(Psi)
    return 0.5 * (m.sum(axis=1) - m.sum(axis=0))


def divergence(Psi):
    """Discrete divergence of an edge field; components sum to zero."""
    return TangentVector(divergence_vector(Psi))


def vertex_inner(phi, psi):
    """Euclidean inner product of two potentials."""
    a, b = as_vector(phi), as_vector(psi)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    return float(a @ b)


def edge_inner(Phi, Psi):
    """Half the entrywise inner product of two edge fields."""
    a, b = as_matrix(Phi), as_matrix(Psi)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    return 0.5 * float(np.sum(a * b))
