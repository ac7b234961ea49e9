"""Nonlinear Markov triples: rate families reversible w.r.t. a local Gibbs
measure, their first derivatives, and a model zoo.

A triple bundles evaluators for the rate matrix ``Q(mu)`` (rows summing to
zero), the derivative tensor ``dQ[z, x, y] = d Q_xy / d mu_z`` in one fixed
linear extension off the simplex, the local energy ``H(mu)``, the
interaction energy ``U(mu)`` with ``H = dU/dmu``, and the local equilibrium
``pi(mu) = exp(-H)/Z``.

Derivatives on the simplex are only defined up to additive constants in the
z-direction.  The stored ``dQ`` is one linear extension; every consumer in
this package contracts it exclusively against zero-sum vectors or uses
differences ``dQ[z] - dQ[w]``, so the arbitrary constant never enters.
"""

import json
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp

from .simplex import StateSpace, as_vector

GLAUBER = "glauber_sqrt"
METROPOLIS = "metropolis"

MEAN_FIELD_PAIR = "mean_field_pair"
SEPARABLE = "separable"
LINEAR = "linear"
TABULATED = "tabulated"

# Absolute tolerances used by the validator.
ALGEBRAIC_TOL = 1e-10
FD_TOL = 1e-6


class ModelError(ValueError):
    """Raised on malformed model parameters or spec files."""


class NonlinearMarkovTriple:
    """Finite state space with a measure-dependent reversible rate family."""

    def __init__(self, space, family, rates, drates, local_energy, interaction,
                 site_potential=None, rates_many=None, drates_many=None,
                 spec=None, name=None):
        self.space = space
        self.family = family
        self.name = name or family
        self.spec = spec
        self._rates = rates
        self._drates = drates
        self._local_energy = local_energy
        self._interaction = interaction
        self._site_potential = site_potential
        self._rates_many = rates_many
        self._drates_many = drates_many

    @property
    def n(self):
        return self.space.n

    def rates(self, mu):
        """Rate matrix Q(mu) with diagonal filled so rows sum to zero."""
        return self._rates(as_vector(mu))

    def drates(self, mu):
        """Tensor dQ[z, x, y]; diagonals in y filled so y-rows sum to zero."""
        return self._drates(as_vector(mu))

    def rates_many(self, mus):
        """Stacked rates for an (m, n) array of measures."""
        mus = np.asarray(mus, dtype=np.float64)
        if self._rates_many is not None:
            return self._rates_many(mus)
        return np.stack([self._rates(mu) for mu in mus])

    def drates_many(self, mus):
        mus = np.asarray(mus, dtype=np.float64)
        if self._drates_many is not None:
            return self._drates_many(mus)
        return np.stack([self._drates(mu) for mu in mus])

    def local_energy(self, mu):
        """H(mu) = dU/dmu in the stored linear extension."""
        return self._local_energy(as_vector(mu))

    def interaction(self, mu):
        """Interaction energy U(mu)."""
        return float(self._interaction(as_vector(mu)))

    def site_potential(self, mu):
        """Per-site potential K with U(mu) = sum_x mu_x K_x(mu)."""
        if self._site_potential is None:
            raise ModelError(f"model {self.name!r} does not expose K")
        return self._site_potential(as_vector(mu))

    def log_partition(self, mu):
        return float(logsumexp(-self.local_energy(mu)))

    def partition(self, mu):
        """Normalization Z(mu) of the local Gibbs measure."""
        return float(np.exp(self.log_partition(mu)))

    def local_equilibrium(self, mu):
        """pi(mu) = exp(-H(mu)) / Z(mu), evaluated stably."""
        h = -self.local_energy(mu)
        h = h - h.max()
        w = np.exp(h)
        return w / w.sum()

    def __repr__(self):
        return f"NonlinearMarkovTriple({self.name!r}, n={self.n})"


def _fill_diagonal_rates(q):
    np.einsum("...ii->...i", q)[...] = 0.0
    np.einsum("...ii->...i", q)[...] = -q.sum(axis=-1)
    return q


def _fill_diagonal_drates(dq):
    # dq[..., z, x, y]: zero the y-diagonal then set it to minus the row sum.
    np.einsum("...xx->...x", dq)[...] = 0.0
    np.einsum("...xx->...x", dq)[...] = -dq.sum(axis=-1)
    return dq


def _check_symmetric(mat, name):
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ModelError(f"{name} must be a square matrix")
    if np.max(np.abs(mat - mat.T)) > 1e-12:
        raise ModelError(f"{name} must be symmetric")
    return mat


def _check_connected(weights, name):
    adj = (np.asarray(weights) > 0).astype(np.int8)
    np.fill_diagonal(adj, 0)
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise ModelError(f"{name} support graph must be connected")


def build_mean_field_pair(V, W, beta, base_weights=None, rate_rule=GLAUBER,
                          labels=()):
    """Pair-interaction Gibbs model: H_x = V_x + 2 beta (W mu)_x.

    With ``glauber_sqrt`` the rates are ``w_xy sqrt(pi_y/pi_x)``; with
    ``metropolis`` they are ``w_xy min(1, pi_y/pi_x)``.  Both satisfy
    detailed balance w.r.t. pi(mu) for any symmetric base weights.
    """
    V = np.asarray(V, dtype=np.float64)
    n = V.size
    W = _check_symmetric(W, "W")
    if W.shape[0] != n:
        raise ModelError("V and W dimensions disagree")
    beta = float(beta)
    if beta < 0:
        raise ModelError("beta must be nonnegative")
    if base_weights is None:
        base_weights = 1.0 - np.eye(n)
    base = _check_symmetric(base_weights, "base_weights")
    if np.any(base < 0) or np.max(np.abs(np.diagonal(base))) > 0:
        raise ModelError("base_weights must be nonnegative with zero diagonal")
    _check_connected(base, "base_weights")
    if rate_rule not in (GLAUBER, METROPOLIS):
        raise ModelError(f"unknown rate rule {rate_rule!r}")

    def local_energy(mu):
        return V + 2.0 * beta * (W @ mu)

    def interaction(mu):
        return V @ mu + beta * mu @ W @ mu

    def site_potential(mu):
        return V + beta * (W @ mu)

    def rates(mu):
        h = local_energy(mu)
        if rate_rule == GLAUBER:
            q = base * np.exp(0.5 * (h[:, None] - h[None, :]))
        else:
            q = base * np.minimum(1.0, np.exp(h[:, None] - h[None, :]))
        return _fill_diagonal_rates(q)

    # dH_x/dmu_z is constant: C[x, z] = 2 beta W[x, z].
    C = 2.0 * beta * W

    def drates(mu):
        h = local_energy(mu)
        if rate_rule == GLAUBER:
            q = base * np.exp(0.5 * (h[:, None] - h[None, :]))
            dq = 0.5 * q[None, :, :] * (C.T[:, :, None] - C.T[:, None, :])
        else:
            ratio = np.exp(h[:, None] - h[None, :])
            q = base * np.minimum(1.0, ratio)
            # kink at pi_x = pi_y; midpoint convention on the tie set
            slope = np.where(ratio < 1.0, 1.0, np.where(ratio > 1.0, 0.0, 0.5))
            dq = (base * ratio * slope)[None, :, :] * \
                (C.T[:, :, None] - C.T[:, None, :])
        return _fill_diagonal_drates(dq)

    def rates_many(mus):
        h = V[None, :] + 2.0 * beta * mus @ W
        if rate_rule == GLAUBER:
            q = base[None, :, :] * np.exp(0.5 * (h[:, :, None] - h[:, None, :]))
        else:
            q = base[None, :, :] * np.minimum(
                1.0, np.exp(h[:, :, None] - h[:, None, :]))
        return _fill_diagonal_rates(q)

    def drates_many(mus):
        q = rates_many(mus)
        np.einsum("mxx->mx", q)[...] = 0.0
        if rate_rule == GLAUBER:
            dq = 0.5 * q[:, None, :, :] * \
                (C.T[None, :, :, None] - C.T[None, :, None, :])
        else:
            h = V[None, :] + 2.0 * beta * mus @ W
            ratio = np.exp(h[:, :, None] - h[:, None, :])
            slope = np.where(ratio < 1.0, 1.0, np.where(ratio > 1.0, 0.0, 0.5))
            dq = (base[None] * ratio * slope)[:, None, :, :] * \
                (C.T[None, :, :, None] - C.T[None, :, None, :])
        return _fill_diagonal_drates(dq)

    spec = ModelSpec(states=list(labels) if labels else [str(i) for i in range(n)],
                     family=MEAN_FIELD_PAIR, V=V.tolist(), W=W.tolist(),
                     beta=beta, base_weights=base.tolist(), rate_rule=rate_rule)
    return NonlinearMarkovTriple(
        StateSpace(n, tuple(spec.states)), MEAN_FIELD_PAIR,
        rates, drates, local_energy, interaction, site_potential,
        rates_many, drates_many, spec=spec,
        name=f"mean_field_pair(beta={beta:g},{rate_rule})")


def curie_weiss(beta, rate_rule=GLAUBER):
    """Two-state pair model with V = 0 and unit off-diagonal coupling."""
    off = np.array([[0.0, 1.0], [1.0, 0.0]])
    triple = build_mean_field_pair(np.zeros(2), off, beta, off, rate_rule)
    triple.name = f"curie_weiss(beta={beta:g},{rate_rule})"
    return triple


def _poly_range(p):
    """(min, max) of a polynomial on [0, 1] via critical points."""
    cands = [0.0, 1.0]
    dp = p.deriv()
    if dp.degree() >= 0 and np.any(dp.coef != 0.0):
        for r in dp.roots():
            if abs(r.imag) < 1e-12 and -1e-12 <= r.real <= 1 + 1e-12:
                cands.append(min(max(r.real, 0.0), 1.0))
    vals = p(np.array(cands))
    return float(vals.min()), float(vals.max())


def build_separable(n, a_coeffs, b_coeffs, labels=()):
    """Complete-graph rates Q_xy = b(mu_x) a(mu_y) for positive polynomials.

    The local equilibrium is pi_x = (a/b)(mu_x)/Z(mu); the interaction is
    U(mu) = sum_x u(mu_x) with u(r) = int_r^1 log(a/b) ds, evaluated by
    adaptive quadrature to 1e-12.
    """
    if n < 2:
        raise ModelError("separable model needs n >= 2")
    a = Polynomial(np.asarray(a_coeffs, dtype=np.float64))
    b = Polynomial(np.asarray(b_coeffs, dtype=np.float64))
    for p, pname in ((a, "a"), (b, "b")):
        lo, _ = _poly_range(p)
        if lo <= 0.0:
            raise ModelError(f"polynomial {pname} must be strictly positive on [0,1]")
    da, db = a.deriv(), b.deriv()
    off = 1.0 - np.eye(n)

    def log_ratio(r):
        return np.log(a(r)) - np.log(b(r))

    def u_single(r):
        val, _ = quad(log_ratio, r, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
        return val

    def rates(mu):
        q = off * (b(mu)[:, None] * a(mu)[None, :])
        return _fill_diagonal_rates(q)

    def drates(mu):
        n_ = mu.size
        av, bv = a(mu), b(mu)
        dav, dbv = da(mu), db(mu)
        dq = np.zeros((n_, n_, n_))
        idx = np.arange(n_)
        # d/dmu_z [b(mu_x) a(mu_y)] = delta_zx b' a + delta_zy b a'
        dq[idx, idx, :] = dbv[:, None] * av[None, :]
        dq[idx, :, idx] += bv[None, :] * dav[:, None]
        dq *= off[None, :, :]
        return _fill_diagonal_drates(dq)

    def local_energy(mu):
        return -log_ratio(mu)

    def interaction(mu):
        return sum(u_single(r) for r in mu)

    def site_potential(mu):
        # K_x = u(mu_x)/mu_x; display only, singular at mu_x = 0
        return np.array([u_single(r) / r for r in mu])

    def rates_many(mus):
        q = off[None] * (b(mus)[:, :, None] * a(mus)[:, None, :])
        return _fill_diagonal_rates(q)

    def drates_many(mus):
        m, n_ = mus.shape
        av, bv, dav, dbv = a(mus), b(mus), da(mus), db(mus)
        dq = np.zeros((m, n_, n_, n_))
        idx = np.arange(n_)
        dq[:, idx, idx, :] = dbv[:, :, None] * av[:, None, :]
        # advanced indexing pulls the paired axes to the front: (z, m, x)
        dq[:, idx, :, idx] += dav.T[:, :, None] * bv[None, :, :]
        dq *= off[None, None, :, :]
        return _fill_diagonal_drates(dq)

    spec = ModelSpec(states=list(labels) if labels else [str(i) for i in range(n)],
                     family=SEPARABLE, a_poly=list(map(float, a.coef)),
                     b_poly=list(map(float, b.coef)))
    return NonlinearMarkovTriple(
        StateSpace(n, tuple(spec.states)), SEPARABLE,
        rates, drates, local_energy, interaction, site_potential,
        rates_many, drates_many, spec=spec,
        name=f"separable(n={n})")


def build_linear(Q, pi, labels=()):
    """Constant irreducible rate matrix reversible w.r.t. pi."""
    Q = np.asarray(Q, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    n = pi.size
    if Q.shape != (n, n):
        raise ModelError("Q and pi dimensions disagree")
    if np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-10:
        raise ModelError("pi must be a strictly positive probability vector")
    offdiag = Q - np.diag(np.diagonal(Q))
    if np.any(offdiag < 0):
        raise ModelError("off-diagonal rates must be nonnegative")
    if np.max(np.abs(Q.sum(axis=1))) > 1e-10:
        raise ModelError("rows of Q must sum to zero")
    fluxes = pi[:, None] * Q
    if np.max(np.abs(fluxes - fluxes.T)) > 1e-10:
        raise ModelError("Q is not reversible with respect to pi")
    _check_connected(offdiag, "Q")

    K = -np.log(pi)

    def rates(mu):
        return Q.copy()

    def drates(mu):
        return np.zeros((n, n, n))

    spec = ModelSpec(states=list(labels) if labels else [str(i) for i in range(n)],
                     family=LINEAR, Q=Q.tolist(), pi=pi.tolist())
    return NonlinearMarkovTriple(
        StateSpace(n, tuple(spec.states)), LINEAR,
        rates, drates,
        local_energy=lambda mu: K,
        interaction=lambda mu: K @ mu,
        site_potential=lambda mu: K,
        rates_many=lambda mus: np.broadcast_to(Q, (mus.shape[0], n, n)).copy(),
        drates_many=lambda mus: np.zeros((mus.shape[0], n, n, n)),
        spec=spec, name=f"linear(n={n})")


def two_point_linear(p=1.0, q=1.0):
    """Two-state constant chain with jump rates p (0->1) and q (1->0)."""
    p, q = float(p), float(q)
    if p <= 0 or q <= 0:
        raise ModelError("rates must be positive")
    pi = np.array([q, p]) / (p + q)
    Q = np.array([[-p, p], [q, -q]])
    triple = build_linear(Q, pi)
    triple.name = f"two_point_linear(p={p:g},q={q:g})"
    return triple


def complete_uniform(n):
    """Independent particles on the complete graph: unit rates, uniform pi."""
    Q = _fill_diagonal_rates(1.0 - np.eye(n))
    triple = build_linear(Q, np.full(n, 1.0 / n))
    triple.name = f"complete_uniform(n={n})"
    return triple


def build_tabulated(n, rates, drates, local_energy, interaction,
                    site_potential=None, name="tabulated"):
    """Explicit callback model for tests; the caller supplies dQ itself."""
    return NonlinearMarkovTriple(
        StateSpace(n), TABULATED, lambda mu: np.asarray(rates(mu), float),
        lambda mu: np.asarray(drates(mu), float),
        lambda mu: np.asarray(local_energy(mu), float),
        interaction, site_potential, spec=None, name=name)


# ---------------------------------------------------------------------------
# Declarative model specs (JSON files)
# ---------------------------------------------------------------------------

_SPEC_FIELDS = ("states", "family", "V", "W", "beta", "base_weights",
                "rate_rule", "a_poly", "b_poly", "Q", "pi")


@dataclass
class ModelSpec:
    """Declarative description of a buildable model; round-trips via JSON.

    Polynomials are coefficient lists with the constant term first.
    """

    states: list
    family: str
    V: list = None
    W: list = None
    beta: float = None
    base_weights: list = None
    rate_rule: str = None
    a_poly: list = None
    b_poly: list = None
    Q: list = None
    pi: list = None

    def to_dict(self):
        out = {"states": self.states, "family": self.family}
        for key in _SPEC_FIELDS[2:]:
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out

    @staticmethod
    def from_dict(data):
        if not isinstance(data, dict):
            raise ModelError("model spec must be a JSON object")
        unknown = set(data) - set(_SPEC_FIELDS)
        if unknown:
            raise ModelError(f"unknown model-spec keys: {sorted(unknown)}")
        if "states" not in data or "family" not in data:
            raise ModelError("model spec needs 'states' and 'family'")
        return ModelSpec(**data)

    def build(self):
        labels = tuple(str(s) for s in self.states)
        n = len(labels)
        try:
            if self.family == MEAN_FIELD_PAIR:
                V = self.V if self.V is not None else [0.0] * n
                return build_mean_field_pair(
                    V, self.W, self.beta, self.base_weights,
                    self.rate_rule or GLAUBER, labels)
            if self.family == SEPARABLE:
                return build_separable(n, self.a_poly, self.b_poly, labels)
            if self.family == LINEAR:
                return build_linear(self.Q, self.pi, labels)
        except (TypeError, AttributeError) as exc:
            raise ModelError(f"incomplete {self.family} spec: {exc}") from exc
        raise ModelError(f"family {self.family!r} cannot be built from a file")

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @staticmethod
    def load(path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ModelError(f"invalid model file {path}: {exc}") from exc
        return ModelSpec.from_dict(data)


def load_model(path):
    """Build a triple from a JSON model-spec file."""
    return ModelSpec.load(path).build()


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    model: str
    n_samples: int
    max_row_sum: float
    min_offdiag: float
    max_detailed_balance: float
    irreducible: bool
    max_drates_fd_error: float
    max_energy_fd_error: float

    @property
    def algebra_ok(self):
        return (self.max_row_sum <= ALGEBRAIC_TOL
                and self.min_offdiag >= -ALGEBRAIC_TOL
                and self.max_detailed_balance <= ALGEBRAIC_TOL
                and self.irreducible)

    @property
    def derivatives_ok(self):
        return (self.max_drates_fd_error <= FD_TOL
                and self.max_energy_fd_error <= FD_TOL)

    @property
    def passed(self):
        return self.algebra_ok and self.derivatives_ok

    def __str__(self):
        lines = [
            f"model:                {self.model}",
            f"samples:              {self.n_samples}",
            f"max |row sum|:        {self.max_row_sum:.3e}",
            f"min off-diagonal:     {self.min_offdiag:.3e}",
            f"max DB residual:      {self.max_detailed_balance:.3e}",
            f"irreducible:          {self.irreducible}",
            f"max |FD(Q) - dQ|:     {self.max_drates_fd_error:.3e}",
            f"max |FD(U) - H|:      {self.max_energy_fd_error:.3e}",
            f"passed:               {self.passed}",
        ]
        return "\n".join(lines)


def _interior_samples(rng, n, n_samples, margin=0.05):
    raw = rng.dirichlet(np.ones(n), size=n_samples)
    return margin / n + (1.0 - margin) * raw


def validate(triple, n_samples=100, seed=0, fd_step=1e-6):
    """Check rate-matrix algebra, detailed balance and derivative consistency
    at randomly sampled interior measures."""
    rng = np.random.default_rng(seed)
    n = triple.n
    mus = _interior_samples(rng, n, n_samples)
    max_row = 0.0
    min_off = np.inf
    max_db = 0.0
    disconnected = 0
    max_dq = 0.0
    max_h = 0.0
    off_mask = ~np.eye(n, dtype=bool)
    for mu in mus:
        q = triple.rates(mu)
        pi = triple.local_equilibrium(mu)
        max_row = max(max_row, float(np.max(np.abs(q.sum(axis=1)))))
        min_off = min(min_off, float(q[off_mask].min()))
        db = pi[:, None] * q - (pi[:, None] * q).T
        max_db = max(max_db, float(np.max(np.abs(db))))
        adj = (q > 0).astype(np.int8)
        np.fill_diagonal(adj, 0)
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            disconnected += 1
        # central finite differences along a random zero-sum direction
        sigma = rng.standard_normal(n)
        sigma -= sigma.mean()
        sigma /= np.max(np.abs(sigma))
        fd_q = (triple.rates(mu + fd_step * sigma)
                - triple.rates(mu - fd_step * sigma)) / (2 * fd_step)
        dq_dir = np.einsum("zxy,z->xy", triple.drates(mu), sigma)
        max_dq = max(max_dq, float(np.max(np.abs(fd_q - dq_dir))))
        fd_u = (triple.interaction(mu + fd_step * sigma)
                - triple.interaction(mu - fd_step * sigma)) / (2 * fd_step)
        max_h = max(max_h, abs(fd_u - float(triple.local_energy(mu) @ sigma)))
    return ValidationReport(
        model=triple.name, n_samples=n_samples, max_row_sum=max_row,
        min_offdiag=min_off, max_detailed_balance=max_db,
        irreducible=(disconnected == 0), max_drates_fd_error=max_dq,
        max_energy_fd_error=max_h)
