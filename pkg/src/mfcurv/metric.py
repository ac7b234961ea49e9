"""Discrete transport machinery: mobility weights, action, continuity
equation, the transport distance and geodesics.

The mobility of an edge is the logarithmic mean of the two directed fluxes,
``lam[x,y] = logmean(mu_x Q_xy, mu_y Q_yx)``; the action of a potential is
the Dirichlet form ``A(mu, psi) = psi^T L psi`` of the weighted graph
Laplacian ``L = diag(lam 1) - lam``.  The distance squared is the infimum
of ``int_0^1 A(mu_t, psi_t) dt`` over curves solving the continuity
equation ``mu' = -div(lam(mu) . grad(psi)) = L(mu) psi``.

Paths are discretized with K uniform steps; interior knots live in softmax
coordinates and per-step potentials are recovered from the midpoint
continuity equation, which makes the constraint exact by construction and
the action a smooth function of the knots.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import minimize

from .backend import kernels
from .simplex import EdgeField, Potential, SYMMETRIC, as_vector

# Interior blend applied to boundary endpoints before optimizing.
BOUNDARY_CLAMP = 1e-9
# Target sup norm of the projected gradient.
GRAD_TOL = 1e-8
DEFAULT_K = 32


class ContinuityError(RuntimeError):
    """Singular weighted-Laplacian system (disconnected mobility support)."""


class DistanceError(RuntimeError):
    """Path optimizer did not converge; carries the best path found."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


def mobility_matrix(triple, mu):
    """Raw n x n mobility weights at mu (zero diagonal, symmetric)."""
    mu = as_vector(mu)
    flux = mu[:, None] * triple.rates(mu)
    np.fill_diagonal(flux, 0.0)
    lam = kernels.logmean(flux, flux.T)
    return 0.5 * (lam + lam.T)


def edge_weights(triple, mu):
    """Mobility weights as a symmetric edge field."""
    return EdgeField(mobility_matrix(triple, mu), SYMMETRIC)


def laplacian(lam):
    """Weighted graph Laplacian diag(lam 1) - lam (positive semidefinite)."""
    lam = np.asarray(lam, dtype=np.float64)
    out = -lam.copy()
    idx = np.arange(lam.shape[-1])
    out[..., idx, idx] += lam.sum(axis=-1)
    return out


def action(triple, mu, psi):
    """A(mu, psi) = 0.5 sum_{x,y} (psi_y - psi_x)^2 lam[x,y]."""
    psi = as_vector(psi)
    lam = mobility_matrix(triple, mu)
    g = psi[None, :] - psi[:, None]
    return 0.5 * float(np.sum(g * g * lam))


def solve_continuity(triple, mu, sigma):
    """Recover the mean-zero potential with sigma = L(mu) psi.

    Unique modulo constants when the mobility support graph is connected;
    a residual above 1e-10 raises ContinuityError.
    """
    sigma = as_vector(sigma)
    lam = mobility_matrix(triple, mu)
    lap = laplacian(lam)
    psi = _solve_regularized(lap[None], sigma[None])[0]
    scale = max(1.0, float(np.max(np.abs(sigma))))
    if np.max(np.abs(lap @ psi - sigma)) > 1e-10 * scale:
        raise ContinuityError("mobility support is disconnected at mu")
    return Potential(psi - psi.mean())


def _solve_regularized(laps, rhs):
    """Batched solve of L psi = rhs on the zero-sum subspace.

    Adds a rank-one penalty along constants, which leaves zero-sum
    right-hand sides untouched and pins the mean of psi to zero.
    """
    k, n = rhs.shape
    alpha = np.trace(laps, axis1=1, axis2=2) / n
    alpha = np.maximum(alpha, 1e-300)
    systems = laps + (alpha[:, None, None] / n)
    try:
        return np.linalg.solve(systems, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise ContinuityError(f"singular continuity system: {exc}") from exc


def _masked_dlog(flux):
    """First partial of the mobility on edges, zero elsewhere."""
    rev = np.swapaxes(flux, -1, -2)
    mask = (flux > 0.0) & (rev > 0.0)
    a = np.where(mask, flux, 1.0)
    b = np.where(mask, rev, 1.0)
    d1, _ = kernels.dlogmean(a, b)
    return np.where(mask, d1, 0.0)


def action_state_derivative(triple, mu, psi):
    """Derivative of A(mu, psi) w.r.t. each mass coordinate (fixed psi).

    Defined up to an additive constant; callers project onto zero-sum or
    feed it through the softmax chain rule, both of which kill the gauge.
    """
    mu = as_vector(mu)
    psi = as_vector(psi)
    q = triple.rates(mu)
    dq = triple.drates(mu)
    flux = mu[:, None] * q
    np.fill_diagonal(flux, 0.0)
    d1 = _masked_dlog(flux)
    g = psi[None, :] - psi[:, None]
    return kernels.action_mu_derivative(mu, q, dq, d1, g * g)


def project_zero_sum(values):
    values = np.asarray(values, dtype=np.float64)
    return values - values.mean(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Transport paths
# ---------------------------------------------------------------------------

@dataclass
class TransportPath:
    """Discretized curve (mu_k, psi_k) solving the midpoint continuity
    equation mu_{k+1} - mu_k = dt * L(mid_k) psi_k exactly."""

    steps: np.ndarray           # (K+1, n) measures
    potentials: np.ndarray      # (K, n) mean-zero rate potentials
    dt: float
    action_value: float         # midpoint-rule action dt * sum A(mid_k, psi_k)
    refined_action: float       # Gauss-refined action of the same knot path
    step_actions: np.ndarray    # (K,) dt * A(mid_k, psi_k)
    continuity_residual: float
    min_knot_mass: float
    clamped: bool
    converged: bool
    geodesic_residual: float = None

    @property
    def K(self):
        return self.steps.shape[0] - 1

    @property
    def n(self):
        return self.steps.shape[1]

    @property
    def distance(self):
        """Upper-bound estimate: sqrt of the refined action of the path."""
        return float(np.sqrt(max(self.refined_action, 0.0)))

    def midpoints(self):
        return 0.5 * (self.steps[:-1] + self.steps[1:])

    def to_csv(self, path):
        """k, t, mu_*, psi_*, step_action rows (nan on the final row's psi)."""
        n = self.n
        header = (["k", "t"] + [f"mu_{i}" for i in range(n)]
                  + [f"psi_{i}" for i in range(n)] + ["step_action"])
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for k in range(self.K + 1):
                if k < self.K:
                    psi = self.potentials[k]
                    act = self.step_actions[k]
                else:
                    psi = np.full(n, np.nan)
                    act = np.nan
                row = [float(k), k * self.dt, *self.steps[k], *psi, act]
                fh.write(f"{int(row[0])}," +
                         ",".join(f"{v:.17g}" for v in row[1:]) + "\n")


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


# nodes/weights for the per-step refinement quadrature on [0, 1]
_GAUSS_S, _GAUSS_W = leggauss(8)
_GAUSS_S = 0.5 * (_GAUSS_S + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W


class _PathProblem:
    """Discrete action of a K-step path as a function of interior knots."""

    def __init__(self, triple, mu0, mu1, K):
        self.triple = triple
        self.mu0 = mu0
        self.mu1 = mu1
        self.K = K
        self.n = mu0.size
        self.dt = 1.0 / K

    def knots(self, z):
        return _softmax(z.reshape(self.K - 1, self.n))

    def full_path(self, z):
        return np.vstack([self.mu0[None], self.knots(z), self.mu1[None]])

    def _assemble(self, mus):
        mids = 0.5 * (mus[:-1] + mus[1:])
        diffs = mus[1:] - mus[:-1]
        q = self.triple.rates_many(mids)
        flux = mids[:, :, None] * q
        idx = np.arange(self.n)
        flux[:, idx, idx] = 0.0
        lam = kernels.logmean(flux, np.swapaxes(flux, 1, 2))
        lam = 0.5 * (lam + np.swapaxes(lam, 1, 2))
        laps = laplacian(lam)
        psi_t = _solve_regularized(laps, diffs)
        return mids, diffs, q, flux, laps, psi_t

    def value(self, z):
        mus = self.full_path(z)
        _, diffs, _, _, _, psi_t = self._assemble(mus)
        return self.K * float(np.sum(diffs * psi_t))

    def value_and_grad(self, z):
        mus = self.full_path(z)
        mids, diffs, q, flux, laps, psi_t = self._assemble(mus)
        energy = self.K * float(np.sum(diffs * psi_t))

        dq = self.triple.drates_many(mids)
        d1 = _masked_dlog(flux)
        dza = np.empty((self.K, self.n))
        for k in range(self.K):
            g = psi_t[k][None, :] - psi_t[k][:, None]
            dza[k] = kernels.action_mu_derivative(
                mids[k], q[k], dq[k], d1[k], g * g)

        knots = mus[1:-1]
        grad_mu = (2.0 * self.K * (psi_t[:-1] - psi_t[1:])
                   - 0.5 * self.K * (dza[:-1] + dza[1:]))
        dots = np.sum(knots * grad_mu, axis=1, keepdims=True)
        grad_z = knots * (grad_mu - dots)
        return energy, grad_z.ravel()

    def refined_action(self, mus):
        """Gauss quadrature of the exact action of the piecewise-linear path.

        The path is admissible for the continuum problem, so this value is an
        upper bound on the squared distance; it decreases as K doubles.
        """
        diffs = mus[1:] - mus[:-1]
        pts = ((1.0 - _GAUSS_S)[None, :, None] * mus[:-1, None, :]
               + _GAUSS_S[None, :, None] * mus[1:, None, :])
        flat = pts.reshape(-1, self.n)
        q = self.triple.rates_many(flat)
        flux = flat[:, :, None] * q
        idx = np.arange(self.n)
        flux[:, idx, idx] = 0.0
        lam = kernels.logmean(flux, np.swapaxes(flux, 1, 2))
        lam = 0.5 * (lam + np.swapaxes(lam, 1, 2))
        laps = laplacian(lam)
        rhs = np.repeat(diffs, _GAUSS_S.size, axis=0)
        psi = _solve_regularized(laps, rhs)
        vals = np.sum(rhs * psi, axis=1).reshape(self.K, _GAUSS_S.size)
        return self.K * float(np.sum(vals @ _GAUSS_W))

    def build_path(self, z, converged, clamped):
        mus = self.full_path(z)
        mids, diffs, _, _, laps, psi_t = self._assemble(mus)
        energy = self.K * float(np.sum(diffs * psi_t))
        residual = float(np.max(np.abs(
            np.einsum("kxy,ky->kx", laps, psi_t) - diffs)))
        psi_rate = project_zero_sum(psi_t) * self.K
        step_actions = self.K * np.sum(diffs * psi_t, axis=1)
        return TransportPath(
            steps=mus, potentials=psi_rate, dt=self.dt,
            action_value=energy, refined_action=self.refined_action(mus),
            step_actions=step_actions,
            continuity_residual=residual,
            min_knot_mass=float(mus.min()),
            clamped=clamped, converged=converged)


def _clamp_interior(mu):
    mu = as_vector(mu).astype(np.float64)
    if float(mu.min()) < 1e-12:
        n = mu.size
        return (1.0 - BOUNDARY_CLAMP) * mu + BOUNDARY_CLAMP / n, True
    return mu, False


def _initial_paths(mu0, mu1, K):
    t = np.linspace(0.0, 1.0, K + 1)[1:-1, None]
    linear = (1.0 - t) * mu0[None] + t * mu1[None]
    # entropic / heat-flow-like start: normalized geometric interpolation
    geo = np.exp((1.0 - t) * np.log(mu0)[None] + t * np.log(mu1)[None])
    geo /= geo.sum(axis=1, keepdims=True)
    return [np.log(linear).ravel(), np.log(geo).ravel()]


def distance(triple, mu0, mu1, K=DEFAULT_K, maxiter=4000, starts=None,
             strict=False):
    """Transport distance estimate and the optimized path.

    Returns an upper bound on the true distance that decreases (within
    solver tolerance) as K doubles.  With ``strict`` a failed line search
    raises DistanceError; otherwise the best path is returned with its
    ``converged`` flag cleared.
    """
    a, clamped0 = _clamp_interior(mu0)
    b, clamped1 = _clamp_interior(mu1)
    clamped = clamped0 or clamped1
    if K < 1:
        raise ValueError("K must be >= 1")
    problem = _PathProblem(triple, a, b, K)
    if K == 1:
        path = problem.build_path(np.empty(0), True, clamped)
        return path.distance, path

    best = None
    for z0 in (starts if starts is not None else _initial_paths(a, b, K)):
        res = minimize(problem.value_and_grad, z0, jac=True, method="L-BFGS-B",
                       options={"maxiter": maxiter, "maxfun": 4 * maxiter,
                                "ftol": 1e-16, "gtol": GRAD_TOL})
        gnorm = float(np.max(np.abs(res.jac)))
        ok = bool(res.success) or gnorm <= 1e-6
        if best is None or res.fun < best[0].fun:
            best = (res, ok)
    res, ok = best
    path = problem.build_path(res.x, ok, clamped)
    if strict and not ok:
        raise DistanceError(
            f"path optimizer stalled (|grad| = {np.max(np.abs(res.jac)):.2e})",
            path=path)
    return path.distance, path


def geodesic(triple, mu0, mu1, K=DEFAULT_K, maxiter=4000):
    """Optimized path plus the discrete geodesic-equation residual.

    The residual per interior step is the zero-sum projection of
    psi_{k+1} - psi_k + (dt/2) dA/dmu(mid_k, psi_k); it shrinks as K grows.
    """
    for mu in (mu0, mu1):
        if float(np.min(as_vector(mu))) <= 0.0:
            raise ValueError("geodesic endpoints must be interior")
    w, path = distance(triple, mu0, mu1, K=K, maxiter=maxiter)
    mids = path.midpoints()
    worst = 0.0
    for k in range(path.K - 1):
        dza = action_state_derivative(triple, mids[k], path.potentials[k])
        r = project_zero_sum(path.potentials[k + 1] - path.potentials[k]
                             + 0.5 * path.dt * dza)
        worst = max(worst, float(np.max(np.abs(r))))
    path.geodesic_residual = worst
    return path
