"""Curvature of the free energy in the transport geometry.

The Hessian quadratic form on potentials has four contributions: a drift
part moving the mobility along the flow, the commutator with the generator,
a rate-derivative part, and a mobility-coupling part (the last two vanish
for measure-independent rates).  The curvature at a state is the smallest
generalized eigenvalue of (Hessian form, action form) on the non-constant
subspace; the global bound is its infimum over the simplex, estimated by
multistart local minimization at a ladder of interior margins.

Closed-form oracles: the two-state integrand (evaluated on a refining grid,
never through the eigen path) and the analytic bound for separable rates.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy.linalg import eigh
from scipy.optimize import minimize, minimize_scalar

from .backend import kernels
from .simplex import Potential, ProbabilityMeasure, as_vector
from .metric import laplacian, mobility_matrix, _masked_dlog
from .dynamics import rhs_vector

EIG_COND_LIMIT = 1e12
DEFAULT_MARGINS = (1e-2, 1e-3, 1e-4)
DEFAULT_STARTS = 16


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """Symmetric matrix acting on potentials modulo constants."""

    matrix: np.ndarray
    kernel_note: str = "contains constants"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def value(self, psi):
        psi = as_vector(psi)
        return float(psi @ self.matrix @ psi)

    @property
    def n(self):
        return self.matrix.shape[0]


def _pair_form_matrix(coeffs):
    """Matrix of psi -> 0.5 sum_{x,y} coeffs[x,y] (psi_y - psi_x)^2."""
    coeffs = 0.5 * (coeffs + coeffs.T)
    return np.diag(coeffs.sum(axis=1)) - coeffs


def assemble_A(triple, mu):
    """Action form: psi^T A psi = A(mu, psi); PSD, kernel = constants."""
    return QuadraticForm(laplacian(mobility_matrix(triple, mu)))


def hessian_terms(triple, mu):
    """The four matrices whose sum is the Hessian form.

    Order: drift of the mobility, generator commutator, rate-derivative
    part, mobility coupling.  For constant rates the last two are zero.
    """
    mu = as_vector(mu)
    n = mu.size
    q = triple.rates(mu)
    dq = triple.drates(mu)
    flux = mu[:, None] * q
    np.fill_diagonal(flux, 0.0)
    lam = kernels.logmean(flux, flux.T)
    lam = 0.5 * (lam + lam.T)
    lap = laplacian(lam)
    d1 = _masked_dlog(flux)
    d2 = d1.T  # symmetry of the mean swaps the partials across the edge
    h = mu @ q  # velocity of the flow at mu

    lam_drift = d1 * h[:, None] * q + d2 * h[None, :] * q.T
    term1 = 0.5 * _pair_form_matrix(lam_drift)

    term2 = -0.5 * (lap @ q + q.T @ lap)

    dqh = np.einsum("zxy,z->xy", dq, h)
    lam_rate = d1 * mu[:, None] * dqh + d2 * mu[None, :] * dqh.T
    term3 = 0.5 * _pair_form_matrix(lam_rate)

    # coupling[z, b]: contraction of dq against gradients, gauge killed by
    # the zero-sum rows of the Laplacian
    coupling = (np.einsum("zxb,x->zb", dq, mu)
                - mu[None, :] * dq.sum(axis=2))
    term4 = -0.5 * (coupling.T @ lap + lap @ coupling)

    return term1, term2, term3, term4


def assemble_B(triple, mu):
    """Hessian form of the free energy at mu as a quadratic form."""
    t1, t2, t3, t4 = hessian_terms(triple, mu)
    return QuadraticForm(t1 + t2 + t3 + t4)


def _zero_sum_basis(n):
    """Orthonormal basis of the mean-zero subspace (Helmert columns)."""
    basis = np.zeros((n, n - 1))
    for k in range(1, n):
        col = np.zeros(n)
        col[:k] = 1.0
        col[k] = -k
        basis[:, k - 1] = col / np.sqrt(k * (k + 1))
    return basis


def kappa_at(triple, mu):
    """Local curvature: smallest eigenvalue of the (Hessian, action) pencil
    restricted to non-constant potentials, with its minimizing potential."""
    mu = as_vector(mu)
    if np.min(mu) <= 0.0:
        raise ValueError("curvature is defined at interior states only")
    n = mu.size
    basis = _zero_sum_basis(n)
    a_mat = laplacian(mobility_matrix(triple, mu))
    a_red = basis.T @ a_mat @ basis
    cond = np.linalg.cond(a_red)
    if not np.isfinite(cond) or cond > EIG_COND_LIMIT:
        raise np.linalg.LinAlgError(
            f"action form is numerically singular at mu (cond={cond:.2e})")
    b_mat = assemble_B(triple, mu).matrix
    b_red = basis.T @ b_mat @ basis
    vals, vecs = eigh(b_red, a_red)
    psi = basis @ vecs[:, 0]
    psi = psi / np.linalg.norm(psi)
    return float(vals[0]), Potential(psi - psi.mean())


@dataclass
class CurvatureReport:
    """Estimated optimal curvature bound with its margin profile.

    ``certified`` is always False: this is a numerical estimate over the
    interior, not a proof, and the infimum may degrade toward the boundary
    (``still_decreasing`` flags a profile that has not stabilized at the
    smallest margin).
    """

    kappa_opt: float
    argmin_mu: ProbabilityMeasure
    argmin_psi: Potential
    margin_profile: list     # (epsilon, kappa_inf, argmin weights) tuples
    certified: bool
    still_decreasing: bool
    model: str

    def to_csv(self, path):
        n = self.argmin_mu.n
        header = ["epsilon", "kappa_inf"] + [f"argmin_mu_{i}" for i in range(n)]
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for eps, val, mu in self.margin_profile:
                fh.write(",".join(f"{v:.17g}" for v in (eps, val, *mu)) + "\n")
            fh.write(f"# kappa_opt,{self.kappa_opt:.17g},certified,"
                     f"{self.certified},still_decreasing,{self.still_decreasing}\n")

    def __str__(self):
        lines = [f"kappa_opt({self.model}) = {self.kappa_opt:.6f} "
                 f"(certified={self.certified})"]
        for eps, val, mu in self.margin_profile:
            lines.append(f"  margin {eps:8.1e}: inf kappa = {val: .6f} at "
                         + np.array2string(np.asarray(mu), precision=6))
        if self.still_decreasing:
            lines.append("  warning: profile still decreasing at the "
                         "smallest margin; boundary infimum possible")
        return "\n".join(lines)


def _margin_embed(z, eps, n):
    """Map softmax coordinates onto the simplex with min mass >= eps."""
    w = np.exp(z - z.max())
    mu = w / w.sum()
    return eps + (1.0 - n * eps) * mu


def _start_points(n, n_starts, rng):
    starts = [np.zeros(n)]
    for x in range(n):
        mu = np.full(n, 0.1 / n)
        mu[x] += 0.9
        starts.append(np.log(mu / mu.sum()))
    # latin hypercube in softmax coordinates for the remainder
    if len(starts) < n_starts:
        m = n_starts - len(starts)
        lhs = np.empty((m, n))
        for j in range(n):
            lhs[:, j] = (rng.permutation(m) + rng.uniform(0, 1, m)) / m
        starts.extend(4.0 * lhs - 2.0)
    return starts[:max(n_starts, 1)]


def kappa_opt(triple, margins=DEFAULT_MARGINS, n_starts=DEFAULT_STARTS,
              seed=0, xatol=1e-8, fatol=1e-10, maxiter=2000):
    """Minimize the local curvature over the simplex.

    Nelder-Mead multistart in softmax coordinates at each interior margin;
    the report carries the per-margin infima and the overall minimum.
    """
    n = triple.n
    rng = np.random.default_rng(seed)
    starts = _start_points(n, n_starts, rng)
    profile = []
    best = None
    for eps in sorted(margins, reverse=True):
        margin_best = None
        for z0 in starts:
            res = minimize(
                lambda z: kappa_at(triple, _margin_embed(z, eps, n))[0],
                z0, method="Nelder-Mead",
                options={"xatol": xatol, "fatol": fatol, "maxiter": maxiter})
            if margin_best is None or res.fun < margin_best[0]:
                margin_best = (float(res.fun), _margin_embed(res.x, eps, n))
        profile.append((eps, margin_best[0], margin_best[1]))
        if best is None or margin_best[0] < best[0]:
            best = margin_best
    kappa_min, mu_min = best
    _, psi_min = kappa_at(triple, mu_min)
    vals = [v for _, v, _ in profile]
    still_decreasing = len(vals) >= 2 and vals[-1] < vals[-2] - 1e-6
    return CurvatureReport(
        kappa_opt=kappa_min, argmin_mu=ProbabilityMeasure(mu_min),
        argmin_psi=psi_min, margin_profile=profile, certified=False,
        still_decreasing=still_decreasing, model=triple.name)


# ---------------------------------------------------------------------------
# Two-state closed form
# ---------------------------------------------------------------------------

def two_point_integrand(triple, u):
    """Closed-form curvature at mu = (u, 1-u) on a two-state space.

    Independent of the eigenvalue path: uses the jump rates, their
    skew derivatives and the mobility directly.
    """
    mu = np.array([u, 1.0 - u])
    q_mat = triple.rates(mu)
    dq = triple.drates(mu)
    p, qq = q_mat[0, 1], q_mat[1, 0]
    dp = dq[0, 0, 1] - dq[1, 0, 1]
    dqr = dq[1, 1, 0] - dq[0, 1, 0]
    lam = float(kernels.logmean(np.array(mu[0] * p), np.array(mu[1] * qq)))
    return (0.5 * (p + qq)
            + 0.5 * (mu[0] * dp + mu[1] * dqr)
            + 0.5 * lam * (1.0 / (mu[0] * mu[1]) + dp / p + dqr / qq))


def two_point_kappa(triple, grid_size=10_000):
    """Infimum of the closed-form integrand over (0, 1), giving the optimal
    two-state curvature bound; refines the best grid cell with a bounded
    scalar search."""
    if triple.n != 2:
        raise ValueError("closed-form curvature needs a two-state model")
    grid = (np.arange(grid_size) + 0.5) / grid_size
    vals = np.array([two_point_integrand(triple, u) for u in grid])
    k = int(np.argmin(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid_size - 1)]
    res = minimize_scalar(lambda u: two_point_integrand(triple, u),
                          bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return float(min(vals[k], res.fun))


# ---------------------------------------------------------------------------
# Separable-rate analytic bound
# ---------------------------------------------------------------------------

@dataclass
class SeparableBound:
    """Analytic curvature bound for complete-graph separable rates."""

    lam: float
    kappa_bound: float
    applicable: bool
    a_min: float
    a_max: float
    b_min: float
    b_max: float
    lip_a: float
    lip_b: float
    degree: int
    diagnostic: str = ""

    def __str__(self):
        head = (f"lambda = {self.lam:.6g}, kappa_bound = {self.kappa_bound:.6g}, "
                f"applicable = {self.applicable}")
        return head + (f" ({self.diagnostic})" if self.diagnostic else "")


def _poly_minmax(p):
    cands = [0.0, 1.0]
    dp = p.deriv()
    if dp.degree() >= 0 and np.any(dp.coef != 0.0):
        for r in dp.roots():
            if abs(r.imag) < 1e-12 and -1e-12 <= r.real <= 1.0 + 1e-12:
                cands.append(min(max(float(r.real), 0.0), 1.0))
    vals = p(np.array(cands))
    return float(vals.min()), float(vals.max())


def separable_bound(a_coeffs, b_coeffs, n):
    """Analytic curvature bound for rates b(mu_x) a(mu_y) on n states.

    Applicability requires strictly positive a, b on [0, 1] and the
    perturbation ratio lambda <= 1; the polynomial extrema and Lipschitz
    constants are computed exactly from derivative roots.
    """
    a = Polynomial(np.asarray(a_coeffs, dtype=np.float64))
    b = Polynomial(np.asarray(b_coeffs, dtype=np.float64))
    a_min, a_max = _poly_minmax(a)
    b_min, b_max = _poly_minmax(b)
    if a_min < 0.0 or b_min < 0.0:
        raise ValueError("separable rate polynomials must be nonnegative on [0,1]")
    da_min, da_max = _poly_minmax(a.deriv()) if a.degree() > 0 else (0.0, 0.0)
    db_min, db_max = _poly_minmax(b.deriv()) if b.degree() > 0 else (0.0, 0.0)
    lip_a = max(abs(da_min), abs(da_max))
    lip_b = max(abs(db_min), abs(db_max))
    d = n
    if a_min == 0.0 or b_min == 0.0:
        return SeparableBound(np.inf, -np.inf, False, a_min, a_max, b_min,
                              b_max, lip_a, lip_b, d,
                              diagnostic="rate polynomial vanishes on [0,1]; "
                                         "perturbation ratio undefined")
    lam = (2.0 * a_max * lip_b + a_max * lip_a) / (2.0 * a_min * b_min)
    kappa = d * (a_min * b_min
                 - (1.0 + lam) * a_max * b_max / 2.0
                 - 0.5 * a_max * (2.0 + b_max / b_min) * lip_b
                 - 0.5 * b_max * (1.0 + a_max / a_min) * lip_a)
    applicable = lam <= 1.0
    diag = "" if applicable else "perturbation ratio exceeds 1"
    return SeparableBound(lam, kappa, applicable, a_min, a_max, b_min, b_max,
                          lip_a, lip_b, d, diag)
