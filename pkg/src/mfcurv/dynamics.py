"""Evolution of the mass-transport dynamics mu' = mu Q(mu): integration,
free energy, dissipation, stationary points and decay diagnostics.

The integrator is an embedded Dormand-Prince 5(4) pair with a positivity
guard: any stage leaving the simplex rejects the step and halves it, and
accepted states are renormalized to unit mass.  The free energy
``F(mu) = sum mu log mu + U(mu)`` is a Lyapunov function of the flow; its
dissipation rate is the discrete Fisher information.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .backend import kernels
from .simplex import ProbabilityMeasure, TangentVector, as_vector

# Early-stop threshold on the sup norm of mu Q(mu).
STATIONARY_RTOL = 1e-12
# Acceptance thresholds for stationary points.
RESIDUAL_TOL = 1e-10
FISHER_TOL = 1e-9
DEDUP_TOL = 1e-6


class IntegrationError(RuntimeError):
    """Integrator failure; carries the last valid time and state."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class StationaryError(RuntimeError):
    pass


def rhs_vector(triple, mu):
    """(mu Q(mu))_y = sum_x mu_x Q_xy(mu); raw array version."""
    mu = as_vector(mu)
    return mu @ triple.rates(mu)


def rhs(triple, mu):
    """Right-hand side of the evolution as a zero-sum tangent vector."""
    return TangentVector(rhs_vector(triple, mu))


def free_energy(triple, mu):
    """F(mu) = sum_x mu_x log mu_x + U(mu), with 0 log 0 = 0."""
    mu = as_vector(mu)
    pos = mu > 0.0
    entropy = float(np.sum(mu[pos] * np.log(mu[pos])))
    return entropy + triple.interaction(mu)


def free_energy_gap(triple, mu, stationary):
    """F(mu) minus the minimum of F over the stationary set (must be >= 0)."""
    if stationary is None:
        raise StationaryError("free_energy_gap needs a computed StationarySet")
    return free_energy(triple, mu) - stationary.min_free_energy


def fisher_info(triple, mu):
    """Dissipation of F along the flow; +inf off the open simplex."""
    mu = as_vector(mu)
    if np.min(mu) <= 0.0:
        return np.inf
    flux = mu[:, None] * triple.rates(mu)
    np.fill_diagonal(flux, 0.0)
    return kernels.fisher_sum(flux)


def log_density(triple, mu):
    """log(mu / pi(mu)) at interior mu."""
    mu = as_vector(mu)
    return np.log(mu) - np.log(triple.local_equilibrium(mu))


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) with positivity guard
# ---------------------------------------------------------------------------

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_DP_A = [
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


@dataclass
class Trajectory:
    """Time-ordered states of one run, with enough data for dense output."""

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    model_id: str
    stationary_reached: bool = False

    @property
    def n(self):
        return self.states.shape[1]

    def final(self):
        return self.states[-1]

    def measures(self):
        return [ProbabilityMeasure(s) for s in self.states]

    def at(self, t):
        """Cubic Hermite dense output between accepted steps."""
        t = float(t)
        ts = self.times
        if t <= ts[0]:
            return self.states[0].copy()
        if t >= ts[-1]:
            return self.states[-1].copy()
        k = int(np.searchsorted(ts, t, side="right") - 1)
        h = ts[k + 1] - ts[k]
        s = (t - ts[k]) / h
        y0, y1 = self.states[k], self.states[k + 1]
        f0, f1 = self.derivs[k], self.derivs[k + 1]
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * y0 + h * h10 * f0 + h01 * y1 + h * h11 * f1

    def to_csv(self, triple, path):
        """Write t, mu_0..mu_{n-1}, F, I rows; floats with 17 significant digits."""
        header = (["t"] + [f"mu_{i}" for i in range(self.n)] + ["F", "I"])
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for t, mu in zip(self.times, self.states):
                f = free_energy(triple, mu)
                i = fisher_info(triple, mu)
                row = [t, *mu, f, i]
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def integrate(triple, mu0, t_max, tol=1e-9, max_steps=1_000_000):
    """Integrate the dynamics from mu0 up to t_max (or until stationary)."""
    y = as_vector(mu0).astype(np.float64).copy()
    if np.any(y < 0) or abs(y.sum() - 1.0) > 1e-10:
        raise ValueError("mu0 must lie on the probability simplex")
    y = y / y.sum()
    n = y.size

    def f(state):
        return state @ triple.rates(state)

    t = 0.0
    k1 = f(y)
    times, states, derivs = [t], [y.copy()], [k1.copy()]
    stationary = bool(np.max(np.abs(k1)) <= STATIONARY_RTOL)

    # initial step from the rhs scale
    scale = tol + tol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((k1 / scale) ** 2))
    h = min(t_max, 0.01 * d0 / d1 if d1 > 1e-12 else 1e-3)

    steps = 0
    while t < t_max and not stationary:
        if steps >= max_steps:
            raise IntegrationError("step budget exhausted", t, y)
        steps += 1
        h = min(h, t_max - t)
        if h < 1e-14 * max(1.0, t):
            raise IntegrationError("step size underflow near the boundary", t, y)

        ks = [k1]
        bad_stage = False
        for i, row in enumerate(_DP_A):
            yi = y + h * sum(r * k for r, k in zip(row, ks))
            if np.any(yi < -1e-14):
                bad_stage = True
                break
            ks.append(f(yi))
        if bad_stage:
            h *= 0.5
            continue

        y5 = y + h * sum(b * k for b, k in zip(_DP_B5, ks))
        if np.any(y5 < -1e-14):
            h *= 0.5
            continue
        k7 = f(y5)
        y4 = y + h * sum(b * k for b, k in zip(_DP_B4, ks + [k7]))
        scale = tol + tol * np.maximum(np.abs(y), np.abs(y5))
        err = np.sqrt(np.mean(((y5 - y4) / scale) ** 2))

        if err <= 1.0:
            t += h
            y = np.clip(y5, 0.0, None)
            y /= y.sum()
            k1 = f(y) if np.max(np.abs(y - y5)) > 0 else k7
            times.append(t)
            states.append(y.copy())
            derivs.append(k1.copy())
            if np.max(np.abs(k1)) <= STATIONARY_RTOL:
                stationary = True
        factor = 0.9 * (1.0 / err) ** 0.2 if err > 0 else 5.0
        h *= min(5.0, max(0.2, factor))

    return Trajectory(np.array(times), np.array(states), np.array(derivs),
                      model_id=triple.name, stationary_reached=stationary)


def dissipation_residual(traj, triple):
    """Max over checkpoints of |F(mu_t) - F(mu_0) + int_0^t I(mu_s) ds|.

    The integral uses adaptive quadrature on the dense output of each
    accepted step.  Requires a strictly interior trajectory.
    """
    if np.min(traj.states) <= 0.0:
        raise ValueError("dissipation residual needs an interior trajectory")
    f0 = free_energy(triple, traj.states[0])
    acc = 0.0
    worst = 0.0
    for k in range(len(traj.times) - 1):
        a, b = traj.times[k], traj.times[k + 1]
        val, _ = quad(lambda s: fisher_info(triple, traj.at(s)), a, b,
                      epsabs=1e-13, epsrel=1e-10, limit=200)
        acc += val
        fk = free_energy(triple, traj.states[k + 1])
        worst = max(worst, abs(fk - f0 + acc))
    return worst


# ---------------------------------------------------------------------------
# Stationary points
# ---------------------------------------------------------------------------

@dataclass
class StationarySet:
    """Deduplicated stationary points with residuals and energies."""

    points: list
    residuals: list
    fisher_values: list
    free_energies: list

    def __len__(self):
        return len(self.points)

    @property
    def global_min_index(self):
        return int(np.argmin(self.free_energies))

    @property
    def min_free_energy(self):
        return float(min(self.free_energies))

    def global_minimizer(self):
        return self.points[self.global_min_index]

    def magnetizations(self):
        """mu_0 - mu_1 per point (two-state convenience)."""
        return [float(p.weights[0] - p.weights[1]) for p in self.points]


def _newton_polish(triple, mu, iters=60):
    """Newton iteration on mu Q(mu) = 0 in n-1 free simplex coordinates."""
    n = mu.size
    y = mu.copy()
    for _ in range(iters):
        q = triple.rates(y)
        g = (y @ q)[:n - 1]
        res = np.max(np.abs(y @ q))
        if res <= 1e-14:
            break
        dq = triple.drates(y)
        # d(mu Q)_y / dmu_z along e_z - e_{n-1}
        jac_full = q.T + np.einsum("zxy,x->yz", dq, y)
        jac = (jac_full[:, :n - 1] - jac_full[:, [n - 1]])[:n - 1, :]
        try:
            step = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        for _ in range(30):
            cand = y.copy()
            cand[:n - 1] += lam * step
            cand[n - 1] = 1.0 - cand[:n - 1].sum()
            if np.all(cand > 0):
                new_res = np.max(np.abs(cand @ triple.rates(cand)))
                if new_res < res or new_res <= 1e-13:
                    y = cand
                    break
            lam *= 0.5
        else:
            break
    return y


def find_stationary(triple, n_starts=8, seed=0, fp_iters=400, damping=0.35):
    """Multistart search for fixed points of mu -> pi(mu).

    Damped fixed-point iteration followed by a Newton polish on the reduced
    system; accepted points have sup-norm residual <= 1e-10 and vanishing
    dissipation.  Reports all located points without claiming completeness.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    n = triple.n
    rng = np.random.default_rng(seed)
    starts = [np.full(n, 1.0 / n)]
    for x in range(min(n, max(0, n_starts - 1))):
        e = np.full(n, 0.1 / n)
        e[x] += 0.9
        starts.append(e / e.sum())
    while len(starts) < n_starts:
        starts.append(rng.dirichlet(np.ones(n)) * 0.98 + 0.02 / n)

    found = []
    for start in starts:
        y = start.copy()
        for _ in range(fp_iters):
            nxt = (1.0 - damping) * triple.local_equilibrium(y) + damping * y
            if np.max(np.abs(nxt - y)) <= 1e-13:
                y = nxt
                break
            y = nxt
        y = _newton_polish(triple, y)
        res = float(np.max(np.abs(rhs_vector(triple, y))))
        if res > RESIDUAL_TOL or np.min(y) <= 0.0:
            continue
        fish = fisher_info(triple, y)
        if fish > FISHER_TOL:
            continue
        if any(np.max(np.abs(y - p)) <= DEDUP_TOL for p, *_ in found):
            continue
        found.append((y, res, fish))

    if not found:
        raise StationaryError(
            f"no stationary point located for {triple.name} "
            f"from {n_starts} starts")
    found.sort(key=lambda item: free_energy(triple, item[0]))
    return StationarySet(
        points=[ProbabilityMeasure(y) for y, *_ in found],
        residuals=[r for _, r, _ in found],
        fisher_values=[f for *_, f in found],
        free_energies=[free_energy(triple, y) for y, *_ in found])
