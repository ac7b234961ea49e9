"""Numerical verifiers for the functional inequalities implied by a positive
curvature bound: modified log-Sobolev, transport-entropy, free-energy decay,
the energy-distance-dissipation inequality, distance contraction and the
evolution variational inequality.

Each checker samples states (or pairs), evaluates both sides, and reports
the worst slack ``rhs - lhs`` together with the witness input.  Distance
estimates are upper bounds of the true transport distance; the documented
tolerances absorb that gap, and every report records the K used.  Reports
are deterministic given the seed.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (find_stationary, fisher_info, free_energy, integrate)
from .metric import distance
from .simplex import as_vector

MLSI_TOL = 1e-9
ET_TOL = 5e-3
FWI_TOL = 1e-2
DECAY_TOL = 1e-8
DECAY_RATE_TOL = 1e-3
CONTRACTION_TOL = 1e-2
EVI_TOL = 5e-2

DEFAULT_MARGIN = 1e-4


@dataclass
class CheckReport:
    """Outcome of one inequality sweep; passed iff worst_slack >= -tol."""

    name: str
    n_samples: int
    worst_slack: float
    worst_case_input: object
    tol: float
    rows: list = field(default_factory=list)   # (sample_id, lhs, rhs, slack, ok)
    details: dict = field(default_factory=dict)
    forced_fail: bool = False

    @property
    def passed(self):
        return bool(self.worst_slack >= -self.tol) and not self.forced_fail

    def summary(self):
        return {
            "name": self.name,
            "n_samples": self.n_samples,
            "worst_slack": self.worst_slack,
            "tol": self.tol,
            "passed": self.passed,
            **self.details,
        }

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("sample_id,lhs,rhs,slack,passed\n")
            for sid, lhs, rhs, slack, ok in self.rows:
                fh.write(f"{sid},{lhs:.17g},{rhs:.17g},{slack:.17g},{ok}\n")
            fh.write("# " + json.dumps(self.summary(), default=str) + "\n")

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        out = (f"{self.name}: {status} (worst slack {self.worst_slack:.3e}, "
               f"tol {self.tol:.0e}, {self.n_samples} samples)")
        if not self.passed:
            out += f"\n  witness: {self.worst_case_input}"
        return out


def dirichlet_sampler(alpha=1.0, margin=DEFAULT_MARGIN):
    """Sampler of interior states: Dirichlet(alpha) resampled until every
    coordinate clears the margin."""

    def sample(rng, count, n):
        out = np.empty((count, n))
        got = 0
        while got < count:
            cand = rng.dirichlet(np.full(n, alpha), size=count - got)
            keep = cand[np.min(cand, axis=1) >= margin]
            out[got:got + keep.shape[0]] = keep
            got += keep.shape[0]
        return out

    return sample


def _resolve(sampler):
    return sampler if sampler is not None else dirichlet_sampler()


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _stationary(triple, stationary, seed=0):
    if stationary is None:
        stationary = find_stationary(triple, n_starts=8, seed=seed)
    return stationary


def _finish(name, rows, inputs, tol, n_samples, details):
    slacks = [r[3] for r in rows]
    worst = int(np.argmin(slacks))
    return CheckReport(
        name=name, n_samples=n_samples, worst_slack=float(slacks[worst]),
        worst_case_input=inputs[worst], tol=tol, rows=rows, details=details)


def check_mlsi(triple, lam, n_samples=1000, seed=0, sampler=None,
               stationary=None, tol=MLSI_TOL):
    """Free-energy gap bounded by the dissipation: F_*(mu) <= I(mu)/(2 lam)."""
    if lam <= 0:
        raise ValueError("the log-Sobolev check needs a positive constant")
    stationary = _stationary(triple, stationary)
    f_min = stationary.min_free_energy
    rng = np.random.default_rng(seed)
    mus = _resolve(sampler)(rng, n_samples, triple.n)
    rows = []
    for i, mu in enumerate(mus):
        lhs = free_energy(triple, mu) - f_min
        rhs = fisher_info(triple, mu) / (2.0 * lam)
        slack = rhs - lhs
        rows.append((i, lhs, rhs, slack, slack >= -tol))
    return _finish("mlsi", rows, list(mus), tol, n_samples,
                   {"lambda": lam, "stationary_points": len(stationary)})


def check_et(triple, lam, n_samples=50, seed=0, K=32, sampler=None,
             stationary=None, tol=ET_TOL, threads=1):
    """Transport-entropy bound: W(mu, pi*) <= sqrt(2 F_*(mu) / lam)."""
    if lam <= 0:
        raise ValueError("the transport-entropy check needs a positive constant")
    stationary = _stationary(triple, stationary)
    if len(stationary) != 1:
        raise RuntimeError(
            "transport-entropy check requires a unique stationary point; "
            f"found {len(stationary)}")
    pi_star = stationary.points[0].weights
    f_min = stationary.min_free_energy
    rng = np.random.default_rng(seed)
    mus = _resolve(sampler)(rng, n_samples, triple.n)

    def one(arg):
        i, mu = arg
        w, _ = distance(triple, mu, pi_star, K=K)
        rhs = float(np.sqrt(2.0 * max(free_energy(triple, mu) - f_min, 0.0)
                            / lam))
        slack = rhs - w
        return (i, w, rhs, slack, slack >= -tol)

    rows = _map(one, list(enumerate(mus)), threads)
    return _finish("et", rows, list(mus), tol, n_samples,
                   {"lambda": lam, "K": K})


def check_fwi(triple, kappa, n_samples=50, seed=0, K=32, sampler=None,
              tol=FWI_TOL, threads=1):
    """F(mu) <= F(nu) + W(mu,nu) sqrt(I(mu)) - kappa/2 W(mu,nu)^2.

    The middle term uses the K-step upper bound; for positive kappa the
    quadratic term is evaluated at 2K so its overestimate stays inside tol.
    """
    rng = np.random.default_rng(seed)
    sample = _resolve(sampler)
    mus = sample(rng, n_samples, triple.n)
    nus = sample(rng, n_samples, triple.n)

    def one(arg):
        i, mu, nu = arg
        w_mid, _ = distance(triple, mu, nu, K=K)
        if kappa > 0:
            w_quad, _ = distance(triple, mu, nu, K=2 * K)
        else:
            w_quad = w_mid
        lhs = free_energy(triple, mu)
        rhs = (free_energy(triple, nu)
               + w_mid * np.sqrt(fisher_info(triple, mu))
               - 0.5 * kappa * w_quad ** 2)
        slack = rhs - lhs
        return (i, lhs, rhs, slack, slack >= -tol)

    rows = _map(one, [(i, m, n_) for i, (m, n_) in enumerate(zip(mus, nus))],
                threads)
    return _finish("fwi", rows, list(zip(mus, nus)), tol, n_samples,
                   {"kappa": kappa, "K": K})


def check_decay(triple, lam, n_samples=20, T=3.0, seed=0, n_checkpoints=20,
                sampler=None, stationary=None, tol=DECAY_TOL,
                rate_tol=DECAY_RATE_TOL, int_tol=1e-9):
    """Exponential decay F_*(mu_t) <= exp(-2 lam t) F_*(mu_0) along the flow,
    plus the empirical decay rate at the horizon."""
    if lam <= 0:
        raise ValueError("the decay check needs a positive rate")
    stationary = _stationary(triple, stationary)
    f_min = stationary.min_free_energy
    rng = np.random.default_rng(seed)
    mus = _resolve(sampler)(rng, n_samples, triple.n)
    checkpoints = np.linspace(0.0, T, n_checkpoints + 1)[1:]
    rows = []
    inputs = []
    rates_ok = True
    for i, mu0 in enumerate(mus):
        traj = integrate(triple, mu0, T, tol=int_tol)
        gap0 = free_energy(triple, mu0) - f_min
        for t in checkpoints:
            gap_t = free_energy(triple, traj.at(t)) - f_min
            rhs = np.exp(-2.0 * lam * t) * gap0
            slack = rhs - gap_t
            rows.append((i, gap_t, rhs, slack, slack >= -tol))
            inputs.append((mu0, t))
        gap_T = free_energy(triple, traj.at(T)) - f_min
        if gap_T > 1e-13 and gap0 > 1e-13:
            rate = -np.log(gap_T / gap0) / T
            if rate < 2.0 * lam - rate_tol:
                rates_ok = False
    report = _finish("decay", rows, inputs, tol, n_samples,
                     {"lambda": lam, "T": T, "empirical_rate_ok": rates_ok,
                      "rate_tol": rate_tol})
    report.forced_fail = not rates_ok
    return report


def check_contraction(triple, kappa, n_samples=10, T=1.0, seed=0, K=32,
                      sampler=None, tol=CONTRACTION_TOL, int_tol=1e-9,
                      threads=1):
    """Distance contraction between two solutions:
    W(mu1_t, mu2_t) <= exp(-kappa t) W(mu1_0, mu2_0).

    Both sides are distance estimates (upper bounds); the right-hand side
    uses a 2K evaluation at time zero so the comparison is not biased in
    the passing direction.
    """
    rng = np.random.default_rng(seed)
    sample = _resolve(sampler)
    starts1 = sample(rng, n_samples, triple.n)
    starts2 = sample(rng, n_samples, triple.n)
    times = [0.0, T / 4.0, T / 2.0, T]

    def one(arg):
        i, a0, b0 = arg
        traj_a = integrate(triple, a0, T, tol=int_tol)
        traj_b = integrate(triple, b0, T, tol=int_tol)
        w0_fine, _ = distance(triple, a0, b0, K=2 * K)
        out = []
        for t in times:
            w_t, _ = distance(triple, traj_a.at(t), traj_b.at(t), K=K)
            rhs = np.exp(-kappa * t) * w0_fine
            slack = rhs - w_t
            out.append(((i, t), w_t, rhs, slack, slack >= -tol))
        return out

    nested = _map(one, [(i, a, b) for i, (a, b) in
                        enumerate(zip(starts1, starts2))], threads)
    rows = [r for chunk in nested for r in chunk]
    inputs = [(starts1[r[0][0]], starts2[r[0][0]], r[0][1]) for r in rows]
    rows = [(f"{sid[0]}@t={sid[1]:g}", lhs, rhs, slack, ok)
            for (sid, lhs, rhs, slack, ok) in rows]
    report = _finish("contraction", rows, inputs, tol, n_samples,
                     {"kappa": kappa, "T": T, "K": K,
                      "note": "both sides are upper-bound estimates; "
                              "rhs uses the finer 2K value at t=0"})
    return report


def check_evi(triple, kappa, n_samples=30, seed=0, K=32, sampler=None,
              steps=(1e-2, 1e-3), tol=EVI_TOL, int_tol=1e-9, threads=1):
    """Evolution variational inequality along the flow started at mu:
    0.5 d+/dt W(mu_t, nu)^2 + kappa/2 W(mu, nu)^2 <= F(nu) - F(mu).

    The right derivative is a forward difference at each h in ``steps``;
    the verdict uses the smallest h, all rows are reported.
    """
    rng = np.random.default_rng(seed)
    sample = _resolve(sampler)
    mus = sample(rng, n_samples, triple.n)
    nus = sample(rng, n_samples, triple.n)
    h_fine = min(steps)

    def one(arg):
        i, mu, nu = arg
        w0, _ = distance(triple, mu, nu, K=K)
        gap = free_energy(triple, nu) - free_energy(triple, mu)
        out = []
        for h in steps:
            traj = integrate(triple, mu, h, tol=int_tol)
            w_h, _ = distance(triple, traj.final(), nu, K=K)
            dplus = (w_h ** 2 - w0 ** 2) / (2.0 * h)
            lhs = dplus + 0.5 * kappa * w0 ** 2
            slack = gap - lhs
            out.append(((i, h), lhs, gap, slack, slack >= -tol))
        return out

    nested = _map(one, [(i, m, n_) for i, (m, n_) in
                        enumerate(zip(mus, nus))], threads)
    rows = [r for chunk in nested for r in chunk]
    fine_rows = [r for r in rows if r[0][1] == h_fine]
    slacks = [r[3] for r in fine_rows]
    worst = int(np.argmin(slacks))
    rows = [(f"{sid[0]}@h={sid[1]:g}", lhs, rhs, slack, ok)
            for (sid, lhs, rhs, slack, ok) in rows]
    return CheckReport(
        name="evi", n_samples=n_samples, worst_slack=float(slacks[worst]),
        worst_case_input=(mus[fine_rows[worst][0][0]],
                          nus[fine_rows[worst][0][0]]),
        tol=tol, rows=rows,
        details={"kappa": kappa, "K": K, "steps": list(steps),
                 "note": "forward-difference derivative; verdict at the "
                         "smallest step"})
