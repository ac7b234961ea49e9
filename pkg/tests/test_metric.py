import numpy as np
import pytest
from scipy.integrate import quad

from mfcurv import dynamics as D
from mfcurv import metric as Mt
from mfcurv import models as M
from mfcurv.backend import kernels


@pytest.fixture(scope="module")
def lin():
    return M.two_point_linear()


@pytest.fixture(scope="module")
def cw_half():
    return M.curie_weiss(0.5)


def test_edge_weights_examples(lin):
    w = Mt.edge_weights(lin, [0.5, 0.5])
    assert w.values[0, 1] == pytest.approx(0.5, abs=1e-14)
    assert w.symmetry == "symmetric"

    w = Mt.edge_weights(lin, [0.75, 0.25])
    assert w.values[0, 1] == pytest.approx(0.5 / np.log(3.0), rel=1e-13)

    w = Mt.edge_weights(lin, [1.0, 0.0])
    assert np.max(np.abs(w.values)) == 0.0


def test_edge_weights_vanish_on_zero_mass_row():
    sep = M.build_separable(3, [1.0], [1.0])
    w = Mt.mobility_matrix(sep, [0.0, 0.4, 0.6])
    assert np.max(np.abs(w[0, :])) == 0.0
    assert np.max(np.abs(w[:, 0])) == 0.0
    assert w[1, 2] > 0.0


def test_action_examples(lin):
    assert Mt.action(lin, [0.5, 0.5], [3.0, 3.0]) == 0.0
    assert Mt.action(lin, [0.5, 0.5], [0.0, 1.0]) == pytest.approx(0.5)
    # quadratic in psi
    assert Mt.action(lin, [0.5, 0.5], [0.0, 2.0]) == pytest.approx(2.0)


def test_action_matches_fisher(cw_half):
    rng = np.random.default_rng(1)
    for _ in range(100):
        mu = rng.dirichlet([1, 1]) * 0.9 + 0.05
        val = Mt.action(cw_half, mu, -D.log_density(cw_half, mu))
        assert abs(val - D.fisher_info(cw_half, mu)) <= 1e-9


def test_solve_continuity_examples(lin):
    psi = Mt.solve_continuity(lin, [0.5, 0.5], [0.0, 0.0])
    assert np.max(np.abs(psi.values)) <= 1e-14

    psi = Mt.solve_continuity(lin, [0.5, 0.5], [-0.1, 0.1])
    assert np.allclose(psi.values, [-0.1, 0.1], atol=1e-13)


def test_solve_continuity_round_trip():
    sep = M.build_separable(6, [2.0, 1.0], [1.0])
    rng = np.random.default_rng(2)
    for _ in range(25):
        mu = rng.dirichlet(np.ones(6)) * 0.9 + 0.1 / 6
        sigma = rng.standard_normal(6)
        sigma -= sigma.mean()
        psi = Mt.solve_continuity(sep, mu, sigma)
        lap = Mt.laplacian(Mt.mobility_matrix(sep, mu))
        assert np.max(np.abs(lap @ psi.values - sigma)) <= 1e-10
        assert abs(psi.values.mean()) <= 1e-12


def test_solve_continuity_disconnected_raises():
    n = 4

    def rates(mu):
        q = np.zeros((n, n))
        q[0, 1] = q[1, 0] = 1.0
        q[2, 3] = q[3, 2] = 1.0
        np.fill_diagonal(q, -q.sum(axis=1))
        return q

    broken = M.build_tabulated(n, rates, lambda mu: np.zeros((n, n, n)),
                               lambda mu: np.zeros(n), lambda mu: 0.0,
                               name="disconnected")
    sigma = np.array([0.1, 0.1, -0.1, -0.1])
    with pytest.raises(Mt.ContinuityError):
        Mt.solve_continuity(broken, np.full(n, 0.25), sigma)


def test_distance_trivial_and_symmetry(lin):
    w, path = Mt.distance(lin, [0.6, 0.4], [0.6, 0.4], K=8)
    assert w == 0.0
    assert path.continuity_residual <= 1e-9

    rng = np.random.default_rng(3)
    for _ in range(3):
        u, v = rng.uniform(0.1, 0.9, 2)
        a, b = np.array([u, 1 - u]), np.array([v, 1 - v])
        w_ab, _ = Mt.distance(lin, a, b, K=16)
        w_ba, _ = Mt.distance(lin, b, a, K=16)
        assert abs(w_ab - w_ba) <= 1e-4


def test_distance_upper_bound_and_oracle(lin):
    # exact two-state value by 1-d quadrature of the inverse metric speed
    def exact(u0, u1):
        val, _ = quad(lambda m: 1.0 / np.sqrt(float(kernels.logmean(
            np.asarray(m), np.asarray(1.0 - m)))), u0, u1, epsabs=1e-12)
        return abs(val)

    w, path = Mt.distance(lin, [0.9, 0.1], [0.2, 0.8], K=64)
    ref = exact(0.9, 0.2)
    assert w >= ref - 1e-9
    assert w == pytest.approx(ref, rel=1e-3)
    # optimizing can only improve on the straight-line start
    straight = Mt._PathProblem(lin, np.array([0.9, 0.1]),
                               np.array([0.2, 0.8]), 64)
    z_lin = Mt._initial_paths(np.array([0.9, 0.1]), np.array([0.2, 0.8]),
                              64)[0]
    assert path.refined_action <= straight.refined_action(
        straight.full_path(z_lin)) + 1e-12


def test_distance_monotone_in_k(lin):
    pairs = [(np.array([0.9, 0.1]), np.array([0.2, 0.8])),
             (np.array([1.0, 0.0]), np.array([0.0, 1.0]))]
    for a, b in pairs:
        values = []
        for K in (16, 32, 64, 128):
            w, _ = Mt.distance(lin, a, b, K=K)
            values.append(w)
        diffs = np.diff(values)
        assert np.all(diffs <= 1e-6), values


def test_distance_clamps_boundary(lin):
    w, path = Mt.distance(lin, [1.0, 0.0], [0.0, 1.0], K=16)
    assert path.clamped
    assert np.min(path.steps[0]) > 0.0
    # K=16 within 1% of a much finer estimate
    w_fine, _ = Mt.distance(lin, [1.0, 0.0], [0.0, 1.0], K=256)
    assert abs(w - w_fine) / w_fine <= 0.01


def test_metric_derivative_consistency(cw_half):
    # W(mu, mu + eps sigma)/eps approaches sqrt(A(mu, psi_sigma))
    mu = np.array([0.55, 0.45])
    sigma = np.array([0.5, -0.5])
    psi = Mt.solve_continuity(cw_half, mu, sigma)
    ref = np.sqrt(Mt.action(cw_half, mu, psi))
    eps = 1e-3
    w, _ = Mt.distance(cw_half, mu, mu + eps * sigma, K=8)
    assert w / eps == pytest.approx(ref, rel=0.02)


def test_distance_triangle_inequality(cw_half):
    rng = np.random.default_rng(5)
    for _ in range(3):
        pts = [rng.dirichlet([1, 1]) * 0.9 + 0.05 for _ in range(3)]
        w02, _ = Mt.distance(cw_half, pts[0], pts[2], K=16)
        w01, _ = Mt.distance(cw_half, pts[0], pts[1], K=16)
        w12, _ = Mt.distance(cw_half, pts[1], pts[2], K=16)
        assert w02 <= w01 + w12 + 5e-3


def test_distance_bounds_dissipation_integral(cw_half):
    # W(mu_0, mu_s) <= int_0^s sqrt(I) dr along the flow
    traj = D.integrate(cw_half, [0.85, 0.15], 0.5, tol=1e-10)
    s = 0.5
    w, _ = Mt.distance(cw_half, traj.states[0], traj.at(s), K=32)
    val, _ = quad(lambda r: np.sqrt(D.fisher_info(cw_half, traj.at(r))),
                  0.0, s, epsabs=1e-11)
    assert w <= val + 1e-4


def test_geodesic_residual_shrinks(lin):
    p64 = Mt.geodesic(lin, [0.7, 0.3], [0.35, 0.65], K=64)
    p128 = Mt.geodesic(lin, [0.7, 0.3], [0.35, 0.65], K=128)
    assert p64.geodesic_residual <= 1e-3
    assert p128.geodesic_residual <= p64.geodesic_residual / 1.5


def test_geodesic_same_endpoints(lin):
    path = Mt.geodesic(lin, [0.5, 0.5], [0.5, 0.5], K=8)
    assert np.max(np.abs(path.potentials)) <= 1e-9
    assert path.geodesic_residual <= 1e-9


def test_geodesic_rejects_boundary(lin):
    with pytest.raises(ValueError):
        Mt.geodesic(lin, [1.0, 0.0], [0.5, 0.5], K=8)


def test_transport_path_invariants_and_csv(cw_half, tmp_path):
    w, path = Mt.distance(cw_half, [0.8, 0.2], [0.3, 0.7], K=16)
    # midpoint continuity equation exact by construction
    mids = path.midpoints()
    for k in range(path.K):
        lap = Mt.laplacian(Mt.mobility_matrix(cw_half, mids[k]))
        lhs = path.steps[k + 1] - path.steps[k]
        rhs = path.dt * lap @ path.potentials[k]
        assert np.max(np.abs(lhs - rhs)) <= 1e-9
    # per-step actions are dt * A(mid_k, psi_k) and sum to the total
    lap0 = Mt.laplacian(Mt.mobility_matrix(cw_half, mids[0]))
    assert path.step_actions[0] == pytest.approx(
        path.dt * float(path.potentials[0] @ lap0 @ path.potentials[0]),
        rel=1e-11)
    assert path.action_value == pytest.approx(
        float(np.sum(path.step_actions)), rel=1e-12)
    out = tmp_path / "path.csv"
    path.to_csv(out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "k,t,mu_0,mu_1,psi_0,psi_1,step_action"
    assert len(lines) == path.K + 2
