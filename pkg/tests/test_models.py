import json

import numpy as np
import pytest

from mfcurv import models as M
from mfcurv.models import ModelError


def random_pair_model(rng, n, beta=0.6, rate_rule=M.GLAUBER):
    w = rng.uniform(0.0, 1.0, (n, n))
    w = 0.5 * (w + w.T)
    np.fill_diagonal(w, 0.0)
    return M.build_mean_field_pair(rng.uniform(-0.5, 0.5, n), w, beta,
                                   rate_rule=rate_rule)


def zoo(rng):
    return [
        M.curie_weiss(0.5),
        M.curie_weiss(1.5),
        M.curie_weiss(0.8, M.METROPOLIS),
        random_pair_model(rng, 4),
        M.build_separable(5, [1.0, 1.0], [1.0]),          # a = 1 + r
        M.build_separable(4, [1.0], [1.0, 0.5]),          # b = 1 + r/2
        M.two_point_linear(),
        M.complete_uniform(4),
    ]


def test_curie_weiss_glauber_rates_closed_form():
    cw = M.curie_weiss(0.7)
    rng = np.random.default_rng(0)
    for _ in range(20):
        u = rng.uniform(0.01, 0.99)
        mu = np.array([u, 1.0 - u])
        q = cw.rates(mu)
        gap = mu[0] - mu[1]
        assert q[0, 1] == pytest.approx(np.exp(-0.7 * gap), rel=1e-14)
        assert q[1, 0] == pytest.approx(np.exp(0.7 * gap), rel=1e-14)


def test_zero_coupling_gives_constant_rates():
    cw = M.curie_weiss(0.0)
    q1 = cw.rates([0.9, 0.1])
    q2 = cw.rates([0.2, 0.8])
    assert np.allclose(q1, q2)
    assert np.allclose(cw.local_equilibrium([0.3, 0.7]), [0.5, 0.5])

    n = 4
    mfp = M.build_mean_field_pair(np.zeros(n), 1.0 - np.eye(n), 0.0)
    assert np.allclose(mfp.local_equilibrium(np.full(n, 0.25)), 0.25)


def test_detailed_balance_random_interior():
    rng = np.random.default_rng(1)
    for triple in zoo(rng):
        for _ in range(100):
            mu = rng.dirichlet(np.ones(triple.n)) * 0.9 + 0.1 / triple.n
            q = triple.rates(mu)
            pi = triple.local_equilibrium(mu)
            flux = pi[:, None] * q
            assert np.max(np.abs(flux - flux.T)) <= 1e-12
            assert np.max(np.abs(q.sum(axis=1))) <= 1e-12
            off = q[~np.eye(triple.n, dtype=bool)]
            assert np.min(off) >= 0.0


def test_pair_builder_rejects_bad_input():
    with pytest.raises(ModelError):
        M.build_mean_field_pair([0.0, 0.0], [[0.0, 1.0], [0.5, 0.0]], 0.5)
    with pytest.raises(ModelError):
        M.build_mean_field_pair([0.0, 0.0], [[0.0, 1.0], [1.0, 0.0]], 0.5,
                                base_weights=np.zeros((2, 2)))
    disconnected = np.zeros((4, 4))
    disconnected[0, 1] = disconnected[1, 0] = 1.0
    disconnected[2, 3] = disconnected[3, 2] = 1.0
    with pytest.raises(ModelError):
        M.build_mean_field_pair(np.zeros(4), 1.0 - np.eye(4), 0.5,
                                base_weights=disconnected)


def test_separable_examples():
    # constant rates: complete graph, uniform equilibrium
    flat = M.build_separable(3, [1.0], [1.0])
    q = flat.rates([0.2, 0.3, 0.5])
    assert np.allclose(q[~np.eye(3, dtype=bool)], 1.0)
    assert np.allclose(flat.local_equilibrium([0.2, 0.3, 0.5]), 1.0 / 3.0)

    # arrival-driven model: pi proportional to a(mu_x)
    agent = M.build_separable(4, [10.0, 1.0], [1.0])
    mu = np.array([0.1, 0.2, 0.3, 0.4])
    pi = agent.local_equilibrium(mu)
    a_vals = 10.0 + mu
    assert np.allclose(pi, a_vals / a_vals.sum(), atol=1e-12)

    with pytest.raises(ModelError):
        M.build_separable(3, [0.0, 1.0], [1.0])   # a(0) = 0
    with pytest.raises(ModelError):
        M.build_separable(3, [1.0], [1.0, -2.0])  # b(1) < 0


def test_separable_interaction_derivative():
    # H must be the derivative of the quadrature-evaluated interaction
    sep = M.build_separable(3, [2.0, 1.0, 0.5], [1.0, 0.25])
    mu = np.array([0.5, 0.3, 0.2])
    h = sep.local_energy(mu)
    a = 2.0 + mu + 0.5 * mu ** 2
    b = 1.0 + 0.25 * mu
    assert np.allclose(h, np.log(b) - np.log(a), atol=1e-12)
    assert np.allclose(sep.local_equilibrium(mu),
                       (a / b) / np.sum(a / b), atol=1e-12)


def test_linear_builder():
    lin = M.two_point_linear(1.0, 1.0)
    assert np.allclose(lin.local_equilibrium([0.9, 0.1]), [0.5, 0.5])
    assert np.max(np.abs(lin.drates([0.4, 0.6]))) == 0.0

    rng = np.random.default_rng(2)
    pi = rng.dirichlet(np.ones(4))
    cond = rng.uniform(0.2, 1.0, (4, 4))
    cond = 0.5 * (cond + cond.T)
    np.fill_diagonal(cond, 0.0)
    q = cond / pi[:, None]
    np.fill_diagonal(q, -q.sum(axis=1))
    lin4 = M.build_linear(q, pi)
    assert M.validate(lin4, n_samples=20).passed

    bad = q.copy()
    bad[0, 1] *= 2.0
    np.fill_diagonal(bad, 0.0)
    np.fill_diagonal(bad, -bad.sum(axis=1))
    with pytest.raises(ModelError):
        M.build_linear(bad, pi)


def test_validator_zoo_passes():
    rng = np.random.default_rng(3)
    for triple in zoo(rng):
        report = M.validate(triple, n_samples=60, seed=5)
        assert report.passed, f"{triple.name}\n{report}"


def test_validator_catches_broken_detailed_balance():
    # tabulated model with rates that are NOT reversible for its pi
    n = 3

    def rates(mu):
        q = np.array([[0.0, 2.0, 1.0],
                      [0.5, 0.0, 1.0],
                      [1.0, 1.0, 0.0]])
        np.fill_diagonal(q, 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        return q

    broken = M.build_tabulated(
        n, rates, lambda mu: np.zeros((n, n, n)),
        lambda mu: np.zeros(n), lambda mu: 0.0, name="broken")
    report = M.validate(broken, n_samples=5)
    assert not report.passed
    assert report.max_detailed_balance > 1e-6


def test_drates_matches_finite_differences_zero_sum():
    rng = np.random.default_rng(4)
    for triple in zoo(rng):
        mu = rng.dirichlet(np.ones(triple.n)) * 0.8 + 0.2 / triple.n
        sigma = rng.standard_normal(triple.n)
        sigma -= sigma.mean()
        h = 1e-6
        fd = (triple.rates(mu + h * sigma) - triple.rates(mu - h * sigma)) / (2 * h)
        analytic = np.einsum("zxy,z->xy", triple.drates(mu), sigma)
        assert np.max(np.abs(fd - analytic)) <= 1e-6


def test_rates_many_consistency():
    rng = np.random.default_rng(6)
    for triple in zoo(rng):
        mus = rng.dirichlet(np.ones(triple.n), size=6) * 0.9 + 0.1 / triple.n
        stacked = triple.rates_many(mus)
        loop = np.stack([triple.rates(m) for m in mus])
        assert np.max(np.abs(stacked - loop)) <= 1e-13
        dstacked = triple.drates_many(mus)
        dloop = np.stack([triple.drates(m) for m in mus])
        assert np.max(np.abs(dstacked - dloop)) <= 1e-13


def test_spec_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    for triple in zoo(rng):
        if triple.spec is None:
            continue
        path = tmp_path / f"{triple.family}_{triple.n}.json"
        triple.spec.save(path)
        rebuilt = M.load_model(path)
        mu = rng.dirichlet(np.ones(triple.n))
        assert np.allclose(rebuilt.rates(mu), triple.rates(mu), atol=1e-14)
        assert rebuilt.spec.to_dict() == triple.spec.to_dict()


def test_spec_rejects_unknown_keys(tmp_path):
    data = {"states": ["0", "1"], "family": "linear",
            "Q": [[-1.0, 1.0], [1.0, -1.0]], "pi": [0.5, 0.5],
            "extra_field": 1}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ModelError):
        M.load_model(path)


def test_tabulated_not_serializable():
    n = 2
    tab = M.build_tabulated(
        n, lambda mu: np.array([[-1.0, 1.0], [1.0, -1.0]]),
        lambda mu: np.zeros((n, n, n)), lambda mu: np.zeros(n),
        lambda mu: 0.0)
    assert tab.spec is None
