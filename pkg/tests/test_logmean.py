import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from mfcurv import logmean as lm

# 64-point Gauss-Legendre oracle for int_0^1 a^(1-s) b^s ds and its partials
_NODES, _WEIGHTS = leggauss(64)
_S = 0.5 * (_NODES + 1.0)
_W = 0.5 * _WEIGHTS


def quad_mean(a, b):
    return float(np.sum(_W * a ** (1.0 - _S) * b ** _S))


def quad_d1(a, b):
    return float(np.sum(_W * (1.0 - _S) * a ** (-_S) * b ** _S))


def quad_d2(a, b):
    return float(np.sum(_W * _S * a ** (1.0 - _S) * b ** (_S - 1.0)))


def test_mean_point_values():
    assert lm.log_mean(2.0, 2.0) == pytest.approx(2.0, abs=0)
    assert lm.log_mean(1.0, np.e) == pytest.approx(np.e - 1.0, rel=1e-14)
    assert lm.log_mean(5.0, 0.0) == 0.0
    assert lm.log_mean(0.0, 0.0) == 0.0


def test_partials_point_values():
    d1, d2 = lm.log_mean_partials(3.0, 3.0)
    assert d1 == pytest.approx(0.5, abs=1e-14)
    assert d2 == pytest.approx(0.5, abs=1e-14)
    d1, _ = lm.log_mean_partials(1.0, np.e)
    assert d1 == pytest.approx(np.e - 2.0, rel=1e-12)


def test_kernel_point_values():
    assert lm.dissipation_kernel(4.0, 1.0) == pytest.approx(3.0 * np.log(4.0),
                                                            rel=1e-14)
    assert lm.dissipation_kernel(7.0, 7.0) == 0.0
    assert lm.dissipation_kernel(1.0, 0.0) == np.inf
    assert lm.dissipation_kernel(0.0, 0.0) == 0.0


def test_domain_errors():
    with pytest.raises(ValueError):
        lm.log_mean(-1.0, 2.0)
    with pytest.raises(ValueError):
        lm.dissipation_kernel(1.0, -2.0)
    with pytest.raises(ValueError):
        lm.log_mean_partials(0.0, 1.0)
    with pytest.raises(ValueError):
        lm.three_point_slack(1.0, 0.0, 1.0)


def test_against_quadrature_oracle():
    rng = np.random.default_rng(11)
    for _ in range(2000):
        a, b = rng.uniform(1e-3, 100.0, size=2)
        ref = quad_mean(a, b)
        assert abs(lm.log_mean(a, b) - ref) <= 1e-8 * ref
        d1, d2 = lm.log_mean_partials(a, b)
        assert abs(d1 - quad_d1(a, b)) <= 1e-8 * abs(quad_d1(a, b))
        assert abs(d2 - quad_d2(a, b)) <= 1e-8 * abs(quad_d2(a, b))


def test_bounds_and_symmetry():
    rng = np.random.default_rng(5)
    a = rng.uniform(1e-6, 50.0, 5000)
    b = rng.uniform(1e-6, 50.0, 5000)
    mean = lm.log_mean(a, b)
    assert np.all(mean <= np.maximum(a, b) + 1e-14)
    assert np.all(mean >= np.minimum(a, b) - 1e-14)
    assert np.max(np.abs(mean - lm.log_mean(b, a))) == 0.0
    d1, d2 = lm.log_mean_partials(a, b)
    assert np.all(d1 >= 0.0) and np.all(d2 >= 0.0)


def test_euler_identity_sweep():
    # s d1 + t d2 = log_mean(s, t), 1e5 random points
    rng = np.random.default_rng(17)
    s = rng.uniform(1e-8, 10.0, 100_000)
    t = rng.uniform(1e-8, 10.0, 100_000)
    d1, d2 = lm.log_mean_partials(s, t)
    residual = s * d1 + t * d2 - lm.log_mean(s, t)
    assert np.max(np.abs(residual)) <= 1e-9


def test_homogeneity():
    rng = np.random.default_rng(23)
    a = rng.uniform(0.1, 10.0, 1000)
    b = rng.uniform(0.1, 10.0, 1000)
    base = lm.log_mean(a, b)
    for c in (1e-8, 1.0, 1e8):
        rel = np.abs(lm.log_mean(c * a, c * b) - c * base) / (c * base)
        assert np.max(rel) <= 1e-12
    d1, d2 = lm.log_mean_partials(a, b)
    for c in (1e-8, 1e8):
        s1, s2 = lm.log_mean_partials(c * a, c * b)
        assert np.max(np.abs(s1 - d1)) <= 1e-12
        assert np.max(np.abs(s2 - d2)) <= 1e-12


def test_near_diagonal_branch_agreement():
    # series branch vs log branch within 1e-10 relative at |a-b| <= 1e-6 a
    rng = np.random.default_rng(31)
    for scale in (1e-8, 1.0, 1e8):
        a = np.full(2000, scale)
        b = a * (1.0 + rng.uniform(-1e-6, 1e-6, a.size))
        series = lm.log_mean(a, b)
        with np.errstate(all="ignore"):
            logs = np.log1p((a - b) / b)
            direct = np.where(logs == 0.0, a, (a - b) / logs)
        assert np.max(np.abs(series - direct) / direct) <= 1e-10


def test_three_point_examples_and_sweep():
    # equal arguments: both sides are 2
    assert lm.three_point_slack(1.0, 1.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    # direct evaluation of both sides at (1, 1, e)
    d1, d2 = lm.log_mean_partials(1.0, np.e)
    lhs = 1.0 * (d1 + d2) + lm.log_mean(1.0, np.e)
    rhs = lm.log_mean(1.0, 1.0) + lm.log_mean(1.0, np.e)
    assert lm.three_point_slack(1.0, 1.0, np.e) == pytest.approx(lhs - rhs,
                                                                 abs=1e-14)
    assert lm.three_point_check(1.0, 1.0, np.e)

    rng = np.random.default_rng(47)
    r, s, t = rng.uniform(1e-6, 100.0, size=(3, 100_000))
    slack = lm.three_point_slack(r, s, t)
    assert np.min(slack) >= -1e-10
