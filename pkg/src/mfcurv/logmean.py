"""The logarithmic mean, its partial derivatives and the dissipation kernel.

``log_mean(a, b) = (a - b)/(log a - log b)`` extended continuously by
``log_mean(a, a) = a`` and ``log_mean(a, 0) = 0``; equivalently the integral
``int_0^1 a^(1-s) b^s ds``.  The dissipation kernel is
``(a - b)(log a - log b)`` with ``+inf`` on one-sided zeros.

Evaluation switches to a Taylor expansion near the diagonal (see the kernel
modules); both the numba and numpy backends implement the same branch rule.
"""

import numpy as np

from .backend import kernels

# Slack allowed when checking the three-point comparison lemma.
THREE_POINT_TOL = 1e-10


def _check_nonneg(*arrays):
    for arr in arrays:
        if np.any(np.asarray(arr) < 0.0):
            raise ValueError("logarithmic mean requires nonnegative arguments")


def _check_positive(*arrays):
    for arr in arrays:
        if np.any(np.asarray(arr) <= 0.0):
            raise ValueError("derivative requires strictly positive arguments")


def _maybe_scalar(x, out):
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def log_mean(a, b):
    """Logarithmic mean; symmetric, 1-homogeneous, between min and max."""
    _check_nonneg(a, b)
    return _maybe_scalar(a, kernels.logmean(a, b))


def log_mean_partials(a, b):
    """Partials (d/da, d/db) of the logarithmic mean for a, b > 0.

    Both are nonnegative, 0-homogeneous, equal to 1/2 on the diagonal, and
    satisfy the Euler identity a*d1 + b*d2 = log_mean(a, b).
    """
    _check_positive(a, b)
    d1, d2 = kernels.dlogmean(a, b)
    return _maybe_scalar(a, d1), _maybe_scalar(a, d2)


def dissipation_kernel(a, b):
    """(a - b)(log a - log b); zero on the diagonal, +inf on one-sided zeros."""
    _check_nonneg(a, b)
    return _maybe_scalar(a, kernels.entropy_kernel(a, b))


def three_point_slack(r, s, t):
    """Slack of r*(d1+d2)(s,t) + log_mean(s,t) - log_mean(r,s) - log_mean(r,t)."""
    _check_positive(r, s, t)
    d1, d2 = kernels.dlogmean(s, t)
    lhs = np.asarray(r) * (d1 + d2) + kernels.logmean(s, t)
    rhs = kernels.logmean(r, s) + kernels.logmean(r, t)
    return _maybe_scalar(r, lhs - rhs)


def three_point_check(r, s, t, tol=THREE_POINT_TOL):
    """Whether the three-point comparison inequality holds with slack >= -tol."""
    return bool(np.all(np.asarray(three_point_slack(r, s, t)) >= -tol))
