"""Jit-compiled twins of the kernels in ``_kernels_numpy``.

Same function names, same semantics; the scalar branch logic lives in
small ``@njit`` helpers and the array entry points loop over flat views.
Compiled artifacts are cached on disk, so the first call per process pays
the compile cost only once per machine.
"""

import numpy as np
from numba import njit

DIAG_SWITCH = 1e-4

_C2 = -1.0 / 3.0
_C4 = -4.0 / 45.0
_C6 = -44.0 / 945.0


@njit(cache=True, inline="always")
def _logmean_scalar(a, b):
    # canonical order keeps the log branch bitwise symmetric
    if a < b:
        a, b = b, a
    if b <= 0.0:
        return 0.0
    d = a - b
    if d <= DIAG_SWITCH * a:
        s = a + b
        u = d / s
        u2 = u * u
        return 0.5 * s * (1.0 + u2 * (_C2 + u2 * (_C4 + u2 * _C6)))
    return d / np.log1p(d / b)


@njit(cache=True, inline="always")
def _dlogmean_scalar(a, b):
    swapped = a < b
    if swapped:
        a, b = b, a
    d = a - b
    if d <= DIAG_SWITCH * a:
        s = a + b
        u = d / s
        u2 = u * u
        f = 1.0 + u2 * (_C2 + u2 * (_C4 + u2 * _C6))
        h = -u * (_C2 + u2 * (_C4 + u2 * _C6))
        d1 = f * (1.0 + h) / (2.0 * (1.0 + u))
        d2 = f * (1.0 - h) / (2.0 * (1.0 - u))
    else:
        lam = d / np.log1p(d / b)
        d1 = (lam - lam * lam / a) / d
        d2 = (lam * lam / b - lam) / d
    if swapped:
        return d2, d1
    return d1, d2


@njit(cache=True, inline="always")
def _entropy_scalar(a, b):
    if a < b:
        a, b = b, a
    if a <= 0.0:
        return 0.0
    if b <= 0.0:
        return np.inf
    d = a - b
    return d * np.log1p(d / b)


@njit(cache=True)
def _logmean_flat(a, b, out):
    for i in range(a.size):
        out[i] = _logmean_scalar(a[i], b[i])


@njit(cache=True)
def _dlogmean_flat(a, b, d1, d2):
    for i in range(a.size):
        d1[i], d2[i] = _dlogmean_scalar(a[i], b[i])


@njit(cache=True)
def _entropy_flat(a, b, out):
    for i in range(a.size):
        out[i] = _entropy_scalar(a[i], b[i])


def _flat_inputs(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a, b = np.broadcast_arrays(a, b)
    flat_a = np.ascontiguousarray(a).reshape(-1)
    flat_b = np.ascontiguousarray(b).reshape(-1)
    return a.shape, flat_a, flat_b


def logmean(a, b):
    """Elementwise logarithmic mean of nonnegative arrays (any shape)."""
    shape, flat_a, flat_b = _flat_inputs(a, b)
    out = np.empty(shape, dtype=np.float64)
    _logmean_flat(flat_a, flat_b, out.reshape(-1))
    return out


def dlogmean(a, b):
    """Partial derivatives (d/da, d/db) of the logarithmic mean; inputs > 0."""
    shape, flat_a, flat_b = _flat_inputs(a, b)
    d1 = np.empty(shape, dtype=np.float64)
    d2 = np.empty(shape, dtype=np.float64)
    _dlogmean_flat(flat_a, flat_b, d1.reshape(-1), d2.reshape(-1))
    return d1, d2


def entropy_kernel(a, b):
    """Elementwise (a-b)(log a - log b); +inf on one-sided zeros."""
    shape, flat_a, flat_b = _flat_inputs(a, b)
    out = np.empty(shape, dtype=np.float64)
    _entropy_flat(flat_a, flat_b, out.reshape(-1))
    return out


@njit(cache=True)
def _fisher_sum(flux):
    n = flux.shape[0]
    total = 0.0
    for x in range(n):
        for y in range(n):
            if x != y:
                total += _entropy_scalar(flux[x, y], flux[y, x])
    return 0.5 * total


def fisher_sum(flux):
    """0.5 * sum of entropy_kernel(flux, flux.T) over off-diagonal pairs."""
    return float(_fisher_sum(np.ascontiguousarray(flux, dtype=np.float64)))


@njit(cache=True)
def _action_mu_derivative(mu, q, dq, d1, gsq, out):
    n = mu.shape[0]
    for z in range(n):
        acc = 0.0
        for y in range(n):
            acc += gsq[z, y] * d1[z, y] * q[z, y]
        for x in range(n):
            gm = mu[x]
            for y in range(n):
                acc += gsq[x, y] * d1[x, y] * gm * dq[z, x, y]
        out[z] = acc


def action_mu_derivative(mu, q, dq, d1, gsq):
    """Derivative of the transport action w.r.t. each mass coordinate.

    Same contract as the numpy twin: result defined up to an additive
    constant, ``d1`` zeroed off the support.
    """
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    out = np.empty(mu.shape[0], dtype=np.float64)
    _action_mu_derivative(mu,
                          np.ascontiguousarray(q, dtype=np.float64),
                          np.ascontiguousarray(dq, dtype=np.float64),
                          np.ascontiguousarray(d1, dtype=np.float64),
                          np.ascontiguousarray(gsq, dtype=np.float64), out)
    return out
