"""Pure-numpy reference implementations of the hot numeric kernels.

These are the fallback twins of the jit-compiled kernels in
``_kernels_numba``; both modules expose the same names with identical
semantics so the backend can be swapped via ``MFCURV_BACKEND`` (see
``mfcurv.backend``).

Scalar conventions shared by both backends:

* ``logmean(a, a) = a``, ``logmean(a, 0) = 0``.
* Near the diagonal (``|a-b| <= DIAG_SWITCH * max(a,b)``) the mean and its
  partial derivatives are evaluated by a 6th-order Taylor expansion in
  ``u = (a-b)/(a+b)``; the log formula loses all precision there.
* ``entropy_kernel(a, 0) = +inf`` for ``a > 0`` and ``0`` for ``a = b = 0``.
"""

import numpy as np

# |a-b| <= DIAG_SWITCH*max(a,b) selects the Taylor branch.
DIAG_SWITCH = 1e-4

# Taylor coefficients of u/artanh(u) = 1 + C2 u^2 + C4 u^4 + C6 u^6 + O(u^8).
_C2 = -1.0 / 3.0
_C4 = -4.0 / 45.0
_C6 = -44.0 / 945.0


def _series_f(u):
    """u/artanh(u) to 6th order; logmean(a,b) = (a+b)/2 * f(u)."""
    u2 = u * u
    return 1.0 + u2 * (_C2 + u2 * (_C4 + u2 * _C6))


def _canonical(a, b):
    """Sorted pair (hi, lo) per entry; keeps the log branch bitwise symmetric."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a, b = np.broadcast_arrays(a, b)
    return np.maximum(a, b), np.minimum(a, b), a < b


def logmean(a, b):
    """Elementwise logarithmic mean of nonnegative arrays (any shape)."""
    hi, lo, _ = _canonical(a, b)
    out = np.zeros(hi.shape, dtype=np.float64)
    pos = lo > 0.0
    near = pos & (hi - lo <= DIAG_SWITCH * hi)
    far = pos & ~near

    if np.any(near):
        an, bn = hi[near], lo[near]
        s = an + bn
        u = (an - bn) / s
        out[near] = 0.5 * s * _series_f(u)
    if np.any(far):
        af, bf = hi[far], lo[far]
        out[far] = (af - bf) / np.log1p((af - bf) / bf)
    return out


def dlogmean(a, b):
    """Partial derivatives (d/da, d/db) of the logarithmic mean.

    Requires strictly positive entries; callers mask non-edges beforehand.
    """
    hi, lo, swapped = _canonical(a, b)
    d1 = np.empty(hi.shape, dtype=np.float64)
    d2 = np.empty(hi.shape, dtype=np.float64)
    near = hi - lo <= DIAG_SWITCH * hi
    far = ~near

    if np.any(near):
        an, bn = hi[near], lo[near]
        s = an + bn
        u = (an - bn) / s
        f = _series_f(u)
        u2 = u * u
        # (1+u-f(u))/u = 1 + h and (f(u)-1+u)/u = 1 - h
        h = -u * (_C2 + u2 * (_C4 + u2 * _C6))
        d1[near] = f * (1.0 + h) / (2.0 * (1.0 + u))
        d2[near] = f * (1.0 - h) / (2.0 * (1.0 - u))
    if np.any(far):
        af, bf = hi[far], lo[far]
        diff = af - bf
        lam = diff / np.log1p(diff / bf)
        d1[far] = (lam - lam * lam / af) / diff
        d2[far] = (lam * lam / bf - lam) / diff
    return np.where(swapped, d2, d1), np.where(swapped, d1, d2)


def entropy_kernel(a, b):
    """Elementwise (a-b)(log a - log b) with the boundary conventions above."""
    hi, lo, _ = _canonical(a, b)
    out = np.zeros(hi.shape, dtype=np.float64)
    out[(hi > 0.0) & (lo <= 0.0)] = np.inf
    pos = lo > 0.0
    if np.any(pos):
        ap, bp = hi[pos], lo[pos]
        diff = ap - bp
        out[pos] = diff * np.log1p(diff / bp)
    return out


def fisher_sum(flux):
    """0.5 * sum of entropy_kernel(flux, flux.T) over off-diagonal pairs.

    ``flux[x, y] = mu_x Q_xy``; pairs with both directions zero contribute 0,
    one-sided zero flux gives +inf.
    """
    flux = np.asarray(flux, dtype=np.float64)
    n = flux.shape[0]
    off = ~np.eye(n, dtype=bool)
    vals = entropy_kernel(flux, flux.T)
    return 0.5 * float(np.sum(vals[off]))


def action_mu_derivative(mu, q, dq, d1, gsq):
    """Derivative of the transport action w.r.t. each mass coordinate.

    out[z] = sum_y gsq[z,y] d1[z,y] q[z,y]
           + sum_{x,y} gsq[x,y] d1[x,y] mu[x] dq[z,x,y]

    ``d1`` is the first partial of the logarithmic mean on the flux pair,
    zeroed off the support; ``gsq[x,y] = (psi_y - psi_x)^2``.  The result is
    defined up to an additive constant (see the zero-sum contraction
    discipline in ``models``); callers project as needed.
    """
    local = np.sum(gsq * d1 * q, axis=1)
    coupling = np.einsum("xy,zxy->z", gsq * d1 * mu[:, None], dq)
    return local + coupling
