"""Pure-Python/numpy versions of the hot kernels.

Mirrors ``_ckernels.pyx`` one to one; used when the compiled extension is
not available and as the reference in the backend-agreement tests.
"""

import math

import numpy as np
from scipy.special import gammaln, logsumexp


def tridiag_factor(dl, d, du):
    """LU-factor a tridiagonal matrix with partial pivoting (LAPACK gttrf layout).

    Returns ``(dl, d, du, du2, ipiv)``; inputs are copied, never modified.
    """
    dl = np.array(dl, dtype=np.complex128)
    d = np.array(d, dtype=np.complex128)
    du = np.array(du, dtype=np.complex128)
    n = d.shape[0]
    du2 = np.zeros(max(n - 2, 0), dtype=np.complex128)
    ipiv = np.arange(n, dtype=np.int64)
    for i in range(n - 1):
        if abs(d[i]) >= abs(dl[i]):
            if d[i] != 0:
                fact = dl[i] / d[i]
                dl[i] = fact
                d[i + 1] -= fact * du[i]
        else:
            ipiv[i] = i + 1
            fact = d[i] / dl[i]
            d[i] = dl[i]
            dl[i] = fact
            temp = du[i]
            du[i] = d[i + 1]
            d[i + 1] = temp - fact * d[i + 1]
            if i < n - 2:
                du2[i] = du[i + 1]
                du[i + 1] = -fact * du[i + 1]
    if np.any(d == 0):
        raise ZeroDivisionError("singular tridiagonal matrix")
    return dl, d, du, du2, ipiv


def tridiag_solve(factors, b):
    """Solve ``A x = b`` from :func:`tridiag_factor` output; ``b`` is (n,) or (n, m)."""
    dl, d, du, du2, ipiv = factors
    x = np.array(b, dtype=np.complex128)
    n = d.shape[0]
    for i in range(n - 1):
        if ipiv[i] == i:
            x[i + 1] -= dl[i] * x[i]
        else:
            temp = x[i].copy()
            x[i] = x[i + 1]
            x[i + 1] = temp - dl[i] * x[i]
    x[n - 1] /= d[n - 1]
    if n > 1:
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2]
    for i in range(n - 3, -1, -1):
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i]
    return x


def log_binom_conv(log_a, log_b):
    """``log sum_nu binom(k, nu) a_nu b_{k-nu}`` for every k, inputs given as logs."""
    log_a = np.asarray(log_a, dtype=float)
    log_b = np.asarray(log_b, dtype=float)
    K = min(log_a.shape[0], log_b.shape[0])
    out = np.empty(K)
    for k in range(K):
        nu = np.arange(k + 1)
        lbin = gammaln(k + 1) - gammaln(nu + 1) - gammaln(k - nu + 1)
        out[k] = logsumexp(lbin + log_a[: k + 1] + log_b[k::-1])
    return out


def inverse_recursion(log_C, log_Ct, log_m, K):
    """Run the derivative-of-inverse recursion in log space.

    b_0 = Ct and
    b_{k+1} = Ct * sum_{nu<=k} C^{k+1-nu} (k+1)!/(nu!(k+1-nu)!) m_{k+1-nu} b_nu.
    """
    log_m = np.asarray(log_m, dtype=float)
    out = np.empty(K + 1)
    out[0] = log_Ct
    for k in range(K):
        nu = np.arange(k + 1)
        j = k + 1 - nu
        terms = (
            j * log_C
            + math.lgamma(k + 2)
            - gammaln(nu + 1)
            - gammaln(j + 1)
            + log_m[j]
            + out[: k + 1]
        )
        out[k + 1] = log_Ct + logsumexp(terms)
    return out
