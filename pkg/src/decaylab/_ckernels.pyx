# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: pivoted tridiagonal LU and log-space bound recursions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, lgamma, INFINITY

cnp.import_array()


cdef inline double cabs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


def tridiag_factor(dl_in, d_in, du_in):
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] dl = np.array(dl_in, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] d = np.array(d_in, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] du = np.array(du_in, dtype=np.complex128)
    cdef Py_ssize_t n = d.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] du2 = np.zeros(max(n - 2, 0), dtype=np.complex128)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ipiv = np.arange(n, dtype=np.int64)
    cdef Py_ssize_t i
    cdef double complex fact, temp
    cdef bint singular = False
    with nogil:
        for i in range(n - 1):
            if cabs2(d[i]) >= cabs2(dl[i]):
                if d[i] != 0:
                    fact = dl[i] / d[i]
                    dl[i] = fact
                    d[i + 1] = d[i + 1] - fact * du[i]
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
        for i in range(n):
            if d[i] == 0:
                singular = True
    if singular:
        raise ZeroDivisionError("singular tridiagonal matrix")
    return dl, d, du, du2, ipiv


cdef void _solve_column(double complex[:] dl, double complex[:] d, double complex[:] du,
                        double complex[:] du2, cnp.int64_t[:] ipiv,
                        double complex[:] x) nogil:
    cdef Py_ssize_t n = d.shape[0]
    cdef Py_ssize_t i
    cdef double complex temp
    for i in range(n - 1):
        if ipiv[i] == i:
            x[i + 1] = x[i + 1] - dl[i] * x[i]
        else:
            temp = x[i]
            x[i] = x[i + 1]
            x[i + 1] = temp - dl[i] * x[i]
    x[n - 1] = x[n - 1] / d[n - 1]
    if n > 1:
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2]
    i = n - 3
    while i >= 0:
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i]
        i -= 1


def tridiag_solve(factors, b):
    dl, d, du, du2, ipiv = factors
    cdef double complex[:] dlv = dl
    cdef double complex[:] dv = d
    cdef double complex[:] duv = du
    cdef double complex[:] du2v = du2
    cdef cnp.int64_t[:] ipv = ipiv
    x = np.array(b, dtype=np.complex128)
    cdef Py_ssize_t j
    cdef double complex[:, :] xm
    if x.ndim == 1:
        _solve_column(dlv, dv, duv, du2v, ipv, x)
        return x
    xt = np.ascontiguousarray(x.T)
    xm = xt
    with nogil:
        for j in range(xm.shape[0]):
            _solve_column(dlv, dv, duv, du2v, ipv, xm[j])
    return xt.T.copy()


cdef double _logaddexp(double a, double b) nogil:
    cdef double hi, lo
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        hi = a
        lo = b
    else:
        hi = b
        lo = a
    return hi + log(1.0 + exp(lo - hi))


def log_binom_conv(log_a_in, log_b_in):
    cdef double[:] la = np.ascontiguousarray(log_a_in, dtype=np.float64)
    cdef double[:] lb = np.ascontiguousarray(log_b_in, dtype=np.float64)
    cdef Py_ssize_t K = min(la.shape[0], lb.shape[0])
    out = np.empty(K)
    cdef double[:] o = out
    cdef Py_ssize_t k, nu
    cdef double acc, term
    with nogil:
        for k in range(K):
            acc = -INFINITY
            for nu in range(k + 1):
                term = (lgamma(k + 1.0) - lgamma(nu + 1.0) - lgamma(k - nu + 1.0)
                        + la[nu] + lb[k - nu])
                acc = _logaddexp(acc, term)
            o[k] = acc
    return out


def inverse_recursion(double log_C, double log_Ct, log_m_in, Py_ssize_t K):
    cdef double[:] lm = np.ascontiguousarray(log_m_in, dtype=np.float64)
    out = np.empty(K + 1)
    cdef double[:] o = out
    cdef Py_ssize_t k, nu, j
    cdef double acc, term
    o[0] = log_Ct
    with nogil:
        for k in range(K):
            acc = -INFINITY
            for nu in range(k + 1):
                j = k + 1 - nu
                term = (j * log_C + lgamma(k + 2.0) - lgamma(nu + 1.0) - lgamma(j + 1.0)
                        + lm[j] + o[nu])
                acc = _logaddexp(acc, term)
            o[k + 1] = log_Ct + acc
    return out
