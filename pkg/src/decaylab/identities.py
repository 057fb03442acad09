"""Numerical checks of resolvent identities and estimates on discrete operators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.integrate import simpson, solve_ivp
from scipy.optimize import brentq

from decaylab import gevrey
from decaylab.operators import (AssumptionError, DiscreteOperator, Grid, Resolvent, build_operator, decompose,
                                matrix_norm, operator_norm, weighted_resolvent_deriv_norm)


def _japanese(r, s):
    return (1.0 + np.asarray(r) ** 2) ** (-s / 2)


def _spectral_root(lam, eps):
    """Root of ``lam^2 - i eps`` in the lower half-plane (continuous in eps)."""
    w = np.sqrt(complex(lam) ** 2 - 1j * eps)
    return w if w.imag <= 0 else -w


def _solve_norm(op, lam, left, left_H, right, right_H, n_in, seed=0, bc="radiation", tol=1e-8):
    res = Resolvent(op, lam, bc, check=False)
    return operator_norm(lambda x: left(res.solve(right(x))),
                         lambda y: right_H(res.solve_H(left_H(y))), n_in, seed, tol)


# ---------------------------------------------------------------------------
# polynomial-weight estimate
# ---------------------------------------------------------------------------


@dataclass
class PolyWeightReport:
    lam: np.ndarray
    ratio: np.ndarray  # rows: eps values
    eps: tuple
    stable: bool
    sup: float
    slope: float


def verify_thm41(op: DiscreteOperator, lam_grid, eps=1e-3, s=1.0, alpha=0, beta=0, seed=0):
    """``||<x>^{-s} d^alpha (P - lam^2 + i eps)^{-1} d^beta <x>^{-s}|| / lam^{alpha+beta-1}``.

    Evaluated at ``eps`` and ``eps/10``; ``stable`` when the two agree to 10%
    at every lam.  ``slope`` is the log-log trend of the ratio in lam; a
    bounded ratio has slope near 0 while trapping shows up as growth.
    """
    if alpha not in (0, 1) or beta not in (0, 1):
        raise ValueError("alpha, beta in {0, 1}")
    lam_grid = np.asarray(lam_grid, dtype=float)
    w = _japanese(op.grid.radii, s)
    we = _japanese(op.grid.edge_radii, s)

    def left(x):
        return we * op.grad(x) if alpha else w * x

    def left_H(y):
        return op.grad_T(we * y) if alpha else w * y

    def right(x):
        return op.grad_T(we * x) if beta else w * x

    def right_H(y):
        return we * op.grad(y) if beta else w * y

    n_in = op.n + 1 if beta else op.n
    epss = (eps, eps / 10)
    out = np.zeros((2, lam_grid.size))
    for i, e in enumerate(epss):
        for j, lam in enumerate(lam_grid):
            nr = _solve_norm(op, _spectral_root(lam, e), left, left_H, right, right_H, n_in, seed)
            out[i, j] = nr.value / lam ** (alpha + beta - 1)
    stable = bool(np.all(np.abs(out[0] - out[1]) <= 0.1 * out[1]))
    slope = float(np.polyfit(np.log(lam_grid), np.log(out[1]), 1)[0]) if lam_grid.size > 1 else 0.0
    return PolyWeightReport(lam_grid, out, epss, stable, float(out.max()), slope)


# ---------------------------------------------------------------------------
# limiting absorption
# ---------------------------------------------------------------------------


@dataclass
class LapReport:
    eps: np.ndarray
    diffs: np.ndarray
    theta: float
    C: float
    holder_ok: bool
    limit_error: float | None = None


def lap_continuity_check(op, lam, eps_list=(1e-1, 1e-2, 1e-3, 1e-4), s=1.0, seed=0, compare_limit=True):
    """Hölder fit ``||G(eps_i) - G(eps_j)|| ~ C |eps_i - eps_j|^theta`` for ``G = W R(lam - i eps) W``.

    ``W = <x>^{-s}`` and the transparent closure keeps the truncation exact
    outside the support of the potential.  ``limit_error`` compares a
    Richardson extrapolation of the two smallest eps to the real-axis solve.
    """
    eps = np.sort(np.asarray(eps_list, dtype=float))[::-1]
    w = _japanese(op.grid.radii, s)
    res = [Resolvent(op, complex(lam) - 1j * e, "radiation", check=False) for e in eps]

    def diff_norm(ra, rb, ca=1.0, cb=-1.0, rc=None, cc=0.0):
        def ap(x):
            y = ca * ra.solve(w * x) + cb * rb.solve(w * x)
            if rc is not None:
                y = y + cc * rc.solve(w * x)
            return w * y

        def apH(y):
            x = ca.conjugate() * ra.solve_H(w * y) + np.conj(cb) * rb.solve_H(w * y)
            if rc is not None:
                x = x + np.conj(cc) * rc.solve_H(w * y)
            return w * x

        return operator_norm(ap, apH, op.n, seed).value

    diffs = np.array([diff_norm(res[i], res[i + 1]) for i in range(len(eps) - 1)])
    gaps = eps[:-1] - eps[1:]
    theta, logC = np.polyfit(np.log(gaps), np.log(diffs), 1)
    rep = LapReport(eps, diffs, float(theta), float(math.exp(logC)), bool(theta > 0.3))
    if compare_limit:
        r0 = Resolvent(op, complex(lam), "radiation", check=False)
        # G(eps) ~ G(0) + c eps^theta: eliminate c with the two smallest eps
        th = max(theta, 1e-3)
        q = (eps[-1] / eps[-2]) ** th
        ca, cb = 1.0 / (1 - q), -q / (1 - q)
        num = diff_norm(res[-1], res[-2], complex(ca), complex(cb), r0, -1.0)
        den = diff_norm(r0, r0, 1.0, 0.0)
        rep.limit_error = float(num / den)
    return rep


# ---------------------------------------------------------------------------
# dilation identity
# ---------------------------------------------------------------------------


def _dilation_generator(op, order=4):
    """``r d/dr - 1`` in the reduced radial unknown (``x . grad`` on ``w = u/r``), sparse.

    ``order=2``: the three-point centered difference.  ``order=4``: the
    centered combination ``3/2 D_1 - 1/2 D_2`` (``D_m u_j = (u_{j+m} -
    u_{j-m})/(2 m h)``), whose symbol agrees with ``2 sigma/sigma'`` of the
    three-point Laplacian to O(h^4) at low frequency.  Odd reflection at r = 0.
    """
    n, h, r = op.n, op.h, op.grid.nodes
    one = np.ones(n)
    D1 = sparse.diags([one[1:], -one[1:]], [1, -1]) / (2 * h)
    if order == 2:
        D = D1
    else:
        D2 = sparse.diags([one[2:], -one[2:]], [2, -2]).tolil() / (4 * h)
        D2[0, 0] = 1.0 / (4 * h)  # u at r = -h is -u_0
        D = 1.5 * D1 - 0.5 * D2.tocsr()
    return (sparse.diags(r) @ D - sparse.identity(n)).tocsr()


def dilation_identity_residual(op: DiscreteOperator, lam, s=2.0, variant="corrected", order=4, seed=0):
    """Relative residual of ``-lam^2 W R^2 W = 1/2 W R (A + c) W + 1/2 W R W - 1/2 W A R W``.

    ``A = x . grad``.  ``variant="corrected"`` uses ``c = 1`` (the commutator
    ``[P0, A] = 2 P0``); ``"as_stated"`` uses ``c = 2d - 1`` from reading the
    divergence term with a plus sign.  Free d = 3 radial operator at
    ``Im lam < 0``; matrix-free.

    The transparent closure makes ``R`` the exact restriction of the
    half-lattice resolvent, and ``R^2 = R'/(2 lam)`` comes from the derivative
    recursion, so no wall term enters.  ``W = <r>^{-s}`` is set to zero on the
    last three nodes so that the five-point ``A`` never leaves the domain.
    The residual left is the lattice's own departure from dilation covariance,
    O(h^2) in operator norm (grid-scale modes see ``[P0_h, A_h] - 2 P0_h`` of
    size ``h^2 P0_h^2 / 2`` for every odd centered stencil).
    """
    if op.grid.geometry != "radial" or op.grid.d != 3 or np.any(op.V):
        raise ValueError("free radial d = 3 operator expected")
    lam = complex(lam)
    if lam.imag >= 0:
        raise ValueError("Im lam < 0 required")
    A = _dilation_generator(op, order)
    AH = A.conj().T.tocsr()
    c = 1.0 if variant == "corrected" else 2 * op.grid.d - 1.0
    w = _japanese(op.grid.nodes, s)
    w[-3:] = 0.0
    res = Resolvent(op, lam, "radiation", check=False)
    l2 = lam * lam

    def lhs(x):
        return -l2 * w * res.derivs(w * x, 1)[1] / (2 * lam)

    def lhs_H(y):
        return -np.conj(l2) * w * res.derivs_H(w * y, 1)[1] / np.conj(2 * lam)

    def resid(x):
        v = w * x
        Rv = res.solve(v)
        rhs = 0.5 * w * res.solve(A @ v) + 0.5 * (1 + c) * w * Rv - 0.5 * w * (A @ Rv)
        return lhs(x) - rhs

    def resid_H(y):
        v = w * y
        RHv = res.solve_H(v)
        rhs = 0.5 * w * (AH @ RHv) + 0.5 * (1 + c) * w * RHv - 0.5 * w * res.solve_H(AH @ v)
        return lhs_H(y) - rhs

    top = operator_norm(resid, resid_H, op.n, seed, tol=1e-6, maxiter=2000)
    ref = operator_norm(lhs, lhs_H, op.n, seed, tol=1e-8)
    return top.value / ref.value


# ---------------------------------------------------------------------------
# Fourier representation of the resolvent
# ---------------------------------------------------------------------------


def fourier_duality_check(op: DiscreteOperator, lam, T=60.0, n_t=4000):
    """``lam (lam^2 - P)^{-1}`` against ``i int_0^T e^{-i t lam} cos(t sqrt(P)) dt`` (Simpson, modewise).

    Returns the relative operator-norm residual; the eigenbasis makes both
    sides diagonal so the norm is a maximum over modes.
    """
    lam = complex(lam)
    if lam.imag >= 0:
        raise ValueError("Im lam < 0 required")
    dec = decompose(op)
    if np.any(dec.values < -1e-10):
        raise AssumptionError("negative eigenvalue")
    om = np.sqrt(np.maximum(dec.values, 0.0))
    t = np.linspace(0.0, T, n_t + 1)
    integrand = np.exp(-1j * lam * t)[None, :] * np.cos(np.outer(om, t))
    quad = 1j * simpson(integrand, x=t, axis=1)
    # the time integral converges for Im lam < 0 to lam (lam^2 - P)^{-1}
    exact = lam / (lam**2 - dec.values)
    return float(np.max(np.abs(quad - exact)) / np.max(np.abs(exact)))


# ---------------------------------------------------------------------------
# low frequencies
# ---------------------------------------------------------------------------


@dataclass
class LowFreqReport:
    lam: np.ndarray
    eps: np.ndarray
    values: np.ndarray  # [eps, lam]
    sup: float
    growth: float
    bounded: bool


def lowfreq_check(op: DiscreteOperator, delta0=0.5, eps_grid=(1e-2, 1e-3, 1e-4), n_lam=6, profile=None,
                  growth_limit=10.0, seed=0):
    """``sum_ell ||mu grad^ell (P - lam^2 + i eps)^{-1} mu||`` on ``lam = delta0 2^{-j}``.

    ``growth`` is the largest value over the grid divided by the value at
    ``(delta0, largest eps)``; ``bounded`` requires it below ``growth_limit``.
    """
    lam = delta0 * 2.0 ** -np.arange(n_lam)
    eps = np.asarray(eps_grid, dtype=float)
    mu, mu_e = op.mu_nodes(profile), op.mu_edges(profile)
    vals = np.zeros((eps.size, lam.size))
    for i, e in enumerate(eps):
        for j, l in enumerate(lam):
            k = _spectral_root(l, e)
            v0 = _solve_norm(op, k, lambda x: mu * x, lambda y: mu * y, lambda x: mu * x,
                             lambda y: mu * y, op.n, seed, tol=1e-6).value
            v1 = _solve_norm(op, k, lambda x: mu_e * op.grad(x), lambda y: op.grad_T(mu_e * y),
                             lambda x: mu * x, lambda y: mu * y, op.n, seed, tol=1e-6).value
            vals[i, j] = v0 + v1
    growth = float(vals.max() / vals[0, 0])
    return LowFreqReport(lam, eps, vals, float(vals.max()), growth, bool(growth <= growth_limit))


def resonant_well_depth(width=1.0, r_max=None):
    """Depth ``D`` of ``-D exp(-(r/width)^2)`` with a zero-energy resonance in d = 3.

    The zero-energy radial solution with ``u(0) = 0, u'(0) = 1`` has
    ``u'(r_max) = 0`` exactly at threshold.
    """
    r_max = r_max or 8.0 * width

    def slope(D):
        sol = solve_ivp(lambda r, y: [y[1], -D * math.exp(-((r / width) ** 2)) * y[0]],
                        (0.0, r_max), [0.0, 1.0], rtol=1e-11, atol=1e-13)
        return sol.y[1, -1]

    return brentq(slope, 0.5 / width**2, 4.0 / width**2, xtol=1e-12)


@dataclass
class EnvelopeReport:
    lams: list
    ks: list
    ells: list
    log_norms: dict  # (ell, lam, k) -> log norm
    c: dict  # ell -> array (n_lam, n_k) of normalized constants
    ratio: dict  # ell -> max/min of c
    slope: dict  # ell -> fitted exponent of lam

    def to_record(self):
        return {"lams": self.lams, "ks": self.ks, "ratio": {str(e): v for e, v in self.ratio.items()},
                "slope": {str(e): v for e, v in self.slope.items()},
                "c": {str(e): v.tolist() for e, v in self.c.items()}}


def envelope_domain(k, lam, h_max=0.1, ppw=0.3):
    """Radius and size for a k-th derivative sweep.

    The weighted kernel derivative peaks near ``r = 4k^2`` for the ``s = 1/2``
    weight; going much further only adds rounding of size ``eps R^k``.
    """
    R = max(150.0, 16.0 * k * k + 100.0)
    h = min(h_max, ppw / max(lam, 1.0))
    return R, int(round(R / h))


def resolvent_envelope(pot, seq: gevrey.WeightSequence, lams=(1.0, 2.0, 4.0, 8.0), ks=range(13),
                       ells=(0, 1), tol=1e-6, seed=0, progress=None):
    """Normalized derivative constants ``(||d^k mu grad^ell R mu|| / (m_k <lam>^{ell-1}))^{1/(k+1)}``.

    The lam-exponent is fitted jointly over k (one intercept per k).
    """
    lams, ks, ells = list(lams), list(ks), list(ells)
    logs = {}
    for lam in lams:
        for k in ks:
            R, n = envelope_domain(k, lam)
            op = build_operator(Grid("radial", n, R), pot)
            for ell in ells:
                r = weighted_resolvent_deriv_norm(op, lam, ell, k, tol=tol, seed=seed, method="lanczos")
                logs[(ell, lam, k)] = r.log_value
                if progress:
                    progress(ell, lam, k, r)
    c, ratio, slope = {}, {}, {}
    jl = 0.5 * np.log1p(np.square(lams))  # log <lam>
    for ell in ells:
        arr = np.empty((len(lams), len(ks)))
        for i, lam in enumerate(lams):
            for j, k in enumerate(ks):
                arr[i, j] = math.exp((logs[(ell, lam, k)] - seq.logs[k] - (ell - 1) * jl[i]) / (k + 1))
        c[ell] = arr
        ratio[ell] = float(arr.max() / arr.min())
        # centred within each k, then a single slope
        Y = np.array([[logs[(ell, lam, k)] for k in ks] for lam in lams])
        Yc = Y - Y.mean(axis=0)
        xc = jl - jl.mean()
        slope[ell] = float(np.sum(xc[:, None] * Yc) / (len(ks) * np.sum(xc**2)))
    return EnvelopeReport(lams, ks, ells, logs, c, ratio, slope)
