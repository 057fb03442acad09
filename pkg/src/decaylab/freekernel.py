"""Free resolvent kernels in odd dimension and the even-dimensional cosine kernel.

The odd-dimensional resolvent kernel is evaluated through the polynomial
factor of the half-integer Hankel function,
``z^nu H^(2)_nu(z) = p_d(z) exp(-iz)`` with ``nu = (d-2)/2``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial


class UnsupportedDimensionError(ValueError):
    pass


class SingularityError(ValueError):
    """Kernel evaluated on the diagonal r = 0."""


class OutsideDomainError(ValueError):
    pass


class CalibrationError(RuntimeError):
    pass


class WraparoundError(ValueError):
    """Light cone reaches the periodic image of the source."""


@dataclass(frozen=True)
class HankelHalfPoly:
    d: int
    coeffs: tuple  # ascending powers of z

    @property
    def degree(self):
        return len(self.coeffs) - 1

    @property
    def poly(self):
        return Polynomial(np.asarray(self.coeffs, dtype=complex))

    def __call__(self, z):
        return self.poly(np.asarray(z, dtype=complex))


def hankel_half_poly(d: int) -> HankelHalfPoly:
    """Coefficients of ``p_d`` from the three-term Hankel recurrence.

    With ``q_nu = z^nu H^(2)_nu(z) exp(iz)`` the Bessel recurrence becomes
    ``q_{nu+1} = 2 nu q_nu - z^2 q_{nu-1}``, which is exact polynomial
    arithmetic starting from ``q_{1/2} = i sqrt(2/pi)`` and
    ``q_{3/2} = sqrt(2/pi)(i - z)``.
    """
    if d % 2 == 0 or d < 3:
        raise UnsupportedDimensionError("p_d exists for odd d >= 3 only")
    c = math.sqrt(2.0 / math.pi)
    prev, cur = Polynomial([1j * c]), Polynomial([1j * c, -c])
    nu = 1.5
    if d == 3:
        cur = prev
    else:
        z2 = Polynomial([0, 0, 1])
        for _ in range((d - 5) // 2):
            prev, cur = cur, 2 * nu * cur - z2 * prev
            nu += 1
    return HankelHalfPoly(d, tuple(complex(x) for x in cur.coef))


def _prefactor(d):
    nu = (d - 2) / 2
    return 0.25j * (2 * math.pi) ** (-nu), nu


def free_kernel_odd(d: int, lam, r):
    """Outgoing free resolvent kernel ``K_0(r; lam)`` of ``(-Delta - lam^2)^{-1}``, odd d.

    Convention: ``K_0 = (i/4)(2 pi)^{-nu} lam^nu r^{-nu} H^(2)_nu(lam r)``.  In
    d = 3 this is ``-exp(-i lam r)/(4 pi r)``, i.e. the classical kernel times -1.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise SingularityError("kernel is singular at r = 0")
    lam = complex(lam)
    if lam.imag > 0:
        raise ValueError("outgoing kernel needs Im lam <= 0")
    p = hankel_half_poly(d)
    A, nu = _prefactor(d)
    z = lam * r
    out = A * r ** (-2 * nu) * p(z) * np.exp(-1j * z)
    return out if out.ndim else complex(out)


def free_kernel_deriv(d: int, lam, r, k: int):
    """``d^k/dlam^k K_0`` in closed form (Leibniz on ``p_d(lam r) exp(-i lam r)``)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise SingularityError("kernel is singular at r = 0")
    p = hankel_half_poly(d).poly
    A, nu = _prefactor(d)
    z = complex(lam) * r
    total = np.zeros(np.broadcast(z).shape, dtype=complex)
    dp = p
    for j in range(min(k, p.degree()) + 1):
        total = total + math.comb(k, j) * dp(z) * (-1j) ** (k - j)
        dp = dp.deriv()
    out = A * r ** (k - 2 * nu) * total * np.exp(-1j * z)
    return out if out.ndim else complex(out)


@dataclass
class DerivBoundReport:
    d: int
    constants: list  # per k
    ok: bool

    @property
    def constant(self):
        return max(self.constants)


def kernel_deriv_bound_check(d, k_max, lam_grid, r_grid, stability_factor=10.0):
    """Smallest constants ``C_k`` with ``|d^k K_0| <= C_k (r^{k-(d-1)/2} + (k+1)^{(d-3)/2} r^{k-d+2})``.

    ``ok`` requires every ``C_k`` finite and ``max C_k / min C_k <= stability_factor``.
    """
    if k_max > 12:
        raise ValueError("k_max <= 12")
    lam_grid = np.asarray(lam_grid, dtype=complex)
    if np.any(np.abs(lam_grid) > 1 + 1e-12):
        raise ValueError("the bound is checked for |lam| <= 1")
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(r_grid <= 0):
        raise SingularityError("r grid touches the diagonal")
    consts = []
    for k in range(k_max + 1):
        bound = r_grid ** (k - (d - 1) / 2) + (k + 1) ** ((d - 3) / 2) * r_grid ** (k - d + 2)
        ck = max(float(np.max(np.abs(free_kernel_deriv(d, lam, r_grid, k)) / bound)) for lam in lam_grid)
        consts.append(ck)
    c = np.array(consts)
    ok = bool(np.all(np.isfinite(c)) and c.min() > 0 and c.max() / c.min() <= stability_factor)
    return DerivBoundReport(d, consts, ok)


def dump_kernel_csv(path, d, lam, r):
    vals = free_kernel_odd(d, lam, r)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "re_K", "im_K"])
        for ri, v in zip(np.atleast_1d(r), np.atleast_1d(vals)):
            w.writerow([repr(float(ri)), repr(float(v.real)), repr(float(v.imag))])


# ---------------------------------------------------------------------------
# Cosine propagator
# ---------------------------------------------------------------------------


def cosine_kernel_even(d: int, t: float, r):
    """``t^{-d} Im(i^{d+1} (1 - (r/t)^2)^{-(d+1)/2})``; multiply by the calibrated ``C_d``."""
    if d % 2:
        raise UnsupportedDimensionError("even d only")
    if t <= 0:
        raise ValueError("t must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(np.abs(r) >= t):
        raise OutsideDomainError("formula holds for |r| < t only")
    z2 = (r / t) ** 2
    val = np.asarray(t ** (-d) * np.imag(1j ** (d + 1) * (1 - z2) ** (-(d + 1) / 2)))
    return val if val.ndim else float(val)


_FILTER_WIDTH = 3.5


def _lowpass(k, k_nyq):
    # Gaussian low-pass exp(-(3.5 k/k_nyq)^2): 1e-4 at k_nyq in each axis, and its
    # kernel decays like a Gaussian of width ~h, which keeps the light-cone
    # singularity from ringing into the interior
    return np.exp(-((_FILTER_WIDTH * np.asarray(k) / k_nyq) ** 2))


def _periodic_cos_row(d, n, L, t):
    """Filtered kernel row of cos(t |D|) on an n^d periodic box of side L, source at the centre."""
    h = L / n
    k1 = 2 * np.pi * np.fft.fftfreq(n, d=h)
    grids = np.meshgrid(*([k1] * d), indexing="ij")
    kabs = np.sqrt(sum(g * g for g in grids))
    k_nyq = np.pi / h
    symbol = np.cos(t * kabs) * _lowpass(kabs, k_nyq)
    row = np.real(np.fft.ifftn(symbol)) / h**d
    row = np.fft.fftshift(row)
    x = (np.arange(n) - n // 2) * h
    xs = np.meshgrid(*([x] * d), indexing="ij")
    r = np.sqrt(sum(g * g for g in xs))
    return r, row


@dataclass
class CosineKernelProfile:
    d: int
    C_d: float
    residual: float
    grid_size: int
    z: np.ndarray
    W: np.ndarray

    def to_record(self):
        return {"d": self.d, "C_d": self.C_d, "residual": self.residual, "grid_size": self.grid_size}

    def dump_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_record(), fh, indent=2, sort_keys=True)


def calibrate_Cd(d: int = 2, grid_size: int = 256, z_max: float = 0.5, L: float = 2 * np.pi,
                 t: float | None = None, raise_on_failure=True):
    """Fit ``C_d`` by least squares of the filtered periodic propagator row against
    :func:`cosine_kernel_even` on ``r/t <= z_max``.

    Returns ``(C_d, residual)`` where the residual is the relative L2 misfit.
    """
    if d != 2:
        raise UnsupportedDimensionError("calibration is implemented for d = 2")
    if grid_size < 128:
        raise ValueError("grid_size >= 128")
    t = L / 5 if t is None else t
    if t >= L / 4:
        raise WraparoundError("t must stay below a quarter of the box")
    r, row = _periodic_cos_row(d, grid_size, L, t)
    mask = r <= z_max * t
    model = cosine_kernel_even(d, t, r[mask])
    data = row[mask]
    C = float(np.dot(model, data) / np.dot(model, model))
    resid = float(np.linalg.norm(data - C * model) / np.linalg.norm(data))
    if raise_on_failure and resid > 5e-2:
        raise CalibrationError(f"fit residual {resid:.3g} exceeds 5e-2")
    return C, resid


def cosine_kernel_profile(d=2, grid_size=256, n_z=200):
    C, resid = calibrate_Cd(d, grid_size)
    z = np.linspace(0, 0.99, n_z)
    W = np.imag(1j ** (d + 1) * (1 - z * z) ** (-(d + 1) / 2))
    return CosineKernelProfile(d, C, resid, grid_size, z, W)


def _radial_odd_line(n, R, t):
    """``r K(r, t)`` for the filtered 3D kernel via the 1D odd-extension wave on [0, R]."""
    h = R / n
    r = h * np.arange(1, n)
    k = np.pi * np.arange(1, n) / R
    k_nyq = np.pi / h
    # DST-I pair on the Dirichlet interval: rK(r,t) = (1/2pi^2) int F(k) cos(tk) k sin(kr) dk
    amp = _lowpass(k, k_nyq) * np.cos(t * k) * k
    S = np.sin(np.outer(r, k))
    line = (S @ amp) * (np.pi / R) / (2 * np.pi**2)
    return r, line


def huygens_residual(d: int, t: float, grid_size: int, L: float | None = None) -> float:
    """Share of the kernel row's L2 mass strictly inside ``|x - y| < 0.9 t``.

    d = 1 and d = 3 use exact 1D reductions (d'Alembert; odd extension of
    ``r K``); d = 2 uses the filtered periodic 2D propagator.
    """
    if d == 3:
        R = 4.0 * t if L is None else L / 2
        if t > R / 4 + 1e-12:
            raise WraparoundError("t must stay below a quarter of the box")
        r, line = _radial_odd_line(grid_size, R, t)
        w = line**2  # |K|^2 r^2 dr
        return float(w[r < 0.9 * t].sum() / w.sum())
    L = 8.0 * t if L is None else L
    if t > L / 4 + 1e-12:
        raise WraparoundError("t must stay below a quarter of the box")
    if d in (1, 2):
        r, row = _periodic_cos_row(d, grid_size, L, t)
        w = row**2  # Cartesian cells carry the measure
        return float(w[r < 0.9 * t].sum() / w.sum())
    raise UnsupportedDimensionError("d in {1, 2, 3}")
