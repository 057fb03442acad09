"""Weighted perturbed resolvent near a real anchor, assembled from free resolvents.

Both cases produce ``G(lam) = mu R(lam) mu`` from the perturbed resolvent at a
fixed anchor ``z`` and free resolvents at ``lam``, through a linear system
``(I - K) G = F`` whose operator ``K`` is proportional to ``lam - z``.

Case a (magnetic, obstacle-free).  With ``N = [mu; mu_e G]`` and the
perturbation written as ``P - P0 = N^H Wh N``, the stacked weighted resolvent
``Y = N R N^H`` satisfies ``Y - Y_z = (I - Y_z Wh) D0 (I - Wh Y)`` where
``D0 = N (R0(lam) - R0(z)) N^H``.

Case b (exterior of a ball).  A smooth cutoff ``eta`` equal to 1 near the
obstacle glues the exterior resolvent at ``z`` to the free full-line
resolvent; the commutator ``[Delta, eta]`` and ``(1 - eta) V`` carry the
coupling.

Every solve uses a complex absorbing layer shared by the free and perturbed
operators, so the identities are exact in finite dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from decaylab import gevrey
from decaylab.kernels import TridiagonalLU
from decaylab.operators import (CAL, DiscreteOperator, Grid, PotentialSpec, build_operator,
                                matrix_norm)


class GammaTooLargeError(ValueError):
    """The contraction exceeds 1/2 at the requested distance from the anchor."""


@dataclass
class BornResult:
    G: np.ndarray
    contraction: float
    gamma: float
    case: str
    blocks: dict

    def compare(self, other: np.ndarray) -> float:
        return matrix_norm(self.G - other) / matrix_norm(other)


def _resolvent_dense(op: DiscreteOperator, lam, cal: CAL, rhs):
    d = op.diag.astype(complex) - complex(lam) ** 2 + 1j * cal.profile(op.grid)
    return TridiagonalLU(op.off, d, np.conj(op.off)).solve(rhs)


def _cal_for(grid):
    span = grid.R if grid.geometry == "line" else grid.length
    return CAL(width=0.5 * span, strength=4.0)


def direct_weighted_resolvent(op, lam, profile=None, cal=None):
    """Oracle ``mu (P + i W_cal - lam^2)^{-1} mu`` by dense tridiagonal solves."""
    cal = cal or _cal_for(op.grid)
    mu = op.mu_nodes(profile)
    return mu[:, None] * _resolvent_dense(op, lam, cal, np.diag(mu).astype(complex))


# ---------------------------------------------------------------------------
# case a
# ---------------------------------------------------------------------------


class _CaseA:
    def __init__(self, op: DiscreteOperator, profile, cal):
        self.op, self.cal = op, cal
        n = op.n
        self.free = build_operator(op.grid, PotentialSpec.free(op.pot.profile), check_bound=False)
        mu, mu_e = op.mu_nodes(profile), op.mu_edges(profile)
        I = np.eye(n)
        G = op.grad(I)  # (n+1) x n
        self.NH = np.hstack([np.diag(mu), (mu_e[:, None] * G).T]).astype(complex)  # n x (2n+1)
        self.N = self.NH.conj().T
        B = op.B_matvec(I.astype(complex))
        # the free operator carries the centrifugal term already
        Vt = np.diag(op.V - op.grid.centrifugal()) + B.conj().T @ B
        Vh = Vt / mu[:, None] / mu[None, :]
        Bh = B / mu_e[:, None] / mu[None, :]
        ne = n + 1
        self.Wh = np.block([[Vh, 1j * Bh.conj().T], [-1j * Bh, np.zeros((ne, ne))]])
        self.n = n

    def _stack(self, op, lam):
        return self.N @ _resolvent_dense(op, lam, self.cal, self.NH)

    def anchor(self, z):
        return self._stack(self.op, z), self._stack(self.free, z)

    def system(self, lam, anchor_data):
        Yz, Y0z = anchor_data
        D0 = self._stack(self.free, lam) - Y0z
        L = np.eye(Yz.shape[0]) - Yz @ self.Wh
        K = -(L @ D0 @ self.Wh)
        F = Yz + L @ D0
        return K, F

    def extract(self, Y):
        return Y[: self.n, : self.n]


# ---------------------------------------------------------------------------
# case b
# ---------------------------------------------------------------------------


def _ext_cutoff(r, a, w1, w2):
    """1 - eta: 0 on r <= a + w1, 1 on r >= a + w1 + w2, Gevrey ramp between."""
    x = np.clip((np.asarray(r) - a - w1) / w2, 0.0, 1.0)
    return gevrey.rho(x, 1.0)


class _CaseB:
    def __init__(self, op: DiscreteOperator, profile, cal, w1=0.5, w2=2.0):
        g = op.grid
        if g.geometry != "exterior" or g.d != 3:
            raise ValueError("case b assembly supports the d = 3 exterior grid")
        h = g.h
        m = g.a / h
        if abs(m - round(m)) > 1e-8:
            raise ValueError("obstacle radius must be a multiple of the grid step")
        m = int(round(m))
        N = g.n + m
        self.full = build_operator(Grid("radial", N, g.R), PotentialSpec.free(op.pot.profile), check_bound=False)
        self.op, self.cal, self.n, self.m, self.N = op, cal, g.n, m, N
        rf = self.full.grid.nodes
        chi = _ext_cutoff(rf, g.a, w1, w2)
        eta = 1.0 - chi
        if np.any(chi[: m + 1] != 0.0):
            raise ValueError("cutoff must vanish on the obstacle and its boundary node")
        self.E = np.zeros((N, g.n))
        self.E[m + np.arange(g.n), np.arange(g.n)] = 1.0
        self.mu_x = op.mu_nodes(profile)
        self.mu_f = self.full.mu_nodes(profile)
        Vf = self.E @ (op.V - g.centrifugal())
        Lap = -(self.full.dense() - np.diag(self.full.V))  # discrete Delta
        comm = Lap * eta[None, :] - eta[:, None] * Lap  # [Delta, eta]
        self.Cm = (comm - np.diag(chi * Vf)) @ self.E  # N x n
        self.Cmp = self.E.T @ (-comm - np.diag(chi * Vf))  # n x N
        self.eta_x = self.E.T @ eta
        self.chi = chi
        self.chiE = chi[:, None] * self.E

    def _ext(self, lam):
        mu = self.mu_x
        return mu[:, None] * _resolvent_dense(self.op, lam, self.cal, np.diag(mu).astype(complex))

    def _free(self, lam):
        mu = self.mu_f
        return mu[:, None] * _resolvent_dense(self.full, lam, self.cal, np.diag(mu).astype(complex))

    def anchor(self, z):
        Gz = self._ext(z)
        Q1 = self.E.T * self.chi[None, :] + Gz @ (self.Cmp / self.mu_x[:, None] / self.mu_f[None, :])
        return z, Gz, Q1, self._free(z)

    def system(self, lam, anchor_data):
        z, Gz, Q1, F0z = anchor_data
        D0 = self._free(lam) - F0z
        ex = self.eta_x * (2 - self.eta_x) / self.mu_x**2
        K = (complex(lam) ** 2 - complex(z) ** 2) * Gz * ex[None, :]
        K = K + Q1 @ D0 @ (self.Cm / self.mu_f[:, None] / self.mu_x[None, :])
        F = Gz + Q1 @ D0 @ self.chiE
        return K, F

    def extract(self, Y):
        return Y


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _assembler(op, profile, cal):
    return _CaseB(op, profile, cal) if op.pot.case == "b" else _CaseA(op, profile, cal)


def auto_gamma(op, z, profile=None, cal=None, gamma0=1.0, max_halvings=30):
    """Largest ``gamma0 / 2^j`` whose contraction at ``z +- gamma`` is at most 1/2."""
    cal = cal or _cal_for(op.grid)
    asm = _assembler(op, profile, cal)
    data = asm.anchor(z)
    gamma = gamma0
    for _ in range(max_halvings):
        worst = max(matrix_norm(asm.system(z + sgn * gamma, data)[0]) for sgn in (1, -1))
        if worst <= 0.5:
            return gamma
        gamma /= 2
    raise GammaTooLargeError("no admissible gamma found")


def born_series_assemble(op: DiscreteOperator, lam: float, z: float, gamma=None, profile=None, cal=None):
    """``mu R(lam) mu`` from the anchor ``z`` (|lam - z| <= gamma, contraction <= 1/2)."""
    cal = cal or _cal_for(op.grid)
    if gamma is None:
        gamma = auto_gamma(op, z, profile, cal)
    if abs(lam - z) > gamma:
        raise GammaTooLargeError(f"|lam - z| = {abs(lam - z):.3g} exceeds gamma = {gamma:.3g}")
    asm = _assembler(op, profile, cal)
    K, F = asm.system(lam, asm.anchor(z))
    q = matrix_norm(K)
    if q > 0.5:
        raise GammaTooLargeError(f"contraction {q:.3g} > 1/2")
    Y = np.linalg.solve(np.eye(K.shape[0]) - K, F)
    blocks = {"contraction": q}
    if op.pot.case == "a":
        n = op.n
        blocks["gradient_block"] = matrix_norm(K[n:, n:])
    return BornResult(asm.extract(Y), q, gamma, op.pot.case, blocks)
