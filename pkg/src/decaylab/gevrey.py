"""Decay profiles, weight sequences, the decay clock and Gevrey cutoffs.

Everything that grows factorially is kept in log space; ``m_k = (k!)^{1/s}``
overflows a double near k = 24 for s = 1/4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import PchipInterpolator
from scipy.special import expit, gammaln, logsumexp

from decaylab import kernels

KINDS = ("exp_power", "exp_power_log", "tabulated")


class DomainError(ValueError):
    """Argument outside the domain of the operation."""


class ResolutionError(ValueError):
    """Tabulated data too coarse for the requested differencing."""


class DivergenceError(ArithmeticError):
    """Supremum not attained on the scan range."""


class ExtensionError(ValueError):
    """A tabulated sequence cannot be extended past its stored length."""


class InsufficientRangeError(ValueError):
    pass


class NoCutoffError(ValueError):
    """No compactly supported cutoff exists in the requested class."""


class ContourRadiusError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Decay profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThetaProfile:
    """Decay profile ``Theta`` with the constants of the potential bound.

    ``exp_power``: ``Theta(r) = exp(-(r+1)^s)``.
    ``exp_power_log``: ``Theta(r) = exp(-(r+1)^s log(r+e)^beta)``.
    ``tabulated``: monotone cubic interpolation of ``log Theta`` on ``table_r``.

    ``c`` is the inverse-length constant and ``C`` the amplitude constant in
    ``|V| + |b| <= C Theta(c <x>)``.
    """

    kind: str = "exp_power"
    s: float = 1.0
    beta: float = 0.0
    c: float = 1.0
    C: float = 1.0
    table_r: tuple = ()
    table_theta: tuple = ()
    _interp: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind != "tabulated" and not 0 < self.s <= 1:
            raise DomainError("exponent s must lie in (0, 1]")
        if self.kind == "exp_power_log" and self.beta <= 0:
            raise DomainError("beta must be positive for the log variant")
        if self.c <= 0 or self.C <= 0:
            raise DomainError("c and C must be positive")
        if self.kind == "tabulated":
            r = np.asarray(self.table_r, dtype=float)
            th = np.asarray(self.table_theta, dtype=float)
            if r.shape != th.shape or r.size < 4:
                raise ResolutionError("tabulated profile needs at least 4 nodes")
            if r[0] != 0 or np.any(np.diff(r) <= 0):
                raise ValueError("table_r must start at 0 and increase")
            if np.any(th <= 0) or np.any(np.diff(th) >= 0):
                raise ValueError("tabulated Theta must be positive and strictly decreasing")
            object.__setattr__(self, "_interp", PchipInterpolator(r, np.log(th)))

    @classmethod
    def exp_power(cls, s, c=1.0, C=1.0):
        return cls(kind="exp_power", s=s, c=c, C=C)

    @classmethod
    def exp_power_log(cls, s, beta, c=1.0, C=1.0):
        return cls(kind="exp_power_log", s=s, beta=beta, c=c, C=C)

    @classmethod
    def tabulated(cls, r, theta, c=1.0, C=1.0):
        return cls(kind="tabulated", table_r=tuple(map(float, r)),
                   table_theta=tuple(map(float, theta)), c=c, C=C)

    # -- exponent g with Theta = exp(-g) ----------------------------------
    def _g(self, r):
        if self.kind == "exp_power":
            return (r + 1.0) ** self.s
        return (r + 1.0) ** self.s * np.log(r + math.e) ** self.beta

    def _g_derivs(self, r):
        """First and second derivatives of the exponent g (built-in kinds)."""
        s, beta = self.s, self.beta
        p = (r + 1.0) ** s
        p1 = s * (r + 1.0) ** (s - 1)
        p2 = s * (s - 1) * (r + 1.0) ** (s - 2)
        if self.kind == "exp_power":
            return p1, p2
        L = np.log(r + math.e)
        q = L**beta
        q1 = beta * L ** (beta - 1) / (r + math.e)
        q2 = (beta * (beta - 1) * L ** (beta - 2) - beta * L ** (beta - 1)) / (r + math.e) ** 2
        return p1 * q + p * q1, p2 * q + 2 * p1 * q1 + p * q2

    def log_theta(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise DomainError("Theta is defined for r >= 0 only")
        if self.kind == "tabulated":
            if np.any(r > self.table_r[-1]):
                raise DomainError("r beyond the tabulated range")
            return self._interp(r)
        return -self._g(r)

    def __call__(self, r):
        return np.exp(self.log_theta(r))

    def derivative_ratios(self, r):
        """``(Theta'/Theta, Theta''/Theta)`` at ``r``."""
        r = np.asarray(r, dtype=float)
        if self.kind != "tabulated":
            g1, g2 = self._g_derivs(r)
            return -g1, g1 * g1 - g2
        h = 1e-5 * (1.0 + r)
        lo = r - h
        if np.any(lo < 0) or np.any(r + h > self.table_r[-1]):
            # one-sided stencil is not offered; keep the differencing honest
            raise ResolutionError("central difference leaves the tabulated range")
        spacing = np.diff(self.table_r).max()
        if spacing > 0.5 * (1.0 + self.table_r[-1]) / 4:
            raise ResolutionError("tabulated profile too coarse for differencing")
        t0 = self(r)
        tp, tm = self(r + h), self(lo)
        return (tp - tm) / (2 * h * t0), (tp - 2 * t0 + tm) / (h * h * t0)

    def to_record(self):
        return {"kind": self.kind, "s": self.s, "beta": self.beta, "c": self.c, "C": self.C,
                "values": list(self.table_theta)}


def theta_eval(profile: ThetaProfile, r: float) -> float:
    """Evaluate the decay profile; raises :class:`DomainError` for r < 0."""
    if r < 0:
        raise DomainError("Theta is defined for r >= 0 only")
    return float(profile(r))


def mu_weight(profile: ThetaProfile, x_radius):
    """The weight ``mu(x) = sqrt(Theta(c <x>))`` as a function of |x|."""
    x = np.asarray(x_radius, dtype=float)
    if np.any(x < 0):
        raise DomainError("radius must be nonnegative")
    bracket = np.sqrt(1.0 + x * x)
    out = np.exp(0.5 * profile.log_theta(profile.c * bracket))
    return float(out) if out.ndim == 0 else out


def log_mu_weight(profile: ThetaProfile, x_radius):
    x = np.asarray(x_radius, dtype=float)
    return 0.5 * profile.log_theta(profile.c * np.sqrt(1.0 + x * x))


@dataclass
class ThetaConditionReport:
    C_tilde: float
    C1_by_C2: dict
    bounded_by_C2: dict
    best_C2: float | None
    best_C1: float | None
    violation: bool

    def to_record(self):
        return {"C_tilde": self.C_tilde, "C1_by_C2": {str(k): v for k, v in self.C1_by_C2.items()},
                "bounded_by_C2": {str(k): v for k, v in self.bounded_by_C2.items()},
                "best_C2": self.best_C2, "best_C1": self.best_C1, "violation": self.violation}


def check_theta_conditions(profile, r_grid, pair_grid=None, C2_trials=(0.5, 1.0, 2.0)):
    """Empirical constants for the derivative and product conditions on Theta.

    ``C_tilde`` is the smallest constant with ``|Theta^(j)| <= C_tilde Theta``
    (j = 1, 2) on ``r_grid``.  For each trial ``C2`` the smallest ``C1`` with
    ``Theta(r1) Theta(r2) <= C1 Theta(C2 (r1 + r2))`` is computed on the pair
    grid (the outer product of ``pair_grid`` with itself, default ``r_grid``).
    A trial whose log-ratio is still rising at the outer edge of the grid is
    reported unbounded.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.size == 0:
        raise ValueError("empty r_grid")
    d1, d2 = profile.derivative_ratios(r_grid)
    C_tilde = float(max(np.abs(d1).max(), np.abs(d2).max()))

    pr = np.asarray(r_grid if pair_grid is None else pair_grid, dtype=float)
    pr = pr[pr > 0]
    if pr.size == 0:
        raise ValueError("pair grid needs positive radii")
    r1, r2 = np.meshgrid(pr, pr, indexing="ij")
    lt1 = profile.log_theta(r1)
    lt2 = profile.log_theta(r2)
    C1s, bounded = {}, {}
    rmax = pr.max() if profile.kind != "tabulated" else profile.table_r[-1]
    for C2 in C2_trials:
        target = C2 * (r1 + r2)
        ok = target <= rmax
        lr = np.where(ok, lt1 + lt2 - profile.log_theta(np.minimum(target, rmax)), -np.inf)
        best = lr.max()
        diag = np.array([lt1[i, i] + lt2[i, i] - profile.log_theta(min(C2 * 2 * pr[i], rmax))
                         for i in range(pr.size) if C2 * 2 * pr[i] <= rmax])
        rising = diag.size >= 3 and diag[-1] > diag[-2] > diag[-3] and diag[-1] >= best - 1e-12
        bounded[C2] = bool(np.isfinite(best) and not rising)
        C1s[C2] = float(np.exp(best)) if bounded[C2] else math.inf
    finite = {k: v for k, v in C1s.items() if bounded[k]}
    if finite:
        best_C2 = min(finite, key=lambda k: (finite[k], k))
        # prefer C2 = 1 on ties: it is the natural scale
        if 1.0 in finite and math.isclose(finite[1.0], finite[best_C2], rel_tol=1e-12):
            best_C2 = 1.0
        best_C1 = finite[best_C2]
    else:
        best_C2 = best_C1 = None
    violation = not np.isfinite(C_tilde) or not finite
    return ThetaConditionReport(C_tilde, C1s, bounded, best_C2, best_C1, violation)


def compute_m_tilde(profile: ThetaProfile, k: int, rtol: float = 1e-10) -> float:
    """``sup_{r>=0} (r+1)^k sqrt(Theta(r))`` by geometric scan plus golden section."""
    return float(np.exp(log_m_tilde(profile, k, rtol)))


def log_m_tilde(profile, k, rtol=1e-10):
    if k < 0:
        raise DomainError("k must be nonnegative")

    def obj(r):
        return k * np.log1p(r) + 0.5 * profile.log_theta(r)

    if profile.kind == "tabulated":
        scan = np.concatenate([[0.0], 2.0 ** np.arange(-20, 200)])
        scan = scan[scan <= profile.table_r[-1]]
    else:
        scan = np.concatenate([[0.0], 2.0 ** np.arange(-20, 200)])
    vals = obj(scan)
    j = int(np.argmax(vals))
    if j == scan.size - 1:
        raise DivergenceError("objective still increasing at the end of the scan")
    if j == 0:
        res = optimize.minimize_scalar(lambda r: -obj(r), bounds=(0.0, scan[1]), method="bounded",
                                       options={"xatol": 1e-14})
        return float(max(vals[0], -res.fun))
    lo, mid, hi = np.log(scan[j - 1]) if j > 1 else np.log(scan[1]) - 1.0, np.log(scan[j]), np.log(scan[j + 1])
    res = optimize.minimize_scalar(lambda x: -obj(np.exp(x)), bracket=(lo, mid, hi), method="golden",
                                   tol=max(rtol, 1e-12))
    return float(max(vals[j], -res.fun))


# ---------------------------------------------------------------------------
# Weight sequences
# ---------------------------------------------------------------------------


def _closed_form_log(provenance, s, beta, K):
    k = np.arange(K + 1, dtype=float)
    out = gammaln(k + 1) / s
    if provenance == "factorial_power_log":
        out = out - beta * k / s * np.log(np.log(k + math.e))
    return out


@dataclass(frozen=True)
class WeightSequence:
    """The growth scale ``m_0..m_K`` held as logarithms.

    ``provenance`` is ``factorial_power`` (``(k!)^{1/s}``),
    ``factorial_power_log`` (``(k!)^{1/s} log(k+e)^{-beta k/s}``) or
    ``tabulated``.  ``C3``/``C4`` are the admissibility constants if known.
    """

    log_values: tuple
    provenance: str = "tabulated"
    s: float = 1.0
    beta: float = 0.0
    C3: float | None = None
    C4: float | None = None

    def __post_init__(self):
        lv = np.asarray(self.log_values, dtype=float)
        if lv.ndim != 1 or lv.size < 1 or lv[0] != 0.0:
            raise ValueError("m_0 must equal 1")
        if self.provenance == "tabulated" and np.any(np.diff(lv) < 0):
            raise ValueError("tabulated sequence must be nondecreasing")

    @classmethod
    def gevrey(cls, s, K=24, beta=0.0):
        prov = "factorial_power_log" if beta else "factorial_power"
        return cls(tuple(_closed_form_log(prov, s, beta, K)), prov, s, beta)

    @classmethod
    def from_values(cls, values, C3=None, C4=None):
        return cls(tuple(np.log(np.asarray(values, dtype=float))), "tabulated", C3=C3, C4=C4)

    @property
    def K(self):
        return len(self.log_values) - 1

    @property
    def logs(self):
        return np.asarray(self.log_values, dtype=float)

    @property
    def values(self):
        return np.exp(self.logs)

    def is_increasing(self):
        return bool(np.all(np.diff(self.logs) >= 0))

    def extended(self, K):
        if K <= self.K:
            return self
        if self.provenance == "tabulated":
            raise ExtensionError(f"tabulated sequence has only K={self.K}")
        return WeightSequence(tuple(_closed_form_log(self.provenance, self.s, self.beta, K)),
                              self.provenance, self.s, self.beta, self.C3, self.C4)

    def with_constants(self, C3, C4):
        return WeightSequence(self.log_values, self.provenance, self.s, self.beta, C3, C4)

    def to_record(self):
        return {"kind": self.provenance, "s": self.s, "beta": self.beta,
                "values": [float(v) for v in self.values], "C3": self.C3, "C4": self.C4}


class WeightCheck(NamedTuple):
    C3: float
    C4: float
    ok: bool


def check_weight_sequence(seq: WeightSequence, mtilde, K: int) -> WeightCheck:
    """Smallest admissibility constants of ``seq`` over ``k <= K``.

    ``mtilde`` holds ``m~_k`` (plain values); only indices up to ``K//2 - 1``
    are used.
    """
    if K < 4:
        raise InsufficientRangeError("need K >= 4")
    if seq.K < K:
        raise InsufficientRangeError(f"sequence stores K={seq.K} < {K}")
    lm = seq.logs
    lmt = np.log(np.asarray(mtilde, dtype=float))
    kmax = K // 2 - 1
    if lmt.size < kmax + 1:
        raise InsufficientRangeError("mtilde too short")
    c3 = -math.inf
    for k in range(kmax + 1):
        num = logsumexp([math.lgamma(k + 1), lmt[k], lm[k + 2], 0.5 * lm[2 * k]])
        c3 = max(c3, (num - lm[k]) / (k + 1))
    c4 = -math.inf
    for k in range(K + 1):
        nu = np.arange(k + 1)
        val = lm[nu] + lm[k - nu] + gammaln(k + 1) - gammaln(nu + 1) - gammaln(k - nu + 1) - lm[k]
        c4 = max(c4, float(val.max()))
    C3, C4 = math.exp(c3), math.exp(c4)
    return WeightCheck(C3, C4, bool(np.isfinite(C3) and np.isfinite(C4)))


def mtilde_table(profile, K):
    return np.array([compute_m_tilde(profile, k) for k in range(K + 1)])


def k_of_t(seq: WeightSequence, t: float) -> int:
    """Largest ``k >= 1`` with ``m_k^{1/k} <= t`` (0 if there is none)."""
    if t <= 1:
        raise DomainError("t must exceed 1")
    logt = math.log(t)
    while True:
        lm = seq.logs
        k = np.arange(1, seq.K + 1)
        env = lm[1:] / k
        if env[-1] > logt:
            break
        if seq.provenance == "tabulated":
            raise ExtensionError("sequence exhausted before m_k^{1/k} exceeded t")
        seq = seq.extended(2 * seq.K + 8)
    below = np.nonzero(env <= logt)[0]
    return int(k[below[-1]]) if below.size else 0


def k_of_t_array(seq, t):
    """Vectorised :func:`k_of_t`; entries with ``t <= 1`` map to 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=int)
    for idx, tv in np.ndenumerate(t):
        out[idx] = k_of_t(seq, tv) if tv > 1 else 0
    return out


# ---------------------------------------------------------------------------
# Gevrey cutoff
# ---------------------------------------------------------------------------

_GLUE = (0.5, 0.75, 1.75, 2.0)


def _bump_exponent_diff(x, a):
    # E(x) = x^{-a} - (1-x)^{-a}; rho = 1 / (1 + exp(E))
    return x ** (-a) - (1.0 - x) ** (-a)


def rho(x, a):
    """Smooth step: 0 for x <= 0, 1 for x >= 1, ``f(x)/(f(x)+f(1-x))`` between."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 1.0, 1.0, 0.0)
    inner = (x > 0) & (x < 1)
    xi = x[inner]
    out[inner] = expit(-_bump_exponent_diff(xi, a))
    return out if out.ndim else float(out)


def _rho_complex(w, a, shifted=False):
    # shifted=True returns rho - 1 = -1/(1+exp(-E)) without cancellation
    E = _bump_exponent_diff(w.astype(np.complex128), a)
    val = _complex_logistic(-E)
    if shifted:
        val = -_complex_logistic(E)
    return val, E


def _complex_logistic(z):
    # 1/(1+exp(-z)) evaluated on the side where the exponential cannot overflow
    out = np.empty_like(z)
    pos = z.real >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class GevreyCutoff:
    """Normalised Gevrey bump ``zeta = chi / I`` supported in [1/2, 2]."""

    s: float
    a: float
    I: float

    def chi(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        return rho(4 * (sigma - 0.5), self.a) * rho(4 * (2.0 - sigma), self.a)

    def zeta(self, sigma):
        return self.chi(sigma) / self.I

    @property
    def gevrey_order(self):
        return 1.0 + 1.0 / self.a

    def to_record(self):
        return {"a": self.a, "s": self.s, "I": self.I}

    @classmethod
    def from_record(cls, rec):
        return build_cutoff(rec["s"])


def build_cutoff(s: float) -> GevreyCutoff:
    """Construct the cutoff with Gevrey order ``1/s`` (bump exponent ``a = s/(1-s)``)."""
    if s <= 0:
        raise DomainError("s must be positive")
    if s >= 1:
        raise NoCutoffError("no compactly supported cutoff with analytic-class bounds (s >= 1)")
    a = s / (1.0 - s)
    probe = GevreyCutoff(s, a, 1.0)
    left, _ = integrate.quad(probe.chi, 0.5, 0.75, epsabs=1e-13, epsrel=1e-13, limit=200)
    right, _ = integrate.quad(probe.chi, 1.75, 2.0, epsabs=1e-13, epsrel=1e-13, limit=200)
    return GevreyCutoff(s, a, 1.0 + left + right)


def _piece(sigma):
    """Which analytic piece of zeta contains sigma: 0 off-support, 1 left ramp, 2 plateau, 3 right ramp."""
    if sigma <= 0.5 or sigma >= 2.0:
        return 0
    if sigma < 0.75:
        return 1
    if sigma <= 1.75:
        return 2
    return 3


def _winding_status(E):
    """Classify the circle for ``1 + exp(E)``: "ok", "pole" (a zero inside) or "unresolved".

    Argument principle on the rescaled ``exp(-m) + exp(E - m)``, ``m = max(Re E, 0)``,
    which has the phase of ``1 + exp(E)`` but cannot overflow.  Phase steps of
    more than pi/2 between nodes mean the circle is undersampled.
    """
    m = np.maximum(E.real, 0.0)
    h = np.exp(-m) + np.exp(E - m)
    if not np.all(np.isfinite(h)) or np.any(h == 0):
        return "unresolved"
    steps = np.angle(np.roll(h, -1) / h)
    if np.max(np.abs(steps)) > np.pi / 2:
        return "unresolved"
    return "ok" if abs(steps.sum()) < np.pi else "pole"


_MAX_NODES = 1 << 13


def _zeta_analytic(cut, z, piece, shifted=False):
    w = 4 * (z - 0.5) if piece == 1 else 4 * (2.0 - z)
    val, E = _rho_complex(w, cut.a, shifted)
    return val / cut.I, E


def cutoff_eval(cut: GevreyCutoff, sigma: float, order: int = 0) -> float:
    """Value or derivative of ``zeta`` at ``sigma``.

    Derivatives come from the Cauchy integral of the analytic continuation of
    the active piece, discretised by the trapezoid rule on a circle (spectrally
    accurate).  The radius starts at half the distance to the nearest gluing
    point and is halved until ``|Im E| < pi/2`` on the circle, which keeps the
    poles of ``1/(1+exp(E))`` outside the disc.
    """
    if order < 0 or order > 30:
        raise DomainError("order must be in [0, 30]")
    piece = _piece(sigma)
    if order == 0:
        return float(cut.zeta(sigma))
    dist = min(abs(sigma - g) for g in _GLUE)
    if dist < 1e-8:
        raise ContourRadiusError("sigma too close to a gluing point for a contour")
    if piece in (0, 2):
        return 0.0
    radius = dist / 2.0
    N = 64 * (order + 1)
    # near the plateau end the ramp is ~1; differentiate rho - 1 there so the
    # contour sum does not cancel an O(1) constant against O(r^k) terms
    w0 = 4 * (sigma - 0.5) if piece == 1 else 4 * (2.0 - sigma)
    shifted = w0 > 0.5
    # prefer more nodes over a smaller circle: roundoff grows like r^-order
    for _ in range(200):
        circle = np.exp(2j * np.pi * np.arange(N) / N)
        vals, E = _zeta_analytic(cut, sigma + radius * circle, piece, shifted)
        status = _winding_status(E) if np.all(np.isfinite(vals)) else "unresolved"
        if status == "ok":
            break
        if status == "unresolved" and N < _MAX_NODES:
            N *= 2
        else:
            radius /= 2.0
    coeff = np.mean(vals * circle ** (-order))
    if coeff == 0:
        return 0.0
    logmag = math.lgamma(order + 1) + math.log(abs(coeff.real) or abs(coeff)) - order * math.log(radius)
    return math.copysign(math.exp(min(logmag, 709.0)), coeff.real) if logmag < 709.7 else math.copysign(math.inf, coeff.real)


def zeta_derivative_sup(cut, order, n_sample=400):
    """Sampled ``sup |zeta^(order)|`` over both ramps (plateau derivatives vanish)."""
    pts = np.concatenate([np.linspace(0.5, 0.75, n_sample + 2)[1:-1],
                          np.linspace(1.75, 2.0, n_sample + 2)[1:-1]])
    return max(abs(cutoff_eval(cut, p, order)) for p in pts)


def psi_eval(cut: GevreyCutoff, lam):
    """``psi(lambda) = int_{-inf}^lambda zeta``, nondecreasing from 0 to 1."""
    lam = float(lam)
    if lam <= 0.5:
        return 0.0
    if lam >= 2.0:
        return 1.0
    # the plateau integrates exactly to (lam - 3/4)/I
    left_ramp = lambda x: cut.zeta(x)  # noqa: E731
    if lam <= 0.75:
        v, _ = integrate.quad(left_ramp, 0.5, lam, epsabs=1e-14, epsrel=1e-13, limit=200)
        return float(v)
    head, _ = integrate.quad(left_ramp, 0.5, 0.75, epsabs=1e-14, epsrel=1e-13, limit=200)
    if lam <= 1.75:
        return float(head + (lam - 0.75) / cut.I)
    tail, _ = integrate.quad(left_ramp, 1.75, lam, epsabs=1e-14, epsrel=1e-13, limit=200)
    return float(min(1.0, head + 1.0 / cut.I + tail))


def psi_array(cut, lam):
    """:func:`psi_eval` on an array via a dense cumulative table (accuracy ~1e-12)."""
    lam = np.asarray(lam, dtype=float)
    out = np.zeros(lam.shape)
    out[lam >= 2.0] = 1.0
    mid = (lam > 0.5) & (lam < 2.0)
    if np.any(mid):
        out[mid] = _psi_table(cut)(lam[mid])
    return out


_PSI_CACHE: dict = {}


def _psi_table(cut):
    key = (cut.s, cut.a, cut.I)
    if key not in _PSI_CACHE:
        grid = np.linspace(0.5, 2.0, 6001)
        vals = np.array([psi_eval(cut, g) for g in grid[::100]])
        coarse = grid[::100]
        # refine with Gauss-Legendre per fine cell, anchored at the coarse quad values
        xs, ws = np.polynomial.legendre.leggauss(12)
        fine = np.zeros_like(grid)
        for i in range(1, grid.size):
            a, b = grid[i - 1], grid[i]
            x = 0.5 * (b - a) * xs + 0.5 * (a + b)
            fine[i] = fine[i - 1] + 0.5 * (b - a) * np.dot(ws, cut.zeta(x))
        drift = np.interp(grid, coarse, vals - fine[::100])
        fine = np.clip(fine + drift, 0.0, 1.0)
        fine = np.maximum.accumulate(fine)
        from scipy.interpolate import CubicSpline

        _PSI_CACHE[key] = CubicSpline(grid, fine)
    return _PSI_CACHE[key]


# ---------------------------------------------------------------------------
# Bound propagation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DerivativeBoundSeq:
    """Per-order bounds ``b_0..b_K`` (as logs) with scale ``M`` and base constant."""

    log_bounds: tuple
    M: float = 1.0
    base_constant: float = 1.0

    @classmethod
    def geometric(cls, M, C, seq: WeightSequence, K=None):
        """Bounds ``M C^{k+1} m_k``."""
        K = seq.K if K is None else K
        k = np.arange(K + 1)
        lb = math.log(M) + (k + 1) * math.log(C) + seq.logs[: K + 1]
        return cls(tuple(lb), M, C)

    @property
    def bounds(self):
        return np.exp(np.asarray(self.log_bounds))

    @property
    def K(self):
        return len(self.log_bounds) - 1


def _smallest_constant(log_b, log_M, seq, K):
    # smallest C with b_k <= M C^{k+1} m_k for all k <= K
    k = np.arange(K + 1)
    return float(np.exp(np.max((np.asarray(log_b[: K + 1]) - log_M - seq.logs[: K + 1]) / (k + 1))))


def leibniz_bound_propagate(factors: Sequence[DerivativeBoundSeq], seq: WeightSequence, K: int):
    """Bounds for the derivatives of a product from bounds on each factor.

    Folds pairwise with the exact Leibniz sum
    ``sum_nu binom(k, nu) b1_nu b2_{k-nu}`` and reports the smallest ``C`` with
    ``sum <= M1 M2 C^{k+1} m_k``.
    """
    if not factors:
        raise ValueError("need at least one factor")
    if any(f.K < K for f in factors) or seq.K < K:
        raise InsufficientRangeError("K exceeds stored bound lengths")
    if len(factors) == 1:
        return factors[0]
    acc_log = np.asarray(factors[0].log_bounds[: K + 1])
    M = factors[0].M
    for f in factors[1:]:
        acc_log = kernels.log_binom_conv(acc_log, np.asarray(f.log_bounds[: K + 1]))
        M *= f.M
    C = _smallest_constant(acc_log, math.log(M), seq, K)
    return DerivativeBoundSeq(tuple(acc_log), M, C)


@dataclass(frozen=True)
class InverseBoundReport:
    B: float
    closed_form: DerivativeBoundSeq
    recursion_log: tuple
    consistent: bool

    @property
    def recursion(self):
        return np.exp(np.asarray(self.recursion_log))


class ConsistencyError(ArithmeticError):
    pass


def inverse_bound_propagate(C: float, Ctilde: float, seq: WeightSequence, K: int,
                            strict: bool = True) -> InverseBoundReport:
    """Derivative bounds for an inverse: closed form ``B^{k+1} m_k`` plus the raw recursion.

    ``B = max(2C, 2 C Ctilde C4)`` with ``C4`` from ``seq``.  The recursion is
    run from ``b_0 = Ctilde`` and must stay below the closed form; otherwise a
    :class:`ConsistencyError` is raised (``strict``) or flagged.
    """
    if C <= 0 or Ctilde <= 0:
        raise DomainError("C and Ctilde must be positive")
    if seq.C4 is None:
        raise ValueError("sequence has no stored C4")
    if seq.K < K:
        raise InsufficientRangeError("sequence too short")
    B = max(2 * C, 2 * C * Ctilde * seq.C4)
    closed = DerivativeBoundSeq.geometric(1.0, B, seq, K)
    rec = kernels.inverse_recursion(math.log(C), math.log(Ctilde), seq.logs, K)
    ok = bool(np.all(rec <= np.asarray(closed.log_bounds) + 0.0))
    if strict and not ok:
        raise ConsistencyError("recursion exceeds B^{k+1} m_k: stored C4 does not match the sequence")
    return InverseBoundReport(B, closed, tuple(rec), ok)
