"""Wave evolution by spectral calculus, weighted local energy and decay fits.

``u(t) = cos(t sqrt(P)) f1 + sin(t sqrt(P))/sqrt(P) f2``, optionally filtered
by ``psi(sqrt(P)/delta)`` which removes frequencies below ``delta/2``.
Grid functions carry the measure ``h`` in all norms.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import curve_fit

from decaylab import gevrey
from decaylab.operators import AssumptionError, DiscreteOperator, SpectralDecomposition


class DimensionError(ValueError):
    pass


class StepError(ValueError):
    """Finite-difference step below the rounding floor."""


class ExtendTraceError(ValueError):
    """Tail beyond the last sample dominates the integral."""


class ContaminatedTraceError(ValueError):
    """Trace grows again after decaying (boundary reflection)."""


@dataclass
class WaveState:
    u: np.ndarray
    v: np.ndarray
    t: float


@dataclass
class WaveSeries:
    times: np.ndarray
    U: np.ndarray  # (n_t, n)
    V: np.ndarray
    delta: float
    filtered: bool

    def __len__(self):
        return self.times.size

    def state(self, i):
        return WaveState(self.U[i], self.V[i], float(self.times[i]))


def spectral_filter(decomp: SpectralDecomposition, delta: float, cut: gevrey.GevreyCutoff | None):
    """``psi_delta(sqrt(e_j))`` per mode (ones when unfiltered)."""
    om = np.sqrt(np.maximum(decomp.values, 0.0))
    if cut is None or delta == 0:
        return np.ones_like(om)
    if delta < 0:
        raise ValueError("delta >= 0")
    return gevrey.psi_array(cut, om / delta)


def _check_nonneg(decomp):
    scale = max(1.0, float(np.max(np.abs(decomp.values))))
    if np.any(decomp.values < -1e-10 * scale):
        raise AssumptionError("negative eigenvalue: the evolution assumes P >= 0")


def propagate(decomp: SpectralDecomposition, f1, f2, times, delta=0.0, cut=None) -> WaveSeries:
    """Exact modewise evolution at the requested times (no time stepping)."""
    _check_nonneg(decomp)
    times = np.asarray(times, dtype=float)
    Vec = decomp.vectors
    a = Vec.conj().T @ np.asarray(f1, dtype=complex)
    b = Vec.conj().T @ np.asarray(f2, dtype=complex)
    filt = spectral_filter(decomp, delta, cut)
    a, b = a * filt, b * filt
    om = np.sqrt(np.maximum(decomp.values, 0.0))
    wt = np.outer(times, om)
    c, s = np.cos(wt), np.sin(wt)
    # sin(t w)/w with the t-linear limit at w = 0
    sw = times[:, None] * np.sinc(wt / np.pi)
    U = (c * a + sw * b) @ Vec.T
    Vd = (-(om * s) * a + c * b) @ Vec.T
    return WaveSeries(times, U, Vd, float(delta), cut is not None and delta > 0)


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------


@dataclass
class EnergyTrace:
    times: np.ndarray
    E: np.ndarray
    E_dt: np.ndarray
    E_grad: np.ndarray
    E_mass: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must increase strictly")
        if np.any(self.E < 0):
            raise ValueError("energy must be nonnegative")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "E", "E_dt_term", "E_grad_term", "E_mass_term"])
            for row in zip(self.times, self.E, self.E_dt, self.E_grad, self.E_mass):
                w.writerow([repr(float(x)) for x in row])


def _weights(op: DiscreteOperator, weight):
    """Node and edge weights from a profile (``mu = sqrt(Theta(c<x>))``) or a callable of radius."""
    if weight is None or isinstance(weight, gevrey.ThetaProfile):
        return op.mu_nodes(weight), op.mu_edges(weight)
    return np.asarray(weight(op.grid.radii), dtype=float), np.asarray(weight(op.grid.edge_radii), dtype=float)


def _energy_terms(op: DiscreteOperator, u, v, mu, mu_e):
    h = op.h
    dt = h * np.sum(np.abs(mu * v) ** 2, axis=-1)
    grad = h * np.sum(np.abs(mu_e * op.magnetic_grad(u.T).T) ** 2, axis=-1)
    mass = h * np.sum(np.abs(mu * u) ** 2, axis=-1)
    return dt, grad, mass


def local_energy(state: WaveState, op: DiscreteOperator, weight=None):
    """``||mu v||^2 + ||mu (i grad + b) u||^2 + ||mu u||^2`` (plain gradient when b = 0)."""
    if state.u.shape != (op.n,) or state.v.shape != (op.n,):
        raise DimensionError("state does not live on this grid")
    mu, mu_e = _weights(op, weight)
    return float(sum(_energy_terms(op, state.u, state.v, mu, mu_e)))


def energy_trace(series: WaveSeries, op: DiscreteOperator, weight=None, meta=None) -> EnergyTrace:
    if series.U.shape[1] != op.n:
        raise DimensionError("series does not live on this grid")
    mu, mu_e = _weights(op, weight)
    dt, grad, mass = _energy_terms(op, series.U, series.V, mu, mu_e)
    m = {"delta": series.delta, "filtered": series.filtered, "potential_hash": op.pot.content_hash()}
    m.update(meta or {})
    return EnergyTrace(series.times.copy(), dt + grad + mass, dt, grad, mass, m)


def full_energy(state: WaveState, op: DiscreteOperator):
    """Unweighted conserved energy ``||v||^2 + <P u, u>``."""
    h = op.h
    return float(h * (np.sum(np.abs(state.v) ** 2) + np.real(np.vdot(state.u, op.matvec(state.u)))))


def energy_flux_operator(op: DiscreteOperator, weight=None):
    """Sparse ``N(mu) = mu^{-1}(D^H mu_e^2 D - mu^2 D^H D - V mu^2)``.

    With ``u_tt = -P u`` this gives ``dE/dt = 2 Re<N(mu) u, mu u_t> + 2 Re<mu u_t, mu u>``
    exactly for the discrete energy.
    """
    n, h = op.n, op.h
    mu, mu_e = _weights(op, weight)
    if np.any(mu <= 0):
        raise ValueError("N(mu) needs a positive weight")
    G = sparse.diags([np.full(n, 1.0 / h), np.full(n, -1.0 / h)], [0, -1], shape=(n + 1, n))
    A = sparse.diags([np.full(n, 0.5), np.full(n, 0.5)], [0, -1], shape=(n + 1, n))
    D = (1j * G + sparse.diags(op.b_edges) @ A).tocsr()
    DH = D.conj().T
    M = DH @ sparse.diags(mu_e**2) @ D - sparse.diags(mu**2) @ (DH @ D) - sparse.diags(op.V * mu**2)
    return (sparse.diags(1.0 / mu) @ M).tocsr()


def energy_derivative_residual(states, op: DiscreteOperator, weight=None, floor=1e-300, N=None):
    """Centered ``dE/dt`` from states at ``t - h, t, t + h`` against the flux identity.

    Returns ``|fd - flux| / (|fd| + floor)``; zero for a zero state.
    """
    sm, s0, sp = states
    h = 0.5 * (sp.t - sm.t)
    if not h > 0:
        raise StepError("states must be ordered in time")
    if h < 1e-7 * max(1.0, abs(s0.t)):
        raise StepError("time step below the rounding floor")
    fd = (local_energy(sp, op, weight) - local_energy(sm, op, weight)) / (2 * h)
    N = energy_flux_operator(op, weight) if N is None else N
    mu = _weights(op, weight)[0]
    flux = 2 * np.real(np.vdot(N @ s0.u, mu * s0.v)) * op.h + 2 * np.real(np.vdot(mu * s0.v, mu * s0.u)) * op.h
    if fd == 0 and flux == 0:
        return 0.0
    return float(abs(fd - flux) / (abs(fd) + floor))


def default_step(decomp: SpectralDecomposition):
    return 1e-3 / math.sqrt(max(float(decomp.values.max()), 1e-300))


# ---------------------------------------------------------------------------
# integral estimates
# ---------------------------------------------------------------------------


@dataclass
class IntegralReport:
    k: list
    C: list  # per k: minimal C with the bound over t_grid
    C_refined: list
    drift: float
    stable: bool
    decays: bool
    tail_fraction: float


def _tail_integrals(times, E, k):
    """``int_t^inf E`` at every sample (trapezoid + tail ``E(T) T / (2k+1)``)."""
    seg = 0.5 * (E[1:] + E[:-1]) * np.diff(times)
    cum = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    tail = E[-1] * times[-1] / (2 * k + 1)
    return cum + tail, tail


def integral_estimate_check(trace: EnergyTrace, seq: gevrey.WeightSequence, ks=(0, 1, 2), t_grid=None,
                            f_norm2=1.0, raise_on_short=True):
    """Smallest ``C`` with ``int_t^inf E <= C^{2k+2} m_k^2 t^{-2k} ||f||^2`` on ``t_grid``.

    ``decays`` is False when for some k >= 1 the supremum is attained at the
    last grid time (the bound keeps growing with t, i.e. no decay).
    ``stable`` compares against the same fit on the midpoint-refined grid;
    ``drift`` is max/min of C over the k >= 1 entries.
    Raises ExtendTraceError when the extrapolated tail past the trace is more
    than half the integral at the last grid time; pass ``raise_on_short=False``
    to inspect a slowly decaying trace anyway.
    """
    times, E = trace.times, trace.E
    if t_grid is None:
        t_grid = np.geomspace(max(times[0], 1.0), times[-1] / 2, 12)
    t_grid = np.asarray(t_grid, dtype=float)
    refined = np.sort(np.concatenate([t_grid, np.sqrt(t_grid[1:] * t_grid[:-1])]))
    Cs, Cr, decays, tail_frac = [], [], True, 0.0
    for k in ks:
        I, tail = _tail_integrals(times, E, k)
        Ig = np.interp(t_grid, times, I)
        tail_frac = max(tail_frac, tail / max(Ig[-1], 1e-300))
        lm = seq.logs[k] if k <= seq.K else seq.extended(k).logs[k]

        def best(tg, Ivals):
            val = np.log(np.maximum(Ivals, 1e-300)) + 2 * k * np.log(tg) - 2 * lm - math.log(f_norm2)
            return float(np.exp(val.max() / (2 * k + 2))), int(np.argmax(val))

        c, arg = best(t_grid, Ig)
        Cs.append(c)
        Cr.append(best(refined, np.interp(refined, times, I))[0])
        if k >= 1 and arg == t_grid.size - 1:
            decays = False
    if raise_on_short and tail_frac > 0.5:
        raise ExtendTraceError("tail beyond the trace dominates; extend T")
    # k = 0 is the finiteness base case; drift compares the k >= 1 constants
    pos = [c for k, c in zip(ks, Cs) if k >= 1] or Cs
    drift = max(pos) / min(pos) if min(pos) > 0 else math.inf
    stable = all(abs(a - b) <= 0.1 * b for a, b in zip(Cs, Cr))
    return IntegralReport(list(ks), Cs, Cr, float(drift), bool(stable), bool(decays), float(tail_frac))


# ---------------------------------------------------------------------------
# decay fit
# ---------------------------------------------------------------------------


@dataclass
class DecayFit:
    model: str
    c0: float
    C0: float
    s_hat: float
    residual: float
    T_max: float
    filter_delta: float
    saturated: bool = False
    skipped: str | None = None

    def envelope(self, seq, t):
        return self.C0 * np.exp(-gevrey.k_of_t_array(seq, self.c0 * np.asarray(t, dtype=float)))

    def to_record(self):
        return {"model": self.model, "c0": self.c0, "C0": self.C0, "s_hat": self.s_hat,
                "residual": self.residual, "T_max": self.T_max, "filter_delta": self.filter_delta,
                "saturated": self.saturated, "skipped": self.skipped}

    def dump_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_record(), fh, indent=2, sort_keys=True)


def reflection_time(R, r_obs, r_data):
    """Latest trustworthy time ``2 (R - r_obs) - r_data``."""
    return 2.0 * (R - r_obs) - r_data


def _fit_exponent(t, logA):
    """Least squares ``log sqrt(E) = a - b t^s``; the same as regressing
    ``log(-log(sqrt(E)/C0))`` on ``log t`` with ``C0 = e^a`` chosen optimally."""
    def model(tt, a, lb, s):
        return a - np.exp(lb) * tt**s

    s0 = 0.5
    b0 = max((logA[0] - logA[-1]) / max(t[-1] ** s0 - t[0] ** s0, 1e-12), 1e-6)
    p, _ = curve_fit(model, t, logA, p0=(logA[0] + b0 * t[0] ** s0, math.log(b0), s0),
                     bounds=([-np.inf, -50, 0.05], [np.inf, 50, 3.0]), maxfev=20000)
    return float(p[2]), float(np.sqrt(np.mean((model(t, *p) - logA) ** 2)))


def fit_decay(trace: EnergyTrace, seq: gevrey.WeightSequence, profile=None, T_max=None,
              c0_grid=None, slack=10.0, floor_rel=1e-10, t_min=1.0):
    """One-sided envelope ``sqrt(E(t)) <= C0 exp(-k(c0 t))`` on ``[t_min, T_max]``.

    For each ``c0`` the smallest admissible ``C0`` is the maximum of
    ``sqrt(E) e^{k(c0 t)}``.  A ``c0`` is accepted when the constant demanded
    by the final quarter of the trace is at most ``slack`` times the constant
    demanded by the rest; the largest accepted ``c0`` is returned.  Samples
    below ``floor_rel * max E`` count as the numerical floor (saturation): they
    are left out of the c0 selection and the exponent fit, but ``C0`` still
    covers them.
    """
    t, E = trace.times, np.maximum(trace.E, 1e-300)
    T_max = float(t[-1]) if T_max is None else float(T_max)
    delta = float(trace.meta.get("delta", 0.0))
    if not np.any(E > 1e-300 * 10) or np.all(trace.E == 0):
        return DecayFit("envelope", math.nan, 0.0, math.nan, math.nan, T_max, delta, skipped="zero trace")
    keep = (t >= t_min) & (t <= T_max)
    t, E = t[keep], E[keep]
    floor = floor_rel * E.max()
    saturated = bool(np.any(E < floor))
    t_all, logA_all = t, 0.5 * np.log(E)
    if saturated:
        last = int(np.argmax(E < floor))
        t, E = t[:last], E[:last]
    logA = 0.5 * np.log(E)
    # reflections: a late rise of more than a decade above the running minimum
    run_min = np.minimum.accumulate(logA)
    if np.any(logA - run_min > math.log(10.0)):
        raise ContaminatedTraceError("trace rises after decaying; shorten T_max or enlarge R")
    if c0_grid is None:
        c0_grid = np.geomspace(1e-4, 10.0, 161)
    q = int(0.75 * t.size)
    best = None
    for c0 in c0_grid:
        kk = gevrey.k_of_t_array(seq, c0 * t)
        g = logA + kk
        head, tail = g[:q].max(), g[q:].max()
        if tail - head <= math.log(slack):
            best = (c0, max(head, tail))
    if best is None:
        c0, logC0 = float(c0_grid[0]), float((logA + gevrey.k_of_t_array(seq, c0_grid[0] * t)).max())
    else:
        c0, logC0 = float(best[0]), float(best[1])
    # the envelope must also cover the floor samples
    logC0 = max(logC0, float((logA_all + gevrey.k_of_t_array(seq, c0 * t_all)).max()))
    try:
        s_hat, resid = _fit_exponent(t, logA)
    except RuntimeError:
        s_hat, resid = math.nan, math.nan
    return DecayFit("envelope", c0, float(math.exp(logC0)), s_hat, resid, T_max, delta, saturated)


def gaussian_data(op: DiscreteOperator, center=2.0, width=1.0):
    """Default initial data: ``f1`` a Gaussian bump at ``r = center``, ``f2 = 0``."""
    r = op.grid.nodes
    return np.exp(-(((r - center) / width) ** 2)), np.zeros(op.n)
