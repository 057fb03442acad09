import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decaylab import gevrey as g


# -- profiles -----------------------------------------------------------------

def test_theta_examples():
    assert g.theta_eval(g.ThetaProfile.exp_power(1.0), 0.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert g.theta_eval(g.ThetaProfile.exp_power(0.5), 3.0) == pytest.approx(math.exp(-2), rel=1e-15)
    logp = g.ThetaProfile.exp_power_log(0.5, 1.0)
    assert g.theta_eval(logp, 0.0) == pytest.approx(math.exp(-1), rel=1e-15)


def test_theta_negative_radius():
    with pytest.raises(g.DomainError):
        g.theta_eval(g.ThetaProfile.exp_power(1.0), -1e-3)


def test_mu_weight_examples():
    assert g.mu_weight(g.ThetaProfile.exp_power(1.0), 0.0) == pytest.approx(math.exp(-1))
    assert g.mu_weight(g.ThetaProfile.exp_power(1.0, c=2.0), 0.0) == pytest.approx(math.exp(-1.5))
    p = g.ThetaProfile.exp_power(0.5)
    # <sqrt 3> = 2 so mu = sqrt(Theta(2)) = exp(-sqrt(3)/2)
    assert g.mu_weight(p, math.sqrt(3)) == pytest.approx(math.exp(-math.sqrt(3) / 2), rel=1e-14)
    assert g.mu_weight(p, math.sqrt(3)) == pytest.approx(math.sqrt(g.theta_eval(p, 2.0)), rel=1e-14)


@pytest.mark.parametrize("prof", [g.ThetaProfile.exp_power(1.0), g.ThetaProfile.exp_power(0.3),
                                  g.ThetaProfile.exp_power_log(0.5, 1.0)])
def test_profile_invariants(prof):
    r = np.geomspace(1e-3, 1e3, 400)
    lt = prof.log_theta(r)
    assert np.all(np.isfinite(lt)) and np.all(np.diff(lt) < 0)
    # Theta (r+1)^k -> 0: the product has an attained maximum for every k <= 20
    for k in range(21):
        assert math.isfinite(g.compute_m_tilde(prof, k))


def test_check_theta_s1():
    rep = g.check_theta_conditions(g.ThetaProfile.exp_power(1.0), np.linspace(0, 40, 81))
    assert rep.C_tilde == pytest.approx(1.0, rel=1e-14)
    assert rep.C1_by_C2[1.0] == pytest.approx(math.exp(-1), rel=1e-12)
    assert not rep.violation


def test_check_theta_s_half_finite():
    rep = g.check_theta_conditions(g.ThetaProfile.exp_power(0.5), np.linspace(0, 100, 201))
    assert math.isfinite(rep.C_tilde) and not rep.violation


def test_tabulated_profile_resolution_error():
    r = np.array([0.0, 50.0, 100.0, 150.0])
    coarse = g.ThetaProfile.tabulated(r, np.exp(-(r + 1)))
    with pytest.raises(g.ResolutionError):
        g.check_theta_conditions(coarse, np.array([60.0]))


def test_tabulated_profile_matches_closed_form():
    r = np.linspace(0, 60, 3001)
    tab = g.ThetaProfile.tabulated(r, np.exp(-np.sqrt(r + 1)))
    ref = g.ThetaProfile.exp_power(0.5)
    x = np.linspace(1, 50, 37)
    assert np.allclose(tab(x), ref(x), rtol=1e-8)
    d_tab = tab.derivative_ratios(x)[0]
    d_ref = ref.derivative_ratios(x)[0]
    assert np.allclose(d_tab, d_ref, rtol=1e-4)


# -- m tilde ------------------------------------------------------------------

def test_m_tilde_oracles():
    p1 = g.ThetaProfile.exp_power(1.0)
    assert g.compute_m_tilde(p1, 0) == pytest.approx(math.exp(-0.5), rel=1e-10)
    # maximiser of u^2 exp(-u/2) is u = 4
    assert g.compute_m_tilde(p1, 2) == pytest.approx(16 * math.exp(-2), rel=1e-10)
    # s = 1/2: maximiser of u^2 exp(-sqrt(u)/2) is sqrt(u) = 8
    ph = g.ThetaProfile.exp_power(0.5)
    assert g.compute_m_tilde(ph, 2) == pytest.approx(4096 * math.exp(-4), rel=1e-10)


def test_m_tilde_vs_dense_scan():
    p = g.ThetaProfile.exp_power_log(0.5, 1.0)
    r = np.linspace(0, 400, 400001)
    dense = np.max((r + 1) ** 3 * np.sqrt(p(r)))
    assert g.compute_m_tilde(p, 3) == pytest.approx(dense, rel=1e-8)


def test_m_tilde_divergence():
    r = np.linspace(0, 10, 50)
    tab = g.ThetaProfile.tabulated(r, np.exp(-0.01 * r))
    with pytest.raises(g.DivergenceError):
        g.compute_m_tilde(tab, 5)


# -- weight sequences ---------------------------------------------------------

def _brute_c4(m):
    K = len(m) - 1
    return max(m[nu] * m[k - nu] * math.factorial(k) / (math.factorial(nu) * math.factorial(k - nu) * m[k])
               for k in range(K + 1) for nu in range(k + 1))


def test_weight_sequence_factorial_c4_is_one():
    seq = g.WeightSequence.gevrey(1.0, 20)
    mt = g.mtilde_table(g.ThetaProfile.exp_power(1.0), 20)
    chk = g.check_weight_sequence(seq, mt, 20)
    assert chk.C4 == pytest.approx(1.0, abs=1e-12) and chk.ok
    assert _brute_c4([math.factorial(k) for k in range(21)]) == pytest.approx(1.0, abs=1e-12)


def test_weight_sequence_s_half_finite_and_brute_force():
    seq = g.WeightSequence.gevrey(0.5, 20)
    chk = g.check_weight_sequence(seq, g.mtilde_table(g.ThetaProfile.exp_power(0.5), 20), 20)
    assert chk.ok
    assert chk.C4 == pytest.approx(_brute_c4([math.factorial(k) ** 2 for k in range(21)]), rel=1e-10)


def test_weight_sequence_short_range():
    seq = g.WeightSequence.gevrey(1.0, 10)
    with pytest.raises(g.InsufficientRangeError):
        g.check_weight_sequence(seq, np.ones(5), 3)


def test_m_tilde_within_c3_envelope():
    for prof in (g.ThetaProfile.exp_power(1.0), g.ThetaProfile.exp_power(0.5)):
        seq = g.WeightSequence.gevrey(prof.s, 44)
        mt = g.mtilde_table(prof, 21)
        C3 = g.check_weight_sequence(seq, mt, 44).C3
        for k in range(21):
            assert math.log(mt[k]) <= (k + 1) * math.log(C3) + seq.logs[k] + 1e-9


def test_sequence_json_roundtrip():
    seq = g.WeightSequence.gevrey(0.5, 8).with_constants(3.0, 1.5)
    rec = json.loads(json.dumps(seq.to_record()))
    assert set(rec) == {"kind", "s", "beta", "values", "C3", "C4"}
    back = g.WeightSequence.from_values(rec["values"], rec["C3"], rec["C4"])
    assert np.allclose(back.values, seq.values, rtol=1e-14)


# -- decay clock --------------------------------------------------------------

def test_k_of_t_examples():
    fact = g.WeightSequence.gevrey(1.0, 24)
    assert g.k_of_t(fact, 3.0) == 6
    assert g.k_of_t(fact, 1.0001) == 1
    with pytest.raises(g.DomainError):
        g.k_of_t(fact, 1.0)


def test_k_of_t_extends_closed_form():
    seq = g.WeightSequence.gevrey(1.0, 5)
    assert g.k_of_t(seq, 50.0) > 5


def test_k_of_t_tabulated_exhausted():
    seq = g.WeightSequence.from_values([1, 1, 2, 6])
    with pytest.raises(g.ExtensionError):
        g.k_of_t(seq, 100.0)


def test_k_of_t_square_root_growth():
    seq = g.WeightSequence.gevrey(0.5, 24)
    ratios = [g.k_of_t(seq, t) / math.sqrt(t) for t in (1e2, 1e3, 1e4)]
    # (k!)^{2/k} ~ (k/e)^2, so k(t) ~ e sqrt(t)
    assert max(ratios) / min(ratios) < 1.3
    assert ratios[-1] == pytest.approx(math.e, rel=0.15)


@settings(max_examples=60, deadline=None)
@given(st.floats(1.01, 500.0), st.sampled_from([0.5, 1.0]))
def test_k_of_t_inverse_envelope(t, s):
    seq = g.WeightSequence.gevrey(s, 24)
    k = g.k_of_t(seq, t)
    seq = seq.extended(k + 2)
    assert seq.logs[k] / k <= math.log(t) + 1e-12
    assert seq.logs[k + 1] / (k + 1) > math.log(t)


@settings(max_examples=40, deadline=None)
@given(st.floats(1.01, 200.0), st.floats(1.0, 3.0))
def test_k_of_t_monotone(t, factor):
    seq = g.WeightSequence.gevrey(0.5, 24)
    assert g.k_of_t(seq, t) <= g.k_of_t(seq, t * factor)


# -- cutoff -------------------------------------------------------------------

def test_rho_symmetry():
    assert g.rho(0.5, 1.0) == pytest.approx(0.5, abs=1e-15)
    x = np.linspace(0.01, 0.99, 50)
    assert np.allclose(g.rho(x, 2.0) + g.rho(1 - x, 2.0), 1.0, atol=1e-15)


def test_cutoff_support_and_plateau():
    cut = g.build_cutoff(0.5)
    assert cut.chi(1.0) == 1.0 and cut.chi(0.4) == 0.0 and cut.chi(2.1) == 0.0
    assert np.all(cut.chi(np.linspace(0.75, 1.75, 101)) == 1.0)
    assert cut.a == pytest.approx(1.0)


@pytest.mark.parametrize("s", [0.2, 0.5, 0.7])
def test_cutoff_normalisation_is_five_quarters(s):
    # rho(x) + rho(1-x) = 1 makes each ramp integrate to 1/4
    cut = g.build_cutoff(s)
    assert cut.I == pytest.approx(1.25, abs=1e-12)
    xs, ws = np.polynomial.legendre.leggauss(200)
    gauss = 0.0
    for lo, hi in ((0.5, 0.75), (1.75, 2.0)):
        x = 0.5 * (hi - lo) * xs + 0.5 * (hi + lo)
        gauss += 0.5 * (hi - lo) * np.dot(ws, cut.chi(x))
    assert gauss + 1.0 == pytest.approx(cut.I, abs=1e-10)


def test_cutoff_rejections():
    with pytest.raises(g.NoCutoffError):
        g.build_cutoff(1.0)
    with pytest.raises(g.DomainError):
        g.build_cutoff(0.0)


def test_cutoff_eval_examples():
    cut = g.build_cutoff(0.5)
    assert g.cutoff_eval(cut, 0.3, 5) == 0.0
    assert g.cutoff_eval(cut, 1.0, 0) == pytest.approx(1 / cut.I)
    assert g.cutoff_eval(cut, 1.2, 4) == 0.0
    with pytest.raises(g.ContourRadiusError):
        g.cutoff_eval(cut, 0.75 + 1e-9, 1)


def test_cutoff_third_derivative_vs_finite_differences():
    cut = g.build_cutoff(0.5)
    h = 1e-3
    # sixth-order central stencil for the third derivative
    w = np.array([-7 / 240, 3 / 10, -169 / 120, 61 / 30, 0.0, -61 / 30, 169 / 120, -3 / 10, 7 / 240])
    fd = np.dot(w, cut.zeta(0.6 + h * np.arange(-4, 5))) / h**3
    assert g.cutoff_eval(cut, 0.6, 3) == pytest.approx(fd, rel=1e-4)


@pytest.mark.parametrize("sigma,k", [(0.52, 6), (0.7326, 5), (0.505, 20), (1.9, 12)])
def test_cutoff_derivative_vs_mpmath(sigma, k):
    cut = g.build_cutoff(0.5)
    mpmath.mp.dps = 60

    def ramp(t):
        x = 4 * (t - mpmath.mpf(1) / 2) if t < 1 else 4 * (2 - t)
        return 1 / (1 + mpmath.exp(1 / x - 1 / (1 - x)))

    exact = float(mpmath.diff(ramp, mpmath.mpf(sigma), k) / mpmath.mpf(cut.I))
    assert g.cutoff_eval(cut, sigma, k) == pytest.approx(exact, rel=1e-9)


def test_cutoff_derivative_growth_envelope():
    cut = g.build_cutoff(0.5)
    vals = [math.exp((math.log(g.zeta_derivative_sup(cut, k, 150)) - 2 * math.lgamma(k + 1)) / (k + 1))
            for k in range(1, 21)]
    # bounded by a k-independent constant
    assert max(vals) < 10


def test_psi_examples_and_monotone():
    cut = g.build_cutoff(0.5)
    assert g.psi_eval(cut, 0.5) == 0.0
    assert g.psi_eval(cut, 2.0) == 1.0
    assert g.psi_eval(cut, 2.0 - 1e-12) == pytest.approx(1.0, abs=1e-10)
    grid = np.linspace(0.4, 2.1, 200)
    vals = np.array([g.psi_eval(cut, x) for x in grid])
    assert np.all(np.diff(vals) >= -1e-15)
    assert 0 < g.psi_eval(cut, 1.25) < 1
    assert np.allclose(g.psi_array(cut, grid), vals, atol=1e-10)


def test_cutoff_record_rebuild():
    cut = g.build_cutoff(0.4)
    rec = json.loads(json.dumps(cut.to_record()))
    assert g.GevreyCutoff.from_record(rec) == cut


# -- bound propagation --------------------------------------------------------

def test_leibniz_single_factor_unchanged():
    seq = g.WeightSequence.gevrey(1.0, 10)
    f = g.DerivativeBoundSeq.geometric(1.0, 1.0, seq)
    assert g.leibniz_bound_propagate([f], seq, 10) is f


def test_leibniz_hand_value_and_c4_bound():
    seq = g.WeightSequence.gevrey(1.0, 10)
    f = g.DerivativeBoundSeq.geometric(1.0, 1.0, seq)
    out = g.leibniz_bound_propagate([f, f], seq, 10)
    assert out.bounds[1] == pytest.approx(2.0, rel=1e-14)
    # sum_nu binom(k,nu) nu!(k-nu)! = (k+1)!; exact value
    assert np.allclose(out.bounds, [math.factorial(k + 1) for k in range(11)], rtol=1e-12)
    C4 = g.check_weight_sequence(seq, np.ones(11), 10).C4
    assert out.base_constant <= 2 * C4


def test_leibniz_range_error():
    seq = g.WeightSequence.gevrey(1.0, 5)
    f = g.DerivativeBoundSeq.geometric(1.0, 1.0, seq)
    with pytest.raises(g.InsufficientRangeError):
        g.leibniz_bound_propagate([f, f], seq, 8)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_leibniz_symmetric_and_associative(C1, C2, M1, M2):
    seq = g.WeightSequence.gevrey(0.5, 12)
    a = g.DerivativeBoundSeq.geometric(M1, C1, seq)
    b = g.DerivativeBoundSeq.geometric(M2, C2, seq)
    c = g.DerivativeBoundSeq.geometric(1.0, 1.3, seq)
    ab = g.leibniz_bound_propagate([a, b], seq, 12)
    ba = g.leibniz_bound_propagate([b, a], seq, 12)
    assert np.allclose(ab.log_bounds, ba.log_bounds, rtol=1e-12, atol=1e-12)
    left = g.leibniz_bound_propagate([ab, c], seq, 12)
    right = g.leibniz_bound_propagate([a, g.leibniz_bound_propagate([b, c], seq, 12)], seq, 12)
    assert np.allclose(left.log_bounds, right.log_bounds, rtol=1e-12, atol=1e-10)


def test_inverse_bound_examples():
    seq = g.WeightSequence.gevrey(1.0, 10).with_constants(None, 1.0)
    rep = g.inverse_bound_propagate(1.0, 1.0, seq, 10)
    assert rep.B == 2.0
    assert rep.closed_form.bounds[2] == pytest.approx(16.0, rel=1e-14)
    assert np.all(np.asarray(rep.recursion_log) <= np.asarray(rep.closed_form.log_bounds))


def test_inverse_bound_inconsistent_c4():
    seq = g.WeightSequence.gevrey(0.5, 10).with_constants(None, 1e-3)
    with pytest.raises(g.ConsistencyError):
        g.inverse_bound_propagate(1.0, 10.0, seq, 10)
    rep = g.inverse_bound_propagate(1.0, 10.0, seq, 10, strict=False)
    assert not rep.consistent
