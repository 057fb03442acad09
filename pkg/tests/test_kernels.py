import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln, logsumexp

from decaylab import _pykernels, kernels

try:
    from decaylab import _ckernels
except ImportError:  # pragma: no cover - exercised only without a compiler
    _ckernels = None

BACKENDS = [_pykernels] + ([_ckernels] if _ckernels else [])


def _random_tridiag(rng, n):
    dl = rng.normal(size=n - 1) + 1j * rng.normal(size=n - 1)
    d = rng.normal(size=n) + 1j * rng.normal(size=n)
    du = rng.normal(size=n - 1) + 1j * rng.normal(size=n - 1)
    return dl, d, du


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
@pytest.mark.parametrize("n", [1, 2, 3, 17, 300])
def test_tridiag_solve_matches_banded(impl, n):
    rng = np.random.default_rng(n)
    dl, d, du = _random_tridiag(rng, n) if n > 1 else (np.zeros(0), np.array([2.0 + 1j]), np.zeros(0))
    b = rng.normal(size=(n, 3)) + 0j
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:], ab[1], ab[2, :-1] = du, d, dl
    ref = sla.solve_banded((1, 1), ab, b)
    x = impl.tridiag_solve(impl.tridiag_factor(dl, d, du), b)
    assert np.allclose(x, ref, rtol=1e-10, atol=1e-12)
    x1 = impl.tridiag_solve(impl.tridiag_factor(dl, d, du), b[:, 0])
    assert np.allclose(x1, ref[:, 0], rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_tridiag_pivoting_needed(impl):
    # zero leading pivot forces a row swap
    dl, d, du = np.array([1.0, 1.0]), np.array([0.0, 0.0, 1.0]), np.array([1.0, 1.0])
    A = np.diag(d) + np.diag(dl, -1) + np.diag(du, 1)
    b = np.array([1.0, 2.0, 3.0])
    x = impl.tridiag_solve(impl.tridiag_factor(dl, d, du), b)
    assert np.allclose(A @ x, b)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_tridiag_singular(impl):
    with pytest.raises(ZeroDivisionError):
        impl.tridiag_factor(np.zeros(2), np.zeros(3), np.zeros(2))


def test_inputs_not_modified():
    rng = np.random.default_rng(0)
    dl, d, du = _random_tridiag(rng, 10)
    keep = d.copy()
    kernels.TridiagonalLU(dl, d, du)
    assert np.array_equal(d, keep)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**31 - 1))
def test_backends_agree_on_recursions(K, seed):
    rng = np.random.default_rng(seed)
    la, lb = rng.normal(size=K + 1) * 5, rng.normal(size=K + 1) * 5
    lm = np.concatenate([[0.0], np.cumsum(rng.uniform(0, 3, size=K))])
    ref = np.array([logsumexp(gammaln(k + 1) - gammaln(np.arange(k + 1) + 1)
                              - gammaln(k - np.arange(k + 1) + 1) + la[: k + 1] + lb[k::-1])
                    for k in range(K + 1)])
    for impl in BACKENDS:
        assert np.allclose(impl.log_binom_conv(la, lb), ref, rtol=1e-13, atol=1e-12)
    outs = [impl.inverse_recursion(0.3, -0.2, lm, K) for impl in BACKENDS]
    for o in outs[1:]:
        assert np.allclose(o, outs[0], rtol=1e-13, atol=1e-12)


def test_inverse_recursion_small_case():
    # C = Ct = 1, m_k = k!: b1 = 1 * (1 * 1 * 1) = 1, b2 = binom(2,0) m2 b0 + binom(2,1) m1 b1 = 2 + 2
    lm = np.log([1.0, 1.0, 2.0])
    out = np.exp(kernels.inverse_recursion(0.0, 0.0, lm, 2))
    assert np.allclose(out, [1.0, 1.0, 4.0])


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")
    if _ckernels is not None:
        assert kernels.BACKEND == "cython" or "DECAYLAB_PURE_PYTHON" in __import__("os").environ
