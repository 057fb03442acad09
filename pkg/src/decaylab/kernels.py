"""Backend selection for the hot kernels.

The compiled extension ``decaylab._ckernels`` is used when it imports;
otherwise the numpy implementation in ``decaylab._pykernels`` is used.
Set ``DECAYLAB_PURE_PYTHON=1`` to force the fallback.
"""

import os

from decaylab import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("DECAYLAB_PURE_PYTHON"):
    try:
        from decaylab import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

tridiag_factor = _impl.tridiag_factor
tridiag_solve = _impl.tridiag_solve
log_binom_conv = _impl.log_binom_conv
inverse_recursion = _impl.inverse_recursion


class TridiagonalLU:
    """Pivoted LU factorization of a complex tridiagonal matrix.

    Parameters
    ----------
    lower, diag, upper : array_like
        Sub-, main and super-diagonal (lengths n-1, n, n-1).
    """

    def __init__(self, lower, diag, upper):
        self.n = len(diag)
        self._factors = tridiag_factor(lower, diag, upper)

    def solve(self, b):
        return tridiag_solve(self._factors, b)


__all__ = [
    "BACKEND",
    "TridiagonalLU",
    "inverse_recursion",
    "log_binom_conv",
    "tridiag_factor",
    "tridiag_solve",
]
