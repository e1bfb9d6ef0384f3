"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The dense simplex loop dominates runtime (every slot of every episode solves
two or three small LPs, and the enumeration baseline solves 2^M per slot), so
it is the one kernel carried in both forms.  Set ``DREEM_USE_NUMBA=0`` to force
the numpy path; it is also used automatically when numba is not importable.

Both paths perform the same floating-point operations in the same order, so
they return identical tableaux.
"""
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FLAG = os.environ.get("DREEM_USE_NUMBA", "1").strip().lower()
USE_NUMBA = numba is not None and _FLAG not in ("0", "false", "no", "off")

# simplex loop exit codes
OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2

RATIO_TIE = 1e-12


def simplex_loop_numpy(T, basis, n_enter, tol, max_iter):
    """Run Bland-rule primal simplex pivots on tableau ``T`` in place.

    ``T`` has one row per constraint plus a trailing reduced-cost row; the last
    column is the right-hand side.  Only columns ``< n_enter`` may enter the
    basis.  Returns ``(code, iterations)``.
    """
    m = T.shape[0] - 1
    rhs = T.shape[1] - 1
    it = 0
    while True:
        neg = np.flatnonzero(T[m, :n_enter] < -tol)
        if neg.size == 0:
            return OPTIMAL, it
        if it >= max_iter:
            return ITERATION_LIMIT, it
        enter = neg[0]
        col = T[:m, enter]
        rows = np.flatnonzero(col > tol)
        if rows.size == 0:
            return UNBOUNDED, it
        ratios = T[rows, rhs] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + RATIO_TIE]
        leave = tied[np.argmin(basis[tied])]

        T[leave] /= T[leave, enter]
        f = T[:, enter].copy()
        f[leave] = 0.0
        T -= np.outer(f, T[leave])
        basis[leave] = enter
        it += 1


def _simplex_loop_py(T, basis, n_enter, tol, max_iter):
    m = T.shape[0] - 1
    ncol = T.shape[1]
    rhs = ncol - 1
    it = 0
    while True:
        enter = -1
        for j in range(n_enter):
            if T[m, j] < -tol:
                enter = j
                break
        if enter < 0:
            return OPTIMAL, it
        if it >= max_iter:
            return ITERATION_LIMIT, it

        best = np.inf
        for i in range(m):
            a = T[i, enter]
            if a > tol:
                r = T[i, rhs] / a
                if r < best:
                    best = r
        if best == np.inf:
            return UNBOUNDED, it
        leave = -1
        for i in range(m):
            a = T[i, enter]
            if a > tol and T[i, rhs] / a <= best + RATIO_TIE:
                if leave < 0 or basis[i] < basis[leave]:
                    leave = i

        piv = T[leave, enter]
        for j in range(ncol):
            T[leave, j] /= piv
        for i in range(m + 1):
            if i != leave:
                f = T[i, enter]
                if f != 0.0:
                    for j in range(ncol):
                        T[i, j] -= f * T[leave, j]
        basis[leave] = enter
        it += 1


if numba is not None:
    simplex_loop_numba = numba.njit(cache=True, nogil=True)(_simplex_loop_py)
else:  # pragma: no cover
    simplex_loop_numba = None

simplex_loop = simplex_loop_numba if USE_NUMBA else simplex_loop_numpy


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
