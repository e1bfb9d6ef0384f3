import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from dreemnet import _kernels
from dreemnet.lp import (LpProblem, LpStatus, allocate_power, feasibility_value, solve_lp)
from dreemnet.powermodel import compute_rates

from conftest import UnitCaps, random_instance


def test_trivial_programs():
    sol = solve_lp(LpProblem([1.0], [[-1.0]], [-2.0]))
    assert sol.status is LpStatus.OPTIMAL
    assert sol.x[0] == pytest.approx(2.0) and sol.objective == pytest.approx(2.0)
    assert solve_lp(LpProblem([1.0], [[1.0], [-1.0]], [1.0, -2.0])).status is LpStatus.INFEASIBLE
    assert solve_lp(LpProblem([-1.0], np.zeros((0, 1)), [])).status is LpStatus.UNBOUNDED


def test_free_variable():
    # min v s.t. v >= 3 - x, x <= 1 -> v = 2
    sol = solve_lp(LpProblem([0.0, 1.0], [[-1.0, -1.0], [1.0, 0.0]], [-3.0, 1.0],
                             lower=[0.0, -np.inf]))
    assert sol.x[1] == pytest.approx(2.0)
    # negative optimum for a free variable
    sol = solve_lp(LpProblem([1.0], [[-1.0]], [5.0], lower=[-np.inf]))
    assert sol.x[0] == pytest.approx(-5.0)


def test_problem_validation():
    with pytest.raises(ValueError):
        LpProblem([1.0, 2.0], [[1.0]], [1.0])
    with pytest.raises(ValueError):
        LpProblem([1.0], [[np.inf]], [1.0])
    with pytest.raises(ValueError):
        LpProblem([1.0], [[1.0]], [1.0], lower=[np.inf])


def test_iteration_limit_reported():
    rng = np.random.default_rng(0)
    A = rng.random((6, 6))
    sol = solve_lp(LpProblem(-np.ones(6), A, np.ones(6)), max_iter=1)
    assert sol.status is LpStatus.ITERATION_LIMIT


def _random_lp(rng):
    n, m = rng.integers(1, 7), rng.integers(1, 8)
    A = rng.normal(size=(m, n))
    b = rng.normal(size=m) + 0.5
    c = rng.normal(size=n)
    # a bounding row keeps most instances bounded
    A = np.vstack([A, np.ones(n)])
    b = np.append(b, 10.0)
    return c, A, b


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=300, deadline=None)
def test_simplex_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    c, A, b = _random_lp(rng)
    ours = solve_lp(LpProblem(c, A, b))
    ref = linprog(c, A_ub=A, b_ub=b, bounds=[(0, None)] * c.size, method="highs")
    if ref.status == 2:
        assert ours.status is LpStatus.INFEASIBLE
    elif ref.status == 0:
        assert ours.status is LpStatus.OPTIMAL
        assert ours.objective == pytest.approx(ref.fun, abs=1e-7)
        assert np.all(A @ ours.x <= b + 1e-7) and np.all(ours.x >= -1e-9)


def test_backends_agree():
    rng = np.random.default_rng(4)
    for _ in range(200):
        c, A, b = _random_lp(rng)
        m, n = A.shape
        T = np.zeros((m + 1, n + m + 1))
        T[:m, :n], T[:m, n:n + m], T[:m, -1] = A, np.eye(m), np.abs(b)
        T[m, :n] = c
        basis = np.arange(n, n + m, dtype=np.int64)
        T1, T2, b1, b2 = T.copy(), T.copy(), basis.copy(), basis.copy()
        r1 = _kernels.simplex_loop_numpy(T1, b1, n + m, 1e-9, 500)
        r2 = _kernels._simplex_loop_py(T2, b2, n + m, 1e-9, 500)
        assert tuple(r1) == tuple(r2)
        assert np.array_equal(b1, b2)
        assert np.allclose(T1, T2, atol=1e-9)
        if _kernels.simplex_loop_numba is not None:
            T3, b3 = T.copy(), basis.copy()
            assert tuple(_kernels.simplex_loop_numba(T3, b3, n + m, 1e-9, 500)) == tuple(r1)
            assert np.array_equal(b3, b1)


def test_closed_form_examples():
    caps = UnitCaps(1)
    one = np.ones((1, 1))
    v, p = feasibility_value(one, [1], 1.0, 1.0, caps)
    assert v == pytest.approx(0.75, abs=1e-9)
    v, _ = feasibility_value(one, [1], 0.2, 1.0, caps)
    assert v == pytest.approx(2 ** 0.2 - 1 - 0.25, abs=1e-9)
    assert v == pytest.approx(-0.1013, abs=1e-4)
    al = allocate_power(one, [1], 0.2, 1.0, caps)
    assert al.status is LpStatus.OPTIMAL
    assert al.p[0, 0] == pytest.approx(0.1487, abs=1e-4)
    assert al.p_tx_total == pytest.approx(0.5948, abs=1e-4)
    assert allocate_power(one, [1], 1.0, 1.0, caps).status is LpStatus.INFEASIBLE
    assert allocate_power(one, [1], 1e-9, 1.0, caps).p_tx_total == pytest.approx(0, abs=1e-8)


def test_all_off_infeasibility():
    caps = UnitCaps(3)
    H = np.ones((3, 2))
    r = np.array([0.3, 0.7])
    v, p = feasibility_value(H, [0, 0, 0], r, 2.0, caps)
    # normalised shortfall is the largest SINR target
    assert v == pytest.approx(np.max(2 ** r - 1))
    v_raw, _ = feasibility_value(H, [0, 0, 0], r, 2.0, caps, normalized=False)
    assert v_raw == pytest.approx(2.0 * np.max(2 ** r - 1))
    assert np.all(p == 0)
    assert allocate_power(H, [0, 0, 0], r, 2.0, caps).status is LpStatus.INFEASIBLE


def _scipy_v_ft(H, alpha, r, sigma2, caps):
    """Independent route: scipy LP over the full (M, K) grid, sleeping rows fixed at 0."""
    M, K = H.shape
    G = H / sigma2
    gam = 2 ** np.asarray(r) - 1
    n = M * K + 1  # p[m, k] at m*K + k, then v
    A, b = [], []
    for k in range(K):
        row = np.zeros(n)
        for m in range(M):
            for j in range(K):
                row[m * K + j] = -G[m, k] if j == k else gam[k] * G[m, k]
        row[-1] = -1.0
        A.append(row)
        b.append(-gam[k])
    for m in range(M):
        row = np.zeros(n)
        row[m * K:(m + 1) * K] = 1.0
        A.append(row)
        b.append(alpha[m] * caps.eta * caps.p_max)
    c = np.zeros(n)
    c[-1] = 1.0
    res = linprog(c, A_ub=np.array(A), b_ub=b, bounds=[(0, None)] * (n - 1) + [(None, None)],
                  method="highs")
    return res.fun


def test_feasibility_value_matches_scipy():
    rng = np.random.default_rng(21)
    for _ in range(100):
        M, K = rng.integers(1, 5), rng.integers(1, 4)
        cfg, H, r, s2 = random_instance(rng, M, K)
        caps = UnitCaps(M)
        alpha = rng.integers(0, 2, M)
        v, _ = feasibility_value(H, alpha, r, s2, caps)
        assert v == pytest.approx(_scipy_v_ft(H, alpha, r, s2, caps), abs=1e-6, rel=1e-7)


def test_allocation_verifies_and_is_optimal_vs_scipy():
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(200):
        M, K = rng.integers(1, 5), rng.integers(1, 4)
        cfg, H, r, s2 = random_instance(rng, M, K)
        alpha = rng.integers(0, 2, M)
        al = allocate_power(H, alpha, r, s2, cfg)
        if al.status is not LpStatus.OPTIMAL:
            continue
        checked += 1
        assert np.all(compute_rates(al.p, H, s2) >= r - 1e-6)
        assert np.all(al.p.sum(axis=1) <= cfg.eta * cfg.p_max + 1e-9)
        assert np.all(al.p[alpha == 0] == 0)
        v, _ = feasibility_value(H, alpha, r, s2, cfg)
        assert v <= 1e-6
    assert checked > 30


def test_allocation_never_beaten_by_random_feasible_points():
    rng = np.random.default_rng(8)
    for _ in range(5):
        M, K = rng.integers(1, 4), rng.integers(1, 3)
        cfg = UnitCaps(M, eta=0.25)
        H = rng.uniform(0.2, 1.0, (M, K))
        r = rng.uniform(0.05, 0.3, K)
        alpha = np.ones(M, dtype=int)
        al = allocate_power(H, alpha, r, 0.1, cfg)
        assert al.status is LpStatus.OPTIMAL
        P = rng.uniform(0, 0.25 / K, (10_000, M, K))
        for p in P:
            if np.all(compute_rates(p, H, 0.1) >= r):
                assert al.p_tx_total <= p.sum() / 0.25 + 1e-12


def test_feasibility_consistency_small():
    rng = np.random.default_rng(2)
    for _ in range(200):
        M, K = rng.integers(1, 5), rng.integers(1, 4)
        cfg, H, r, s2 = random_instance(rng, M, K)
        alpha = rng.integers(0, 2, M)
        v, _ = feasibility_value(H, alpha, r, s2, cfg)
        ok = allocate_power(H, alpha, r, s2, cfg).status is LpStatus.OPTIMAL
        assert (v <= 1e-6) == ok


def test_env_flag_selects_numpy_backend():
    import os
    import subprocess
    import sys
    code = ("from dreemnet import _kernels, lp; import numpy as np;"
            "s = lp.solve_lp(lp.LpProblem([1.0], [[-1.0]], [-2.0]));"
            "print(_kernels.backend_name(), s.x[0])")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True,
                         env={**os.environ, "DREEM_USE_NUMBA": "0"}).stdout.split()
    assert out[0] == "numpy" and float(out[1]) == 2.0
