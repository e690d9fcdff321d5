import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ere_lab import dumps_problem, loads_problem, solve_equilibrium
from ere_lab.linalg import min_eigenvalue_sym, spd_solve, spectral_norm, trace_norm
from ere_lab.mollify import mollify_matrix_path
from ere_lab.ode import theta_half
from ere_lab.problem import Const, ConstKernel, CoefficientSet, ExpDiscount, HyperbolicDiscount, ProblemInstance
from ere_lab.problem import Table, TimeGrid, WeightKernelSet, discounted_kernel

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
SLOW = settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def square(n):
    return arrays(float, (n, n), elements=finite)


@given(square(3), arrays(float, (3, 2), elements=finite))
def test_spd_solve_residual(g, b):
    a = g @ g.T + np.eye(3)
    x = spd_solve(a, b)
    assert np.abs(a @ x - b).max() <= 1e-9 * (1 + np.abs(b).max()) * np.linalg.cond(a)


@given(square(3), square(3))
def test_norm_inequalities(a, b):
    assert spectral_norm(a + b) <= spectral_norm(a) + spectral_norm(b) + 1e-12
    assert spectral_norm(a) <= trace_norm(a) + 1e-12
    assert trace_norm(a) <= 3 * spectral_norm(a) + 1e-12
    s = a @ a.T
    assert min_eigenvalue_sym(s) >= -1e-10 * (1 + spectral_norm(s))


@given(st.lists(st.floats(0, 1), min_size=3, max_size=6), st.floats(0.02, 0.3))
def test_mollified_monotone_path_keeps_order_and_bounds(incs, eps):
    vals = 1.0 + np.cumsum([0.0] + incs)
    nodes = np.linspace(0, 1, len(vals))
    g = Table(nodes, vals[:, None, None])
    ge = mollify_matrix_path(g, eps, 1.0)
    t = np.linspace(0, 1, 301)
    y = ge(t)[:, 0, 0]
    assert np.all(np.diff(y) >= -1e-12)
    assert y.min() >= vals[0] - 1e-12 and y.max() <= vals[-1] + 1e-12


@given(st.floats(0.01, 5.0), st.booleans(), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_discounted_kernel_monotone(rate, hyper, a, b, s):
    disc = HyperbolicDiscount(rate) if hyper else ExpDiscount(rate)
    k = discounted_kernel(disc, Const(np.diag([1.0, 2.0])), 1.0)
    t, tau = sorted((a * s, b * s))
    gap = k(tau, s) - k(t, s)
    assert np.linalg.eigvalsh(gap).min() >= -1e-12


@given(arrays(float, (4,), elements=finite))
def test_theta_half_exact_for_cubics(c):
    t = np.linspace(0, 1, 9)
    f = lambda x: c[0] + c[1] * x + c[2] * x**2 + c[3] * x**3
    half = theta_half(f(t)[:, None, None])
    np.testing.assert_allclose(half[:, 0, 0], f(np.linspace(0, 1, 17)), atol=1e-12)


def random_instance(seed, N=40):
    """Small 2x2x1 instance satisfying the positivity and monotonicity assumptions."""
    rng = np.random.default_rng(seed)
    small = lambda r, c: Const(0.3 * rng.standard_normal((r, c)))
    psd = lambda d, lo: (lambda g: g @ g.T * 0.3 + lo * np.eye(d))(rng.standard_normal((d, d)))
    coeffs = CoefficientSet(A=small(2, 2), B=small(2, 1), C=small(2, 2), D=small(2, 1), Ahat=small(1, 2),
                            Bhat=small(1, 1), Chat=small(1, 1), Dhat=small(1, 1), H=0.3 * rng.standard_normal((1, 2)))
    Q, R, M, N_, G1, G2 = psd(2, 0.0), psd(1, 0.5), psd(1, 0.0), psd(1, 0.0), psd(2, 0.0), psd(1, 0.5)
    disc = ExpDiscount(rng.uniform(0, 1))
    weights = WeightKernelSet(
        Q=discounted_kernel(disc, Const(Q), 1.0), R=ConstKernel(R),
        M=discounted_kernel(disc, Const(M), 1.0), N=ConstKernel(N_), G1=Const(G1), G2=Const(G2), delta=0.5,
        caps={"Q": Q, "R": R, "M": M, "N": N_, "G1": G1, "G2": G2},
    )
    return ProblemInstance(2, 1, 1, TimeGrid(1.0, N), coeffs, weights, name=f"random{seed}")


@SLOW
@given(st.integers(0, 2**31))
def test_solution_invariants(seed):
    p = random_instance(seed)
    sol, diag = solve_equilibrium(p)
    c = sol.certificates
    assert sol.residual <= 1e-10
    assert c.sup_value <= c.cv_bound + 1e-6 and c.sup_theta <= c.cstar_bound + 1e-6
    for i in range(p.grid.N + 1):
        assert np.linalg.eigvalsh(sol.p1_diag[i]).min() >= -1e-8
        assert 0.5 * np.linalg.norm(sol.p2[i], 2) ** 2 <= np.trace(sol.value[i]) + 1e-6
    again, _ = solve_equilibrium(p)
    np.testing.assert_array_equal(again.theta.values, sol.theta.values)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_config_round_trip(seed):
    p = random_instance(seed, N=10)
    assert loads_problem(dumps_problem(p)) == p
