import numpy as np
import pytest

from ere_lab import McConfig, get_instance, mc_cost, mc_p1_diag, simulate_closed_loop, simulate_phi, spike_test
from ere_lab.exceptions import BlowUpError

from conftest import scalar_problem


def zero_gain(p):
    return np.zeros((p.grid.N + 1, p.k, p.n))


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(paths=10)
    assert McConfig(paths=101, antithetic=True).n_paths == 102
    assert McConfig(workers=3).n_workers() == 3


def test_phi_identity_without_dynamics():
    p = scalar_problem(N=50)
    s = simulate_phi(p, zero_gain(p), 0, McConfig(paths=200))
    assert np.all(s.terminal == 1.0)


def test_phi_deterministic_exponential():
    p = scalar_problem(A=0.7, N=400)
    s = simulate_phi(p, zero_gain(p), 100, McConfig(paths=200))
    assert np.all(s.terminal == s.terminal[0])
    assert s.terminal[0, 0, 0] == pytest.approx(np.exp(0.7 * 0.75), rel=2e-3)


def test_phi_second_moment_closed_form():
    a, c = 0.3, 0.4
    p = scalar_problem(A=a, C=c, N=400)
    s = simulate_phi(p, zero_gain(p), 0, McConfig(paths=100_000, seed=5))
    sq = s.terminal[:, 0, 0] ** 2
    est, se = sq.mean(), sq.std(ddof=1) / np.sqrt(len(sq))
    assert abs(est - np.exp(2 * a + c * c)) <= 3 * se


def test_p1_diag_terminal_exact(solved):
    p, sol, _ = solved("discounted_2x2")
    rep = mc_p1_diag(p, sol.theta, sol.p2, p.grid.N, McConfig(paths=100))
    np.testing.assert_array_equal(rep.estimate, p.discretize().G1[-1])
    assert np.all(rep.stderr == 0)


def test_p1_diag_zero_weights():
    p = scalar_problem(A=0.2, C=0.3, N=50)
    rep = mc_p1_diag(p, zero_gain(p), np.zeros((51, 1, 1)), 0, McConfig(paths=500))
    assert np.all(rep.estimate == 0.0)


def test_p1_diag_matches_ode(solved):
    p, sol, _ = solved("smoke_3x2x2")
    rep = mc_p1_diag(p, sol.theta, sol.p2, 80, McConfig(paths=20_000, seed=2, antithetic=True),
                     target=sol.p1_diag[80])
    assert rep.passed, rep.z
    assert np.all(rep.stderr > 0)


def test_bsde_trivial_cases():
    p = scalar_problem(A=0.2, C=0.3, H=1.0, Ahat=0.5, N=50)
    rep = simulate_closed_loop(p, zero_gain(p), np.zeros((51, 1, 1)), [0.0], 0, McConfig(paths=200))
    assert rep.estimate == 0.0
    q = scalar_problem(A=0.2, C=0.3, N=50)
    rep = simulate_closed_loop(q, zero_gain(q), np.zeros((51, 1, 1)), [1.0], 0, McConfig(paths=200))
    assert rep.estimate == 0.0 and rep.passed


def test_bsde_mismatch_is_first_order(solved):
    p, sol, _ = solved("discounted_2x2")
    cfg = McConfig(paths=4000, seed=3)
    from ere_lab import solve_equilibrium

    out = []
    for N in (50, 100, 200):
        q = p.with_grid(N)
        s, _ = solve_equilibrium(q)
        rep = simulate_closed_loop(q, s.theta, s.p2, [1.0, -1.0], 0, cfg)
        assert rep.passed
        out.append(rep.estimate)
    r1, r2 = out[0] / out[1], out[1] / out[2]
    assert 1.5 <= r1 <= 5.0 and 1.5 <= r2 <= 5.0


def test_cost_zero_weights():
    p = scalar_problem(A=0.2, B=1.0, C=0.3, R=0.0, G2=0.0, N=50)
    rep = mc_cost(p, -np.ones((51, 1, 1)), 0, [1.0], McConfig(paths=300))
    assert rep.estimate == 0.0


def test_cost_q_only_constant_state():
    p = scalar_problem(Q=1.0, N=50)
    rep = mc_cost(p, zero_gain(p), 0, [1.0], McConfig(paths=300))
    assert rep.estimate == pytest.approx(0.5, abs=1e-14)


def test_cost_matches_value(solved):
    p, sol, _ = solved("discounted_2x2")
    x0 = np.array([1.0, -0.5])
    target = 0.5 * x0 @ sol.value[120] @ x0
    rep = mc_cost(p, sol.theta, 120, x0, McConfig(paths=20_000, seed=9, antithetic=True), target=target)
    assert rep.passed, rep.z


def test_reproducible_and_worker_independent(solved):
    p, sol, _ = solved("discounted_2x2")
    a = mc_cost(p, sol.theta, 300, [1.0, 1.0], McConfig(paths=3000, seed=4, block_size=500, workers=1))
    b = mc_cost(p, sol.theta, 300, [1.0, 1.0], McConfig(paths=3000, seed=4, block_size=500, workers=3))
    c = mc_cost(p, sol.theta, 300, [1.0, 1.0], McConfig(paths=3000, seed=5, block_size=500, workers=1))
    assert a.estimate == b.estimate and a.stderr == b.stderr
    assert a.estimate != c.estimate


def test_plain_euler_available(solved):
    p, sol, _ = solved("discounted_2x2")
    cfg = McConfig(paths=2000, seed=1, extrapolate=False)
    rep = mc_cost(p, sol.theta, 200, [1.0, 0.0], cfg)
    assert np.isfinite(rep.estimate) and rep.stderr > 0


def test_spike_zero_direction_exact(solved):
    p, sol, _ = solved("discounted_2x2")
    rep = spike_test(p, sol, 0, [1.0, 1.0], [0.0, 0.0], cfg=McConfig(paths=500))
    assert np.all(rep.detail["delta"] == 0.0)


def test_spike_classical_nonnegative(solved):
    p, sol, _ = solved("classical_reduction")
    dirs = np.array([[1.0, 0.0], [0.0, -1.0]]) * 0.1
    rep = spike_test(p, sol, 100, [1.0, 1.0], dirs, cfg=McConfig(paths=4000, seed=2, antithetic=True))
    assert rep.passed
    assert np.all(rep.estimate + 3 * rep.stderr >= 0)


def test_spike_ladder_checks(solved):
    p, sol, _ = solved("discounted_2x2")
    with pytest.raises(ValueError):
        spike_test(p, sol, 0, [1.0, 1.0], [1.0, 0.0], eps_ladder=(0.001,))
    with pytest.raises(ValueError):
        spike_test(p, sol, 390, [1.0, 1.0], [1.0, 0.0])


def test_blowup_budget():
    p = scalar_problem(A=0.0, C=40.0, N=20)
    with pytest.raises(BlowUpError):
        simulate_phi(p, zero_gain(p), 0, McConfig(paths=2000, seed=1))
