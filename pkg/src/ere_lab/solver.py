"""Equilibrium gain by backward-windowed Picard iteration.

The map ``Gamma`` takes a gain path ``theta``, integrates ``P2`` and the
diagonal of ``P1`` for the closed loop it induces, and returns the gain

    -[R(s,s) + D'(P1(s,s) + P2'N(s,s)P2)D]^{-1}
     [B'P1(s,s) + D'(P1(s,s) + P2'N(s,s)P2)C + (Bhat' + B'P2' + D'P2'Dhat')G2(s)P2(s)].

The equilibrium gain is the fixed point of ``Gamma``.  The fixed point is
found window by window from the terminal time backwards: on a window
``[t_a, t_b)`` the gain to the right is frozen, and ``Gamma`` restricted to
the window only needs ``P1(t_i, t_b)`` and ``P2(t_b)``.  Both are computed
once per window.  A window that does not contract geometrically is halved.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import AssumptionError, NoContractionError, NoConvergenceError
from .linalg import spd_solve, spectral_norm, sym
from .ode import ClosedLoop, MatrixPath, as_gain_array, hermite_midpoints, p1_sweep, p2_sweep
from .problem import validate_assumptions

# ---------------------------------------------------------------------------
# gain formula and Gamma
# ---------------------------------------------------------------------------


def gain_from(disc, idx, P1, P2):
    """Gain formula at nodes ``idx`` from ``P1(s, s)`` and ``P2(s)`` stacks."""
    idx = np.asarray(idx)
    q = 2 * idx
    B, C, D = disc.B[q], disc.C[q], disc.D[q]
    Bh, Dh = disc.Bhat[q], disc.Dhat[q]
    G2 = disc.G2[idx]
    P2t = np.swapaxes(P2, -1, -2)
    Bt, Dt = np.swapaxes(B, -1, -2), np.swapaxes(D, -1, -2)
    W = P1 + P2t @ disc.N_diag[idx] @ P2
    bracket = sym(disc.R_diag[idx] + Dt @ W @ D)
    rhs = Bt @ P1 + Dt @ W @ C + (np.swapaxes(Bh, -1, -2) + Bt @ P2t + Dt @ P2t @ np.swapaxes(Dh, -1, -2)) @ G2 @ P2
    try:
        return -spd_solve(bracket, rhs)
    except Exception as exc:
        where = getattr(exc, "where", None)
        if where is not None:
            node = int(idx[where])
            exc.where = node
            exc.args = (f"{exc.args[0]} (gain bracket at s = {node * disc.h:.6g})",)
        raise


def terminal_gain(disc):
    """Gain at ``T`` from ``P1(T, T) = G1(T)``, ``P2(T) = H``."""
    N = disc.N
    return gain_from(disc, [N], disc.G1[[N]], disc.H[None])[0]


def gamma_full(problem, theta):
    """``Gamma(theta)`` on the whole grid with the ``P1`` diagonal and ``P2``.

    Returns ``(new_theta, p1_diag, p2)`` as arrays over all nodes.
    """
    disc = problem.discretize()
    N = disc.N
    cl = ClosedLoop(disc, theta)
    p2 = p2_sweep(cl, N, 0, disc.H)
    p2h = hermite_midpoints(cl, p2, 0)
    diag = np.empty((N + 1, problem.n, problem.n))
    p1_sweep(cl, p2h, 0, np.arange(N + 1), N, 0, disc.G1, diag=diag)
    new = gain_from(disc, np.arange(N + 1), diag, p2)
    return new, diag, p2


def gamma_map(problem, theta):
    """One application of ``Gamma`` to a gain path."""
    new, _, _ = gamma_full(problem, as_gain_array(theta, problem.grid))
    return MatrixPath(problem.grid, new, name="theta")


# ---------------------------------------------------------------------------
# a priori bounds
# ---------------------------------------------------------------------------


def _simpson_half(disc, values):
    """Composite Simpson on the half grid."""
    w = np.full(len(values), 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return float(w @ values) * disc.h / 6.0


def _caps(problem):
    caps = problem.weights.caps
    missing = [k for k in ("Q", "M", "N", "G1", "G2") if k not in caps]
    if missing:
        raise AssumptionError(f"bounds need caps for {missing}")
    return {k: float(spectral_norm(v)) for k, v in caps.items()}


def cv_bound(problem):
    """A priori bound on ``sup_t |P1(t,t) + P2(t)' G2(t) P2(t)|``.

    ``[G + G|H|^2 + int(|Qcap| + G^2 |Ahat|^2)] * exp(int[2|A| + |C|^2 +
    (n/delta)(1 + |Mcap| + |Ncap||C|^2 + 2G|Chat| + 2G|C||Dhat|)])`` with
    ``G = max(|G1cap|, |G2cap|)`` and spectral norms throughout.
    """
    disc = problem.discretize()
    caps = _caps(problem)
    G = max(caps["G1"], caps["G2"])
    n, delta = problem.n, problem.weights.delta
    nA = spectral_norm(disc.A)
    nC = spectral_norm(disc.C)
    nAh = spectral_norm(disc.Ahat)
    nCh = spectral_norm(disc.Chat)
    nDh = spectral_norm(disc.Dhat)
    H = float(spectral_norm(disc.H))
    front = G + G * H**2 + _simpson_half(disc, caps["Q"] + G**2 * nAh**2)
    expo = _simpson_half(
        disc,
        2 * nA + nC**2 + (n / delta) * (1 + caps["M"] + caps["N"] * nC**2 + 2 * G * nCh + 2 * G * nC * nDh),
    )
    return front * np.exp(expo)


def cstar_bound(problem, cv=None):
    """A priori bound on ``sup_t |theta(t)|`` built on :func:`cv_bound`."""
    disc = problem.discretize()
    caps = _caps(problem)
    if cv is None:
        cv = cv_bound(problem)
    G = max(caps["G1"], caps["G2"])
    n, delta = problem.n, problem.weights.delta
    B = float(spectral_norm(disc.B).max())
    C = float(spectral_norm(disc.C).max())
    D = float(spectral_norm(disc.D).max())
    Bh = float(spectral_norm(disc.Bhat).max())
    Dh = float(spectral_norm(disc.Dhat).max())
    return (
        cv / delta * (B + C * D)
        + n * cv / delta**2 * (1 + caps["N"] * C * D + G * B + G * D * Dh)
        + G**2 * Bh**2 / delta
    )


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass
class Certificates:
    cv_bound: float
    cstar_bound: float
    sup_value: float
    sup_theta: float
    residual: float
    slack: float = 1e-6

    @property
    def value_ok(self):
        return self.sup_value <= self.cv_bound + self.slack

    @property
    def theta_ok(self):
        return self.sup_theta <= self.cstar_bound + self.slack

    def to_text(self):
        return (
            f"cv_bound {self.cv_bound:.17g}\n"
            f"cstar_bound {self.cstar_bound:.17g}\n"
            f"sup_value {self.sup_value:.17g}\n"
            f"sup_theta {self.sup_theta:.17g}\n"
            f"residual {self.residual:.17g}\n"
            f"value_within_bound {str(self.value_ok).lower()}\n"
            f"theta_within_bound {str(self.theta_ok).lower()}\n"
        )


@dataclass
class WindowRecord:
    index: int
    start_idx: int
    stop_idx: int
    start: float
    stop: float
    iterations: int
    residuals: list
    contraction: float
    seed_distance: float
    within_ball: bool
    attempts: int = 1


@dataclass
class SolveDiagnostics:
    windows: list = field(default_factory=list)
    halvings: int = 0
    polish_residuals: list = field(default_factory=list)
    gamma_evaluations: int = 0
    elapsed: float = 0.0
    ball_radius: float = float("nan")

    def to_text(self):
        lines = [
            f"windows {len(self.windows)}",
            f"halvings {self.halvings}",
            f"gamma_evaluations {self.gamma_evaluations}",
            f"ball_radius {self.ball_radius:.6g}",
            f"elapsed_seconds {self.elapsed:.3f}",
            "window start stop iterations contraction seed_distance within_ball final_residual",
        ]
        for w in self.windows:
            lines.append(
                f"{w.index} {w.start:.6g} {w.stop:.6g} {w.iterations} {w.contraction:.4g} "
                f"{w.seed_distance:.6g} {str(w.within_ball).lower()} {w.residuals[-1]:.3e}"
            )
        lines.append("polish_residuals " + " ".join(f"{r:.3e}" for r in self.polish_residuals))
        return "\n".join(lines) + "\n"


@dataclass
class RiccatiSolution:
    theta: MatrixPath
    p1_diag: MatrixPath
    p2: MatrixPath
    value: MatrixPath
    residual: float
    certificates: Certificates

    @property
    def grid(self):
        return self.theta.grid


def equilibrium_value(p1_diag, p2, G2):
    """``V(t) = P1(t,t) + P2(t)' G2(t) P2(t)``, symmetrized.

    ``G2`` is a stack of node values.  The equilibrium value from ``(t, x)``
    is ``0.5 <V(t) x, x>``.
    """
    P1 = p1_diag.values if isinstance(p1_diag, MatrixPath) else np.asarray(p1_diag)
    P2 = p2.values if isinstance(p2, MatrixPath) else np.asarray(p2)
    V = sym(P1 + np.swapaxes(P2, -1, -2) @ np.asarray(G2) @ P2)
    if isinstance(p1_diag, MatrixPath):
        return MatrixPath(p1_diag.grid, V, name="V")
    return V


# ---------------------------------------------------------------------------
# windowed Picard iteration
# ---------------------------------------------------------------------------


def _sup_diff(a, b):
    if len(a) == 0:
        return 0.0
    return float(spectral_norm(a - b).max())


def solve_equilibrium(
    problem,
    tol=1e-10,
    max_iters=200,
    initial_window=None,
    min_window=None,
    polish_iters=5,
    override_assumptions=False,
):
    """Equilibrium gain and the associated Riccati quantities.

    Parameters
    ----------
    problem : ProblemInstance
    tol : float
        Acceptance threshold on the sup-norm change of the gain.
    max_iters : int
        Iteration budget per window attempt.
    initial_window, min_window : float, optional
        Window lengths; default ``T/8`` and ``T/1024`` (at least one step).
    polish_iters : int
        Maximum number of global ``Gamma`` iterations after the sweep.
    override_assumptions : bool
        Skip the rejection of instances failing the positivity assumptions.

    Returns
    -------
    (RiccatiSolution, SolveDiagnostics)

    Raises
    ------
    AssumptionError
        Positivity assumptions fail and ``override_assumptions`` is false.
    NoContractionError
        A window failed to contract even at the minimum length.
    BlowUpError, NotPositiveDefiniteError
        Propagated from the integrators or the gain formula.
    """
    t0 = time.perf_counter()
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not override_assumptions:
        report = validate_assumptions(problem)
        if not report.h2_ok:
            bad = [c for c in report.failures if c.assumption == "H2"]
            raise AssumptionError(
                "positivity assumptions violated: " + "; ".join(c.line() for c in bad), report=report
            )
    disc = problem.discretize()
    N, h, T = disc.N, disc.h, disc.grid.T
    k, n, m = problem.k, problem.n, problem.m
    init_steps = max(1, int(round((initial_window or T / 8) / h)))
    min_steps = max(1, int(np.floor((min_window or T / 1024) / h)))
    try:
        cv = cv_bound(problem)
        cstar = cstar_bound(problem, cv)
    except AssumptionError:
        cv = cstar = float("nan")
    diag = SolveDiagnostics(ball_radius=2 * cstar)

    theta = np.empty((N + 1, k, n))
    theta[N] = terminal_gain(disc)
    p2 = np.empty((N + 1, m, n))
    p2[N] = disc.H
    b = N
    size = init_steps
    win_index = 0
    attempts = 1
    while b > 0:
        a = max(0, b - size)
        if b == N:
            # the gain midpoints of the last two intervals read nodes N-3..N
            a = min(a, max(0, N - 3))
        idx = np.arange(a, b)
        seed = theta[b].copy()
        theta[a:b] = seed
        cl = ClosedLoop(disc, theta)
        # P1(t_i, t_b) for the window's slices, from the frozen tail
        p2h_tail = hermite_midpoints(cl, p2[b:], b)
        P1b = p1_sweep(cl, p2h_tail, 2 * b, idx, N, b, disc.G1[idx])
        residuals = []
        seed_dist = 0.0
        ok = False
        for it in range(max_iters):
            cl = ClosedLoop(disc, theta)
            p2w = p2_sweep(cl, b, a, p2[b])
            p2h = hermite_midpoints(cl, p2w, a)
            d = np.empty((b - a, n, n))
            p1_sweep(cl, p2h, 2 * a, idx, b, a, P1b, diag=d)
            new = gain_from(disc, idx, d, p2w[:-1])
            diag.gamma_evaluations += 1
            r = _sup_diff(new, theta[a:b])
            theta[a:b] = new
            residuals.append(r)
            seed_dist = max(seed_dist, _sup_diff(new, seed[None]))
            if r <= tol:
                ok = True
                break
            if it >= 10 and it % 10 == 0 and r > 0.5 * residuals[it - 10]:
                break
        if not ok:
            diag.halvings += 1
            attempts += 1
            size //= 2
            if size < min_steps:
                diag.elapsed = time.perf_counter() - t0
                raise NoContractionError(
                    f"no contraction on [{a * h:.6g}, {b * h:.6g}] even at window length "
                    f"{max(size, 1) * h:.3g} (last residuals {residuals[-3:]})",
                    diagnostics=diag,
                )
            continue
        cl = ClosedLoop(disc, theta)
        p2[a : b + 1] = p2_sweep(cl, b, a, p2[b])
        if len(residuals) > 1 and residuals[0] > 0:
            factor = (residuals[-1] / residuals[0]) ** (1.0 / (len(residuals) - 1))
        else:
            factor = 0.0
        diag.windows.append(
            WindowRecord(
                win_index, a, b, a * h, b * h, len(residuals), residuals, factor,
                seed_dist, bool(seed_dist <= 2 * cstar) if np.isfinite(cstar) else True, attempts,
            )
        )
        win_index += 1
        attempts = 1
        b = a
        size = min(2 * size, init_steps)

    # global polish
    for _ in range(max(1, polish_iters + 1)):
        new, p1d, p2f = gamma_full(problem, theta)
        diag.gamma_evaluations += 1
        res = _sup_diff(new, theta)
        diag.polish_residuals.append(res)
        if res <= tol or len(diag.polish_residuals) > polish_iters:
            break
        theta = new
    diag.elapsed = time.perf_counter() - t0
    if res > tol:
        raise NoConvergenceError(
            f"fixed-point residual {res:.3e} above tol {tol:.1e} after {polish_iters} polish iterations"
        )
    grid = problem.grid
    V = equilibrium_value(p1d, p2f, disc.G2)
    certs = Certificates(
        cv_bound=cv,
        cstar_bound=cstar,
        sup_value=float(spectral_norm(V).max()),
        sup_theta=float(spectral_norm(theta).max()),
        residual=res,
    )
    sol = RiccatiSolution(
        theta=MatrixPath(grid, theta, name="theta"),
        p1_diag=MatrixPath(grid, p1d, name="P1 diagonal"),
        p2=MatrixPath(grid, p2f, name="P2"),
        value=MatrixPath(grid, V, name="V"),
        residual=res,
        certificates=certs,
    )
    return sol, diag
