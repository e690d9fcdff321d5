"""Monte Carlo cross-checks of the deterministic solver.

Everything is simulated with Euler-Maruyama on the solver grid, driven by a
scalar Brownian motion.  Paths are generated in fixed-size blocks; block
``b`` draws its increments from ``SeedSequence([seed, b])``, so results are
bitwise reproducible for a given ``(seed, paths, grid)`` no matter how many
worker threads process the blocks.

Euler-Maruyama has weak order one, which at desk-scale grids leaves a bias
larger than the statistical error of 10^5 paths.  With
``extrapolate=True`` (default) expectations are therefore computed as
``2 E_h - E_2h`` (Talay-Tubaro): the second run steps over every other grid
node and is driven by the same Brownian path.  The combination is formed
path by path, so standard errors account for the coupling.

With ``antithetic=True`` paths come in pairs driven by ``dW`` and ``-dW``;
standard errors are then computed from the pair averages.

A path whose state leaves ``[-1e12, 1e12]`` (or becomes non-finite) is
excluded and counted.  More than 1% exclusions raise
:class:`~ere_lab.exceptions.BlowUpError`.

Internally, path ensembles are stored paths-last: a state is ``(n, P)`` or
``(arms, n, P)``.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import BlowUpError
from .linalg import sym
from .ode import OVERFLOW, ClosedLoop, as_gain_array, hermite_midpoints, p1_source, p2_sweep

MAX_EXCLUDED = 0.01
DEFAULT_LADDER = (0.2, 0.1, 0.05)


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings.

    ``workers=None`` reads ``ERE_LAB_THREADS`` (``0`` or unset means one
    thread per CPU).
    """

    paths: int = 10_000
    seed: int = 0
    antithetic: bool = False
    extrapolate: bool = True
    block_size: int = 10_000
    workers: int = None

    def __post_init__(self):
        if int(self.paths) != self.paths or self.paths < 100:
            raise ValueError("McConfig: paths must be an integer >= 100")
        if self.block_size < 2 or self.block_size % 2:
            raise ValueError("McConfig: block_size must be even and >= 2")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("McConfig: seed must be a 64-bit unsigned integer")

    @property
    def n_paths(self):
        """Number of simulated paths (rounded up to even with antithetics)."""
        return self.paths + (self.paths % 2 if self.antithetic else 0)

    def n_workers(self):
        w = self.workers
        if w is None:
            w = int(os.environ.get("ERE_LAB_THREADS", "0") or 0)
        return w if w > 0 else (os.cpu_count() or 1)


@dataclass
class McReport:
    name: str
    estimate: np.ndarray
    stderr: np.ndarray
    paths: int
    excluded: int = 0
    target: np.ndarray = None
    z: np.ndarray = None
    passed: bool = None
    detail: dict = field(default_factory=dict)

    @property
    def max_abs_z(self):
        if self.z is None:
            return float("nan")
        return float(np.max(np.abs(self.z)))


def _z_scores(estimate, stderr, target):
    est, se, tgt = (np.asarray(x, dtype=float) for x in (estimate, stderr, target))
    diff = est - tgt
    scale = 1e-12 * max(1.0, float(np.max(np.abs(tgt))))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(np.abs(diff) <= scale, 0.0, np.inf))
    return z


# ---------------------------------------------------------------------------
# random numbers, blocks, statistics
# ---------------------------------------------------------------------------


def _increments(cfg, block, n_block, steps, h):
    """Brownian increments of one block, shape ``(steps, n_block)``."""
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), block]))
    if cfg.antithetic:
        z = rng.standard_normal((n_block // 2, steps))
        z = np.stack([z, -z], axis=1).reshape(n_block, steps)
    else:
        z = rng.standard_normal((n_block, steps))
    return np.ascontiguousarray(z.T) * np.sqrt(h)


def _run_blocks(cfg, steps, h, work):
    """Apply ``work(dW)`` to every block; concatenate results along the last axis."""
    total = cfg.n_paths
    sizes = [cfg.block_size] * (total // cfg.block_size)
    if total % cfg.block_size:
        sizes.append(total % cfg.block_size)

    def one(b):
        return work(_increments(cfg, b, sizes[b], steps, h))

    workers = min(cfg.n_workers(), len(sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(one, range(len(sizes))))
    else:
        parts = [one(b) for b in range(len(sizes))]
    return {k: np.concatenate([p[k] for p in parts], axis=-1) for k in parts[0]}


def _bad_paths(*arrays):
    """Paths (last axis) with a non-finite or overflowing entry."""
    bad = None
    for a in arrays:
        a = np.asarray(a)
        flat = a.reshape(-1, a.shape[-1])
        with np.errstate(invalid="ignore"):
            b = ~np.all(np.abs(flat) <= OVERFLOW, axis=0)
        bad = b if bad is None else bad | b
    return bad


def _keep_mask(cfg, bad):
    """Inclusion mask (antithetic pairs are dropped together); raises past the budget."""
    bad = np.asarray(bad, dtype=bool)
    if cfg.antithetic:
        bad = np.repeat(bad.reshape(-1, 2).any(axis=1), 2)
    n_bad = int(bad.sum())
    if n_bad > MAX_EXCLUDED * len(bad):
        raise BlowUpError(
            f"{n_bad} of {len(bad)} Monte Carlo paths exceeded {OVERFLOW:.0e}", quantity="paths"
        )
    return ~bad, n_bad


def _mean_stderr(values, cfg):
    """Mean and standard error over the last axis (pair averages with antithetics)."""
    v = np.asarray(values, dtype=float)
    if cfg.antithetic:
        v = 0.5 * (v[..., 0::2] + v[..., 1::2])
    n = v.shape[-1]
    mean = v.mean(axis=-1)
    se = v.std(axis=-1, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def _schedules(cfg, t_idx, N, marks=()):
    """``(nodes, weight)`` pairs: the solver grid and, if extrapolating, every other node.

    ``marks`` are extra nodes the coarse schedule must contain (spike ends).
    """
    fine = np.arange(t_idx, N + 1)
    if not cfg.extrapolate or N - t_idx < 2:
        return [(fine, 1.0)]
    coarse = np.array(sorted(set(range(t_idx, N + 1, 2)) | {N} | {int(m) for m in marks}))
    return [(fine, 2.0), (coarse, -1.0)]


def _coarse_increments(dW, nodes):
    """Increments over the steps of ``nodes`` from fine increments ``(N - t, P)``."""
    if len(nodes) == len(dW) + 1:
        return dW
    W = np.concatenate([np.zeros((1, dW.shape[1])), np.cumsum(dW, axis=0)])
    rel = nodes - nodes[0]
    return W[rel[1:]] - W[rel[:-1]]


def _qf(X, S):
    """``<S x, x>`` along the second-to-last axis of ``X``."""
    return np.sum(X * (S @ X), axis=-2)


# ---------------------------------------------------------------------------
# fundamental matrix and the P1 representation
# ---------------------------------------------------------------------------


def _phi_path(A, C, h, nodes, dW, source=None, G=None):
    """Euler-Maruyama for ``Phi`` along ``nodes``; returns ``(Phi(T), value)``.

    ``Phi`` is stored as ``(n, n, P)``.  ``value`` is
    ``Phi' G Phi + int Phi' S Phi`` (trapezoid) when ``source`` is given.
    """
    n, P = A.shape[1], dW.shape[1]
    Phi = np.repeat(np.eye(n)[:, :, None], P, axis=2)

    def form(S):
        W = np.einsum("ab,bcp->acp", S, Phi)
        return np.einsum("cap,cbp->abp", Phi, W)

    run = np.zeros((n, n, P))
    with np.errstate(over="ignore", invalid="ignore"):
        left = form(source[nodes[0]]) if source is not None else None
        for r in range(len(nodes) - 1):
            j, jn = nodes[r], nodes[r + 1]
            dt = (jn - j) * h
            flat = Phi.reshape(n, n * P)
            Phi = Phi + ((dt * A[j]) @ flat + (C[j] @ flat) * np.tile(dW[r], n)).reshape(n, n, P)
            if source is not None:
                right = form(source[jn])
                run += 0.5 * dt * (left + right)
                left = right
        value = form(G) + run if G is not None else None
    return Phi, value


@dataclass
class PhiSample:
    terminal: np.ndarray
    running: np.ndarray
    keep: np.ndarray
    excluded: int


def _closed_loop_nodes(disc, th):
    q = 2 * np.arange(disc.N + 1)
    return disc.A[q] + disc.B[q] @ th, disc.C[q] + disc.D[q] @ th


def simulate_phi(problem, theta, t_idx, cfg, source=None):
    """Closed-loop fundamental matrix ``Phi(t, .)`` started at ``t = t_{t_idx}``.

    ``dPhi = A_th Phi ds + C_th Phi dW``, ``Phi(t, t) = I``, Euler-Maruyama
    on the solver grid (no extrapolation).

    Parameters
    ----------
    source : ndarray, shape (N + 1, n, n), optional
        Node values of a symmetric weight ``S(s)``; if given, the running
        functional ``int_t^T Phi' S Phi ds`` is accumulated by the trapezoid
        rule along every path.

    Returns
    -------
    PhiSample
        ``terminal`` (paths, n, n) holds ``Phi(t, T)``, ``running`` the running
        functional (zeros without ``source``), ``keep`` the inclusion mask.
    """
    disc = problem.discretize()
    th = as_gain_array(theta, problem.grid)
    N, h, n = disc.N, disc.h, problem.n
    A, C = _closed_loop_nodes(disc, th)
    nodes = np.arange(t_idx, N + 1)

    def work(dW):
        Phi, _ = _phi_path(A, C, h, nodes, dW)
        if source is None:
            run = np.zeros_like(Phi)
        else:
            _, run = _phi_path(A, C, h, nodes, dW, source, np.zeros((n, n)))
        return {"terminal": Phi, "running": run}

    out = _run_blocks(cfg, N - t_idx, h, work)
    keep, n_bad = _keep_mask(cfg, _bad_paths(out["terminal"], out["running"]))
    return PhiSample(
        np.moveaxis(out["terminal"], -1, 0), np.moveaxis(out["running"], -1, 0), keep, n_bad
    )


def mc_p1_diag(problem, theta, p2, t_idx, cfg, target=None):
    """Monte Carlo estimate of ``P1(t, t)`` from its expectation representation.

    ``P1(t,t) = E[Phi(t,T)' G1(t) Phi(t,T) + int_t^T Phi' S(t, s) Phi ds]``
    with the same source ``S`` as the slice ODE.  ``target`` (e.g. the ODE
    diagonal) turns on elementwise z-scores.
    """
    disc = problem.discretize()
    N, h = disc.N, disc.h
    G1 = disc.G1[t_idx]
    if t_idx == N:
        est = G1.copy()
        rep = McReport("p1_diag", est, np.zeros_like(est), cfg.n_paths)
    else:
        cl = ClosedLoop(disc, theta)
        p2v = p2.values if hasattr(p2, "values") else np.asarray(p2)
        p2h = hermite_midpoints(cl, p2v, 0)
        source = np.zeros((N + 1, problem.n, problem.n))
        source[t_idx:] = p1_source(cl, p2h, 2 * np.arange(t_idx, N + 1), np.array([t_idx]))[:, 0]
        A, C = _closed_loop_nodes(disc, cl.theta)
        scheds = _schedules(cfg, t_idx, N)

        def work(dW):
            total = 0.0
            for nodes, wt in scheds:
                _, val = _phi_path(A, C, h, nodes, _coarse_increments(dW, nodes), source, G1)
                total = total + wt * val
            return {"v": total}

        vals = _run_blocks(cfg, N - t_idx, h, work)["v"]
        keep, n_bad = _keep_mask(cfg, _bad_paths(vals))
        vals = sym(np.moveaxis(vals[..., keep], -1, 0))
        est, se = _mean_stderr(np.moveaxis(vals, 0, -1), cfg)
        rep = McReport("p1_diag", est, se, int(keep.sum()), n_bad)
    rep.detail["t"] = t_idx * disc.h
    if target is not None:
        rep.target = np.asarray(target, dtype=float)
        rep.z = _z_scores(rep.estimate, rep.stderr, rep.target)
        rep.passed = bool(rep.max_abs_z <= 3.0)
    return rep


# ---------------------------------------------------------------------------
# cost functional
# ---------------------------------------------------------------------------


def _xi_paths(cl, Kh, t_idx, w_arms, n_spike):
    """Offset ``xi`` in ``Y = K X + xi`` for deterministic open-loop parts.

    ``xi' = -[(Bhat + K B + Dhat K D) w + Chat xi]``, ``xi(T) = 0``, with ``w``
    equal to ``w_arms[a]`` on the first ``n_spike[a]`` intervals after
    ``t_idx`` and zero afterwards.  Returns ``(arms, N + 1, m)``.
    """
    d = cl.disc
    N, h = d.N, d.h
    arms, m = len(w_arms), d.H.shape[0]
    xi = np.zeros((arms, N + 1, m))

    def f(x, w, q):
        K = Kh[q]
        g = d.Bhat[q] + K @ d.B[q] + d.Dhat[q] @ K @ d.D[q]
        return -(g @ w + d.Chat[q] @ x)

    for a in range(arms):
        w = w_arms[a]
        last = t_idx + int(n_spike[a])
        if last == t_idx or not np.any(w):
            continue
        x = np.zeros(m)
        for j in range(last - 1, t_idx - 1, -1):
            q = 2 * j
            # backward RK4 step for dxi/ds = f
            k1 = f(x, w, q + 2)
            k2 = f(x - 0.5 * h * k1, w, q + 1)
            k3 = f(x - 0.5 * h * k2, w, q + 1)
            k4 = f(x - h * k3, w, q)
            x = x - (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            xi[a, j] = x
    return xi


class _CostModel:
    """Closed-loop data needed to simulate costs from a fixed ``t``."""

    def __init__(self, problem, theta, t_idx, w_arms, n_spike):
        disc = problem.discretize()
        self.h = disc.h
        self.N = disc.N
        th = as_gain_array(theta, problem.grid)
        cl = ClosedLoop(disc, th)
        self.K = p2_sweep(cl, disc.N, 0, disc.H)
        Kh = hermite_midpoints(cl, self.K, 0)
        self.w_arms = np.asarray(w_arms, dtype=float).reshape(-1, problem.k)
        self.n_spike = np.asarray(n_spike, dtype=int)
        self.xi = _xi_paths(cl, Kh, t_idx, self.w_arms, self.n_spike)
        q = 2 * np.arange(disc.N + 1)
        self.th = th
        self.A, self.C = cl.A[q], cl.C[q]
        self.B, self.D = disc.B[q], disc.D[q]
        self.Ah, self.Bh = disc.Ahat[q], disc.Bhat[q]
        self.Ch, self.Dh = disc.Chat[q], disc.Dhat[q]
        self.Q, self.R = disc.kQ[q, t_idx], disc.kR[q, t_idx]
        self.M, self.Nw = disc.kM[q, t_idx], disc.kN[q, t_idx]
        self.G1 = disc.G1[t_idx]
        self.G2 = disc.G2[t_idx]
        self.H = disc.H
        self.t_idx = t_idx
        self.m = problem.m

    def run(self, x0, nodes, dW):
        """Per-path cost ``(arms, P)`` and adjoint sample ``(arms, m, P)`` along ``nodes``.

        The running cost over ``[s_j, s_j']`` is the trapezoid of the
        integrand at both ends with the interval's open-loop part ``w``.
        """
        h, t = self.h, self.t_idx
        arms, P, m = len(self.w_arms), dW.shape[1], self.m
        X = np.repeat(np.repeat(x0[None, :, None], arms, axis=0), P, axis=2)
        Gam = np.repeat(np.eye(m)[:, :, None], P, axis=2)
        cost = np.zeros((arms, P))
        yint = np.zeros((arms, m, P))

        def integrand(j, X, w):
            diff = self.C[j] @ X + (w @ self.D[j].T)[:, :, None]
            u = self.th[j] @ X + w[:, :, None]
            Y = self.K[j] @ X + self.xi[:, j, :, None]
            Z = self.K[j] @ diff
            f = _qf(X, self.Q[j]) + _qf(u, self.R[j]) + _qf(Y, self.M[j]) + _qf(Z, self.Nw[j])
            g = self.Ah[j] @ X + self.Bh[j] @ u
            return f, g, diff

        def gam_apply(G, g):
            return np.einsum("abp,rbp->rap", G, g)

        with np.errstate(over="ignore", invalid="ignore"):
            for r in range(len(nodes) - 1):
                j, jn = nodes[r], nodes[r + 1]
                dt = (jn - j) * h
                dw = dW[r]
                w = self.w_arms * ((j - t) < self.n_spike)[:, None]
                fl, gl, diff = integrand(j, X, w)
                Xn = X + dt * (self.A[j] @ X + (w @ self.B[j].T)[:, :, None]) + diff * dw
                step = (dt * self.Ch[j])[:, :, None] + self.Dh[j][:, :, None] * dw
                Gn = Gam + np.einsum("acp,cbp->abp", Gam, step)
                fr, gr, _ = integrand(jn, Xn, w)
                cost += 0.5 * dt * (fl + fr)
                yint += 0.5 * dt * (gam_apply(Gam, gl) + gam_apply(Gn, gr))
                X, Gam = Xn, Gn
            cost += _qf(X, self.G1)
            yint += gam_apply(Gam, self.H @ X)
        return cost, yint


def _simulate_costs(problem, theta, t_idx, x0, cfg, w_arms, n_spike):
    """Per-path costs ``(arms, P)`` and adjoint samples ``(arms, m, P)`` for stacked arms.

    Every arm uses ``u = theta X + w_a`` on the first ``n_spike[a]`` intervals
    and ``u = theta X`` afterwards; all arms share the Brownian increments.
    ``0.5 * (mean(cost) + <G2 ybar, ybar>)`` is the cost estimate, where
    ``ybar = mean(y)`` estimates ``Y(t)``.
    """
    model = _CostModel(problem, theta, t_idx, w_arms, n_spike)
    N = model.N
    x0 = np.asarray(x0, dtype=float).reshape(problem.n)
    scheds = _schedules(cfg, t_idx, N, t_idx + model.n_spike)
    if N == t_idx:
        scheds = [(np.array([t_idx]), 1.0)]

    def work(dW):
        cost, y = 0.0, 0.0
        for nodes, wt in scheds:
            c, yy = model.run(x0, nodes, _coarse_increments(dW, nodes))
            cost, y = cost + wt * c, y + wt * yy
        return {"cost": cost, "y": y}

    out = _run_blocks(cfg, max(N - t_idx, 1), model.h, work)
    keep, n_bad = _keep_mask(cfg, _bad_paths(out["cost"], out["y"]))
    return out["cost"][:, keep], out["y"][..., keep], keep, n_bad, model.G2


def _cost_influence(cost, y, G2):
    """Cost estimate per arm and per-path influence values ``(arms, P)``."""
    ybar = y.mean(axis=-1)
    grad = ybar @ G2.T
    est = 0.5 * cost.mean(axis=-1) + 0.5 * np.einsum("ai,ij,aj->a", ybar, G2, ybar)
    infl = 0.5 * cost + np.einsum("aip,ai->ap", y, grad)
    return est, infl


def mc_cost(problem, theta, t_idx, x0, cfg, target=None):
    """Monte Carlo estimate of the cost of the feedback ``u = theta X`` from ``(t, x0)``.

    The forward state is simulated by Euler-Maruyama.  On each path
    ``Y = K X`` and ``Z = K C_th X`` with ``K`` the ``P2``-type solution for
    ``theta``.  The deterministic ``Y(t)`` entering ``<G2(t) Y(t), Y(t)>`` is
    estimated independently through the adjoint representation
    ``Y(t) = E[Gam(T) H X(T) + int_t^T Gam (Ahat X + Bhat u) ds]``,
    ``dGam = Gam Chat ds + Gam Dhat dW``, ``Gam(t) = I``.
    """
    disc = problem.discretize()
    cost, y, keep, n_bad, G2 = _simulate_costs(
        problem, theta, t_idx, x0, cfg, np.zeros((1, problem.k)), [0]
    )
    est, infl = _cost_influence(cost, y, G2)
    _, se = _mean_stderr(infl, cfg)
    rep = McReport("cost", float(est[0]), float(se[0]), int(keep.sum()), n_bad)
    rep.detail["t"] = t_idx * disc.h
    if target is not None:
        rep.target = float(target)
        rep.z = _z_scores(rep.estimate, rep.stderr, rep.target)
        rep.passed = bool(rep.max_abs_z <= 3.0)
    return rep


# ---------------------------------------------------------------------------
# BSDE identity
# ---------------------------------------------------------------------------


def simulate_closed_loop(problem, theta, p2, x0, t_idx, cfg, K=10.0):
    """Compare ``Y = P2 X`` with a pathwise backward evaluation of the BSDE.

    Forward: Euler-Maruyama for ``X`` under ``u = theta X``.  Backward, along
    each path: ``Y_N = H X_N``, ``Y_j = Y_{j+1} + h (Ahat_th X_j + Chat Y_{j+1}
    + Dhat Z_j) - Z_j dW_j`` with ``Z_j = P2 C_th X_j``.  The report holds
    ``sup_j E|Y_j - P2_j X_j|^2``; it passes when below
    ``K h max_j E|P2_j X_j|^2 + 3 stderr``.
    """
    disc = problem.discretize()
    th = as_gain_array(theta, problem.grid)
    N, h, n = disc.N, disc.h, problem.n
    P2 = p2.values if hasattr(p2, "values") else np.asarray(p2)
    cl = ClosedLoop(disc, th)
    q = 2 * np.arange(N + 1)
    A, C, Ah = cl.A[q], cl.C[q], cl.Ahat[q]
    Ch, Dh = disc.Chat[q], disc.Dhat[q]
    x0 = np.asarray(x0, dtype=float).reshape(n)
    steps = N - t_idx
    if steps == 0:
        return McReport("bsde_identity", 0.0, 0.0, cfg.n_paths, target=0.0, passed=True)

    def work(dW):
        P = dW.shape[1]
        X = np.empty((steps + 1, n, P))
        X[0] = x0[:, None]
        with np.errstate(over="ignore", invalid="ignore"):
            for r in range(steps):
                j = t_idx + r
                X[r + 1] = X[r] + h * (A[j] @ X[r]) + (C[j] @ X[r]) * dW[r]
            Y = disc.H @ X[-1]
            mis = np.zeros((steps + 1, P))
            mag = np.zeros((steps + 1, P))
            mag[-1] = np.sum(Y**2, axis=0)
            for r in range(steps - 1, -1, -1):
                j = t_idx + r
                Z = (P2[j] @ C[j]) @ X[r]
                Y = Y + h * (Ah[j] @ X[r] + Ch[j] @ Y + Dh[j] @ Z) - Z * dW[r]
                ref = P2[j] @ X[r]
                mis[r] = np.sum((Y - ref) ** 2, axis=0)
                mag[r] = np.sum(ref**2, axis=0)
        return {"mis": mis, "mag": mag, "xT": X[-1]}

    out = _run_blocks(cfg, steps, h, work)
    keep, n_bad = _keep_mask(cfg, _bad_paths(out["xT"], out["mis"]))
    mean, se = _mean_stderr(out["mis"][:, keep], cfg)
    mag, _ = _mean_stderr(out["mag"][:, keep], cfg)
    jmax = int(np.argmax(mean))
    threshold = K * h * float(mag.max())
    est, err = float(mean[jmax]), float(se[jmax])
    rep = McReport("bsde_identity", est, err, int(keep.sum()), n_bad, target=threshold)
    rep.passed = bool(est <= threshold + 3 * err)
    rep.detail.update({"t": t_idx * h, "worst_time": (t_idx + jmax) * h, "K": K})
    return rep


# ---------------------------------------------------------------------------
# spike variation
# ---------------------------------------------------------------------------


def spike_test(problem, sol, t_idx, x0, v, eps_ladder=DEFAULT_LADDER, cfg=None, theta=None):
    """Equilibrium test by spike variation with common random numbers.

    For every ``eps`` in the ladder the control ``u = theta X + v`` on
    ``[t, t + eps)`` (feedback only afterwards) is compared with ``u = theta
    X``; ``Delta(eps) = [J(u_eps) - J(u)] / eps``.  The quotients are
    extrapolated to ``eps -> 0`` by a least-squares line ``a + b eps``.  The
    test passes when ``a >= -(3 stderr(a) + 2 h)``.

    ``v`` may be a single ``k``-vector or an array of directions ``(d, k)``;
    the report then carries one entry per direction.  ``theta`` overrides
    ``sol.theta`` (e.g. to test a perturbed gain).
    """
    cfg = cfg or McConfig()
    disc = problem.discretize()
    N, h = disc.N, disc.h
    th = sol.theta.values if theta is None else as_gain_array(theta, problem.grid)
    eps = np.atleast_1d(np.asarray(eps_ladder, dtype=float))
    if np.any(eps < 2 * h - 1e-12):
        raise ValueError(f"spike ladder too coarse for the grid: eps must be at least 2 grid steps ({2 * h:.4g})")
    n_eps = np.rint(eps / h).astype(int)
    if np.any(t_idx + n_eps > N):
        raise ValueError("spike interval extends beyond the horizon")
    V = np.atleast_2d(np.asarray(v, dtype=float))
    if V.shape[1] != problem.k:
        raise ValueError(f"direction must have {problem.k} components")
    n_dir, n_e = len(V), len(eps)
    w_arms = np.concatenate([np.zeros((1, problem.k)), np.repeat(V, n_e, axis=0)])
    spikes = np.concatenate([[0], np.tile(n_eps, n_dir)])
    cost, y, keep, n_bad, G2 = _simulate_costs(problem, th, t_idx, x0, cfg, w_arms, spikes)
    est, infl = _cost_influence(cost, y, G2)
    eff = n_eps * h
    if n_e > 1:
        design = np.stack([np.ones_like(eff), eff], axis=1)
        wa = np.linalg.pinv(design)
    else:
        wa = np.array([[1.0], [0.0]])
    deltas = np.empty((n_dir, n_e))
    d_se = np.empty((n_dir, n_e))
    a = np.empty(n_dir)
    a_se = np.empty(n_dir)
    slope = np.empty(n_dir)
    for d in range(n_dir):
        rows = 1 + d * n_e + np.arange(n_e)
        deltas[d] = (est[rows] - est[0]) / eff
        inf_d = (infl[rows] - infl[0]) / eff[:, None]
        _, d_se[d] = _mean_stderr(inf_d, cfg)
        a[d], slope[d] = wa @ deltas[d]
        _, a_se[d] = _mean_stderr(wa[0] @ inf_d, cfg)
    thresh = -(3 * a_se + 2 * h)
    ok = a >= thresh
    rep = McReport("spike", a, a_se, int(keep.sum()), n_bad, target=thresh, passed=bool(np.all(ok)))
    rep.detail.update(
        {"t": t_idx * h, "eps": eff, "delta": deltas, "delta_stderr": d_se, "slope": slope,
         "directions": V, "per_direction_pass": ok}
    )
    return rep
