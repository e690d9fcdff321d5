"""Backward RK4 integrators for the two matrix ODE families.

For a gain path ``theta`` sampled at the grid nodes, with closed-loop
coefficients ``A_th = A + B theta``, ``C_th = C + D theta``, ``Ahat_th = Ahat +
Bhat theta``:

* ``P2`` (``m x n``) solves
  ``-dP2/ds = P2 A_th + Ahat_th + Chat P2 + Dhat P2 C_th`` with ``P2(T) = H``;
* for each fixed ``t``, the slice ``P1(t, .)`` (``n x n``, symmetric) solves
  ``-dP1/ds = P1 A_th + A_th' P1 + C_th' P1 C_th + S(t, s)`` with
  ``P1(t, T) = G1(t)`` and the source
  ``S = Q(t,s) + th' R(t,s) th + P2' M(t,s) P2 + C_th' P2' N(t,s) P2 C_th``.

All slices are integrated together: sweeping ``s`` from ``T`` down to ``0``,
the batch holds every slice whose ``t`` is still to the left of ``s``.  The
RK4 stages need ``theta`` and ``P2`` at interval midpoints.  ``theta`` is
interpolated from the nodes at and after the midpoint (cubic where
possible), ``P2`` by cubic Hermite interpolation using the ODE for slopes.
Both are fourth order, so the overall scheme keeps RK4's order.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import BlowUpError
from .linalg import sym
from .problem import TimeGrid

#: Entries above this magnitude are reported as a blow-up.
OVERFLOW = 1e12

# cubic interpolation at the midpoint of the first, second and third
# interval of four consecutive nodes
_MID4 = np.array([5.0, 15.0, -5.0, 1.0]) / 16.0
_MID4_C = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0
_MID4_R = np.array([1.0, -5.0, 15.0, 5.0]) / 16.0


@dataclass(frozen=True)
class MatrixPath:
    """Matrices sampled on (a trailing part of) a time grid.

    ``values[j]`` belongs to node ``start + j``.
    """

    grid: TimeGrid
    values: np.ndarray
    start: int = 0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 3:
            raise ValueError("MatrixPath: values must have shape (nodes, rows, cols)")
        if len(vals) != self.grid.N + 1 - self.start:
            raise ValueError(
                f"MatrixPath: expected {self.grid.N + 1 - self.start} nodes, got {len(vals)}"
            )
        object.__setattr__(self, "values", vals)

    @property
    def times(self):
        return self.grid.nodes[self.start :]

    @property
    def shape(self):
        return self.values.shape[1:]

    def __len__(self):
        return len(self.values)

    def __getitem__(self, node):
        """Value at grid node ``node`` (absolute index)."""
        if node < 0:
            node += self.grid.N + 1
        if not self.start <= node <= self.grid.N:
            raise IndexError(f"node {node} outside [{self.start}, {self.grid.N}]")
        return self.values[node - self.start]

    def at(self, t):
        """Piecewise-linear evaluation at time ``t``."""
        times = self.times
        t = float(np.clip(t, times[0], times[-1]))
        j = min(int(np.searchsorted(times, t, side="right")) - 1, len(times) - 2)
        if j < 0:
            return self.values[0].copy()
        w = (t - times[j]) / (times[j + 1] - times[j])
        return (1 - w) * self.values[j] + w * self.values[j + 1]

    def sup_norm(self):
        """``max_j ||values[j]||_2``."""
        return float(np.linalg.norm(self.values, ord=2, axis=(-2, -1)).max())


def as_gain_array(theta, grid=None):
    if isinstance(theta, MatrixPath):
        if theta.start != 0:
            raise ValueError("gain path must cover the whole grid")
        return theta.values
    arr = np.asarray(theta, dtype=float)
    if arr.ndim != 3:
        raise ValueError("gain must have shape (N + 1, k, n)")
    if grid is not None and len(arr) != grid.N + 1:
        raise ValueError(f"gain has {len(arr)} nodes, grid has {grid.N + 1}")
    return arr


def theta_half(theta):
    """Gain on the half grid by cubic interpolation.

    The midpoint of ``[t_j, t_j+1]`` uses nodes ``j .. j + 3`` (only later
    nodes, so a frozen tail never depends on earlier ones); the last two
    intervals use nodes ``N - 3 .. N``.
    """
    th = np.asarray(theta, dtype=float)
    N = len(th) - 1
    out = np.empty((2 * N + 1,) + th.shape[1:])
    out[0::2] = th
    if N < 3:
        out[1::2] = 0.5 * (th[:-1] + th[1:])
        return out
    out[1 : 2 * (N - 2) : 2] = np.einsum("q,qjab->jab", _MID4, np.stack([th[q : N - 2 + q] for q in range(4)]))
    last = th[N - 3 :].reshape(4, -1)
    out[2 * N - 3] = (_MID4_C @ last).reshape(th.shape[1:])
    out[2 * N - 1] = (_MID4_R @ last).reshape(th.shape[1:])
    return out


class ClosedLoop:
    """Closed-loop coefficients on the half grid for a fixed gain."""

    def __init__(self, disc, theta):
        th = as_gain_array(theta, disc.grid)
        self.disc = disc
        self.theta = th
        self.th = theta_half(th)
        self.A = disc.A + disc.B @ self.th
        self.C = disc.C + disc.D @ self.th
        self.Ahat = disc.Ahat + disc.Bhat @ self.th


def _p2_rhs(cl, P, q):
    d = cl.disc
    return P @ cl.A[q] + cl.Ahat[q] + d.Chat[q] @ P + d.Dhat[q] @ P @ cl.C[q]


def _blowup(quantity, j, grid, detail=""):
    t = j * grid.h
    return BlowUpError(
        f"{quantity} exceeded {OVERFLOW:.0e} at s = {t:.6g} (node {j}){detail}",
        index=j, time=t, quantity=quantity,
    )


def p2_sweep(cl, j_hi, j_lo, P_hi):
    """RK4 for ``P2`` from node ``j_hi`` down to ``j_lo``; returns nodes ``j_lo..j_hi``."""
    h = cl.disc.h
    out = np.empty((j_hi - j_lo + 1,) + np.shape(P_hi))
    P = np.array(P_hi, dtype=float)
    out[-1] = P
    for j in range(j_hi - 1, j_lo - 1, -1):
        q = 2 * j
        k1 = _p2_rhs(cl, P, q + 2)
        k2 = _p2_rhs(cl, P + 0.5 * h * k1, q + 1)
        k3 = _p2_rhs(cl, P + 0.5 * h * k2, q + 1)
        k4 = _p2_rhs(cl, P + h * k3, q)
        P = P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.abs(P).max() <= OVERFLOW:
            raise _blowup("P2", j, cl.disc.grid)
        out[j - j_lo] = P
    return out


def hermite_midpoints(cl, p2_nodes, j_lo):
    """``P2`` on the half grid between nodes ``j_lo`` and ``j_lo + len - 1``."""
    h = cl.disc.h
    nodes = np.asarray(p2_nodes)
    q = 2 * (j_lo + np.arange(len(nodes)))
    d = cl.disc
    slope = -(
        nodes @ cl.A[q] + cl.Ahat[q] + d.Chat[q] @ nodes + d.Dhat[q] @ nodes @ cl.C[q]
    )
    out = np.empty((2 * len(nodes) - 1,) + nodes.shape[1:])
    out[0::2] = nodes
    out[1::2] = 0.5 * (nodes[:-1] + nodes[1:]) + (h / 8.0) * (slope[:-1] - slope[1:])
    return out


def p1_source(cl, p2h, q, idx, q0=0):
    """Source ``S(t_i, tau_q)`` for slice indices ``idx`` at half-grid points ``q``.

    ``p2h`` holds ``P2`` on the half grid starting at half index ``q0``.
    Returns shape ``(len(q), len(idx), n, n)``.
    """
    d = cl.disc
    q = np.atleast_1d(q)
    qq = q[:, None]
    th = cl.th[q][:, None]
    P2 = p2h[q - q0][:, None]
    X = P2 @ cl.C[q][:, None]
    th_t = np.swapaxes(th, -1, -2)
    S = (
        d.kQ[qq, idx]
        + th_t @ d.kR[qq, idx] @ th
        + np.swapaxes(P2, -1, -2) @ d.kM[qq, idx] @ P2
        + np.swapaxes(X, -1, -2) @ d.kN[qq, idx] @ X
    )
    return sym(S)


def _p1_rhs(P, A, C, S):
    PA = P @ A
    return PA + np.swapaxes(PA, -1, -2) + C.T @ P @ C + S


def p1_sweep(cl, p2h, q0, idx, j_hi, j_lo, P_hi, diag=None, triangle=None):
    """Integrate the slices ``idx`` (sorted node indices) from ``s = t_{j_hi}`` to ``t_{j_lo}``.

    ``P_hi[r]`` is the value of slice ``idx[r]`` at ``t_{j_hi}``.  A slice
    stops once ``s`` reaches its own ``t``; its diagonal value is written to
    ``diag[r]`` if given.  ``triangle[r, j]``, if given, receives every value
    along the way.  Returns the batch at ``t_{j_lo}`` (stopped slices hold
    their diagonal value).
    """
    h = cl.disc.h
    idx = np.asarray(idx)
    P = np.array(P_hi, dtype=float)
    if diag is not None:
        hit = np.nonzero(idx == j_hi)[0]
        diag[hit] = P[hit]
    if triangle is not None:
        triangle[:, j_hi] = P
    for j in range(j_hi - 1, j_lo - 1, -1):
        cnt = int(np.searchsorted(idx, j, side="right"))
        if cnt == 0:
            break
        act = idx[:cnt]
        q = 2 * j
        S = p1_source(cl, p2h, np.array([q + 2, q + 1, q]), act, q0)
        A, C = cl.A, cl.C
        X = P[:cnt]
        k1 = _p1_rhs(X, A[q + 2], C[q + 2], S[0])
        k2 = _p1_rhs(X + 0.5 * h * k1, A[q + 1], C[q + 1], S[1])
        k3 = _p1_rhs(X + 0.5 * h * k2, A[q + 1], C[q + 1], S[1])
        k4 = _p1_rhs(X + h * k3, A[q], C[q], S[2])
        X = sym(X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        big = np.abs(X).reshape(cnt, -1).max(axis=1)
        if not np.all(big <= OVERFLOW):
            r = int(np.argmax(~(big <= OVERFLOW)))
            raise _blowup("P1", j, cl.disc.grid, f" in slice t = {idx[r] * h:.6g}")
        P[:cnt] = X
        if triangle is not None:
            triangle[:cnt, j] = X
        if diag is not None and idx[cnt - 1] == j:
            diag[cnt - 1] = X[cnt - 1]
    return P


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def integrate_p2(problem, theta):
    """Backward RK4 solution of the ``P2`` equation from ``P2(T) = H``."""
    disc = problem.discretize()
    cl = ClosedLoop(disc, theta)
    N = disc.N
    vals = p2_sweep(cl, N, 0, disc.H)
    return MatrixPath(problem.grid, vals, name="P2")


def _p2_half(cl, p2):
    vals = p2.values if isinstance(p2, MatrixPath) else np.asarray(p2, dtype=float)
    return hermite_midpoints(cl, vals, 0)


def integrate_p1_slice(problem, theta, p2, t_idx):
    """The slice ``s -> P1(t_{t_idx}, s)`` on nodes ``t_idx .. N``."""
    disc = problem.discretize()
    N = disc.N
    if not 0 <= t_idx <= N:
        raise IndexError(f"t_idx {t_idx} outside [0, {N}]")
    cl = ClosedLoop(disc, theta)
    p2h = _p2_half(cl, p2)
    tri = np.full((1, N + 1) + (problem.n, problem.n), np.nan)
    p1_sweep(cl, p2h, 0, np.array([t_idx]), N, t_idx, disc.G1[[t_idx]], triangle=tri)
    return MatrixPath(problem.grid, tri[0, t_idx:], start=t_idx, name=f"P1(t={t_idx * disc.h:g}, .)")


def diag_p1(problem, theta, p2):
    """Diagonal ``P1(t_i, t_i)`` for every node ``i``."""
    disc = problem.discretize()
    N = disc.N
    cl = ClosedLoop(disc, theta)
    p2h = _p2_half(cl, p2)
    idx = np.arange(N + 1)
    diag = np.empty((N + 1, problem.n, problem.n))
    p1_sweep(cl, p2h, 0, idx, N, 0, disc.G1, diag=diag)
    return MatrixPath(problem.grid, diag, name="P1 diagonal")


def p1_triangle(problem, theta, p2):
    """Full ``P1(t_i, s_j)``, shape ``(N + 1, N + 1, n, n)``; ``NaN`` where ``j < i``."""
    disc = problem.discretize()
    N = disc.N
    cl = ClosedLoop(disc, theta)
    p2h = _p2_half(cl, p2)
    tri = np.full((N + 1, N + 1, problem.n, problem.n), np.nan)
    p1_sweep(cl, p2h, 0, np.arange(N + 1), N, 0, disc.G1, triangle=tri)
    return tri


def lyapunov_forward_check(problem, theta, t_idx, p2=None):
    """``P1(t, t)`` from the forward second-moment representation.

    With ``Psi(s) = Phi(t, s)`` the closed-loop fundamental matrix,
    ``P1(t, t) = E[Psi(T)' G1(t) Psi(T) + int_t^T Psi' S(t, s) Psi ds]``.
    The second moment ``M = E[vec Psi vec Psi']`` solves the deterministic
    linear ODE ``M' = (I x A) M + M (I x A)' + (I x C) M (I x C)'``, which is
    integrated forward by RK4 together with the running integral.
    """
    disc = problem.discretize()
    N, n, h = disc.N, problem.n, disc.h
    cl = ClosedLoop(disc, theta)
    if p2 is None:
        p2 = integrate_p2(problem, cl.theta)
    p2h = _p2_half(cl, p2)
    eye = np.eye(n)
    idx = np.array([t_idx])

    def contract(S, M):
        return np.einsum("cd,acbd->ab", S, M.reshape(n, n, n, n))

    def rhs(M, q, S):
        AA = np.kron(eye, cl.A[q])
        CC = np.kron(eye, cl.C[q])
        dM = AA @ M + M @ AA.T + CC @ M @ CC.T
        return dM, contract(S, M)

    v = eye.reshape(-1, order="F")
    M = np.outer(v, v)
    J = np.zeros((n, n))
    for j in range(t_idx, N):
        q = 2 * j
        S = p1_source(cl, p2h, np.array([q, q + 1, q + 2]), idx)[:, 0]
        m1, j1 = rhs(M, q, S[0])
        m2, j2 = rhs(M + 0.5 * h * m1, q + 1, S[1])
        m3, j3 = rhs(M + 0.5 * h * m2, q + 1, S[1])
        m4, j4 = rhs(M + h * m3, q + 2, S[2])
        M = M + (h / 6.0) * (m1 + 2 * m2 + 2 * m3 + m4)
        J = J + (h / 6.0) * (j1 + 2 * j2 + 2 * j3 + j4)
        if not np.abs(M).max() <= OVERFLOW:
            raise _blowup("second moment", j + 1, disc.grid)
    return sym(contract(disc.G1[t_idx], M) + J)
