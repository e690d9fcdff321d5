"""Problem instances for time-inconsistent forward-backward LQ control.

A :class:`ProblemInstance` bundles

* the state coefficients ``A, B, C, D`` (forward SDE) and ``Ahat, Bhat, Chat,
  Dhat, H`` (backward equation), each a :class:`MatrixFunction` of time;
* the two-time weighting kernels ``Q, R, M, N`` (:class:`Kernel`) and the
  terminal weights ``G1(t), G2(t)``;
* the uniform :class:`TimeGrid` every numerical routine works on.

Time-dependent entries are small callable objects that evaluate on arrays of
times at once.  The serializable ones (``Const``, ``Poly``, ``Table``,
``ExpDiscountPath`` and the discounted kernels) round-trip through the
problem file format in :mod:`ere_lab.config`.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DomainError
from .linalg import as_matrix, min_eigenvalue_sym, sym

_DOMAIN_TOL = 1e-12


# ---------------------------------------------------------------------------
# one-time matrix functions
# ---------------------------------------------------------------------------


class MatrixFunction:
    """Matrix-valued function of one time variable, vectorized over ``t``."""

    shape = None
    smooth = False

    def __call__(self, t):
        raise NotImplementedError

    def to_config(self):
        """Serializable description, or ``None`` if the function is opaque."""
        return None

    def __eq__(self, other):
        if type(self) is not type(other):
            return NotImplemented
        a, b = self.to_config(), other.to_config()
        if a is None or b is None:
            return self is other
        return a == b

    __hash__ = object.__hash__


def _tshape(t):
    t = np.asarray(t, dtype=float)
    return t, t.shape


class Const(MatrixFunction):
    smooth = True

    def __init__(self, value):
        self.value = as_matrix(value, name="const")
        self.shape = self.value.shape

    def __call__(self, t):
        t, shp = _tshape(t)
        return np.broadcast_to(self.value, shp + self.shape).copy()

    def to_config(self):
        return {"const": self.value.tolist()}

    def __repr__(self):
        return f"Const({self.value.tolist()})"


class Poly(MatrixFunction):
    """``sum_k coeffs[k] * t**k``."""

    smooth = True

    def __init__(self, coeffs):
        mats = [as_matrix(c, name="poly coefficient") for c in coeffs]
        if not mats:
            raise ValueError("poly: at least one coefficient required")
        shape = mats[0].shape
        if any(c.shape != shape for c in mats):
            raise ValueError("poly: coefficient shapes differ")
        self.coeffs = np.stack(mats)
        self.shape = shape

    def __call__(self, t):
        t, shp = _tshape(t)
        out = np.zeros(shp + self.shape)
        for c in self.coeffs[::-1]:
            out = out * t[..., None, None] + c
        return out

    def to_config(self):
        return {"poly": self.coeffs.tolist()}


class Table(MatrixFunction):
    """Piecewise-linear interpolation of tabulated matrices.

    Outside ``[nodes[0], nodes[-1]]`` the end values are held constant.
    Evaluating exactly at a node returns the tabulated value.
    """

    def __init__(self, nodes, values):
        self.nodes = np.asarray(nodes, dtype=float)
        vals = [as_matrix(v, name="table value") for v in values]
        if self.nodes.ndim != 1 or len(self.nodes) < 2:
            raise ValueError("table: need at least two nodes")
        if len(vals) != len(self.nodes):
            raise ValueError("table: number of values must match number of nodes")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("table: nodes must be strictly increasing")
        self.values = np.stack(vals)
        self.shape = self.values.shape[1:]

    def __call__(self, t):
        t, shp = _tshape(t)
        flat = t.reshape(-1)
        x = np.clip(flat, self.nodes[0], self.nodes[-1])
        idx = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, len(self.nodes) - 2)
        x0, x1 = self.nodes[idx], self.nodes[idx + 1]
        w = ((x - x0) / (x1 - x0))[:, None, None]
        out = (1.0 - w) * self.values[idx] + w * self.values[idx + 1]
        exact = x == x1
        out[exact] = self.values[idx[exact] + 1]
        return out.reshape(shp + self.shape)

    def to_config(self):
        return {"table": {"nodes": self.nodes.tolist(), "values": self.values.tolist()}}


class ExpDiscountPath(MatrixFunction):
    """``exp(-rate * (horizon - t)) * base``; nondecreasing in ``t`` for ``rate >= 0``."""

    smooth = True

    def __init__(self, rate, base, horizon):
        self.rate = float(rate)
        self.base = as_matrix(base, name="exp_discount base")
        self.horizon = float(horizon)
        self.shape = self.base.shape

    def __call__(self, t):
        t, _ = _tshape(t)
        return np.exp(-self.rate * (self.horizon - t))[..., None, None] * self.base

    def to_config(self):
        return {"exp_discount": {"rate": self.rate, "base": self.base.tolist()}}


class FunctionPath(MatrixFunction):
    """Wrap an arbitrary vectorized callable ``t -> (..., r, c)``."""

    def __init__(self, fn, shape, smooth=False):
        self.fn = fn
        self.shape = tuple(shape)
        self.smooth = smooth

    def __call__(self, t):
        t, shp = _tshape(t)
        out = np.asarray(self.fn(t), dtype=float)
        return np.broadcast_to(out, shp + self.shape).copy()


def as_matrix_function(value, name="matrix"):
    if isinstance(value, MatrixFunction):
        return value
    if callable(value):
        sample = np.asarray(value(np.zeros(1)), dtype=float)
        return FunctionPath(value, sample.shape[-2:])
    return Const(as_matrix(value, name=name))


# ---------------------------------------------------------------------------
# two-time kernels
# ---------------------------------------------------------------------------


class Discount:
    """Scalar discount function ``lambda(u)`` of the delay ``u = s - t``."""

    smooth = True

    def __call__(self, u):
        raise NotImplementedError

    def to_config(self):
        return None


class ExpDiscount(Discount):
    def __init__(self, rate):
        self.rate = float(rate)

    def __call__(self, u):
        return np.exp(-self.rate * np.asarray(u, dtype=float))

    def to_config(self):
        return {"kind": "exp", "rate": self.rate}


class HyperbolicDiscount(Discount):
    def __init__(self, rate):
        self.rate = float(rate)

    def __call__(self, u):
        return 1.0 / (1.0 + self.rate * np.asarray(u, dtype=float))

    def to_config(self):
        return {"kind": "hyperbolic", "rate": self.rate}


class FunctionDiscount(Discount):
    smooth = False

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, u):
        return np.asarray(self.fn(np.asarray(u, dtype=float)), dtype=float)


class Kernel:
    """Symmetric-matrix-valued function ``K(t, s)`` on ``0 <= t <= s <= T``.

    ``t`` and ``s`` broadcast against each other; the result has shape
    ``broadcast(t, s).shape + self.shape``.
    """

    shape = None
    smooth_in_t = False

    def __call__(self, t, s):
        raise NotImplementedError

    def to_config(self):
        return None

    def __eq__(self, other):
        if type(self) is not type(other):
            return NotImplemented
        a, b = self.to_config(), other.to_config()
        if a is None or b is None:
            return self is other
        return a == b

    __hash__ = object.__hash__


class ConstKernel(Kernel):
    smooth_in_t = True

    def __init__(self, value):
        self.value = as_matrix(value, name="const kernel")
        self.shape = self.value.shape

    def __call__(self, t, s):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        return np.broadcast_to(self.value, t.shape + self.shape).copy()

    def to_config(self):
        return {"const": self.value.tolist()}


class DiscountedKernel(Kernel):
    """``K(t, s) = discount(s - t) * base(s)``."""

    def __init__(self, discount, base, horizon):
        if not isinstance(discount, Discount):
            discount = FunctionDiscount(discount)
        self.discount = discount
        self.base = as_matrix_function(base, name="kernel base")
        self.horizon = float(horizon)
        self.shape = self.base.shape
        self.smooth_in_t = discount.smooth

    def __call__(self, t, s):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        u = s - t
        if u.size and (u.min() < -_DOMAIN_TOL or u.max() > self.horizon + _DOMAIN_TOL):
            raise DomainError(
                f"discount evaluated at delay outside [0, {self.horizon}]: "
                f"[{u.min():.6g}, {u.max():.6g}]"
            )
        return self.discount(np.clip(u, 0.0, self.horizon))[..., None, None] * self.base(s)

    def to_config(self):
        d = self.discount.to_config()
        b = self.base.to_config()
        if d is None or b is None:
            return None
        if d["kind"] == "exp" and "const" in b:
            return {"exp_discount": {"rate": d["rate"], "base": b["const"]}}
        return {"discounted": {"discount": d, "base": b}}


class TableKernel(Kernel):
    """Bilinear interpolation on a tabulated square grid.

    ``values[i, j]`` holds ``K(nodes[i], nodes[j])``; only ``i <= j`` is read.
    For ``t > s`` the kernel is frozen at ``K(s, s)``.
    """

    def __init__(self, nodes, values):
        self.nodes = np.asarray(nodes, dtype=float)
        vals = np.asarray(values, dtype=float)
        n = len(self.nodes)
        if vals.shape[:2] != (n, n) or vals.ndim != 4:
            raise ValueError("table kernel: values must have shape (len(nodes), len(nodes), d, d)")
        if not np.all(np.isfinite(vals)):
            raise ValueError("table kernel: entries must be finite")
        self.raw = vals
        filled = vals.copy()
        for j in range(n):
            filled[j + 1 :, j] = vals[j, j]
        self.values = filled
        self.shape = vals.shape[2:]

    def __call__(self, t, s):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        shp = t.shape
        t = np.minimum(t.reshape(-1), s.reshape(-1))
        s = s.reshape(-1)
        i, wt = self._locate(t)
        j, ws = self._locate(s)
        v = self.values
        wt = wt[:, None, None]
        ws = ws[:, None, None]
        out = (
            (1 - wt) * (1 - ws) * v[i, j]
            + wt * (1 - ws) * v[i + 1, j]
            + (1 - wt) * ws * v[i, j + 1]
            + wt * ws * v[i + 1, j + 1]
        )
        return out.reshape(shp + self.shape)

    def _locate(self, x):
        nodes = self.nodes
        x = np.clip(x, nodes[0], nodes[-1])
        idx = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, len(nodes) - 2)
        w = (x - nodes[idx]) / (nodes[idx + 1] - nodes[idx])
        return idx, w

    def to_config(self):
        return {"table": {"nodes": self.nodes.tolist(), "values": self.raw.tolist()}}


class FunctionKernel(Kernel):
    def __init__(self, fn, shape, smooth_in_t=False):
        self.fn = fn
        self.shape = tuple(shape)
        self.smooth_in_t = smooth_in_t

    def __call__(self, t, s):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        out = np.asarray(self.fn(t, s), dtype=float)
        return np.broadcast_to(out, t.shape + self.shape).copy()


def as_kernel(value, name="kernel"):
    if isinstance(value, Kernel):
        return value
    if callable(value):
        sample = np.asarray(value(np.zeros(1), np.zeros(1)), dtype=float)
        return FunctionKernel(value, sample.shape[-2:])
    return ConstKernel(as_matrix(value, name=name))


def discounted_kernel(lam, base, horizon):
    """Build ``K(t, s) = lam(s - t) * base(s)``.

    With ``lam`` positive and nonincreasing and ``base(s)`` positive
    semidefinite, the kernel is nondecreasing in ``t`` for fixed ``s``.
    ``lam`` may be a :class:`Discount` or any vectorized callable; it is only
    ever evaluated on ``[0, horizon]`` (:class:`DomainError` otherwise).
    """
    return DiscountedKernel(lam, base, horizon)


# ---------------------------------------------------------------------------
# instance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i * T / N`` on ``[0, T]``."""

    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("TimeGrid: T must be positive")
        if int(self.N) != self.N or self.N < 2:
            raise ValueError("TimeGrid: N must be an integer >= 2")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))

    @property
    def h(self):
        return self.T / self.N

    @property
    def nodes(self):
        return np.arange(self.N + 1) * self.h

    @property
    def half_nodes(self):
        """Nodes and interval midpoints, ``2N + 1`` points."""
        return np.arange(2 * self.N + 1) * (0.5 * self.h)

    def index_of(self, t):
        """Index of the node closest to ``t``."""
        return int(np.clip(np.rint(t / self.h), 0, self.N))


COEFFICIENT_NAMES = ("A", "B", "C", "D", "Ahat", "Bhat", "Chat", "Dhat")
KERNEL_NAMES = ("Q", "R", "M", "N")
PATH_WEIGHT_NAMES = ("G1", "G2")
CAP_NAMES = ("Q", "R", "M", "N", "G1", "G2")


@dataclass(frozen=True)
class CoefficientSet:
    A: MatrixFunction
    B: MatrixFunction
    C: MatrixFunction
    D: MatrixFunction
    Ahat: MatrixFunction
    Bhat: MatrixFunction
    Chat: MatrixFunction
    Dhat: MatrixFunction
    H: np.ndarray

    def __post_init__(self):
        for name in COEFFICIENT_NAMES:
            object.__setattr__(self, name, as_matrix_function(getattr(self, name), name=name))
        object.__setattr__(self, "H", as_matrix(self.H, name="H"))

    def __eq__(self, other):
        if not isinstance(other, CoefficientSet):
            return NotImplemented
        return all(getattr(self, k) == getattr(other, k) for k in COEFFICIENT_NAMES) and np.array_equal(
            self.H, other.H
        )


@dataclass(frozen=True)
class WeightKernelSet:
    Q: Kernel
    R: Kernel
    M: Kernel
    N: Kernel
    G1: MatrixFunction
    G2: MatrixFunction
    delta: float
    caps: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in KERNEL_NAMES:
            object.__setattr__(self, name, as_kernel(getattr(self, name), name=name))
        for name in PATH_WEIGHT_NAMES:
            object.__setattr__(self, name, as_matrix_function(getattr(self, name), name=name))
        if not self.delta > 0:
            raise ValueError("weights: delta must be positive")
        object.__setattr__(self, "delta", float(self.delta))
        caps = {k: as_matrix(v, name=f"caps.{k}") for k, v in (self.caps or {}).items()}
        unknown = set(caps) - set(CAP_NAMES)
        if unknown:
            raise ValueError(f"weights: unknown caps {sorted(unknown)}")
        object.__setattr__(self, "caps", caps)

    def __eq__(self, other):
        if not isinstance(other, WeightKernelSet):
            return NotImplemented
        names = KERNEL_NAMES + PATH_WEIGHT_NAMES
        return (
            all(getattr(self, k) == getattr(other, k) for k in names)
            and self.delta == other.delta
            and self.caps.keys() == other.caps.keys()
            and all(np.array_equal(self.caps[k], other.caps[k]) for k in self.caps)
        )


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Coefficients, weights and grid of one control problem.

    Dimensions: state ``n``, backward component ``m``, control ``k``.
    """

    n: int
    m: int
    k: int
    grid: TimeGrid
    coeffs: CoefficientSet
    weights: WeightKernelSet
    smoothness: dict = field(default_factory=lambda: {"H4": True, "H5": True})
    name: str = "problem"

    def __post_init__(self):
        n, m, k = self.n, self.m, self.k
        expected = {
            "A": (n, n), "B": (n, k), "C": (n, n), "D": (n, k),
            "Ahat": (m, n), "Bhat": (m, k), "Chat": (m, m), "Dhat": (m, m),
        }
        for name, shape in expected.items():
            got = getattr(self.coeffs, name).shape
            if tuple(got) != shape:
                raise ValueError(f"coefficient {name}: expected shape {shape}, got {tuple(got)}")
        if self.coeffs.H.shape != (m, n):
            raise ValueError(f"coefficient H: expected shape {(m, n)}, got {self.coeffs.H.shape}")
        wshape = {"Q": (n, n), "R": (k, k), "M": (m, m), "N": (m, m), "G1": (n, n), "G2": (m, m)}
        for name, shape in wshape.items():
            got = getattr(self.weights, name).shape
            if tuple(got) != shape:
                raise ValueError(f"weight {name}: expected shape {shape}, got {tuple(got)}")
            cap = self.weights.caps.get(name)
            if cap is not None and cap.shape != shape:
                raise ValueError(f"caps.{name}: expected shape {shape}, got {cap.shape}")

    @property
    def T(self):
        return self.grid.T

    def with_grid(self, N):
        """Same problem on a grid with ``N`` steps."""
        return replace(self, grid=TimeGrid(self.grid.T, N))

    def discretize(self):
        """Tabulate all coefficients on the grid (cached)."""
        cached = self.__dict__.get("_disc")
        if cached is None:
            cached = Discretization(self)
            object.__setattr__(self, "_disc", cached)
        return cached

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return (
            (self.n, self.m, self.k, self.grid, self.name) == (other.n, other.m, other.k, other.grid, other.name)
            and self.coeffs == other.coeffs
            and self.weights == other.weights
            and dict(self.smoothness) == dict(other.smoothness)
        )

    __hash__ = object.__hash__


class Discretization:
    """Coefficients of a :class:`ProblemInstance` sampled for the integrators.

    Forward/backward coefficients are sampled on the half grid (nodes and
    midpoints, ``2N + 1`` points) because the RK4 stages need midpoint values.
    Kernels are stored as ``kQ, kR, kM, kN`` with
    ``K[q, i] = K(min(t_i, tau_q), tau_q)``: half-grid
    ``s`` by node ``t``.  Entries with ``t_i > s`` are never used by the
    integrators; they hold the frozen diagonal value.
    """

    def __init__(self, problem):
        grid = problem.grid
        self.problem = problem
        self.grid = grid
        self.N = grid.N
        self.h = grid.h
        self.tau = grid.half_nodes
        self.nodes = grid.nodes
        c = problem.coeffs
        w = problem.weights
        for name in COEFFICIENT_NAMES:
            setattr(self, name, np.ascontiguousarray(getattr(c, name)(self.tau)))
        self.H = c.H
        self.G1 = sym(w.G1(self.nodes))
        self.G2 = sym(w.G2(self.nodes))
        tt = np.minimum(self.nodes[None, :], self.tau[:, None])
        ss = np.broadcast_to(self.tau[:, None], tt.shape)
        for name in KERNEL_NAMES:
            setattr(self, "k" + name, np.ascontiguousarray(sym(getattr(w, name)(tt, ss))))
        idx = np.arange(self.N + 1)
        self.R_diag = self.kR[2 * idx, idx]
        self.N_diag = self.kN[2 * idx, idx]

    def node(self, name, i):
        """Coefficient ``name`` at node ``i``."""
        return getattr(self, name)[2 * i]


# ---------------------------------------------------------------------------
# assumption checks
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    assumption: str
    name: str
    passed: bool
    margin: float = float("nan")
    witness: tuple = ()
    message: str = ""
    severity: str = "error"

    def line(self):
        status = "PASS" if self.passed else ("WARN" if self.severity == "warning" else "FAIL")
        wit = ""
        if self.witness:
            wit = " at " + ", ".join(f"{k}={v:.6g}" for k, v in zip(("t", "s", "tau"), self.witness))
        return f"[{status}] {self.assumption} {self.name}: margin={self.margin:.6g}{wit}" + (
            f" ({self.message})" if self.message else ""
        )


@dataclass
class ValidationReport:
    checks: list

    def by_assumption(self, assumption):
        return [c for c in self.checks if c.assumption == assumption]

    def passed(self, assumption):
        return all(c.passed or c.severity == "warning" for c in self.by_assumption(assumption))

    @property
    def h2_ok(self):
        return self.passed("H2")

    @property
    def h3_ok(self):
        return self.passed("H3")

    @property
    def failures(self):
        return [c for c in self.checks if not c.passed and c.severity == "error"]

    @property
    def warnings(self):
        return [c for c in self.checks if not c.passed and c.severity == "warning"]

    def to_text(self):
        return "\n".join(c.line() for c in self.checks) + "\n"


def _psd_check(assumption, name, values, points, tol, shift=None):
    """Check ``values - shift`` is PSD on a stack; witness at the worst point."""
    vals = values if shift is None else values - shift
    mins = min_eigenvalue_sym(vals)
    worst = int(np.argmin(mins))
    margin = float(mins[worst])
    ok = margin >= -tol
    return CheckResult(assumption, name, ok, margin, tuple(float(x) for x in points[worst]))


def _pair_samples(tau):
    a, b = np.triu_indices(len(tau))
    return tau[a], tau[b]


def validate_assumptions(problem, tol=1e-10):
    """Sampled check of the boundedness, positivity and monotonicity assumptions.

    Samples are the grid nodes and interval midpoints; two-time kernels are
    checked on every sampled pair ``t <= s``.  Violations are returned as data,
    each with the worst sample point as witness.
    """
    tau = problem.grid.half_nodes
    w = problem.weights
    c = problem.coeffs
    delta = w.delta
    checks = []

    # H1: finiteness / boundedness on the samples
    for name in COEFFICIENT_NAMES:
        vals = getattr(c, name)(tau)
        finite = bool(np.all(np.isfinite(vals)))
        sup = float(np.max(np.abs(vals))) if finite else float("inf")
        bad = () if finite else (float(tau[np.argmax(~np.isfinite(vals).reshape(len(tau), -1).all(1))]),)
        checks.append(CheckResult("H1", f"{name} bounded", finite, sup, bad))

    ts, ss = _pair_samples(tau)
    pts2 = np.stack([ts, ss], axis=1)
    pts1 = tau[:, None]
    kern = {name: sym(getattr(w, name)(ts, ss)) for name in KERNEL_NAMES}
    paths = {name: sym(getattr(w, name)(tau)) for name in PATH_WEIGHT_NAMES}
    for name in list(kern) + list(paths):
        v = kern.get(name, paths.get(name))
        finite = bool(np.all(np.isfinite(v)))
        checks.append(CheckResult("H1", f"{name} bounded", finite, float(np.max(np.abs(v))) if finite else np.inf))

    # H2
    eye_k = np.eye(problem.k)
    eye_m = np.eye(problem.m)
    r = _psd_check("H2", "R(t,s) >= delta I", kern["R"], pts2, tol, shift=delta * eye_k)
    checks.append(r)
    g2 = _psd_check("H2", "G2(t) >= delta I", paths["G2"], pts1, tol, shift=delta * eye_m)
    checks.append(g2)
    for name in ("Q", "M", "N"):
        checks.append(_psd_check("H2", f"{name}(t,s) >= 0", kern[name], pts2, tol))
    checks.append(_psd_check("H2", "G1(t) >= 0", paths["G1"], pts1, tol))
    for chk in checks:
        if chk.assumption == "H2" and not chk.passed:
            chk.message = f"{chk.name} violated"

    # H3: caps positive definite, monotone in t, capped
    for name in CAP_NAMES:
        cap = w.caps.get(name)
        if cap is None:
            checks.append(CheckResult("H3", f"cap {name} given", False, np.nan, (), "missing cap"))
            continue
        m = float(min_eigenvalue_sym(cap))
        checks.append(CheckResult("H3", f"cap {name} positive definite", m > tol, m))
    n_tau = len(tau)
    for name in KERNEL_NAMES:
        kfun = getattr(w, name)
        # consecutive t samples for every s: K(tau_a, s) <= K(tau_{a+1}, s), a+1 <= s
        a, b = np.triu_indices(n_tau, k=1)
        lo = sym(kfun(tau[a - 0], tau[b]))
        a1 = a + 1
        hi = sym(kfun(tau[a1], tau[b]))
        pts = np.stack([tau[a], tau[b], tau[a1]], axis=1)
        chk = _psd_check("H3", f"{name}(t,s) nondecreasing in t", hi - lo, pts, tol)
        if not chk.passed:
            chk.message = "monotonicity violated"
        checks.append(chk)
        cap = w.caps.get(name)
        if cap is not None:
            chk = _psd_check("H3", f"{name}(t,s) <= cap", cap - kern[name], pts2, tol)
            if not chk.passed:
                chk.message = "cap exceeded"
            checks.append(chk)
    for name in PATH_WEIGHT_NAMES:
        v = paths[name]
        pts = np.stack([tau[:-1], tau[1:]], axis=1)
        chk = _psd_check("H3", f"{name}(t) nondecreasing", v[1:] - v[:-1], pts, tol)
        if not chk.passed:
            chk.message = "monotonicity violated"
        checks.append(chk)
        cap = w.caps.get(name)
        if cap is not None:
            chk = _psd_check("H3", f"{name}(t) <= cap", cap - v, pts1, tol)
            if not chk.passed:
                chk.message = "cap exceeded"
            checks.append(chk)

    # H4 / H5: declared flags plus a kink heuristic, warnings only
    for flag in ("H4", "H5"):
        declared = bool(problem.smoothness.get(flag, False))
        checks.append(
            CheckResult(flag, "declared smooth", declared, np.nan, (),
                        "" if declared else "not declared", severity="warning")
        )
    for name in COEFFICIENT_NAMES:
        checks.append(_kink_check("H4", name, getattr(c, name)(tau), tau))
    for name in PATH_WEIGHT_NAMES:
        checks.append(_kink_check("H5", name, paths[name], tau))
    return ValidationReport(checks)


def _kink_check(assumption, name, values, tau):
    # a kink makes the second difference comparable to the first difference
    flat = values.reshape(len(tau), -1)
    d1 = np.abs(np.diff(flat, axis=0))
    d2 = np.abs(np.diff(flat, n=2, axis=0))
    scale = d1.max()
    if scale <= 1e-14:
        return CheckResult(assumption, f"{name} smoothness heuristic", True, 0.0, severity="warning")
    ratio = d2.max(axis=1) / scale
    worst = int(np.argmax(ratio))
    ok = bool(ratio[worst] < 0.25)
    return CheckResult(
        assumption, f"{name} smoothness heuristic", ok, float(ratio[worst]), (float(tau[worst + 1]),),
        "" if ok else "possible kink; consider --mollify", severity="warning",
    )
