"""Problem files: YAML in, YAML out.

Schema (every section except ``smoothness`` and ``name`` is required)::

    name: my_problem
    dims: {n: 2, m: 1, k: 2}
    grid: {T: 1.0, N: 400}
    coefficients:            # A B C D Ahat Bhat Chat Dhat H; missing -> zero
      A: [[0.1, 1.0], [-0.5, -0.2]]          # bare nested array = constant
      B: {const: [[1, 0], [0.2, 1]]}
      C: {poly: [[[0.2, 0], [0, 0.1]], [[0.05, 0], [0, 0]]]}   # C0 + C1 t
      D: {table: {nodes: [0, 0.5, 1], values: [M0, M1, M2]}}
      H: [[0, 0]]            # H is always a constant matrix
    weights:
      delta: 0.5
      Q: {exp_discount: {rate: 0.5, base: [[1, 0], [0, 1]]}}    # exp(-rate (s-t)) base
      R: {hyperbolic_discount: {rate: 1.0, base: [[1, 0], [0, 1]]}}
      M: {table: {nodes: [...], values: [[K00, K01, ...], ...]}}   # values[i][j] = K(t_i, s_j)
      N: [[0]]
      G1: {exp_discount: {rate: 0.1, base: [[1, 0], [0, 1]]}}    # exp(-rate (T-t)) base
      G2: [[1]]
      caps: {Q: ..., R: ..., M: ..., N: ..., G1: ..., G2: ...}
    smoothness: {H4: true, H5: true}

Scalars are accepted wherever a ``1x1`` matrix is expected.  Errors are
raised as :class:`~ere_lab.exceptions.ParseError` naming the dotted field and
the source line.
"""

import numpy as np
import yaml

from .exceptions import ParseError
from .problem import (
    CAP_NAMES,
    COEFFICIENT_NAMES,
    KERNEL_NAMES,
    PATH_WEIGHT_NAMES,
    CoefficientSet,
    Const,
    ConstKernel,
    DiscountedKernel,
    ExpDiscount,
    ExpDiscountPath,
    HyperbolicDiscount,
    Poly,
    ProblemInstance,
    Table,
    TableKernel,
    TimeGrid,
    WeightKernelSet,
)


def _line_map(node, prefix="", out=None):
    """Map dotted field paths to 1-based source lines."""
    if out is None:
        out = {}
    out[prefix] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for key, val in node.value:
            name = f"{prefix}.{key.value}" if prefix else str(key.value)
            _line_map(val, name, out)
    return out


class _Ctx:
    def __init__(self, lines):
        self.lines = lines

    def error(self, msg, field):
        line = None
        f = field
        while f is not None:
            if f in self.lines:
                line = self.lines[f]
                break
            f = f.rpartition(".")[0] if "." in f else (None if f == "" else "")
        raise ParseError(msg, field=field, line=line)


def _matrix(ctx, value, field, shape=None):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        ctx.error("expected a numeric matrix (row-major nested array)", field)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        ctx.error(f"expected a matrix, got an array with {arr.ndim} dimensions", field)
    if not np.all(np.isfinite(arr)):
        ctx.error("matrix entries must be finite", field)
    if shape is not None and arr.shape != tuple(shape):
        ctx.error(f"expected shape {tuple(shape)}, got {arr.shape}", field)
    return arr


def _number(ctx, section, key, field, kind=float, required=True, default=None):
    if key not in section:
        if required:
            ctx.error("missing required field", field)
        return default
    val = section[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        ctx.error(f"expected a number, got {val!r}", field)
    if kind is int and int(val) != val:
        ctx.error(f"expected an integer, got {val!r}", field)
    return kind(val)


def _entry_kind(ctx, value, field, allowed):
    if not isinstance(value, dict):
        return "const", value
    if len(value) != 1:
        ctx.error(f"expected exactly one of {sorted(allowed)}", field)
    (kind, body), = value.items()
    if kind not in allowed:
        ctx.error(f"unknown entry kind {kind!r}; expected one of {sorted(allowed)}", field)
    return kind, body


def _path(ctx, value, field, shape, T):
    kind, body = _entry_kind(ctx, value, field, {"const", "table", "poly", "exp_discount"})
    sub = f"{field}.{kind}" if isinstance(value, dict) else field
    if kind == "const":
        return Const(_matrix(ctx, body, sub, shape))
    if kind == "poly":
        if not isinstance(body, list) or not body:
            ctx.error("poly expects a non-empty list of coefficient matrices", sub)
        return Poly([_matrix(ctx, c, f"{sub}[{i}]", shape) for i, c in enumerate(body)])
    if kind == "table":
        if not isinstance(body, dict) or set(body) != {"nodes", "values"}:
            ctx.error("table expects keys 'nodes' and 'values'", sub)
        nodes = np.array(body["nodes"], dtype=float)
        vals = body["values"]
        if nodes.ndim != 1 or len(nodes) < 2 or np.any(np.diff(nodes) <= 0):
            ctx.error("table nodes must be a strictly increasing list of at least two times", f"{sub}.nodes")
        if not isinstance(vals, list) or len(vals) != len(nodes):
            ctx.error("table needs one value per node", f"{sub}.values")
        return Table(nodes, [_matrix(ctx, v, f"{sub}.values[{i}]", shape) for i, v in enumerate(vals)])
    if not isinstance(body, dict) or set(body) != {"rate", "base"}:
        ctx.error("exp_discount expects keys 'rate' and 'base'", sub)
    rate = _number(ctx, body, "rate", f"{sub}.rate")
    return ExpDiscountPath(rate, _matrix(ctx, body["base"], f"{sub}.base", shape), T)


def _discount(ctx, body, field):
    if not isinstance(body, dict) or body.get("kind") not in ("exp", "hyperbolic"):
        ctx.error("discount expects kind 'exp' or 'hyperbolic'", field)
    rate = _number(ctx, body, "rate", f"{field}.rate")
    return ExpDiscount(rate) if body["kind"] == "exp" else HyperbolicDiscount(rate)


def _kernel(ctx, value, field, shape, T):
    allowed = {"const", "table", "exp_discount", "hyperbolic_discount", "discounted"}
    kind, body = _entry_kind(ctx, value, field, allowed)
    sub = f"{field}.{kind}" if isinstance(value, dict) else field
    if kind == "const":
        return ConstKernel(_matrix(ctx, body, sub, shape))
    if kind in ("exp_discount", "hyperbolic_discount"):
        if not isinstance(body, dict) or set(body) != {"rate", "base"}:
            ctx.error(f"{kind} expects keys 'rate' and 'base'", sub)
        rate = _number(ctx, body, "rate", f"{sub}.rate")
        disc = ExpDiscount(rate) if kind == "exp_discount" else HyperbolicDiscount(rate)
        return DiscountedKernel(disc, Const(_matrix(ctx, body["base"], f"{sub}.base", shape)), T)
    if kind == "discounted":
        if not isinstance(body, dict) or set(body) != {"discount", "base"}:
            ctx.error("discounted expects keys 'discount' and 'base'", sub)
        disc = _discount(ctx, body["discount"], f"{sub}.discount")
        return DiscountedKernel(disc, _path(ctx, body["base"], f"{sub}.base", shape, T), T)
    if not isinstance(body, dict) or set(body) != {"nodes", "values"}:
        ctx.error("table expects keys 'nodes' and 'values'", sub)
    nodes = np.array(body["nodes"], dtype=float)
    if nodes.ndim != 1 or len(nodes) < 2 or np.any(np.diff(nodes) <= 0):
        ctx.error("table nodes must be a strictly increasing list of at least two times", f"{sub}.nodes")
    try:
        vals = np.array(body["values"], dtype=float)
    except (TypeError, ValueError):
        ctx.error("table values must be a rectangular numeric array", f"{sub}.values")
    want = (len(nodes), len(nodes)) + tuple(shape)
    if vals.shape != want:
        ctx.error(f"table values: expected shape {want}, got {vals.shape}", f"{sub}.values")
    return TableKernel(nodes, vals)


def problem_from_dict(data, lines=None):
    """Build a :class:`ProblemInstance` from a parsed mapping."""
    ctx = _Ctx(lines or {})
    if not isinstance(data, dict):
        ctx.error("top level must be a mapping", "")
    for sec in ("dims", "grid", "coefficients", "weights"):
        if not isinstance(data.get(sec), dict):
            ctx.error("missing or malformed section", sec)
    unknown = set(data) - {"name", "dims", "grid", "coefficients", "weights", "smoothness"}
    if unknown:
        ctx.error(f"unknown section(s) {sorted(unknown)}", sorted(unknown)[0])
    dims = data["dims"]
    n, m, k = (_number(ctx, dims, key, f"dims.{key}", int) for key in ("n", "m", "k"))
    for key, val in zip("nmk", (n, m, k)):
        if val < 1:
            ctx.error("dimension must be at least 1", f"dims.{key}")
    T = _number(ctx, data["grid"], "T", "grid.T")
    N = _number(ctx, data["grid"], "N", "grid.N", int)
    if not T > 0:
        ctx.error("horizon must be positive", "grid.T")
    if N < 2:
        ctx.error("grid needs at least two steps", "grid.N")

    cshape = {
        "A": (n, n), "B": (n, k), "C": (n, n), "D": (n, k),
        "Ahat": (m, n), "Bhat": (m, k), "Chat": (m, m), "Dhat": (m, m),
    }
    csec = data["coefficients"]
    unknown = set(csec) - set(cshape) - {"H"}
    if unknown:
        ctx.error("unknown coefficient", f"coefficients.{sorted(unknown)[0]}")
    coeffs = {}
    for name in COEFFICIENT_NAMES:
        field = f"coefficients.{name}"
        coeffs[name] = (
            _path(ctx, csec[name], field, cshape[name], T) if name in csec else Const(np.zeros(cshape[name]))
        )
    if "H" in csec:
        if isinstance(csec["H"], dict):
            ctx.error("H must be a constant matrix", "coefficients.H")
        H = _matrix(ctx, csec["H"], "coefficients.H", (m, n))
    else:
        H = np.zeros((m, n))

    wshape = {"Q": (n, n), "R": (k, k), "M": (m, m), "N": (m, m), "G1": (n, n), "G2": (m, m)}
    wsec = data["weights"]
    unknown = set(wsec) - set(wshape) - {"delta", "caps"}
    if unknown:
        ctx.error("unknown weight", f"weights.{sorted(unknown)[0]}")
    delta = _number(ctx, wsec, "delta", "weights.delta")
    if not delta > 0:
        ctx.error("delta must be positive", "weights.delta")
    weights = {}
    for name in KERNEL_NAMES:
        field = f"weights.{name}"
        weights[name] = (
            _kernel(ctx, wsec[name], field, wshape[name], T) if name in wsec else ConstKernel(np.zeros(wshape[name]))
        )
    for name in PATH_WEIGHT_NAMES:
        field = f"weights.{name}"
        weights[name] = (
            _path(ctx, wsec[name], field, wshape[name], T) if name in wsec else Const(np.zeros(wshape[name]))
        )
    caps = {}
    csec_caps = wsec.get("caps", {}) or {}
    if not isinstance(csec_caps, dict):
        ctx.error("caps must be a mapping", "weights.caps")
    for name, val in csec_caps.items():
        if name not in CAP_NAMES:
            ctx.error("unknown cap", f"weights.caps.{name}")
        caps[name] = _matrix(ctx, val, f"weights.caps.{name}", wshape[name])

    smooth = data.get("smoothness", {"H4": True, "H5": True}) or {}
    if not isinstance(smooth, dict) or any(not isinstance(v, bool) for v in smooth.values()):
        ctx.error("smoothness flags must be booleans", "smoothness")
    return ProblemInstance(
        n=n, m=m, k=k,
        grid=TimeGrid(T, N),
        coeffs=CoefficientSet(H=H, **coeffs),
        weights=WeightKernelSet(delta=delta, caps=caps, **weights),
        smoothness={"H4": bool(smooth.get("H4", False)), "H5": bool(smooth.get("H5", False))},
        name=str(data.get("name", "problem")),
    )


def loads_problem(text):
    """Parse a problem from YAML text."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                         line=None if mark is None else mark.line + 1) from None
    if node is None:
        raise ParseError("empty problem file")
    return problem_from_dict(data, _line_map(node))


def load_problem(path):
    with open(path, encoding="utf-8") as fh:
        return loads_problem(fh.read())


def problem_to_dict(problem):
    """Serializable mapping; raises ``ValueError`` for opaque callables."""
    c, w = problem.coeffs, problem.weights

    def conf(obj, field):
        d = obj.to_config()
        if d is None:
            raise ValueError(f"{field} cannot be serialized (opaque callable)")
        return d

    return {
        "name": problem.name,
        "dims": {"n": problem.n, "m": problem.m, "k": problem.k},
        "grid": {"T": problem.grid.T, "N": problem.grid.N},
        "coefficients": {
            **{name: conf(getattr(c, name), f"coefficients.{name}") for name in COEFFICIENT_NAMES},
            "H": c.H.tolist(),
        },
        "weights": {
            "delta": w.delta,
            **{name: conf(getattr(w, name), f"weights.{name}") for name in KERNEL_NAMES + PATH_WEIGHT_NAMES},
            "caps": {name: cap.tolist() for name, cap in w.caps.items()},
        },
        "smoothness": {key: bool(val) for key, val in problem.smoothness.items()},
    }


def dumps_problem(problem):
    return yaml.safe_dump(problem_to_dict(problem), sort_keys=False, default_flow_style=None)


def dump_problem(problem, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_problem(problem))
