import dataclasses

import numpy as np
import pytest
from scipy.integrate import trapezoid

from ere_lab import (
    BUILTINS,
    DomainError,
    ParseError,
    TimeGrid,
    discounted_kernel,
    dumps_problem,
    get_instance,
    loads_problem,
    validate_assumptions,
)
from ere_lab.mollify import bump_quadrature, mollify_kernel, mollify_matrix_path, mollify_problem
from ere_lab.problem import (
    Const,
    ConstKernel,
    ExpDiscount,
    FunctionKernel,
    HyperbolicDiscount,
    Poly,
    Table,
)

from conftest import kinked_g2, scalar_problem

# frozen oracle values: bump mollifier first half-moment and the distances
# it implies, plus a nested adaptive-quadrature evaluation for the kernel
BUMP_HALF_MOMENT = 0.1672269988549871
KERNEL_DIST = {0.25: 0.053947036450988715, 0.125: 0.02829728649776758, 0.0625: 0.014468234964695821}


# grid ----------------------------------------------------------------------


def test_time_grid_nodes():
    g = TimeGrid(2.0, 8)
    assert g.h == 0.25
    np.testing.assert_allclose(g.nodes, np.linspace(0, 2, 9))
    assert len(g.half_nodes) == 17
    assert g.index_of(0.5) == 2
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1)
    with pytest.raises(ValueError):
        TimeGrid(-1.0, 10)


# paths and kernels -----------------------------------------------------------


def test_table_path_interpolation_and_ends():
    f = Table([0.0, 1.0, 2.0], [[[0.0]], [[2.0]], [[2.0]]])
    assert f(0.5)[0, 0] == pytest.approx(1.0)
    assert f(1.0)[0, 0] == 2.0
    assert f(-1.0)[0, 0] == 0.0 and f(3.0)[0, 0] == 2.0
    assert f(np.array([0.25, 1.5])).shape == (2, 1, 1)


def test_poly_path():
    f = Poly([[[1.0]], [[2.0]], [[3.0]]])
    assert f(2.0)[0, 0] == pytest.approx(1 + 4 + 12)


def test_discounted_kernel_trivial_cases():
    base = Const(np.diag([1.0, 2.0]))
    flat = discounted_kernel(lambda u: np.ones_like(u), base, 1.0)
    np.testing.assert_allclose(flat(0.0, 0.7), flat(0.6, 0.7))
    k = discounted_kernel(ExpDiscount(1.0), Const(np.eye(2)), 1.0)
    np.testing.assert_allclose(k(0.0, 1.0), np.exp(-1.0) * np.eye(2), rtol=1e-15)


def test_discounted_kernel_domain_error():
    k = discounted_kernel(ExpDiscount(1.0), Const(np.eye(1)), 1.0)
    with pytest.raises(DomainError):
        k(0.5, 0.2)
    with pytest.raises(DomainError):
        discounted_kernel(ExpDiscount(1.0), Const(np.eye(1)), 0.5)(0.0, 1.0)


@pytest.mark.parametrize("disc", [ExpDiscount(0.7), HyperbolicDiscount(2.0)])
def test_discounted_kernel_monotone_in_t(disc):
    # sampled eigenvalue check: K(tau, s) - K(t, s) is PSD for t <= tau <= s
    rng = np.random.default_rng(11)
    g = rng.standard_normal((3, 3))
    k = discounted_kernel(disc, Const(g @ g.T), 1.0)
    s = rng.uniform(0, 1, 200)
    t = rng.uniform(0, 1, 200) * s
    tau = t + rng.uniform(0, 1, 200) * (s - t)
    gap = k(tau, s) - k(t, s)
    assert np.linalg.eigvalsh(gap).min() >= -1e-12


# validation ----------------------------------------------------------------


def test_validate_constant_delta_r_passes():
    p = scalar_problem(R=0.5, Q=1.0, G1=1.0, G2=0.5, delta=0.5)
    rep = validate_assumptions(p)
    assert rep.h2_ok and rep.h3_ok and not rep.failures


def test_validate_example1_rejects_g2():
    rep = validate_assumptions(get_instance("example1"))
    assert not rep.h2_ok
    assert any("G2(t) >= delta I violated" in c.message for c in rep.failures)
    assert "G2(t) >= delta I" in rep.to_text()


def test_validate_discounted_weights_pass_h3():
    for name in ("discounted_2x2", "smoke_3x2x2", "classical_reduction"):
        rep = validate_assumptions(get_instance(name, 100))
        assert rep.h2_ok and rep.h3_ok, rep.to_text()


def test_validate_detects_decreasing_kernel():
    p = get_instance("discounted_2x2", 100)
    bad = FunctionKernel(lambda t, s: (np.exp(-t) * np.ones_like(s))[..., None, None] * np.eye(2), (2, 2))
    w = dataclasses.replace(p.weights, Q=bad)
    rep = validate_assumptions(dataclasses.replace(p, weights=w))
    assert not rep.h3_ok
    assert any("monotonicity" in c.message for c in rep.failures)


def test_validate_missing_cap_fails_h3():
    p = get_instance("discounted_2x2", 50)
    caps = {k: v for k, v in p.weights.caps.items() if k != "M"}
    rep = validate_assumptions(dataclasses.replace(p, weights=dataclasses.replace(p.weights, caps=caps)))
    assert not rep.h3_ok


def test_validate_kink_heuristic_warns_only():
    rep = validate_assumptions(kinked_g2(200))
    assert rep.h2_ok and rep.h3_ok
    assert rep.warnings


def test_discretize_shapes():
    p = get_instance("smoke_3x2x2", 20)
    d = p.discretize()
    assert d.A.shape == (41, 3, 3)
    assert d.kQ.shape == (41, 21, 3, 3)
    assert d.G1.shape == (21, 3, 3)
    assert p.discretize() is d


def test_dimension_mismatch_rejected():
    p = get_instance("discounted_2x2", 20)
    with pytest.raises(ValueError, match="coefficient B"):
        dataclasses.replace(p, coeffs=dataclasses.replace(p.coeffs, B=Const(np.ones((2, 3)))))


# config --------------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_round_trip_builtins(name):
    p = get_instance(name, 64)
    assert loads_problem(dumps_problem(p)) == p


def test_round_trip_kinked_table():
    p = kinked_g2(64)
    assert loads_problem(dumps_problem(p)) == p


MINIMAL = """\
name: tiny
dims: {n: 1, m: 1, k: 1}
grid: {T: 1.0, N: 10}
coefficients:
  A: [[0.1]]
  B: 1.0
weights:
  delta: 0.5
  R: [[1.0]]
  G2: {const: [[1.0]]}
  Q: {hyperbolic_discount: {rate: 1.0, base: [[1.0]]}}
"""


def test_parse_minimal_defaults_zero():
    p = loads_problem(MINIMAL)
    assert p.name == "tiny" and p.grid.N == 10
    assert p.coeffs.C(0.3)[0, 0] == 0.0
    assert p.weights.Q(0.0, 1.0)[0, 0] == pytest.approx(0.5)


def test_parse_error_names_field_and_line():
    bad = MINIMAL.replace("A: [[0.1]]", "A: [[0.1, 0.2]]")
    with pytest.raises(ParseError) as err:
        loads_problem(bad)
    assert err.value.field == "coefficients.A"
    assert err.value.line == 5
    assert "coefficients.A" in str(err.value)


def test_parse_error_missing_delta():
    with pytest.raises(ParseError) as err:
        loads_problem(MINIMAL.replace("  delta: 0.5\n", ""))
    assert "delta" in err.value.field


def test_parse_error_unknown_kind():
    with pytest.raises(ParseError) as err:
        loads_problem(MINIMAL.replace("{const: [[1.0]]}", "{spline: [[1.0]]}"))
    assert err.value.field == "weights.G2"


# mollification ---------------------------------------------------------------


def test_bump_weights_normalized():
    r, w = bump_quadrature(0.1)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(w > 0) and np.all(np.abs(r) < 0.1)


def test_mollify_constant_unchanged():
    c = Const(2.0 * np.eye(2))
    assert mollify_matrix_path(c, 0.1, 1.0) is c
    k = ConstKernel(np.eye(2))
    assert mollify_kernel(k, 0.1) is k


def test_mollified_path_distance_matches_oracle():
    g = Table([0.0, 0.5, 1.0], [[[1.0]], [[1.0]], [[2.0]]])
    t = np.linspace(0, 1, 2001)
    dists = []
    for eps in (0.25, 0.125, 0.0625):
        ge = mollify_matrix_path(g, eps, 1.0)
        d = float(np.abs(ge(t) - g(t)).max())
        # 257-point quadrature resolves the kink to ~3e-5 relative
        assert d == pytest.approx(2 * eps * BUMP_HALF_MOMENT, rel=1e-4)
        assert ge(t).min() >= 1.0 - 1e-15  # lower bound preserved
        assert np.all(np.diff(ge(t)[:, 0, 0]) >= -1e-15)  # monotone preserved
        dists.append(d)
    assert dists[0] > dists[1] > dists[2]


def test_mollified_kernel_distance_matches_oracle():
    q = FunctionKernel(
        lambda t, s: (1.0 + 2.0 * np.maximum(np.minimum(t, s) - 0.5, 0.0))[..., None, None], (1, 1)
    )
    dists = []
    for eps in (0.25, 0.125, 0.0625):
        qe = mollify_kernel(q, eps)
        best = 0.0
        for t in np.linspace(0, 1, 41):
            s = np.linspace(t, 1, 2001)
            diff = (qe(t, s) - q(t, s))[:, 0, 0] ** 2
            best = max(best, np.sqrt(trapezoid(diff, s)) if len(s) > 1 else 0.0)
        assert best == pytest.approx(KERNEL_DIST[eps], rel=2e-3)
        assert np.all(qe(np.linspace(0, 1, 50), 1.0) <= 2.0 + 1e-15)  # cap preserved
        dists.append(best)
    assert dists[0] > dists[1] > dists[2]


def test_mollify_problem_only_touches_rough_parts():
    p = kinked_g2(100)
    m = mollify_problem(p, 0.1)
    assert m.coeffs.A is p.coeffs.A
    assert m.weights.Q is p.weights.Q
    assert m.weights.G2 is not p.weights.G2
    assert m.smoothness == {"H4": True, "H5": True}
    assert "mollified" in m.name
    assert min(np.linalg.eigvalsh(m.discretize().G2).min(), 1.0) >= p.weights.delta
