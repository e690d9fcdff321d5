"""Built-in problem instances used by the CLI, the tests and the examples."""

import numpy as np

from .problem import (
    CoefficientSet,
    Const,
    ConstKernel,
    DiscountedKernel,
    ExpDiscount,
    HyperbolicDiscount,
    Poly,
    ProblemInstance,
    TimeGrid,
    WeightKernelSet,
)


def _zeros(r, c):
    return Const(np.zeros((r, c)))


def example1(N=400):
    """Scalar instance with an escaping Riccati solution.

    ``B = R = H = G1 = 1``, ``M = 2e``, everything else zero, ``T = 2``.
    ``G2 = 0`` so the positivity assumption on ``G2`` fails on purpose.
    """
    one = Const([[1.0]])
    zero = _zeros(1, 1)
    coeffs = CoefficientSet(
        A=zero, B=one, C=zero, D=zero, Ahat=zero, Bhat=zero, Chat=zero, Dhat=zero, H=[[1.0]]
    )
    weights = WeightKernelSet(
        Q=ConstKernel([[0.0]]),
        R=ConstKernel([[1.0]]),
        M=ConstKernel([[2.0 * np.e]]),
        N=ConstKernel([[0.0]]),
        G1=one,
        G2=zero,
        delta=0.5,
        caps={"Q": [[1.0]], "R": [[1.0]], "M": [[2.0 * np.e]], "N": [[1.0]], "G1": [[1.0]], "G2": [[1.0]]},
    )
    return ProblemInstance(1, 1, 1, TimeGrid(2.0, N), coeffs, weights, name="example1")


def classical_reduction(N=400):
    """Two-dimensional instance whose backward part vanishes.

    With ``Ahat = Bhat = 0``, ``H = 0`` and ``M = N = 0`` the equilibrium gain
    is the classical LQ feedback of the Riccati equation driven by ``Q``, ``R``
    and ``G1``.
    """
    coeffs = CoefficientSet(
        A=Const([[0.1, 1.0], [-0.5, -0.2]]),
        B=Const([[1.0, 0.0], [0.2, 1.0]]),
        C=Const([[0.2, 0.0], [0.1, 0.1]]),
        D=Const([[0.1, 0.0], [0.0, 0.2]]),
        Ahat=_zeros(1, 2),
        Bhat=_zeros(1, 2),
        Chat=Const([[0.3]]),
        Dhat=Const([[0.1]]),
        H=[[0.0, 0.0]],
    )
    Q = [[1.0, 0.2], [0.2, 0.5]]
    R = [[1.0, 0.0], [0.0, 2.0]]
    weights = WeightKernelSet(
        Q=ConstKernel(Q),
        R=ConstKernel(R),
        M=ConstKernel([[0.0]]),
        N=ConstKernel([[0.0]]),
        G1=Const(0.5 * np.eye(2)),
        G2=Const([[1.0]]),
        delta=0.5,
        caps={"Q": Q, "R": R, "M": [[0.1]], "N": [[0.1]], "G1": 0.5 * np.eye(2), "G2": [[1.0]]},
    )
    return ProblemInstance(2, 1, 2, TimeGrid(1.0, N), coeffs, weights, name="classical_reduction")


def discounted_2x2(N=400):
    """Fully coupled 2x2x2 instance with exponential discounting ``exp(-(s - t) / 2)``."""
    T = 1.0
    disc = ExpDiscount(0.5)
    Q0 = [[1.0, 0.1], [0.1, 0.8]]
    R0 = [[1.0, 0.0], [0.0, 1.2]]
    M0 = 0.3 * np.eye(2)
    N0 = 0.2 * np.eye(2)
    G1 = np.eye(2)
    G2 = [[1.0, 0.0], [0.0, 1.5]]
    coeffs = CoefficientSet(
        A=Const([[-0.2, 0.5], [0.0, -0.1]]),
        B=Const([[1.0, 0.0], [0.3, 0.8]]),
        C=Const([[0.2, 0.0], [0.0, 0.15]]),
        D=Const([[0.2, 0.0], [0.1, 0.1]]),
        Ahat=Const([[0.3, 0.0], [0.1, 0.2]]),
        Bhat=Const([[0.2, 0.0], [0.0, 0.1]]),
        Chat=Const([[-0.1, 0.0], [0.0, 0.1]]),
        Dhat=Const([[0.1, 0.0], [0.0, 0.05]]),
        H=[[0.5, 0.0], [0.1, 0.4]],
    )
    weights = WeightKernelSet(
        Q=DiscountedKernel(disc, Const(Q0), T),
        R=DiscountedKernel(disc, Const(R0), T),
        M=DiscountedKernel(disc, Const(M0), T),
        N=DiscountedKernel(disc, Const(N0), T),
        G1=Const(G1),
        G2=Const(G2),
        delta=0.5,
        caps={"Q": Q0, "R": R0, "M": M0, "N": N0, "G1": G1, "G2": G2},
    )
    return ProblemInstance(2, 2, 2, TimeGrid(T, N), coeffs, weights, name="discounted_2x2")


def smoke_3x2x2(N=400):
    """``n = 3, m = 2, k = 2`` with time-varying coefficients and hyperbolic discounting."""
    T = 1.0
    disc = HyperbolicDiscount(1.0)
    Q0 = [[1.0, 0.2, 0.0], [0.2, 0.8, 0.1], [0.0, 0.1, 0.6]]
    R0 = 2.0 * np.eye(2)
    M0 = [[0.4, 0.1], [0.1, 0.3]]
    N0 = 0.2 * np.eye(2)
    G1 = [[1.0, 0.1, 0.0], [0.1, 0.8, 0.0], [0.0, 0.0, 0.5]]
    G2 = [[1.0, 0.0], [0.0, 0.8]]
    coeffs = CoefficientSet(
        A=Poly([
            [[-0.1, 0.4, 0.0], [0.0, -0.2, 0.3], [0.1, 0.0, -0.3]],
            [[0.1, 0.0, 0.0], [0.0, 0.05, 0.0], [0.0, 0.1, 0.0]],
        ]),
        B=Const([[1.0, 0.0], [0.0, 1.0], [0.3, 0.2]]),
        C=Poly([
            [[0.1, 0.0, 0.0], [0.0, 0.15, 0.0], [0.05, 0.0, 0.1]],
            [[0.05, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.05]],
        ]),
        D=Const([[0.1, 0.0], [0.0, 0.1], [0.05, 0.05]]),
        Ahat=Poly([
            [[0.2, 0.0, 0.1], [0.0, 0.1, 0.0]],
            [[0.0, 0.1, 0.0], [0.05, 0.0, 0.0]],
        ]),
        Bhat=Const([[0.1, 0.0], [0.0, 0.2]]),
        Chat=Const([[0.1, 0.05], [0.0, -0.1]]),
        Dhat=Const([[0.05, 0.0], [0.0, 0.1]]),
        H=[[0.3, 0.0, 0.1], [0.0, 0.4, 0.0]],
    )
    weights = WeightKernelSet(
        Q=DiscountedKernel(disc, Const(Q0), T),
        R=DiscountedKernel(disc, Const(R0), T),
        M=DiscountedKernel(disc, Const(M0), T),
        N=DiscountedKernel(disc, Const(N0), T),
        G1=Const(G1),
        G2=Const(G2),
        delta=0.5,
        caps={"Q": Q0, "R": R0, "M": M0, "N": N0, "G1": G1, "G2": G2},
    )
    return ProblemInstance(3, 2, 2, TimeGrid(T, N), coeffs, weights, name="smoke_3x2x2")


BUILTINS = {
    "example1": example1,
    "classical_reduction": classical_reduction,
    "discounted_2x2": discounted_2x2,
    "smoke_3x2x2": smoke_3x2x2,
}


def get_instance(name, N=None):
    """Built-in instance by name, optionally on a grid with ``N`` steps."""
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown built-in instance {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory() if N is None else factory(N)
