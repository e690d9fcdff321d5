import dataclasses

import numpy as np
import pytest

from ere_lab import get_instance, solve_equilibrium
from ere_lab.problem import (
    CoefficientSet,
    Const,
    ConstKernel,
    ProblemInstance,
    Table,
    TimeGrid,
    WeightKernelSet,
)


@pytest.fixture(scope="session")
def solved():
    """Solved built-in instances at N = 400, keyed by name."""
    cache = {}

    def get(name):
        if name not in cache:
            p = get_instance(name, 400)
            sol, diag = solve_equilibrium(p)
            cache[name] = (p, sol, diag)
        return cache[name]

    return get


def scalar_problem(T=1.0, N=200, A=0.0, B=0.0, C=0.0, D=0.0, Ahat=0.0, Bhat=0.0, Chat=0.0, Dhat=0.0,
                   H=0.0, Q=0.0, R=1.0, M=0.0, N_w=0.0, G1=0.0, G2=1.0, delta=0.5):
    """One-dimensional instance with constant data."""
    c = {k: Const([[v]]) for k, v in dict(A=A, B=B, C=C, D=D, Ahat=Ahat, Bhat=Bhat, Chat=Chat, Dhat=Dhat).items()}
    coeffs = CoefficientSet(H=[[H]], **c)
    caps = {k: [[max(v, 1.0)]] for k, v in dict(Q=Q, R=R, M=M, N=N_w, G1=G1, G2=G2).items()}
    weights = WeightKernelSet(
        Q=ConstKernel([[Q]]), R=ConstKernel([[R]]), M=ConstKernel([[M]]), N=ConstKernel([[N_w]]),
        G1=Const([[G1]]), G2=Const([[G2]]), delta=delta, caps=caps,
    )
    return ProblemInstance(1, 1, 1, TimeGrid(T, N), coeffs, weights, name="scalar")


def kinked_g2(N=400):
    """``discounted_2x2`` with a nondecreasing ``G2`` that has a kink at ``t = 1/2``."""
    p = get_instance("discounted_2x2", N)
    G2 = np.diag([1.0, 1.5])
    g2 = Table([0.0, 0.5, 1.0], [G2, G2, 1.6 * G2])
    w = dataclasses.replace(p.weights, G2=g2, caps={**p.weights.caps, "G2": 1.6 * G2})
    return dataclasses.replace(p, weights=w, smoothness={"H4": True, "H5": False}, name="kinked_g2")


def constant_weights_2x2(N=400):
    """``discounted_2x2`` coefficients with t-independent (undiscounted) weights."""
    p = get_instance("discounted_2x2", N)
    c = p.weights.caps
    w = dataclasses.replace(
        p.weights, Q=ConstKernel(c["Q"]), R=ConstKernel(c["R"]), M=ConstKernel(c["M"]), N=ConstKernel(c["N"])
    )
    return dataclasses.replace(p, weights=w, name="constant_weights_2x2")


#: one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


def record(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
