"""Scalar reduced system of the escaping instance ``example1``.

With ``B = R = H = G1 = 1``, ``M = 2e`` and all other data zero, the gain is
``theta = -P1`` and the equations collapse to the autonomous pair

    dP1/ds = P1^2 - 2e P2^2,    dP2/ds = P2 P1,    P1(2) = P2(2) = 1,

integrated backwards from ``s = 2``.  The comparison curve ``1 / (s - 1)``
solves ``dP/ds = P^2`` with ``P(2) = 1`` and escapes at ``s = 1``.
"""

from dataclasses import dataclass

import numpy as np

from .ode import OVERFLOW


@dataclass
class ReducedRun:
    s: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    blowup_index: int = None

    @property
    def blowup_time(self):
        return None if self.blowup_index is None else float(self.s[self.blowup_index])

    @property
    def comparison(self):
        with np.errstate(divide="ignore"):
            return 1.0 / (self.s - 1.0)


def _rhs(y):
    p1, p2 = y
    return np.array([p1 * p1 - 2.0 * np.e * p2 * p2, p2 * p1])


def integrate_reduced_example1(N=400, T=2.0):
    """Backward RK4 on ``N`` uniform steps over ``[0, T]``.

    Integration stops at the first node where an entry exceeds the overflow
    threshold; later (smaller ``s``) entries are ``NaN``.
    """
    h = T / N
    s = np.arange(N + 1) * h
    p1 = np.full(N + 1, np.nan)
    p2 = np.full(N + 1, np.nan)
    y = np.array([1.0, 1.0])
    p1[N], p2[N] = y
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(N - 1, -1, -1):
            k1 = _rhs(y)
            k2 = _rhs(y - 0.5 * h * k1)
            k3 = _rhs(y - 0.5 * h * k2)
            k4 = _rhs(y - h * k3)
            y = y - (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.abs(y) <= OVERFLOW):
                return ReducedRun(s, p1, p2, j)
            p1[j], p2[j] = y
    return ReducedRun(s, p1, p2, None)
