"""scikit-learn style wrapper around :func:`~ere_lab.solver.solve_equilibrium`."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .problem import ProblemInstance
from .solver import solve_equilibrium


class EquilibriumLQ(BaseEstimator):
    """Closed-loop equilibrium feedback for a problem instance.

    ``fit`` takes a :class:`~ere_lab.problem.ProblemInstance` instead of a
    data matrix.  ``predict`` maps states to equilibrium controls
    ``u = theta(t) x``.

    Parameters
    ----------
    tol : float
        Fixed-point tolerance.
    max_iters : int
        Picard iterations allowed per window attempt.
    initial_window, min_window : float or None
        Window lengths (default ``T/8`` and ``T/1024``).
    polish_iters : int
        Global iterations after the windowed sweep.
    override_assumptions : bool
        Solve even if the positivity assumptions fail.

    Attributes
    ----------
    theta_ : ndarray, shape (N + 1, k, n)
    p1_diag_ : ndarray, shape (N + 1, n, n)
    p2_ : ndarray, shape (N + 1, m, n)
    value_ : ndarray, shape (N + 1, n, n)
    times_ : ndarray, shape (N + 1,)
    solution_, diagnostics_ :
        Full solver output.
    """

    def __init__(self, tol=1e-10, max_iters=200, initial_window=None, min_window=None,
                 polish_iters=5, override_assumptions=False):
        self.tol = tol
        self.max_iters = max_iters
        self.initial_window = initial_window
        self.min_window = min_window
        self.polish_iters = polish_iters
        self.override_assumptions = override_assumptions

    def fit(self, problem, y=None):
        if not isinstance(problem, ProblemInstance):
            raise TypeError(f"fit expects a ProblemInstance, got {type(problem).__name__}")
        sol, diag = solve_equilibrium(
            problem,
            tol=self.tol,
            max_iters=self.max_iters,
            initial_window=self.initial_window,
            min_window=self.min_window,
            polish_iters=self.polish_iters,
            override_assumptions=self.override_assumptions,
        )
        self.problem_ = problem
        self.solution_ = sol
        self.diagnostics_ = diag
        self.times_ = problem.grid.nodes
        self.theta_ = sol.theta.values
        self.p1_diag_ = sol.p1_diag.values
        self.p2_ = sol.p2.values
        self.value_ = sol.value.values
        self.n_features_in_ = problem.n
        return self

    def _check_states(self, X):
        check_is_fitted(self, "theta_")
        X = check_array(X, ensure_2d=False, dtype=float)
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected states with {self.n_features_in_} components, got {X.shape[1]}")
        return X

    def _node(self, t):
        T = self.times_[-1]
        if not 0.0 <= t <= T:
            raise ValueError(f"t = {t} outside [0, {T}]")
        return self.solution_.theta.at(t), self.solution_.value.at(t)

    def predict(self, X, t=0.0):
        """Equilibrium controls ``theta(t) x`` for each row of ``X``."""
        X = self._check_states(X)
        theta, _ = self._node(t)
        return X @ theta.T

    def value(self, X, t=0.0):
        """Equilibrium value ``0.5 <V(t) x, x>`` for each row of ``X``."""
        X = self._check_states(X)
        _, V = self._node(t)
        return 0.5 * np.einsum("pi,ij,pj->p", X, V, X)
