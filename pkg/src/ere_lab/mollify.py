"""Smoothing of non-smooth coefficient paths and weighting kernels.

Each function is extended beyond its domain by freezing it at the boundary
(for kernels: frozen at ``q(s, s)`` above the diagonal and at ``q(0, s)``
below ``t = 0``), then convolved in ``t`` with a normalized bump of width
``eps``.  The convolution is evaluated with a fixed positive quadrature whose
weights sum to one, so every pointwise order relation of the input (bounds,
caps, monotonicity in ``t``) survives the smoothing exactly up to rounding.
"""

from dataclasses import replace

import numpy as np

from .problem import (
    COEFFICIENT_NAMES,
    KERNEL_NAMES,
    PATH_WEIGHT_NAMES,
    Const,
    ConstKernel,
    Kernel,
    MatrixFunction,
)

DEFAULT_QUAD = 257


def bump_quadrature(eps, n_quad=DEFAULT_QUAD):
    """Offsets ``r_q`` in ``(-eps, eps)`` and positive weights summing to one.

    The weights sample the standard bump ``exp(-1 / (1 - x^2))`` at midpoints
    of a uniform partition of ``(-1, 1)``.
    """
    if not eps > 0:
        raise ValueError("mollify: eps must be positive")
    x = -1.0 + (np.arange(n_quad) + 0.5) * (2.0 / n_quad)
    w = np.exp(-1.0 / (1.0 - x * x))
    w /= w.sum()
    return eps * x, w


class MollifiedPath(MatrixFunction):
    smooth = True

    def __init__(self, g, eps, T, n_quad=DEFAULT_QUAD):
        self.g = g
        self.eps = float(eps)
        self.T = float(T)
        self.shape = g.shape
        self.offsets, self.w = bump_quadrature(eps, n_quad)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        pts = np.clip(t[..., None] - self.offsets, 0.0, self.T)
        vals = self.g(pts)
        return np.einsum("...qij,q->...ij", vals, self.w)


class MollifiedKernel(Kernel):
    smooth_in_t = True

    def __init__(self, q, eps, n_quad=DEFAULT_QUAD):
        self.q = q
        self.eps = float(eps)
        self.shape = q.shape
        self.offsets, self.w = bump_quadrature(eps, n_quad)

    def __call__(self, t, s):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        ss = s[..., None]
        tt = np.clip(t[..., None] - self.offsets, 0.0, ss)
        vals = self.q(tt, np.broadcast_to(ss, tt.shape))
        return np.einsum("...qij,q->...ij", vals, self.w)


def mollify_matrix_path(g, eps, T, n_quad=DEFAULT_QUAD):
    """Convolve ``g`` (extended by its end values) with a bump of width ``eps``.

    Constants are returned unchanged.
    """
    if isinstance(g, Const):
        return g
    return MollifiedPath(g, eps, T, n_quad)


def mollify_kernel(q, eps, n_quad=DEFAULT_QUAD):
    """Smooth ``q(t, s)`` in ``t`` for each fixed ``s``.

    The result is nondecreasing in ``t`` whenever ``q`` is, and stays below
    any cap that bounds ``q``.
    """
    if isinstance(q, ConstKernel):
        return q
    return MollifiedKernel(q, eps, n_quad)


def mollify_problem(problem, eps, n_quad=DEFAULT_QUAD):
    """Mollify every component of ``problem`` not already flagged smooth."""
    T = problem.T
    c, w = problem.coeffs, problem.weights
    coeffs = {
        name: (f if f.smooth else mollify_matrix_path(f, eps, T, n_quad))
        for name in COEFFICIENT_NAMES
        for f in [getattr(c, name)]
    }
    paths = {
        name: (f if f.smooth else mollify_matrix_path(f, eps, T, n_quad))
        for name in PATH_WEIGHT_NAMES
        for f in [getattr(w, name)]
    }
    kernels = {
        name: (q if q.smooth_in_t else mollify_kernel(q, eps, n_quad))
        for name in KERNEL_NAMES
        for q in [getattr(w, name)]
    }
    return replace(
        problem,
        coeffs=replace(c, **coeffs),
        weights=replace(w, **paths, **kernels),
        smoothness={"H4": True, "H5": True},
        name=f"{problem.name}[mollified eps={eps:g}]",
    )
