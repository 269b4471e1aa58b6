"""Independent reference computations used by the tests.

Everything here is deliberately written against the mathematical
definitions (numerical quadrature, bisection) rather than reusing the
closed forms in the package, so agreement is evidence of correctness.
"""

import math

import numpy as np

from spatial_lp import kernels

# 64-node Gauss-Legendre rule, exact for polynomials up to degree 127.
# The kernels are only piecewise polynomial (corner at 0), so every axis
# is integrated on [-C, 0] and [0, C] separately.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _axis_rule(C: float):
    """Quadrature nodes/weights on [-C, C] split at the kernel's corner."""
    lo = (_GL_NODES - 1.0) * C / 2.0
    hi = (_GL_NODES + 1.0) * C / 2.0
    u = np.concatenate([lo, hi])
    w = np.concatenate([_GL_WEIGHTS, _GL_WEIGHTS]) * C / 2.0
    return u, w


def quad_moment_1d(spec: kernels.KernelSpec, a: int, r: int) -> float:
    """int u^a k_C(u)^r du by piecewise Gauss-Legendre quadrature."""
    C = spec.support_halfwidth
    u, w = _axis_rule(C)
    k = kernels._base_1d(spec.family, u / C) / C
    return float(np.sum(w * u**a * k**r))


def quad_moment_matrices(spec: kernels.KernelSpec, layout):
    """S, Kcal, B for a basis layout, via tensor-product quadrature.

    Integrates the monomials against K and K^2 on the full d-dimensional
    support instead of using per-axis closed forms.
    """
    d = spec.d
    u, w = _axis_rule(spec.support_halfwidth)
    axes = [u] * d
    wts = [w] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    wmesh = np.meshgrid(*wts, indexing="ij")
    wprod = np.ones(pts.shape[0])
    for m in wmesh:
        wprod = wprod * m.ravel()

    K = kernels.eval_kernel_many(spec, pts)
    counts = layout.counts_matrix()
    top_counts = layout.counts_matrix(top=True)

    def mono(c):
        out = np.ones(pts.shape[0])
        for j in range(d):
            if c[j]:
                out = out * pts[:, j] ** c[j]
        return out

    cols = np.column_stack([mono(c) for c in counts])
    top_cols = np.column_stack([mono(c) for c in top_counts])
    S = cols.T @ (cols * (wprod * K)[:, None])
    Kcal = cols.T @ (cols * (wprod * K * K)[:, None])
    B = cols.T @ (top_cols * (wprod * K)[:, None])
    return S, Kcal, B


def bisect_normal_quantile(u: float, tol: float = 1e-12) -> float:
    """Inverse standard-normal CDF by bisection on the erf-based CDF."""
    if not 0.0 < u < 1.0:
        raise ValueError("u must be in (0, 1)")
    lo, hi = -10.0, 10.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if 0.5 * (1.0 + math.erf(mid / math.sqrt(2.0))) < u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def conv_exponential_2d(r1: float, t: float, grid: int = 400, span: float = 20.0):
    """(phi * phi)(t e_1) for phi(x) = exp(-r1 ||x||), by direct 2-D quadrature."""
    xs = np.linspace(-span / 2, span / 2, grid)
    step = xs[1] - xs[0]
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    f = np.exp(-r1 * np.sqrt(X**2 + Y**2))
    g = np.exp(-r1 * np.sqrt((X - t) ** 2 + Y**2))
    return float((f * g).sum() * step * step)
