"""Order-p local polynomial fitting by kernel-weighted least squares.

The regressors at evaluation point z are the monomials of
(X_i - A*z) / A in canonical basis order; the weights are
K((X_i1 - A_1 z_1)/(A_1 h_1), ..., (X_id - A_d z_d)/(A_d h_d)).
Coefficient j_1...j_L times s! estimates the mixed partial derivative of
the mean surface at z.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from . import basis, kernels
from .dataset import SpatialDataset

COND_LIMIT = 1e12
RIDGE_SCALE = 1e-10


class FitError(Exception):
    """Base class for local-fit failures."""


class NoLocalData(FitError):
    """Fewer sites with positive weight than basis functions."""


class RankDeficient(FitError):
    """Weighted normal equations numerically singular after ridge fallback."""


@dataclass(frozen=True)
class FitConfig:
    """Fit configuration: order, kernel, bandwidths (rescaled units)."""

    p: int
    kernel: kernels.KernelSpec
    h: tuple[float, ...]
    pilot_h: tuple[float, ...] | None = None
    ridge_eps: float = 0.0

    def __post_init__(self):
        if any(hj <= 0 for hj in self.h):
            raise ValueError("bandwidths must be positive")
        if len(self.h) != self.kernel.d:
            raise ValueError("bandwidth vector length must equal dimension")

    @property
    def d(self) -> int:
        return self.kernel.d

    def layout(self) -> basis.BasisLayout:
        return _layout_cached(self.d, self.p)

    def moments(self) -> kernels.MomentMatrices:
        return _moments_cached(self.kernel, self.p)

    def pilot(self) -> "FitConfig":
        ph = self.pilot_h if self.pilot_h is not None else self.h
        return replace(self, p=self.p + 1, h=tuple(ph), pilot_h=None)


def _layout_cached(d, p, _cache={}):
    key = (d, p)
    if key not in _cache:
        _cache[key] = basis.build_layout(d, p)
    return _cache[key]


def _moments_cached(spec, p, _cache={}):
    key = (spec, p)
    if key not in _cache:
        _cache[key] = kernels.moment_matrices(spec, _layout_cached(spec.d, p))
    return _cache[key]


@dataclass
class FitResult:
    """Coefficients and derivative estimates of one local fit."""

    z: np.ndarray
    beta_hat: np.ndarray
    layout: basis.BasisLayout
    h: np.ndarray
    An: float
    n_eff: int
    boundary_flag: bool
    bias_hat: np.ndarray | None = None
    Wn_hat: float | None = None
    ci: dict = field(default_factory=dict)

    def derivative(self, idx) -> float:
        idx = tuple(idx)
        k = self.layout.position(idx)
        return float(basis.s_factorial(idx) * self.beta_hat[k])

    @property
    def derivatives(self) -> dict:
        return {
            idx: self.derivative(idx) for idx in self.layout.indices
        }


def _weights(dataset: SpatialDataset, config: FitConfig, z: np.ndarray) -> np.ndarray:
    A = dataset.region.sides()
    scaled = (dataset.sites - A * z) / (A * np.asarray(config.h))
    return kernels.eval_kernel_many(config.kernel, scaled)


def _check_interior(z: np.ndarray, d: int) -> None:
    if z.shape != (d,):
        raise ValueError(f"evaluation point must have dimension {d}")
    if (np.abs(z) >= 0.5).any():
        raise ValueError(f"evaluation point {z} is not in (-1/2, 1/2)^d")


def fit_at(dataset: SpatialDataset, config: FitConfig, z) -> FitResult:
    """Weighted least squares fit at z; raises FitError on degenerate windows."""
    z = np.asarray(z, dtype=float)
    _check_interior(z, config.d)
    layout = config.layout()
    D = layout.D

    w = _weights(dataset, config, z)
    active = np.flatnonzero(w > 0.0)
    if active.size < D:
        raise NoLocalData(
            f"{active.size} sites in the kernel window at z={z}, need >= {D}"
        )

    A = dataset.region.sides()
    t = (dataset.sites[active] - A * z) / A
    counts = layout.counts_matrix()
    X = np.empty((active.size, D))
    for k in range(D):
        col = np.ones(active.size)
        for j in range(config.d):
            c = counts[k, j]
            if c:
                col = col * t[:, j] ** c
        X[:, k] = col

    wa = w[active]
    Xw = X * wa[:, None]
    XWX = X.T @ Xw
    XWY = Xw.T @ dataset.responses[active]

    beta = _solve_spd(XWX, XWY, config.ridge_eps)

    ck = config.kernel.support_halfwidth
    boundary = bool(
        (np.abs(z) + ck * np.asarray(config.h) > 0.5).any()
    )
    return FitResult(
        z=z,
        beta_hat=beta,
        layout=layout,
        h=np.asarray(config.h, dtype=float),
        An=dataset.region.volume,
        n_eff=int(active.size),
        boundary_flag=boundary,
    )


def _solve_spd(XWX: np.ndarray, XWY: np.ndarray, ridge_eps: float) -> np.ndarray:
    D = XWX.shape[0]
    if ridge_eps > 0:
        XWX = XWX + ridge_eps * np.eye(D)
    cond = np.linalg.cond(XWX)
    if cond <= COND_LIMIT:
        try:
            c, low = linalg.cho_factor(XWX)
            return linalg.cho_solve((c, low), XWY)
        except np.linalg.LinAlgError:
            pass
    # ridge rescues ill-conditioned but full-rank systems; a matrix that is
    # singular to working precision is a data problem, not a scaling one
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
        raise RankDeficient(
            f"normal equations numerically singular (cond {cond:.3g})"
        )
    ridged = XWX + RIDGE_SCALE * np.trace(XWX) * np.eye(D)
    c, low = linalg.cho_factor(ridged)
    return linalg.cho_solve((c, low), XWY)


def fit_mean_at(dataset: SpatialDataset, config: FitConfig, z) -> float:
    """Convenience: intercept of the local fit, i.e. the mean estimate m_hat(z)."""
    return float(fit_at(dataset, config, z).beta_hat[0])


def top_order_moment_vector(
    config: FitConfig, derivatives: dict[tuple, float]
) -> np.ndarray:
    """Assemble the top-order term vector with entries (dm / s!) prod_l h_{j_l}."""
    layout = config.layout()
    h = np.asarray(config.h)
    out = np.empty(layout.D_bar)
    for t, idx in enumerate(layout.top_indices):
        hprod = float(np.prod([h[j - 1] for j in idx]))
        out[t] = derivatives[idx] / basis.s_factorial(idx) * hprod
    return out


def estimate_bias(dataset: SpatialDataset, config: FitConfig, z) -> np.ndarray:
    """Plug-in bias vector S^{-1} B M_hat from an order-(p+1) pilot fit.

    The result is on the rescaled (H) coefficient scale: the intercept
    component is the bias of beta_hat[0]; component j_1..j_L divided by
    prod_l h_{j_l} and multiplied by s! is the bias on the derivative scale.
    """
    pilot = config.pilot()
    pilot_fit = fit_at(dataset, pilot, z)
    top = {
        idx: pilot_fit.derivative(idx) for idx in config.layout().top_indices
    }
    Mn = top_order_moment_vector(config, top)
    mom = config.moments()
    return np.linalg.solve(mom.S, mom.B @ Mn)


def derivative_bias(config: FitConfig, bias_vec: np.ndarray, idx) -> float:
    """Map a component of the H-scale bias vector to the derivative scale."""
    idx = tuple(idx)
    layout = config.layout()
    k = layout.position(idx)
    h = np.asarray(config.h)
    hprod = float(np.prod([h[j - 1] for j in idx]))
    return float(basis.s_factorial(idx) * bias_vec[k] / hprod)


def mse_estimate(
    dataset: SpatialDataset,
    config: FitConfig,
    z,
    idx,
    variance_factor: float,
) -> float:
    """Plug-in MSE of the derivative estimator: squared bias plus variance."""
    if variance_factor < 0:
        raise ValueError("variance factor must be nonnegative")
    idx = tuple(idx)
    bias_vec = estimate_bias(dataset, config, z)
    b = derivative_bias(config, bias_vec, idx)

    layout = config.layout()
    k = layout.position(idx)
    sks = config.moments().sks()
    h = np.asarray(config.h)
    sfac = basis.s_factorial(idx)
    hprod = float(np.prod([h[j - 1] for j in idx]))
    var = (
        variance_factor
        * sfac**2
        * sks[k, k]
        / (dataset.region.volume * float(np.prod(h)) * hprod**2)
    )
    return b * b + var


def select_bandwidth(
    dataset: SpatialDataset,
    config: FitConfig,
    z,
    idx,
    candidates,
    variance_factor: float,
):
    """Grid-search minimizer of the plug-in MSE; ties go to the largest h."""
    if not len(candidates):
        raise ValueError("candidate bandwidth grid is empty")
    scored = []
    failures = []
    for h in candidates:
        h = tuple(float(v) for v in np.atleast_1d(h)) if np.ndim(h) else (float(h),) * config.d
        if len(h) == 1 and config.d > 1:
            h = h * config.d
        cand = replace(config, h=h, pilot_h=config.pilot_h)
        try:
            mse = mse_estimate(dataset, cand, z, idx, variance_factor)
        except FitError as exc:
            failures.append((h, str(exc)))
            warnings.warn(f"bandwidth candidate {h} skipped: {exc}")
            continue
        scored.append((mse, float(np.prod(h)), h))
    if not scored:
        raise FitError(
            "no feasible bandwidth candidate: "
            + "; ".join(f"{h}: {msg}" for h, msg in failures)
        )
    # sort by MSE ascending, then by window volume descending
    scored.sort(key=lambda s: (s[0], -s[1]))
    return scored[0][2]
