"""Asymptotic variance estimation, confidence intervals, two-sample test.

The long-run variance factor is estimated by a Bartlett-tapered double sum
over residual products, restricted to site pairs inside the kernel window
(all other terms vanish identically).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from . import basis, kernels
from .dataset import SpatialDataset
from .lpfit import FitConfig, FitResult, fit_mean_at


class DegenerateWindow(Exception):
    """Density estimate vanished at the evaluation point."""


def normal_quantile(u: float) -> float:
    return float(ndtri(u))


def normal_cdf(x: float) -> float:
    return float(ndtr(x))


@dataclass
class VarianceEstimate:
    """Plug-in estimate of the asymptotic variance factor W_n."""

    g_hat: float
    W1_hat: float
    W_hat: float
    residual_bandwidth: tuple[float, ...]


@dataclass
class TestReport:
    """Outcome of the two-sample derivative test."""

    idx: tuple
    T: float
    V_check: float
    p_value: float
    level: float
    decision: str  # "reject", "accept", or "inconclusive"


def density_hat(dataset: SpatialDataset, kernel: kernels.KernelSpec, h, z) -> float:
    """(n h_1...h_d)^{-1} sum_i K_Ah(X_i - A z)."""
    z = np.asarray(z, dtype=float)
    A = dataset.region.sides()
    h = np.asarray(h, dtype=float)
    scaled = (dataset.sites - A * z) / (A * h)
    w = kernels.eval_kernel_many(kernel, scaled)
    return float(w.sum() / (dataset.n * np.prod(h)))


def _kernel_weights(dataset, kernel, h, z):
    A = dataset.region.sides()
    scaled = (dataset.sites - A * z) / (A * np.asarray(h))
    return kernels.eval_kernel_many(kernel, scaled)


def make_residual_provider(dataset: SpatialDataset, config: FitConfig):
    """m_hat evaluated by a local polynomial fit with the given config."""

    def mhat(z):
        return fit_mean_at(dataset, config, z)

    return mhat


def _tapered_pair_sum(
    dataset: SpatialDataset,
    kernel: kernels.KernelSpec,
    h,
    taper: kernels.TaperSpec,
    z,
    mhat,
) -> float:
    """sum_{i,j} K_i K_j Kbar(X_i - X_j) r_i r_j over in-window pairs."""
    w = _kernel_weights(dataset, kernel, h, z)
    active = np.flatnonzero(w > 0.0)
    if active.size == 0:
        return 0.0
    A = dataset.region.sides()
    res = np.array(
        [
            dataset.responses[i] - mhat(dataset.sites[i] / A)
            for i in active
        ]
    )
    wr = w[active] * res
    X = dataset.sites[active]
    disp = X[:, None, :] - X[None, :, :]
    Kbar = kernels.eval_taper_many(taper, disp)
    return float(wr @ Kbar @ wr)


def variance_hat(
    dataset: SpatialDataset,
    mhat,
    kernel: kernels.KernelSpec,
    h,
    taper: kernels.TaperSpec,
    z,
) -> VarianceEstimate:
    """Tapered double-sum estimate of the asymptotic variance factor.

    mhat is a callable returning the fitted mean at a rescaled point; it
    supplies the residuals Y_i - m_hat(X_i / A).
    """
    z = np.asarray(z, dtype=float)
    h = tuple(float(v) for v in np.atleast_1d(h))
    g = density_hat(dataset, kernel, h, z)
    if g <= 0.0:
        raise DegenerateWindow(f"estimated density at z={z} is zero")
    s = _tapered_pair_sum(dataset, kernel, h, taper, z, mhat)
    An = dataset.region.volume
    W1 = An / (dataset.n**2 * float(np.prod(h))) * s
    layout_d = kernel.d
    kappa02 = kernels.moment_1d(kernel, 0, 2) ** layout_d
    W = W1 / (kappa02 * g * g)
    return VarianceEstimate(g_hat=g, W1_hat=W1, W_hat=W, residual_bandwidth=h)


def interval_halfwidth(
    moments: kernels.MomentMatrices,
    layout,
    idx,
    W_hat: float,
    An: float,
    h,
    tau: float,
) -> float:
    idx = tuple(idx)
    k = layout.position(idx)
    sks = moments.sks()
    h = np.asarray(h, dtype=float)
    sfac = basis.s_factorial(idx)
    hprod = float(np.prod([h[j - 1] for j in idx]))
    q = normal_quantile(1.0 - tau / 2.0)
    var = W_hat * sfac**2 * sks[k, k] / (An * float(np.prod(h)) * hprod**2)
    return q * np.sqrt(max(var, 0.0))


def confidence_interval(
    fit: FitResult,
    varest: VarianceEstimate,
    moments: kernels.MomentMatrices,
    idx,
    tau: float,
) -> tuple[float, float]:
    """Bias-corrected normal confidence interval for a derivative of the mean."""
    if not 0.0 < tau < 1.0:
        raise ValueError("level tau must be in (0, 1)")
    idx = tuple(idx)
    center = fit.derivative(idx)
    if fit.bias_hat is not None:
        k = fit.layout.position(idx)
        hprod = float(np.prod([fit.h[j - 1] for j in idx]))
        center -= basis.s_factorial(idx) * fit.bias_hat[k] / hprod
    hw = interval_halfwidth(
        moments, fit.layout, idx, varest.W_hat, fit.An, fit.h, tau
    )
    return (center - hw, center + hw)


def two_sample_variance(
    ds1: SpatialDataset,
    ds2: SpatialDataset,
    kernel: kernels.KernelSpec,
    h,
    taper: kernels.TaperSpec,
    z,
    mhat1,
    mhat2,
) -> float:
    """Pooled variance V_check = V1/g1^2 + V2/g2^2 - 2 V3/(g1 g2), kappa_0^(2)-scaled."""
    if ds1.region != ds2.region:
        raise ValueError("both samples must share one sampling region")
    z = np.asarray(z, dtype=float)
    h = tuple(float(v) for v in np.atleast_1d(h))
    An = ds1.region.volume
    hv = float(np.prod(h))
    kappa02 = kernels.moment_1d(kernel, 0, 2) ** kernel.d

    g1 = density_hat(ds1, kernel, h, z)
    g2 = density_hat(ds2, kernel, h, z)
    if g1 <= 0.0 or g2 <= 0.0:
        raise DegenerateWindow("estimated density vanished in one of the samples")

    V1 = An / (ds1.n**2 * hv) * _tapered_pair_sum(ds1, kernel, h, taper, z, mhat1)
    V2 = An / (ds2.n**2 * hv) * _tapered_pair_sum(ds2, kernel, h, taper, z, mhat2)

    # cross-sample sum
    w1 = _kernel_weights(ds1, kernel, h, z)
    w2 = _kernel_weights(ds2, kernel, h, z)
    a1 = np.flatnonzero(w1 > 0.0)
    a2 = np.flatnonzero(w2 > 0.0)
    A = ds1.region.sides()
    r1 = np.array([ds1.responses[i] - mhat1(ds1.sites[i] / A) for i in a1])
    r2 = np.array([ds2.responses[i] - mhat2(ds2.sites[i] / A) for i in a2])
    if a1.size and a2.size:
        disp = ds1.sites[a1][:, None, :] - ds2.sites[a2][None, :, :]
        Kbar = kernels.eval_taper_many(taper, disp)
        cross = float((w1[a1] * r1) @ Kbar @ (w2[a2] * r2))
    else:
        cross = 0.0
    V3 = An / (ds1.n * ds2.n * hv) * cross

    V = (V1 / g1**2 + V2 / g2**2 - 2.0 * V3 / (g1 * g2)) / kappa02
    if V < 0.0:
        warnings.warn("pooled two-sample variance negative; clamped to 0")
        return 0.0
    return V


def two_sample_test(
    fit1: FitResult,
    fit2: FitResult,
    V_check: float,
    moments: kernels.MomentMatrices,
    idx,
    tau: float,
) -> TestReport:
    """Normal test of equal derivatives at a point, per the pooled statistic."""
    if not 0.0 < tau < 0.5:
        raise ValueError("test level tau must be in (0, 1/2)")
    idx = tuple(idx)
    if not np.allclose(fit1.h, fit2.h) or not np.allclose(fit1.z, fit2.z):
        raise ValueError("both fits must use the same z and bandwidths")
    if V_check <= 0.0:
        return TestReport(
            idx=idx, T=float("nan"), V_check=V_check, p_value=float("nan"),
            level=tau, decision="inconclusive",
        )
    k = fit1.layout.position(idx)
    sks = moments.sks()
    h = fit1.h
    hprod = float(np.prod([h[j - 1] for j in idx]))
    sfac = basis.s_factorial(idx)
    diff = fit1.derivative(idx) - fit2.derivative(idx)
    T = (
        np.sqrt(fit1.An * float(np.prod(h)) * hprod**2)
        * diff
        / np.sqrt(V_check * sfac**2 * sks[k, k])
    )
    p = 2.0 * (1.0 - normal_cdf(abs(T)))
    q = normal_quantile(1.0 - tau / 2.0)
    return TestReport(
        idx=idx,
        T=float(T),
        V_check=float(V_check),
        p_value=float(p),
        level=tau,
        decision="reject" if abs(T) >= q else "accept",
    )
