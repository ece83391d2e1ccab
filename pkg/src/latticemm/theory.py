"""Closed-form distortion curves and per-entry MSE predictions.

All bounds are the asymptotic expressions with the slack term set to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)


def phi(x):
    return 2 * x - x * x


def gaussian_drf(R):
    """Distortion-rate function of a unit Gaussian source, 2^(-2R)."""
    return 2.0 ** (-2.0 * np.asarray(R, dtype=float))


def _fixed_point_residual(R: float) -> float:
    return 1.0 + 4.0 * LN2 * R - 2.0 ** (2.0 * R)


def r_star(lo: float = 0.5, hi: float = 2.0, tol: float = 1e-12) -> float:
    """Root of 1 + 4 ln(2) R = 2^(2R) on [lo, hi] by bisection."""
    flo = _fixed_point_residual(lo)
    if flo * _fixed_point_residual(hi) > 0:
        raise ValueError("bracket does not contain the fixed point")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = _fixed_point_residual(mid)
        if abs(fm) < tol or hi - lo < 1e-15:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


R_STAR = r_star()


def gamma1(R):
    """phi(2^(-2R)) = 2 * 2^(-2R) - 2^(-4R)."""
    return phi(2.0 ** (-2.0 * np.asarray(R, dtype=float)))


def gamma(R):
    """Distortion-rate function of Gaussian matrix multiplication.

    Linear on [0, R*] and equal to ``gamma1`` above R*.
    """
    R = np.asarray(R, dtype=float)
    if np.any(R < 0):
        raise ValueError("rate must be non-negative")
    at_star = float(gamma1(R_STAR))
    out = np.where(R >= R_STAR, gamma1(R), 1.0 - (1.0 - at_star) * R / R_STAR)
    return float(out) if out.ndim == 0 else out


def time_sharing_gamma(R, kappas=None):
    """min over kappa of (1 - kappa) + kappa * phi(2^(-2R/kappa)), on a grid."""
    if kappas is None:
        kappas = np.linspace(1e-4, 1.0, 200001)
    R = np.atleast_1d(np.asarray(R, dtype=float))
    k = np.asarray(kappas, dtype=float)[None, :]
    out = np.empty(R.size)
    step = max(1, (1 << 22) // k.size)  # bound the (rates x kappas) temporary
    for i in range(0, R.size, step):
        r = R[i : i + step, None]
        out[i : i + step] = ((1 - k) + k * phi(2.0 ** (-2.0 * r / k))).min(axis=1)
    return float(out[0]) if out.size == 1 else out


def gaussian_lower_bound(R, divergence: float = 0.0):
    """Gamma(R + D(P || N(0,1))): distortion floor for iid non-Gaussian entries."""
    return gamma(np.asarray(R, dtype=float) + divergence)


@dataclass
class BoundInputs:
    """Per-entry quantities the bounds depend on.

    ``norm_a``/``norm_b`` are the centered column norms and ``c_tilde`` the
    centered inner product.
    """

    R: float
    norm_a: float
    norm_b: float
    c_tilde: float
    n: int
    kappa: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("R must be positive")
        if self.norm_a < 0 or self.norm_b < 0:
            raise ValueError("norms must be non-negative")

    @property
    def norm_term(self) -> float:
        return self.norm_a**2 * self.norm_b**2 / self.n


def theorem_bound_two_sided(inp: BoundInputs) -> float:
    """C~^2 Gamma^2 + (|a|^2 |b|^2 / n)(Gamma - Gamma^2)."""
    g = gamma(inp.R)
    return inp.c_tilde**2 * g * g + inp.norm_term * (g - g * g)


def theorem_bound_one_sided(inp: BoundInputs) -> float:
    """C~^2 2^(-4R) + (|a|^2 |b|^2 / n)(2^(-2R) - 2^(-4R))."""
    d = 2.0 ** (-2.0 * inp.R)
    return inp.c_tilde**2 * d * d + inp.norm_term * (d - d * d)


def theorem3_factor(R: float) -> float:
    """(2 * 2^(2R) - 1) / (2^(2R) - 1)^2."""
    s = 2.0 ** (2.0 * R)
    return (2 * s - 1) / (s - 1) ** 2


def theorem3_bound(inp: BoundInputs) -> float:
    """No time sharing, no shrinkage, both sides quantized."""
    return inp.norm_term * theorem3_factor(inp.R)


def theorem3_bound_one_sided(inp: BoundInputs) -> float:
    return inp.norm_term / (2.0 ** (2.0 * inp.R) - 1)


def general_bound_two_sided(inp: BoundInputs) -> float:
    """Bound for arbitrary (kappa, alpha) with both sides quantized."""
    k, a = inp.kappa, inp.alpha
    p = phi(2.0 ** (-2.0 * inp.R / k))
    return inp.c_tilde**2 * (1 - k * a) ** 2 + inp.norm_term * k * a * a * (1 - k + k * p) / (1 - p)


def general_bound_one_sided(inp: BoundInputs) -> float:
    k, a = inp.kappa, inp.alpha
    return inp.c_tilde**2 * (1 - k * a) ** 2 + inp.norm_term * k * a * a * (
        1 - k + 1.0 / (2.0 ** (2.0 * inp.R / k) - 1)
    )


def scalar_quant_prediction(n: int, R: float) -> float:
    """Per-entry factor for l_inf-normalized R-bit scalar quantization."""
    ln = (2.0 / 3.0) * math.log(n)
    s = 2.0 ** (2.0 * R)
    return ln * (2 * s + ln) / (s * s)


def curves(rates) -> np.ndarray:
    """Rows of (R, Gamma(R), Gamma1(R), one-sided 2^(-2R))."""
    R = np.asarray(rates, dtype=float)
    return np.column_stack([R, gamma(R), gamma1(R), gaussian_drf(R)])
