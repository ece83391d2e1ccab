"""Column preprocessing: centering, randomized Hadamard rotation, side information.

Column vectors are stored as rows of 2-D arrays here (shape ``(cols, n)``), so
every transform runs over the last axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def center_column(x):
    """Subtract the mean. Works on the last axis of a batch as well.

    Returns:
        (centered, mean)
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 1:
        raise ValueError("cannot center an empty vector")
    mean = x.mean(axis=-1)
    return x - mean[..., None], mean


def next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def fwht_inplace(x: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along the last axis, in place.

    Uses the Sylvester ordering, so applying it twice multiplies by n.
    """
    n = x.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"length must be a power of two, got {n}")
    if not x.flags.c_contiguous:
        raise ValueError("fwht_inplace needs a C-contiguous array")
    lead = x.shape[:-1]
    h = 1
    while h < n:
        y = x.reshape(lead + (n // (2 * h), 2, h))
        a = y[..., 0, :].copy()
        y[..., 0, :] += y[..., 1, :]
        a -= y[..., 1, :]
        y[..., 1, :] = a
        h *= 2
    return x


@dataclass(frozen=True)
class RotationSpec:
    """Randomized Hadamard rotation S = H diag(T) / sqrt(n_pad).

    The sign vector is a pure function of ``sign_seed``, so both encoders
    reproduce the same rotation.
    """

    n: int
    sign_seed: int = 0

    @property
    def n_pad(self) -> int:
        return next_pow2(self.n)

    def signs(self) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.sign_seed, spawn_key=(0x5157,))))
        return np.where(rng.integers(0, 2, size=self.n_pad) == 1, 1.0, -1.0)


def apply_rht(xbar, spec: RotationSpec, norms=None) -> np.ndarray:
    """Rotate and rescale columns to norm sqrt(n_pad).

    ``xbar`` has shape (..., n). Zero-norm rows map to zero rows; callers
    treat them as the all-zero sentinel.
    """
    xbar = np.asarray(xbar, dtype=float)
    n = xbar.shape[-1]
    if n != spec.n:
        raise ValueError(f"rotation built for n={spec.n}, got {n}")
    if norms is None:
        norms = np.linalg.norm(xbar, axis=-1)
    norms = np.asarray(norms, dtype=float)
    out = np.zeros(xbar.shape[:-1] + (spec.n_pad,))
    out[..., :n] = xbar
    out *= spec.signs()
    fwht_inplace(out)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > 0, 1.0 / norms, 0.0)
    out *= scale[..., None]
    return out


def invert_rht(u, spec: RotationSpec) -> np.ndarray:
    """Inverse of the unit-scaled rotation: diag(T) H u / n_pad, truncated to n."""
    u = np.array(u, dtype=float, order="C")
    fwht_inplace(u)
    u *= spec.signs() / spec.n_pad
    return u[..., : spec.n]


# side information grids

def _check_grid(delta: float, M: float):
    if not (delta > 0 and M > 1):
        raise ValueError("grid needs delta > 0 and M > 1")


def mean_grid_kmax(delta: float, M: float) -> int:
    _check_grid(delta, M)
    return math.floor(M / (2 * delta))


def mean_index(mean, delta: float, M: float) -> np.ndarray:
    """Index k of the nearest grid point k * 2 delta, |k| <= M / (2 delta)."""
    kmax = mean_grid_kmax(delta, M)
    mean = np.asarray(mean, dtype=float)
    if np.any(np.abs(mean) > M):
        raise ValueError("mean outside [-M, M]: entries are not M-bounded")
    return np.clip(np.rint(mean / (2 * delta)), -kmax, kmax).astype(np.int64)


def mean_from_index(k, delta: float) -> np.ndarray:
    return np.asarray(k, dtype=float) * (2 * delta)


def quantize_mean(mean, delta: float, M: float):
    """Nearest point of the grid {k * 2 delta}, |k| <= M / (2 delta)."""
    out = mean_from_index(mean_index(mean, delta, M), delta)
    return float(out) if out.ndim == 0 else out


def norm_grid_size(delta: float, M: float, n: int) -> int:
    """T = ceil(log2(sqrt(n) M^5)) / log2(1 + delta), rounded up."""
    _check_grid(delta, M)
    top = math.ceil(0.5 * math.log2(n) + 5 * math.log2(M))
    return math.ceil(top / math.log2(1 + delta))


def norm_from_index(idx, delta: float, M: float) -> np.ndarray:
    """Index 0 is the zero norm; index k + 1 is M^-4 (1 + delta)^k."""
    idx = np.asarray(idx, dtype=np.int64)
    k = np.maximum(idx - 1, 0).astype(float)
    return np.where(idx > 0, M ** -4.0 * np.exp(k * math.log1p(delta)), 0.0)


def norm_index(norm, delta: float, M: float, n: int) -> np.ndarray:
    """Index of the nearest point of {0} u {M^-4 (1 + delta)^k : k = 0..T}."""
    norm = np.asarray(norm, dtype=float)
    if np.any(norm < 0) or np.any(norm > math.sqrt(n) * M * (1 + 1e-12)):
        raise ValueError("norm outside [0, sqrt(n) M]: entries are not M-bounded")
    T = norm_grid_size(delta, M, n)
    with np.errstate(divide="ignore"):
        kf = np.log(np.maximum(norm, 1e-300) / M ** -4.0) / math.log1p(delta)
    lo = np.clip(np.floor(kf), 0, T).astype(np.int64) + 1
    hi = np.minimum(lo + 1, T + 1)
    cands = np.stack([np.zeros_like(lo), lo, hi])
    vals = norm_from_index(cands, delta, M)
    best = np.argmin(np.abs(vals - norm), axis=0)
    return np.take_along_axis(cands, best[None], axis=0)[0]


def quantize_norm(norm, delta: float, M: float, n: int):
    """Nearest point of {0} u {M^-4 (1 + delta)^k : k = 0..T}."""
    out = norm_from_index(norm_index(norm, delta, M, n), delta, M)
    return float(out) if out.ndim == 0 else out


def side_info_bits(delta: float, M: float, n: int) -> tuple[int, int]:
    """Fixed-width bit cost of a mean index and of a norm index."""
    mean_bits = math.ceil(math.log2(2 * mean_grid_kmax(delta, M) + 1))
    norm_bits = math.ceil(math.log2(norm_grid_size(delta, M, n) + 2))
    return mean_bits, norm_bits
