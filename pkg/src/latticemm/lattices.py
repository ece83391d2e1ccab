"""Base lattices with exact nearest-point quantizers.

Supported families are the integer lattice Z^n, the checkerboard lattice D_n
(integer vectors with even coordinate sum) and E_8 = D_8 u (D_8 + 1/2).
All quantizers operate on the last axis of an array, so a batch of blocks of
shape ``(..., d)`` is quantized in one call.

Ties are resolved towards the lexicographically smallest lattice point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

KINDS = ("Z", "D", "E8")


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def _round_half_down(x: np.ndarray) -> np.ndarray:
    # x.5 goes to x, which is the lexicographically smaller of the two ties
    return np.ceil(x - 0.5)


def _nearest_zn(x: np.ndarray) -> np.ndarray:
    return _round_half_down(x)


def _nearest_dn(x: np.ndarray) -> np.ndarray:
    """Round every coordinate, then fix an odd sum by re-rounding one coordinate.

    The coordinate that gets re-rounded is the one with the largest rounding
    error. Among equal errors the lexicographic rule picks the lowest index
    that can move down, otherwise the highest index (all candidates move up).
    """
    f = _round_half_down(x)
    odd = (f.sum(axis=-1) % 2) != 0
    if not np.any(odd):
        return f
    xo = x[odd]
    fo = f[odd]
    err = xo - fo
    mag = np.abs(err)
    worst = mag.max(axis=-1, keepdims=True)
    cand = mag == worst
    # a zero error allows moving either way, so it counts as a downward move
    down = cand & (err <= 0)
    d = x.shape[-1]
    idx = np.arange(d)
    first_down = np.where(down, idx, d).min(axis=-1)
    last_up = np.where(cand, idx, -1).max(axis=-1)
    has_down = first_down < d
    pick = np.where(has_down, first_down, last_up)
    rows = np.arange(len(pick))
    step = np.where(has_down, -1.0, 1.0)
    fo[rows, pick] += step
    f[odd] = fo
    return f


def _lex_less(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise lexicographic a < b along the last axis."""
    diff = a != b
    first = np.argmax(diff, axis=-1)
    any_diff = diff.any(axis=-1)
    av = np.take_along_axis(a, first[..., None], axis=-1)[..., 0]
    bv = np.take_along_axis(b, first[..., None], axis=-1)[..., 0]
    return any_diff & (av < bv)


def _nearest_e8(x: np.ndarray) -> np.ndarray:
    y0 = _nearest_dn(x)
    y1 = _nearest_dn(x - 0.5) + 0.5
    d0 = np.sum((x - y0) ** 2, axis=-1)
    d1 = np.sum((x - y1) ** 2, axis=-1)
    take1 = (d1 < d0) | ((d1 == d0) & _lex_less(y1, y0))
    return np.where(take1[..., None], y1, y0)


def _dn_generator(d: int) -> np.ndarray:
    # columns: (-1,-1,0,..), (1,-1,0,..), (0,1,-1,..), ...
    G = np.zeros((d, d))
    G[0, 0] = -1.0
    G[1, 0] = -1.0
    for j in range(1, d):
        G[j - 1, j] = 1.0
        G[j, j] = -1.0
    return G


def _e8_generator() -> np.ndarray:
    G = np.zeros((8, 8))
    G[0, 0] = 2.0
    for j in range(1, 7):
        G[j - 1, j] = -1.0
        G[j, j] = 1.0
    G[:, 7] = 0.5
    return G


@dataclass(frozen=True, eq=False)
class Lattice:
    """A full-rank lattice G Z^d with a fast nearest-point rule.

    ``sigma2`` is the per-dimension second moment of the Voronoi cell,
    ``tau`` satisfies tau * Z^d subset of the lattice, and ``r_cov`` is the
    covering radius.
    """

    kind: str
    dim: int
    generator: np.ndarray
    sigma2: float
    tau: float
    r_cov: float
    gen_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        G = np.asarray(self.generator, dtype=float)
        G.setflags(write=False)
        inv = np.linalg.inv(G)
        inv.setflags(write=False)
        object.__setattr__(self, "generator", G)
        object.__setattr__(self, "gen_inv", inv)

    @property
    def name(self) -> str:
        return "E8" if self.kind == "E8" else f"{self.kind}{self.dim}"

    @property
    def covol(self) -> float:
        return abs(float(np.linalg.det(self.generator)))

    @property
    def r_eff(self) -> float:
        return (self.covol / unit_ball_volume(self.dim)) ** (1.0 / self.dim)

    @property
    def nsm(self) -> float:
        """Normalized second moment sigma2 / covol^(2/d)."""
        return self.sigma2 / self.covol ** (2.0 / self.dim)

    @property
    def is_integral(self) -> bool:
        return self.kind in ("Z", "D")

    def nearest_point(self, x) -> np.ndarray:
        """Closest lattice point to each d-vector along the last axis."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ValueError(f"expected trailing dimension {self.dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("nearest_point requires finite input")
        batch = x.reshape(-1, self.dim)
        if self.kind == "Z":
            out = _nearest_zn(batch)
        elif self.kind == "D":
            out = _nearest_dn(batch)
        else:
            out = _nearest_e8(batch)
        return out.reshape(x.shape) + 0.0

    def mod(self, x) -> np.ndarray:
        """Reduce x into the Voronoi cell: x - Q(x)."""
        x = np.asarray(x, dtype=float)
        return x - self.nearest_point(x)

    def to_integer_coords(self, points) -> np.ndarray:
        """G^{-1} p for lattice points p, rounded to exact integers."""
        pts = np.asarray(points, dtype=float)
        return np.rint(pts @ self.gen_inv.T).astype(np.int64)

    def from_integer_coords(self, coords) -> np.ndarray:
        return np.asarray(coords, dtype=float) @ self.generator.T

    def __repr__(self):
        return f"Lattice({self.name})"


def zn(d: int = 1) -> Lattice:
    return Lattice("Z", d, np.eye(d), sigma2=1.0 / 12.0, tau=1.0, r_cov=math.sqrt(d) / 2)


def dn(d: int = 3) -> Lattice:
    if d < 2:
        raise ValueError("D_n needs n >= 2")
    # second moments of D_3 and D_4 are closed forms; others are not shipped
    sigma2 = {3: 3.0 / 24.0, 4: 13.0 / 120.0}.get(d)
    if sigma2 is None:
        raise ValueError(f"no stored second moment for D_{d}")
    return Lattice("D", d, _dn_generator(d), sigma2=sigma2, tau=2.0, r_cov=max(1.0, math.sqrt(d) / 2))


def e8() -> Lattice:
    return Lattice("E8", 8, _e8_generator(), sigma2=929.0 / 12960.0, tau=2.0, r_cov=1.0)


def get_lattice(name: str) -> Lattice:
    """Look up a lattice by name: ``Z1``..``Z8``, ``D3``, ``D4`` or ``E8``."""
    key = name.strip().upper()
    if key == "E8":
        return e8()
    if key[:1] == "Z" and key[1:].isdigit():
        return zn(int(key[1:]))
    if key[:1] == "D" and key[1:].isdigit():
        return dn(int(key[1:]))
    raise ValueError(f"unknown lattice {name!r}")


def draw_dither(lat: Lattice, rng: np.random.Generator, size=None) -> np.ndarray:
    """Uniform sample from the Voronoi cell: U - Q(U) with U ~ Uniform[0, tau)^d."""
    shape = (lat.dim,) if size is None else tuple(np.atleast_1d(size)) + (lat.dim,)
    u = rng.uniform(0.0, lat.tau, size=shape)
    return u - lat.nearest_point(u)


def second_moment_mc(lat: Lattice, samples: int, seed: int = 0, chunk: int = 1 << 20):
    """Monte Carlo estimate of sigma^2 with its standard error.

    Returns:
        (estimate, standard_error)
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    total = 0.0
    total_sq = 0.0
    left = samples
    while left > 0:
        m = min(chunk, left)
        z = draw_dither(lat, rng, m)
        v = np.sum(z * z, axis=-1) / lat.dim
        total += float(v.sum())
        total_sq += float(np.dot(v, v))
        left -= m
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    se = math.sqrt(var / samples) if samples > 1 else float("inf")
    return mean, se


def gamma1_rule_of_thumb(lat: Lattice) -> float:
    """Smallest sensible first entry of the gamma bank, d * sigma2 / r_eff^2."""
    return lat.dim * lat.sigma2 / lat.r_eff**2
