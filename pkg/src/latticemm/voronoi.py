"""Self-similar nested lattice (Voronoi) codes.

The fine lattice is ``beta * L`` and the coarse lattice is ``q * beta * L``
for a base lattice ``L``. A block ``x`` is described by the coset of its
dithered quantization modulo the coarse lattice, i.e. by ``d`` base-``q``
digits. The scale ``beta`` is picked from a bank of gamma values: the
encoder walks up the bank until the modulo reduction is inactive.

Every function here is vectorized over leading axes: ``x`` may have shape
``(..., d)`` and ``beta`` broadcasts against ``x[..., 0]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lattices import Lattice, gamma1_rule_of_thumb

DEFAULT_BANK_SIZE = 9


def beta_from_gamma(gamma, R: float, sigma2: float):
    """Fine-lattice scale giving distortion gamma / (2^(2R) - 1)."""
    gamma = np.asarray(gamma, dtype=float)
    if R <= 0 or sigma2 <= 0 or np.any(gamma <= 0):
        raise ValueError("gamma, R and sigma2 must be positive")
    out = np.sqrt(gamma / (2.0 ** (2 * R) - 1.0) / sigma2)
    return float(out) if out.ndim == 0 else out


def default_gamma1(lat: Lattice) -> float:
    """Rule-of-thumb gamma_1 rounded up to one decimal (0.7 for D3)."""
    return math.ceil(gamma1_rule_of_thumb(lat) * 10 - 1e-9) / 10


@dataclass(frozen=True, eq=False)
class NestedCode:
    """Nested pair (q*beta*L, beta*L) with a bank of gamma values."""

    lattice: Lattice
    q: int
    gamma_bank: tuple

    def __post_init__(self):
        q = self.q
        if isinstance(q, bool) or int(q) != q or q < 2:
            raise ValueError(f"nesting ratio must be an integer >= 2, got {q!r}")
        object.__setattr__(self, "q", int(q))
        bank = tuple(float(g) for g in self.gamma_bank)
        if not bank:
            raise ValueError("gamma bank is empty")
        if any(g <= 0 for g in bank) or any(b <= a for a, b in zip(bank, bank[1:])):
            raise ValueError("gamma bank must be positive and strictly increasing")
        if len(bank) > 16:
            raise ValueError("gamma bank indices are stored in 4 bits (at most 16 entries)")
        object.__setattr__(self, "gamma_bank", bank)

    @classmethod
    def build(cls, lattice: Lattice, q: int, gamma1: float | None = None,
              bank_size: int = DEFAULT_BANK_SIZE) -> "NestedCode":
        """Bank gamma_i = i * gamma_1 for i = 1..bank_size."""
        g1 = default_gamma1(lattice) if gamma1 is None else float(gamma1)
        return cls(lattice, q, tuple(i * g1 for i in range(1, bank_size + 1)))

    @property
    def dim(self) -> int:
        return self.lattice.dim

    @property
    def rate(self) -> float:
        """Nominal rate log2(q) in bits per dimension."""
        return math.log2(self.q)

    @property
    def betas(self) -> np.ndarray:
        return beta_from_gamma(np.array(self.gamma_bank), self.rate, self.lattice.sigma2)

    @property
    def n_codewords(self) -> int:
        return self.q**self.dim


def encode_block(lat: Lattice, q: int, x, beta, z):
    """Voronoi-code encoder for blocks of shape (..., d).

    Returns:
        coset digits in [0, q) of shape (..., d) and a boolean overload
        flag per block.
    """
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=float)[..., None]
    t = lat.nearest_point(x / beta + z)
    y = lat.to_integer_coords(t)
    coset = np.mod(y, q)
    lam_c = lat.nearest_point((t - z) / q)
    overload = np.any(lam_c != 0, axis=-1)
    return coset, overload


def coset_representative(lat: Lattice, q: int, coset, z) -> np.ndarray:
    """Decoder output at beta = 1: [G c - z] mod qL.

    Computed as (G c - q Q((G c - z) / q)) - z: the lattice point is exact in
    floating point, so the result matches Q(x / beta + z) - z bit for bit.
    """
    p = lat.from_integer_coords(coset)
    p = p - q * lat.nearest_point((p - z) / q)
    return p - z


def decode_block(lat: Lattice, q: int, coset, beta, z) -> np.ndarray:
    """Voronoi-code decoder; inverse of :func:`encode_block` when no overload."""
    beta = np.asarray(beta, dtype=float)[..., None]
    return beta * coset_representative(lat, q, coset, z)


def encode_escalating(code: NestedCode, x, z):
    """Encode with the smallest gamma in the bank that avoids overload.

    Blocks that overload for every gamma keep the encoding at the largest
    gamma and are flagged as saturated.

    Returns:
        (coset digits, gamma index in [0, M), saturated flags)
    """
    lat = code.lattice
    x = np.asarray(x, dtype=float)
    z = np.broadcast_to(np.asarray(z, dtype=float), x.shape)
    lead = x.shape[:-1]
    xs = x.reshape(-1, lat.dim)
    zs = z.reshape(-1, lat.dim)
    coset = np.zeros(xs.shape, dtype=np.int64)
    index = np.zeros(xs.shape[0], dtype=np.uint8)
    saturated = np.zeros(xs.shape[0], dtype=bool)
    pending = np.arange(xs.shape[0])
    last = len(code.gamma_bank) - 1
    for i, beta in enumerate(code.betas):
        if pending.size == 0:
            break
        c, ovl = encode_block(lat, code.q, xs[pending], beta, zs[pending])
        keep = np.ones_like(ovl) if i == last else ~ovl
        coset[pending[keep]] = c[keep]
        index[pending[keep]] = i
        if i == last:
            saturated[pending[ovl]] = True
        pending = pending[~keep]
    return coset.reshape(lead + (lat.dim,)), index.reshape(lead), saturated.reshape(lead)


def coset_to_index(coset, q: int) -> np.ndarray:
    """Little-endian base-q value of the digits along the last axis."""
    coset = np.asarray(coset, dtype=np.int64)
    weights = q ** np.arange(coset.shape[-1], dtype=np.int64)
    return coset @ weights


def index_to_coset(index, q: int, d: int) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    weights = q ** np.arange(d, dtype=np.int64)
    return (index[..., None] // weights) % q


def pack_bits(values, width: int) -> bytes:
    """Pack non-negative integers < 2^width as a little-endian bit stream."""
    values = np.asarray(values, dtype=np.uint64).ravel()
    if width == 0 or values.size == 0:
        return b""
    if width < 64 and np.any(values >> np.uint64(width)):
        raise ValueError(f"value does not fit in {width} bits")
    shifts = np.arange(width, dtype=np.uint64)
    bits = ((values[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits.ravel(), bitorder="little").tobytes()


def unpack_bits(data: bytes, width: int, count: int) -> np.ndarray:
    if count == 0 or width == 0:
        return np.zeros(count, dtype=np.int64)
    nbytes = (width * count + 7) // 8
    if len(data) < nbytes:
        raise ValueError("truncated bit stream")
    bits = np.unpackbits(np.frombuffer(data[:nbytes], dtype=np.uint8), bitorder="little")
    bits = bits[: width * count].reshape(count, width).astype(np.uint64)
    return (bits << np.arange(width, dtype=np.uint64)).sum(axis=1).astype(np.int64)


def empirical_entropy(labels: Sequence[int] | np.ndarray, alphabet: int | None = None) -> float:
    """Plug-in entropy in bits of a sample of integer labels."""
    labels = np.asarray(labels).ravel()
    if labels.size == 0:
        return 0.0
    counts = np.bincount(labels.astype(np.int64), minlength=alphabet or 0)
    p = counts[counts > 0] / labels.size
    return float(-(p * np.log2(p)).sum())
