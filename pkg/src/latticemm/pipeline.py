"""Approximate matrix multiplication from independently quantized factors.

Each column of A (and of B) is centered, normalized, optionally rotated with
a shared randomized Hadamard transform, truncated to its first kappa
fraction of coordinates and quantized block by block with a nested lattice
code. The decoder rebuilds

    C_hat[i, j] = alpha * s_i * s_j * <U_hat_i, V_hat_j> + n * mu_i * mu_j

where s = norm / sqrt(L) undoes the normalization to length-L vectors of
norm sqrt(L).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _kernels
from .lattices import Lattice, get_lattice
from .rotation import (
    RotationSpec,
    apply_rht,
    center_column,
    next_pow2,
    quantize_mean,
    quantize_norm,
    side_info_bits,
)
from .theory import phi
from .voronoi import (
    NestedCode,
    coset_representative,
    coset_to_index,
    empirical_entropy,
    encode_escalating,
    index_to_coset,
)

SIDES = ("A", "B")
ALPHA_MODES = ("none", "two_sided", "one_sided")


class ConfigMismatch(ValueError):
    """Encoded operands were produced under incompatible configurations."""


@dataclass(frozen=True)
class PipelineConfig:
    """Everything both encoders and the decoder must agree on.

    ``alpha_mode`` is one of ``none``, ``two_sided``, ``one_sided`` or a
    number in (0, 1]. ``side_info`` is ``exact`` (float64 mean and norm) or
    ``grid`` (the (M, delta) grids). ``lut`` is ``off``, ``real`` or
    ``int8``.
    """

    lattice: str = "D3"
    q: int = 6
    gamma1: float | None = None
    bank_size: int = 9
    kappa: float = 1.0
    alpha_mode: str | float = "none"
    rotate: bool = True
    center: bool = True
    side_info: str = "exact"
    grid_M: float = 1e6
    grid_delta: float = 1e-9
    dither: bool = True
    shared_dither: bool = True
    seed: int = 0
    lut: str = "off"
    lut_max_entries: int = 1 << 24

    def __post_init__(self):
        if not (0 < self.kappa <= 1):
            raise ValueError("kappa must lie in (0, 1]")
        if isinstance(self.alpha_mode, str):
            if self.alpha_mode not in ALPHA_MODES:
                raise ValueError(f"unknown alpha mode {self.alpha_mode!r}")
        elif not (0 < float(self.alpha_mode) <= 1):
            raise ValueError("explicit alpha must lie in (0, 1]")
        if self.side_info not in ("exact", "grid"):
            raise ValueError(f"unknown side-info mode {self.side_info!r}")
        if self.lut not in ("off", "real", "int8"):
            raise ValueError(f"unknown LUT mode {self.lut!r}")
        if self.lut != "off" and not self.shared_dither:
            raise ValueError("lookup-table decoding needs dithers shared across blocks")
        self.code  # validates lattice name, q and the bank

    @property
    def base_lattice(self) -> Lattice:
        return get_lattice(self.lattice)

    @property
    def code(self) -> NestedCode:
        return NestedCode.build(self.base_lattice, self.q, self.gamma1, self.bank_size)

    @property
    def alpha(self) -> float:
        return mmse_alpha(self.code.rate, self.kappa, self.alpha_mode)

    def work_length(self, n: int) -> int:
        """Length L of the normalized column: n_pad with rotation, else n."""
        return next_pow2(n) if self.rotate else n

    def kept_length(self, n: int) -> int:
        """Leading coordinates that are described, floor(kappa * L) (at least 1)."""
        return max(1, int(math.floor(self.kappa * self.work_length(n) + 1e-9)))

    def n_blocks(self, n: int) -> int:
        """Blocks per column; the last block is zero-padded when d does not divide."""
        return -(-self.kept_length(n) // self.code.dim)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(**d)

    def digest(self) -> bytes:
        """8-byte hash of the canonical JSON form."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).digest()[:8]


def mmse_alpha(R: float, kappa: float = 1.0, mode: str | float = "none") -> float:
    """Shrinkage of the decoded inner product.

    ``two_sided``: 1 - phi(2^(-2R/kappa)); ``one_sided``: 1 - 2^(-2R/kappa).
    """
    if not isinstance(mode, str):
        return float(mode)
    if mode == "none":
        return 1.0
    if R <= 0 or not (0 < kappa <= 1):
        raise ValueError("need R > 0 and kappa in (0, 1]")
    d = 2.0 ** (-2.0 * R / kappa)
    if mode == "two_sided":
        return 1.0 - phi(d)
    if mode == "one_sided":
        return 1.0 - d
    raise ValueError(f"unknown alpha mode {mode!r}")


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def side_dithers(cfg: PipelineConfig, side: str, K: int) -> np.ndarray:
    """Dither for every block of a column, shape (K, d).

    Rows are identical when dithers are shared across blocks, zero when
    dithering is off.
    """
    code = cfg.code
    d = code.dim
    if not cfg.dither:
        return np.zeros((K, d))
    rng = _stream(cfg.seed, SIDES.index(side) + 1, 0xD1)
    lat = code.lattice
    if cfg.shared_dither:
        z = lat.mod(rng.uniform(0.0, lat.tau, size=d))
        return np.broadcast_to(z, (K, d)).copy()
    return lat.mod(rng.uniform(0.0, lat.tau, size=(K, d)))


@dataclass(eq=False)
class EncodedMatrix:
    """Compressed columns of one operand.

    ``codes`` holds base-q block indices (little-endian digits), shape
    (cols, K); ``gamma_index`` is 0-based into the gamma bank.
    """

    config: PipelineConfig
    side: str
    n: int
    means: np.ndarray
    norms: np.ndarray
    gamma_index: np.ndarray
    codes: np.ndarray
    saturated: int = 0
    digest: bytes = field(default=b"")

    def __post_init__(self):
        if not self.digest:
            self.digest = self.config.digest()

    @property
    def cols(self) -> int:
        return len(self.norms)

    @property
    def n_blocks(self) -> int:
        return self.codes.shape[1]

    def gamma_entropy(self) -> float:
        mask = self.norms > 0
        return empirical_entropy(self.gamma_index[mask], len(self.config.code.gamma_bank))

    def side_bits_per_column(self) -> float:
        cfg = self.config
        if cfg.side_info == "exact":
            return 64.0 * (2 if cfg.center else 1)
        mb, nb = side_info_bits(cfg.grid_delta, cfg.grid_M, self.n)
        return float((mb if cfg.center else 0) + nb)

    def rate(self) -> float:
        """Bits per matrix entry with ideal entropy coding of the gamma indices.

        Columns with zero norm cost their side information only.
        """
        code = self.config.code
        K = self.n_blocks
        live = int(np.count_nonzero(self.norms > 0))
        bits = live * K * (code.dim * code.rate + self.gamma_entropy()) + self.cols * self.side_bits_per_column()
        return bits / (self.n * self.cols)

    def betas(self) -> np.ndarray:
        """Per-block fine-lattice scale, shape (cols, K)."""
        return self.config.code.betas[self.gamma_index]


def _describe_columns(X: np.ndarray, cfg: PipelineConfig):
    """Center, quantize side info, normalize and rotate rows of X (cols, n).

    Returned rows have norm sqrt(L) (zero rows stay zero).
    """
    cols, n = X.shape
    if cfg.center:
        Xbar, mean = center_column(X)
    else:
        Xbar, mean = X, np.zeros(cols)
    norm = np.linalg.norm(Xbar, axis=1)
    if cfg.side_info == "grid":
        mean_hat = quantize_mean(mean, cfg.grid_delta, cfg.grid_M) if cfg.center else mean
        norm_hat = quantize_norm(norm, cfg.grid_delta, cfg.grid_M, n)
    else:
        mean_hat, norm_hat = mean, norm
    if cfg.rotate:
        U = apply_rht(Xbar, RotationSpec(n, cfg.seed), norm)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            U = Xbar * np.where(norm > 0, math.sqrt(n) / norm, 0.0)[:, None]
    return np.atleast_1d(mean_hat), np.atleast_1d(norm_hat), U


def _to_blocks(U: np.ndarray, cfg: PipelineConfig, n: int) -> np.ndarray:
    """First kept_length coordinates of each row, zero-padded into (rows, K, d)."""
    d = cfg.code.dim
    K = cfg.n_blocks(n)
    m = cfg.kept_length(n)
    out = np.zeros((U.shape[0], K * d))
    out[:, :m] = U[:, :m]
    return out.reshape(-1, K, d)


def encode_matrix(A, cfg: PipelineConfig, side: str = "A", chunk: int = 256) -> EncodedMatrix:
    """Quantize every column of the n x a matrix ``A``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if side not in SIDES:
        raise ValueError(f"side must be 'A' or 'B', got {side!r}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    n, cols = A.shape
    code = cfg.code
    K = cfg.n_blocks(n)
    z = side_dithers(cfg, side, K)
    means = np.zeros(cols)
    norms = np.zeros(cols)
    gidx = np.zeros((cols, K), dtype=np.uint8)
    codes = np.zeros((cols, K), dtype=np.int64)
    saturated = 0
    for start in range(0, cols, chunk):
        sl = slice(start, min(cols, start + chunk))
        mean_hat, norm_hat, U = _describe_columns(A[:, sl].T, cfg)
        means[sl] = mean_hat
        norms[sl] = norm_hat
        blocks = _to_blocks(U, cfg, n)
        coset, idx, sat = encode_escalating(code, blocks, z)
        live = norm_hat > 0
        idx[~live] = 0
        coset[~live] = 0
        sat[~live] = False
        gidx[sl] = idx
        codes[sl] = coset_to_index(coset, code.q)
        saturated += int(sat.sum())
    return EncodedMatrix(cfg, side, n, means, norms, gidx, codes, saturated)


def _check_pair(encA: EncodedMatrix, encB: EncodedMatrix, cfg: PipelineConfig):
    if encA.digest != cfg.digest() or encB.digest != cfg.digest():
        raise ConfigMismatch("operands were encoded under a different configuration")
    if encA.n != encB.n:
        raise ConfigMismatch(f"inner dimensions differ: {encA.n} vs {encB.n}")
    if encA.side != "A" or encB.side != "B":
        raise ConfigMismatch("expected an A-side and a B-side encoding")


def _decoded_blocks(enc: EncodedMatrix) -> np.ndarray:
    """Coset representatives at beta = 1, shape (cols, K, d)."""
    cfg = enc.config
    code = cfg.code
    z = side_dithers(cfg, enc.side, enc.n_blocks)
    digits = index_to_coset(enc.codes, code.q, code.dim)
    return coset_representative(code.lattice, code.q, digits, z)


def decode_vectors(enc: EncodedMatrix) -> np.ndarray:
    """Reconstructed normalized columns U_hat (cols, K*d), beta folded in."""
    blocks = _decoded_blocks(enc) * enc.betas()[..., None]
    return blocks.reshape(enc.cols, -1)


def _finish(G: np.ndarray, encA: EncodedMatrix, sa: np.ndarray, sb: np.ndarray, mb: np.ndarray,
            alpha: float) -> np.ndarray:
    C = alpha * G
    C *= sa[:, None]
    C *= sb[None, :]
    C += encA.n * np.outer(encA.means, mb)
    return C


def _scales(enc: EncodedMatrix) -> np.ndarray:
    return enc.norms / math.sqrt(enc.config.work_length(enc.n))


def decode_matmul(encA: EncodedMatrix, encB: EncodedMatrix, cfg: PipelineConfig,
                  method: str = "kahan") -> np.ndarray:
    """Estimate A^T B from both encodings.

    ``method='kahan'`` reduces each entry over blocks in a fixed order with
    compensated summation; ``'blas'`` uses one float64 matrix product (faster,
    order set by the BLAS library).
    """
    _check_pair(encA, encB, cfg)
    alpha = cfg.alpha
    if method == "blas":
        G = decode_vectors(encA) @ decode_vectors(encB).T
    elif method == "kahan":
        if _integer_path_ok(encA, encB):
            G = _integer_gram(encA, encB)
        else:
            xa = _decoded_blocks(encA)
            yb = np.ascontiguousarray(_decoded_blocks(encB).transpose(1, 2, 0))
            G = np.empty((encA.cols, encB.cols))
            _kernels.gram_direct(xa, encA.betas(), yb, np.ascontiguousarray(encB.betas().T), G)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _finish(G, encA, _scales(encA), _scales(encB), encB.means, alpha)


def _integer_path_ok(encA: EncodedMatrix, encB: EncodedMatrix) -> bool:
    cfg = encA.config
    if cfg.dither or not cfg.code.lattice.is_integral:
        return False
    ga = encA.gamma_index[encA.norms > 0]
    gb = encB.gamma_index[encB.norms > 0]
    return bool(np.all(ga == 0) and np.all(gb == 0))


def _integer_gram(encA: EncodedMatrix, encB: EncodedMatrix) -> np.ndarray:
    """Undithered, single-scale case: exact int32 inner products of lattice points."""
    xa = np.rint(_decoded_blocks(encA)).astype(np.int32)
    yb = np.ascontiguousarray(np.rint(_decoded_blocks(encB)).astype(np.int32).transpose(1, 2, 0))
    G = np.empty((encA.cols, encB.cols), dtype=np.int32)
    _kernels.gram_int(xa, yb, G)
    beta = encA.config.code.betas[0]
    return G.astype(float) * (beta * beta)


@dataclass(eq=False)
class InnerProductLUT:
    """Inner products between all decoded codewords of the two sides at beta = 1."""

    table: np.ndarray
    q: int
    dim: int
    mode: str
    clamped: int
    z1: np.ndarray
    z2: np.ndarray

    @property
    def size(self) -> int:
        return self.table.size

    @property
    def nbytes(self) -> int:
        return self.table.nbytes


def build_lut(lat: Lattice, q: int, z1, z2, mode: str = "real", max_entries: int = 1 << 24) -> InnerProductLUT:
    """Tabulate <decode(u; z1), decode(v; z2)> for every pair of block indices."""
    if mode not in ("real", "int8"):
        raise ValueError(f"unknown LUT mode {mode!r}")
    d = lat.dim
    entries = q ** (2 * d)
    if entries > max_entries:
        raise MemoryError(f"LUT needs {entries} entries, budget is {max_entries}")
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    digits = index_to_coset(np.arange(q**d), q, d)
    c1 = coset_representative(lat, q, digits, z1)
    c2 = coset_representative(lat, q, digits, z2)
    table = _kernels.lut_entries(c1, c2)
    clamped = 0
    if mode == "int8":
        r = np.rint(table)
        clamped = int(np.count_nonzero((r < -128) | (r > 127)))
        table = np.clip(r, -128, 127).astype(np.int8)
    return InnerProductLUT(table, q, d, mode, clamped, z1, z2)


def lut_for(cfg: PipelineConfig, mode: str | None = None) -> InnerProductLUT:
    """The table matching a configuration's shared dithers."""
    if not cfg.shared_dither:
        raise ValueError("lookup-table decoding needs dithers shared across blocks")
    code = cfg.code
    z1 = side_dithers(cfg, "A", 1)[0]
    z2 = side_dithers(cfg, "B", 1)[0]
    mode = mode or (cfg.lut if cfg.lut != "off" else "real")
    return build_lut(code.lattice, code.q, z1, z2, mode, cfg.lut_max_entries)


def decode_matmul_lut(encA: EncodedMatrix, encB: EncodedMatrix, lut: InnerProductLUT,
                      cfg: PipelineConfig) -> np.ndarray:
    """Same estimate as :func:`decode_matmul`, fetching block inner products from ``lut``."""
    _check_pair(encA, encB, cfg)
    code = cfg.code
    if lut.q != code.q or lut.dim != code.dim:
        raise ConfigMismatch("LUT was built for a different code")
    za = side_dithers(cfg, "A", 1)[0]
    zb = side_dithers(cfg, "B", 1)[0]
    if not cfg.shared_dither or not (np.array_equal(za, lut.z1) and np.array_equal(zb, lut.z2)):
        raise ConfigMismatch("LUT dithers do not match the encodings")
    G = np.empty((encA.cols, encB.cols))
    _kernels.gram_lut(
        encA.codes,
        encA.betas(),
        np.ascontiguousarray(encB.codes.T),
        np.ascontiguousarray(encB.betas().T),
        lut.table,
        G,
    )
    return _finish(G, encA, _scales(encA), _scales(encB), encB.means, cfg.alpha)


def one_sided_matmul(encA: EncodedMatrix, B, cfg: PipelineConfig) -> np.ndarray:
    """Estimate A^T B when B is available uncompressed."""
    if encA.digest != cfg.digest():
        raise ConfigMismatch("A was encoded under a different configuration")
    B = np.asarray(B, dtype=float)
    if B.shape[0] != encA.n:
        raise ConfigMismatch(f"inner dimensions differ: {encA.n} vs {B.shape[0]}")
    exact = replace(cfg, side_info="exact")
    mean_b, norm_b, V = _describe_columns(B.T, exact)
    K = encA.n_blocks
    yb = np.ascontiguousarray(_to_blocks(V, cfg, encA.n).transpose(1, 2, 0))
    xa = _decoded_blocks(encA)
    G = np.empty((encA.cols, B.shape[1]))
    _kernels.gram_direct(xa, encA.betas(), yb, np.ones((K, B.shape[1])), G)
    sb = norm_b / math.sqrt(cfg.work_length(encA.n))
    return _finish(G, encA, _scales(encA), sb, mean_b, cfg.alpha)
