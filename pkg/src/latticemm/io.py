"""On-disk formats: dense matrices, encoded matrices, lookup tables, config files.

Matrix file (``.mat``)::

    rows   u64 LE
    cols   u64 LE
    data   rows*cols f64 LE, row-major

Encoded matrix file (``.nlq``), all integers little-endian::

    header
      magic     4 bytes   b"NLQM"
      version   u16       (1)
      side      1 byte    b"A" or b"B"
      reserved  1 byte    0
      digest    8 bytes   first 8 bytes of sha256(config JSON)
      cfg_len   u32
      cfg       cfg_len bytes, UTF-8 JSON of the pipeline config, sorted keys
      n         u64       inner dimension
      cols      u64
      K         u64       blocks per column
      saturated u64       blocks that overloaded at every gamma
      B         u8        gamma bank size
      freqs     B x u32   quantized gamma frequencies, summing to 2^24
                          (all zero when no column is live)
      n_words   u64       length of the coder stream in 16-bit words
      crc       u32       CRC-32 (zlib) of the payload bytes
    payload
      side info
        exact mode: means (cols x f64, only when centering), norms (cols x f64)
        grid mode:  one little-endian bit stream, padded to a byte, holding
                    the mean indices k + kmax (only when centering) then the
                    norm indices, at the fixed widths of ``side_info_bits``
      stream    n_words x u16, rANS words (see ``latticemm._rans``) coding,
                for every column with nonzero norm and every block in order,
                the gamma index followed by the d base-q coset digits

Columns with zero norm carry side information only and decode to zero.

Lookup tables are stored with ``numpy.save`` together with their dithers.
"""

from __future__ import annotations

import io as _io
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from . import _rans
from .pipeline import EncodedMatrix, InnerProductLUT, PipelineConfig
from .rotation import mean_from_index, mean_grid_kmax, mean_index, norm_from_index, norm_index, side_info_bits
from .voronoi import coset_to_index, index_to_coset, pack_bits, unpack_bits

MAGIC = b"NLQM"
VERSION = 1


class FormatError(ValueError):
    pass


def write_matrix(path, M) -> None:
    M = np.ascontiguousarray(M, dtype="<f8")
    if M.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    with open(path, "wb") as f:
        f.write(struct.pack("<QQ", *M.shape))
        f.write(M.tobytes())


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    if path.suffix in (".txt", ".csv"):
        return np.atleast_2d(np.loadtxt(path, delimiter="," if path.suffix == ".csv" else None))
    data = path.read_bytes()
    if len(data) < 16:
        raise FormatError("matrix file shorter than its header")
    rows, cols = struct.unpack_from("<QQ", data)
    if len(data) != 16 + 8 * rows * cols:
        raise FormatError(f"matrix file size does not match {rows}x{cols}")
    return np.frombuffer(data, dtype="<f8", offset=16).reshape(rows, cols).astype(float)


def _side_info_bytes(enc: EncodedMatrix) -> bytes:
    cfg = enc.config
    if cfg.side_info == "exact":
        parts = [np.asarray(enc.means, dtype="<f8").tobytes()] if cfg.center else []
        parts.append(np.asarray(enc.norms, dtype="<f8").tobytes())
        return b"".join(parts)
    mb, nb = side_info_bits(cfg.grid_delta, cfg.grid_M, enc.n)
    bits = []
    if cfg.center:
        k = mean_index(enc.means, cfg.grid_delta, cfg.grid_M) + mean_grid_kmax(cfg.grid_delta, cfg.grid_M)
        bits.append(_bit_array(k, mb))
    bits.append(_bit_array(norm_index(enc.norms, cfg.grid_delta, cfg.grid_M, enc.n), nb))
    return np.packbits(np.concatenate(bits), bitorder="little").tobytes()


def _bit_array(values, width: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(pack_bits(values, width), dtype=np.uint8), bitorder="little")[
        : width * len(values)
    ]


def _side_info_size(cfg: PipelineConfig, n: int, cols: int) -> int:
    if cfg.side_info == "exact":
        return 8 * cols * (2 if cfg.center else 1)
    mb, nb = side_info_bits(cfg.grid_delta, cfg.grid_M, n)
    return (cols * ((mb if cfg.center else 0) + nb) + 7) // 8


def _read_side_info(data: bytes, cfg: PipelineConfig, n: int, cols: int):
    if cfg.side_info == "exact":
        vals = np.frombuffer(data, dtype="<f8").astype(float)
        if cfg.center:
            return vals[:cols].copy(), vals[cols:].copy()
        return np.zeros(cols), vals.copy()
    mb, nb = side_info_bits(cfg.grid_delta, cfg.grid_M, n)
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    means = np.zeros(cols)
    if cfg.center:
        k = unpack_bits(np.packbits(bits[: mb * cols], bitorder="little").tobytes(), mb, cols)
        means = mean_from_index(k - mean_grid_kmax(cfg.grid_delta, cfg.grid_M), cfg.grid_delta)
        bits = bits[mb * cols :]
    idx = unpack_bits(np.packbits(bits[: nb * cols], bitorder="little").tobytes(), nb, cols)
    return means, norm_from_index(idx, cfg.grid_delta, cfg.grid_M)


def _stream(enc: EncodedMatrix) -> tuple[np.ndarray, np.ndarray]:
    """(frequency table, rANS words) for the live columns of ``enc``."""
    code = enc.config.code
    live = enc.norms > 0
    gammas = enc.gamma_index[live].ravel()
    freqs = _rans.quantize_frequencies(np.bincount(gammas, minlength=len(code.gamma_bank)))
    digits = index_to_coset(enc.codes[live].ravel(), code.q, code.dim)
    words = _rans.encode_stream(gammas, digits.reshape(-1, code.dim), freqs, code.q)
    return freqs, words


def dumps_encoded(enc: EncodedMatrix) -> bytes:
    cfg = enc.config
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    freqs, words = _stream(enc)
    out = _io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<H", VERSION))
    out.write(enc.side.encode("ascii"))
    out.write(b"\x00")
    out.write(enc.digest)
    out.write(struct.pack("<I", len(blob)))
    out.write(blob)
    out.write(struct.pack("<QQQQ", enc.n, enc.cols, enc.n_blocks, enc.saturated))
    out.write(struct.pack("<B", len(freqs)))
    out.write(np.asarray(freqs, dtype="<u4").tobytes())
    payload = _side_info_bytes(enc) + np.asarray(words, dtype="<u2").tobytes()
    out.write(struct.pack("<QI", len(words), zlib.crc32(payload)))
    out.write(payload)
    return out.getvalue()


def _header(buf: memoryview):
    """Parse the header; returns (fields dict, offset of the payload)."""
    if len(buf) < 4 or bytes(buf[:4]) != MAGIC:
        raise FormatError("bad magic bytes: not an encoded matrix")
    if len(buf) < 20:
        raise FormatError("truncated header")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    side = bytes(buf[6:7]).decode("ascii", errors="replace")
    if side not in ("A", "B"):
        raise FormatError(f"bad side byte {side!r}")
    digest = bytes(buf[8:16])
    (cfg_len,) = struct.unpack_from("<I", buf, 16)
    pos = 20
    if len(buf) < pos + cfg_len + 33:
        raise FormatError("truncated header")
    try:
        cfg = PipelineConfig.from_dict(json.loads(bytes(buf[pos : pos + cfg_len]).decode()))
    except (ValueError, TypeError) as err:
        raise FormatError(f"unreadable config block: {err}") from err
    if cfg.digest() != digest:
        raise FormatError("config digest does not match the config block")
    pos += cfg_len
    n, cols, K, saturated = struct.unpack_from("<QQQQ", buf, pos)
    pos += 32
    (B,) = struct.unpack_from("<B", buf, pos)
    pos += 1
    if len(buf) < pos + 4 * B + 12:
        raise FormatError("truncated header")
    freqs = np.frombuffer(buf, dtype="<u4", count=B, offset=pos).astype(np.int64)
    pos += 4 * B
    n_words, crc = struct.unpack_from("<QI", buf, pos)
    pos += 12
    if B != len(cfg.code.gamma_bank) or K != cfg.n_blocks(n):
        raise FormatError("header does not match its config")
    fields = dict(cfg=cfg, side=side, digest=digest, n=n, cols=cols, K=K, saturated=saturated,
                  freqs=freqs, n_words=n_words, crc=crc)
    return fields, pos


def loads_encoded(data: bytes) -> EncodedMatrix:
    buf = memoryview(data)
    h, pos = _header(buf)
    cfg, n, cols, K = h["cfg"], h["n"], h["cols"], h["K"]
    code = cfg.code
    side_len = _side_info_size(cfg, n, cols)
    if len(buf) != pos + side_len + 2 * h["n_words"]:
        if len(buf) < pos + side_len + 2 * h["n_words"]:
            raise FormatError("truncated payload")
        raise FormatError("trailing bytes after the payload")
    if zlib.crc32(buf[pos:]) != h["crc"]:
        raise FormatError("payload checksum mismatch")
    means, norms = _read_side_info(bytes(buf[pos : pos + side_len]), cfg, n, cols)
    pos += side_len
    words = np.frombuffer(buf, dtype="<u2", count=h["n_words"], offset=pos)
    live = norms > 0
    n_live = int(live.sum())
    try:
        g, digits = _rans.decode_stream(words, n_live * K, code.dim, h["freqs"], code.q)
    except ValueError as err:
        raise FormatError(str(err)) from err
    gidx = np.zeros((cols, K), dtype=np.uint8)
    codes = np.zeros((cols, K), dtype=np.int64)
    gidx[live] = g.reshape(n_live, K)
    codes[live] = coset_to_index(digits, code.q).reshape(n_live, K)
    return EncodedMatrix(cfg, h["side"], int(n), means, norms, gidx, codes, int(h["saturated"]), h["digest"])


def save_encoded(path, enc: EncodedMatrix) -> int:
    """Write ``enc``; returns the number of bytes written."""
    data = dumps_encoded(enc)
    Path(path).write_bytes(data)
    return len(data)


def load_encoded(path) -> EncodedMatrix:
    return loads_encoded(Path(path).read_bytes())


def payload_bits(enc: EncodedMatrix) -> int:
    """Bits of per-entry content: side information plus the coder stream."""
    _, words = _stream(enc)
    return 8 * _side_info_size(enc.config, enc.n, enc.cols) + 16 * len(words)


def payload_rate_from_file(path) -> float:
    """Payload bits per matrix entry, measured from a saved file."""
    data = Path(path).read_bytes()
    h, pos = _header(memoryview(data))
    return 8.0 * (len(data) - pos) / (h["n"] * h["cols"])


def save_lut(path, lut: InnerProductLUT) -> None:
    with open(path, "wb") as f:
        np.save(f, lut.table)
        np.save(f, np.array([lut.q, lut.dim, lut.clamped]))
        np.save(f, np.asarray(lut.z1))
        np.save(f, np.asarray(lut.z2))


def load_lut(path) -> InnerProductLUT:
    with open(path, "rb") as f:
        table = np.load(f)
        q, dim, clamped = (int(v) for v in np.load(f))
        z1 = np.load(f)
        z2 = np.load(f)
    mode = "int8" if table.dtype == np.int8 else "real"
    return InnerProductLUT(table, q, dim, mode, clamped, z1, z2)


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out
