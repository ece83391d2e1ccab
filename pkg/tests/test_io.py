import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latticemm import _rans
from latticemm.io import (
    FormatError,
    dumps_encoded,
    load_encoded,
    load_lut,
    loads_encoded,
    payload_bits,
    payload_rate_from_file,
    read_config_file,
    read_matrix,
    save_encoded,
    save_lut,
    write_matrix,
)
from latticemm.pipeline import PipelineConfig, decode_matmul, decode_matmul_lut, encode_matrix, lut_for


def test_matrix_binary_layout(tmp_path):
    M = np.arange(6, dtype=float).reshape(2, 3) / 7
    p = tmp_path / "m.mat"
    write_matrix(p, M)
    raw = p.read_bytes()
    assert struct.unpack("<QQ", raw[:16]) == (2, 3)
    assert np.frombuffer(raw[16:], "<f8").tolist() == M.ravel().tolist()
    assert np.array_equal(read_matrix(p), M)
    p.write_bytes(raw[:-1])
    with pytest.raises(FormatError):
        read_matrix(p)


def test_matrix_text_loaders(tmp_path):
    (tmp_path / "m.txt").write_text("1 2\n3 4\n")
    (tmp_path / "m.csv").write_text("1,2,3\n")
    assert read_matrix(tmp_path / "m.txt").tolist() == [[1, 2], [3, 4]]
    assert read_matrix(tmp_path / "m.csv").shape == (1, 3)


CONFIGS = [
    PipelineConfig(),
    PipelineConfig(rotate=False, center=False),
    PipelineConfig(side_info="grid", grid_M=1e3, grid_delta=1e-7),
    PipelineConfig(lattice="E8", q=3, kappa=0.5, shared_dither=False),
    PipelineConfig(lattice="Z1", q=16, bank_size=1),
]


@pytest.mark.parametrize("cfg", CONFIGS, ids=range(len(CONFIGS)))
def test_encoded_round_trip(cfg, tmp_path, rng):
    A = rng.standard_normal((257, 13))
    A[:, 4] = 0.0
    B = rng.standard_normal((257, 5))
    encA = encode_matrix(A, cfg, "A")
    encB = encode_matrix(B, cfg, "B")
    path = tmp_path / "a.nlq"
    nbytes = save_encoded(path, encA)
    assert nbytes == path.stat().st_size
    back = load_encoded(path)
    for name in ("means", "norms", "gamma_index", "codes"):
        assert np.array_equal(getattr(back, name), getattr(encA, name)), name
    assert (back.n, back.side, back.saturated, back.digest) == (encA.n, "A", encA.saturated, encA.digest)
    assert dumps_encoded(back) == path.read_bytes()
    assert np.array_equal(decode_matmul(back, encB, cfg), decode_matmul(encA, encB, cfg))


@pytest.mark.parametrize("cfg", CONFIGS, ids=range(len(CONFIGS)))
def test_payload_rate_matches_reported_rate(cfg, tmp_path):
    A = np.random.default_rng(2).standard_normal((1024, 300))
    enc = encode_matrix(A, cfg, "A")
    path = tmp_path / "a.nlq"
    save_encoded(path, enc)
    file_rate = payload_rate_from_file(path)
    assert file_rate == pytest.approx(payload_bits(enc) / (1024 * 300))
    assert abs(file_rate - enc.rate()) < 1e-3


@pytest.fixture
def blob(rng):
    return dumps_encoded(encode_matrix(rng.standard_normal((64, 6)), PipelineConfig(), "B"))


def test_bad_magic(blob):
    with pytest.raises(FormatError, match="magic"):
        loads_encoded(b"XXXX" + blob[4:])
    with pytest.raises(FormatError):
        loads_encoded(b"")


def test_bad_version(blob):
    with pytest.raises(FormatError, match="version"):
        loads_encoded(blob[:4] + struct.pack("<H", 9) + blob[6:])


@pytest.mark.parametrize("cut", [10, 30, 200, -3, -1])
def test_truncation(blob, cut):
    with pytest.raises(FormatError):
        loads_encoded(blob[:cut])


def test_trailing_bytes(blob):
    with pytest.raises(FormatError, match="trailing"):
        loads_encoded(blob + b"\x00")


def test_config_tampering_caught_by_digest(blob):
    tampered = blob.replace(b'"seed": 0', b'"seed": 1')
    assert tampered != blob
    with pytest.raises(FormatError, match="digest"):
        loads_encoded(tampered)


def test_corrupt_stream_detected(blob):
    bad = bytearray(blob)
    bad[-6] ^= 0xFF
    with pytest.raises(FormatError):
        loads_encoded(bytes(bad))


def test_lut_round_trip(tmp_path, rng):
    cfg = PipelineConfig()
    lut = lut_for(cfg, "int8")
    save_lut(tmp_path / "t.lut", lut)
    back = load_lut(tmp_path / "t.lut")
    assert back.mode == "int8" and back.clamped == lut.clamped
    assert np.array_equal(back.table, lut.table) and np.array_equal(back.z1, lut.z1)
    A, B = rng.standard_normal((40, 4)), rng.standard_normal((40, 3))
    encA, encB = encode_matrix(A, cfg, "A"), encode_matrix(B, cfg, "B")
    assert np.array_equal(decode_matmul_lut(encA, encB, back, cfg), decode_matmul_lut(encA, encB, lut, cfg))


def test_config_file(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("# experiment\nn = 96\nlattice=D3  # inline comment\n\nalpha-mode = one_sided\n")
    assert read_config_file(p) == {"n": "96", "lattice": "D3", "alpha_mode": "one_sided"}
    p.write_text("just words\n")
    with pytest.raises(ValueError):
        read_config_file(p)


# coder


@settings(max_examples=60, deadline=None)
@given(
    q=st.integers(2, 40),
    d=st.integers(1, 8),
    probs=st.lists(st.integers(0, 50), min_size=1, max_size=16),
    N=st.integers(0, 300),
    seed=st.integers(0, 2**32 - 1),
)
def test_rans_round_trip(q, d, probs, N, seed):
    r = np.random.default_rng(seed)
    w = np.array(probs, dtype=float) + 1e-3
    gammas = r.choice(len(w), size=N, p=w / w.sum())
    digits = r.integers(0, q, size=(N, d))
    freqs = _rans.quantize_frequencies(np.bincount(gammas, minlength=len(w)))
    words = _rans.encode_stream(gammas, digits, freqs, q)
    g2, d2 = _rans.decode_stream(words, N, d, freqs, q)
    assert np.array_equal(g2, gammas) and np.array_equal(d2, digits)


def test_rans_cost_is_near_ideal():
    r = np.random.default_rng(0)
    N, q, d = 50_000, 6, 3
    p = np.array([0.66, 0.25, 0.065, 0.017, 0.004, 0.002, 0.001, 0.0005, 0.0005])
    gammas = r.choice(9, size=N, p=p)
    counts = np.bincount(gammas, minlength=9)
    freqs = _rans.quantize_frequencies(counts)
    words = _rans.encode_stream(gammas, r.integers(0, q, (N, d)), freqs, q)
    pk = counts[counts > 0] / N
    ideal = N * d * np.log2(q) - N * np.sum(pk * np.log2(pk))
    assert 0 <= 16 * len(words) - ideal < 100


def test_frequency_quantization():
    f = _rans.quantize_frequencies([1, 0, 10**9])
    assert f.sum() == 1 << _rans.FREQ_BITS and f[0] >= 1 and f[1] == 0
    assert not _rans.quantize_frequencies([0, 0]).any()
