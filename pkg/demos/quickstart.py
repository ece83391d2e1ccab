"""Compress two Gaussian matrices, estimate A^T B and compare with the exact product.

Run with ``python3 demos/quickstart.py``.
"""

import tempfile
from pathlib import Path

import numpy as np

from latticemm.io import load_encoded, payload_rate_from_file, save_encoded
from latticemm.pipeline import PipelineConfig, decode_matmul, decode_matmul_lut, encode_matrix, lut_for
from latticemm.theory import gamma

rng = np.random.default_rng(0)
n = 1536
A = rng.standard_normal((n, 200))
B = rng.standard_normal((n, 150))

# D3 Voronoi code with nesting ratio 6: log2(6) bits per entry plus the gamma index
cfg = PipelineConfig(lattice="D3", q=6, rotate=False, center=False)
encA = encode_matrix(A, cfg, "A")
encB = encode_matrix(B, cfg, "B")

C = A.T @ B
C_hat = decode_matmul(encA, encB, cfg)
mse = np.mean((C_hat - C) ** 2) / n
print(f"rate       {encA.rate():.3f} bits/entry")
print(f"distortion {mse:.4f}  (Gamma(R) = {gamma(encA.rate()):.4f})")

# the table of codeword inner products gives the same answer bit for bit
C_lut = decode_matmul_lut(encA, encB, lut_for(cfg, "real"), cfg)
print("LUT decode identical:", np.array_equal(C_lut, C_hat))

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "a.nlq"
    nbytes = save_encoded(path, encA)
    back = load_encoded(path)
    print(f"file       {nbytes} bytes, payload {payload_rate_from_file(path):.3f} bits/entry")
    print("round trip identical:", np.array_equal(decode_matmul(back, encB, cfg), C_hat))
