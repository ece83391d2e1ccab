"""Range asymmetric numeral system (rANS) coder for encoded columns.

Each block is coded as its gamma index (quantized empirical frequencies,
total ``2**FREQ_BITS``) followed by its d coset digits, each uniform over
``q``. Uniform digits cost exactly log2(q) bits, so the stream length tracks
the ideal rate up to the final 64-bit state and the frequency rounding.

The state lives in [L, L * 2^16) with L = odd(q) * 2^31, which is a multiple
of every total in use; the stream is a sequence of 16-bit words.
"""

from __future__ import annotations

import numpy as np
from numba import njit

FREQ_BITS = 24
WORD_BITS = 16


def state_floor(q: int) -> int:
    odd = q
    while odd % 2 == 0:
        odd //= 2
    if odd >= 1 << 17:
        raise ValueError(f"q={q} is too large for the 64-bit coder state")
    return odd << 31


def quantize_frequencies(counts) -> np.ndarray:
    """Integer frequencies summing to 2^FREQ_BITS; every seen symbol keeps freq >= 1."""
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    freqs = np.zeros(len(counts), dtype=np.int64)
    if total == 0:
        return freqs
    M = 1 << FREQ_BITS
    seen = counts > 0
    freqs[seen] = np.maximum(1, (counts[seen] * M) // total)
    top = int(np.argmax(counts))
    freqs[top] += M - int(freqs.sum())
    if freqs[top] < 1:
        raise ValueError("too many distinct symbols for the frequency precision")
    return freqs


@njit(cache=True)
def _encode(gammas, digits, freqs, cum, q, L):
    # gammas (N,), digits (N, d); coded in reverse so decoding runs forward
    N, d = digits.shape
    out = np.empty(2 * N * (d + 1) + 8, dtype=np.uint16)
    n_out = 0
    x = np.uint64(L)
    Lg = np.uint64(L >> FREQ_BITS)
    Lq = np.uint64(L // q)
    M = np.uint64(1 << FREQ_BITS)
    qq = np.uint64(q)
    mask = np.uint64(0xFFFF)
    sh = np.uint64(WORD_BITS)
    for i in range(N - 1, -1, -1):
        for c in range(d - 1, -1, -1):
            x_max = Lq << sh
            while x >= x_max:
                out[n_out] = np.uint16(x & mask)
                n_out += 1
                x >>= sh
            x = x * qq + np.uint64(digits[i, c])
        s = gammas[i]
        f = np.uint64(freqs[s])
        x_max = (Lg * f) << sh
        while x >= x_max:
            out[n_out] = np.uint16(x & mask)
            n_out += 1
            x >>= sh
        x = (x // f) * M + (x % f) + np.uint64(cum[s])
    for _ in range(4):
        out[n_out] = np.uint16(x & mask)
        n_out += 1
        x >>= sh
    return out[:n_out][::-1].copy()


@njit(cache=True)
def _decode(words, N, d, freqs, cum, slot_to_sym, q, L):
    gammas = np.empty(N, dtype=np.uint8)
    digits = np.empty((N, d), dtype=np.int64)
    pos = 0
    x = np.uint64(0)
    sh = np.uint64(WORD_BITS)
    for _ in range(4):
        x = (x << sh) | np.uint64(words[pos])
        pos += 1
    M = np.uint64(1 << FREQ_BITS)
    qq = np.uint64(q)
    Lu = np.uint64(L)
    n_words = words.shape[0]
    for i in range(N):
        slot = x % M
        s = slot_to_sym[np.int64(slot >> np.uint64(FREQ_BITS - 12))]
        while np.uint64(cum[s + 1]) <= slot:
            s += 1
        gammas[i] = s
        x = np.uint64(freqs[s]) * (x // M) + slot - np.uint64(cum[s])
        while x < Lu:
            if pos >= n_words:
                return gammas, digits, -1
            x = (x << sh) | np.uint64(words[pos])
            pos += 1
        for c in range(d):
            digits[i, c] = np.int64(x % qq)
            x = x // qq
            while x < Lu:
                if pos >= n_words:
                    return gammas, digits, -1
                x = (x << sh) | np.uint64(words[pos])
                pos += 1
    if x != Lu:
        return gammas, digits, -2
    return gammas, digits, pos


def encode_stream(gammas, digits, freqs, q: int) -> np.ndarray:
    """Code N blocks; returns the 16-bit word stream."""
    gammas = np.ascontiguousarray(gammas, dtype=np.int64).ravel()
    digits = np.ascontiguousarray(digits, dtype=np.int64)
    freqs = np.asarray(freqs, dtype=np.int64)
    if len(gammas) and np.any(freqs[gammas] == 0):
        raise ValueError("gamma index with zero frequency")
    cum = np.concatenate([[0], np.cumsum(freqs)])
    return _encode(gammas, digits, freqs, cum, q, state_floor(q))


def decode_stream(words, N: int, d: int, freqs, q: int):
    """Inverse of :func:`encode_stream`; returns (gammas, digits)."""
    freqs = np.asarray(freqs, dtype=np.int64)
    if N == 0:
        return np.zeros(0, dtype=np.uint8), np.zeros((0, d), dtype=np.int64)
    if int(freqs.sum()) != 1 << FREQ_BITS:
        raise ValueError("frequency table does not sum to 2^FREQ_BITS")
    words = np.asarray(words, dtype=np.uint16)
    if len(words) < 4:
        raise ValueError("truncated coder stream")
    cum = np.concatenate([[0], np.cumsum(freqs)])
    # coarse lookup: first symbol whose range reaches each 2^12-slot bucket
    buckets = np.arange(1 << 12, dtype=np.int64) << (FREQ_BITS - 12)
    slot_to_sym = (np.searchsorted(cum, buckets, side="right") - 1).astype(np.int64)
    gammas, digits, status = _decode(words, N, d, freqs, cum, slot_to_sym, q, state_floor(q))
    if status == -1:
        raise ValueError("truncated coder stream")
    if status == -2 or status != len(words):
        raise ValueError("coder stream is corrupt")
    return gammas, digits
