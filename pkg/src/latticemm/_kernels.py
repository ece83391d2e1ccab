"""Compiled inner loops for the decoders.

Each output row is reduced sequentially over blocks with Kahan compensation,
so a row's value never depends on how rows are scheduled.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def gram_lut(ua, sa, vb, sb, table, out):
    """out[i, j] = sum_k table[ua[i,k], vb[k,j]] * sa[i,k] * sb[k,j]."""
    a, K = ua.shape
    b = vb.shape[1]
    for i in range(a):
        acc = np.zeros(b)
        comp = np.zeros(b)
        for k in range(K):
            row = table[ua[i, k]]
            s = sa[i, k]
            for j in range(b):
                term = row[vb[k, j]] * s * sb[k, j]
                y = term - comp[j]
                t = acc[j] + y
                comp[j] = (t - acc[j]) - y
                acc[j] = t
        out[i, :] = acc


@njit(cache=True)
def gram_direct(xa, sa, yb, sb, out):
    """out[i, j] = sum_k <xa[i,k,:], yb[k,:,j]> * sa[i,k] * sb[k,j]."""
    a, K, d = xa.shape
    b = yb.shape[2]
    for i in range(a):
        acc = np.zeros(b)
        comp = np.zeros(b)
        dot = np.empty(b)
        for k in range(K):
            s = sa[i, k]
            x0 = xa[i, k, 0]
            for j in range(b):
                dot[j] = x0 * yb[k, 0, j]
            for c in range(1, d):
                xc = xa[i, k, c]
                for j in range(b):
                    dot[j] = dot[j] + xc * yb[k, c, j]
            for j in range(b):
                term = dot[j] * s * sb[k, j]
                y = term - comp[j]
                t = acc[j] + y
                comp[j] = (t - acc[j]) - y
                acc[j] = t
        out[i, :] = acc


@njit(cache=True)
def gram_int(xa, yb, out):
    """Integer inner products: out[i, j] = sum_k <xa[i,k,:], yb[k,:,j]>."""
    a, K, d = xa.shape
    b = yb.shape[2]
    for i in range(a):
        acc = np.zeros(b, dtype=np.int32)
        for k in range(K):
            for c in range(d):
                x = np.int32(xa[i, k, c])
                if x == 0:
                    continue
                for j in range(b):
                    acc[j] += x * np.int32(yb[k, c, j])
        out[i, :] = acc


def lut_entries(c1, c2):
    """Table of <c1[u], c2[v]> summed left to right over coordinates.

    The summation order matches :func:`gram_direct`, which makes the
    real-valued table path reproduce the direct path bit for bit.
    """
    t = c1[:, None, 0] * c2[None, :, 0]
    for c in range(1, c1.shape[1]):
        t = t + c1[:, None, c] * c2[None, :, c]
    return t
