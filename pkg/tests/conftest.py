import itertools

import numpy as np
import pytest

from latticemm.lattices import Lattice

ACCEPTANCE_LINES: list[str] = []


def record(name: str, ok: bool, detail: str = "") -> None:
    """Log one acceptance line; printed again in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def brute_nearest(lat: Lattice, x: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Nearest lattice point by exhaustive search, ties to the lexicographically smallest.

    Every coordinate of a nearest point of Z^d or D_n lies within 1 of the
    input, so the integer candidates round(x) + {-1, 0, 1}^d suffice; E8 adds
    the same search on the half-integer coset.
    """
    x = np.asarray(x, dtype=float)
    d = lat.dim
    offsets = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=float)
    shifts = [0.0] if lat.kind != "E8" else [0.0, 0.5]
    out = np.empty_like(x)
    for i, xi in enumerate(x):
        cands = []
        for s in shifts:
            c = np.rint(xi - s) + offsets + s
            if lat.kind in ("D", "E8"):
                c = c[np.rint(c.sum(axis=1) - d * s).astype(np.int64) % 2 == 0]
            cands.append(c)
        c = np.concatenate(cands)
        dist = np.sum((c - xi) ** 2, axis=1)
        best = c[dist <= dist.min() + tol]
        order = np.lexsort(best.T[::-1])
        out[i] = best[order[0]]
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
