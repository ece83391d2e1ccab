"""Experiment harness: Gaussian matmul reproduction, scalar baseline, rate sweeps."""

from __future__ import annotations

import csv
import dataclasses
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import theory
from .io import payload_bits, read_matrix
from .pipeline import (
    PipelineConfig,
    decode_matmul,
    decode_matmul_lut,
    encode_matrix,
    lut_for,
)
from .voronoi import empirical_entropy


@dataclass
class ExperimentConfig:
    """Defaults reproduce the D3 / q=6 Gaussian experiment (no rotation, no centering)."""

    n: int = 3 * 2**11
    a: int = 0  # 0 means a = n
    b: int = 0
    distribution: str = "gaussian"
    a_path: str = ""
    b_path: str = ""
    seed: int = 0
    lattice: str = "D3"
    q: int = 6
    gamma1: float = 0.7
    bank_size: int = 9
    kappa: float = 1.0
    alpha_mode: str = "none"
    rotate: bool = False
    center: bool = False
    dither: bool = True
    shared_dither: bool = True
    code_seed: int = 1
    lut: str = "off"
    decode: str = "kahan"
    scalar_bits: int = 3
    histogram_path: str = ""
    report_path: str = ""

    @classmethod
    def from_strings(cls, values: dict[str, str]) -> "ExperimentConfig":
        """Build from string values (config file / command line), converting types."""
        kwargs = {}
        fields = {f.name: f for f in dataclasses.fields(cls)}
        for key, raw in values.items():
            if key not in fields:
                raise ValueError(f"unknown config key {key!r}")
            default = fields[key].default
            if isinstance(default, bool):
                low = str(raw).strip().lower()
                if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                    raise ValueError(f"{key}: expected a boolean, got {raw!r}")
                kwargs[key] = low in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                kwargs[key] = int(raw)
            elif isinstance(default, float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = str(raw)
        return cls(**kwargs)

    def pipeline(self) -> PipelineConfig:
        alpha = self.alpha_mode
        try:
            alpha = float(alpha)
        except ValueError:
            pass
        return PipelineConfig(
            lattice=self.lattice,
            q=self.q,
            gamma1=self.gamma1,
            bank_size=self.bank_size,
            kappa=self.kappa,
            alpha_mode=alpha,
            rotate=self.rotate,
            center=self.center,
            dither=self.dither,
            shared_dither=self.shared_dither,
            seed=self.code_seed,
            lut=self.lut,
        )

    def dims(self) -> tuple[int, int, int]:
        return self.n, self.a or self.n, self.b or self.n


@dataclass
class ExperimentReport:
    scheme: str
    n: int
    a: int
    b: int
    distortion: float
    distortion_n3: float
    rate_effective: float
    rate_payload: float
    gamma_entropy: float
    saturated: int
    gamma_bound: float
    theorem3_prediction: float
    scalar_prediction: float
    timings: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def lines(self) -> list[str]:
        out = []
        for k, v in self.as_dict().items():
            if k == "timings":
                out.extend(f"time_{p} = {t:.3f}" for p, t in v.items())
            else:
                out.append(f"{k} = {v}")
        return out


def load_operands(cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    if cfg.distribution == "gaussian":
        n, a, b = cfg.dims()
        rng = np.random.Generator(np.random.Philox(cfg.seed))
        return rng.standard_normal((n, a)), rng.standard_normal((n, b))
    if cfg.distribution == "file":
        A, B = read_matrix(cfg.a_path), read_matrix(cfg.b_path)
        if A.shape[0] != B.shape[0]:
            raise ValueError(f"inner dimensions differ: {A.shape} vs {B.shape}")
        return A, B
    raise ValueError(f"unknown distribution {cfg.distribution!r}")


def _errors(C_hat, C):
    E = C_hat - C
    n_entries = E.size
    return E, float(np.einsum("ij,ij->", E, E)) / n_entries


def _write_histogram(path, E: np.ndarray, n: int) -> None:
    np.savetxt(path, (E / math.sqrt(n)).ravel(), fmt="%.17g", header="err_over_sqrt_n", comments="")


def run_experiment(cfg: ExperimentConfig, A=None, B=None) -> ExperimentReport:
    """Encode both operands, decode the product and compare with A^T B."""
    timings = {}
    t0 = time.perf_counter()
    if A is None or B is None:
        A, B = load_operands(cfg)
    n, a = A.shape
    b = B.shape[1]
    pcfg = cfg.pipeline()
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    encA = encode_matrix(A, pcfg, "A")
    encB = encode_matrix(B, pcfg, "B")
    timings["encode"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if cfg.lut != "off":
        C_hat = decode_matmul_lut(encA, encB, lut_for(pcfg, cfg.lut), pcfg)
    else:
        C_hat = decode_matmul(encA, encB, pcfg, method=cfg.decode)
    timings["decode"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    C = A.T @ B
    timings["reference"] = time.perf_counter() - t0

    E, per_entry = _errors(C_hat, C)
    mse = per_entry / n
    if cfg.histogram_path:
        _write_histogram(cfg.histogram_path, E, n)
    del E

    gammas = np.concatenate([encA.gamma_index[encA.norms > 0].ravel(), encB.gamma_index[encB.norms > 0].ravel()])
    H = empirical_entropy(gammas, pcfg.bank_size)
    rate = 0.5 * (encA.rate() + encB.rate())
    payload = (payload_bits(encA) + payload_bits(encB)) / (n * (a + b))
    A_bar = A - A.mean(axis=0) if pcfg.center else A
    B_bar = B - B.mean(axis=0) if pcfg.center else B
    norm_term = float(np.sum(A_bar**2)) * float(np.sum(B_bar**2)) / n / (n * a * b)
    report = ExperimentReport(
        scheme=f"{pcfg.lattice}/q={pcfg.q}",
        n=n,
        a=a,
        b=b,
        distortion=mse,
        distortion_n3=per_entry * a * b / n**3,
        rate_effective=rate,
        rate_payload=payload,
        gamma_entropy=H,
        saturated=encA.saturated + encB.saturated,
        gamma_bound=theory.gamma(rate),
        theorem3_prediction=norm_term * theory.theorem3_factor(pcfg.code.rate),
        scalar_prediction=theory.scalar_quant_prediction(n, cfg.scalar_bits),
        timings=timings,
    )
    if cfg.report_path:
        Path(cfg.report_path).write_text("\n".join(report.lines()) + "\n")
    return report


def scalar_quantize_columns(X: np.ndarray, bits: int) -> np.ndarray:
    """Per-column l_inf normalization followed by rounding to a 2^-(bits-1) grid.

    With bits = 3 each entry becomes ||x||_inf * round(4 x / ||x||_inf) / 4.
    """
    if bits < 1:
        raise ValueError("need at least one bit")
    levels = 2 ** (bits - 1)
    scale = np.abs(X).max(axis=0)
    safe = np.where(scale > 0, scale, 1.0)
    Xn = np.clip(X / safe, -1.0, 1.0)
    return np.rint(Xn * levels) / levels * scale


def run_scalar_baseline(cfg: ExperimentConfig, A=None, B=None) -> ExperimentReport:
    timings = {}
    t0 = time.perf_counter()
    if A is None or B is None:
        A, B = load_operands(cfg)
    n, a = A.shape
    b = B.shape[1]
    timings["load"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    Aq = scalar_quantize_columns(A, cfg.scalar_bits)
    Bq = scalar_quantize_columns(B, cfg.scalar_bits)
    timings["encode"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    C_hat = Aq.T @ Bq
    timings["decode"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    C = A.T @ B
    timings["reference"] = time.perf_counter() - t0
    E, per_entry = _errors(C_hat, C)
    if cfg.histogram_path:
        _write_histogram(cfg.histogram_path, E, n)
    rate = math.log2(2 ** cfg.scalar_bits + 1) + 64.0 / n
    norm_term = float(np.sum(A**2)) * float(np.sum(B**2)) / n / (n * a * b)
    report = ExperimentReport(
        scheme=f"scalar/{cfg.scalar_bits}bit",
        n=n,
        a=a,
        b=b,
        distortion=per_entry / n,
        distortion_n3=per_entry * a * b / n**3,
        rate_effective=rate,
        rate_payload=rate,
        gamma_entropy=0.0,
        saturated=0,
        gamma_bound=theory.gamma(rate),
        theorem3_prediction=norm_term * theory.theorem3_factor(cfg.scalar_bits),
        scalar_prediction=theory.scalar_quant_prediction(n, cfg.scalar_bits),
        timings=timings,
    )
    if cfg.report_path:
        Path(cfg.report_path).write_text("\n".join(report.lines()) + "\n")
    return report


SWEEP_FIELDS = ("lattice", "q", "rate_effective", "distortion", "gamma_bound", "gap_ratio", "saturated")


def sweep(cfg: ExperimentConfig, qs=None, lattices=None, csv_path=None) -> list[dict]:
    """Repeat the experiment over nesting ratios and/or lattices on fixed operands."""
    A, B = load_operands(cfg)
    qs = list(qs) if qs else [cfg.q]
    lattices = list(lattices) if lattices else [cfg.lattice]
    rows = []
    for lat in lattices:
        for q in qs:
            c = dataclasses.replace(cfg, lattice=lat, q=int(q), gamma1=_gamma1_for(cfg, lat),
                                    histogram_path="", report_path="")
            rep = run_experiment(c, A, B)
            rows.append(
                {
                    "lattice": lat,
                    "q": int(q),
                    "rate_effective": rep.rate_effective,
                    "distortion": rep.distortion,
                    "gamma_bound": rep.gamma_bound,
                    "gap_ratio": rep.distortion / rep.gamma_bound,
                    "saturated": rep.saturated,
                }
            )
    if csv_path:
        with open(csv_path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=SWEEP_FIELDS)
            w.writeheader()
            w.writerows(rows)
    return rows


def _gamma1_for(cfg: ExperimentConfig, lattice: str) -> float:
    from .lattices import get_lattice
    from .voronoi import default_gamma1

    if lattice == cfg.lattice:
        return cfg.gamma1
    return default_gamma1(get_lattice(lattice))


def nonincreasing_violations(rows: list[dict], key: str = "distortion") -> list[tuple[dict, dict]]:
    """Consecutive (by rate) pairs in a sweep where distortion went up."""
    by_lattice = {}
    for r in rows:
        by_lattice.setdefault(r["lattice"], []).append(r)
    bad = []
    for group in by_lattice.values():
        group = sorted(group, key=lambda r: r["rate_effective"])
        bad.extend((lo, hi) for lo, hi in zip(group, group[1:]) if hi[key] > lo[key])
    return bad
