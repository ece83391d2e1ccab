"""Command-line entry point.

Every experiment key can come from a ``key = value`` config file (``--config``)
and be overridden by the matching ``--key value`` flag.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys

import numpy as np

from . import bench, theory
from .io import load_encoded, load_lut, read_config_file, read_matrix, save_encoded, save_lut, write_matrix
from .pipeline import ConfigMismatch, decode_matmul, decode_matmul_lut, encode_matrix, lut_for

CI_N = 1536


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--ci", action="store_true", help=f"reduced run with n=a=b={CI_N}; needs --seed")
    for f in dataclasses.fields(bench.ExperimentConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, metavar="VALUE",
                       help=f"default: {f.default!r}")


def _experiment_config(args) -> bench.ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    for f in dataclasses.fields(bench.ExperimentConfig):
        v = getattr(args, "cfg_" + f.name)
        if v is not None:
            values[f.name] = v
    if args.ci:
        if getattr(args, "cfg_seed") is None:
            raise SystemExit("error: --ci requires an explicit --seed")
        values.update(n=str(CI_N), a="0", b="0")
    return bench.ExperimentConfig.from_strings(values)


def _print_report(rep: bench.ExperimentReport) -> None:
    for line in rep.lines():
        print(line)


def cmd_run(args) -> int:
    _print_report(bench.run_experiment(_experiment_config(args)))
    return 0


def cmd_scalar(args) -> int:
    _print_report(bench.run_scalar_baseline(_experiment_config(args)))
    return 0


def _split(text, cast):
    return [cast(t) for t in text.split(",") if t.strip()] if text else None


def cmd_sweep(args) -> int:
    cfg = _experiment_config(args)
    rows = bench.sweep(cfg, _split(args.qs, int), _split(args.lattices, str), args.csv)
    if not args.csv:
        w = csv.DictWriter(sys.stdout, fieldnames=bench.SWEEP_FIELDS)
        w.writeheader()
        w.writerows(rows)
    bad = bench.nonincreasing_violations(rows)
    for lo, hi in bad:
        print(f"warning: distortion rose from {lo['distortion']:.5g} (q={lo['q']}) to "
              f"{hi['distortion']:.5g} (q={hi['q']}) on {lo['lattice']}", file=sys.stderr)
    return 0


def cmd_curves(args) -> int:
    rates = np.linspace(args.r_min, args.r_max, args.steps)
    table = theory.curves(rates)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["R", "Gamma", "Gamma1", "one_sided"])
        w.writerows([[f"{v:.10g}" for v in row] for row in table])
    finally:
        if args.output:
            out.close()
    return 0


def cmd_encode(args) -> int:
    cfg = _experiment_config(args).pipeline()
    enc = encode_matrix(read_matrix(args.input), cfg, args.side)
    nbytes = save_encoded(args.output, enc)
    print(f"wrote {nbytes} bytes, rate = {enc.rate():.6f} bits/entry, saturated = {enc.saturated}")
    return 0


def cmd_decode(args) -> int:
    encA = load_encoded(args.a)
    encB = load_encoded(args.b)
    cfg = encA.config
    if args.lut:
        C = decode_matmul_lut(encA, encB, load_lut(args.lut), cfg)
    else:
        C = decode_matmul(encA, encB, cfg, method=args.method)
    write_matrix(args.output, C)
    print(f"wrote {C.shape[0]}x{C.shape[1]} estimate to {args.output}")
    return 0


def cmd_lut_build(args) -> int:
    cfg = _experiment_config(args).pipeline()
    lut = lut_for(cfg, args.mode)
    save_lut(args.output, lut)
    print(f"{lut.size} entries ({lut.mode}), {lut.nbytes} bytes, {lut.clamped} clamped")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="latticemm", description="Nested-lattice quantized matrix multiplication.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="encode A and B, decode A^T B, report distortion and rate")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("scalar-baseline", help="l_inf-normalized scalar quantizer on the same matrices")
    _add_config_flags(p)
    p.set_defaults(func=cmd_scalar)

    p = sub.add_parser("sweep", help="repeat the run over nesting ratios and/or lattices")
    _add_config_flags(p)
    p.add_argument("--qs", help="comma-separated nesting ratios")
    p.add_argument("--lattices", help="comma-separated lattice names (e.g. D3,Z3)")
    p.add_argument("--csv", help="output CSV path (default: stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("curves", help="theory curves as CSV")
    p.add_argument("--r-min", type=float, default=0.0)
    p.add_argument("--r-max", type=float, default=8.0)
    p.add_argument("--steps", type=int, default=161)
    p.add_argument("--output")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("encode", help="encode one matrix file")
    _add_config_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--side", choices=("A", "B"), required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="estimate A^T B from two encoded files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--lut", help="table written by lut-build")
    p.add_argument("--method", choices=("kahan", "blas"), default="kahan")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("lut-build", help="tabulate codeword inner products")
    _add_config_flags(p)
    p.add_argument("--mode", choices=("real", "int8"), default="real")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_lut_build)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, ConfigMismatch, OSError, MemoryError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
