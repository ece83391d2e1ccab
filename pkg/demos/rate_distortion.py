"""Distortion against effective rate for several lattices, next to the Gamma(R) curve.

Run with ``python3 demos/rate_distortion.py``; takes a few seconds.
"""

from latticemm import bench

cfg = bench.ExperimentConfig(n=1536, a=192, b=192, seed=0)
rows = bench.sweep(cfg, qs=[3, 4, 6, 8, 12], lattices=["Z3", "D3", "E8"])

print(f"{'lattice':>7} {'q':>3} {'R_eff':>7} {'distortion':>11} {'Gamma(R)':>9} {'gap':>6}")
for r in rows:
    print(f"{r['lattice']:>7} {r['q']:>3} {r['rate_effective']:7.3f} {r['distortion']:11.5f} "
          f"{r['gamma_bound']:9.5f} {r['gap_ratio']:6.2f}")

scalar = bench.run_scalar_baseline(cfg)
print(f"\nscalar 3-bit: rate {scalar.rate_effective:.3f}, distortion {scalar.distortion:.5f}")
