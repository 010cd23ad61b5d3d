"""Multi-run NSGA-II search for the best trade-off talent vectors.

Runs a few short searches over the morphology box, merges them with a final
non-dominated sort, and prints the archive's extent and hypervolume.
"""

import numpy as np

from codesign.morphology import DEFAULT_BOUNDS
from codesign.pareto import GaConfig, hypervolume, merge_runs, multi_run_pareto, nsga2_run

config = GaConfig(population_size=48, generations=24, runs=3, seed=7)

print(f"running {config.runs} independent NSGA-II searches "
      f"(pop {config.population_size} x {config.generations} generations)...")
archives = [
    nsga2_run(config, DEFAULT_BOUNDS, seed=100 + k, run_id=k) for k in range(config.runs)
]
for k, archive in enumerate(archives):
    hv = hypervolume(archive.talents, np.zeros(3))
    print(f"  run {k}: {len(archive):3d} non-dominated designs, hypervolume {hv:9.1f}")

merged = merge_runs(archives)
hv = hypervolume(merged.talents, np.zeros(3))
print(f"\nmerged archive: {len(merged)} designs, hypervolume {hv:.1f}")

T = merged.talents
print("talent ranges over the Pareto set:")
print(f"  flight range  {T[:, 0].min():7.2f} .. {T[:, 0].max():7.2f} km")
print(f"  nominal speed {T[:, 1].min():7.2f} .. {T[:, 1].max():7.2f} m/s")
print(f"  capacity      {T[:, 2].min():7.2f} .. {T[:, 2].max():7.2f} packages")

print("\nsample trade-offs along the front (sorted by range):")
order = np.argsort(T[:, 0])
for i in order[:: max(len(order) // 8, 1)]:
    print(f"  range {T[i, 0]:7.2f} km | speed {T[i, 1]:5.2f} m/s | capacity {T[i, 2]:5.2f}")

# the one-shot helper does runs + merge in one call
same = multi_run_pareto(config, DEFAULT_BOUNDS)
print(f"\nmulti_run_pareto reproduces the protocol: {len(same)} designs")
