"""The four-stage pipeline end to end at a micro budget (about a minute).

pareto -> boundary -> train -> finalize, orchestrated with a manifest that
digests every artifact.  Rerunning the same configuration skips completed
stages; the same master seed always reproduces the same bytes.
"""

import json
import os
import tempfile

from codesign.finalize import PsoConfig
from codesign.pareto import GaConfig
from codesign.pipeline import PipelineConfig, report, run_pipeline
from codesign.sim import EnvConfig
from codesign.training import TrainConfig
from codesign.cli import main as cli

config = PipelineConfig(
    seed=11,
    ga=GaConfig(population_size=32, generations=12, runs=2),
    env=EnvConfig(n_tasks=6, n_robots=2, area_km2=36.0, duration_min=15.0),
    train=TrainConfig(total_episodes=1024, episodes_per_batch=64, hidden=16, heads=2,
                      talent_hidden=4, checkpoint_every=4, seed=11),
    pso=PsoConfig(swarm_size=30, iterations=100),
    eval_scales=((6, 2), (12, 4)),
    eval_episodes=20,
)

out_dir = os.path.join(tempfile.gettempdir(), "codesign_demo_run")
print(f"running the pipeline into {out_dir} ...")
manifest = run_pipeline(config, out_dir)
for stage, record in manifest["stages"].items():
    print(f"  stage {stage:9s} {record['status']}  ({len(record['outputs'])} artifacts)")

with open(os.path.join(out_dir, "train_summary.json")) as fh:
    summary = json.load(fh)
print("\nlearned talents:", {k: round(v, 2) for k, v in summary["optimal_talents"].items()})

with open(os.path.join(out_dir, "final_morphology.json")) as fh:
    final = json.load(fh)
print("final morphology residual: %.4f" % final["residual"])

print("\nrerunning with the same config (stages should be skipped)...")
run_pipeline(config, out_dir)
print("done; artifacts unchanged")

print("\nevaluating and writing the report tables...")
cli(["evaluate", "--out-dir", out_dir, "--policy", "codesign",
     "--scales", "6x2,12x4", "--episodes", "20"])
summary = report(out_dir)
print(f"report files in {summary['report_dir']}:")
for name in sorted(os.listdir(summary["report_dir"])):
    print(f"  {name}")
