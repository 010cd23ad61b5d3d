"""A short talent-infused training run (a few minutes on a laptop).

The actor's input-free talent head is sampled once per episode, decoded
through the boundary model into (range, speed, capacity), and the whole fleet
is built from the decoded talents.  Watch the reward climb while the talent
distribution drifts toward a better corner of the Pareto band and its
sampling std narrows.
"""

from codesign.boundary import fit_surface
from codesign.morphology import DEFAULT_BOUNDS
from codesign.pareto import GaConfig, multi_run_pareto
from codesign.sim import EnvConfig
from codesign.training import TrainConfig, evaluate, train

archive = multi_run_pareto(GaConfig(48, 24, 3, seed=7), DEFAULT_BOUNDS)
boundary = fit_surface(archive)
env = EnvConfig(n_tasks=10, n_robots=2, area_km2=36.0, duration_min=15.0)

config = TrainConfig(total_episodes=4000, episodes_per_batch=64, seed=0, hidden=32)
print("training 4000 episodes of talent-infused PPO (10 tasks, 2 robots)...\n")
actor, critic, history = train(config, boundary, env)

print(f"{'episode':>8} {'reward':>7} {'std':>6} {'range':>7} {'speed':>6} {'capacity':>8}")
for row in history[::8] + [history[-1]]:
    print(
        f"{row['episode']:8.0f} {row['reward_mean']:7.2f} {row['talent_std']:6.3f} "
        f"{row['range_km']:7.1f} {row['speed_mps']:6.1f} {row['capacity']:8.2f}"
    )

results = evaluate(actor, boundary, env, [(10, 2)], 50, seed=3)[0]
print(
    f"\ngreedy evaluation at 10x2: median completion {100 * results['median']:.0f}% "
    f"(IQR {100 * results['q1']:.0f}-{100 * results['q3']:.0f}%)"
)
print("a full desk-scale run uses 20k episodes; see the acceptance suite")
