"""Run one flood-response mission step by step with a scripted policy.

Shows the event-driven loop: the robot with the earliest free time decides,
claimed tasks are masked for peers, depot visits refill packages and recharge
the battery, and the mission ends at the deadline or when every task is
resolved.
"""

import numpy as np

from codesign.morphology import TalentVector
from codesign.sim import (
    add_robots,
    episode_reward,
    generate_scenario,
    greedy_nearest_policy,
    random_feasible_policy,
    run_episode,
)

talents = TalentVector(flight_range=40.0, nominal_speed=28.0, package_capacity=5.0)
scenario = generate_scenario(n_tasks=10, area_km2=36.0, duration_min=15.0, seed=4)
state = add_robots(scenario, talents, n_robots=2)

print("scenario: 10 tasks in a 6x6 km area, 15 minute mission, 2 UAVs")
print(f"depot at ({state.graph.depot[0]:.2f}, {state.graph.depot[1]:.2f}); deadlines "
      f"{state.graph.nodes[:, 2].min():.1f}..{state.graph.nodes[:, 2].max():.1f} min\n")

state, events, actions = run_episode(state, greedy_nearest_policy, collect_events=True)
print("greedy-nearest event log (time, robot, action, outcome, busy-until):")
for e in events:
    target = "depot" if e.action == 0 else f"task {e.action - 1}"
    print(f"  t={e.time:6.2f}  robot {e.robot}  -> {target:8s} {e.outcome:9s} busy until {e.arrive:6.2f}")
print(f"\ncompleted {state.n_success}/10 tasks, reward {episode_reward(state):.2f}")

# same scenario, uniform random feasible policy
state2 = add_robots(generate_scenario(10, 36.0, 15.0, seed=4), talents, 2)
state2, _, _ = run_episode(state2, random_feasible_policy, np.random.default_rng(0))
print(f"random feasible policy on the same scenario: reward {episode_reward(state2):.2f}")
