import numpy as np
import pytest

from codesign.morphology import TalentVector
from codesign.sim import (
    EnvConfig,
    Event,
    MaskViolation,
    MissionState,
    TaskGraph,
    add_robots,
    edge_weights,
    episode_done,
    episode_reward,
    feasible_actions,
    generate_scenario,
    greedy_nearest_policy,
    next_decider,
    observe,
    random_feasible_policy,
    read_event_log,
    replay_episode,
    run_episode,
    step,
    write_event_log,
)

TALENTS = TalentVector(flight_range=15.0, nominal_speed=18.0, package_capacity=3.2)


def hand_mission(nodes, depot, talents, n_robots=1, duration=120.0):
    nodes = np.asarray(nodes, dtype=np.float64)
    graph = TaskGraph(nodes=nodes, adjacency=edge_weights(nodes), depot=np.asarray(depot, float))
    scenario = MissionState(
        graph=graph,
        robots=[],
        clock=0.0,
        completed=np.zeros(len(nodes), dtype=bool),
        expired=np.zeros(len(nodes), dtype=bool),
        mission_duration=duration,
        config=EnvConfig(n_tasks=len(nodes), n_robots=0, duration_min=duration),
    )
    return add_robots(scenario, talents, n_robots)


def test_generate_scenario_matches_training_setup():
    state = generate_scenario(50, 5.0, 120.0, seed=0)
    assert state.graph.n_tasks == 50
    side = state.config.side_km
    assert np.all(state.graph.nodes[:, :2] >= 0) and np.all(state.graph.nodes[:, :2] <= side)
    assert np.all(state.graph.nodes[:, 2] <= 120.0)
    assert np.all(state.graph.nodes[:, 2] >= 0.25 * 120.0)
    # adjacency invariants
    W = state.graph.adjacency
    np.testing.assert_allclose(np.diag(W), 1.0)
    assert np.all((W > 0) & (W <= 1.0))
    np.testing.assert_array_equal(W, W.T)


def test_generate_scenario_deterministic():
    a = generate_scenario(20, 5.0, 120.0, seed=3)
    b = generate_scenario(20, 5.0, 120.0, seed=3)
    np.testing.assert_array_equal(a.graph.nodes, b.graph.nodes)
    np.testing.assert_array_equal(a.graph.depot, b.graph.depot)


def test_fresh_robot_near_task_unmasked():
    state = hand_mission([[0.5, 0.0, 100.0]], [0.0, 0.0], TALENTS)
    mask = feasible_actions(state, 0)
    assert mask[0] and mask[1]


def test_no_packages_masks_all_tasks():
    state = hand_mission([[0.5, 0.0, 100.0]], [0.0, 0.0], TALENTS)
    state.robots[0].packages_remaining = 0
    mask = feasible_actions(state, 0)
    assert mask[0] and not mask[1:].any()


def test_range_boundary_inclusive():
    state = hand_mission([[3.0, 0.0, 100.0]], [0.0, 0.0], TALENTS)
    robot = state.robots[0]
    dist_to = np.linalg.norm(state.graph.nodes[0, :2] - robot.position)
    robot.remaining_range = float(dist_to + state.graph.depot_dist[0])
    assert feasible_actions(state, 0)[1]
    robot.remaining_range *= 0.999
    assert not feasible_actions(state, 0)[1]


def test_deadline_masks_far_future_arrivals():
    # deadline tighter than travel time -> masked
    state = hand_mission([[10.0, 0.0, 5.0]], [0.0, 0.0], TalentVector(50.0, 10.0, 2.0))
    assert not feasible_actions(state, 0)[1]


def test_recharge_from_empty_takes_50_minutes():
    state = hand_mission([[1.0, 0.0, 100.0]], [0.0, 0.0], TALENTS)
    robot = state.robots[0]
    robot.position = np.array([2.0, 0.0])
    robot.remaining_range = 2.0  # lands at the depot exactly empty
    state, _, _ = step(state, 0, 0)
    travel = 2.0 / robot.speed_km_min
    assert robot.busy_until == pytest.approx(travel + 50.0)
    assert robot.remaining_range == TALENTS.flight_range
    assert robot.packages_remaining == robot.capacity


def test_depot_while_full_idles_fixed_dwell():
    state = hand_mission([[1.0, 0.0, 100.0]], [0.0, 0.0], TALENTS)
    state, _, _ = step(state, 0, 0)
    assert state.robots[0].busy_until == state.config.idle_dwell_min


def test_two_task_hand_fixture_completes_both():
    talents = TalentVector(flight_range=10.0, nominal_speed=1.0 / 0.06, package_capacity=2.0)
    state = hand_mission([[1.0, 0.0, 100.0], [2.0, 0.0, 110.0]], [0.0, 0.0], talents)
    state, events, actions = run_episode(state, greedy_nearest_policy, collect_events=True)
    assert state.n_success == 2
    assert episode_reward(state) == 10.0
    assert actions == [1, 2]
    assert events[0] == Event(0.0, 0, 1, "delivered", 1.0)
    assert events[1] == Event(1.0, 0, 2, "delivered", 2.0)


def test_episode_reward_contract():
    state = hand_mission([[1.0, 0.0, 100.0]], [0.0, 0.0], TALENTS)
    with pytest.raises(RuntimeError):
        episode_reward(state)
    state.completed[:] = True
    assert episode_reward(state) == 10.0
    # direct formula on a constructed 50-task mission
    big = generate_scenario(50, 5.0, 120.0, seed=1)
    big = add_robots(big, TALENTS, 2)
    big.completed[:45] = True
    big.expired[45:] = True
    assert episode_reward(big) == pytest.approx(9.0)
    assert not (big.completed & big.expired).any()


def test_masked_action_raises():
    state = hand_mission([[0.5, 0.0, 100.0]], [0.0, 0.0], TALENTS)
    state.robots[0].packages_remaining = 0
    with pytest.raises(MaskViolation):
        step(state, 0, 1)


def test_expiry_sweep_marks_open_tasks():
    # one close task, one whose deadline passes while the robot recharges
    talents = TalentVector(flight_range=4.0, nominal_speed=1.0 / 0.06, package_capacity=1.0)
    state = hand_mission([[1.0, 0.0, 100.0], [1.5, 0.0, 3.0]], [0.0, 0.0], talents, duration=120.0)
    state, _, _ = step(state, 0, 1)  # serve task 0 at t=1, one package used
    assert state.completed[0] and not state.expired[1]
    state, _, done = step(state, 0, 0)  # must return to refill; recharge passes t=3
    assert state.expired[1] and not state.completed[1]
    assert not (state.completed & state.expired).any()


def test_zero_capacity_fleet_terminates_by_truncation():
    talents = TalentVector(flight_range=10.0, nominal_speed=15.0, package_capacity=0.4)
    state = hand_mission([[1.0, 0.0, 100.0]], [0.0, 0.0], talents, duration=60.0)
    state, _, actions = run_episode(state, random_feasible_policy, np.random.default_rng(0))
    assert episode_done(state)
    assert state.n_success == 0
    assert all(a == 0 for a in actions)


def test_observe_normalization_and_passthrough():
    scenario = generate_scenario(12, 5.0, 90.0, seed=5)
    state = add_robots(scenario, TALENTS, 3, unit_talents=[0.4, 0.7])
    obs = observe(state, 1)
    assert obs.node_features.shape == (13, 4)
    assert obs.adjacency.shape == (13, 13)
    assert obs.peers.shape == (2, 5)
    assert 0.0 <= obs.time <= 1.0
    for arr in (obs.node_features, obs.own, obs.peers, obs.unit_talents):
        assert np.all(arr >= 0.0) and np.all(arr <= 1.0)
    assert obs.talents == TALENTS
    np.testing.assert_array_equal(obs.unit_talents, [0.4, 0.7])


def test_observe_identical_peer_blocks_at_start():
    scenario = generate_scenario(8, 5.0, 120.0, seed=6)
    state = add_robots(scenario, TALENTS, 4)
    blocks = [observe(state, r).peers for r in range(4)]
    for b in blocks[1:]:
        np.testing.assert_array_equal(b, blocks[0])


def test_observe_features_bounded_across_random_states():
    rng = np.random.default_rng(7)
    for ep in range(40):
        scenario = generate_scenario(10, 5.0, 60.0, seed=100 + ep)
        state = add_robots(scenario, TALENTS, 2, unit_talents=rng.random(2))
        done = episode_done(state)
        while not done:
            ridx = next_decider(state)
            obs = observe(state, ridx)
            for arr in (obs.node_features, obs.own, obs.peers):
                assert np.all(arr >= 0.0) and np.all(arr <= 1.0 + 1e-12)
            mask = feasible_actions(state, ridx)
            state, _, done = step(state, ridx, random_feasible_policy(obs, mask, rng))


def test_conservation_random_episodes():
    rng = np.random.default_rng(8)
    for ep in range(50):
        scenario = generate_scenario(8, 5.0, 60.0, seed=200 + ep)
        state = add_robots(scenario, TALENTS, 2)
        clock_prev = 0.0
        delivered = np.zeros(8, dtype=int)
        done = episode_done(state)
        while not done:
            ridx = next_decider(state)
            mask = feasible_actions(state, ridx)
            action = random_feasible_policy(None, mask, rng)
            before = state.completed.copy()
            state, reward_step, done = step(state, ridx, action)
            assert reward_step == 0.0
            delivered += (state.completed & ~before).astype(int)
            assert state.clock >= clock_prev
            clock_prev = state.clock
            for robot in state.robots:
                assert robot.remaining_range >= -1e-9
                assert 0 <= robot.packages_remaining <= robot.capacity
        assert np.all(delivered <= 1)
        assert not (state.completed & state.expired).any()
        assert 0.0 <= episode_reward(state) <= 10.0


def test_episode_determinism_and_replay(tmp_path):
    cfg = EnvConfig(n_tasks=10, n_robots=2, area_km2=5.0, duration_min=60.0)

    def drive(seed):
        scenario = generate_scenario(cfg.n_tasks, cfg.area_km2, cfg.duration_min, seed)
        state = add_robots(scenario, TALENTS, cfg.n_robots)
        return run_episode(state, random_feasible_policy, np.random.default_rng(55), collect_events=True)

    s1, e1, a1 = drive(42)
    s2, e2, a2 = drive(42)
    assert a1 == a2 and e1 == e2
    assert episode_reward(s1) == episode_reward(s2)

    # replay from the logged actions reproduces the trajectory exactly
    replayed = replay_episode(42, cfg, TALENTS, a1)
    np.testing.assert_array_equal(replayed.completed, s1.completed)
    np.testing.assert_array_equal(replayed.expired, s1.expired)
    assert replayed.clock == s1.clock

    # event log round-trip
    path = tmp_path / "episode.log"
    write_event_log(path, {"seed": 42}, e1)
    header, events = read_event_log(path)
    assert header["seed"] == "42"
    assert events == list(e1)


def test_scenario_file_roundtrip(tmp_path):
    from codesign.sim import read_scenario, write_scenario

    original = generate_scenario(12, 36.0, 15.0, seed=21)
    path = tmp_path / "scenario.csv"
    write_scenario(path, original)
    loaded = read_scenario(path)
    np.testing.assert_array_equal(loaded.graph.nodes, original.graph.nodes)
    np.testing.assert_array_equal(loaded.graph.depot, original.graph.depot)
    assert loaded.mission_duration == original.mission_duration
    # a mission replayed on the reloaded scenario matches the original
    a = add_robots(original, TALENTS, 2)
    b = add_robots(loaded, TALENTS, 2)
    ra, _, acts_a = run_episode(a, greedy_nearest_policy)
    rb, _, acts_b = run_episode(b, greedy_nearest_policy)
    assert acts_a == acts_b
    assert episode_reward(ra) == episode_reward(rb)


def test_invalid_scenarios_rejected():
    with pytest.raises(ValueError):
        generate_scenario(0, 5.0, 120.0, seed=0)
    scenario = generate_scenario(2, 5.0, 120.0, seed=0)
    with pytest.raises(ValueError):
        add_robots(scenario, TALENTS, 0)
