"""Event-driven, decentralized-asynchronous MRTA-Flood simulator.

A mission holds ``N_T`` task locations with flood deadlines and a fleet of
identical UAVs that start at a shared depot.  Robots decide asynchronously:
the robot whose ``busy_until`` is earliest selects the next task (or the
depot), the selected task is claimed immediately (peers see it as
unavailable), and the mission clock jumps from decision event to decision
event.  Deliveries are deterministic, so a claimed task is recorded complete
at its arrival timestamp; the arrival-versus-deadline check is still applied
defensively.  Visiting the depot refills packages and recharges the battery
linearly (50 minutes from empty to full by default).  Selecting the depot
while already there at full charge idles the robot for a fixed dwell so the
event clock always advances.

Reward is terminal only: ``10 * N_success / N_T`` at episode end.

Normalization conventions for observations (all features in [0, 1]):
positions are divided by the area side length, times and deadlines by the
mission duration, remaining range by the robot's own flight range, packages by
its own capacity, and the talent entries are the unit-interval decoder inputs.
Edge weights ``w_ij = 1 / (1 + sqrt(dx^2 + dy^2 + dtau^2))`` are computed on
raw node features and already lie in (0, 1]; the depot is appended as node 0
with its deadline taken as the mission duration.

A MissionState is confined to one worker; episodes parallelize across workers
with no shared mutable state.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from codesign.morphology import TalentVector

MPS_TO_KM_PER_MIN = 0.06


class MaskViolation(ValueError):
    """An action was submitted that the feasibility mask forbids."""


@dataclass
class EnvConfig:
    n_tasks: int = 50
    n_robots: int = 5
    area_km2: float = 5.0
    duration_min: float = 120.0
    deadline_floor_frac: float = 0.25
    recharge_full_min: float = 50.0
    idle_dwell_min: float = 5.0

    def validate(self):
        if self.n_tasks < 1 or self.n_robots < 1:
            raise ValueError("need at least one task and one robot")
        if self.area_km2 <= 0 or self.duration_min <= 0:
            raise ValueError("area and duration must be positive")
        return self

    @property
    def side_km(self) -> float:
        return math.sqrt(self.area_km2)


@dataclass
class TaskGraph:
    nodes: np.ndarray       # (N, 3): x km, y km, deadline min
    adjacency: np.ndarray   # (N, N) task-to-task edge weights
    depot: np.ndarray       # (2,)
    adjacency_ext: np.ndarray = None  # (N+1, N+1) with depot as node 0
    depot_dist: np.ndarray = None     # (N,) task -> depot distances

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.float64)
        self.depot = np.asarray(self.depot, dtype=np.float64)
        if self.adjacency_ext is None:
            duration = self.nodes[:, 2].max() if len(self.nodes) else 0.0
            feats = np.concatenate(
                [np.array([[self.depot[0], self.depot[1], duration]]), self.nodes], axis=0
            )
            self.adjacency_ext = edge_weights(feats)
        if self.depot_dist is None:
            self.depot_dist = np.linalg.norm(self.nodes[:, :2] - self.depot, axis=1)

    @property
    def n_tasks(self) -> int:
        return len(self.nodes)


def edge_weights(features) -> np.ndarray:
    """w_ij = 1 / (1 + euclidean distance between full node feature triples)."""
    F = np.asarray(features, dtype=np.float64)
    diff = F[:, None, :] - F[None, :, :]
    return 1.0 / (1.0 + np.sqrt((diff * diff).sum(axis=2)))


@dataclass
class RobotState:
    position: np.ndarray        # (2,) km
    remaining_range: float      # km
    packages_remaining: int
    busy_until: float           # min
    destination: int            # action index: 0 depot, i+1 task i
    talents: TalentVector

    @property
    def capacity(self) -> int:
        return int(math.floor(self.talents.package_capacity + 1e-9))

    @property
    def speed_km_min(self) -> float:
        return self.talents.nominal_speed * MPS_TO_KM_PER_MIN


@dataclass
class MissionState:
    graph: TaskGraph
    robots: list
    clock: float
    completed: np.ndarray       # (N,) bool
    expired: np.ndarray         # (N,) bool
    mission_duration: float
    config: EnvConfig
    unit_talents: np.ndarray = field(default_factory=lambda: np.zeros(2))
    completion_times: np.ndarray = None

    def __post_init__(self):
        if self.completion_times is None:
            self.completion_times = np.full(self.graph.n_tasks, np.nan)

    @property
    def open_tasks(self) -> np.ndarray:
        return ~(self.completed | self.expired)

    @property
    def n_success(self) -> int:
        return int(self.completed.sum())


@dataclass
class Observation:
    """The full per-robot state exposed to the policy (normalized features)."""

    node_features: np.ndarray   # (N+1, 4): x, y, deadline, open flag; depot row 0
    adjacency: np.ndarray       # (N+1, N+1) raw edge weights
    time: float                 # mission clock / duration
    own: np.ndarray             # (4,): x, y, range fraction, package fraction
    peers: np.ndarray           # (N_R-1, 5): dest x, dest y, range, packages, wait
    unit_talents: np.ndarray    # (2,)
    talents: TalentVector       # raw decoded talents (pass-through)


def generate_scenario(n_tasks, area_km2, duration_min, seed) -> MissionState:
    """Uniform random tasks and depot; deadlines uniform in [floor, duration]."""
    config = EnvConfig(
        n_tasks=n_tasks, n_robots=0, area_km2=area_km2, duration_min=duration_min
    )
    if n_tasks < 1:
        raise ValueError("n_tasks must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    side = config.side_km
    xy = rng.random((n_tasks, 2)) * side
    deadlines = duration_min * (
        config.deadline_floor_frac + (1.0 - config.deadline_floor_frac) * rng.random(n_tasks)
    )
    depot = rng.random(2) * side
    nodes = np.concatenate([xy, deadlines[:, None]], axis=1)
    graph = TaskGraph(nodes=nodes, adjacency=edge_weights(nodes), depot=depot)
    return MissionState(
        graph=graph,
        robots=[],
        clock=0.0,
        completed=np.zeros(n_tasks, dtype=bool),
        expired=np.zeros(n_tasks, dtype=bool),
        mission_duration=duration_min,
        config=config,
    )


def add_robots(scenario: MissionState, talents: TalentVector, n_robots, unit_talents=None) -> MissionState:
    """Fresh mission over the scenario's graph with an identical-robot fleet."""
    if n_robots < 1:
        raise ValueError("n_robots must be >= 1")
    capacity = int(math.floor(talents.package_capacity + 1e-9))
    robots = [
        RobotState(
            position=scenario.graph.depot.copy(),
            remaining_range=talents.flight_range,
            packages_remaining=capacity,
            busy_until=0.0,
            destination=0,
            talents=talents,
        )
        for _ in range(n_robots)
    ]
    config = EnvConfig(
        n_tasks=scenario.config.n_tasks,
        n_robots=n_robots,
        area_km2=scenario.config.area_km2,
        duration_min=scenario.config.duration_min,
        deadline_floor_frac=scenario.config.deadline_floor_frac,
        recharge_full_min=scenario.config.recharge_full_min,
        idle_dwell_min=scenario.config.idle_dwell_min,
    )
    return MissionState(
        graph=scenario.graph,
        robots=robots,
        clock=0.0,
        completed=np.zeros(scenario.graph.n_tasks, dtype=bool),
        expired=np.zeros(scenario.graph.n_tasks, dtype=bool),
        mission_duration=scenario.mission_duration,
        config=config,
        unit_talents=np.zeros(2) if unit_talents is None else np.clip(np.asarray(unit_talents, dtype=np.float64), 0.0, 1.0),
    )


def next_decider(state: MissionState) -> int:
    """Robot due to decide: earliest busy_until, ties to the lowest index."""
    times = np.array([r.busy_until for r in state.robots])
    return int(np.argmin(times))


def episode_done(state: MissionState) -> bool:
    if state.clock >= state.mission_duration:
        return True
    return bool(np.all(state.completed | state.expired))


def feasible_actions(state: MissionState, robot_idx) -> np.ndarray:
    """Boolean mask over {0..N_T}; index 0 (depot) is always feasible.

    A task is feasible iff it is open, the robot still carries a package, the
    remaining range covers the leg to the task plus the return to the depot
    (boundary inclusive), and the predicted arrival meets the deadline.
    """
    robot = state.robots[robot_idx]
    graph = state.graph
    mask = np.zeros(graph.n_tasks + 1, dtype=bool)
    mask[0] = True
    if robot.packages_remaining < 1:
        return mask
    speed = robot.speed_km_min
    if speed <= 0.0:
        return mask
    dist_to = np.linalg.norm(graph.nodes[:, :2] - robot.position, axis=1)
    arrival = state.clock + dist_to / speed
    mask[1:] = (
        state.open_tasks
        & (robot.remaining_range >= dist_to + graph.depot_dist)
        & (arrival <= graph.nodes[:, 2])
    )
    return mask


def step(state: MissionState, robot_idx, action):
    """Apply one decision and advance the clock to the next decision event.

    Returns (state, per-step reward 0.0, done).  The state object is updated
    in place and returned.  Submitting a masked action raises MaskViolation.
    """
    mask = feasible_actions(state, robot_idx)
    action = int(action)
    if action < 0 or action >= len(mask) or not mask[action]:
        raise MaskViolation(
            f"robot {robot_idx} chose masked action {action} at t={state.clock:.3f}"
        )
    robot = state.robots[robot_idx]
    depart = state.clock
    speed = max(robot.speed_km_min, 1e-12)

    if action == 0:
        dist = float(np.linalg.norm(robot.position - state.graph.depot))
        arrive = depart + dist / speed
        robot.remaining_range -= dist
        recharge = state.config.recharge_full_min * (
            1.0 - robot.remaining_range / robot.talents.flight_range
        )
        busy = arrive + recharge
        if busy <= depart:
            busy = depart + state.config.idle_dwell_min
        robot.position = state.graph.depot.copy()
        robot.remaining_range = robot.talents.flight_range
        robot.packages_remaining = robot.capacity
        robot.destination = 0
        robot.busy_until = busy
    else:
        task = action - 1
        target = state.graph.nodes[task, :2]
        dist = float(np.linalg.norm(robot.position - target))
        arrive = depart + dist / speed
        robot.remaining_range -= dist
        assert robot.remaining_range >= -1e-9, "mask must prevent negative range"
        robot.packages_remaining -= 1
        robot.position = target.copy()
        robot.destination = action
        robot.busy_until = arrive
        if arrive <= state.graph.nodes[task, 2]:
            state.completed[task] = True
            state.completion_times[task] = arrive
        else:  # unreachable through the mask; kept as a defensive path
            state.expired[task] = True

    new_clock = min(r.busy_until for r in state.robots)
    assert new_clock >= state.clock, "event clock must be monotone"
    state.clock = new_clock
    newly_expired = state.open_tasks & (state.graph.nodes[:, 2] < state.clock)
    state.expired |= newly_expired
    return state, 0.0, episode_done(state)


def episode_reward(state: MissionState) -> float:
    """Terminal team reward 10 * N_success / N_T; error if called early."""
    if not episode_done(state):
        raise RuntimeError("episode_reward called before the episode finished")
    return 10.0 * state.n_success / state.graph.n_tasks


def observe(state: MissionState, robot_idx) -> Observation:
    config = state.config
    side = config.side_km
    duration = state.mission_duration
    graph = state.graph
    robot = state.robots[robot_idx]

    depot_row = np.array([graph.depot[0] / side, graph.depot[1] / side, 1.0, 1.0])
    task_rows = np.concatenate(
        [
            graph.nodes[:, :2] / side,
            (graph.nodes[:, 2] / duration)[:, None],
            state.open_tasks.astype(np.float64)[:, None],
        ],
        axis=1,
    )
    node_features = np.concatenate([depot_row[None, :], task_rows], axis=0)

    def range_frac(r):
        return min(max(r.remaining_range / r.talents.flight_range, 0.0), 1.0)

    def package_frac(r):
        return r.packages_remaining / max(r.capacity, 1)

    own = np.array(
        [
            robot.position[0] / side,
            robot.position[1] / side,
            range_frac(robot),
            package_frac(robot),
        ]
    )
    peers = []
    for k, peer in enumerate(state.robots):
        if k == robot_idx:
            continue
        dest = graph.depot if peer.destination == 0 else graph.nodes[peer.destination - 1, :2]
        wait = min(max((peer.busy_until - state.clock) / duration, 0.0), 1.0)
        peers.append(
            [dest[0] / side, dest[1] / side, range_frac(peer), package_frac(peer), wait]
        )
    peers = np.asarray(peers, dtype=np.float64).reshape(len(state.robots) - 1, 5)

    return Observation(
        node_features=node_features,
        adjacency=graph.adjacency_ext,
        time=min(state.clock / duration, 1.0),
        own=own,
        peers=peers,
        unit_talents=state.unit_talents.copy(),
        talents=robot.talents,
    )


# -- scripted policies and episode drivers ----------------------------------

def random_feasible_policy(obs, mask, rng) -> int:
    """Uniform choice over every feasible action, the depot included."""
    return int(rng.choice(np.nonzero(mask)[0]))


def greedy_nearest_policy(obs, mask, rng=None) -> int:
    """Nearest feasible task by normalized position; depot when none remain."""
    tasks = np.nonzero(mask[1:])[0] + 1
    if len(tasks) == 0:
        return 0
    own_xy = obs.own[:2]
    dists = np.linalg.norm(obs.node_features[tasks, :2] - own_xy, axis=1)
    return int(tasks[np.argmin(dists)])


@dataclass(frozen=True)
class Event:
    time: float
    robot: int
    action: int
    outcome: str
    arrive: float


def run_episode(state: MissionState, policy, rng=None, collect_events=False):
    """Drive a mission to completion with a policy(obs, mask, rng) callable.

    Returns (state, events, actions); events is empty unless requested.
    """
    events, actions = [], []
    done = episode_done(state)
    while not done:
        ridx = next_decider(state)
        obs = observe(state, ridx)
        mask = feasible_actions(state, ridx)
        action = int(policy(obs, mask, rng))
        decide_time = state.clock
        robot = state.robots[ridx]
        was_idle = (
            action == 0
            and np.array_equal(robot.position, state.graph.depot)
            and robot.remaining_range == robot.talents.flight_range
        )
        state, _, done = step(state, ridx, action)
        actions.append(action)
        if collect_events:
            if action == 0:
                outcome = "idle" if was_idle else "depot"
            else:
                outcome = "delivered" if state.completed[action - 1] else "late"
            events.append(Event(decide_time, ridx, action, outcome, robot.busy_until))
    return state, events, actions


def replay_episode(scenario_seed, env_config: EnvConfig, talents: TalentVector, actions, unit_talents=None):
    """Rebuild the scenario and apply a recorded action sequence verbatim."""
    scenario = generate_scenario(
        env_config.n_tasks, env_config.area_km2, env_config.duration_min, scenario_seed
    )
    state = add_robots(scenario, talents, env_config.n_robots, unit_talents)
    it = iter(actions)
    done = episode_done(state)
    while not done:
        ridx = next_decider(state)
        try:
            action = next(it)
        except StopIteration:
            raise ValueError("action log shorter than the episode it replays")
        state, _, done = step(state, ridx, action)
    return state


def write_scenario(path, state: MissionState):
    """Persist a scenario (tasks, depot, duration) as delimited text."""
    from codesign.fileio import fmt

    with open(path, "w") as fh:
        fh.write(f"# duration_min = {fmt(state.mission_duration)}\n")
        fh.write(f"# area_km2 = {fmt(state.config.area_km2)}\n")
        fh.write(f"# depot = {fmt(state.graph.depot[0])} {fmt(state.graph.depot[1])}\n")
        fh.write("x_km,y_km,deadline_min\n")
        for x, y, tau in state.graph.nodes:
            fh.write(f"{fmt(x)},{fmt(y)},{fmt(tau)}\n")


def read_scenario(path) -> MissionState:
    """Rebuild a robot-less MissionState from a scenario file."""
    meta, rows = {}, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                meta[key.strip()] = value.strip()
            elif line and not line.startswith("x_km"):
                rows.append([float(v) for v in line.split(",")])
    nodes = np.asarray(rows, dtype=np.float64)
    depot = np.array([float(v) for v in meta["depot"].split()])
    duration = float(meta["duration_min"])
    config = EnvConfig(
        n_tasks=len(nodes), n_robots=0, area_km2=float(meta["area_km2"]), duration_min=duration
    )
    graph = TaskGraph(nodes=nodes, adjacency=edge_weights(nodes), depot=depot)
    return MissionState(
        graph=graph,
        robots=[],
        clock=0.0,
        completed=np.zeros(len(nodes), dtype=bool),
        expired=np.zeros(len(nodes), dtype=bool),
        mission_duration=duration,
        config=config,
    )


def write_event_log(path, header: dict, events):
    """One event per line: time, robot, action, outcome, arrival time."""
    from codesign.fileio import fmt

    with open(path, "w") as fh:
        for key, value in sorted(header.items()):
            fh.write(f"# {key} = {value}\n")
        fh.write("time,robot,action,outcome,arrive\n")
        for e in events:
            fh.write(f"{fmt(e.time)},{e.robot},{e.action},{e.outcome},{fmt(e.arrive)}\n")


def read_event_log(path):
    header, events = {}, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                header[key.strip()] = value.strip()
                continue
            if not line or line.startswith("time,"):
                continue
            t, robot, action, outcome, arrive = line.split(",")
            events.append(Event(float(t), int(robot), int(action), outcome, float(arrive)))
    return header, events
