"""NSGA-II search over the morphology box, maximizing all talents.

Everything here uses the maximize-all convention: point ``a`` dominates ``b``
iff ``a >= b`` componentwise with at least one strict improvement.  Constraint
handling is constrained-domination: feasible beats infeasible, infeasible
candidates are ranked among themselves by total violation.

Operators are the canonical SBX crossover (eta=15) and polynomial mutation
(eta=20, rate 1/n_vars); selection is binary tournament on (rank, crowding).
"""

from dataclasses import dataclass, field

import numpy as np

from codesign import fileio
from codesign.morphology import (
    DEFAULT_PHYSICS,
    MorphologyBounds,
    constraints_array,
    talents_array,
)

DUPLICATE_TOL = 1e-9


class InfeasibleSearchError(RuntimeError):
    """Raised when no feasible design can be found within the attempt budget."""


@dataclass
class GaConfig:
    population_size: int = 120
    generations: int = 40
    runs: int = 6
    crossover_rate: float = 0.9
    mutation_rate: float | None = None  # defaults to 1/n_vars
    eta_crossover: float = 15.0
    eta_mutation: float = 20.0
    seed: int = 0
    init_attempt_budget: int = 50  # multiples of population_size

    def validate(self):
        if self.population_size < 4 or self.population_size % 2:
            raise ValueError("population_size must be even and >= 4")
        if not (0.0 <= self.crossover_rate <= 1.0):
            raise ValueError("crossover_rate must lie in [0, 1]")
        if self.mutation_rate is not None and not (0.0 <= self.mutation_rate <= 1.0):
            raise ValueError("mutation_rate must lie in [0, 1]")
        if self.generations < 1 or self.runs < 1:
            raise ValueError("generations and runs must be >= 1")
        return self


@dataclass
class ParetoArchive:
    """Mutually non-dominated, feasible (morphology, talent) pairs."""

    morphologies: np.ndarray          # (n, n_vars)
    talents: np.ndarray               # (n, n_objectives)
    provenance: np.ndarray = field(default=None)  # run id per entry

    def __post_init__(self):
        self.morphologies = np.asarray(self.morphologies, dtype=np.float64)
        self.talents = np.asarray(self.talents, dtype=np.float64)
        if self.provenance is None:
            self.provenance = np.zeros(len(self.talents), dtype=np.int64)
        else:
            self.provenance = np.asarray(self.provenance, dtype=np.int64)

    def __len__(self):
        return len(self.talents)

    def save(self, path):
        n_vars = self.morphologies.shape[1]
        header = [f"x{i}" for i in range(n_vars)] + ["range_km", "speed_mps", "capacity"] + ["run"]
        rows = [
            list(self.morphologies[i]) + list(self.talents[i]) + [int(self.provenance[i])]
            for i in range(len(self))
        ]
        fileio.write_csv(path, header, rows)

    @classmethod
    def load(cls, path):
        header, data = fileio.read_csv(path)
        n_vars = sum(1 for h in header if h.startswith("x"))
        return cls(
            morphologies=data[:, :n_vars],
            talents=data[:, n_vars : n_vars + 3],
            provenance=data[:, -1].astype(np.int64),
        )


# -- domination machinery -------------------------------------------------

def _domination_matrix(points):
    """Boolean matrix D where D[i, j] means point i dominates point j."""
    P = np.asarray(points, dtype=np.float64)
    ge = np.all(P[:, None, :] >= P[None, :, :], axis=2)
    gt = np.any(P[:, None, :] > P[None, :, :], axis=2)
    return ge & gt


def non_dominated_sort(points):
    """Sort points into fronts; front 0 is dominated by nobody.

    Returns a list of index lists.  Empty input yields an empty list.
    """
    P = np.asarray(points, dtype=np.float64)
    if len(P) == 0:
        return []
    if not np.all(np.isfinite(P)):
        raise ValueError("points must be finite")
    dominates = _domination_matrix(P)
    n_dominators = dominates.sum(axis=0)
    fronts = []
    remaining = np.ones(len(P), dtype=bool)
    counts = n_dominators.copy()
    while remaining.any():
        current = np.nonzero(remaining & (counts == 0))[0]
        fronts.append([int(i) for i in current])
        remaining[current] = False
        counts = counts - dominates[current].sum(axis=0)
    return fronts


def _constrained_sort_keys(objectives, violations):
    """Fronts under constrained domination; returns rank array."""
    n = len(objectives)
    feasible = violations <= 0.0
    rank = np.full(n, -1, dtype=np.int64)
    offset = 0
    if feasible.any():
        idx = np.nonzero(feasible)[0]
        for depth, front in enumerate(non_dominated_sort(objectives[idx])):
            rank[idx[front]] = depth
        offset = rank[idx].max() + 1
    if (~feasible).any():
        idx = np.nonzero(~feasible)[0]
        order = np.argsort(violations[idx], kind="stable")
        rank[idx[order]] = offset + np.arange(len(idx))
    return rank


def crowding_distance(points):
    """Crowding distance of each point within one front (maximize-all)."""
    P = np.asarray(points, dtype=np.float64)
    n, m = P.shape
    if n <= 2:
        return np.full(n, np.inf)
    dist = np.zeros(n)
    for j in range(m):
        order = np.argsort(P[:, j], kind="stable")
        span = P[order[-1], j] - P[order[0], j]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span <= 0:
            continue
        gaps = (P[order[2:], j] - P[order[:-2], j]) / span
        dist[order[1:-1]] += gaps
    return dist


# -- the NSGA-II core ------------------------------------------------------

def _sbx_crossover(parents_a, parents_b, lower, upper, rate, eta, rng):
    """Simulated binary crossover; returns two child arrays."""
    n, d = parents_a.shape
    child_a, child_b = parents_a.copy(), parents_b.copy()
    do_pair = rng.random(n) <= rate
    do_var = (rng.random((n, d)) <= 0.5) & do_pair[:, None]
    u = rng.random((n, d))
    beta = np.where(u <= 0.5, (2 * u) ** (1 / (eta + 1)), (1 / (2 * (1 - u))) ** (1 / (eta + 1)))
    mean = 0.5 * (parents_a + parents_b)
    diff = 0.5 * beta * np.abs(parents_a - parents_b)
    low = np.where(do_var, mean - diff, child_a)
    high = np.where(do_var, mean + diff, child_b)
    swap = rng.random((n, d)) < 0.5
    child_a = np.where(swap, high, low)
    child_b = np.where(swap, low, high)
    return np.clip(child_a, lower, upper), np.clip(child_b, lower, upper)


def _polynomial_mutation(X, lower, upper, rate, eta, rng):
    n, d = X.shape
    do = rng.random((n, d)) < rate
    u = rng.random((n, d))
    span = upper - lower
    delta_lo = (X - lower) / span
    delta_hi = (upper - X) / span
    mut_lo = (2 * u + (1 - 2 * u) * (1 - delta_lo) ** (eta + 1)) ** (1 / (eta + 1)) - 1
    mut_hi = 1 - (2 * (1 - u) + 2 * (u - 0.5) * (1 - delta_hi) ** (eta + 1)) ** (1 / (eta + 1))
    delta = np.where(u < 0.5, mut_lo, mut_hi)
    return np.clip(np.where(do, X + delta * span, X), lower, upper)


def _select_next_population(X, Y, V, pop_size):
    """Elitist (mu+lambda) environmental selection; returns kept indices."""
    rank = _constrained_sort_keys(Y, V)
    kept = []
    for depth in np.unique(rank):
        block = np.nonzero(rank == depth)[0]
        if len(kept) + len(block) <= pop_size:
            kept.extend(int(b) for b in block)
        else:
            crowd = crowding_distance(Y[block])
            take = pop_size - len(kept)
            chosen = block[np.argsort(-crowd, kind="stable")[:take]]
            kept.extend(sorted(int(c) for c in chosen))
        if len(kept) >= pop_size:
            break
    return np.array(kept, dtype=np.int64)


def _tournament(rank, crowd, rng, count):
    a = rng.integers(0, len(rank), size=count)
    b = rng.integers(0, len(rank), size=count)
    better_b = (rank[b] < rank[a]) | ((rank[b] == rank[a]) & (crowd[b] > crowd[a]))
    return np.where(better_b, b, a)


def nsga2(objective_fn, constraint_fn, lower, upper, config: GaConfig, seed=None):
    """Generic elitist NSGA-II, maximizing all objectives.

    ``objective_fn(X) -> (n, m)`` and ``constraint_fn(X) -> (n, k)`` (values
    <= 0 feasible; pass None for unconstrained) are vectorized over rows.
    Returns (X, Y, violations) of the final population.
    """
    config.validate()
    rng = np.random.default_rng(config.seed if seed is None else seed)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    d = len(lower)
    pop = config.population_size
    mutation_rate = config.mutation_rate if config.mutation_rate is not None else 1.0 / d

    def evaluate(X):
        Y = objective_fn(X)
        if constraint_fn is None:
            V = np.zeros(len(X))
        else:
            G = constraint_fn(X)
            V = np.clip(G, 0.0, None).sum(axis=1)
        return Y, V

    X = lower + rng.random((pop, d)) * (upper - lower)
    Y, V = evaluate(X)
    attempts = 0
    while not np.any(V <= 0.0):
        attempts += 1
        if attempts > config.init_attempt_budget:
            raise InfeasibleSearchError(
                f"no feasible design found in {attempts * pop} samples; check bounds"
            )
        X = lower + rng.random((pop, d)) * (upper - lower)
        Y, V = evaluate(X)

    for _ in range(config.generations):
        rank = _constrained_sort_keys(Y, V)
        crowd = np.zeros(pop)
        for depth in np.unique(rank):
            block = np.nonzero(rank == depth)[0]
            crowd[block] = crowding_distance(Y[block])
        parents = _tournament(rank, crowd, rng, pop)
        pa, pb = X[parents[0::2]], X[parents[1::2]]
        ca, cb = _sbx_crossover(pa, pb, lower, upper, config.crossover_rate, config.eta_crossover, rng)
        children = np.concatenate([ca, cb], axis=0)
        children = _polynomial_mutation(children, lower, upper, mutation_rate, config.eta_mutation, rng)
        Yc, Vc = evaluate(children)
        X_all = np.concatenate([X, children], axis=0)
        Y_all = np.concatenate([Y, Yc], axis=0)
        V_all = np.concatenate([V, Vc], axis=0)
        kept = _select_next_population(X_all, Y_all, V_all, pop)
        X, Y, V = X_all[kept], Y_all[kept], V_all[kept]

    return X, Y, V


def nsga2_run(config: GaConfig, bounds: MorphologyBounds, phys=DEFAULT_PHYSICS, seed=None, run_id=0) -> ParetoArchive:
    """One NSGA-II run over the morphology box; archive = feasible front 0."""
    bounds.validate()
    lower, upper = bounds.arrays()
    X, Y, V = nsga2(
        lambda Z: talents_array(Z, phys),
        lambda Z: constraints_array(Z, phys),
        lower,
        upper,
        config,
        seed=seed,
    )
    feasible = V <= 0.0
    if not feasible.any():
        raise InfeasibleSearchError("final population contains no feasible design")
    Xf, Yf = X[feasible], Y[feasible]
    front = non_dominated_sort(Yf)[0]
    archive = ParetoArchive(
        morphologies=Xf[front],
        talents=Yf[front],
        provenance=np.full(len(front), run_id, dtype=np.int64),
    )
    return _deduplicate(archive)


def _deduplicate(archive: ParetoArchive) -> ParetoArchive:
    """Drop entries whose talent vectors coincide within DUPLICATE_TOL."""
    order = np.lexsort(archive.talents.T[::-1])
    keep_sorted = np.ones(len(archive), dtype=bool)
    T = archive.talents[order]
    for i in range(1, len(T)):
        if np.all(np.abs(T[i] - T[i - 1]) <= DUPLICATE_TOL):
            keep_sorted[i] = False
    kept = np.sort(order[keep_sorted])
    return ParetoArchive(
        archive.morphologies[kept], archive.talents[kept], archive.provenance[kept]
    )


def merge_runs(archives) -> ParetoArchive:
    """Union of archives filtered to the global front 0, deduplicated."""
    archives = list(archives)
    if not archives:
        raise ValueError("merge_runs requires at least one archive")
    X = np.concatenate([a.morphologies for a in archives], axis=0)
    Y = np.concatenate([a.talents for a in archives], axis=0)
    run = np.concatenate([a.provenance for a in archives], axis=0)
    front = non_dominated_sort(Y)[0]
    return _deduplicate(ParetoArchive(X[front], Y[front], run[front]))


def multi_run_pareto(config: GaConfig, bounds: MorphologyBounds, phys=DEFAULT_PHYSICS) -> ParetoArchive:
    """The multi-run protocol: independent runs merged by a final sort."""
    archives = []
    for run_id in range(config.runs):
        run_seed = int(np.random.SeedSequence((config.seed, run_id)).generate_state(1)[0])
        archives.append(nsga2_run(config, bounds, phys, seed=run_seed, run_id=run_id))
    return merge_runs(archives)


# -- hypervolume -----------------------------------------------------------

def hypervolume(points, reference) -> float:
    """Exact hypervolume dominated by ``points`` above ``reference``.

    Maximize-all convention: the volume of the union of boxes
    ``[reference, p]`` for points with ``p >= reference``.  Supports 2 or 3
    objectives.
    """
    P = np.asarray(points, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if P.ndim != 2:
        raise ValueError("points must be 2-d")
    P = P[np.all(P > ref, axis=1)]
    if len(P) == 0:
        return 0.0
    front = non_dominated_sort(P)[0]
    P = P[front]
    if P.shape[1] == 2:
        return _hv2d(P, ref)
    if P.shape[1] == 3:
        return _hv3d(P, ref)
    raise ValueError("hypervolume supports 2 or 3 objectives")


def _hv2d(P, ref) -> float:
    order = np.argsort(-P[:, 0], kind="stable")
    P = P[order]
    volume = 0.0
    prev_y = ref[1]
    for x, y in P:
        if y <= prev_y:
            continue
        volume += (x - ref[0]) * (y - prev_y)
        prev_y = y
    return float(volume)


def _hv3d(P, ref) -> float:
    # sweep descending in z; accumulate 2-d slab areas
    order = np.argsort(-P[:, 2], kind="stable")
    P = P[order]
    volume = 0.0
    zs = np.append(P[:, 2], ref[2])
    active = []
    for i in range(len(P)):
        active.append(P[i, :2])
        depth = zs[i] - zs[i + 1]
        if depth > 0:
            volume += _hv2d(np.asarray(active), ref[:2]) * depth
    return float(volume)
