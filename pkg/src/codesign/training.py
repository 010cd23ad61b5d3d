"""Talent-infused actor-critic training, fixed-talent baselines, evaluation.

Rollouts follow the co-design protocol: at the start of each episode the unit
talent outputs are sampled once from the actor's input-free Gaussian head,
decoded through the boundary model, and every robot in the fleet is built from
the decoded talents (identical robots).  Only behavioral actions are sampled
afterwards; the sparse team reward arrives at episode end.  The PPO ratio of
an episode's first step includes the talent log-probability, so the talent
choice is optimized by the same clipped surrogate as the behavior.

Because the reward is terminal-only, the default advantage estimate is the
discounted Monte-Carlo return minus the state-talent value; the one-step
temporal-difference form (delta = r + gamma * V(s') - V(s)) is available as
``advantage_mode="td0"``.

Episodes inside a batch run in lockstep so network forwards are batched; the
environments themselves stay independent (no shared mutable state).  All
randomness derives from (seed, episode index) streams, which makes training
deterministic, resumable, and replayable.
"""

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from codesign import autodiff as ad
from codesign import fileio
from codesign.boundary import TalentBoundaryModel, decode_talents, unit_from_talents
from codesign.morphology import TalentVector
from codesign.networks import (
    Actor,
    ActorConfig,
    Critic,
    CriticConfig,
    TalentScales,
    featurize,
    gaussian_log_prob,
    gaussian_log_prob_numpy,
    load_checkpoint,
    normalize_adjacency,
    sample_unit_talents,
    save_checkpoint,
)
from codesign.sim import (
    EnvConfig,
    add_robots,
    episode_done,
    episode_reward,
    feasible_actions,
    generate_scenario,
    next_decider,
    observe,
    random_feasible_policy,
    run_episode,
    step,
)

HISTORY_COLUMNS = (
    "episode",
    "reward_mean",
    "range_km",
    "speed_mps",
    "capacity",
    "talent_std",
    "policy_loss",
    "value_loss",
    "entropy",
    "clip_frac",
)


class TrainingDiverged(RuntimeError):
    """Raised when a loss turns non-finite; carries a diagnostic dump."""


@dataclass
class TrainConfig:
    total_episodes: int = 20_000
    episodes_per_batch: int = 64
    epochs_per_batch: int = 4
    clip_ratio: float = 0.2
    gamma: float = 1.0
    lr_actor: float = 3e-4
    lr_talent: float = 3e-3  # talent terms enter 1-in-T steps; a faster head compensates
    lr_critic: float = 1e-3
    entropy_coef: float = 0.01
    seed: int = 0
    advantage_mode: str = "mc"  # "mc" or "td0"
    normalize_advantages: bool = True
    checkpoint_every: int = 0   # batches between checkpoints; 0 = final only
    hidden: int = 64
    encoder_layers: int = 2
    heads: int = 4
    talent_hidden: int = 16
    value_hidden: int = 64
    init_std: float = 0.3
    std_floor: float = 0.02

    def validate(self):
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError("clip_ratio must lie in (0, 1)")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.advantage_mode not in ("mc", "td0"):
            raise ValueError("advantage_mode must be 'mc' or 'td0'")
        if self.total_episodes < 1 or self.episodes_per_batch < 1:
            raise ValueError("episode counts must be positive")
        return self

    def actor_config(self) -> ActorConfig:
        return ActorConfig(
            hidden=self.hidden,
            encoder_layers=self.encoder_layers,
            heads=self.heads,
            talent_hidden=self.talent_hidden,
            init_std=self.init_std,
            std_floor=self.std_floor,
        )

    def critic_config(self) -> CriticConfig:
        return CriticConfig(
            hidden=self.hidden,
            encoder_layers=self.encoder_layers,
            value_hidden=self.value_hidden,
        )


@dataclass
class EpisodeBatch:
    """Flattened step data plus per-episode talent records."""

    node_feats: np.ndarray      # (S, N+1, 4)
    ctx: np.ndarray             # (S, CTX_DIM)
    mask: np.ndarray            # (S, N+1)
    actions: np.ndarray         # (S,)
    logp_actions: np.ndarray    # (S,)
    episode_ids: np.ndarray     # (S,) index into per-episode arrays
    first_flags: np.ndarray     # (S,) 1.0 on each episode's first step
    adjacency: np.ndarray       # (E, N+1, N+1) row-normalized
    rewards: np.ndarray         # (E,)
    raw_units: np.ndarray       # (E, 2)
    unit_talents: np.ndarray    # (E, 2)
    talent_logps: np.ndarray    # (E,)
    talents: np.ndarray         # (E, 3)
    talents_norm: np.ndarray    # (E, 3)
    episode_seeds: np.ndarray   # (E,)
    talents_fixed: bool = False

    @property
    def n_steps(self) -> int:
        return len(self.actions)

    @property
    def n_episodes(self) -> int:
        return len(self.rewards)

    def step_adjacency(self) -> np.ndarray:
        return self.adjacency[self.episode_ids]

    def step_talents_norm(self) -> np.ndarray:
        return self.talents_norm[self.episode_ids]


def _episode_rngs(seed, episode_index):
    """Three decoupled streams (scenario, talent, action) per episode."""
    children = np.random.SeedSequence((int(seed), int(episode_index))).spawn(3)
    return tuple(np.random.default_rng(c) for c in children)


def rollout(
    actor: Actor,
    boundary: TalentBoundaryModel,
    env_cfg: EnvConfig,
    episode_indices,
    scales: TalentScales,
    seed,
    fixed_talents: TalentVector = None,
    greedy=False,
) -> EpisodeBatch:
    """Run the given episodes in lockstep with batched policy inference."""
    env_cfg.validate()
    episode_indices = list(episode_indices)
    n_episodes = len(episode_indices)
    mean, std = actor.talent_numpy()

    states, adjacencies = [], []
    raw_units = np.zeros((n_episodes, len(mean)))
    unit_talents = np.zeros((n_episodes, len(mean)))
    talent_logps = np.zeros(n_episodes)
    talents = np.zeros((n_episodes, 3))
    talents_norm = np.zeros((n_episodes, 3))
    action_rngs = []
    for k, episode_index in enumerate(episode_indices):
        scenario_rng, talent_rng, action_rng = _episode_rngs(seed, episode_index)
        action_rngs.append(action_rng)
        if fixed_talents is not None:
            decoded = fixed_talents
            u = unit_from_talents(decoded, boundary)
            raw, logp = u.copy(), 0.0
        elif greedy:
            raw = mean.copy()
            u = np.clip(raw, 0.0, 1.0)
            decoded = decode_talents(u, boundary)
            logp = gaussian_log_prob_numpy(raw, mean, std)
        else:
            raw, u, logp = sample_unit_talents(mean, std, talent_rng)
            decoded = decode_talents(u, boundary)
        raw_units[k], unit_talents[k], talent_logps[k] = raw, u, logp
        talents[k] = decoded.to_array()
        talents_norm[k] = scales.normalize(decoded)
        scenario = generate_scenario(
            env_cfg.n_tasks, env_cfg.area_km2, env_cfg.duration_min, scenario_rng
        )
        state = add_robots(scenario, decoded, env_cfg.n_robots, unit_talents=u)
        states.append(state)
        adjacencies.append(normalize_adjacency(state.graph.adjacency_ext))

    adjacency = np.stack(adjacencies)
    rewards = np.zeros(n_episodes)
    step_feats, step_ctx, step_mask = [], [], []
    step_actions, step_logps, step_episode, step_first = [], [], [], []
    active = [k for k in range(n_episodes) if not episode_done(states[k])]
    seen_first = np.zeros(n_episodes, dtype=bool)
    for k in range(n_episodes):
        if k not in active:
            rewards[k] = episode_reward(states[k])

    while active:
        feats_block, ctx_block, mask_block, decider = [], [], [], []
        for k in active:
            ridx = next_decider(states[k])
            obs = observe(states[k], ridx)
            feats, ctx = featurize(obs)
            feats_block.append(feats)
            ctx_block.append(ctx)
            mask_block.append(feasible_actions(states[k], ridx))
            decider.append(ridx)
        feats_block = np.stack(feats_block)
        ctx_block = np.stack(ctx_block)
        mask_block = np.stack(mask_block)
        logp_block = actor.log_probs_numpy(
            feats_block, adjacency[active], ctx_block, mask_block
        )
        still_active = []
        for i, k in enumerate(active):
            if greedy:
                action = int(np.argmax(logp_block[i]))
            else:
                probs = np.exp(logp_block[i])
                probs /= probs.sum()
                action = int(action_rngs[k].choice(len(probs), p=probs))
            step_feats.append(feats_block[i])
            step_ctx.append(ctx_block[i])
            step_mask.append(mask_block[i])
            step_actions.append(action)
            step_logps.append(logp_block[i, action])
            step_episode.append(k)
            step_first.append(0.0 if seen_first[k] else 1.0)
            seen_first[k] = True
            _, _, done = step(states[k], decider[i], action)
            if done:
                rewards[k] = episode_reward(states[k])
            else:
                still_active.append(k)
        active = still_active

    return EpisodeBatch(
        node_feats=np.asarray(step_feats),
        ctx=np.asarray(step_ctx),
        mask=np.asarray(step_mask),
        actions=np.asarray(step_actions, dtype=np.int64),
        logp_actions=np.asarray(step_logps),
        episode_ids=np.asarray(step_episode, dtype=np.int64),
        first_flags=np.asarray(step_first),
        adjacency=adjacency,
        rewards=rewards,
        raw_units=raw_units,
        unit_talents=unit_talents,
        talent_logps=talent_logps,
        talents=talents,
        talents_norm=talents_norm,
        episode_seeds=np.asarray(episode_indices, dtype=np.int64),
        talents_fixed=fixed_talents is not None,
    )


def compute_advantages(batch: EpisodeBatch, critic: Critic, gamma, mode="mc"):
    """Per-step advantages and value targets for the terminal-reward episodes."""
    values = critic.value_numpy(
        batch.node_feats, batch.step_adjacency(), batch.ctx, batch.step_talents_norm()
    )
    advantages = np.zeros(batch.n_steps)
    targets = np.zeros(batch.n_steps)
    for e in range(batch.n_episodes):
        idx = np.nonzero(batch.episode_ids == e)[0]
        v = values[idx]
        T = len(idx)
        reward = batch.rewards[e]
        if mode == "mc":
            returns = reward * gamma ** (T - 1 - np.arange(T))
            targets[idx] = returns
            advantages[idx] = returns - v
        elif mode == "td0":
            delta = np.empty(T)
            delta[:-1] = gamma * v[1:] - v[:-1]
            delta[-1] = reward - v[-1]
            advantages[idx] = delta
            targets[idx] = v + delta
        else:
            raise ValueError(f"unknown advantage mode {mode!r}")
    return advantages, targets


def ppo_losses(actor, batch, advantages, clip_ratio, entropy_coef, include_talents):
    """Clipped-surrogate policy loss and entropy bonus as tensors."""
    logp_all = actor.log_probs(batch.node_feats, batch.step_adjacency(), batch.ctx, batch.mask)
    chosen = ad.reshape(ad.gather(logp_all, batch.actions[:, None], axis=-1), (-1,))
    old_logp = batch.logp_actions.copy()
    if include_talents:
        mean, std = actor.talent()
        talent_lp = gaussian_log_prob(batch.raw_units, mean, std)
        new_logp = chosen + ad.take(talent_lp, batch.episode_ids) * batch.first_flags
        old_logp = old_logp + batch.talent_logps[batch.episode_ids] * batch.first_flags
    else:
        new_logp = chosen
    ratio = ad.exp(new_logp - old_logp)
    unclipped = ratio * advantages
    clipped = ad.clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * advantages
    policy_loss = -ad.tmean(ad.minimum(unclipped, clipped))

    # entropy bonus on the action distribution only; talent exploration is
    # governed by the head's learnable std, which training is meant to narrow
    probs = ad.exp(logp_all)
    entropy = ad.tmean(-ad.tsum(probs * logp_all, axis=-1))
    loss = policy_loss - entropy_coef * entropy
    clip_fraction = float(np.mean(np.abs(ratio.data - 1.0) > clip_ratio))
    return loss, policy_loss, entropy, clip_fraction


def ppo_update(
    actor: Actor,
    critic: Critic,
    batch: EpisodeBatch,
    config: TrainConfig,
    opt_actor: ad.Adam,
    opt_critic: ad.Adam,
    opt_talent: ad.Adam = None,
):
    """Run the clipped PPO epochs over one batch; returns diagnostics."""
    advantages, targets = compute_advantages(batch, critic, config.gamma, config.advantage_mode)
    if config.normalize_advantages:
        spread = advantages.std()
        advantages = (advantages - advantages.mean()) / max(spread, 1e-8)
    include_talents = not batch.talents_fixed
    diag = {}
    step_adj = batch.step_adjacency()
    step_talents = batch.step_talents_norm()
    for _ in range(config.epochs_per_batch):
        loss, policy_loss, entropy, clip_fraction = ppo_losses(
            actor, batch, advantages, config.clip_ratio, config.entropy_coef, include_talents
        )
        if not np.isfinite(loss.data):
            raise TrainingDiverged(
                f"non-finite actor loss: policy={policy_loss.data!r} entropy={entropy.data!r} "
                f"reward_mean={batch.rewards.mean()!r} adv_norm={np.linalg.norm(advantages)!r}"
            )
        opt_actor.zero_grad()
        if opt_talent is not None:
            opt_talent.zero_grad()
        loss.backward()
        opt_actor.step()
        if opt_talent is not None:
            opt_talent.step()

        v = critic.value(batch.node_feats, step_adj, batch.ctx, step_talents)
        err = v - targets
        value_loss = ad.tmean(err * err)
        if not np.isfinite(value_loss.data):
            raise TrainingDiverged(f"non-finite critic loss; targets norm {np.linalg.norm(targets)!r}")
        opt_critic.zero_grad()
        value_loss.backward()
        opt_critic.step()

        diag = {
            "policy_loss": float(policy_loss.data),
            "value_loss": float(value_loss.data),
            "entropy": float(entropy.data),
            "clip_frac": clip_fraction,
        }
    return diag


def _stage_seed(seed, name) -> int:
    return fileio.derive_seed(seed, name)


def _history_row(episodes_seen, batch, actor, boundary, fixed_talents, diag):
    if fixed_talents is not None:
        decoded = fixed_talents
        std_mean = 0.0
    else:
        mean, std = actor.talent_numpy()
        decoded = decode_talents(np.clip(mean, 0.0, 1.0), boundary)
        std_mean = float(std.mean())
    return {
        "episode": episodes_seen,
        "reward_mean": float(batch.rewards.mean()),
        "range_km": decoded.flight_range,
        "speed_mps": decoded.nominal_speed,
        "capacity": decoded.package_capacity,
        "talent_std": std_mean,
        "policy_loss": diag.get("policy_loss", 0.0),
        "value_loss": diag.get("value_loss", 0.0),
        "entropy": diag.get("entropy", 0.0),
        "clip_frac": diag.get("clip_frac", 0.0),
    }


def save_history(path, history):
    fileio.write_csv(path, HISTORY_COLUMNS, [[row[c] for c in HISTORY_COLUMNS] for row in history])


def load_history(path):
    header, data = fileio.read_csv(path)
    return [dict(zip(header, row)) for row in data]


def train(
    config: TrainConfig,
    boundary: TalentBoundaryModel,
    env_cfg: EnvConfig,
    out_dir=None,
    resume=False,
    fixed_talents: TalentVector = None,
):
    """Full training loop; returns (actor, critic, history rows).

    With ``out_dir`` set, checkpoints (parameters, optimizer state, batch
    cursor) and the history table are written there and ``resume=True``
    continues a partial run deterministically.
    """
    config.validate()
    scales = TalentScales.from_boundary(boundary)
    actor = Actor(config.actor_config(), seed=_stage_seed(config.seed, "actor-init"))
    critic = Critic(config.critic_config(), seed=_stage_seed(config.seed, "critic-init"))

    def build_optimizers(actor, critic):
        behavior = {k: actor.params[k] for k in actor.behavior_param_names()}
        opt_actor = ad.Adam(behavior, lr=config.lr_actor)
        opt_talent = None
        if fixed_talents is None:
            talent = {k: actor.params[k] for k in actor.talent_param_names()}
            opt_talent = ad.Adam(talent, lr=config.lr_talent)
        opt_critic = ad.Adam(critic.params, lr=config.lr_critic)
        return opt_actor, opt_talent, opt_critic

    opt_actor, opt_talent, opt_critic = build_optimizers(actor, critic)

    n_batches = math.ceil(config.total_episodes / config.episodes_per_batch)
    history = []
    start_batch = 0

    ckpt_path = None if out_dir is None else f"{out_dir}/checkpoint.txt"
    hist_path = None if out_dir is None else f"{out_dir}/history.csv"
    if resume and ckpt_path is not None:
        import os

        if os.path.exists(ckpt_path):
            loaded_actor, loaded_critic, meta, opt_states = load_checkpoint(ckpt_path)
            if meta.get("train_config") == asdict(config):
                actor, critic = loaded_actor, loaded_critic
                opt_actor, opt_talent, opt_critic = build_optimizers(actor, critic)
                for tag, opt in (("actor", opt_actor), ("talent", opt_talent), ("critic", opt_critic)):
                    if opt is not None and tag in opt_states:
                        opt.load_state_arrays(opt_states[tag])
                start_batch = int(meta["next_batch"])
                history = load_history(hist_path)
            # a checkpoint from a different configuration is ignored

    def write_state(next_batch):
        if ckpt_path is None:
            return
        optimizers = {"actor": opt_actor, "critic": opt_critic}
        if opt_talent is not None:
            optimizers["talent"] = opt_talent
        save_checkpoint(
            ckpt_path,
            actor,
            critic,
            meta={"next_batch": next_batch, "train_config": asdict(config)},
            optimizers=optimizers,
        )
        save_history(hist_path, history)

    for batch_index in range(start_batch, n_batches):
        first_episode = batch_index * config.episodes_per_batch
        count = min(config.episodes_per_batch, config.total_episodes - first_episode)
        indices = range(first_episode, first_episode + count)
        batch = rollout(
            actor,
            boundary,
            env_cfg,
            indices,
            scales,
            seed=config.seed,
            fixed_talents=fixed_talents,
        )
        diag = ppo_update(actor, critic, batch, config, opt_actor, opt_critic, opt_talent)
        history.append(
            _history_row(first_episode + count, batch, actor, boundary, fixed_talents, diag)
        )
        if config.checkpoint_every and (batch_index + 1) % config.checkpoint_every == 0:
            write_state(batch_index + 1)

    write_state(n_batches)
    return actor, critic, history


def talents_inside_band(talents: TalentVector, boundary: TalentBoundaryModel, tol=1e-6) -> bool:
    if not boundary.range_min - tol <= talents.flight_range <= boundary.range_max + tol:
        return False
    lo, hi = boundary.speed_bounds(talents.flight_range)
    return bool(lo[0] - tol <= talents.nominal_speed <= hi[0] + tol)


def train_fixed_talent_baseline(
    talents: TalentVector,
    config: TrainConfig,
    boundary: TalentBoundaryModel,
    env_cfg: EnvConfig,
    out_dir=None,
    resume=False,
):
    """Behavior-only training at a fixed talent point (sequential-design baseline)."""
    if not talents_inside_band(talents, boundary):
        warnings.warn(
            f"baseline talents {talents} lie outside the modeled Pareto band",
            stacklevel=2,
        )
    return train(
        config, boundary, env_cfg, out_dir=out_dir, resume=resume, fixed_talents=talents
    )


def baseline_talent_picks(archive):
    """Archive corner points standing in for sequential designs.

    Baseline A favors package capacity then speed; baseline B favors flight
    range with low capacity (lexicographic extremes of the merged archive).
    """
    T = archive.talents
    idx_a = np.lexsort((T[:, 1], T[:, 2]))[-1]
    idx_b = np.lexsort((-T[:, 2], T[:, 0]))[-1]
    return TalentVector.from_array(T[idx_a]), TalentVector.from_array(T[idx_b])


def evaluate(
    actor: Actor,
    boundary: TalentBoundaryModel,
    env_cfg: EnvConfig,
    scale_grid,
    episodes_per_scale,
    seed,
    fixed_talents: TalentVector = None,
):
    """Greedy evaluation across (n_tasks, n_robots) scales.

    Returns a list of dicts with completion-rate statistics per scale.
    """
    scales = TalentScales.from_boundary(boundary)
    results = []
    for n_tasks, n_robots in scale_grid:
        if n_tasks < 1 or n_robots < 1:
            raise ValueError(f"invalid scenario scale ({n_tasks}, {n_robots})")
        cfg = EnvConfig(
            n_tasks=n_tasks,
            n_robots=n_robots,
            area_km2=env_cfg.area_km2,
            duration_min=env_cfg.duration_min,
            deadline_floor_frac=env_cfg.deadline_floor_frac,
            recharge_full_min=env_cfg.recharge_full_min,
            idle_dwell_min=env_cfg.idle_dwell_min,
        )
        batch = rollout(
            actor,
            boundary,
            cfg,
            range(episodes_per_scale),
            scales,
            seed=_stage_seed(seed, f"eval-{n_tasks}-{n_robots}"),
            fixed_talents=fixed_talents,
            greedy=True,
        )
        rates = batch.rewards / 10.0
        results.append(
            {
                "n_tasks": n_tasks,
                "n_robots": n_robots,
                "episodes": episodes_per_scale,
                "median": float(np.median(rates)),
                "q1": float(np.quantile(rates, 0.25)),
                "q3": float(np.quantile(rates, 0.75)),
                "mean": float(rates.mean()),
            }
        )
    return results


def random_policy_mean_reward(env_cfg: EnvConfig, talents: TalentVector, episodes, seed) -> float:
    """Mean episode reward of the uniform random feasible policy."""
    total = 0.0
    for episode_index in range(episodes):
        scenario_rng, _, action_rng = _episode_rngs(seed, episode_index)
        scenario = generate_scenario(
            env_cfg.n_tasks, env_cfg.area_km2, env_cfg.duration_min, scenario_rng
        )
        state = add_robots(scenario, talents, env_cfg.n_robots)
        state, _, _ = run_episode(state, random_feasible_policy, action_rng)
        total += episode_reward(state)
    return total / episodes


def srta_study(
    bounds,
    ga_config,
    train_config: TrainConfig,
    env_cfg: EnvConfig,
    phys=None,
    eval_episodes=100,
    mrta_reference=None,
):
    """Single-robot co-design rerun of the whole pipeline plus scale contrast.

    Returns (archive, boundary, actor, report).  ``mrta_reference`` may carry
    the multi-robot evaluation results and talents to contrast against.
    """
    from codesign.boundary import fit_surface
    from codesign.morphology import DEFAULT_PHYSICS
    from codesign.pareto import multi_run_pareto

    phys = phys or DEFAULT_PHYSICS
    srta_bounds = bounds.srta_scaled().validate()
    archive = multi_run_pareto(ga_config, srta_bounds, phys)
    boundary = fit_surface(archive)

    single_env = EnvConfig(
        n_tasks=env_cfg.n_tasks,
        n_robots=1,
        area_km2=env_cfg.area_km2,
        duration_min=env_cfg.duration_min,
        deadline_floor_frac=env_cfg.deadline_floor_frac,
        recharge_full_min=env_cfg.recharge_full_min,
        idle_dwell_min=env_cfg.idle_dwell_min,
    )
    actor, critic, history = train(train_config, boundary, single_env)
    mean, std = actor.talent_numpy()
    decoded = decode_talents(np.clip(mean, 0.0, 1.0), boundary)
    scale_grid = [(env_cfg.n_tasks * k, 1) for k in (1, 2, 3)]
    results = evaluate(
        actor, boundary, single_env, scale_grid, eval_episodes, seed=train_config.seed
    )
    report = {
        "talents": {
            "range_km": decoded.flight_range,
            "speed_mps": decoded.nominal_speed,
            "capacity": decoded.package_capacity,
        },
        "unit_means": [float(v) for v in mean],
        "favors_speed": bool(mean[1] > 0.5 and mean[1] >= mean[0]),
        "completion_by_scale": results,
        "final_talent_std": float(std.mean()),
    }
    if mrta_reference is not None:
        report["mrta_reference"] = mrta_reference
    return archive, boundary, actor, report
