"""End-to-end orchestration of the four co-design stages plus reporting.

``run_pipeline`` executes pareto -> boundary -> train -> finalize into an
output directory, recording a manifest with per-stage config digests and
artifact digests.  A rerun with the same configuration resumes: a stage is
skipped when its recorded config digest, input digests, and output digests all
still match, and any mismatch invalidates the stage together with everything
downstream.  All artifacts are deterministic functions of the master seed, so
two fresh runs with the same seed produce byte-identical trees (no timestamps
are ever written).

Per-stage seeds derive from the master seed by hashing (seed, stage name), so
one number reproduces the whole run.
"""

import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from codesign import fileio
from codesign.boundary import TalentBoundaryModel, decode_talents, fit_surface
from codesign.finalize import PsoConfig, finalize_morphology
from codesign.morphology import (
    DEFAULT_BOUNDS,
    DEFAULT_PHYSICS,
    MorphologyBounds,
    TalentVector,
    UavPhysics,
    geometric_constraints,
)
from codesign.pareto import GaConfig, ParetoArchive, hypervolume, multi_run_pareto
from codesign.sim import EnvConfig
from codesign.training import TrainConfig, load_history, train

STAGE_ORDER = ("pareto", "boundary", "train", "finalize")


class ConfigError(ValueError):
    """Malformed or inconsistent pipeline configuration."""


class StageFailure(RuntimeError):
    """A pipeline stage failed; details recorded in the manifest."""


class StageNeededError(RuntimeError):
    """A requested output needs an earlier stage or command to run first."""


@dataclass
class PipelineConfig:
    seed: int = 0
    bounds: MorphologyBounds = field(default_factory=lambda: DEFAULT_BOUNDS)
    physics: UavPhysics = field(default_factory=lambda: DEFAULT_PHYSICS)
    ga: GaConfig = field(default_factory=lambda: GaConfig(population_size=48, generations=24, runs=3))
    env: EnvConfig = field(default_factory=lambda: EnvConfig(n_tasks=10, n_robots=2, area_km2=36.0, duration_min=15.0))
    train: TrainConfig = field(default_factory=lambda: TrainConfig(total_episodes=20_000, hidden=32))
    pso: PsoConfig = field(default_factory=PsoConfig)
    eval_scales: tuple = ((10, 2), (20, 4), (30, 6))
    eval_episodes: int = 100

    def to_dict(self):
        return {
            "seed": self.seed,
            "bounds": {
                "lower": asdict(self.bounds.lower),
                "upper": asdict(self.bounds.upper),
                "srta_scale": self.bounds.srta_scale,
            },
            "physics": asdict(self.physics),
            "ga": asdict(self.ga),
            "env": asdict(self.env),
            "train": asdict(self.train),
            "pso": asdict(self.pso),
            "eval_scales": [list(s) for s in self.eval_scales],
            "eval_episodes": self.eval_episodes,
        }

    def stage_config(self, stage):
        d = self.to_dict()
        return {
            "pareto": {"seed": d["seed"], "bounds": d["bounds"], "physics": d["physics"], "ga": d["ga"]},
            "boundary": {},
            "train": {"seed": d["seed"], "env": d["env"], "train": d["train"]},
            "finalize": {"seed": d["seed"], "bounds": d["bounds"], "physics": d["physics"], "pso": d["pso"]},
        }[stage]


def desk_config(seed=0) -> PipelineConfig:
    """Small-budget configuration suitable for laptops and CI."""
    return PipelineConfig(seed=seed)


def full_scale_config(seed=0) -> PipelineConfig:
    """The full protocol: 120x40x6 search, 50 tasks / 5 robots, 350k episodes."""
    return PipelineConfig(
        seed=seed,
        ga=GaConfig(population_size=120, generations=40, runs=6),
        env=EnvConfig(n_tasks=50, n_robots=5, area_km2=5.0, duration_min=120.0),
        train=TrainConfig(total_episodes=350_000, hidden=64),
        eval_scales=((50, 5), (100, 10), (150, 15)),
        eval_episodes=250,
    )


def _parse_scales(text):
    scales = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        tasks, _, robots = part.partition("x")
        scales.append((int(tasks), int(robots)))
    if not scales:
        raise ConfigError(f"no scales parsed from {text!r}")
    return tuple(scales)


def load_pipeline_config(path, seed=None) -> PipelineConfig:
    """Build a PipelineConfig from a key/value config file.

    Recognized sections: [pipeline] (seed, eval_scales, eval_episodes),
    [pareto], [env], [train], [finalize], plus the morphology sections
    ([bounds.lower], [bounds.upper], [bounds], [physics]) shared with
    ``load_morphology_config``.  Unknown keys raise ConfigError.
    """
    from codesign.morphology import load_morphology_config

    config = PipelineConfig()
    try:
        bounds, physics = load_morphology_config(path)
        sections = fileio.read_kv(path)
    except (OSError, ValueError) as err:
        raise ConfigError(str(err)) from err

    def apply(section, target, casts):
        values = sections.get(section, {})
        unknown = set(values) - set(casts)
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
        updates = {}
        for key, raw in values.items():
            cast = casts[key]
            try:
                updates[key] = cast(raw)
            except ValueError as err:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from err
        return replace(target, **updates) if updates else target

    ga = apply(
        "pareto",
        config.ga,
        {
            "population_size": int,
            "generations": int,
            "runs": int,
            "crossover_rate": float,
            "mutation_rate": float,
            "eta_crossover": float,
            "eta_mutation": float,
            "init_attempt_budget": int,
        },
    )
    env = apply(
        "env",
        config.env,
        {
            "n_tasks": int,
            "n_robots": int,
            "area_km2": float,
            "duration_min": float,
            "deadline_floor_frac": float,
            "recharge_full_min": float,
            "idle_dwell_min": float,
        },
    )
    train_cfg = apply(
        "train",
        config.train,
        {
            "total_episodes": int,
            "episodes_per_batch": int,
            "epochs_per_batch": int,
            "clip_ratio": float,
            "gamma": float,
            "lr_actor": float,
            "lr_critic": float,
            "entropy_coef": float,
            "advantage_mode": str,
            "normalize_advantages": lambda v: v.lower() in ("1", "true", "yes"),
            "checkpoint_every": int,
            "hidden": int,
            "encoder_layers": int,
            "heads": int,
            "talent_hidden": int,
            "value_hidden": int,
            "init_std": float,
            "std_floor": float,
        },
    )
    pso = apply(
        "finalize",
        config.pso,
        {
            "swarm_size": int,
            "iterations": int,
            "inertia": float,
            "cognitive": float,
            "social": float,
            "penalty_weight": float,
        },
    )
    pipe = sections.get("pipeline", {})
    unknown = set(pipe) - {"seed", "eval_scales", "eval_episodes"}
    if unknown:
        raise ConfigError(f"unknown keys in [pipeline]: {sorted(unknown)}")
    master_seed = int(pipe.get("seed", config.seed))
    if seed is not None:
        master_seed = int(seed)
    scales = (
        _parse_scales(pipe["eval_scales"]) if "eval_scales" in pipe else config.eval_scales
    )
    episodes = int(pipe.get("eval_episodes", config.eval_episodes))
    return PipelineConfig(
        seed=master_seed,
        bounds=bounds,
        physics=physics,
        ga=ga,
        env=env,
        train=train_cfg,
        pso=pso,
        eval_scales=scales,
        eval_episodes=episodes,
    )


# -- manifest helpers ---------------------------------------------------------

def _manifest_path(out_dir):
    return os.path.join(out_dir, "manifest.json")


def load_manifest(out_dir):
    path = _manifest_path(out_dir)
    if not os.path.exists(path):
        return {"master_seed": None, "stages": {}}
    return fileio.read_json(path)


def _save_manifest(out_dir, manifest):
    fileio.write_json(_manifest_path(out_dir), manifest)


def _digest_outputs(out_dir, names):
    return {name: fileio.sha256_file(os.path.join(out_dir, name)) for name in names}


def _stage_is_current(manifest, out_dir, stage, config_digest, input_digests):
    record = manifest["stages"].get(stage)
    if not record or record.get("status") != "complete":
        return False
    if record.get("config_digest") != config_digest:
        return False
    if record.get("inputs") != input_digests:
        return False
    for name, digest in record.get("outputs", {}).items():
        path = os.path.join(out_dir, name)
        if not os.path.exists(path) or fileio.sha256_file(path) != digest:
            return False
    return True


STAGE_OUTPUTS = {
    "pareto": ("archive.csv", "pareto_meta.json"),
    "boundary": ("boundary.txt",),
    "train": ("checkpoint.txt", "history.csv", "train_summary.json"),
    "finalize": ("final_morphology.json",),
}


def run_pipeline(config: PipelineConfig, out_dir, resume=True):
    """Execute pareto -> boundary -> train -> finalize; returns the manifest."""
    fileio.ensure_dir(out_dir)
    manifest = load_manifest(out_dir) if resume else {"master_seed": None, "stages": {}}
    manifest["master_seed"] = config.seed

    upstream = {}
    invalidated = False
    for stage in STAGE_ORDER:
        config_digest = fileio.sha256_obj(config.stage_config(stage))
        if (
            not invalidated
            and _stage_is_current(manifest, out_dir, stage, config_digest, upstream)
        ):
            upstream = dict(manifest["stages"][stage]["outputs"])
            continue
        invalidated = True  # every later stage must rerun too
        record = {
            "status": "running",
            "config_digest": config_digest,
            "inputs": dict(upstream),
            "outputs": {},
        }
        manifest["stages"][stage] = record
        # drop stale downstream records so a failed rerun cannot be resumed past
        for later in STAGE_ORDER[STAGE_ORDER.index(stage) + 1 :]:
            manifest["stages"].pop(later, None)
        try:
            _run_stage(stage, config, out_dir)
        except Exception as err:
            record["status"] = "failed"
            record["error"] = f"{type(err).__name__}: {err}"
            _save_manifest(out_dir, manifest)
            raise StageFailure(f"stage {stage!r} failed: {err}") from err
        record["outputs"] = _digest_outputs(out_dir, STAGE_OUTPUTS[stage])
        record["status"] = "complete"
        upstream = dict(record["outputs"])
        _save_manifest(out_dir, manifest)

    _save_manifest(out_dir, manifest)
    return manifest


def _run_stage(stage, config: PipelineConfig, out_dir):
    if stage == "pareto":
        run_pareto_stage(config, out_dir)
    elif stage == "boundary":
        run_boundary_stage(config, out_dir)
    elif stage == "train":
        run_train_stage(config, out_dir)
    elif stage == "finalize":
        run_finalize_stage(config, out_dir)
    else:
        raise ValueError(f"unknown stage {stage!r}")


def run_pareto_stage(config: PipelineConfig, out_dir):
    ga = replace(config.ga, seed=fileio.derive_seed(config.seed, "pareto"))
    archive = multi_run_pareto(ga, config.bounds, config.physics)
    archive.save(os.path.join(out_dir, "archive.csv"))
    meta = {
        "entries": len(archive),
        "runs": ga.runs,
        "population_size": ga.population_size,
        "generations": ga.generations,
        "seed": ga.seed,
        "hypervolume_vs_origin": hypervolume(archive.talents, np.zeros(3)),
        "talent_mins": [float(v) for v in archive.talents.min(axis=0)],
        "talent_maxs": [float(v) for v in archive.talents.max(axis=0)],
    }
    fileio.write_json(os.path.join(out_dir, "pareto_meta.json"), meta)
    return archive


def run_boundary_stage(config: PipelineConfig, out_dir):
    archive = ParetoArchive.load(os.path.join(out_dir, "archive.csv"))
    model = fit_surface(archive)
    model.save(os.path.join(out_dir, "boundary.txt"))
    return model


def run_train_stage(config: PipelineConfig, out_dir):
    boundary = TalentBoundaryModel.load(os.path.join(out_dir, "boundary.txt"))
    train_cfg = replace(config.train, seed=fileio.derive_seed(config.seed, "train"))
    actor, critic, history = train(
        train_cfg, boundary, config.env, out_dir=out_dir, resume=True
    )
    mean, std = actor.talent_numpy()
    decoded = decode_talents(np.clip(mean, 0.0, 1.0), boundary)
    tail = history[-min(10, len(history)) :]
    summary = {
        "unit_talent_means": [float(v) for v in mean],
        "talent_std": [float(v) for v in std],
        "optimal_talents": {
            "range_km": decoded.flight_range,
            "speed_mps": decoded.nominal_speed,
            "capacity": decoded.package_capacity,
        },
        "final_reward_mean": float(np.mean([row["reward_mean"] for row in tail])),
        "episodes": train_cfg.total_episodes,
        "initial_talent_std": float(history[0]["talent_std"]) if history else None,
        "final_talent_std": float(history[-1]["talent_std"]) if history else None,
    }
    fileio.write_json(os.path.join(out_dir, "train_summary.json"), summary)
    return actor, critic, history


def run_finalize_stage(config: PipelineConfig, out_dir):
    summary = fileio.read_json(os.path.join(out_dir, "train_summary.json"))
    archive = ParetoArchive.load(os.path.join(out_dir, "archive.csv"))
    spans = archive.talents.max(axis=0) - archive.talents.min(axis=0)
    spans = np.maximum(spans, 1e-9)
    target = TalentVector(
        summary["optimal_talents"]["range_km"],
        summary["optimal_talents"]["speed_mps"],
        summary["optimal_talents"]["capacity"],
    )
    pso = replace(config.pso, seed=fileio.derive_seed(config.seed, "finalize"))
    best, residual, report = finalize_morphology(
        target, config.bounds, pso, config.physics, talent_spans=spans
    )
    payload = {
        "morphology": asdict(best),
        "residual": residual,
        "report": report,
        "constraints": [float(v) for v in geometric_constraints(best, config.physics)],
    }
    fileio.write_json(os.path.join(out_dir, "final_morphology.json"), payload)
    return best, residual, report


# -- reporting ----------------------------------------------------------------

EVAL_POLICIES = ("codesign", "baseline_a", "baseline_b")


def report(out_dir):
    """Emit comparison tables and plot-ready data under <out_dir>/report/.

    Requires the pipeline artifacts plus at least one evaluation artifact
    (written by the ``evaluate`` / ``srta`` commands).
    """
    manifest = load_manifest(out_dir)
    for stage in ("pareto", "boundary", "train"):
        record = manifest["stages"].get(stage, {})
        if record.get("status") != "complete":
            raise StageNeededError(f"stage {stage!r} has not completed; run the pipeline first")

    report_dir = fileio.ensure_dir(os.path.join(out_dir, "report"))

    # completion-rate table from whatever evaluations exist
    rows = []
    found = []
    for name in EVAL_POLICIES:
        path = os.path.join(out_dir, f"eval_{name}.json")
        if not os.path.exists(path):
            continue
        found.append(name)
        payload = fileio.read_json(path)
        for entry in payload["results"]:
            rows.append(
                [
                    name,
                    entry["n_tasks"],
                    entry["n_robots"],
                    entry["median"],
                    entry["q1"],
                    entry["q3"],
                    entry["mean"],
                ]
            )
    srta_path = os.path.join(out_dir, "srta", "srta_report.json")
    if os.path.exists(srta_path):
        payload = fileio.read_json(srta_path)
        for entry in payload["completion_by_scale"]:
            rows.append(
                [
                    "srta",
                    entry["n_tasks"],
                    entry["n_robots"],
                    entry["median"],
                    entry["q1"],
                    entry["q3"],
                    entry["mean"],
                ]
            )
        found.append("srta")
    if not rows:
        raise StageNeededError(
            "no evaluation artifacts found; run `codesign evaluate` (and optionally `srta`) first"
        )
    with open(os.path.join(report_dir, "completion_table.csv"), "w") as fh:
        fh.write("policy,n_tasks,n_robots,median,q1,q3,mean\n")
        for row in rows:
            fh.write(",".join(str(v) if isinstance(v, (int, str)) else fileio.fmt(v) for v in row) + "\n")

    # talent convergence series
    history = load_history(os.path.join(out_dir, "history.csv"))
    fileio.write_csv(
        os.path.join(report_dir, "talent_series.csv"),
        ("episode", "range_km", "speed_mps", "capacity", "talent_std"),
        [
            [row["episode"], row["range_km"], row["speed_mps"], row["capacity"], row["talent_std"]]
            for row in history
        ],
    )

    # Pareto scatter and fitted-surface samples
    archive = ParetoArchive.load(os.path.join(out_dir, "archive.csv"))
    fileio.write_csv(
        os.path.join(report_dir, "pareto_scatter.csv"),
        ("range_km", "speed_mps", "capacity"),
        [list(t) for t in archive.talents],
    )
    model = TalentBoundaryModel.load(os.path.join(out_dir, "boundary.txt"))
    samples = []
    for r in np.linspace(model.range_min, model.range_max, 30):
        lo, hi = model.speed_bounds(np.array([r]))
        for u in np.linspace(0.0, 1.0, 30):
            s = (1.0 - u) * lo[0] + u * hi[0]
            samples.append([r, s, float(model.surface_value(r, s)[0])])
    fileio.write_csv(
        os.path.join(report_dir, "surface_samples.csv"),
        ("range_km", "speed_mps", "capacity"),
        samples,
    )
    return {"report_dir": report_dir, "policies": found, "rows": len(rows)}
