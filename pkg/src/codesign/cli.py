"""Command-line interface for the co-design pipeline.

Subcommands::

    pareto          multi-run NSGA-II talent search -> archive.csv
    boundary        fit the talent boundary model from an archive
    train           talent-infused actor-critic training
    train-baseline  behavior-only training at a fixed Pareto corner
    evaluate        greedy evaluation across task/robot scales
    finalize        recover the concrete morphology for the learned talents
    srta            single-robot co-design study
    pipeline        run pareto -> boundary -> train -> finalize end to end
    report          emit comparison tables and plot-ready data
    simulate        run one scripted-policy mission and write its event log

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from codesign import fileio
from codesign.boundary import TalentBoundaryModel
from codesign.morphology import TalentVector
from codesign.networks import load_checkpoint
from codesign.pareto import ParetoArchive
from codesign.pipeline import (
    ConfigError,
    PipelineConfig,
    StageFailure,
    StageNeededError,
    _parse_scales,
    desk_config,
    load_pipeline_config,
    report,
    run_boundary_stage,
    run_finalize_stage,
    run_pareto_stage,
    run_pipeline,
    run_train_stage,
)
from codesign.sim import (
    add_robots,
    episode_reward,
    generate_scenario,
    greedy_nearest_policy,
    random_feasible_policy,
    run_episode,
    write_event_log,
)
from codesign.training import (
    baseline_talent_picks,
    evaluate,
    srta_study,
    train_fixed_talent_baseline,
)


def _load_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        config = load_pipeline_config(args.config, seed=getattr(args, "seed", None))
    else:
        config = desk_config()
        if getattr(args, "seed", None) is not None:
            config = replace(config, seed=args.seed)
    return config


def _require(path, hint):
    if not os.path.exists(path):
        raise StageNeededError(f"missing {path}; {hint}")
    return path


def cmd_pareto(args):
    config = _load_config(args)
    if args.runs:
        config = replace(config, ga=replace(config.ga, runs=args.runs))
    if args.population:
        config = replace(config, ga=replace(config.ga, population_size=args.population))
    if args.generations:
        config = replace(config, ga=replace(config.ga, generations=args.generations))
    fileio.ensure_dir(args.out_dir)
    archive = run_pareto_stage(config, args.out_dir)
    print(f"pareto archive: {len(archive)} non-dominated designs -> {args.out_dir}/archive.csv")
    return 0


def cmd_boundary(args):
    config = _load_config(args)
    archive_path = args.archive or os.path.join(args.out_dir, "archive.csv")
    _require(archive_path, "run `codesign pareto` first")
    if args.archive and args.archive != os.path.join(args.out_dir, "archive.csv"):
        fileio.ensure_dir(args.out_dir)
        ParetoArchive.load(args.archive).save(os.path.join(args.out_dir, "archive.csv"))
    model = run_boundary_stage(config, args.out_dir)
    stats = ", ".join(f"{k}={v:.4g}" for k, v in sorted(model.stats.items()))
    print(f"boundary model fitted ({stats}) -> {args.out_dir}/boundary.txt")
    return 0


def cmd_train(args):
    config = _load_config(args)
    _require(os.path.join(args.out_dir, "boundary.txt"), "run `codesign boundary` first")
    if not args.resume and os.path.exists(os.path.join(args.out_dir, "checkpoint.txt")):
        os.remove(os.path.join(args.out_dir, "checkpoint.txt"))
    actor, critic, history = run_train_stage(config, args.out_dir)
    print(
        f"trained {config.train.total_episodes} episodes; final reward mean "
        f"{history[-1]['reward_mean']:.3f} -> {args.out_dir}/checkpoint.txt"
    )
    return 0


def cmd_train_baseline(args):
    config = _load_config(args)
    archive_path = _require(
        os.path.join(args.out_dir, "archive.csv"), "run `codesign pareto` first"
    )
    _require(os.path.join(args.out_dir, "boundary.txt"), "run `codesign boundary` first")
    archive = ParetoArchive.load(archive_path)
    boundary = TalentBoundaryModel.load(os.path.join(args.out_dir, "boundary.txt"))
    pick_a, pick_b = baseline_talent_picks(archive)
    talents = pick_a if args.which == "a" else pick_b
    sub_dir = fileio.ensure_dir(os.path.join(args.out_dir, f"baseline_{args.which}"))
    train_cfg = replace(
        config.train, seed=fileio.derive_seed(config.seed, f"baseline-{args.which}")
    )
    actor, critic, history = train_fixed_talent_baseline(
        talents, train_cfg, boundary, config.env, out_dir=sub_dir, resume=args.resume
    )
    fileio.write_json(
        os.path.join(sub_dir, "baseline_talents.json"),
        {
            "which": args.which,
            "range_km": talents.flight_range,
            "speed_mps": talents.nominal_speed,
            "capacity": talents.package_capacity,
        },
    )
    print(
        f"baseline {args.which} trained at talents ({talents.flight_range:.1f} km, "
        f"{talents.nominal_speed:.1f} m/s, {talents.package_capacity:.2f} pkg) -> {sub_dir}"
    )
    return 0


def cmd_evaluate(args):
    config = _load_config(args)
    scales = _parse_scales(args.scales) if args.scales else config.eval_scales
    episodes = args.episodes or config.eval_episodes
    boundary = TalentBoundaryModel.load(
        _require(os.path.join(args.out_dir, "boundary.txt"), "run `codesign boundary` first")
    )
    fixed = None
    if args.policy == "codesign":
        ckpt = _require(os.path.join(args.out_dir, "checkpoint.txt"), "run `codesign train` first")
    else:
        sub = os.path.join(args.out_dir, args.policy)
        ckpt = _require(
            os.path.join(sub, "checkpoint.txt"), f"run `codesign train-baseline --which {args.policy[-1]}` first"
        )
        picks = fileio.read_json(os.path.join(sub, "baseline_talents.json"))
        fixed = TalentVector(picks["range_km"], picks["speed_mps"], picks["capacity"])
    actor, _, _, _ = load_checkpoint(ckpt)
    results = evaluate(
        actor,
        boundary,
        config.env,
        scales,
        episodes,
        seed=fileio.derive_seed(config.seed, f"evaluate-{args.policy}"),
        fixed_talents=fixed,
    )
    payload = {"policy": args.policy, "results": results}
    out_path = os.path.join(args.out_dir, f"eval_{args.policy}.json")
    fileio.write_json(out_path, payload)
    for entry in results:
        print(
            f"{args.policy} @ {entry['n_tasks']}x{entry['n_robots']}: "
            f"median {100 * entry['median']:.1f}% (IQR {100 * entry['q1']:.1f}-{100 * entry['q3']:.1f})"
        )
    return 0


def cmd_finalize(args):
    config = _load_config(args)
    _require(os.path.join(args.out_dir, "train_summary.json"), "run `codesign train` first")
    best, residual, _ = run_finalize_stage(config, args.out_dir)
    print(
        f"final morphology residual {residual:.5f} -> {args.out_dir}/final_morphology.json"
    )
    return 0


def cmd_srta(args):
    config = _load_config(args)
    sub_dir = fileio.ensure_dir(os.path.join(args.out_dir, "srta"))
    ga = replace(config.ga, seed=fileio.derive_seed(config.seed, "srta-pareto"))
    train_cfg = replace(config.train, seed=fileio.derive_seed(config.seed, "srta-train"))
    mrta_reference = None
    mrta_eval = os.path.join(args.out_dir, "eval_codesign.json")
    if os.path.exists(mrta_eval):
        mrta_reference = fileio.read_json(mrta_eval)
    archive, boundary, actor, study = srta_study(
        config.bounds,
        ga,
        train_cfg,
        config.env,
        phys=config.physics,
        eval_episodes=config.eval_episodes,
        mrta_reference=mrta_reference,
    )
    archive.save(os.path.join(sub_dir, "archive.csv"))
    boundary.save(os.path.join(sub_dir, "boundary.txt"))
    fileio.write_json(os.path.join(sub_dir, "srta_report.json"), study)
    print(
        "srta talents: %.1f km, %.1f m/s, %.2f pkg (favors speed: %s)"
        % (
            study["talents"]["range_km"],
            study["talents"]["speed_mps"],
            study["talents"]["capacity"],
            study["favors_speed"],
        )
    )
    for entry in study["completion_by_scale"]:
        print(
            f"  {entry['n_tasks']} tasks x {entry['n_robots']} robot: "
            f"median {100 * entry['median']:.1f}%"
        )
    return 0


def cmd_pipeline(args):
    config = _load_config(args)
    manifest = run_pipeline(config, args.out_dir, resume=args.resume)
    for stage, record in manifest["stages"].items():
        print(f"stage {stage}: {record['status']}")
    return 0


def cmd_report(args):
    summary = report(args.out_dir)
    print(
        f"report written to {summary['report_dir']} "
        f"({summary['rows']} table rows; policies: {', '.join(summary['policies'])})"
    )
    return 0


def cmd_simulate(args):
    from codesign.sim import read_scenario, write_scenario

    talents = TalentVector(args.range_km, args.speed_mps, args.capacity)
    if args.scenario_in:
        scenario = read_scenario(args.scenario_in)
    else:
        scenario = generate_scenario(args.tasks, args.area_km2, args.duration_min, args.seed)
    if args.scenario_out:
        write_scenario(args.scenario_out, scenario)
        print(f"scenario -> {args.scenario_out}")
    state = add_robots(scenario, talents, args.robots)
    policy = greedy_nearest_policy if args.policy == "greedy" else random_feasible_policy
    rng = np.random.default_rng(fileio.derive_seed(args.seed, "simulate"))
    state, events, actions = run_episode(state, policy, rng, collect_events=True)
    reward = episode_reward(state)
    n_tasks = state.graph.n_tasks
    print(
        f"mission complete: {state.n_success}/{n_tasks} tasks, reward {reward:.2f}, "
        f"{len(actions)} decisions"
    )
    if args.log:
        write_event_log(
            args.log,
            {
                "seed": args.seed,
                "tasks": n_tasks,
                "robots": args.robots,
                "policy": args.policy,
                "reward": fileio.fmt(reward),
            },
            events,
        )
        print(f"event log -> {args.log}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="codesign",
        description="Concurrent morphology/behavior co-design for multi-robot task allocation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        p.add_argument("--out-dir", required=True, help="run directory for artifacts")
        if config:
            p.add_argument("--config", help="key/value pipeline config file")
            p.add_argument("--seed", type=int, help="master seed override")

    p = sub.add_parser("pareto", help="multi-run NSGA-II talent search")
    common(p)
    p.add_argument("--runs", type=int)
    p.add_argument("--population", type=int)
    p.add_argument("--generations", type=int)
    p.set_defaults(fn=cmd_pareto)

    p = sub.add_parser("boundary", help="fit the talent boundary model")
    common(p)
    p.add_argument("--archive", help="archive csv (defaults to <out-dir>/archive.csv)")
    p.set_defaults(fn=cmd_boundary)

    p = sub.add_parser("train", help="talent-infused actor-critic training")
    common(p)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("train-baseline", help="fixed-talent baseline training")
    common(p)
    p.add_argument("--which", choices=("a", "b"), required=True)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(fn=cmd_train_baseline)

    p = sub.add_parser("evaluate", help="greedy evaluation across scales")
    common(p)
    p.add_argument("--policy", choices=("codesign", "baseline_a", "baseline_b"), default="codesign")
    p.add_argument("--scales", help="comma list like 50x5,100x10")
    p.add_argument("--episodes", type=int)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("finalize", help="recover the final morphology")
    common(p)
    p.set_defaults(fn=cmd_finalize)

    p = sub.add_parser("srta", help="single-robot co-design study")
    common(p)
    p.set_defaults(fn=cmd_srta)

    p = sub.add_parser("pipeline", help="run all four stages end to end")
    common(p)
    p.add_argument("--resume", action="store_true", default=True)
    p.add_argument("--fresh", dest="resume", action="store_false")
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("report", help="emit tables and plot data")
    common(p, config=False)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("simulate", help="scripted-policy mission with event log")
    p.add_argument("--tasks", type=int, default=10)
    p.add_argument("--robots", type=int, default=2)
    p.add_argument("--area-km2", type=float, default=36.0)
    p.add_argument("--duration-min", type=float, default=15.0)
    p.add_argument("--policy", choices=("greedy", "random"), default="greedy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--range-km", type=float, default=60.0)
    p.add_argument("--speed-mps", type=float, default=28.0)
    p.add_argument("--capacity", type=float, default=5.0)
    p.add_argument("--log", help="write the event log to this path")
    p.add_argument("--scenario-out", help="persist the generated scenario to this path")
    p.add_argument("--scenario-in", help="replay an existing scenario file")
    p.set_defaults(fn=cmd_simulate)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if err.code is not None else 2
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (StageFailure, StageNeededError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
