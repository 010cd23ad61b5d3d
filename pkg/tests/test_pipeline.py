import os
from dataclasses import replace

import numpy as np
import pytest

from codesign import fileio
from codesign.cli import main
from codesign.finalize import PsoConfig
from codesign.pareto import GaConfig, ParetoArchive
from codesign.pipeline import (
    ConfigError,
    PipelineConfig,
    StageNeededError,
    load_pipeline_config,
    report,
    run_pipeline,
)
from codesign.sim import EnvConfig
from codesign.training import TrainConfig


def micro_config(seed=5):
    return PipelineConfig(
        seed=seed,
        ga=GaConfig(population_size=24, generations=8, runs=2),
        env=EnvConfig(n_tasks=4, n_robots=2, area_km2=36.0, duration_min=15.0),
        train=TrainConfig(
            total_episodes=48,
            episodes_per_batch=8,
            hidden=16,
            heads=2,
            talent_hidden=4,
            checkpoint_every=2,
            seed=seed,
        ),
        pso=PsoConfig(swarm_size=20, iterations=40),
        eval_scales=((4, 2),),
        eval_episodes=4,
    )


def tree_digests(out_dir):
    digests = {}
    for root, _, files in os.walk(out_dir):
        for name in files:
            path = os.path.join(root, name)
            rel = os.path.relpath(path, out_dir)
            digests[rel] = fileio.sha256_file(path)
    return digests


@pytest.fixture(scope="module")
def completed_run(tmp_path_factory):
    out_dir = str(tmp_path_factory.mktemp("pipeline"))
    config = micro_config()
    manifest = run_pipeline(config, out_dir)
    return config, out_dir, manifest


def test_pipeline_all_stages_complete(completed_run):
    _, out_dir, manifest = completed_run
    assert [s for s in manifest["stages"]] == ["pareto", "boundary", "train", "finalize"]
    for record in manifest["stages"].values():
        assert record["status"] == "complete"
    for name in (
        "archive.csv",
        "pareto_meta.json",
        "boundary.txt",
        "checkpoint.txt",
        "history.csv",
        "train_summary.json",
        "final_morphology.json",
        "manifest.json",
    ):
        assert os.path.exists(os.path.join(out_dir, name))


def test_stage_input_digests_chain(completed_run):
    _, _, manifest = completed_run
    stages = manifest["stages"]
    assert stages["boundary"]["inputs"] == stages["pareto"]["outputs"]
    assert stages["train"]["inputs"] == stages["boundary"]["outputs"]
    assert stages["finalize"]["inputs"] == stages["train"]["outputs"]


def test_rerun_same_config_skips_stages(completed_run):
    config, out_dir, _ = completed_run
    mtimes = {
        name: os.path.getmtime(os.path.join(out_dir, name))
        for name in ("archive.csv", "boundary.txt", "checkpoint.txt", "final_morphology.json")
    }
    manifest = run_pipeline(config, out_dir)
    for record in manifest["stages"].values():
        assert record["status"] == "complete"
    for name, mtime in mtimes.items():
        assert os.path.getmtime(os.path.join(out_dir, name)) == mtime, f"{name} was rewritten"


def test_config_edit_invalidates_only_downstream(completed_run, tmp_path):
    config, out_dir, _ = completed_run
    # copy the run so the module-scoped fixture stays intact
    import shutil

    work = str(tmp_path / "edited")
    shutil.copytree(out_dir, work)
    upstream_mtime = os.path.getmtime(os.path.join(work, "archive.csv"))
    edited = replace(config, train=replace(config.train, total_episodes=56))
    manifest = run_pipeline(edited, work)
    assert os.path.getmtime(os.path.join(work, "archive.csv")) == upstream_mtime
    header, data = fileio.read_csv(os.path.join(work, "history.csv"))
    assert data[-1][0] == 56  # train reran at the new budget
    for record in manifest["stages"].values():
        assert record["status"] == "complete"


def test_repeat_runs_byte_identical(tmp_path):
    config = micro_config(seed=9)
    dir_a, dir_b = str(tmp_path / "a"), str(tmp_path / "b")
    run_pipeline(config, dir_a)
    run_pipeline(config, dir_b)
    da, db = tree_digests(dir_a), tree_digests(dir_b)
    assert da == db


def test_report_requires_evaluation(completed_run):
    _, out_dir, _ = completed_run
    if os.path.exists(os.path.join(out_dir, "eval_codesign.json")):
        pytest.skip("evaluation already present")
    with pytest.raises(StageNeededError):
        report(out_dir)


def test_evaluate_and_report_outputs(completed_run):
    _, out_dir, _ = completed_run
    code = main(["evaluate", "--out-dir", out_dir, "--policy", "codesign", "--scales", "4x2", "--episodes", "4"])
    assert code == 0
    summary = report(out_dir)
    report_dir = summary["report_dir"]
    header, scatter = fileio.read_csv(os.path.join(report_dir, "pareto_scatter.csv"))
    archive = ParetoArchive.load(os.path.join(out_dir, "archive.csv"))
    assert len(scatter) == len(archive)
    header, series = fileio.read_csv(os.path.join(report_dir, "talent_series.csv"))
    assert header == ["episode", "range_km", "speed_mps", "capacity", "talent_std"]
    with open(os.path.join(report_dir, "completion_table.csv")) as fh:
        table_header = fh.readline().strip()
    assert table_header == "policy,n_tasks,n_robots,median,q1,q3,mean"
    # emitted floats round-trip losslessly
    header, surface = fileio.read_csv(os.path.join(report_dir, "surface_samples.csv"))
    assert np.all(np.isfinite(surface))


def test_pipeline_config_file_roundtrip(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "[pipeline]\n"
        "seed = 12\n"
        "eval_scales = 4x2,8x4\n"
        "eval_episodes = 6\n"
        "\n"
        "[pareto]\n"
        "population_size = 30\n"
        "generations = 9\n"
        "runs = 2\n"
        "\n"
        "[env]\n"
        "n_tasks = 6\n"
        "duration_min = 20\n"
        "\n"
        "[train]\n"
        "total_episodes = 64\n"
        "hidden = 16\n"
        "\n"
        "[finalize]\n"
        "swarm_size = 25\n"
    )
    config = load_pipeline_config(str(path))
    assert config.seed == 12
    assert config.eval_scales == ((4, 2), (8, 4))
    assert config.eval_episodes == 6
    assert config.ga.population_size == 30
    assert config.env.n_tasks == 6
    assert config.train.total_episodes == 64
    assert config.pso.swarm_size == 25
    # seed override wins
    assert load_pipeline_config(str(path), seed=77).seed == 77


def test_pipeline_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[train]\nnot_a_key = 3\n")
    with pytest.raises(ConfigError):
        load_pipeline_config(str(path))


def test_cli_simulate_and_exit_codes(tmp_path):
    log = str(tmp_path / "mission.log")
    assert main(["simulate", "--tasks", "5", "--robots", "2", "--seed", "3", "--log", log]) == 0
    assert os.path.exists(log)
    from codesign.sim import read_event_log

    header, events = read_event_log(log)
    assert header["tasks"] == "5"
    assert len(events) >= 1
    # missing stage -> exit 3
    empty = str(tmp_path / "empty")
    os.makedirs(empty)
    assert main(["report", "--out-dir", empty]) == 3
    # config error -> exit 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("[train]\nnot_a_key = 3\n")
    assert main(["pipeline", "--out-dir", empty, "--config", str(bad)]) == 2


def test_tampered_artifact_invalidates_stage(completed_run, tmp_path):
    config, out_dir, _ = completed_run
    import shutil

    work = str(tmp_path / "tampered")
    shutil.copytree(out_dir, work)
    # corrupt the boundary model; its stage and everything downstream must rerun
    with open(os.path.join(work, "boundary.txt"), "a") as fh:
        fh.write("# tampered\n")
    before_train = os.path.getmtime(os.path.join(work, "checkpoint.txt"))
    manifest = run_pipeline(config, work)
    for record in manifest["stages"].values():
        assert record["status"] == "complete"
    # boundary was rebuilt: the tampering marker is gone
    with open(os.path.join(work, "boundary.txt")) as fh:
        assert "tampered" not in fh.read()
    assert os.path.getmtime(os.path.join(work, "checkpoint.txt")) >= before_train


def test_numeric_files_roundtrip_at_full_precision(tmp_path):
    rng = np.random.default_rng(0)
    values = np.concatenate([rng.standard_normal(50) * 10.0 ** rng.integers(-8, 8, 50)])
    path = tmp_path / "values.csv"
    fileio.write_csv(path, ["v"], [[v] for v in values])
    _, data = fileio.read_csv(path)
    np.testing.assert_array_equal(data.ravel(), values)


def test_cli_baseline_requires_artifacts(tmp_path):
    empty = str(tmp_path / "none")
    os.makedirs(empty)
    assert main(["train-baseline", "--which", "a", "--out-dir", empty]) == 3
    assert main(["evaluate", "--out-dir", empty]) == 3
