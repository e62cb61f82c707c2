import csv
import json

import numpy as np
import pytest

from conftest import tiny_config
from recomlab import cli
from recomlab.compare import SchemaError, compare_runs, read_metrics, write_report
from recomlab.config import manifest_dict
from recomlab.ppo import METRIC_FIELDS
from recomlab.training import write_manifest


def _fake_run(root, name, variant, seed, dormant, steps=(100, 200, 300)):
    d = root / name
    d.mkdir(parents=True)
    write_manifest(tiny_config(root, variant=variant, seed=seed,
                               l2_lambda=0.0 if variant == "standard" else 1e-4), d)
    with open(d / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_FIELDS)
        for i, s in enumerate(steps):
            row = {f: 0.0 for f in METRIC_FIELDS}
            row.update(global_step=s, dormant_ratio=dormant[i], mean_episode_reward=-100 + i,
                       learning_rate=3e-4)
            w.writerow([row[f] for f in METRIC_FIELDS])
    return d


def test_compare_worked_example(tmp_path):
    runs = [
        _fake_run(tmp_path, "s0", "standard", 0, [0.0, 0.1, 0.20]),
        _fake_run(tmp_path, "s1", "standard", 1, [0.0, 0.1, 0.30]),
        _fake_run(tmp_path, "r0", "recom_l2", 0, [0.0, 0.0, 0.05]),
        _fake_run(tmp_path, "r1", "recom_l2", 1, [0.0, 0.0, 0.15, 0.9], steps=(100, 200, 300, 400)),
    ]
    comp = compare_runs(runs)
    assert comp.final_dormant["standard"]["mean"] == pytest.approx(0.25)
    assert comp.final_dormant["recom_l2"]["mean"] == pytest.approx(0.10)
    assert comp.final_dormant["recom_l2"]["per_seed"] == {"0": 0.05, "1": 0.15}
    assert comp.dormant_gaps["standard-recom_l2"] == pytest.approx(15.0)
    assert comp.variants["recom_l2"].steps.tolist() == [100, 200, 300]
    paths = write_report(comp, tmp_path / "out")
    rows = list(csv.DictReader(open(paths["merged"])))
    assert len(rows) == 6 and rows[0]["variant"] == "recom_l2"
    assert json.loads(paths["summary"].read_text())["dormant_gap_points"]
    for m in ("mean_episode_reward", "dormant_ratio", "learning_rate"):
        assert paths[m].stat().st_size > 0


def test_compare_needs_two_runs(tmp_path):
    with pytest.raises(ValueError):
        compare_runs([_fake_run(tmp_path, "a", "l2", 0, [0, 0, 0])])


def test_schema_error(tmp_path):
    (tmp_path / "metrics.csv").write_text("global_step,reward\n1,2\n")
    with pytest.raises(SchemaError, match="dormant_ratio"):
        read_metrics(tmp_path)


TINY_TOML = """
[experiment]
total_timesteps = 256
checkpoint_every = 128
probe_size = 64

[wind]
segment_length = 128

[ppo]
n_envs = 2
horizon = 64
epochs = 1

[recom]
update_period = 128

[eval]
n_episodes = 2
"""


def test_cli_end_to_end(tmp_path, capsys):
    cfg = tmp_path / "tiny.toml"
    cfg.write_text(TINY_TOML)
    runs = []
    for variant in ("standard", "recom_l2"):
        out = tmp_path / variant
        assert cli.main(["train", "--config", str(cfg), "--variant", variant, "--seed", "3",
                         "--output", str(out), "--quiet"]) == 0
        assert (out / "metrics.png").exists() and (out / "manifest.json").exists()
        runs.append(str(out))
    ckpt = sorted((tmp_path / "recom_l2" / "checkpoints").glob("*.json"))[-1]
    assert cli.main(["eval", "--checkpoint", str(ckpt), "--episodes", "2", "--wind", "1.0"]) == 0
    for name in ("eval.json", "eval_trajectories.csv", "eval_positions.png"):
        assert (tmp_path / "recom_l2" / name).exists()
    assert json.loads((tmp_path / "recom_l2" / "eval.json").read_text())["wind_speed"] == 1.0
    assert cli.main(["compare", *runs, "--out", str(tmp_path / "cmp")]) == 0
    assert (tmp_path / "cmp" / "comparison.csv").exists()
    assert (tmp_path / "cmp" / "dormant_ratio.png").exists()
    out = capsys.readouterr().out
    assert "final dormant ratio" in out and "success rate" in out


def test_cli_schedule_preview(capsys):
    assert cli.main(["schedule-preview", "--config", "paper"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "segment,start_step,end_step,wind_speed"
    assert [float(l.split(",")[3]) for l in lines[1:6]] == [3.0, 2.0, 2.5, 1.5, 2.5]
    assert lines[-1].startswith("# RECOM updates every 40000 steps")


def test_cli_reports_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[ppo]\nhorizn = 3\n")
    assert cli.main(["train", "--config", str(bad)]) == 2
    assert "horizn" in capsys.readouterr().err
    assert cli.main(["schedule-preview", "--config", "no_such_preset"]) == 2
