"""Training runs: manifest, metrics/RECOM CSVs, periodic checkpoints, resume."""

from __future__ import annotations

import csv
import json
import logging
import platform
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import recomlab
from recomlab import checkpoint, nn
from recomlab.checkpoint import decode_array, encode_array, encode_params
from recomlab.config import ExperimentConfig, from_dict, manifest_dict
from recomlab.env import make_vec_env
from recomlab.ppo import METRIC_FIELDS, TrainState, train_iteration
from recomlab.recom import RECOM_LOG_FIELDS, RecomState

log = logging.getLogger(__name__)

METRICS_CSV = "metrics.csv"
RECOM_CSV = "recom.csv"
MANIFEST = "manifest.json"
CHECKPOINT_DIR = "checkpoints"


@dataclass
class RunArtifacts:
    run_dir: Path
    metrics_csv: Path
    recom_csv: Path
    manifest: Path
    checkpoints: list[Path]
    global_step: int


def _code_version() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5,
        )
        rev = out.stdout.strip() if out.returncode == 0 else ""
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{recomlab.__version__}+{rev}" if rev else recomlab.__version__


def write_manifest(cfg: ExperimentConfig, run_dir: Path) -> Path:
    manifest = {
        "config": manifest_dict(cfg),
        "seed": cfg.seed,
        "variant": cfg.variant,
        "code_version": _code_version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    path = run_dir / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def read_manifest(run_dir) -> dict:
    return json.loads((Path(run_dir) / MANIFEST).read_text())


def config_from_manifest(run_dir) -> ExperimentConfig:
    return from_dict(read_manifest(run_dir)["config"])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _append_rows(path: Path, fields, rows):
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(fields)
        for row in rows:
            w.writerow([_fmt(row[f]) for f in fields])


def _truncate_rows(path: Path, max_step: int):
    """Drop CSV rows logged after ``max_step`` (used when resuming)."""
    if not path.exists():
        return
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return
    header, body = rows[0], rows[1:]
    i = header.index("global_step")
    keep = [r for r in body if int(r[i]) <= max_step]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(keep)


class Trainer:
    """Owns the mutable state of one training run."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.envs = make_vec_env(cfg.env_config(), cfg.ppo.n_envs, cfg.seed)
        rng = np.random.default_rng(cfg.seed)
        params = nn.init_params(rng)
        self.state = TrainState(params, nn.AdamState.zeros_like(params), rng, self.envs.reset(0))
        self.recom = RecomState(cfg.recom) if cfg.recom_enabled else None

    def iterate(self):
        return train_iteration(
            self.state, self.envs, self.recom, self.cfg.ppo,
            l2_lambda=self.cfg.l2_lambda, dormant_tau=self.cfg.dormant_tau,
            probe_size=self.cfg.probe_size,
        )

    def snapshot(self) -> dict:
        st = self.state
        return {
            "config": manifest_dict(self.cfg),
            "global_step": st.global_step,
            "iteration": st.iteration,
            "last_mean_reward": st.last_mean_reward,
            "params": encode_params(st.params),
            "adam": {
                "m": encode_array(st.adam.m),
                "v": encode_array(st.adam.v),
                "t": st.adam.t,
                "beta1": st.adam.beta1,
                "beta2": st.adam.beta2,
                "eps": st.adam.eps,
            },
            "rng": st.rng.bit_generator.state,
            "obs": encode_array(st.obs),
            "envs": self.envs.get_state(),
            "recom": self.recom.to_dict() if self.recom is not None else None,
        }

    def restore(self, data: dict):
        st = self.state
        st.params = checkpoint.decode_params(data["params"])
        checkpoint.check_architecture(st.params)
        a = data["adam"]
        st.adam = nn.AdamState(decode_array(a["m"]), decode_array(a["v"]), int(a["t"]),
                               a["beta1"], a["beta2"], a["eps"])
        st.rng.bit_generator.state = data["rng"]
        st.obs = decode_array(data["obs"])
        st.global_step = int(data["global_step"])
        st.iteration = int(data["iteration"])
        st.last_mean_reward = float(data["last_mean_reward"])
        self.envs.set_state(data["envs"])
        if self.recom is not None:
            self.recom = RecomState.from_dict(self.cfg.recom, data["recom"])


def checkpoint_path(run_dir: Path, step: int) -> Path:
    return run_dir / CHECKPOINT_DIR / f"step_{step:010d}.json"


def run_training(cfg: ExperimentConfig, run_dir=None, resume: bool = True,
                 max_iterations: int | None = None, progress=None) -> RunArtifacts:
    """Train until ``cfg.total_timesteps`` environment steps have been taken.

    Resumes from the newest checkpoint in ``run_dir`` when ``resume`` is set.
    ``max_iterations`` stops early (to simulate an interruption).
    """
    run_dir = Path(run_dir or cfg.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(cfg, run_dir)
    metrics_csv, recom_csv = run_dir / METRICS_CSV, run_dir / RECOM_CSV
    trainer = Trainer(cfg)

    latest = checkpoint.latest(run_dir / CHECKPOINT_DIR) if resume else None
    if latest is not None:
        trainer.restore(checkpoint.load(latest))
        log.info("resumed %s at step %d", run_dir, trainer.state.global_step)
        _truncate_rows(metrics_csv, trainer.state.global_step)
        _truncate_rows(recom_csv, trainer.state.global_step)
    else:
        for p in (metrics_csv, recom_csv):
            p.unlink(missing_ok=True)
        _append_rows(metrics_csv, METRIC_FIELDS, [])
        _append_rows(recom_csv, RECOM_LOG_FIELDS, [])

    every = cfg.checkpoint_every
    iterations = 0
    while trainer.state.global_step < cfg.total_timesteps:
        if max_iterations is not None and iterations >= max_iterations:
            break
        before = trainer.state.global_step
        n_logged = len(trainer.recom.log) if trainer.recom is not None else 0
        metrics, _ = trainer.iterate()
        iterations += 1
        _append_rows(metrics_csv, METRIC_FIELDS, [metrics.row()])
        if trainer.recom is not None:
            _append_rows(recom_csv, RECOM_LOG_FIELDS, trainer.recom.log[n_logged:])
        step = trainer.state.global_step
        if progress is not None:
            progress(metrics)
        if step // every > before // every or step >= cfg.total_timesteps:
            path = checkpoint_path(run_dir, step)
            checkpoint.save(path, trainer.snapshot())

    return RunArtifacts(run_dir, metrics_csv, recom_csv, run_dir / MANIFEST,
                        sorted((run_dir / CHECKPOINT_DIR).glob("step_*.json")),
                        trainer.state.global_step)
