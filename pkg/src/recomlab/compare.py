"""Cross-run aggregation of training traces."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from recomlab.ppo import METRIC_FIELDS
from recomlab.training import METRICS_CSV, read_manifest

TRACES = ("mean_episode_reward", "dormant_ratio", "learning_rate")


class SchemaError(ValueError):
    pass


def read_metrics(run_dir) -> dict[str, np.ndarray]:
    path = Path(run_dir) / METRICS_CSV
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in METRIC_FIELDS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {', '.join(missing)}")
        rows = list(reader)
    return {c: np.array([float(r[c]) for r in rows]) for c in METRIC_FIELDS}


@dataclass
class RunRecord:
    run_dir: Path
    variant: str
    seed: int
    metrics: dict[str, np.ndarray]


@dataclass
class VariantTrace:
    steps: np.ndarray
    seeds: list[int]
    per_seed: dict[str, np.ndarray]  # metric -> (n_seeds, n_steps)

    def mean(self, metric: str) -> np.ndarray:
        return self.per_seed[metric].mean(axis=0)

    def lo(self, metric: str) -> np.ndarray:
        return self.per_seed[metric].min(axis=0)

    def hi(self, metric: str) -> np.ndarray:
        return self.per_seed[metric].max(axis=0)


@dataclass
class Comparison:
    variants: dict[str, VariantTrace]
    final_dormant: dict[str, dict] = field(default_factory=dict)
    dormant_gaps: dict[str, float] = field(default_factory=dict)

    def summary(self) -> dict:
        return {"final_dormant_ratio": self.final_dormant, "dormant_gap_points": self.dormant_gaps}


def load_runs(run_dirs) -> list[RunRecord]:
    records = []
    for d in run_dirs:
        man = read_manifest(d)
        records.append(RunRecord(Path(d), man["variant"], int(man["seed"]), read_metrics(d)))
    return records


def compare_runs(run_dirs) -> Comparison:
    """Align runs by variant on their common ``global_step`` grid.

    Dormant-ratio gaps are differences of the seed-averaged final values in
    percentage points, keyed ``"<a>-<b>"``.
    """
    if len(run_dirs) < 2:
        raise ValueError("compare needs at least two runs")
    groups: dict[str, list[RunRecord]] = defaultdict(list)
    for rec in load_runs(run_dirs):
        groups[rec.variant].append(rec)

    variants = {}
    for name, recs in groups.items():
        steps = recs[0].metrics["global_step"]
        for r in recs[1:]:
            steps = np.intersect1d(steps, r.metrics["global_step"])
        per_seed = {}
        for m in METRIC_FIELDS:
            rows = []
            for r in recs:
                idx = np.searchsorted(r.metrics["global_step"], steps)
                rows.append(r.metrics[m][idx])
            per_seed[m] = np.array(rows)
        variants[name] = VariantTrace(steps, [r.seed for r in recs], per_seed)

    final = {}
    for name, tr in variants.items():
        vals = tr.per_seed["dormant_ratio"][:, -1] if tr.steps.size else np.array([np.nan])
        final[name] = {
            "mean": float(np.mean(vals)),
            "min": float(np.min(vals)),
            "max": float(np.max(vals)),
            "per_seed": dict(zip(map(str, tr.seeds), map(float, vals))),
        }
    names = sorted(final)
    gaps = {
        f"{a}-{b}": 100.0 * (final[a]["mean"] - final[b]["mean"])
        for a in names for b in names if a != b
    }
    return Comparison(variants, final, gaps)


def write_merged_csv(comp: Comparison, path):
    """Long-format CSV: one row per (variant, step) with mean/min/max per trace."""
    cols = ["variant", "global_step", "n_seeds"]
    for m in TRACES:
        cols += [f"{m}_mean", f"{m}_min", f"{m}_max"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for name in sorted(comp.variants):
            tr = comp.variants[name]
            for j, step in enumerate(tr.steps):
                row = [name, int(step), len(tr.seeds)]
                for m in TRACES:
                    row += [repr(float(tr.mean(m)[j])), repr(float(tr.lo(m)[j])), repr(float(tr.hi(m)[j]))]
                w.writerow(row)


def write_report(comp: Comparison, out_dir, figures: bool = True) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"merged": out_dir / "comparison.csv", "summary": out_dir / "comparison.json"}
    write_merged_csv(comp, paths["merged"])
    paths["summary"].write_text(json.dumps(comp.summary(), indent=2, sort_keys=True))
    if figures:
        from recomlab import plotting

        for m in TRACES:
            paths[m] = plotting.plot_comparison(comp, m, out_dir / f"{m}.png")
    return paths
