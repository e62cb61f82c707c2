"""Command-line entry point: ``recomlab {train,eval,compare,schedule-preview}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from recomlab.config import ConfigError, load_config, load_preset


def _load(spec: str):
    """A path to a TOML file, or the name of a bundled preset."""
    if Path(spec).exists():
        return load_config(spec)
    return load_preset(spec)


def cmd_train(args) -> int:
    from recomlab.compare import read_metrics
    from recomlab.plotting import plot_metrics
    from recomlab.training import run_training

    cfg = _load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.deterministic:
        changes["deterministic"] = True
    if args.total_timesteps is not None:
        changes["total_timesteps"] = args.total_timesteps
    if args.variant is not None:
        changes["variant"] = args.variant
        if args.variant == "standard":
            changes["l2_lambda"] = 0.0
    if args.output is not None:
        changes["output_dir"] = args.output
    cfg = cfg.replace(**changes)

    def progress(m):
        print(
            f"step {m.global_step:>10d}  reward {m.mean_episode_reward:10.2f}  "
            f"loss {m.total_loss:10.3f}  lr {m.learning_rate:.3e}  "
            f"dormant {100 * m.dormant_ratio:5.1f}%  wind {m.wind_speed:.1f}",
            flush=True,
        )

    art = run_training(cfg, resume=not args.fresh, progress=None if args.quiet else progress)
    metrics = read_metrics(art.run_dir)
    if metrics["global_step"].size:
        plot_metrics(metrics, art.run_dir / "metrics.png")
    print(f"run directory: {art.run_dir} (step {art.global_step})")
    return 0


def cmd_eval(args) -> int:
    from recomlab.evaluation import run_evaluation
    from recomlab.plotting import plot_eval_positions

    summary = run_evaluation(args.checkpoint, n_episodes=args.episodes, wind_speed=args.wind,
                             init_range=args.init_range)
    out = Path(args.out) if args.out else Path(args.checkpoint).resolve().parent.parent
    out.mkdir(parents=True, exist_ok=True)
    summary.to_json(out / "eval.json")
    summary.write_trajectories(out / "eval_trajectories.csv")
    plot_eval_positions([t[:, 1:4] for t in summary.trajectories], summary.trajectories[0][0, 0],
                        out / "eval_positions.png")
    print(f"success rate {summary.success_rate:.0f}% (radius {summary.success_radius} m, "
          f"final {summary.final_window} s)")
    print(f"MSE x/y/z: {summary.mse_x:.4f} / {summary.mse_y:.4f} / {summary.mse_z:.4f} m^2")
    print(f"wrote {out / 'eval.json'}")
    return 0


def cmd_compare(args) -> int:
    from recomlab.compare import compare_runs, write_report

    comp = compare_runs(args.runs)
    paths = write_report(comp, args.out, figures=not args.no_figures)
    for name, d in sorted(comp.final_dormant.items()):
        print(f"{name:>10s}: final dormant ratio {100 * d['mean']:.2f}% "
              f"[{100 * d['min']:.2f}, {100 * d['max']:.2f}] over {len(d['per_seed'])} seed(s)")
    for k, v in sorted(comp.dormant_gaps.items()):
        print(f"gap {k}: {v:+.2f} points")
    print(f"wrote {paths['merged']}")
    return 0


def cmd_schedule_preview(args) -> int:
    cfg = _load(args.config)
    sched = cfg.wind.schedule()
    print("segment,start_step,end_step,wind_speed")
    n = len(sched.speeds)
    for i, speed in enumerate(sched.speeds):
        start = i * sched.segment_length
        if start >= cfg.total_timesteps and i > 0:
            break
        end = cfg.total_timesteps if i == n - 1 else min((i + 1) * sched.segment_length, cfg.total_timesteps)
        print(f"{i},{start},{end},{speed if cfg.wind.enabled else 0.0}")
    if cfg.recom_enabled:
        print(f"# RECOM updates every {cfg.recom.update_period} steps "
              f"({cfg.total_timesteps // cfg.recom.update_period} boundaries), window T={cfg.recom.window}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recomlab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one agent")
    p.add_argument("--config", required=True, help="TOML file or preset name (paper, desk, desk_nowind)")
    p.add_argument("--seed", type=int)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--variant", choices=("standard", "l2", "recom_l2"))
    p.add_argument("--total-timesteps", type=int)
    p.add_argument("--output", help="run directory (default: experiment.output_dir)")
    p.add_argument("--fresh", action="store_true", help="ignore existing checkpoints")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int)
    p.add_argument("--wind", type=float)
    p.add_argument("--init-range", type=float)
    p.add_argument("--out", help="output directory (default: the run directory)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="aggregate several runs")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", default="comparison")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("schedule-preview", help="print the wind schedule of a config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_schedule_preview)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
