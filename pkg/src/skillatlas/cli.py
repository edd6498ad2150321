"""Command-line entry point.

Exit codes: 0 success, 2 configuration or leakage error, 3 runtime failure,
4 missing/corrupt checkpoint or absent episode.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from . import BACKEND
from .agent import (
    CheckpointError,
    EpochMetrics,
    EvalResult,
    Episode,
    SeedOverlap,
    TrainingRun,
    evaluate,
    load_checkpoint,
    new_run,
    save_checkpoint,
    train,
)
from .atlas import blend_final
from .config import ConfigError, RunConfig
from .memory import Channel, heatmap_filename, render_heatmap, save_png
from .reward import WATERFALL_COLUMNS, WaterfallWriter, read_waterfall

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_MISSING = 4

EPISODE_COLUMNS = ("episode", "epoch", "layout_seed", "outcome", "steps", "shaped_return",
                   "phi_0", "phi_T")
POOL_LOG_COLUMNS = ("epoch", "sequence", "action", "tag", "source_episode", "pool_size")


class MissingArtifact(LookupError):
    pass


def _writer(path: Path):
    fh = path.open("w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def _load_config(path: str, args: argparse.Namespace) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    cfg = RunConfig.load(p)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = args.out
    if overrides:
        cfg = RunConfig.from_dict({**cfg.to_dict(), **overrides})
    return cfg


def _snapshot_heatmaps(run: TrainingRun, heat_dir: Path) -> None:
    for seed, atlas in run.atlases.items():
        danger, affinity = blend_final(atlas)
        for channel, hm in ((Channel.DANGER, danger), (Channel.AFFINITY, affinity)):
            img = render_heatmap(hm, channel, run.config.cell_px)
            save_png(img, heat_dir / heatmap_filename(seed, run.epoch, channel))


# --------------------------------------------------------------------------- train


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, args)
    run_dir = Path(cfg.out_dir) / f"run_{cfg.master_seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.yaml").write_text(cfg.to_yaml(), encoding="utf-8")
    heat_dir = run_dir / "heatmaps"
    run = new_run(cfg)
    _snapshot_heatmaps(run, heat_dir)

    metrics_fh, metrics_w = _writer(run_dir / "metrics.csv")
    metrics_w.writerow(EpochMetrics.COLUMNS)
    episodes_fh, episodes_w = _writer(run_dir / "episodes.csv")
    episodes_w.writerow(EPISODE_COLUMNS)
    wf_fh = wf = None
    if cfg.emit_waterfall:
        wf_fh = (run_dir / "waterfall.csv").open("w", newline="", encoding="utf-8")
        wf = WaterfallWriter(wf_fh)
    pool_fh = pool_w = None
    if cfg.emit_pool_log:
        pool_fh, pool_w = _writer(run_dir / "pool_log.csv")
        pool_w.writerow(POOL_LOG_COLUMNS)
    logged_events = 0

    def on_epoch(r: TrainingRun, episodes: list[Episode]) -> None:
        nonlocal logged_events
        metrics_w.writerow(r.metrics[-1].row())
        first_id = r.episodes_done - len(episodes)
        for i, ep in enumerate(episodes):
            eid = first_id + i
            t = ep.trajectory
            affinity = ep.blend[1]
            episodes_w.writerow([eid, r.epoch, t.layout_seed, t.outcome.value, len(t.steps),
                                 repr(ep.shaped_return), repr(affinity[ep.initial.primary]),
                                 repr(affinity[t.final_coord])])
            if wf is not None:
                wf.write_episode(eid, ep.breakdowns)
        if pool_w is not None:
            for epoch, ev in r.pool_events[logged_events:]:
                pool_w.writerow([epoch, ev.sequence, ev.action, ev.tag, ev.source_episode,
                                 ev.pool_size])
            logged_events = len(r.pool_events)
        if cfg.heatmap_every and r.epoch % cfg.heatmap_every == 0:
            _snapshot_heatmaps(r, heat_dir)
        if cfg.checkpoint_every and r.epoch % cfg.checkpoint_every == 0:
            save_checkpoint(r, run_dir / f"epoch_{r.epoch}")

    try:
        train(run, cfg.epochs, callbacks=[on_epoch])
    finally:
        for fh in (metrics_fh, episodes_fh, wf_fh, pool_fh):
            if fh is not None:
                fh.close()
    if not (cfg.heatmap_every and run.epoch % cfg.heatmap_every == 0):
        _snapshot_heatmaps(run, heat_dir)
    final_dir = run_dir / f"epoch_{run.epoch}"
    if not final_dir.exists():
        save_checkpoint(run, final_dir)

    rates = [m.success_rate for m in run.metrics]
    reached = next((m.epoch for m in run.metrics if m.success_rate >= 0.8), None)
    summary = {
        "backend": BACKEND,
        "epochs": run.epoch,
        "episodes": run.episodes_done,
        "final_success_rate": rates[-1],
        "first_epoch_success_0.8": reached,
        "pool_size": len(run.pool),
        "checkpoint": final_dir.name,
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n",
                                          encoding="utf-8")
    print(f"trained {run.epoch} epochs; final success {rates[-1]:.3f}; artifacts in {run_dir}")
    return EXIT_OK


# --------------------------------------------------------------------------- eval


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, args)
    run = load_checkpoint(args.checkpoint)
    overlap = sorted(set(cfg.eval_seeds) & set(run.config.train_seeds))
    if overlap:
        raise SeedOverlap(f"validation seed {overlap[0]} is a training seed of the checkpoint")
    run.config = RunConfig.from_dict(
        {**run.config.to_dict(), "eval_seeds": cfg.eval_seeds, "master_seed": cfg.master_seed,
         "eval_episodes": cfg.eval_episodes}
    )
    result: EvalResult = evaluate(run, cfg.eval_episodes, greedy=True)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fh, w = _writer(out / "eval.csv")
    with fh:
        w.writerow(EvalResult.COLUMNS)
        for rec in result.records:
            w.writerow([rec[c] for c in EvalResult.COLUMNS])
    print(f"success_rate {result.success_rate:.4f} over {result.n_episodes} episodes"
          + (" (empty)" if result.empty else ""))
    return EXIT_OK


# --------------------------------------------------------------------------- waterfall


def cmd_waterfall(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    path = run_dir / "waterfall.csv"
    if not path.is_file():
        raise MissingArtifact(f"no waterfall log at {path}")
    with path.open(encoding="utf-8") as fh:
        rows = read_waterfall(fh, args.episode)
    if not rows:
        raise MissingArtifact(f"episode {args.episode} not found in {path}")
    cols = WATERFALL_COLUMNS[1:]
    out = [" ".join(f"{c:>10}" for c in cols)]
    for r in rows:
        out.append(" ".join([f"{r['step']:>10d}"] + [f"{r[c]:>10.4f}" for c in cols[1:]]))
    sums = {c: math.fsum(r[c] for r in rows) for c in cols[1:]}
    out.append(" ".join([f"{'sum':>10}"] + [f"{sums[c]:>10.4f}" for c in cols[1:]]))
    print("\n".join(out))
    if args.csv:
        fh, w = _writer(Path(args.csv))
        with fh:
            w.writerow(WATERFALL_COLUMNS)
            for r in rows:
                w.writerow([r["episode"], r["step"]] + [repr(r[c]) for c in cols[1:]])
    return EXIT_OK


# --------------------------------------------------------------------------- render-atlas


def cmd_render_atlas(args: argparse.Namespace) -> int:
    run = load_checkpoint(args.checkpoint)
    out = Path(args.out) if args.out is not None else Path(args.checkpoint)
    for seed, atlas in sorted(run.atlases.items()):
        danger, affinity = blend_final(atlas)
        for channel, hm in ((Channel.DANGER, danger), (Channel.AFFINITY, affinity)):
            path = save_png(render_heatmap(hm, channel, run.config.cell_px),
                            out / heatmap_filename(seed, atlas.epoch, channel))
            print(path)
    return EXIT_OK


# --------------------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override the master seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="override the output directory")

    parser = argparse.ArgumentParser(prog="skillatlas", parents=[common],
                                     description="Heatmap-shaped gridworld training runs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train from a YAML config")
    p.add_argument("config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on held-out seeds")
    p.add_argument("config")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("waterfall", parents=[common], help="per-step reward decomposition")
    p.add_argument("run_dir")
    p.add_argument("episode", type=int)
    p.add_argument("--csv", help="also write the selected rows to this CSV file")
    p.set_defaults(func=cmd_waterfall)

    p = sub.add_parser("render-atlas", parents=[common], help="render checkpoint heatmaps")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_render_atlas)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    for name in ("seed", "out"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        return args.func(args)
    except (ConfigError, SeedOverlap) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, MissingArtifact) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
