"""Command-line entry point: ``mrta {train,eval,sweep,plot,demo}``.

Outputs default to ``$MRTA_OUTPUT_ROOT`` (or ``./runs``) when no path is given.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, WorldConfig, config_to_dict, dump_kv, load_config
from .evalharness import (
    DEFAULT_SEED0,
    EVAL_CAP_STEPS,
    MissingCheckpoint,
    eval_config,
    run_eval,
    run_trial,
    sweep,
    write_results,
    write_trials,
)
from .maddpg import CheckpointError, load_actors, run_training, write_curves
from .plotting import PLOT_KINDS, SchemaError, plot_csv
from .policy import LEARNED_METHODS, METHODS
from .priority import COMM_COLUMNS, PRIORITY_COLUMNS, write_rows
from .world import TRAJECTORY_COLUMNS

log = logging.getLogger("mrta")

GRID_KEYS = ("grid_N", "grid_M", "grid_P", "trials", "seed0", "cap")


class UsageError(Exception):
    pass


def output_root():
    return Path(os.environ.get("MRTA_OUTPUT_ROOT", "runs"))


def write_manifest(path, command, config, seed, outputs, argv, extra=None):
    manifest = {
        "command": command,
        "argv": list(argv),
        "seed": seed,
        "config": config,
        "outputs": [str(p) for p in outputs],
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "version": f"mrta {__version__}",
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _actors_for(method, checkpoint, k):
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method not in LEARNED_METHODS:
        return None
    if checkpoint is None:
        raise UsageError(f"method {method!r} needs --checkpoint")
    actors, _ = load_actors(checkpoint, k)
    return actors


def _base_world(path):
    if path is None:
        return WorldConfig()
    world, _, _ = load_config(path, extra_keys=GRID_KEYS)
    return world


def cmd_train(args, argv):
    overrides = {"episodes": args.episodes, "seed": args.seed, "variant": args.variant,
                 "batch_size": args.batch_size}
    _, cfg, _ = load_config(args.config, {k: str(v) for k, v in overrides.items() if v is not None})
    out = Path(args.out) if args.out else output_root() / "train"
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint"
    curves = out / "curves.csv"
    (out / "config.txt").write_text(dump_kv(cfg))
    result = run_training(cfg, checkpoint_dir=ckpt)
    write_curves(curves, result.curves)
    write_manifest(out / "manifest.json", "train", config_to_dict(cfg), cfg.seed,
                   [curves, ckpt, out / "config.txt"], argv)
    print(f"trained {cfg.episodes} episodes -> {out}")


def cmd_eval(args, argv):
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    base = _base_world(args.config)
    actors = _actors_for(args.method, args.checkpoint, base.k_neighbors)
    out = Path(args.out) if args.out else output_root() / f"eval_{args.method}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    summary = run_eval(args.method, args.N, args.M, args.P, args.trials, args.seed0, actors,
                       base, args.jobs, args.cap)
    write_results(out, [summary])
    outputs = [out]
    if args.trial_csv:
        write_trials(args.trial_csv, [summary])
        outputs.append(Path(args.trial_csv))
    cfg = eval_config(base, args.N, args.M, args.P, args.cap)
    write_manifest(str(out) + ".manifest.json", "eval", config_to_dict(cfg), args.seed0,
                   outputs, argv, {"checkpoint": args.checkpoint})
    tt = "NA" if summary.tt_mean is None else f"{summary.tt_mean:.1f}"
    print(f"{args.method} N={args.N} M={args.M} P={args.P}: SR={summary.sr:.2f} TT={tt} "
          f"t_a={summary.t_a_mean:.1f}")


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_sweep(args, argv):
    world, _, extras = load_config(args.config, extra_keys=GRID_KEYS)
    ns = [int(x) for x in _floats(extras.get("grid_N", "3, 6"))]
    ms = [int(x) for x in _floats(extras.get("grid_M", "4, 6, 8, 10"))]
    ps = _floats(extras.get("grid_P", "0.5"))
    trials = int(extras.get("trials", "100"))
    seed0 = int(extras.get("seed0", str(DEFAULT_SEED0)))
    cap = int(extras.get("cap", str(EVAL_CAP_STEPS)))
    if trials < 1:
        raise UsageError("trials must be at least 1")
    methods = [m for m in args.methods.split(",") if m]
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}")
    actors = None
    if any(m in LEARNED_METHODS for m in methods):
        if args.checkpoint is None:
            raise UsageError("learned methods need --checkpoint")
        actors, _ = load_actors(args.checkpoint, world.k_neighbors)
    grid = [(n, m, p) for n in ns for m in ms for p in ps]
    out = Path(args.out) if args.out else output_root() / "sweep"
    out.mkdir(parents=True, exist_ok=True)
    failures = []

    def on_error(method, cell, exc):
        log.error("cell %s %s failed: %s", method, cell, exc)
        failures.append({"method": method, "cell": list(cell), "error": str(exc)})

    summaries = []
    for method in methods:
        summaries += sweep([method], grid, trials, seed0,
                           actors if method in LEARNED_METHODS else None,
                           world, args.jobs, on_error, cap)
    write_results(out / "results.csv", summaries)
    write_trials(out / "trials.csv", summaries)
    write_manifest(out / "manifest.json", "sweep", config_to_dict(world), seed0,
                   [out / "results.csv", out / "trials.csv"], argv,
                   {"grid": grid, "methods": methods, "trials": trials, "cap": cap,
                    "failures": failures})
    print(f"{len(summaries)} rows -> {out / 'results.csv'}")
    if failures:
        raise UsageError(f"{len(failures)} sweep cell(s) failed; see manifest")


def cmd_plot(args, argv):
    plot_csv(args.input, args.kind, args.out)
    print(f"wrote {args.out}")


def cmd_demo(args, argv):
    base = _base_world(args.config)
    actors = _actors_for(args.method, args.checkpoint, base.k_neighbors)
    cfg = eval_config(base, args.N, args.M, args.P, args.cap)
    out = Path(args.out) if args.out else output_root() / f"demo_{args.method}"
    out.mkdir(parents=True, exist_ok=True)
    res = run_trial(args.method, cfg, args.seed, actors, record=True)
    outputs = [out / "trajectory.csv"]
    write_rows(out / "trajectory.csv", TRAJECTORY_COLUMNS, res.trajectory)
    if res.priorities is not None:
        write_rows(out / "priorities.csv", PRIORITY_COLUMNS, res.priorities)
        write_rows(out / "communication.csv", COMM_COLUMNS, res.comm)
        outputs += [out / "priorities.csv", out / "communication.csv"]
    write_manifest(out / "manifest.json", "demo", config_to_dict(cfg), args.seed, outputs, argv,
                   {"success": res.success, "transport_time": res.transport_time,
                    "t_a": res.t_a_time})
    print(f"success={res.success} TT={res.transport_time} -> {out}")


def build_parser():
    p = argparse.ArgumentParser(prog="mrta", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train actors with MADDPG")
    t.add_argument("--config", required=True)
    t.add_argument("--out")
    t.add_argument("--episodes", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--variant", choices=LEARNED_METHODS)
    t.add_argument("--batch-size", type=int)
    t.set_defaults(func=cmd_train)

    def cell_args(q):
        q.add_argument("--method", required=True, choices=METHODS)
        q.add_argument("--checkpoint")
        q.add_argument("--config", help="base world config (key = value file)")
        q.add_argument("--N", type=int, default=3)
        q.add_argument("--M", type=int, default=6)
        q.add_argument("--P", type=float, default=0.5)
        q.add_argument("--cap", type=int, default=EVAL_CAP_STEPS)
        q.add_argument("--out")

    e = sub.add_parser("eval", help="evaluate one method on one (N, M, P) cell")
    cell_args(e)
    e.add_argument("--trials", type=int, default=100)
    e.add_argument("--seed0", type=int, default=DEFAULT_SEED0)
    e.add_argument("--trial-csv")
    e.add_argument("--jobs", type=int, default=1)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="evaluate methods over an (N, M, P) grid")
    s.add_argument("--config", required=True)
    s.add_argument("--methods", default="nearest,one,nearest-one")
    s.add_argument("--checkpoint")
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    pl = sub.add_parser("plot", help="render a CSV as SVG")
    pl.add_argument("--input", required=True)
    pl.add_argument("--kind", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)

    d = sub.add_parser("demo", help="one logged episode (trajectories, priorities, messages)")
    cell_args(d)
    d.add_argument("--seed", type=int, default=DEFAULT_SEED0)
    d.set_defaults(func=cmd_demo)
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args, argv)
    except (ConfigError, UsageError, CheckpointError, MissingCheckpoint, SchemaError,
            FileNotFoundError) as exc:
        print(f"mrta {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
