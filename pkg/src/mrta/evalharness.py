"""Evaluation trials, metric aggregation, and the scalability/proportion sweeps."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import WorldConfig
from .maddpg import deploy_actors
from .policy import LEARNED_METHODS, METHODS, StructuredPolicy, make_policy
from .priority import priority_rows
from .world import init_world, settle, step, trajectory_rows

EVAL_CAP_STEPS = 600
DEFAULT_SEED0 = 1_000_000
SCALABILITY_GRID = tuple((n, m, 0.5) for n in (3, 6) for m in (4, 6, 8, 10))
PROPORTION_GRID = tuple((6, 10, p) for p in (0.0, 0.25, 0.5, 0.75, 1.0))

RESULT_COLUMNS = ("method", "N", "M", "heavy_proportion", "n_trials", "SR",
                  "TT_mean", "TT_std", "t_a_mean", "seed0")
TRIAL_COLUMNS = ("method", "N", "M", "heavy_proportion", "seed", "success",
                 "transport_time", "t_a", "return", "R1", "R2")


class MissingCheckpoint(ValueError):
    pass


@dataclass
class TrialResult:
    success: bool
    transport_time: float | None
    t_a_time: float
    seed: int
    duration: float
    ret: float = 0.0
    r1: float = 0.0
    r2: float = 0.0
    trajectory: list | None = None
    priorities: list | None = None
    comm: list | None = None


@dataclass
class MetricsSummary:
    method: str
    n_robots: int
    n_objects: int
    heavy_proportion: float
    n_trials: int
    sr: float
    tt_mean: float | None
    tt_std: float | None
    t_a_mean: float
    seed0: int
    trials: list = field(default_factory=list, repr=False)

    def row(self):
        def fmt(v):
            return "NA" if v is None else repr(float(v))
        return (self.method, self.n_robots, self.n_objects, repr(float(self.heavy_proportion)),
                self.n_trials, repr(float(self.sr)), fmt(self.tt_mean), fmt(self.tt_std),
                repr(float(self.t_a_mean)), self.seed0)


def eval_config(base, n, m, p, cap=EVAL_CAP_STEPS):
    return base.replace(n_robots=n, n_objects=m, max_steps=cap).with_heavy_proportion(p)


def run_trial(method, config, seed, actors=None, record=False, max_steps=None):
    """Simulate one episode until every object is home or the step cap.

    Learned methods need ``actors`` (one or more trained actor networks).
    With ``record=True`` the trajectory, priority, and communication logs are
    kept on the result.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method in LEARNED_METHODS and not actors:
        raise MissingCheckpoint(f"method {method!r} needs trained actors (a checkpoint)")
    policy = make_policy(method, deploy_actors(actors, config.n_robots) if actors else None,
                         config.k_neighbors)
    return simulate(policy, config, seed, record, max_steps)


def simulate(policy, config, seed, record=False, max_steps=None, full_episode=False):
    """Run ``policy`` on a fresh world built from ``(config, seed)``.

    By default the episode stops once every object is delivered;
    ``full_episode=True`` keeps stepping to the cap (the training horizon).
    """
    cap = config.max_steps if max_steps is None else max_steps
    world = init_world(config, seed)
    settle(world)
    policy.reset(world, seed)
    learned = isinstance(policy, StructuredPolicy)
    traj = trajectory_rows(world) if record else None
    prio = priority_rows(0, policy.table) if record and learned else None
    t_a = ret = r1 = r2 = 0.0
    while (full_episode or not world.all_completed) and world.step_count < cap:
        targets = policy.targets(world)
        world, out = step(world, targets)
        if learned:
            policy.after_step(world)
        t_a += out.simultaneous_time
        ret += out.reward
        r1 += out.r1
        r2 += out.r2
        if record:
            traj += trajectory_rows(world)
            if learned:
                prio += priority_rows(world.step_count, policy.table)
    success = world.all_completed
    tt = float(np.nanmax(world.completion_time)) if success else None
    return TrialResult(
        success=success,
        transport_time=tt,
        t_a_time=t_a,
        seed=seed,
        duration=world.time,
        ret=ret, r1=r1, r2=r2,
        trajectory=traj,
        priorities=prio,
        comm=list(policy.comm_log) if record and learned else None,
    )


def summarize(method, config, heavy_proportion, trials, seed0):
    """Aggregate trial results; TT is over successful trials only."""
    n = len(trials)
    if n == 0:
        raise ValueError("need at least one trial")
    times = sorted(t.transport_time for t in trials if t.success)
    tt_mean = float(np.mean(times)) if times else None
    tt_std = float(np.std(times)) if times else None
    t_a = float(np.mean(sorted(t.t_a_time for t in trials)))
    return MetricsSummary(method, config.n_robots, config.n_objects, heavy_proportion, n,
                          len(times) / n, tt_mean, tt_std, t_a, seed0, list(trials))


def _trial_job(args):
    return run_trial(*args)


def run_eval(method, n, m, heavy_proportion, n_trials, seed0=DEFAULT_SEED0, actors=None,
             base=None, jobs=1, cap=EVAL_CAP_STEPS):
    """Run trials with seeds ``seed0 .. seed0 + n_trials - 1`` and aggregate."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    cfg = eval_config(base or WorldConfig(), n, m, heavy_proportion, cap)
    args = [(method, cfg, seed0 + k, actors) for k in range(n_trials)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            trials = list(pool.map(_trial_job, args))
    else:
        trials = [_trial_job(a) for a in args]
    return summarize(method, cfg, heavy_proportion, trials, seed0)


def sweep(methods, grid, n_trials, seed0=DEFAULT_SEED0, actors=None, base=None, jobs=1,
          on_error=None, cap=EVAL_CAP_STEPS):
    """Cross product of methods and (N, M, P) cells, one summary per cell.

    A failing cell is reported through ``on_error(method, cell, exc)`` and
    skipped; the sweep carries on.
    """
    out = []
    for method in methods:
        for cell in grid:
            n, m, p = cell
            try:
                out.append(run_eval(method, n, m, p, n_trials, seed0, actors, base, jobs, cap))
            except Exception as exc:  # noqa: BLE001 - recorded per cell
                if on_error is None:
                    raise
                on_error(method, cell, exc)
    return out


def write_results(path, summaries):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_COLUMNS)
        for s in summaries:
            w.writerow(s.row())


def trial_rows(summary):
    rows = []
    for t in summary.trials:
        rows.append((summary.method, summary.n_robots, summary.n_objects,
                     repr(float(summary.heavy_proportion)), t.seed, int(t.success),
                     "NA" if t.transport_time is None else repr(t.transport_time),
                     repr(t.t_a_time), repr(t.ret), repr(t.r1), repr(t.r2)))
    return rows


def write_trials(path, summaries):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIAL_COLUMNS)
        for s in summaries:
            w.writerows(trial_rows(s))


def mean_and_sem(values):
    v = np.asarray(values, dtype=float)
    sem = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return float(v.mean()), sem
