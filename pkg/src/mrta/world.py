"""Cooperative-transport world: robot kinematics, the capacity-based carrying
rule, object completion, and the team reward.

Robots and objects are point masses in the plane. A robot drives straight at
its target object and parks at ``attach_radius``. An object slides straight
to its goal at ``carry_speed`` on every sub-step where the robots committed
to it and parked next to it have enough combined capacity. Carrying robots
ride along with the object.

Indices are 0-based throughout. ``-1`` in a selection array means "no object".
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .config import WorldConfig

NO_OBJECT = -1
# slack on the parking distance; robots park at attach_radius up to rounding
_CONTACT_EPS = 1e-9


class ContractError(ValueError):
    """A caller broke an operation's precondition."""


@dataclass
class WorldState:
    config: WorldConfig
    robot_pos: np.ndarray       # (N, 2)
    selected: np.ndarray        # (N,) int, NO_OBJECT when idle
    stuck: np.ndarray           # (N,) seconds parked at a stationary selected object
    obj_pos: np.ndarray         # (M, 2)
    obj_vel: np.ndarray         # (M, 2)
    goals: np.ndarray           # (M, 2)
    mass: np.ndarray            # (M,)
    completed: np.ndarray       # (M,) bool
    step_count: int = 0
    time: float = 0.0
    completion_time: np.ndarray = field(default=None)  # (M,) seconds, nan until done
    robot_vel: np.ndarray = field(default=None)        # (N, 2) over the last sub-step

    def __post_init__(self):
        if self.completion_time is None:
            self.completion_time = np.full(len(self.mass), np.nan)
        if self.robot_vel is None:
            self.robot_vel = np.zeros_like(self.robot_pos)

    @property
    def n_robots(self):
        return len(self.robot_pos)

    @property
    def n_objects(self):
        return len(self.obj_pos)

    @property
    def obj_speed(self):
        return np.hypot(self.obj_vel[:, 0], self.obj_vel[:, 1])

    @property
    def all_completed(self):
        return bool(self.completed.all())

    def copy(self):
        return WorldState(
            config=self.config,
            robot_pos=self.robot_pos.copy(),
            selected=self.selected.copy(),
            stuck=self.stuck.copy(),
            obj_pos=self.obj_pos.copy(),
            obj_vel=self.obj_vel.copy(),
            goals=self.goals.copy(),
            mass=self.mass.copy(),
            completed=self.completed.copy(),
            step_count=self.step_count,
            time=self.time,
            completion_time=self.completion_time.copy(),
            robot_vel=self.robot_vel.copy(),
        )


@dataclass
class StepOutcome:
    reward: float
    newly_completed: set
    moved: np.ndarray           # (M,) bool, object moved on some sub-step
    done: bool
    simultaneous_time: float = 0.0   # seconds with two or more objects moving
    r1: float = 0.0
    r2: float = 0.0


def goal_positions(config):
    m = config.n_objects
    ang = 2.0 * np.pi * np.arange(m) / m
    cx, cy = config.goal_center
    return np.column_stack([cx + config.goal_radius * np.cos(ang),
                            cy + config.goal_radius * np.sin(ang)])


def init_world(config, seed=None):
    """Fresh episode: uniform spawns, goals evenly spaced on the goal circle."""
    config.validate()
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    xmin, xmax, ymin, ymax = config.spawn_region
    lo, hi = np.array([xmin, ymin]), np.array([xmax, ymax])
    n, m = config.n_robots, config.n_objects
    robot_pos = rng.uniform(lo, hi, size=(n, 2))
    obj_pos = rng.uniform(lo, hi, size=(m, 2))
    masses = np.array([c[0] for c in config.mass_choices], dtype=float)
    probs = np.array([c[1] for c in config.mass_choices], dtype=float)
    mass = masses[rng.choice(len(masses), size=m, p=probs / probs.sum())]
    return WorldState(
        config=config,
        robot_pos=robot_pos,
        selected=np.full(n, NO_OBJECT, dtype=int),
        stuck=np.zeros(n),
        obj_pos=obj_pos,
        obj_vel=np.zeros((m, 2)),
        goals=goal_positions(config),
        mass=mass,
        completed=np.zeros(m, dtype=bool),
    )


def _attached(world):
    """Robots committed to an object and parked within reach of it."""
    sel = world.selected
    has = sel >= 0
    idx = np.where(has, sel, 0)
    d = world.robot_pos - world.obj_pos[idx]
    dist = np.hypot(d[:, 0], d[:, 1])
    return has & (dist <= world.config.attach_radius + _CONTACT_EPS)


def _movable_mask(world, attached):
    cap = np.bincount(world.selected[attached],
                      minlength=world.n_objects).astype(float) * world.config.robot_capacity
    return ~world.completed & (cap >= world.mass)


def movable(world, l):
    """True iff the robots committed to ``l`` and within reach can lift it."""
    if world.completed[l]:
        raise ContractError(f"object {l} is already completed")
    return bool(_movable_mask(world, _attached(world))[l])


def reward_terms(world):
    """(completion term, motion term) of the team reward."""
    cfg = world.config
    d = world.obj_pos - world.goals
    at_goal = np.hypot(d[:, 0], d[:, 1]) < cfg.completion_threshold
    r1 = float(at_goal.sum())
    r2 = cfg.reward_lambda * float(world.obj_speed.sum())
    return r1, r2


def compute_reward(world):
    r1, r2 = reward_terms(world)
    return r1 + r2


def _mark_completed(world):
    cfg = world.config
    d = world.obj_pos - world.goals
    close = np.hypot(d[:, 0], d[:, 1]) < cfg.completion_threshold
    newly = close & ~world.completed
    if newly.any():
        world.completed |= newly
        world.obj_vel[newly] = 0.0
        world.completion_time[newly] = world.time
    return newly


def settle(world):
    """Complete any object already within the threshold of its goal, in place."""
    return set(np.flatnonzero(_mark_completed(world)).tolist())


def step(world, targets):
    """Advance one decision period with the given per-robot target objects.

    Returns a new state and the step outcome; ``world`` is not modified.
    """
    cfg = world.config
    targets = np.asarray(targets, dtype=int)
    if targets.shape != (world.n_robots,):
        raise ContractError(f"expected {world.n_robots} targets, got shape {targets.shape}")
    if ((targets < NO_OBJECT) | (targets >= world.n_objects)).any():
        raise ContractError(f"target index out of range: {targets}")
    chosen = targets[targets >= 0]
    if world.completed[chosen].any():
        raise ContractError(f"targets include completed objects: {targets}")
    if (targets < 0).any() and not world.all_completed:
        raise ContractError("idle robot while objects remain")

    w = world.copy()
    w.selected = targets.copy()
    dt = cfg.dt_sub
    start_completed = w.completed.copy()
    newly_total = _mark_completed(w)
    moved = np.zeros(w.n_objects, dtype=bool)
    simultaneous = 0.0
    has = targets >= 0
    tidx = np.where(has, targets, 0)

    for _ in range(cfg.n_substeps):
        attached = _attached(w)
        mov = _movable_mask(w, attached)

        # carried objects slide toward their goals
        delta = w.goals - w.obj_pos
        dist = np.hypot(delta[:, 0], delta[:, 1])
        travel = np.minimum(cfg.carry_speed * dt, dist)
        safe = np.where(dist > 0, dist, 1.0)
        unit = delta / safe[:, None]
        disp = np.where(mov[:, None], unit * travel[:, None], 0.0)
        w.obj_pos += disp
        w.obj_vel = np.where(mov[:, None], unit * cfg.carry_speed, 0.0)
        moved |= mov
        if np.count_nonzero(mov) >= 2:
            simultaneous += dt

        before = w.robot_pos.copy()
        riding = attached & mov[tidx]
        w.robot_pos[riding] += disp[tidx[riding]]

        # everyone else drives toward its target and parks at attach_radius
        free = has & ~riding
        rd = w.obj_pos[tidx] - w.robot_pos
        rdist = np.hypot(rd[:, 0], rd[:, 1])
        gap = np.maximum(rdist - cfg.attach_radius, 0.0)
        adv = np.where(free, np.minimum(cfg.robot_speed * dt, gap), 0.0)
        rsafe = np.where(rdist > 0, rdist, 1.0)
        w.robot_pos += rd / rsafe[:, None] * adv[:, None]
        w.robot_vel = (w.robot_pos - before) / dt

        w.time += dt
        newly_total |= _mark_completed(w)

        # stuck clock: grows while parked at a stationary selected object,
        # resets while carrying or once the selection is done, else holds
        now_attached = _attached(w)
        still = now_attached & ~mov[tidx] & ~w.completed[tidx]
        w.stuck = np.where(still, w.stuck + dt, w.stuck)
        reset = (attached & mov[tidx]) | (has & w.completed[tidx])
        w.stuck = np.where(reset, 0.0, w.stuck)

    w.step_count += 1
    r1, r2 = reward_terms(w)
    done = w.all_completed or w.step_count >= cfg.max_steps
    outcome = StepOutcome(
        reward=r1 + r2,
        newly_completed=set(np.flatnonzero(newly_total & ~start_completed).tolist()),
        moved=moved,
        done=done,
        simultaneous_time=simultaneous,
        r1=r1,
        r2=r2,
    )
    return w, outcome


TRAJECTORY_COLUMNS = ("step", "entity_kind", "entity_id", "x", "y", "vx", "vy", "completed")


def trajectory_rows(world):
    """CSV rows describing every robot and object at the current step."""
    rows = []
    for i, (x, y) in enumerate(world.robot_pos):
        vx, vy = world.robot_vel[i]
        rows.append((world.step_count, "robot", i, float(x), float(y),
                     float(vx), float(vy), 0))
    for l in range(world.n_objects):
        x, y = world.obj_pos[l]
        vx, vy = world.obj_vel[l]
        rows.append((world.step_count, "object", l, float(x), float(y),
                     float(vx), float(vy), int(world.completed[l])))
    return rows


def write_trajectory_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_COLUMNS)
        writer.writerows(rows)
