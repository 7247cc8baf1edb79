"""Local observations, the actor-to-action map, and every selection policy.

Scripted baselines (``nearest``, ``one``, ``nearest-one``) choose targets
directly. The learned variants (``ours``, ``local``, ``no-com``,
``no-dynamics``) share :class:`StructuredPolicy`, which turns per-robot
actor outputs into priority updates, gates, and a selection.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import neural
from .priority import (
    CommSignals,
    exchanges,
    init_priorities,
    select_object,
    set_priorities,
    trigger_signals,
    update_priorities,
    zero_completed,
)
from .world import NO_OBJECT, ContractError

SCRIPTED_METHODS = ("nearest", "one", "nearest-one")
LEARNED_METHODS = ("ours", "local", "no-com", "no-dynamics")
METHODS = SCRIPTED_METHODS + LEARNED_METHODS

# independent RNG streams spawned from one episode seed
_ONE_STREAM = 1
_PRIORITY_STREAM = 2


def obs_dim(k):
    return 2 + 7 * k + k * (2 + k)


def action_dim(k):
    return k + 2


class Action(NamedTuple):
    c: np.ndarray
    alpha: float
    beta: float

    @classmethod
    def from_vector(cls, v, k):
        v = np.asarray(v, dtype=float)
        return cls(v[:k].copy(), float(v[k]), float(v[k + 1]))

    def as_vector(self):
        return np.concatenate([self.c, [self.alpha, self.beta]])


def _nearest_order(dists, candidates, k):
    # stable sort keeps lower indices first among equal distances
    order = np.argsort(dists[candidates], kind="stable")
    return candidates[order][:k]


def neighbor_sets(world, i, k):
    """K nearest other robots and K nearest open objects of robot ``i``."""
    if k < 1:
        raise ContractError("K must be at least 1")
    x = world.robot_pos[i]
    rd = np.hypot(*(world.robot_pos - x).T)
    others = np.array([j for j in range(world.n_robots) if j != i], dtype=int)
    od = np.hypot(*(world.obj_pos - x).T)
    open_ = np.flatnonzero(~world.completed)
    return _nearest_order(rd, others, k), _nearest_order(od, open_, k)


def build_observation(world, priorities, i, k, hide_peer_priorities=False, neighbors=None):
    """Fixed-layout observation vector of robot ``i``.

    Layout: own absolute position; per nearest object its position, velocity
    and goal (positions relative to the robot) and the robot's own priority;
    per nearest robot its relative position and its priorities for the same
    objects. Empty slots are zero.
    """
    robots, objects = neighbors if neighbors is not None else neighbor_sets(world, i, k)
    phi = priorities.phi
    x = world.robot_pos[i]
    o = np.zeros(obs_dim(k))
    o[0:2] = x
    base = 2
    for s, l in enumerate(objects):
        p = base + 7 * s
        o[p:p + 2] = world.obj_pos[l] - x
        o[p + 2:p + 4] = world.obj_vel[l]
        o[p + 4:p + 6] = world.goals[l] - x
        o[p + 6] = phi[i, l]
    base += 7 * k
    for s, j in enumerate(robots):
        p = base + (2 + k) * s
        o[p:p + 2] = world.robot_pos[j] - x
        if not hide_peer_priorities:
            for t, l in enumerate(objects):
                o[p + 2 + t] = phi[j, l]
    return o


def act(actor, o):
    """Deterministic action: actor output mapped from [-1, 1] to [0, 1]."""
    o = np.asarray(o, dtype=float)
    if o.shape[-1] != actor.in_dim:
        raise ContractError(f"observation has dimension {o.shape[-1]}, actor expects {actor.in_dim}")
    u, _ = neural.forward(actor, o)
    return (u + 1.0) / 2.0


# -- scripted baselines -----------------------------------------------------

def scripted_nearest(world, i):
    d = np.hypot(*(world.obj_pos - world.robot_pos[i]).T)
    open_ = np.flatnonzero(~world.completed)
    if open_.size == 0:
        return None
    return int(open_[np.argmin(d[open_])])


def scripted_one(episode_rng, completed_mask):
    open_ = np.flatnonzero(~np.asarray(completed_mask, dtype=bool))
    if open_.size == 0:
        raise ContractError("no open object to assign")
    return int(open_[episode_rng.integers(open_.size)])


def scripted_nearest_one(world, i, stuck_durations, t_s):
    """Nearest object, unless stuck longer than ``t_s``: then join the robot
    that has been stuck the longest."""
    if t_s <= 0:
        raise ContractError("t_s must be positive")
    stuck = np.asarray(stuck_durations, dtype=float)
    if stuck[i] > t_s:
        leader = int(np.argmax(stuck))
        target = world.selected[leader]
        if target != NO_OBJECT and not world.completed[target]:
            return int(target)
    return scripted_nearest(world, i)


class NearestPolicy:
    name = "nearest"

    def reset(self, world, seed):
        pass

    def targets(self, world):
        return _as_targets([scripted_nearest(world, i) for i in range(world.n_robots)])


class OnePolicy:
    name = "one"

    def reset(self, world, seed):
        self.rng = np.random.default_rng([seed, _ONE_STREAM])
        self.current = None

    def targets(self, world):
        if world.all_completed:
            return np.full(world.n_robots, NO_OBJECT)
        if self.current is None or world.completed[self.current]:
            self.current = scripted_one(self.rng, world.completed)
        return np.full(world.n_robots, self.current)


class NearestOnePolicy:
    name = "nearest-one"

    def reset(self, world, seed):
        pass

    def targets(self, world):
        t_s = world.config.stuck_threshold
        return _as_targets([scripted_nearest_one(world, i, world.stuck, t_s)
                            for i in range(world.n_robots)])


def _as_targets(choices):
    return np.array([NO_OBJECT if c is None else c for c in choices], dtype=int)


# -- learned structured policy ----------------------------------------------

class StructuredPolicy:
    """Priority dynamics + event-triggered gates driven by per-robot actors.

    ``actors`` is one actor per robot (see ``maddpg.deploy_actors``). Passing
    ``actors=None`` requires actions to be supplied to :meth:`decide`
    directly, which is how training drives it, unless ``action_rng`` is
    given: then every action is drawn uniformly from [0, 1] (the random
    baseline).
    """

    def __init__(self, variant="ours", actors=None, k=2, action_rng=None):
        if variant not in LEARNED_METHODS:
            raise ValueError(f"unknown learned variant {variant!r}")
        self.variant = variant
        self.name = variant
        self.actors = actors
        self.action_rng = action_rng
        self.k = k
        self.hide_peers = variant in ("no-com", "no-dynamics")
        self.communicate = variant == "ours"
        self.dynamics = variant != "no-dynamics"

    def reset(self, world, seed):
        cfg = world.config
        rng = np.random.default_rng([seed, _PRIORITY_STREAM])
        self.table = zero_completed(
            init_priorities(world.n_robots, world.n_objects, rng, cfg.k_phi), world.completed)
        self.signals = CommSignals(np.zeros(world.n_robots, dtype=int),
                                   np.zeros(world.n_robots, dtype=int))
        self.comm_log = []
        self.selection = self._select(world)
        self._neighbors = None

    def _select(self, world):
        return _as_targets([select_object(self.table.phi[i], world.completed)
                            for i in range(world.n_robots)])

    def observe(self, world):
        """Observations of all robots, shape (N, obs_dim)."""
        self._neighbors = [neighbor_sets(world, i, self.k) for i in range(world.n_robots)]
        return np.stack([
            build_observation(world, self.table, i, self.k, self.hide_peers, self._neighbors[i])
            for i in range(world.n_robots)
        ])

    def actions(self, obs):
        if self.actors is None:
            if self.action_rng is None:
                raise ContractError("no actors and no action_rng: supply actions to decide()")
            return self.action_rng.uniform(0.0, 1.0, size=(len(obs), action_dim(self.k)))
        return np.stack([act(actor, o) for actor, o in zip(self.actors, obs)])

    def decide(self, world, actions):
        """Apply (N, K+2) actions in [0, 1]; returns per-robot targets."""
        cfg = world.config
        n, k = world.n_robots, self.k
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (n, action_dim(k)):
            raise ContractError(f"expected actions of shape {(n, action_dim(k))}, got {actions.shape}")
        if self._neighbors is None:
            self._neighbors = [neighbor_sets(world, i, k) for i in range(n)]
        nb = np.full((n, k), NO_OBJECT, dtype=int)
        for i, (_, objs) in enumerate(self._neighbors):
            nb[i, :len(objs)] = objs
        c = actions[:, :k]
        speed = np.zeros(n)
        has = self.selection >= 0
        speed[has] = world.obj_speed[self.selection[has]]
        d, sigma = trigger_signals(actions[:, k], actions[:, k + 1], speed)
        if not self.communicate:
            sigma = np.zeros(n, dtype=int)
        self.signals = CommSignals(d, sigma, exchanges(world.step_count, d, sigma))
        self.comm_log.extend(self.signals.log)
        if self.dynamics:
            self.table = update_priorities(self.table, c, self.signals, nb,
                                           cfg.selection_period, cfg.n_substeps, world.completed)
        else:
            self.table = set_priorities(self.table, c, nb, world.completed)
        self.selection = self._select(world)
        self._neighbors = None
        return self.selection.copy()

    def targets(self, world):
        obs = self.observe(world)
        return self.decide(world, self.actions(obs))

    def after_step(self, world):
        self.table = zero_completed(self.table, world.completed)


def make_policy(method, actors=None, k=2):
    if method == "nearest":
        return NearestPolicy()
    if method == "one":
        return OnePolicy()
    if method == "nearest-one":
        return NearestOnePolicy()
    if method in LEARNED_METHODS:
        return StructuredPolicy(method, actors, k)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
