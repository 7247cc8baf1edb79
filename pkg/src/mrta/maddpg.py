"""Centralized-critic / decentralized-actor training (MADDPG) over the
transport world and the structured priority policy.

Every robot in the training world gets its own actor and critic. Critics see
all observations and all continuous actions; actors see only their own
observation. The stored actions are the [0, 1] actor outputs before the gate
threshold, so the critic gets a differentiable action space.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import neural
from .config import TrainConfig, config_hash, config_to_dict
from .neural import TrainingError
from .policy import StructuredPolicy, act, action_dim, obs_dim
from .world import init_world, settle, step

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("episode", "R1", "R2")
MANIFEST = "manifest.json"


class ReplayBuffer:
    """Bounded FIFO of joint transitions with uniform sampling.

    Storage grows by doubling up to ``capacity`` so a large nominal capacity
    costs nothing until it is used.
    """

    def __init__(self, capacity, n_agents, obs_size, act_size):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.shape = (n_agents, obs_size, act_size)
        self._alloc(min(capacity, 4096))
        self.size = 0
        self.head = 0       # next write slot once full

    def _alloc(self, n):
        na, od, ad = self.shape
        old = getattr(self, "obs", None)
        new = dict(obs=np.zeros((n, na, od)), act=np.zeros((n, na, ad)), rew=np.zeros(n),
                   next_obs=np.zeros((n, na, od)), done=np.zeros(n))
        if old is not None:
            for k, arr in new.items():
                arr[:self.size] = getattr(self, k)[:self.size]
        for k, arr in new.items():
            setattr(self, k, arr)

    def __len__(self):
        return self.size

    def add(self, obs, act, reward, next_obs, done):
        if self.size < self.capacity:
            if self.size == len(self.rew):
                self._alloc(min(self.capacity, 2 * len(self.rew)))
            slot = self.size
            self.size += 1
        else:
            slot = self.head
            self.head = (self.head + 1) % self.capacity
        self.obs[slot] = obs
        self.act[slot] = act
        self.rew[slot] = reward
        self.next_obs[slot] = next_obs
        self.done[slot] = float(done)

    def _order(self):
        if self.size < self.capacity:
            return np.arange(self.size)
        return (self.head + np.arange(self.capacity)) % self.capacity

    def contents(self):
        """Stored transitions oldest first, as a dict of arrays."""
        idx = self._order()
        return self.batch(idx)

    def batch(self, idx):
        return dict(obs=self.obs[idx], act=self.act[idx], rew=self.rew[idx],
                    next_obs=self.next_obs[idx], done=self.done[idx])

    def sample(self, batch_size, rng):
        if batch_size > self.size:
            raise ValueError(f"cannot sample {batch_size} from {self.size} transitions")
        return self.batch(rng.integers(0, self.size, size=batch_size))


@dataclass
class AgentNets:
    actor: neural.MLP
    critic: neural.MLP
    target_actor: neural.MLP
    target_critic: neural.MLP
    actor_opt: neural.AdamState
    critic_opt: neural.AdamState


def make_agents(n_agents, obs_size, act_size, rng, hidden=(64, 64, 64, 64),
                actor_lr=1e-3, critic_lr=1e-3):
    critic_in = n_agents * (obs_size + act_size)
    agents = []
    for _ in range(n_agents):
        actor = neural.init_mlp(obs_size, act_size, rng, hidden, head="tanh")
        critic = neural.init_mlp(critic_in, 1, rng, hidden, head="identity")
        agents.append(AgentNets(actor, critic, actor.copy(), critic.copy(),
                                neural.adam_state(actor, actor_lr),
                                neural.adam_state(critic, critic_lr)))
    return agents


def critic_input(obs, act):
    """Flatten (B, N, D) observations and (B, N, A) actions into critic rows."""
    b = obs.shape[0]
    return np.concatenate([obs.reshape(b, -1), act.reshape(b, -1)], axis=1)


def target_actions(agents, obs):
    return np.stack([(neural.forward(ag.target_actor, obs[:, j])[0] + 1.0) / 2.0
                     for j, ag in enumerate(agents)], axis=1)


def critic_targets(agents, i, batch, gamma, reward_scale=1.0):
    """Bootstrapped targets for critic ``i``; touches target networks only."""
    next_act = target_actions(agents, batch["next_obs"])
    q_next, _ = neural.forward(agents[i].target_critic, critic_input(batch["next_obs"], next_act))
    return reward_scale * batch["rew"] + gamma * (1.0 - batch["done"]) * q_next[:, 0]


def critic_loss_and_grads(critic, x, y):
    q, cache = neural.forward(critic, x)
    err = q[:, 0] - y
    loss = float(np.mean(err ** 2))
    grads, _ = neural.backward(critic, cache, (2.0 / len(y)) * err[:, None])
    return loss, grads


def actor_loss_and_grads(agents, i, batch):
    """Policy-gradient step for actor ``i`` through the live critic ``i``."""
    ag = agents[i]
    _, _, a_size = batch["act"].shape
    u, a_cache = neural.forward(ag.actor, batch["obs"][:, i])
    acts = batch["act"].copy()
    acts[:, i] = (u + 1.0) / 2.0
    x = critic_input(batch["obs"], acts)
    q, c_cache = neural.forward(ag.critic, x)
    b = len(q)
    _, dx = neural.backward(ag.critic, c_cache, np.full((b, 1), -1.0 / b))
    n_obs = batch["obs"].shape[1] * batch["obs"].shape[2]
    da = dx[:, n_obs + i * a_size: n_obs + (i + 1) * a_size]
    grads, _ = neural.backward(ag.actor, a_cache, 0.5 * da)
    return -float(np.mean(q)), grads


def train_step(agents, buffer, batch_size, gamma, rng, tau=0.01, reward_scale=1.0):
    """One update of every agent from a shared uniformly sampled batch."""
    batch = buffer.sample(batch_size, rng)
    diag = {"critic_loss": [], "actor_loss": []}
    x = critic_input(batch["obs"], batch["act"])
    ys = [critic_targets(agents, i, batch, gamma, reward_scale) for i in range(len(agents))]
    for i, ag in enumerate(agents):
        c_loss, c_grads = critic_loss_and_grads(ag.critic, x, ys[i])
        if not np.isfinite(c_loss):
            raise TrainingError(f"agent {i}: critic loss is {c_loss}; "
                                f"target range [{ys[i].min()}, {ys[i].max()}]")
        neural.optim_step(ag.critic, c_grads, ag.critic_opt)
        a_loss, a_grads = actor_loss_and_grads(agents, i, batch)
        if not np.isfinite(a_loss):
            raise TrainingError(f"agent {i}: actor loss is {a_loss}")
        neural.optim_step(ag.actor, a_grads, ag.actor_opt)
        diag["critic_loss"].append(c_loss)
        diag["actor_loss"].append(a_loss)
    for ag in agents:
        neural.soft_update(ag.target_actor, ag.actor, tau)
        neural.soft_update(ag.target_critic, ag.critic, tau)
    return agents, diag


def explore_action(actor, o, noise_scale, rng):
    if noise_scale < 0:
        raise ValueError("noise_scale must be non-negative")
    a = act(actor, o)
    return np.clip(a + rng.normal(0.0, 1.0, size=a.shape) * noise_scale, 0.0, 1.0)


def noise_schedule(cfg, episode):
    """Linear decay from the initial to the final scale, then flat."""
    horizon = cfg.noise_decay_fraction * cfg.episodes
    if horizon <= 0:
        return cfg.noise_final
    frac = min(episode / horizon, 1.0)
    return cfg.noise_initial + frac * (cfg.noise_final - cfg.noise_initial)


def episode_seed(run_seed, episode):
    return int(np.random.SeedSequence([run_seed, episode]).generate_state(1)[0])


def deploy_actors(actors, n_eval):
    """Robot ``i`` runs actor ``i mod len(actors)``."""
    if not actors:
        raise ValueError("need at least one trained actor")
    return [actors[i % len(actors)] for i in range(n_eval)]


@dataclass
class TrainResult:
    agents: list
    curves: list = field(default_factory=list)     # (episode, R1, R2)
    returns: list = field(default_factory=list)    # total per-episode return
    diagnostics: list = field(default_factory=list)

    @property
    def actors(self):
        return [ag.actor for ag in self.agents]


def run_training(cfg: TrainConfig, checkpoint_dir=None, progress=None):
    """Train per-robot actors and critics; returns a :class:`TrainResult`."""
    wcfg = cfg.world
    n, k = wcfg.n_robots, wcfg.k_neighbors
    o_size, a_size = obs_dim(k), action_dim(k)
    root = np.random.SeedSequence(cfg.seed)
    init_ss, noise_ss, sample_ss = root.spawn(3)
    hidden = (cfg.hidden_units,) * cfg.hidden_layers
    agents = make_agents(n, o_size, a_size, np.random.default_rng(init_ss), hidden,
                         cfg.actor_lr, cfg.critic_lr)
    noise_rng = np.random.default_rng(noise_ss)
    sample_rng = np.random.default_rng(sample_ss)
    buffer = ReplayBuffer(cfg.buffer_capacity, n, o_size, a_size)
    result = TrainResult(agents)
    min_fill = max(cfg.warmup, cfg.batch_size)
    t0 = time.time()

    for ep in range(cfg.episodes):
        seed = episode_seed(cfg.seed, ep)
        world = init_world(wcfg, seed)
        settle(world)
        policy = StructuredPolicy(cfg.variant, None, k)
        policy.reset(world, seed)
        obs = policy.observe(world)
        noise = noise_schedule(cfg, ep)
        r1_sum = r2_sum = total = 0.0
        # fixed-length episodes: delivered objects keep paying the completion
        # term, so early delivery is what the return rewards
        for _ in range(wcfg.max_steps):
            acts = np.stack([explore_action(agents[i].actor, obs[i], noise, noise_rng)
                             for i in range(n)])
            targets = policy.decide(world, acts)
            world, out = step(world, targets)
            policy.after_step(world)
            next_obs = policy.observe(world)
            # hitting the step limit is a truncation, not a terminal state
            buffer.add(obs, acts, out.reward, next_obs, False)
            obs = next_obs
            r1_sum += out.r1
            r2_sum += out.r2
            total += out.reward
            if len(buffer) >= min_fill:
                _, diag = train_step(agents, buffer, cfg.batch_size, cfg.gamma, sample_rng,
                                     cfg.tau, cfg.reward_scale)
        result.curves.append((ep, r1_sum, r2_sum))
        result.returns.append(total)
        if progress is not None:
            progress(ep, r1_sum, r2_sum)
        if (ep + 1) % 100 == 0:
            log.info("episode %d  R1=%.1f R2=%.1f  noise=%.3f  buffer=%d  %.0fs",
                     ep + 1, r1_sum, r2_sum, noise, len(buffer), time.time() - t0)
        if checkpoint_dir is not None and (ep + 1) % cfg.checkpoint_interval == 0:
            save_checkpoint(checkpoint_dir, agents, cfg, ep + 1)
    if checkpoint_dir is not None:
        save_checkpoint(checkpoint_dir, agents, cfg, cfg.episodes)
    return result


# -- checkpoints and curves ---------------------------------------------------

def save_checkpoint(directory, agents, cfg, episode):
    """One weight file per network per agent plus ``manifest.json``.

    Files are written to temporary names and renamed so an interrupted save
    leaves the previous checkpoint usable.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    k = cfg.world.k_neighbors
    files = {}
    for i, ag in enumerate(agents):
        for role in ("actor", "critic", "target_actor", "target_critic"):
            name = f"{role}_{i}.bin"
            tmp = d / (name + ".tmp")
            neural.save(getattr(ag, role), tmp)
            files[name] = tmp
    manifest = {
        "format": 1,
        "run_seed": cfg.seed,
        "episode": episode,
        "config_hash": config_hash(cfg),
        "variant": cfg.variant,
        "n_agents": len(agents),
        "k_neighbors": k,
        "obs_dim": obs_dim(k),
        "action_dim": action_dim(k),
        "config": config_to_dict(cfg),
    }
    tmp_manifest = d / (MANIFEST + ".tmp")
    tmp_manifest.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    for name, tmp in files.items():
        tmp.replace(d / name)
    tmp_manifest.replace(d / MANIFEST)
    return d / MANIFEST


class CheckpointError(ValueError):
    pass


def load_actors(directory, k=None):
    """Actors and manifest from a checkpoint directory.

    Raises :class:`CheckpointError` when files are missing or a weight-file
    header disagrees with the observation/action layout.
    """
    d = Path(directory)
    mpath = d / MANIFEST
    if not mpath.is_file():
        raise CheckpointError(f"no {MANIFEST} in {d}")
    manifest = json.loads(mpath.read_text())
    k = manifest["k_neighbors"] if k is None else k
    actors = []
    for i in range(manifest["n_agents"]):
        path = d / f"actor_{i}.bin"
        if not path.is_file():
            raise CheckpointError(f"missing {path}")
        try:
            actors.append(neural.load(path, expect_in=obs_dim(k), expect_out=action_dim(k)))
        except neural.ShapeError as exc:
            raise CheckpointError(f"{path}: {exc}") from exc
    return actors, manifest


def write_curves(path, curves):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for ep, r1, r2 in curves:
            w.writerow((ep, repr(float(r1)), repr(float(r2))))
