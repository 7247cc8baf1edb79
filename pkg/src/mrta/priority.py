"""Dynamic task priorities with event-triggered global communication.

Every robot keeps a priority in [0, 1] for each object. For the K objects
nearest to it, a robot pulls its priority toward the reference value chosen by
its policy; for every object, a robot whose receive gate is open is pulled
toward the priorities of all robots whose send gate is open. Robots pick the
object they rank highest.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .world import ContractError

GATE_THRESHOLD = 0.5


@dataclass
class PriorityTable:
    phi: np.ndarray          # (N, M), entry [i, l] is robot i's priority for object l
    k_phi: float = 0.2

    def copy(self):
        return PriorityTable(self.phi.copy(), self.k_phi)


@dataclass
class CommSignals:
    d: np.ndarray            # (N,) send gates
    sigma: np.ndarray        # (N,) receive gates
    log: list = field(default_factory=list)   # (step, sender, receiver)


def init_priorities(n_robots, n_objects, rng, k_phi=0.2):
    return PriorityTable(rng.uniform(0.0, 1.0, size=(n_robots, n_objects)), k_phi)


def trigger_signals(alpha, beta, selected_object_speed):
    """Send/receive gates: open only when the policy asks and the robot's
    selected object is standing still.

    Works elementwise on arrays as well as on scalars.
    """
    stalled = np.asarray(selected_object_speed) == 0.0
    d = ((np.asarray(alpha) > GATE_THRESHOLD) & stalled).astype(int)
    sigma = ((np.asarray(beta) > GATE_THRESHOLD) & stalled).astype(int)
    if d.ndim == 0:
        return int(d), int(sigma)
    return d, sigma


def exchanges(step_index, d, sigma):
    """Log records (step, sender, receiver) for one decision step."""
    senders = np.flatnonzero(d)
    receivers = np.flatnonzero(sigma)
    return [(step_index, int(j), int(i)) for i in receivers for j in senders if j != i]


def reference_matrix(c, neighbor_objects, n_objects):
    """Scatter per-robot K references onto an (N, M) grid plus its mask.

    ``neighbor_objects`` is (N, K) with -1 padding for missing slots.
    """
    c = np.asarray(c, dtype=float)
    nb = np.asarray(neighbor_objects, dtype=int)
    if c.shape != nb.shape:
        raise ContractError(f"reference shape {c.shape} does not match neighbor sets {nb.shape}")
    n = c.shape[0]
    ref = np.zeros((n, n_objects))
    mask = np.zeros((n, n_objects), dtype=bool)
    rows, slots = np.nonzero(nb >= 0)
    ref[rows, nb[rows, slots]] = c[rows, slots]
    mask[rows, nb[rows, slots]] = True
    return ref, mask


def update_priorities(table, c, signals, neighbor_objects, dt, n_sub=10, completed=None):
    """Integrate the priority dynamics over ``dt`` with ``n_sub`` Euler steps.

    Returns a new table; entries are clamped to [0, 1] after every sub-step and
    completed objects stay at zero.
    """
    phi = np.array(table.phi, dtype=float)
    n, m = phi.shape
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != n:
        raise ContractError(f"reference array must have {n} rows, got shape {c.shape}")
    if ((c < 0) | (c > 1)).any():
        raise ContractError("reference values must lie in [0, 1]")
    ref, mask = reference_matrix(c, neighbor_objects, m)
    d = np.asarray(signals.d, dtype=float)
    sigma = np.asarray(signals.sigma, dtype=float)
    if d.shape != (n,) or sigma.shape != (n,):
        raise ContractError("gate vectors must have one entry per robot")
    done = np.zeros(m, dtype=bool) if completed is None else np.asarray(completed, dtype=bool)
    k = table.k_phi
    h = dt / n_sub
    n_senders = d.sum()
    for _ in range(n_sub):
        sent = d @ phi                                   # (M,) sum_j d_j phi_j
        # drop the j == i term explicitly
        others = sent[None, :] - d[:, None] * phi
        peers = n_senders - d
        consensus = sigma[:, None] * k * (others - peers[:, None] * phi)
        tracking = np.where(mask, k * (ref - phi), 0.0)
        phi = np.clip(phi + h * (tracking + consensus), 0.0, 1.0)
        phi[:, done] = 0.0
    return PriorityTable(phi, k)


def set_priorities(table, c, neighbor_objects, completed=None):
    """Overwrite neighbor priorities with their references (no dynamics)."""
    phi = table.phi.copy()
    ref, mask = reference_matrix(c, neighbor_objects, phi.shape[1])
    phi[mask] = ref[mask]
    if completed is not None:
        phi[:, np.asarray(completed, dtype=bool)] = 0.0
    return PriorityTable(phi, table.k_phi)


def select_object(phi_i, completed):
    """Highest-priority open object, lowest index on ties; None when all done."""
    completed = np.asarray(completed, dtype=bool)
    open_ = np.flatnonzero(~completed)
    if open_.size == 0:
        return None
    vals = np.asarray(phi_i)[open_]
    return int(open_[np.argmax(vals)])   # argmax returns the first maximum


def zero_completed(table, completed):
    phi = table.phi.copy()
    phi[:, np.asarray(completed, dtype=bool)] = 0.0
    return PriorityTable(phi, table.k_phi)


PRIORITY_COLUMNS = ("step", "robot", "object", "phi")
COMM_COLUMNS = ("step", "sender", "receiver")


def priority_rows(step_index, table):
    n, m = table.phi.shape
    return [(step_index, i, l, float(table.phi[i, l])) for i in range(n) for l in range(m)]


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
