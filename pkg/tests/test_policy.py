import numpy as np
import pytest
from conftest import make_world
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from mrta import neural
from mrta.config import WorldConfig
from mrta.policy import (
    Action,
    NearestOnePolicy,
    OnePolicy,
    StructuredPolicy,
    act,
    action_dim,
    build_observation,
    make_policy,
    neighbor_sets,
    obs_dim,
    scripted_nearest,
    scripted_nearest_one,
    scripted_one,
)
from mrta.priority import PriorityTable
from mrta.world import ContractError, init_world, step


def test_dimensions_for_two_neighbors():
    assert obs_dim(2) == 24
    assert action_dim(2) == 4
    assert obs_dim(3) == 2 + 21 + 15


def test_action_vector_roundtrip():
    a = Action.from_vector([0.1, 0.2, 0.7, 0.9], 2)
    assert a.c.tolist() == [0.1, 0.2] and a.alpha == 0.7 and a.beta == 0.9
    assert a.as_vector().tolist() == [0.1, 0.2, 0.7, 0.9]


# -- neighbor sets ------------------------------------------------------------

def test_neighbor_sets_with_three_robots():
    w = init_world(WorldConfig(n_robots=3, n_objects=6), 0)
    robots, objects = neighbor_sets(w, 1, 2)
    assert sorted(robots.tolist()) == [0, 2]
    assert len(objects) == 2


def test_neighbor_sets_shortage():
    w = make_world([(0, 0), (1, 1)], [(1, 0), (2, 0), (3, 0)])
    w.completed[[0, 2]] = True
    _, objects = neighbor_sets(w, 0, 2)
    assert objects.tolist() == [1]


def test_neighbor_sets_distance_tie_lowest_index():
    objs = [(5, 5), (6, 6), (1, 0), (7, 7), (8, 8), (0, 1)]
    w = make_world([(0, 0), (9, 9)], objs)
    _, objects = neighbor_sets(w, 0, 2)
    assert objects.tolist() == [2, 5]
    _, objects = neighbor_sets(w, 0, 1)
    assert objects.tolist() == [2]


def test_neighbor_sets_rejects_zero_k():
    w = make_world([(0, 0)], [(1, 1)])
    with pytest.raises(ContractError):
        neighbor_sets(w, 0, 0)


# -- observation -----------------------------------------------------------------

def _table(w, seed=0):
    return PriorityTable(np.random.default_rng(seed).random((w.n_robots, w.n_objects)))


def test_observation_layout():
    w = make_world([(1, 1), (2, 1), (5, 5)], [(1, 3), (4, 1), (9, 9)],
                   goals=[(0, 0), (8, 8), (7, 7)])
    w.obj_vel[1] = [0.5, 0.0]
    t = _table(w)
    o = build_observation(w, t, 0, 2)
    assert o.shape == (24,)
    assert o[0:2].tolist() == [1, 1]
    # nearest object is 0 (distance 2), then 1 (distance 3)
    assert o[2:9].tolist() == [0, 2, 0, 0, -1, -1, t.phi[0, 0]]
    assert o[9:16].tolist() == [3, 0, 0.5, 0, 7, 7, t.phi[0, 1]]
    # nearest robots: 1 then 2, with their priorities for objects 0 and 1
    assert o[16:20].tolist() == [1, 0, t.phi[1, 0], t.phi[1, 1]]
    assert o[20:24].tolist() == [4, 4, t.phi[2, 0], t.phi[2, 1]]


def test_observation_all_objects_completed():
    w = make_world([(1, 1), (2, 2)], [(3, 3), (4, 4)])
    w.completed[:] = True
    o = build_observation(w, _table(w), 0, 2)
    assert (o[2:16] == 0).all()
    assert (o[18:20] == 0).all()


def test_observation_object_at_robot():
    w = make_world([(3, 3), (0, 0)], [(3, 3), (9, 9)])
    o = build_observation(w, _table(w), 0, 2)
    assert o[2:4].tolist() == [0, 0]


def test_observation_hides_peer_priorities():
    w = init_world(WorldConfig(n_robots=3, n_objects=6), 2)
    t = _table(w)
    full = build_observation(w, t, 0, 2)
    hidden = build_observation(w, t, 0, 2, hide_peer_priorities=True)
    for s in range(2):
        p = 16 + 4 * s
        assert (hidden[p + 2:p + 4] == 0).all()
        assert hidden[p:p + 2].tolist() == full[p:p + 2].tolist()
    np.testing.assert_array_equal(hidden[:16], full[:16])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), m=st.integers(1, 10),
       k=st.integers(1, 3))
def test_observation_dimension_invariant(seed, n, m, k):
    cfg = WorldConfig(n_robots=n, n_objects=m, k_neighbors=k)
    w = init_world(cfg, seed)
    policy = StructuredPolicy("ours", None, k, np.random.default_rng(seed))
    policy.reset(w, seed)
    for _ in range(3):
        obs = policy.observe(w)
        assert obs.shape == (n, obs_dim(k))
        targets = policy.decide(w, policy.actions(obs))
        if w.all_completed:
            break
        w, _ = step(w, targets)
        policy.after_step(w)


# -- act ----------------------------------------------------------------------

def _zero_actor(k=2):
    a = neural.init_mlp(obs_dim(k), action_dim(k), np.random.default_rng(0), hidden=(8,))
    for layer in a.weights + a.biases:
        layer[...] = 0.0
    return a


def test_zero_network_gives_half():
    assert act(_zero_actor(), np.ones(24)).tolist() == [0.5] * 4


def test_act_range_and_purity(rng):
    actor = neural.init_mlp(24, 4, rng, hidden=(16, 16))
    for layer in actor.weights:
        layer *= 20.0          # saturate the head
    o = rng.normal(size=24) * 10
    a1, a2 = act(actor, o), act(actor, o)
    assert ((a1 >= 0) & (a1 <= 1)).all()
    np.testing.assert_array_equal(a1, a2)


def test_act_dimension_mismatch():
    with pytest.raises(ContractError):
        act(_zero_actor(), np.ones(23))


# -- scripted baselines -------------------------------------------------------

def test_nearest_picks_closer_object():
    w = make_world([(0, 0)], [(2, 0), (1, 0)])
    assert scripted_nearest(w, 0) == 1


def test_nearest_single_remaining():
    w = make_world([(0, 0)], [(2, 0), (1, 0)])
    w.completed[1] = True
    assert scripted_nearest(w, 0) == 0


def test_nearest_tie_lower_index():
    w = make_world([(0, 0)], [(0, 2), (2, 0)])
    assert scripted_nearest(w, 0) == 0


def test_one_single_object():
    rng = np.random.default_rng(0)
    assert all(scripted_one(rng, [False]) == 0 for _ in range(10))


def test_one_rejects_all_completed():
    with pytest.raises(ContractError):
        scripted_one(np.random.default_rng(0), [True, True])


def test_one_shared_target_and_determinism():
    cfg = WorldConfig(n_robots=4, n_objects=6)
    seqs = []
    for _ in range(2):
        w = init_world(cfg, 5)
        p = OnePolicy()
        p.reset(w, 5)
        seq = []
        for _ in range(5):
            t = p.targets(w)
            assert len(set(t.tolist())) == 1
            seq.append(int(t[0]))
            w.completed[t[0]] = True
        seqs.append(seq)
    assert seqs[0] == seqs[1]
    assert len(set(seqs[0])) == 5


def test_one_redraw_is_uniform_over_remaining():
    # 1000 episodes: complete the first pick, record which remaining object comes next
    cfg = WorldConfig(n_robots=2, n_objects=4)
    counts = np.zeros(3)
    for seed in range(1000):
        w = init_world(cfg, seed)
        p = OnePolicy()
        p.reset(w, seed)
        first = int(p.targets(w)[0])
        w.completed[first] = True
        second = int(p.targets(w)[0])
        assert second != first
        remaining = [l for l in range(4) if l != first]
        counts[remaining.index(second)] += 1
    assert chisquare(counts).pvalue > 1e-3


def test_nearest_one_reduces_to_nearest_without_stuck():
    w = init_world(WorldConfig(n_robots=3, n_objects=6), 1)
    for i in range(3):
        assert scripted_nearest_one(w, i, np.zeros(3), 1.0) == scripted_nearest(w, i)


def test_nearest_one_adopts_longest_stuck_object():
    objs = [(1, 0), (2, 0), (3, 0), (4, 0), (8, 8)]
    w = make_world([(0.5, 0), (8.3, 8)], objs, selected=[0, 4])
    assert scripted_nearest_one(w, 0, [2.0, 5.0], 1.0) == 4
    # below the threshold the robot keeps the nearest rule
    assert scripted_nearest_one(w, 0, [0.9, 5.0], 1.0) == 0


def test_nearest_one_equal_stuck_is_fixed_point():
    w = make_world([(0.6, 0), (1.4, 0)], [(1, 0), (5, 5)], selected=[0, 0])
    assert [scripted_nearest_one(w, i, [3.0, 3.0], 1.0) for i in range(2)] == [0, 0]


def test_nearest_one_requires_positive_threshold():
    w = make_world([(0, 0)], [(1, 0)])
    with pytest.raises(ContractError):
        scripted_nearest_one(w, 0, [0.0], 0.0)


def test_nearest_one_trace_two_robots_heavy_box():
    # robot 0 parks at a 2 kg box it cannot lift; after the stuck clock passes
    # t_s, robot 1 is the one that joins (robot 0 has the longest stuck time)
    w = make_world([(1.5, 0), (6.0, 0)], [(1, 0), (6.5, 0)], masses=[2.0, 3.0],
                   goals=[(1, 9), (6.5, 9)], stuck_threshold=1.0)
    policy = NearestOnePolicy()
    policy.reset(w, 0)
    history = []
    for _ in range(12):
        t = policy.targets(w)
        history.append(t.tolist())
        w, _ = step(w, t)
    assert history[0] == [0, 1]
    assert [0, 0] in history
    assert w.obj_pos[0, 1] > 0.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), method=st.sampled_from(["nearest", "one", "nearest-one"]))
def test_scripted_never_select_completed(seed, method):
    w = init_world(WorldConfig(n_robots=3, n_objects=4), seed)
    p = make_policy(method)
    p.reset(w, seed)
    for _ in range(40):
        if w.all_completed:
            break
        t = p.targets(w)
        assert not w.completed[t].any()
        w, _ = step(w, t)


# -- structured variants ------------------------------------------------------

def _run_structured(variant, seed=3, steps=6):
    cfg = WorldConfig(n_robots=3, n_objects=5)
    w = init_world(cfg, seed)
    actors = [neural.init_mlp(24, 4, np.random.default_rng(i), hidden=(32,)) for i in range(3)]
    p = StructuredPolicy(variant, actors, 2)
    p.reset(w, seed)
    trace = []
    for _ in range(steps):
        obs = p.observe(w)
        t = p.decide(w, p.actions(obs))
        trace.append((obs.copy(), p.table.phi.copy(), list(p.signals.log)))
        if w.all_completed:
            break
        w, _ = step(w, t)
        p.after_step(w)
    return trace


def test_local_variant_never_receives():
    for _, _, log in _run_structured("local"):
        assert log == []


def test_no_dynamics_sets_priorities_to_references():
    cfg = WorldConfig(n_robots=2, n_objects=4)
    w = init_world(cfg, 0)
    p = StructuredPolicy("no-dynamics", None, 2)
    p.reset(w, 0)
    p.observe(w)
    nb = [neighbor_sets(w, i, 2)[1] for i in range(2)]
    acts = np.array([[0.9, 0.2, 0.0, 0.0], [0.3, 0.6, 0.0, 0.0]])
    p.decide(w, acts)
    for i in range(2):
        assert p.table.phi[i, nb[i]].tolist() == acts[i, :2].tolist()


def test_no_com_hides_peer_slots():
    for obs, _, log in _run_structured("no-com"):
        assert log == []
        assert (obs[:, [18, 19, 22, 23]] == 0).all()


def test_structured_is_deterministic():
    a, b = _run_structured("ours"), _run_structured("ours")
    for (o1, p1, l1), (o2, p2, l2) in zip(a, b):
        np.testing.assert_array_equal(o1, o2)
        np.testing.assert_array_equal(p1, p2)
        assert l1 == l2


def test_decide_rejects_bad_shape():
    w = init_world(WorldConfig(n_robots=2, n_objects=3), 0)
    p = StructuredPolicy("ours")
    p.reset(w, 0)
    with pytest.raises(ContractError):
        p.decide(w, np.zeros((2, 3)))


def test_make_policy_unknown():
    with pytest.raises(ValueError):
        make_policy("greedy")
