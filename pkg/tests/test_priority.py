import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import priority_oracle

from mrta.priority import (
    CommSignals,
    PriorityTable,
    exchanges,
    init_priorities,
    priority_rows,
    select_object,
    set_priorities,
    trigger_signals,
    update_priorities,
    zero_completed,
)
from mrta.world import ContractError


def _signals(d, sigma):
    return CommSignals(np.asarray(d), np.asarray(sigma))


def test_tracking_matches_discrete_recurrence():
    t = PriorityTable(np.array([[0.0, 0.7]]), 0.2)
    out = update_priorities(t, [[1.0, 0.7]], _signals([0], [0]), [[0, 1]], dt=1.0)
    # ten Euler steps of size 0.1 with rate 0.2: 1 - 0.98**10
    assert out.phi[0, 0] == pytest.approx(1 - 0.98 ** 10, abs=1e-14)
    assert out.phi[0, 1] == pytest.approx(0.7, abs=1e-15)
    # and close to the continuous-time solution
    assert out.phi[0, 0] == pytest.approx(1 - np.exp(-0.2), abs=2e-3)


def test_consensus_pulls_receiver_toward_sender():
    t = PriorityTable(np.array([[0.9], [0.1]]), 0.2)
    out = update_priorities(t, np.zeros((2, 0)), _signals([1, 0], [0, 1]),
                            np.zeros((2, 0), dtype=int), dt=1.0)
    assert out.phi[0, 0] == 0.9
    gap = 0.8 * 0.98 ** 10
    assert out.phi[1, 0] == pytest.approx(0.9 - gap, abs=1e-14)


def test_robot_does_not_couple_with_itself():
    t = PriorityTable(np.array([[0.3, 0.6]]), 0.2)
    out = update_priorities(t, np.zeros((1, 0)), _signals([1], [1]),
                            np.zeros((1, 0), dtype=int), dt=1.0)
    np.testing.assert_array_equal(out.phi, t.phi)


def test_silent_robots_without_references_keep_priorities():
    phi = np.random.default_rng(0).random((3, 4))
    out = update_priorities(PriorityTable(phi), np.zeros((3, 0)), _signals([0, 0, 0], [0, 0, 0]),
                            np.zeros((3, 0), dtype=int), dt=1.0)
    np.testing.assert_array_equal(out.phi, phi)


def test_completed_columns_stay_zero():
    phi = np.full((2, 3), 0.5)
    out = update_priorities(PriorityTable(phi), [[1.0, 1.0], [1.0, 1.0]], _signals([1, 1], [1, 1]),
                            [[1, 2], [2, 1]], dt=1.0, completed=[False, True, False])
    assert (out.phi[:, 1] == 0).all()
    assert (out.phi[:, [0, 2]] > 0).all()


def test_reference_out_of_range_rejected():
    t = PriorityTable(np.zeros((1, 2)))
    with pytest.raises(ContractError):
        update_priorities(t, [[1.5, 0.0]], _signals([0], [0]), [[0, 1]], dt=1.0)


def test_reference_shape_mismatch_rejected():
    t = PriorityTable(np.zeros((2, 2)))
    with pytest.raises(ContractError):
        update_priorities(t, [[0.5, 0.5]], _signals([0, 0], [0, 0]), [[0, 1]], dt=1.0)


@st.composite
def priority_cases(draw):
    n = draw(st.integers(1, 5))
    m = draw(st.integers(1, 6))
    k = draw(st.integers(0, min(m, 3)))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    phi = rng.random((n, m))
    c = rng.random((n, k))
    nb = np.array([rng.permutation(m)[:k] for _ in range(n)], dtype=int).reshape(n, k)
    if k and draw(st.booleans()):
        nb[:, -1] = -1          # padded slot
    d = rng.integers(0, 2, n)
    sigma = rng.integers(0, 2, n)
    completed = rng.random(m) < 0.25
    k_phi = draw(st.sampled_from([0.2, 1.0, 8.0]))   # 8.0 forces clamping
    return phi, c, nb, d, sigma, completed, k_phi


@settings(max_examples=150, deadline=None)
@given(priority_cases())
def test_matches_scalar_oracle(case):
    phi, c, nb, d, sigma, completed, k_phi = case
    out = update_priorities(PriorityTable(phi.copy(), k_phi), c, _signals(d, sigma), nb,
                            dt=1.0, n_sub=10, completed=completed)
    ref = priority_oracle(phi.tolist(), c.tolist(), d.tolist(), sigma.tolist(), nb.tolist(),
                          completed.tolist(), k_phi, 1.0, 10)
    np.testing.assert_allclose(out.phi, np.array(ref), rtol=0, atol=1e-12)
    assert ((out.phi >= 0) & (out.phi <= 1)).all()


@settings(max_examples=50, deadline=None)
@given(priority_cases())
def test_input_table_not_mutated(case):
    phi, c, nb, d, sigma, completed, k_phi = case
    table = PriorityTable(phi.copy(), k_phi)
    update_priorities(table, c, _signals(d, sigma), nb, dt=1.0)
    np.testing.assert_array_equal(table.phi, phi)


def test_set_priorities_overwrites_neighbors_only():
    t = PriorityTable(np.full((1, 3), 0.4))
    out = set_priorities(t, [[0.9, 0.1]], [[2, 0]])
    assert out.phi.tolist() == [[0.1, 0.4, 0.9]]


# -- gates and selection ---------------------------------------------------------

@pytest.mark.parametrize("alpha,beta,speed,expected", [
    (0.9, 0.9, 0.0, (1, 1)),
    (0.9, 0.1, 0.0, (1, 0)),
    (0.5, 0.5, 0.0, (0, 0)),      # threshold is strict
    (0.9, 0.9, 0.5, (0, 0)),      # a moving object silences both gates
])
def test_trigger_signals(alpha, beta, speed, expected):
    assert trigger_signals(alpha, beta, speed) == expected


def test_trigger_signals_vectorised():
    d, sigma = trigger_signals([0.9, 0.9, 0.2], [0.1, 0.8, 0.8], [0.0, 0.0, 0.0])
    assert d.tolist() == [1, 1, 0] and sigma.tolist() == [0, 1, 1]


def test_exchange_log_excludes_self():
    log = exchanges(7, [1, 1, 0], [0, 1, 1])
    assert sorted(log) == [(7, 0, 1), (7, 0, 2), (7, 1, 2)]


def test_select_highest_open_object():
    assert select_object([0.2, 0.9, 0.5], [False, False, False]) == 1
    assert select_object([0.2, 0.9, 0.5], [False, True, False]) == 2


def test_select_tie_goes_to_lowest_index():
    assert select_object([0.3, 0.7, 0.7], [False, False, False]) == 1


def test_select_when_everything_done():
    assert select_object([0.0, 0.0], [True, True]) is None


def test_init_and_zero_completed(rng):
    t = init_priorities(3, 4, rng)
    assert t.phi.shape == (3, 4) and ((t.phi >= 0) & (t.phi <= 1)).all()
    z = zero_completed(t, [False, True, False, True])
    assert (z.phi[:, [1, 3]] == 0).all()
    np.testing.assert_array_equal(z.phi[:, [0, 2]], t.phi[:, [0, 2]])


def test_priority_rows_layout():
    rows = priority_rows(4, PriorityTable(np.array([[0.1, 0.2], [0.3, 0.4]])))
    assert rows[0] == (4, 0, 0, 0.1) and rows[-1] == (4, 1, 1, 0.4)
