import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from teamest.errors import NotATreeError
from teamest.linalg import relative_error
from teamest.model import random_world, sample_trace, sample_traces, scalar_model
from teamest.oedol import oedol_run, oedol_run_batch, oedol_schedule
from teamest.oracle import batch_mmse, make_information_set, odol_run, odol_schedule
from teamest.topology import hop_structure, make_topology, random_tree


def test_rejects_non_tree_and_names_edge():
    with pytest.raises(NotATreeError) as exc:
        oedol_schedule(make_topology("cycle", 4), scalar_model(4), 3)
    assert exc.value.edge == (3, 4)


def test_first_step_gain():
    model = random_world(3, 2, 4, [1, 2, 0.5, 1], 0)
    sched = oedol_schedule(make_topology("line", 4), model, 2)
    for i in range(1, 5):
        H, R = model.H[i - 1], model.sigma_n[i - 1]
        B = model.sigma_x @ H.T @ np.linalg.inv(H @ model.sigma_x @ H.T + R)
        assert np.allclose(sched.B[i][1], B)
        assert np.allclose(sched.A[i][1], np.eye(3) - B @ H)
        assert np.allclose(sched.C[i][1], 0)


def test_scalar_first_message_is_half_measurement():
    model = scalar_model(5)
    tr = sample_trace(model, 3, 1)
    sched = oedol_schedule(random_tree(5, 0), model, 3)
    traj, msgs = oedol_run(sched, tr)
    for i in range(1, 6):
        assert sched.B[i][1][0, 0] == pytest.approx(0.5)
        assert msgs[0, i - 1, 0] == pytest.approx(tr.y[0, i - 1, 0] / 2)


def test_star3_intermediates_at_t1():
    model = random_world(2, 1, 3, [1, 2, 0.5], 3)
    sched = oedol_schedule(make_topology("star", 3), model, 2)
    hub_rows = np.concatenate([sched.B[j][1] @ model.H[j - 1] for j in (2, 3)])
    assert np.allclose(sched.Hbar[1][1], hub_rows)
    for k, j in enumerate((2, 3)):
        b = sched.B[j][1]
        assert np.allclose(sched.G[1][1][k], b @ model.sigma_n[j - 1] @ b.T)
    assert np.allclose(sched.Hbar[2][1], sched.B[1][1] @ model.H[0])


def test_t2_matches_neighbour_conditioning():
    model = scalar_model(6)
    tree = random_tree(6, 2)
    tr = sample_trace(model, 2, 0)
    traj, _ = oedol_run(oedol_schedule(tree, model, 2), tr)
    hops = hop_structure(tree)
    for i in tree.agents:
        entries = [(i, 1), (i, 2)] + [(j, 1) for j in tree.neighbors(i)]
        est, _ = batch_mmse(model, make_information_set(hops, i, 2, entries), tr)
        assert traj.at(i, 2)[0] == pytest.approx(est[0], rel=1e-10)


def test_t1_equals_odol():
    model = random_world(2, 2, 5, [1, 1, 2, 2, 3], 1)
    tree = make_topology("star", 5)
    tr = sample_trace(model, 1, 0)
    a = oedol_run(oedol_schedule(tree, model, 1), tr)[0]
    b = odol_run(odol_schedule(tree, model, 1), tr)
    assert np.allclose(a.u[1], b.u[1], rtol=0, atol=1e-14)


def test_line5_full_horizon():
    model = random_world(2, 1, 5, [1, 0.5, 2, 1, 1.5], 4)
    tree = make_topology("line", 5)
    tr = sample_trace(model, 6, 8)
    a = oedol_run(oedol_schedule(tree, model, 6), tr)[0]
    b = odol_run(odol_schedule(tree, model, 6), tr)
    for i in tree.agents:
        for t in range(1, 7):
            assert relative_error(a.at(i, t), b.at(i, t)) < 1e-6


def test_covariance_matches_odol():
    model = random_world(3, 1, 7, np.linspace(0.5, 2, 7), 5)
    tree = random_tree(7, 5)
    oe = oedol_schedule(tree, model, 8)
    od = odol_schedule(tree, model, 8)
    for i in tree.agents:
        for t in range(9):
            assert np.abs(oe.cov[i][t] - od.cov[i - 1, t]).max() < 1e-8


def test_schedule_is_data_independent():
    model = random_world(2, 1, 6, np.ones(6), 0)
    tree = random_tree(6, 1)
    a, b = oedol_schedule(tree, model, 5), oedol_schedule(tree, model, 5)
    for name in ("A", "B", "C", "D", "Tc", "Hbar", "G", "cov"):
        for i in tree.agents:
            for t in range(6):
                assert np.array_equal(getattr(a, name)[i][t], getattr(b, name)[i][t])


def test_message_length_and_broadcast():
    model = random_world(3, 2, 6, np.ones(6), 2)
    tree = random_tree(6, 3)
    traj, msgs = oedol_run(oedol_schedule(tree, model, 5), sample_trace(model, 5, 0))
    assert msgs.shape == (5, 6, 3)
    # s_{i,t} = u_{i,t} - A_{i,t} u_{i,t-1}
    sched = oedol_schedule(tree, model, 5)
    for i in tree.agents:
        for t in range(1, 6):
            s = traj.at(i, t) - sched.A[i][t] @ traj.at(i, t - 1)
            assert np.allclose(msgs[t - 1, i - 1], s)


@pytest.mark.slow
def test_covariance_matches_monte_carlo():
    model = random_world(2, 1, 5, [1, 0.5, 2, 1, 1.5], 7)
    tree = random_tree(5, 4)
    sched = oedol_schedule(tree, model, 4)
    n = 200
    x, y = sample_traces(model, 4, 31, range(n))
    u, _ = oedol_run_batch(sched, y)
    err = np.sum((u[:, 1:] - x[:, None, None, :]) ** 2, axis=-1)
    mean, se = err.mean(axis=0), err.std(axis=0, ddof=1) / np.sqrt(n)
    for i in tree.agents:
        for t in range(1, 5):
            assert abs(mean[t - 1, i - 1] - np.trace(sched.cov[i][t])) < 3 * se[t - 1, i - 1]


@settings(max_examples=20, deadline=None)
@given(m=st.integers(2, 10), p=st.integers(1, 3), q=st.integers(1, 2), T=st.integers(1, 10),
       seed=st.integers(0, 10_000))
def test_tree_equivalence(m, p, q, T, seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(m, seed)
    model = random_world(p, q, m, 0.2 + 2 * rng.random(m), seed + 1)
    tr = sample_trace(model, T, seed + 2)
    a, msgs = oedol_run(oedol_schedule(tree, model, T), tr)
    b = odol_run(odol_schedule(tree, model, T), tr)
    assert msgs.shape[-1] == p
    for i in tree.agents:
        for t in range(1, T + 1):
            assert relative_error(a.at(i, t), b.at(i, t)) < 1e-6
