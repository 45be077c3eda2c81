import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from teamest.errors import InvalidInputError, InvalidWindowError
from teamest.linalg import relative_error
from teamest.model import WorldModel, random_world, sample_trace, scalar_model
from teamest.oracle import (batch_mmse, make_information_set, odol_run, odol_schedule,
                            oracle_information_set)
from teamest.topology import NetworkTopology, hop_structure, make_topology, random_topology


def exact_scalar_coefficients(n, sx2, sn2):
    """Exact conditioning weights of x on n unit-gain scalar measurements."""
    A = sp.ones(n, 1)
    S = A * sp.Rational(sx2) * A.T + sp.Rational(sn2) * sp.eye(n)
    return list(sp.Rational(sx2) * A.T * S.inv())


def test_information_set_examples():
    line = hop_structure(make_topology("line", 4))
    assert set(oracle_information_set(line, 1, 2)) == {(1, 1), (1, 2), (2, 1)}
    cyc = hop_structure(make_topology("cycle", 4))
    info = oracle_information_set(cyc, 1, 3)
    assert set(info) == {(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (4, 1), (4, 2), (3, 1)}
    star = hop_structure(make_topology("star", 3))
    assert set(oracle_information_set(star, 2, 3, window=2)) == {(2, 2), (2, 3), (1, 2)}


def test_information_set_canonical_order():
    cyc = hop_structure(make_topology("cycle", 4))
    info = oracle_information_set(cyc, 1, 3)
    assert info.entries == ((1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (4, 1), (4, 2), (3, 1))
    shuffled = make_information_set(cyc, 1, 3, reversed(info.entries))
    assert shuffled.entries == info.entries


def test_information_set_window_too_short():
    with pytest.raises(InvalidWindowError):
        oracle_information_set(hop_structure(make_topology("line", 4)), 1, 5, window=2)


def test_difference_gives_new_measurements():
    h = hop_structure(make_topology("fully_connected", 3))
    new = oracle_information_set(h, 1, 2).difference(oracle_information_set(h, 1, 1))
    assert set(new) == {(1, 2), (2, 1), (3, 1)}


def test_batch_empty_is_prior():
    model = random_world(2, 1, 2, [1, 1], 0)
    est, cov = batch_mmse(model, make_information_set(hop_structure(make_topology("line", 2)),
                                                      1, 0, []), sample_trace(model, 1, 0))
    assert np.array_equal(est, model.xbar) and np.array_equal(cov, model.sigma_x)


def test_batch_scalar_single_measurement():
    model = scalar_model()
    tr = sample_trace(model, 1, 4)
    info = make_information_set(_single_hops(), 1, 1, [(1, 1)])
    est, cov = batch_mmse(model, info, tr)
    assert est[0] == pytest.approx(tr.y[0, 0, 0] / 2)
    assert cov[0, 0] == pytest.approx(0.5)


def _single_hops():
    return hop_structure(NetworkTopology(1, frozenset()))


@pytest.mark.parametrize("sx2,sn2", [(1, 1), (2, 1), ("1/2", 3)])
def test_batch_four_measurements_exact(sx2, sn2):
    exact = exact_scalar_coefficients(4, sx2, sn2)
    sx, sn = float(sp.Rational(sx2)), float(sp.Rational(sn2))
    assert all(c == sp.Rational(sx2) / (4 * sp.Rational(sx2) + sp.Rational(sn2)) for c in exact)
    model = WorldModel(np.zeros(1), np.array([[sx]]), np.ones((4, 1, 1)), np.full((4, 1, 1), sn))
    tr = sample_trace(model, 1, 2)
    info = make_information_set(hop_structure(make_topology("fully_connected", 4)), 1, 1,
                                [(j, 1) for j in range(1, 5)])
    est, _ = batch_mmse(model, info, tr)
    assert est[0] == pytest.approx(float(exact[0]) * tr.y[0, :, 0].sum(), rel=1e-12)


def test_batch_rejects_bad_entries():
    model = scalar_model(2)
    tr = sample_trace(model, 2, 0)
    h = hop_structure(make_topology("line", 2))
    with pytest.raises(InvalidInputError):
        batch_mmse(model, make_information_set(h, 1, 3, [(1, 3)]), tr)


def test_batch_pseudo_inverse_on_duplicated_noiseless_rows():
    model = WorldModel(np.zeros(1), np.eye(1), np.ones((2, 1, 1)), np.zeros((2, 1, 1)),
                       check=False)
    tr = sample_trace(model, 1, 0)
    info = make_information_set(hop_structure(make_topology("line", 2)), 1, 1, [(1, 1), (2, 1)])
    est, cov = batch_mmse(model, info, tr)
    assert est[0] == pytest.approx(tr.x[0])
    assert cov[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_odol_first_gain_is_half():
    sched = odol_schedule(make_topology("cycle", 5), scalar_model(5), 3)
    for i in range(1, 6):
        assert sched.gains[i][1].shape == (1, 1)
        assert sched.gains[i][1][0, 0] == pytest.approx(0.5)


def test_odol_delta_sizes():
    sched = odol_schedule(make_topology("fully_connected", 3), scalar_model(3), 3)
    assert sched.delta(1, 2) == [(1, 2), (2, 1), (3, 1)]
    assert sched.delta(1, 1) == [(1, 1)]


def test_odol_zero_prior_covariance():
    model = WorldModel(np.zeros(2), np.zeros((2, 2)), np.ones((3, 1, 2)), np.ones((3, 1, 1)))
    sched = odol_schedule(make_topology("line", 3), model, 3)
    for i in range(1, 4):
        for t in range(1, 4):
            assert np.all(sched.gains[i][t] == 0)
            assert np.all(sched.cov[i - 1, t] == 0)


def test_odol_scalar_first_step():
    model = scalar_model(3)
    tr = sample_trace(model, 2, 5)
    traj = odol_run(odol_schedule(make_topology("line", 3), model, 2), tr)
    for i in range(1, 4):
        assert traj.at(i, 1)[0] == pytest.approx(tr.y[0, i - 1, 0] / 2)
    assert np.array_equal(traj.u[0], np.zeros((3, 1)))


def test_odol_noiseless_identity_observation():
    model = WorldModel(np.zeros(2), np.eye(2), np.array([np.eye(2)] * 3), np.zeros((3, 2, 2)),
                       check=False)
    tr = sample_trace(model, 2, 1)
    traj = odol_run(odol_schedule(make_topology("line", 3), model, 2), tr)
    for i in range(1, 4):
        assert np.allclose(traj.at(i, 1), tr.x)


def test_permutation_and_stacking():
    model = random_world(2, 2, 5, [1, 2, 1, 3, 1], 0)
    sched = odol_schedule(make_topology("star", 5), model, 2)
    for i in range(1, 6):
        P = sched.permutation(i)
        assert np.all(P.sum(axis=0) == 1) and np.all(P.sum(axis=1) == 1)
        assert np.array_equal(sched.stacked_H(i), np.kron(P, np.eye(2)) @ model.stacked_H())


def test_covariance_symmetric_and_trace_non_increasing():
    model = random_world(3, 1, 6, [1, 0.5, 2, 1, 1, 3], 2)
    sched = odol_schedule(random_topology(6, 3), model, 6)
    for i in range(6):
        tr = [np.trace(sched.cov[i, t]) for t in range(7)]
        assert all(b <= a + 1e-12 for a, b in zip(tr, tr[1:]))
        for t in range(7):
            assert np.abs(sched.cov[i, t] - sched.cov[i, t].T).max() < 1e-12


def test_topology_independence_at_t1():
    model = random_world(3, 2, 6, [1, 2, 1, 3, 1, 1], 0)
    tr = sample_trace(model, 1, 0)
    ref = None
    for kind in ("line", "star", "fully_connected", "cycle"):
        sched = odol_schedule(make_topology(kind, 6), model, 1)
        u = odol_run(sched, tr).u[1]
        if ref is None:
            ref, ref_cov = u, sched.cov[:, 1]
        assert np.array_equal(u, ref)
        assert np.array_equal(sched.cov[:, 1], ref_cov)


def test_monotone_information():
    model = random_world(2, 1, 4, [1, 1, 2, 2], 6)
    tr = sample_trace(model, 3, 0)
    h = hop_structure(make_topology("fully_connected", 4))
    entries = [(j, t) for t in (1, 2, 3) for j in range(1, 5)]
    traces = [np.trace(batch_mmse(model, make_information_set(h, 1, 3, entries[:n]), tr)[1])
              for n in range(len(entries) + 1)]
    assert all(b <= a + 1e-12 for a, b in zip(traces, traces[1:]))


def test_schedule_horizon_shorter_than_trace():
    model = scalar_model(2)
    sched = odol_schedule(make_topology("line", 2), model, 2)
    with pytest.raises(InvalidInputError):
        odol_run(sched, sample_trace(model, 3, 0))


@settings(max_examples=25, deadline=None)
@given(m=st.integers(2, 8), p=st.integers(1, 3), q=st.integers(1, 2), T=st.integers(1, 8),
       seed=st.integers(0, 10_000))
def test_odol_matches_batch(m, p, q, T, seed):
    rng = np.random.default_rng(seed)
    topo = random_topology(m, seed)
    model = random_world(p, q, m, 0.2 + rng.random(m) * 2, seed + 1)
    tr = sample_trace(model, T, seed + 2)
    sched = odol_schedule(topo, model, T)
    traj = odol_run(sched, tr)
    hops = hop_structure(topo)
    for i in topo.agents:
        for t in range(1, T + 1):
            est, cov = batch_mmse(model, oracle_information_set(hops, i, t), tr)
            assert relative_error(traj.at(i, t), est) < 1e-8
            assert np.allclose(sched.cov[i - 1, t], cov, atol=1e-10)
