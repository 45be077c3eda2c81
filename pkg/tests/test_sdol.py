import numpy as np
import pytest
import sympy as sp

from teamest.errors import BuildFailureError, InvalidWindowError, UnsupportedPriorError
from teamest.linalg import relative_error
from teamest.model import (MeasurementTrace, WorldModel, random_world, sample_trace,
                           sample_traces, scalar_model)
from teamest.oracle import batch_mmse, odol_run, odol_schedule, oracle_information_set
from teamest.sdol import SdolMemory, sdol_run, sdol_run_batch, sdol_weights
from teamest.topology import hop_structure, make_topology, random_topology


def test_memory_element_two_scalar_agents():
    # exact conditioning of x on two unit-gain, unit-noise measurements
    S = sp.Matrix([[2, 1], [1, 2]])
    exact = sp.Matrix([[1, 1]]) * S.inv()
    assert list(exact) == [sp.Rational(1, 3), sp.Rational(1, 3)]
    w = sdol_weights(make_topology("line", 2), scalar_model(2), 2)
    assert np.allclose(w.M, np.array([[1 / 3, 1 / 3]]), rtol=1e-12, atol=0)


def test_large_noise_drives_memory_to_zero():
    w = sdol_weights(make_topology("line", 3), scalar_model(3, 1.0, 1e6), 3)
    assert np.abs(w.M).max() < 1e-5
    for i in (1, 2, 3):
        assert np.abs(w[i].D).max() < 1e-5


def test_window_below_eccentricity_rejected():
    with pytest.raises(InvalidWindowError):
        sdol_weights(make_topology("line", 5), scalar_model(5), 3)


def test_nonzero_prior_rejected():
    model = WorldModel(np.ones(1), np.eye(1), np.ones((3, 1, 1)), np.ones((3, 1, 1)))
    with pytest.raises(UnsupportedPriorError):
        sdol_weights(make_topology("line", 3), model, 3)


def test_noiseless_model_is_a_build_failure():
    # with exact measurements the window-reduction step has a singular L
    model = WorldModel(np.zeros(2), np.eye(2), np.array([np.eye(2)] * 3), np.zeros((3, 2, 2)),
                       check=False)
    with pytest.raises(BuildFailureError):
        sdol_weights(make_topology("line", 3), model, 3)


def test_rank_deficient_window_is_a_build_failure():
    model = random_world(2, 1, 5, np.ones(5), 0)
    with pytest.raises(BuildFailureError):
        sdol_weights(make_topology("star", 5), model, 2)


def test_weights_are_time_invariant_and_memory_has_window_slots():
    model = random_world(2, 1, 4, [1, 2, 1, 0.5], 1)
    w = sdol_weights(make_topology("line", 4), model, 4)
    trace = sample_trace(model, 9, 0)
    u = sdol_run_batch(w, trace.y[None])
    assert u.shape == (1, 10, 4, 2)
    # past the window the estimate is a fixed linear map of the last window slices
    shifted = sdol_run_batch(w, trace.y[None, 1:])
    assert np.allclose(u[0, 9], shifted[0, 8], rtol=0, atol=1e-10)
    mem = SdolMemory(4, (1, 4))
    assert len(mem) == 4 and np.all(mem.oldest == 0)
    for t in range(6):
        mem.push(np.full((1, 4), float(t)))
        assert len(mem) == 4
    assert np.all(mem.oldest == 2.0)


def _case(seed):
    topo = random_topology(6, seed)
    model = random_world(3, 1, 6, 0.3 + np.random.default_rng(seed).random(6), seed + 1)
    window = hop_structure(topo).max_ecc + 2
    return topo, model, window


@pytest.mark.parametrize("seed", range(4))
def test_windowed_equivalence_from_window_on(seed):
    topo, model, window = _case(seed)
    T = window + 5
    tr = sample_trace(model, T, seed)
    traj = sdol_run(sdol_weights(topo, model, window), tr)
    hops = hop_structure(topo)
    for i in topo.agents:
        for t in range(window, T + 1):
            est, _ = batch_mmse(model, oracle_information_set(hops, i, t, window=window), tr)
            assert relative_error(traj.at(i, t), est) < 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_warm_start_is_zero_filled_oracle(seed):
    topo, model, window = _case(seed)
    tr = sample_trace(model, window, seed)
    traj = sdol_run(sdol_weights(topo, model, window), tr)
    # prepend window zero slices and condition on the window ending at t + window
    padded = MeasurementTrace(tr.x, np.concatenate([np.zeros_like(tr.y), tr.y]), tr.seed)
    hops = hop_structure(topo)
    for i in topo.agents:
        for t in range(1, window):
            info = oracle_information_set(hops, i, t + window, window=window)
            est, _ = batch_mmse(model, info, padded)
            assert relative_error(traj.at(i, t), est) < 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_equals_odol_at_window(seed):
    topo, model, window = _case(seed)
    tr = sample_trace(model, window, seed)
    a = sdol_run(sdol_weights(topo, model, window), tr)
    b = odol_run(odol_schedule(topo, model, window), tr)
    for i in topo.agents:
        assert relative_error(a.at(i, window), b.at(i, window)) < 1e-6


def test_steady_covariance_matches_windowed_batch():
    topo, model, window = _case(7)
    w = sdol_weights(topo, model, window)
    hops = hop_structure(topo)
    tr = sample_trace(model, window + 1, 0)
    for i in topo.agents:
        _, cov = batch_mmse(model, oracle_information_set(hops, i, window + 1, window=window), tr)
        assert np.abs(w[i].steady_covariance() - cov).max() < 1e-8


@pytest.mark.slow
def test_steady_covariance_matches_monte_carlo():
    topo, model, window = _case(2)
    w = sdol_weights(topo, model, window)
    n, T = 400, window + 3
    x, y = sample_traces(model, T, 17, range(n))
    u = sdol_run_batch(w, y)
    err = np.sum((u[:, window:] - x[:, None, None, :]) ** 2, axis=-1)   # (n, T-window+1, m)
    mean, se = err.mean(axis=0), err.std(axis=0, ddof=1) / np.sqrt(n)
    for i in topo.agents:
        target = np.trace(w[i].steady_covariance())
        assert np.all(np.abs(mean[:, i - 1] - target) < 3.5 * se[:, i - 1])
