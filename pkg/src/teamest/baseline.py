"""Diffusion RLS baseline.

Each round every agent runs one RLS step on its own measurement, averages
the intermediate estimates with its neighbors through a Laplacian
(incremental) rule, then mixes the result with relative-variance weights.
The inverse-correlation matrices never see the data, so the gains are
computed once and shared by every trial.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .model import MeasurementTrace, WorldModel
from .topology import NetworkTopology
from .trajectory import EstimateTrajectory


@dataclass(frozen=True, eq=False)
class CombinerMatrix:
    """Row-stochastic ``m x m`` weights supported on each closed neighborhood."""
    weights: np.ndarray

    def row(self, i: int) -> np.ndarray:
        return self.weights[i - 1]


def relative_variance_combiner(topo: NetworkTopology, noise_stds) -> CombinerMatrix:
    """``lambda_ij`` proportional to ``sigma_j^-2`` over ``N_i`` and ``i`` itself."""
    stds = np.asarray(noise_stds, dtype=float)
    if stds.shape != (topo.m,):
        raise InvalidInputError(f"expected {topo.m} noise stds, got shape {stds.shape}")
    if np.any(~np.isfinite(stds)) or np.any(stds <= 0):
        raise InvalidInputError("noise standard deviations must be positive and finite")
    prec = stds ** -2.0
    lam = np.zeros((topo.m, topo.m))
    for i in topo.agents:
        hood = [i - 1] + [j - 1 for j in topo.neighbors(i)]
        lam[i - 1, hood] = prec[hood] / prec[hood].sum()
    lam.setflags(write=False)
    return CombinerMatrix(lam)


def laplacian_matrix(topo: NetworkTopology) -> np.ndarray:
    """Incremental step ``psi_i + (1/d_max) sum_j (psi_j - psi_i)`` as a matrix."""
    m = topo.m
    dmax = max((topo.degree(i) for i in topo.agents), default=0)
    W = np.eye(m)
    if dmax == 0:
        return W
    for i in topo.agents:
        for j in topo.neighbors(i):
            W[i - 1, j - 1] = 1.0 / dmax
        W[i - 1, i - 1] = 1.0 - topo.degree(i) / dmax
    return W


def _rls_gains(model: WorldModel, T: int, forgetting: float, ridge: float):
    """Per-agent RLS gains ``k[t-1, i-1]`` of shape ``(T, m, p, q)``."""
    p, q, m = model.p, model.q, model.m
    gains = np.zeros((T, m, p, q))
    P = np.broadcast_to(np.eye(p) / ridge, (m, p, p)).copy()
    for t in range(T):
        for i in range(m):
            H = model.H[i]
            S = forgetting * np.eye(q) + H @ P[i] @ H.T
            k = np.linalg.solve(S, H @ P[i]).T
            gains[t, i] = k
            Pn = (P[i] - k @ H @ P[i]) / forgetting
            P[i] = 0.5 * (Pn + Pn.T)
    return gains


def drls_run_batch(topo: NetworkTopology, model: WorldModel, combiner: CombinerMatrix,
                   y: np.ndarray, forgetting: float = 1.0, ridge: float = 1e-3) -> np.ndarray:
    """D-RLS on traces ``y`` of shape ``(n, T, m, q)``; returns ``(n, T+1, m, p)``."""
    if not 0.0 < forgetting <= 1.0:
        raise InvalidInputError(f"forgetting factor must lie in (0, 1], got {forgetting}")
    if not ridge > 0:
        raise InvalidInputError(f"ridge must be positive, got {ridge}")
    if topo.m != model.m:
        raise InvalidInputError(f"topology has {topo.m} agents, model has {model.m}")
    n, T, m, q = y.shape
    if (m, q) != (model.m, model.q):
        raise InvalidInputError("traces do not match the model dimensions")
    gains = _rls_gains(model, T, forgetting, ridge)
    lap = laplacian_matrix(topo)
    lam = combiner.weights
    H = model.H
    u = np.empty((n, T + 1, m, model.p))
    u[:, 0] = model.xbar
    for t in range(1, T + 1):
        prev = u[:, t - 1]
        resid = y[:, t - 1] - np.einsum("iqp,nip->niq", H, prev)
        psi = prev + np.einsum("ipq,niq->nip", gains[t - 1], resid)
        phi = np.einsum("ij,njp->nip", lap, psi)
        u[:, t] = np.einsum("ij,njp->nip", lam, phi)
    return u


def drls_run(topo: NetworkTopology, model: WorldModel, combiner: CombinerMatrix,
             trace: MeasurementTrace, forgetting: float = 1.0,
             ridge: float = 1e-3) -> EstimateTrajectory:
    u = drls_run_batch(topo, model, combiner, trace.y[None], forgetting, ridge)
    return EstimateTrajectory(u[0], "drls", trace.trial)
