"""SDOL-T_o: windowed estimation with time-invariant combination weights.

Agent ``i`` targets ``E[x | measurements younger than T_o]`` under
time-stamped forwarding. With ages ``a = t - tau``, agent ``j`` at hop
``k`` contributes ages ``k .. T_o - 1``. Each step

    u_{i,t} = A_i u_{i,t-1} + B_i y_{i,t} + C_i r_{i,t} - D_i y_{t-T_o}

adds the newly arrived measurements ``r_{i,t}`` (one per agent within
reach, ages ``k``) and removes the oldest slice through the memory element
``M y_{t-T_o}``. Before ``t = T_o`` the same update runs on zero-filled
history, so the estimate is exact only from ``t = T_o`` on.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import BuildFailureError, InvalidInputError, InvalidWindowError, UnsupportedPriorError
from .linalg import block_diag, conditioning_gain, symmetrize
from .model import MeasurementTrace, WorldModel
from .topology import NetworkTopology, hop_structure
from .trajectory import EstimateTrajectory

MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class AgentWeights:
    """Time-invariant SDOL matrices of one agent.

    ``extracted`` lists the ``(agent, age)`` pairs behind ``Hhat`` (what is
    left of the previous window once its oldest slice is dropped) and
    ``received`` the ``(agent, hop)`` pairs behind ``r_{i,t}``.
    """
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    N: np.ndarray
    L: np.ndarray
    K: np.ndarray
    M: np.ndarray
    sigma_xi: np.ndarray
    Hhat: np.ndarray
    sigma_hat_n: np.ndarray
    Hbar: np.ndarray
    sigma_bar_n: np.ndarray
    extracted: tuple
    received: tuple
    condition: float

    def steady_covariance(self) -> np.ndarray:
        """Error covariance for ``t >= T_o``: ``A_i L_i Sigma_{x,i}``."""
        return symmetrize(self.A @ self.L @ self.sigma_xi)


@dataclass(frozen=True, eq=False)
class SdolWeights:
    topo: NetworkTopology
    model: WorldModel
    window: int
    M: np.ndarray
    agents: tuple    # agents[i] is AgentWeights, index 0 unused

    def __getitem__(self, i: int) -> AgentWeights:
        return self.agents[i]


def sdol_weights(topo: NetworkTopology, model: WorldModel, window: int) -> SdolWeights:
    """Build the SDOL-``window`` weights.

    Raises :class:`UnsupportedPriorError` for a nonzero prior mean,
    :class:`InvalidWindowError` when ``window`` is below the largest
    eccentricity and :class:`BuildFailureError` when some ``L_i`` has
    condition number above ``MAX_CONDITION``.
    """
    if np.any(model.xbar != 0):
        raise UnsupportedPriorError("SDOL requires a zero prior mean")
    if topo.m != model.m:
        raise InvalidInputError(f"topology has {topo.m} agents, model has {model.m}")
    hops = hop_structure(topo)
    if window < max(1, hops.max_ecc):
        raise InvalidWindowError(
            f"window {window} is shorter than the largest eccentricity {hops.max_ecc}")
    p, q, m = model.p, model.q, model.m
    sx = model.sigma_x
    eye = np.eye(p)
    M = conditioning_gain(sx, model.stacked_H(), model.stacked_noise())

    agents = [None]
    for i in topo.agents:
        ordered = sorted(topo.agents, key=lambda j: (hops.dist[i, j], j))
        hop = {j: int(hops.dist[i, j]) for j in ordered}
        extracted = tuple((j, a) for a in range(1, window) for j in ordered
                          if hop[j] + 1 <= a)
        received = tuple((j, hop[j]) for j in ordered if 1 <= hop[j] <= window - 1)
        leaving = [j for j in ordered if hop[j] <= window - 1]

        def stack(pairs):
            return (np.concatenate([model.H[j - 1] for j, _ in pairs]) if pairs
                    else np.zeros((0, p)),
                    block_diag([model.sigma_n[j - 1] for j, _ in pairs]))

        Hhat, Rhat = stack(extracted)
        Hbar, Rbar = stack(((i, 0),) + received)

        leave_idx = [j - 1 for j in leaving]
        H_leave = np.concatenate([model.H[j] for j in leave_idx])
        R_leave = block_diag([model.sigma_n[j] for j in leave_idx])
        M_leave = conditioning_gain(sx, H_leave, R_leave)
        if len(leave_idx) == m:
            M_i = M
        else:
            M_i = np.zeros((p, m * q))
            for n_, j in enumerate(leave_idx):
                M_i[:, j * q:(j + 1) * q] = M_leave[:, n_ * q:(n_ + 1) * q]
        sig_hat = symmetrize((eye - M_leave @ H_leave) @ sx)

        if extracted:
            N = conditioning_gain(sx, Hhat, Rhat)
            NH = N @ Hhat
            L = conditioning_gain(sig_hat, NH, N @ Rhat @ N.T)
            sigma_xi = symmetrize((eye - NH) @ sx)
        else:
            N = np.zeros((p, 0))
            NH = np.zeros((p, p))
            L = eye.copy()
            sigma_xi = sx.copy()
        K = eye - L @ NH
        cond = float(np.linalg.cond(L))
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise BuildFailureError(
                f"L_{i} is numerically singular (condition number {cond:.3e}); "
                f"window {window} holds too few measurements to pin down the state")
        gain = conditioning_gain(sigma_xi, Hbar, Rbar)
        A = np.linalg.solve(L.T, (eye - gain @ Hbar).T).T
        D = A @ K @ M_i
        agents.append(AgentWeights(A, gain[:, :q], gain[:, q:], D, N, L, K, M_i, sigma_xi,
                                   Hhat, Rhat, Hbar, Rbar, extracted, received, cond))
    return SdolWeights(topo, model, window, M, tuple(agents))


class SdolMemory:
    """Ring buffer of the last ``window`` network-wide measurement stacks.

    Slots for times before 1 hold zeros (warm start).
    """

    def __init__(self, window: int, shape):
        self.window = window
        self._buf = deque([np.zeros(shape) for _ in range(window)], maxlen=window)

    def __len__(self):
        return len(self._buf)

    @property
    def oldest(self) -> np.ndarray:
        """``y_{t - window}`` while step ``t`` is being processed."""
        return self._buf[0]

    def push(self, y_t: np.ndarray) -> np.ndarray:
        """Store ``y_t`` and return the evicted oldest stack."""
        evicted = self._buf[0]
        self._buf.append(y_t)
        return evicted


def sdol_run_batch(weights: SdolWeights, y: np.ndarray) -> np.ndarray:
    """Run SDOL on traces ``y`` of shape ``(n, T, m, q)``; returns ``(n, T+1, m, p)``."""
    model = weights.model
    n, T, m, q = y.shape
    if (m, q) != (model.m, model.q):
        raise InvalidInputError("traces do not match the model dimensions")
    p = model.p
    u = np.zeros((n, T + 1, m, p))
    flat = y.reshape(n, T, m * q)
    memories = {i: SdolMemory(weights.window, (n, m * q)) for i in weights.topo.agents}
    plan = {}
    for i in weights.topo.agents:
        w = weights[i]
        plan[i] = (np.array([j - 1 for j, _ in w.received], dtype=int),
                   np.array([k for _, k in w.received], dtype=int))
    for t in range(1, T + 1):
        for i in weights.topo.agents:
            w = weights[i]
            idx, ks = plan[i]
            taus = t - ks
            r = np.zeros((n, len(idx), q))
            live = taus >= 1
            r[:, live] = y[:, taus[live] - 1, idx[live]]
            old = memories[i].oldest
            u[:, t, i - 1] = (u[:, t - 1, i - 1] @ w.A.T + y[:, t - 1, i - 1] @ w.B.T
                              + r.reshape(n, -1) @ w.C.T - old @ w.D.T)
            memories[i].push(flat[:, t - 1])
    return u


def sdol_run(weights: SdolWeights, trace: MeasurementTrace) -> EstimateTrajectory:
    u = sdol_run_batch(weights, trace.y[None])
    return EstimateTrajectory(u[0], f"sdol-{weights.window}", trace.trial)
