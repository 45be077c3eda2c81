"""OEDOL: oracle-exact estimation on trees by exchanging p-vectors only.

Each agent broadcasts ``s_{i,t} = u_{i,t} - A_{i,t} u_{i,t-1}`` to all of
its neighbors. A receiver strips from ``s_{j,t-1}`` the part that echoes
its own earlier messages, which leaves the innovation ``w_{i,t}``:

    w_{i,t} = r_{i,t} - D_{i,t-1} s_{i,t-2} + T_{i,t-1} w_{i,t-2}

with ``r_{i,t}`` the neighbors' messages stacked in ascending neighbor id.
All matrices depend only on the tree and the model, so they are built once
by :func:`oedol_schedule` and replayed by :func:`oedol_run`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, NotATreeError
from .linalg import block_diag, clean_covariance, conditioning_gain
from .model import MeasurementTrace, WorldModel
from .topology import NetworkTopology, cycle_edge, is_tree
from .trajectory import EstimateTrajectory


@dataclass(frozen=True, eq=False)
class OedolSchedule:
    """Per-agent, per-time OEDOL matrices; lists are indexed ``[i][t]``.

    Index 0 of each per-agent list is the ``t = 0`` initialization (zeros
    for ``C``, ``D``, ``T``, ``Hbar`` and ``G``; the prior for ``cov``).
    ``C`` blocks follow the ascending neighbor order of the tree.
    ``Hbar[i][t]`` and ``G[i][t]`` describe the innovation consumed at
    ``t + 1``: ``w_{i,t+1} = Hbar x + noise`` with block-diagonal noise
    covariance ``diag(G[i][t])``.
    """
    tree: NetworkTopology
    model: WorldModel
    T: int
    A: tuple
    B: tuple
    C: tuple
    D: tuple
    Tc: tuple
    Hbar: tuple
    G: tuple
    cov: tuple

    def C_block(self, i: int, t: int, j: int) -> np.ndarray:
        """``C^{(j)}_{i,t}``, the columns of ``C_{i,t}`` acting on neighbor ``j``."""
        k = self.tree.neighbors(i).index(j)
        p = self.model.p
        return self.C[i][t][:, k * p:(k + 1) * p]


def oedol_schedule(tree: NetworkTopology, model: WorldModel, T: int) -> OedolSchedule:
    if not is_tree(tree):
        edge = cycle_edge(tree)
        raise NotATreeError(f"OEDOL needs a tree; edge {edge} closes a cycle", edge)
    if T < 1:
        raise InvalidInputError(f"horizon must be >= 1, got {T}")
    if tree.m != model.m:
        raise InvalidInputError(f"topology has {tree.m} agents, model has {model.m}")
    p, q = model.p, model.q
    agents = list(tree.agents)
    nbrs = {i: tree.neighbors(i) for i in agents}
    pos = {i: {j: k for k, j in enumerate(nbrs[i])} for i in agents}
    eye = np.eye(p)
    scale = float(np.trace(model.sigma_x))

    def zeros_for(i):
        n = len(nbrs[i])
        return np.zeros((p, p * n)), np.zeros((p * n, p)), np.zeros((p * n, p * n)), \
            np.zeros((n, p, p))

    A = {i: [eye.copy()] for i in agents}
    B = {i: [np.zeros((p, q))] for i in agents}
    C, D, Tc, Hb, G = ({i: [] for i in agents} for _ in range(5))
    cov = {i: [model.sigma_x.copy()] for i in agents}
    for i in agents:
        c0, d0, t0, g0 = zeros_for(i)
        C[i].append(c0)
        D[i].append(d0)
        Tc[i].append(t0)
        Hb[i].append(d0.copy())
        G[i].append(g0)

    def blk(mat, k):
        return mat[:, k * p:(k + 1) * p]

    for t in range(1, T + 1):
        for i in agents:
            H_i = model.H[i - 1]
            Htil = np.concatenate([H_i, Hb[i][t - 1]])
            Gtil = block_diag([model.sigma_n[i - 1], *G[i][t - 1]])
            gain = conditioning_gain(cov[i][t - 1], Htil, Gtil)
            a = eye - gain @ Htil
            A[i].append(a)
            B[i].append(gain[:, :q])
            C[i].append(gain[:, q:])
            cov[i].append(clean_covariance(a @ cov[i][t - 1], scale))
        for i in agents:
            D[i].append(np.concatenate([blk(C[j][t], pos[j][i]) for j in nbrs[i]])
                        if nbrs[i] else np.zeros((0, p)))
            Tc[i].append(block_diag([blk(C[j][t], pos[j][i]) @ blk(C[i][t - 1], pos[i][j])
                                     for j in nbrs[i]]))
        for i in agents:
            hbar_rows, g_blocks = [], []
            for j in nbrs[i]:
                b = B[j][t]
                h = b @ model.H[j - 1]
                g = b @ model.sigma_n[j - 1] @ b.T
                prev_h = Hb[j][t - 1]
                for k in nbrs[j]:
                    if k == i:
                        continue
                    c = blk(C[j][t], pos[j][k])
                    h = h + c @ prev_h[pos[j][k] * p:(pos[j][k] + 1) * p]
                    g = g + c @ G[j][t - 1][pos[j][k]] @ c.T
                hbar_rows.append(h)
                g_blocks.append(0.5 * (g + g.T))
            Hb[i].append(np.concatenate(hbar_rows) if hbar_rows else np.zeros((0, p)))
            G[i].append(np.array(g_blocks) if g_blocks else np.zeros((0, p, p)))

    def pack(d):
        return tuple([()] + [tuple(d[i]) for i in agents])

    return OedolSchedule(tree, model, T, pack(A), pack(B), pack(C), pack(D), pack(Tc),
                         pack(Hb), pack(G), pack(cov))


def oedol_run_batch(schedule: OedolSchedule, y: np.ndarray):
    """Synchronous-round simulation on traces ``y`` of shape ``(n, T, m, q)``.

    Returns ``(u, s)``: estimates ``(n, T + 1, m, p)`` and the broadcast
    messages ``(n, T, m, p)`` where ``s[:, t-1, i-1]`` is ``s_{i,t}``.
    """
    n, T = y.shape[0], y.shape[1]
    if T > schedule.T:
        raise InvalidInputError(f"schedule horizon {schedule.T} is shorter than trace horizon {T}")
    model = schedule.model
    tree = schedule.tree
    m, p = model.m, model.p
    u = np.empty((n, T + 1, m, p))
    u[:, 0] = model.xbar
    s = np.zeros((n, T, m, p))
    zero_msg = np.zeros((n, m, p))
    w_hist = {i: [np.zeros((n, p * tree.degree(i)))] * 2 for i in tree.agents}
    nbr_idx = {i: np.asarray(tree.neighbors(i), dtype=int) - 1 for i in tree.agents}
    for t in range(1, T + 1):
        s_prev1 = s[:, t - 2] if t >= 2 else zero_msg
        s_prev2 = s[:, t - 3] if t >= 3 else zero_msg
        for i in tree.agents:
            r = s_prev1[:, nbr_idx[i]].reshape(n, -1)
            w = (r - s_prev2[:, i - 1] @ schedule.D[i][t - 1].T
                 + w_hist[i][1] @ schedule.Tc[i][t - 1].T)
            msg = y[:, t - 1, i - 1] @ schedule.B[i][t].T + w @ schedule.C[i][t].T
            u[:, t, i - 1] = u[:, t - 1, i - 1] @ schedule.A[i][t].T + msg
            s[:, t - 1, i - 1] = msg
            w_hist[i] = [w, w_hist[i][0]]
    return u, s


def oedol_run(schedule: OedolSchedule, trace: MeasurementTrace):
    """Returns the trajectory and the message log ``(T, m, p)`` of one trace."""
    u, s = oedol_run_batch(schedule, trace.y[None])
    return EstimateTrajectory(u[0], "oedol", trace.trial), s[0]


MESSAGE_COLUMNS = ("trial", "sender", "t", "component", "value")


def write_message_log(messages: np.ndarray, path, trials=None) -> None:
    """Long-format CSV of broadcast messages ``s_{i,t}``.

    ``messages`` has shape ``(n, T, m, p)`` (or ``(T, m, p)`` for one
    trace); ``trials`` labels the leading axis and defaults to ``0..n-1``.
    """
    msgs = np.asarray(messages)
    if msgs.ndim == 3:
        msgs = msgs[None]
    if msgs.ndim != 4:
        raise InvalidInputError(f"expected messages of shape (n, T, m, p), got {msgs.shape}")
    labels = list(range(msgs.shape[0])) if trials is None else list(trials)
    if len(labels) != msgs.shape[0]:
        raise InvalidInputError("one trial label is needed per message block")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MESSAGE_COLUMNS)
        for n, trial in enumerate(labels):
            for t in range(msgs.shape[1]):
                for i in range(msgs.shape[2]):
                    for c in range(msgs.shape[3]):
                        w.writerow((trial, i + 1, t + 1, c + 1, repr(float(msgs[n, t, i, c]))))
