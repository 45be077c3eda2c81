"""Oracle (unrestricted-disclosure) estimation.

Two independent routes to the same numbers: :func:`batch_mmse` conditions
the prior on an arbitrary set of measurements in one shot, while ODOL
(:func:`odol_schedule` + :func:`odol_run`) reaches the estimate on the
time-stamped information set recursively, one batch of newly arrived
measurements per step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, InvalidWindowError
from .linalg import block_diag, clean_covariance, conditioning_gain
from .model import MeasurementTrace, WorldModel
from .topology import HopStructure, NetworkTopology, hop_structure
from .trajectory import EstimateTrajectory

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InformationSet:
    """Measurement indices ``(agent, time)`` available to ``owner`` at ``t``.

    Entries are kept in canonical order: hop distance from the owner, then
    agent id, then time. Construct with :func:`make_information_set` or
    :func:`oracle_information_set` so the order is guaranteed.
    """
    owner: int
    t: int
    entries: tuple
    hops: tuple = field(default=(), repr=False, compare=False)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, item):
        return tuple(item) in set(self.entries)

    def difference(self, other: "InformationSet") -> "InformationSet":
        drop = set(other.entries)
        keep = [e for e in self.entries if e not in drop]
        dist = dict(zip(self.entries, self.hops))
        return InformationSet(self.owner, self.t, tuple(keep), tuple(dist[e] for e in keep))


def make_information_set(hops: HopStructure, owner: int, t: int, entries) -> InformationSet:
    """Canonically ordered information set from arbitrary ``(agent, time)`` pairs."""
    uniq = {(int(j), int(tau)) for j, tau in entries}
    dist = hops.dist
    ordered = sorted(uniq, key=lambda e: (dist[owner, e[0]], e[0], e[1]))
    return InformationSet(owner, t, tuple(ordered), tuple(int(dist[owner, j]) for j, _ in ordered))


def oracle_information_set(hops: HopStructure, i: int, t: int,
                           window: int | None = None) -> InformationSet:
    """Everything agent ``i`` can know at ``t`` under time-stamped forwarding.

    Agent ``j`` at hop distance ``k`` contributes ``y_{j,tau}`` for
    ``tau <= t - k``. With ``window`` only ``tau > t - window`` is kept.
    """
    if t < 0:
        raise InvalidInputError(f"time must be non-negative, got {t}")
    lo = 1
    if window is not None:
        if window < hops.max_ecc:
            raise InvalidWindowError(
                f"window {window} is shorter than the largest eccentricity {hops.max_ecc}")
        lo = max(1, t - window + 1)
    entries, dists = [], []
    for k in range(hops.ecc[i] + 1):
        for j in sorted(hops.khop[i][k]):
            for tau in range(lo, t - k + 1):
                entries.append((j, tau))
                dists.append(k)
    return InformationSet(i, t, tuple(entries), tuple(dists))


def _stack(model: WorldModel, info: InformationSet):
    A = np.array([model.H[j - 1] for j, _ in info.entries]).reshape(-1, model.p)
    R = block_diag([model.sigma_n[j - 1] for j, _ in info.entries])
    return A, R


def batch_mmse(model: WorldModel, info: InformationSet, trace: MeasurementTrace):
    """``E[x | info]`` and its error covariance by direct joint conditioning.

    Solves the normal equations with LU when the innovation covariance is
    well conditioned and falls back to a pseudo-inverse (cutoff 1e-10)
    otherwise.
    """
    if not info.entries:
        return model.xbar.copy(), model.sigma_x.copy()
    if trace.y.shape[1:] != (model.m, model.q):
        raise InvalidInputError("trace does not match the model dimensions")
    for j, tau in info.entries:
        if not (1 <= j <= model.m and 1 <= tau <= trace.T):
            raise InvalidInputError(f"entry {(j, tau)} is not in the trace")
    A, R = _stack(model, info)
    y = np.concatenate([trace.y[tau - 1, j - 1] for j, tau in info.entries])
    S = A @ model.sigma_x @ A.T + R
    cross = model.sigma_x @ A.T
    if np.linalg.cond(S) < 1e10:
        gain = np.linalg.solve(S, cross.T).T
    else:
        gain = cross @ np.linalg.pinv(S, rcond=1e-10, hermitian=True)
    est = model.xbar + gain @ (y - A @ model.xbar)
    cov = model.sigma_x - gain @ A @ model.sigma_x
    return est, 0.5 * (cov + cov.T)


@dataclass(frozen=True, eq=False)
class OdolSchedule:
    """Data-independent ODOL gains and posterior covariances.

    ``order[i]`` lists all agents in canonical (hop, id) order for agent
    ``i``; the measurements new at time ``t`` are the prefix of that order
    whose hop distance is at most ``t - 1`` (each at time ``t - hop``).
    ``gains[i][t]`` is ``K_{i,t}`` and ``cov[i-1, t]`` is the posterior
    covariance, with ``cov[:, 0]`` the prior.
    """
    topo: NetworkTopology
    model: WorldModel
    T: int
    order: tuple
    order_hops: tuple
    delta_sizes: tuple
    gains: tuple
    cov: np.ndarray

    @property
    def hops(self) -> HopStructure:
        return hop_structure(self.topo)

    def delta(self, i: int, t: int) -> list[tuple[int, int]]:
        """The new measurements ``Delta_{i,t}`` in stacking order."""
        n = self.delta_sizes[i][t]
        return [(j, t - k) for j, k in zip(self.order[i][:n], self.order_hops[i][:n])]

    def permutation(self, i: int) -> np.ndarray:
        """Permutation matrix ``P_i`` taking agent order 1..m to canonical order."""
        m = self.topo.m
        P = np.zeros((m, m))
        for row, j in enumerate(self.order[i]):
            P[row, j - 1] = 1.0
        return P

    def stacked_H(self, i: int) -> np.ndarray:
        """``(P_i kron I_q) H``: observation rows in canonical order."""
        return np.concatenate([self.model.H[j - 1] for j in self.order[i]])

    def stacked_noise(self, i: int) -> np.ndarray:
        return block_diag([self.model.sigma_n[j - 1] for j in self.order[i]])


def odol_schedule(topo: NetworkTopology, model: WorldModel, T: int) -> OdolSchedule:
    if T < 1:
        raise InvalidInputError(f"horizon must be >= 1, got {T}")
    if topo.m != model.m:
        raise InvalidInputError(f"topology has {topo.m} agents, model has {model.m}")
    hops = hop_structure(topo)
    p = model.p
    scale = float(np.trace(model.sigma_x))
    order, order_hops, sizes, gains = [()], [()], [()], [()]
    cov = np.zeros((topo.m, T + 1, p, p))
    for i in topo.agents:
        pairs = sorted(((int(hops.dist[i, j]), j) for j in topo.agents))
        ks = [k for k, _ in pairs]
        agents = [j for _, j in pairs]
        Hbar = np.concatenate([model.H[j - 1] for j in agents])
        blocks = [model.sigma_n[j - 1] for j in agents]
        q = model.q
        sig = model.sigma_x.copy()
        cov[i - 1, 0] = sig
        n_t, K_t = [0], [None]
        for t in range(1, T + 1):
            n = sum(1 for k in ks if k <= t - 1)
            Hd = Hbar[:n * q]
            K = conditioning_gain(sig, Hd, block_diag(blocks[:n]))
            sig = clean_covariance((np.eye(p) - K @ Hd) @ sig, scale)
            cov[i - 1, t] = sig
            n_t.append(n)
            K_t.append(K)
        order.append(tuple(agents))
        order_hops.append(tuple(ks))
        sizes.append(tuple(n_t))
        gains.append(tuple(K_t))
    cov.setflags(write=False)
    return OdolSchedule(topo, model, T, tuple(order), tuple(order_hops), tuple(sizes),
                        tuple(gains), cov)


def odol_run_batch(schedule: OdolSchedule, y: np.ndarray) -> np.ndarray:
    """Run ODOL on a stack of traces ``y`` of shape ``(n, T, m, q)``.

    Returns estimates of shape ``(n, T + 1, m, p)``.
    """
    n, T = y.shape[0], y.shape[1]
    if T > schedule.T:
        raise InvalidInputError(f"schedule horizon {schedule.T} is shorter than trace horizon {T}")
    model = schedule.model
    p, q = model.p, model.q
    u = np.empty((n, T + 1, model.m, p))
    u[:, 0] = model.xbar
    eye = np.eye(p)
    for i in schedule.topo.agents:
        agents = np.asarray(schedule.order[i]) - 1
        ks = np.asarray(schedule.order_hops[i])
        Hbar = schedule.stacked_H(i)
        cur = np.broadcast_to(model.xbar, (n, p)).copy()
        for t in range(1, T + 1):
            size = schedule.delta_sizes[i][t]
            K = schedule.gains[i][t]
            w = y[:, t - 1 - ks[:size], agents[:size], :].reshape(n, size * q)
            cur = cur @ (eye - K @ Hbar[:size * q]).T + w @ K.T
            u[:, t, i - 1] = cur
    return u


def odol_run(schedule: OdolSchedule, trace: MeasurementTrace) -> EstimateTrajectory:
    u = odol_run_batch(schedule, trace.y[None])
    return EstimateTrajectory(u[0], "odol", trace.trial)
