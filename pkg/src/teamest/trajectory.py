"""Estimate trajectories and their CSV export."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TRAJECTORY_COLUMNS = ("algorithm", "trial", "agent", "t", "component", "value")
MESSAGE_COLUMNS = ("trial", "sender", "t", "component", "value")


@dataclass(frozen=True, eq=False)
class EstimateTrajectory:
    """Estimates ``u[t, i-1]`` for ``t = 0..T``; row 0 is the prior mean."""
    u: np.ndarray        # (T + 1, m, p)
    algorithm: str
    trial: int = 0

    @property
    def T(self) -> int:
        return self.u.shape[0] - 1

    def at(self, i: int, t: int) -> np.ndarray:
        return self.u[t, i - 1]

    def squared_errors(self, x: np.ndarray) -> np.ndarray:
        """``||x - u_{i,t}||^2`` as an array of shape ``(T, m)`` for t >= 1."""
        d = self.u[1:] - x
        return np.einsum("tip,tip->ti", d, d)


def _rows(u: np.ndarray, lead: tuple):
    T1, m, p = u.shape
    for t in range(T1):
        for i in range(m):
            for c in range(p):
                yield (*lead, i + 1, t, c, repr(float(u[t, i, c])))


def write_trajectories(trajs, path) -> None:
    """Long-format CSV, one row per (trial, agent, t, component)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for tr in trajs:
            w.writerows(_rows(tr.u, (tr.algorithm, tr.trial)))


def write_message_log(messages: np.ndarray, path, trial: int = 0) -> None:
    """Message log CSV; ``messages[t-1, i-1]`` is what agent ``i`` sent at ``t``."""
    T, m, p = messages.shape
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MESSAGE_COLUMNS)
        for t in range(T):
            for i in range(m):
                for c in range(p):
                    w.writerow((trial, i + 1, t + 1, c, repr(float(messages[t, i, c]))))
