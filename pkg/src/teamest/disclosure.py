"""Can local-estimate exchange reproduce the oracle estimate?

Every oracle estimate is an affine function of raw measurements. Under
local-estimate disclosure agent ``i`` at time ``t`` knows its own raw
measurements and the neighbors' earlier estimates; the oracle estimate is
achievable exactly when its coefficient rows lie in the row space spanned
by those functionals (for jointly Gaussian data linear combinations are
exhaustive). :func:`span_sufficiency` answers this by least squares.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import block_diag, conditioning_gain
from .model import MeasurementTrace, WorldModel
from .oracle import InformationSet, oracle_information_set
from .topology import HopStructure, NetworkTopology, hop_structure

# achievable iff residual <= SPAN_RTOL * ||oracle coefficients||
SPAN_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class CoefficientMap:
    """``E[x | info] = constant + sum_(j,tau) coeffs[(j,tau)] @ y_{j,tau}``."""
    constant: np.ndarray
    coeffs: dict
    owner: tuple

    def evaluate(self, trace: MeasurementTrace) -> np.ndarray:
        out = self.constant.copy()
        for (j, tau), c in self.coeffs.items():
            out = out + c @ trace.y[tau - 1, j - 1]
        return out

    def matrix(self, index: dict, width: int, q: int) -> np.ndarray:
        """``[constant | coefficient blocks]`` laid out on a global column index.

        ``index`` maps ``(j, tau)`` to a column offset; column 0 is the
        constant term and ``width`` is the total column count.
        """
        out = np.zeros((self.constant.shape[0], width))
        out[:, 0] = self.constant
        for key, c in self.coeffs.items():
            col = index[key]
            out[:, col:col + q] = c
        return out


def coefficient_map(model: WorldModel, info: InformationSet) -> CoefficientMap:
    owner = (info.owner, info.t)
    if not info.entries:
        return CoefficientMap(model.xbar.copy(), {}, owner)
    A = np.concatenate([model.H[j - 1] for j, _ in info.entries])
    R = block_diag([model.sigma_n[j - 1] for j, _ in info.entries])
    gain = conditioning_gain(model.sigma_x, A, R)
    q = model.q
    coeffs = {e: gain[:, k * q:(k + 1) * q] for k, e in enumerate(info.entries)}
    return CoefficientMap(model.xbar - gain @ A @ model.xbar, coeffs, owner)


@dataclass(frozen=True)
class SpanReport:
    owner: tuple
    achievable: bool
    residual: float
    oracle_norm: float
    witness: tuple = field(default=())

    @property
    def relative_residual(self) -> float:
        return self.residual / self.oracle_norm if self.oracle_norm > 0 else 0.0

    def to_dict(self) -> dict:
        return {"agent": self.owner[0], "t": self.owner[1], "achievable": self.achievable,
                "residual": self.residual, "relative_residual": self.relative_residual,
                "witness": [list(w) for w in self.witness]}


class _OracleMaps:
    """Memoized oracle coefficient maps for one (topology, model) pair."""

    def __init__(self, model: WorldModel, hops: HopStructure):
        self.model = model
        self.hops = hops
        self._maps: dict = {}

    def get(self, j: int, tau: int) -> CoefficientMap:
        key = (j, tau)
        if key not in self._maps:
            self._maps[key] = coefficient_map(
                self.model, oracle_information_set(self.hops, j, tau))
        return self._maps[key]


def span_sufficiency(topo: NetworkTopology, model: WorldModel, i: int, t: int,
                     cache: _OracleMaps | None = None) -> SpanReport:
    """Least-squares test of whether ``u^o_{i,t}`` is spanned by local-estimate data.

    Available functionals: the constant 1, agent ``i``'s raw measurements
    ``y_{i,tau}`` for ``tau <= t``, and each neighbor's oracle estimate
    ``u^o_{j,tau}`` for ``tau <= t - 1``.
    """
    if cache is None:
        cache = _OracleMaps(model, hop_structure(topo))
    q = model.q
    keys = [(j, tau) for tau in range(1, t + 1) for j in topo.agents]
    index = {k: 1 + n * q for n, k in enumerate(keys)}
    width = 1 + len(keys) * q

    target = cache.get(i, t).matrix(index, width, q)
    rows = [np.eye(1, width)]
    for tau in range(1, t + 1):
        col = index[(i, tau)]
        sel = np.zeros((q, width))
        sel[:, col:col + q] = np.eye(q)
        rows.append(sel)
    for j in topo.neighbors(i):
        for tau in range(1, t):
            rows.append(cache.get(j, tau).matrix(index, width, q))
    F = np.concatenate(rows)

    Z, *_ = np.linalg.lstsq(F.T, target.T, rcond=None)
    diff = (F.T @ Z - target.T).T
    residual = float(np.linalg.norm(diff))
    norm = float(np.linalg.norm(target))
    achievable = residual <= SPAN_RTOL * norm
    witness = ()
    if not achievable:
        col_norms = {k: np.linalg.norm(diff[:, index[k]:index[k] + q]) for k in keys}
        witness = tuple(k for k in keys if col_norms[k] > SPAN_RTOL * norm)
    return SpanReport((i, t), achievable, residual, norm, witness)


def span_table(topo: NetworkTopology, model: WorldModel, T: int) -> list[SpanReport]:
    """:func:`span_sufficiency` for every agent and every ``t <= T``."""
    cache = _OracleMaps(model, hop_structure(topo))
    return [span_sufficiency(topo, model, i, t, cache)
            for t in range(1, T + 1) for i in topo.agents]
