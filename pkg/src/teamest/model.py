"""Linear-Gaussian world model and reproducible measurement traces.

Every agent ``i`` observes ``y[i,t] = H[i] x + n[i,t]`` of one static state
``x ~ N(xbar, sigma_x)``. Arrays are 0-based internally: ``H[i-1]`` belongs
to agent ``i`` and ``trace.y[t-1, i-1]`` is its measurement at time ``t``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import InitVar, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, InvalidScaleError
from .linalg import psd_sqrt

# spawn-key namespace for the per-trial streams: (trial, STATE_STREAM) draws x,
# (trial, i) for i >= 1 draws agent i's noise sequence
STATE_STREAM = 0


def _is_psd(a: np.ndarray, strict: bool) -> bool:
    if not np.allclose(a, a.T, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        return False
    vals = np.linalg.eigvalsh(0.5 * (a + a.T))
    tol = 1e-12 * max(1.0, np.abs(vals).max(initial=0.0))
    return bool(vals.min() > tol) if strict else bool(vals.min() >= -tol)


@dataclass(frozen=True, eq=False)
class WorldModel:
    """Prior ``N(xbar, sigma_x)`` plus per-agent observation models.

    ``H`` has shape ``(m, q, p)`` and ``sigma_n`` shape ``(m, q, q)``.
    Pass ``check=False`` to allow a singular (e.g. zero) noise covariance,
    which is only meant for noiseless test configurations.
    """
    xbar: np.ndarray
    sigma_x: np.ndarray
    H: np.ndarray
    sigma_n: np.ndarray
    check: InitVar[bool] = True

    def __post_init__(self, check):
        xbar = np.atleast_1d(np.asarray(self.xbar, dtype=float))
        sigma_x = np.atleast_2d(np.asarray(self.sigma_x, dtype=float))
        H = np.asarray(self.H, dtype=float)
        sigma_n = np.asarray(self.sigma_n, dtype=float)
        if H.ndim != 3 or sigma_n.ndim != 3:
            raise InvalidInputError("H must be (m, q, p) and sigma_n (m, q, q)")
        m, q, p = H.shape
        if xbar.shape != (p,) or sigma_x.shape != (p, p):
            raise InvalidInputError(
                f"prior shapes {xbar.shape}, {sigma_x.shape} do not match p={p}")
        if sigma_n.shape != (m, q, q):
            raise InvalidInputError(f"sigma_n has shape {sigma_n.shape}, expected {(m, q, q)}")
        if not _is_psd(sigma_x, strict=False):
            raise InvalidInputError("sigma_x must be symmetric positive semidefinite")
        for i in range(m):
            if not _is_psd(sigma_n[i], strict=check):
                raise InvalidInputError(
                    f"noise covariance of agent {i + 1} must be symmetric positive definite")
        for name, arr in (("xbar", xbar), ("sigma_x", sigma_x), ("H", H), ("sigma_n", sigma_n)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def q(self) -> int:
        return self.H.shape[1]

    @property
    def p(self) -> int:
        return self.H.shape[2]

    def H_of(self, i: int) -> np.ndarray:
        return self.H[i - 1]

    def noise_of(self, i: int) -> np.ndarray:
        return self.sigma_n[i - 1]

    def stacked_H(self) -> np.ndarray:
        """``col{H_1, ..., H_m}``, shape ``(q m, p)``."""
        return self.H.reshape(self.m * self.q, self.p)

    def stacked_noise(self) -> np.ndarray:
        """``diag{Sigma_n1, ..., Sigma_nm}``."""
        m, q = self.m, self.q
        out = np.zeros((m * q, m * q))
        for i in range(m):
            out[i * q:(i + 1) * q, i * q:(i + 1) * q] = self.sigma_n[i]
        return out

    def noise_stds(self) -> np.ndarray:
        """Per-agent noise standard deviation (sqrt of the mean noise variance)."""
        return np.sqrt(np.trace(self.sigma_n, axis1=1, axis2=2) / self.q)

    def to_dict(self) -> dict:
        return {"p": self.p, "q": self.q, "m": self.m,
                "xbar": self.xbar.tolist(), "sigma_x": self.sigma_x.tolist(),
                "H": self.H.tolist(), "sigma_n": self.sigma_n.tolist()}

    @classmethod
    def from_dict(cls, d: dict, check: bool = True) -> "WorldModel":
        return cls(np.array(d["xbar"], float), np.array(d["sigma_x"], float),
                   np.array(d["H"], float), np.array(d["sigma_n"], float), check=check)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.xbar, self.sigma_x, self.H, self.sigma_n):
            h.update(np.ascontiguousarray(arr).tobytes())
            h.update(str(arr.shape).encode())
        return h.hexdigest()[:16]


def scalar_model(m: int = 1, sigma_x2: float = 1.0, sigma_n2: float = 1.0) -> WorldModel:
    """The canonical p = q = 1 model with unit gains."""
    return WorldModel(np.zeros(1), np.array([[sigma_x2]]), np.ones((m, 1, 1)),
                      np.full((m, 1, 1), sigma_n2))


def folded_normal_stds(m: int, scale: float = 1.0, seed: int = 0) -> np.ndarray:
    """Per-agent noise standard deviations ``|z_i| * scale`` with ``z_i ~ N(0, 1)``."""
    if m < 1:
        raise InvalidInputError(f"need m >= 1, got {m}")
    if not scale > 0:
        raise InvalidScaleError(f"noise scale must be positive, got {scale}")
    rng = np.random.default_rng(seed)
    z = np.abs(rng.standard_normal(m))
    while np.any(z == 0.0):
        zero = z == 0.0
        z[zero] = np.abs(rng.standard_normal(int(zero.sum())))
    return z * scale


def random_world(p: int, q: int, m: int, noise_stds, seed: int) -> WorldModel:
    """Zero-mean, identity-covariance prior with standard-normal ``H_i``."""
    if min(p, q, m) < 1:
        raise InvalidInputError("dimensions must be positive")
    stds = np.asarray(noise_stds, dtype=float)
    if stds.shape != (m,):
        raise InvalidInputError(f"expected {m} noise stds, got shape {stds.shape}")
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((m, q, p))
    sigma_n = (stds ** 2)[:, None, None] * np.eye(q)[None]
    return WorldModel(np.zeros(p), np.eye(p), H, sigma_n)


@dataclass(frozen=True, eq=False)
class MeasurementTrace:
    """One state draw and the measurements of every agent for ``t = 1..T``."""
    x: np.ndarray            # (p,)
    y: np.ndarray            # (T, m, q); y[t-1, i-1] is y_{i,t}
    seed: int
    trial: int = 0
    noise: np.ndarray | None = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return self.y.shape[0]

    def y_of(self, i: int, t: int) -> np.ndarray:
        return self.y[t - 1, i - 1]

    def to_dict(self) -> dict:
        return {"T": self.T, "seed": self.seed, "trial": self.trial,
                "x": self.x.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementTrace":
        y = np.array(d["y"], float)
        if y.shape[0] != d["T"]:
            raise InvalidInputError("trace horizon does not match its measurements")
        return cls(np.array(d["x"], float), y, int(d["seed"]), int(d.get("trial", 0)))


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def sample_traces(model: WorldModel, T: int, seed: int, trials, with_noise: bool = False):
    """Sample states and measurements for several trials at once.

    Returns ``x`` of shape ``(n, p)`` and ``y`` of shape ``(n, T, m, q)``,
    plus the noise array of the same shape as ``y`` when ``with_noise``.
    Trial ``k`` uses substreams keyed by ``(k, agent)``, and each agent's
    noise sequence is drawn in time order, so a trial does not depend on
    which other trials are sampled with it and a horizon-T trace is a prefix
    of any longer one.
    """
    if T < 1:
        raise InvalidInputError(f"horizon must be >= 1, got {T}")
    trials = list(trials)
    n, m, q, p = len(trials), model.m, model.q, model.p
    root_x = psd_sqrt(model.sigma_x)
    roots_n = [psd_sqrt(model.sigma_n[i]) for i in range(m)]
    x = np.empty((n, p))
    y = np.empty((n, T, m, q))
    noise = np.empty((n, T, m, q))
    for row, k in enumerate(trials):
        x[row] = model.xbar + root_x @ _stream(seed, k, STATE_STREAM).standard_normal(p)
        for i in range(m):
            z = _stream(seed, k, i + 1).standard_normal((T, q))
            noise[row, :, i] = z @ roots_n[i].T
            y[row, :, i] = model.H[i] @ x[row] + noise[row, :, i]
    if with_noise:
        return x, y, noise
    return x, y


def sample_trace(model: WorldModel, T: int, seed: int, trial: int = 0) -> MeasurementTrace:
    x, y, noise = sample_traces(model, T, seed, [trial], with_noise=True)
    return MeasurementTrace(x[0], y[0], seed, trial, noise[0])


def save_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj.to_dict(), indent=1, sort_keys=True) + "\n")
