"""Monte Carlo cost evaluation: J(T), P(T) and per-agent MSE curves.

A configuration names one or more topologies, a random world model and a
list of algorithms. Every trial draws one trace that feeds every
(algorithm, topology) curve, so comparisons between curves are paired.
Oracle-type strategies are nested in the horizon, so one length-T run
gives ``J(T')`` and ``P(T')`` for every ``T' <= T``.
"""
from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baseline import CombinerMatrix, drls_run_batch, relative_variance_combiner
from .errors import BuildFailureError, ConfigError, InvalidComparisonError, InvalidInputError
from .model import WorldModel, folded_normal_stds, random_world, sample_traces, scalar_model
from .oedol import OedolSchedule, oedol_run_batch, oedol_schedule
from .oracle import OdolSchedule, odol_run_batch, odol_schedule
from .sdol import SdolWeights, sdol_run_batch, sdol_weights
from .topology import NetworkTopology, make_topology, spanning_tree

logger = logging.getLogger(__name__)

ALGORITHMS = ("odol", "oedol", "sdol", "drls")
TOPOLOGY_KINDS = ("fully_connected", "star", "line", "cycle", "random")
# trials per work unit; fixed so that results never depend on the thread count
CHUNK = 10
SIGNIFICANCE = 3.0
TIE_RTOL = 1e-6


@dataclass(frozen=True)
class TopologySpec:
    kind: str
    m: int
    seed: int | None = None
    edges: tuple = ()
    label: str = ""

    @property
    def name(self) -> str:
        return self.label or self.kind

    def build(self, fallback_seed: int) -> NetworkTopology:
        if self.kind == "custom":
            return NetworkTopology.from_edges(self.m, self.edges)
        seed = None
        if self.kind == "random":
            seed = fallback_seed if self.seed is None else self.seed
        return make_topology(self.kind, self.m, seed)


@dataclass(frozen=True)
class ModelSpec:
    """``kind='random'`` draws H and noise stds; ``kind='scalar'`` is the unit-gain model."""
    p: int = 1
    q: int = 1
    noise_scale: float = 1.0
    kind: str = "random"
    sigma_x2: float = 1.0
    sigma_n2: float = 1.0

    def build(self, m: int, stds_seed: int, world_seed: int) -> WorldModel:
        if self.kind == "scalar":
            return scalar_model(m, self.sigma_x2, self.sigma_n2)
        stds = folded_normal_stds(m, self.noise_scale, stds_seed)
        return random_world(self.p, self.q, m, stds, world_seed)


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    params: tuple = ()      # sorted (key, value) pairs
    label: str = ""

    @property
    def tag(self) -> str:
        if self.label:
            return self.label
        if self.name == "sdol":
            return f"sdol-{self.param('window')}"
        if self.name == "oedol" and self.param("graph") == "spanning_tree":
            return "oedol-st"
        return self.name

    def param(self, key, default=None):
        return dict(self.params).get(key, default)


@dataclass(frozen=True)
class ExperimentConfig:
    topologies: tuple
    model: ModelSpec
    algorithms: tuple
    horizon: int
    trials: int
    seed: int = 0
    name: str = "experiment"
    notes: tuple = ()

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError(f"trial count must be >= 1, got {self.trials}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if not self.topologies:
            raise ConfigError("at least one topology is required")
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        ms = {t.m for t in self.topologies}
        if len(ms) != 1:
            raise ConfigError(f"all topologies must have the same agent count, got {sorted(ms)}")
        names = [t.name for t in self.topologies]
        if len(set(names)) != len(names):
            raise ConfigError(f"topology labels must be unique, got {names}")
        tags = [a.tag for a in self.algorithms]
        if len(set(tags)) != len(tags):
            raise ConfigError(f"algorithm labels must be unique, got {tags}")

    @property
    def m(self) -> int:
        return self.topologies[0].m

    def seeds(self) -> dict:
        """Sub-seeds for the random topology, noise profile, world and traces."""
        s = np.random.SeedSequence(self.seed).generate_state(4)
        return dict(zip(("topology", "stds", "world", "traces"), (int(v) for v in s)))

    def replace(self, **kw) -> "ExperimentConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return ExperimentConfig(**d)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "horizon": self.horizon, "trials": self.trials, "seed": self.seed,
            "topologies": [_topology_dict(t) for t in self.topologies],
            "model": {"kind": self.model.kind, "p": self.model.p, "q": self.model.q,
                      "noise_scale": self.model.noise_scale, "sigma_x2": self.model.sigma_x2,
                      "sigma_n2": self.model.sigma_n2},
            "algorithms": [{"name": a.name, "label": a.tag, **dict(a.params)}
                           for a in self.algorithms],
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return parse_config(d)


def _topology_dict(t: TopologySpec) -> dict:
    out = {"kind": t.kind, "m": t.m, "label": t.name}
    if t.seed is not None:
        out["seed"] = t.seed
    if t.edges:
        out["edges"] = [list(e) for e in t.edges]
    return out


def _int(d, key, default=None, minimum=None):
    v = d.get(key, default)
    if v is None:
        raise ConfigError(f"missing required field '{key}'")
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
        raise ConfigError(f"field '{key}' must be an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"field '{key}' must be >= {minimum}, got {v}")
    return int(v)


def _float(d, key, default):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field '{key}' must be a number, got {v!r}")
    return float(v)


def _parse_topology(d) -> TopologySpec:
    if isinstance(d, str):
        raise ConfigError(f"topology '{d}' needs an agent count; write {{kind: {d}, m: ...}}")
    if not isinstance(d, dict):
        raise ConfigError(f"topology entry must be a mapping, got {d!r}")
    if "edges" in d:
        try:
            edges = tuple(sorted((min(int(a), int(b)), max(int(a), int(b))) for a, b in d["edges"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed edge list: {exc}") from None
        m = _int(d, "m", max((b for _, b in edges), default=1), minimum=1)
        return TopologySpec("custom", m, None, edges, str(d.get("label", "custom")))
    kind = d.get("kind")
    if kind not in TOPOLOGY_KINDS:
        raise ConfigError(f"unknown topology kind {kind!r}; expected one of {TOPOLOGY_KINDS}")
    m = _int(d, "m", minimum=2)
    seed = d.get("seed")
    if seed is not None:
        seed = _int(d, "seed", minimum=0)
    return TopologySpec(kind, m, seed, (), str(d.get("label", "")))


def _parse_algorithm(d) -> AlgorithmSpec:
    if isinstance(d, str):
        d = {"name": d}
    if not isinstance(d, dict):
        raise ConfigError(f"algorithm entry must be a name or mapping, got {d!r}")
    name = d.get("name")
    if name not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {name!r}; expected one of {ALGORITHMS}")
    params = {}
    if name == "sdol":
        params["window"] = _int(d, "window", minimum=1)
    elif name == "oedol":
        graph = d.get("graph", "self")
        if graph not in ("self", "spanning_tree"):
            raise ConfigError(f"oedol graph must be 'self' or 'spanning_tree', got {graph!r}")
        params["graph"] = graph
    elif name == "drls":
        params["forgetting"] = _float(d, "forgetting", 1.0)
        params["ridge"] = _float(d, "ridge", 1e-3)
        if not 0 < params["forgetting"] <= 1:
            raise ConfigError("drls forgetting factor must lie in (0, 1]")
        if not params["ridge"] > 0:
            raise ConfigError("drls ridge must be positive")
    extra = set(d) - {"name", "label"} - set(params)
    if extra:
        raise ConfigError(f"unknown {name} parameters: {sorted(extra)}")
    return AlgorithmSpec(name, tuple(sorted(params.items())), str(d.get("label", "")))


def parse_config(d: dict) -> ExperimentConfig:
    """Validate a plain mapping (as loaded from YAML) into an :class:`ExperimentConfig`."""
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a mapping")
    known = {"name", "topology", "topologies", "model", "algorithms", "horizon", "trials",
             "seed", "notes"}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown configuration fields: {sorted(extra)}")
    if "topology" in d and "topologies" in d:
        raise ConfigError("give either 'topology' or 'topologies', not both")
    topo_raw = d.get("topologies", [d["topology"]] if "topology" in d else None)
    if not isinstance(topo_raw, list) or not topo_raw:
        raise ConfigError("missing 'topology' or 'topologies'")
    topologies = tuple(_parse_topology(t) for t in topo_raw)
    mraw = d.get("model", {})
    if not isinstance(mraw, dict):
        raise ConfigError("'model' must be a mapping")
    mkind = mraw.get("kind", "random")
    if mkind not in ("random", "scalar"):
        raise ConfigError(f"model kind must be 'random' or 'scalar', got {mkind!r}")
    extra = set(mraw) - {"kind", "p", "q", "noise_scale", "sigma_x2", "sigma_n2"}
    if extra:
        raise ConfigError(f"unknown model fields: {sorted(extra)}")
    model = ModelSpec(_int(mraw, "p", 1, 1), _int(mraw, "q", 1, 1),
                      _float(mraw, "noise_scale", 1.0), mkind,
                      _float(mraw, "sigma_x2", 1.0), _float(mraw, "sigma_n2", 1.0))
    if model.kind == "scalar" and (model.p, model.q) != (1, 1):
        raise ConfigError("the scalar model has p = q = 1")
    if not model.noise_scale > 0:
        raise ConfigError("noise_scale must be positive")
    algs = d.get("algorithms", ["odol"])
    if not isinstance(algs, list):
        raise ConfigError("'algorithms' must be a list")
    notes = d.get("notes", [])
    if isinstance(notes, str):
        notes = [notes]
    return ExperimentConfig(topologies, model, tuple(_parse_algorithm(a) for a in algs),
                            _int(d, "horizon", minimum=1), _int(d, "trials", 1, minimum=1),
                            _int(d, "seed", 0, minimum=0), str(d.get("name", "experiment")),
                            tuple(str(n) for n in notes))


def load_config(path) -> ExperimentConfig:
    import yaml
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"configuration file not found: {p}")
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    return parse_config(raw)


# ---------------------------------------------------------------- building


@dataclass(frozen=True, eq=False)
class Setup:
    """Everything a configuration resolves to before any trace is drawn."""
    config: ExperimentConfig
    model: WorldModel
    topologies: dict        # label -> NetworkTopology


def resolve(config: ExperimentConfig) -> Setup:
    seeds = config.seeds()
    topos = {t.name: t.build(seeds["topology"]) for t in config.topologies}
    model = config.model.build(config.m, seeds["stds"], seeds["world"])
    return Setup(config, model, topos)


def algorithm_graph(alg: AlgorithmSpec, topo: NetworkTopology) -> NetworkTopology:
    if alg.name == "oedol" and alg.param("graph") == "spanning_tree":
        return spanning_tree(topo)
    return topo


def build_schedule(alg: AlgorithmSpec, topo: NetworkTopology, model: WorldModel, T: int):
    """Data-independent weights for one curve. Raises on incompatibility."""
    graph = algorithm_graph(alg, topo)
    if alg.name == "odol":
        return odol_schedule(graph, model, T)
    if alg.name == "oedol":
        return oedol_schedule(graph, model, T)
    if alg.name == "sdol":
        return sdol_weights(graph, model, alg.param("window"))
    return relative_variance_combiner(graph, model.noise_stds())


def run_schedule(alg: AlgorithmSpec, schedule, topo: NetworkTopology, model: WorldModel,
                 y: np.ndarray) -> np.ndarray:
    """Estimates ``(n, T+1, m, p)`` of one curve on a batch of traces."""
    if isinstance(schedule, OdolSchedule):
        return odol_run_batch(schedule, y)
    if isinstance(schedule, OedolSchedule):
        return oedol_run_batch(schedule, y)[0]
    if isinstance(schedule, SdolWeights):
        return sdol_run_batch(schedule, y)
    if isinstance(schedule, CombinerMatrix):
        return drls_run_batch(topo, model, schedule, y, alg.param("forgetting", 1.0),
                              alg.param("ridge", 1e-3))
    raise InvalidInputError(f"unsupported schedule type {type(schedule).__name__}")


# ---------------------------------------------------------------- report


@dataclass(frozen=True, eq=False)
class CostReport:
    """Trial-level costs for every (algorithm, topology) curve.

    ``team[key]`` has shape ``(trials, T)`` and holds the per-trial team cost
    ``sum_i ||x - u_{i,t}||^2``; ``mse[key]`` and ``mse_stderr[key]`` have
    shape ``(T, m)``. Skipped curves appear only in ``annotations``.
    """
    config: ExperimentConfig
    curves: tuple
    team: dict
    mse: dict
    mse_stderr: dict
    annotations: dict
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.config.horizon

    @property
    def trials(self) -> int:
        return self.config.trials

    def J_trials(self, key) -> np.ndarray:
        return np.cumsum(self.team[key], axis=1)

    def P_trials(self, key) -> np.ndarray:
        return self.team[key]

    def metric_trials(self, metric: str, key) -> np.ndarray:
        if metric == "J":
            return self.J_trials(key)
        if metric == "P":
            return self.P_trials(key)
        raise InvalidInputError(f"unknown metric {metric!r}")

    def mean(self, metric: str, key) -> np.ndarray:
        return self.metric_trials(metric, key).mean(axis=0)

    def stderr(self, metric: str, key) -> np.ndarray:
        return _stderr(self.metric_trials(metric, key))

    def J(self, key) -> np.ndarray:
        """``J[T'-1]`` is the mean cumulative team cost up to ``T'``."""
        return self.mean("J", key)

    def P(self, key) -> np.ndarray:
        return self.mean("P", key)


def _stderr(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    if n < 2:
        return np.zeros(a.shape[1:])
    return a.std(axis=0, ddof=1) / np.sqrt(n)


def _chunk_costs(setup: Setup, plans: list, trials: range):
    cfg = setup.config
    x, y = sample_traces(setup.model, cfg.horizon, cfg.seeds()["traces"], trials)
    out = {}
    for key, alg, topo, schedule in plans:
        u = run_schedule(alg, schedule, topo, setup.model, y)
        d = u[:, 1:] - x[:, None, None, :]
        err = np.einsum("ntip,ntip->nti", d, d)
        out[key] = (err.sum(axis=2), err.sum(axis=0), (err * err).sum(axis=0))
    return out


def run_experiment(config: ExperimentConfig, threads: int | None = None,
                   schedules: dict | None = None) -> CostReport:
    """Monte Carlo estimate of every configured curve.

    ``schedules`` may supply prebuilt weights keyed by ``(algorithm tag,
    topology label)``; missing ones are synthesized. Results are bitwise
    identical for every ``threads`` value.
    """
    setup = resolve(config)
    schedules = dict(schedules or {})
    plans, annotations, graphs = [], {}, {}
    for tname, topo in setup.topologies.items():
        for alg in config.algorithms:
            key = (alg.tag, tname)
            try:
                sched = schedules.get(key)
                if sched is None:
                    sched = build_schedule(alg, topo, setup.model, config.horizon)
            except (InvalidInputError, BuildFailureError) as exc:
                # e.g. OEDOL on a graph with cycles, or an SDOL window too short
                annotations[key] = f"skipped: {exc}"
                logger.warning("%s on %s skipped: %s", alg.tag, tname, exc)
                continue
            plans.append((key, alg, topo, sched))
            graphs[key] = algorithm_graph(alg, topo).sorted_edges()
    chunks = [range(s, min(s + CHUNK, config.trials)) for s in range(0, config.trials, CHUNK)]
    workers = max(1, min(threads or os.cpu_count() or 1, len(chunks)))
    if workers == 1:
        parts = [_chunk_costs(setup, plans, c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _chunk_costs(setup, plans, c), chunks))

    n = config.trials
    team, mse, mse_se = {}, {}, {}
    for key, *_ in plans:
        team[key] = np.concatenate([part[key][0] for part in parts])
        s1 = parts[0][key][1].copy()
        s2 = parts[0][key][2].copy()
        for part in parts[1:]:
            s1 += part[key][1]
            s2 += part[key][2]
        mean = s1 / n
        mse[key] = mean
        if n > 1:
            var = np.maximum(s2 / n - mean * mean, 0.0) * n / (n - 1)
            mse_se[key] = np.sqrt(var / n)
        else:
            mse_se[key] = np.zeros_like(mean)
    meta = {
        "model_fingerprint": setup.model.fingerprint(),
        "noise_stds": [float(v) for v in setup.model.noise_stds()],
        "topologies": {k: t.sorted_edges() for k, t in setup.topologies.items()},
        "algorithm_graphs": {f"{a}@{t}": e for (a, t), e in graphs.items()},
    }
    return CostReport(config, tuple(k for k, *_ in plans), team, mse, mse_se, annotations, meta)


# ---------------------------------------------------------------- comparison


@dataclass(frozen=True)
class Comparison:
    metric: str
    a: tuple
    b: tuple
    T: int
    diff: float          # mean(a) - mean(b)
    stderr: float        # stderr of the paired difference
    relation: str        # '<', '>' or '='
    significant: bool

    def to_dict(self) -> dict:
        return {"metric": self.metric, "a": list(self.a), "b": list(self.b), "T": self.T,
                "diff": self.diff, "stderr": self.stderr, "relation": self.relation,
                "significant": self.significant}


def compare_curves(report: CostReport, a, b, metric: str = "J", other: CostReport | None = None,
                   k: float = SIGNIFICANCE) -> list[Comparison]:
    """Paired comparison of two curves at every horizon ``T' = 1..T``.

    ``a`` comes from ``report`` and ``b`` from ``other`` (default: the same
    report). A gap within ``TIE_RTOL`` relative counts as a tie; otherwise
    the gap is significant when it exceeds ``k`` paired standard errors.
    """
    other = other or report
    _check_pairable(report, other)
    ta, tb = report.metric_trials(metric, a), other.metric_trials(metric, b)
    d = ta - tb
    diff = d.mean(axis=0)
    se = _stderr(d)
    scale = np.maximum(np.abs(ta.mean(axis=0)), np.abs(tb.mean(axis=0)))
    out = []
    for t in range(report.T):
        tie = abs(diff[t]) <= TIE_RTOL * scale[t]
        rel = "=" if tie else ("<" if diff[t] < 0 else ">")
        sig = (not tie) and abs(diff[t]) > k * se[t]
        out.append(Comparison(metric, tuple(a), tuple(b), t + 1, float(diff[t]), float(se[t]),
                              rel, bool(sig)))
    return out


def _check_pairable(r1: CostReport, r2: CostReport) -> None:
    c1, c2 = r1.config, r2.config
    if (c1.horizon, c1.trials, c1.seed) != (c2.horizon, c2.trials, c2.seed):
        raise InvalidComparisonError(
            f"reports differ in (T, trials, seed): {(c1.horizon, c1.trials, c1.seed)} vs "
            f"{(c2.horizon, c2.trials, c2.seed)}")
    if r1.meta.get("model_fingerprint") != r2.meta.get("model_fingerprint"):
        raise InvalidComparisonError("reports were produced with different world models")


def compare_report(*reports: CostReport, metric: str = "J") -> list[Comparison]:
    """All pairwise orderings between the curves of one or more reports."""
    if not reports:
        raise InvalidComparisonError("nothing to compare")
    for r in reports[1:]:
        _check_pairable(reports[0], r)
    entries = [(ri, key) for ri, r in enumerate(reports) for key in r.curves]
    out = []
    for x in range(len(entries)):
        for y in range(x + 1, len(entries)):
            (ra, ka), (rb, kb) = entries[x], entries[y]
            la = ka if len(reports) == 1 else (f"r{ra}", *ka)
            lb = kb if len(reports) == 1 else (f"r{rb}", *kb)
            for c in compare_curves(reports[ra], ka, kb, metric, reports[rb]):
                out.append(Comparison(c.metric, la, lb, c.T, c.diff, c.stderr, c.relation,
                                      c.significant))
    return out


# ---------------------------------------------------------------- export

REPORT_COLUMNS = ("metric", "algorithm", "topology", "T", "value", "stderr")
MSE_COLUMNS = ("algorithm", "topology", "agent", "t", "value", "stderr")


def _fmt(v) -> str:
    return repr(float(v))


def write_report_csv(report: CostReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for key in report.curves:
            for metric in ("J", "P"):
                mean, se = report.mean(metric, key), report.stderr(metric, key)
                for t in range(report.T):
                    w.writerow((metric, key[0], key[1], t + 1, _fmt(mean[t]), _fmt(se[t])))


def write_mse_csv(report: CostReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MSE_COLUMNS)
        for key in report.curves:
            mse, se = report.mse[key], report.mse_stderr[key]
            for t in range(mse.shape[0]):
                for i in range(mse.shape[1]):
                    w.writerow((key[0], key[1], i + 1, t + 1, _fmt(mse[t, i]), _fmt(se[t, i])))


def report_summary(report: CostReport) -> dict:
    T = report.T
    curves = {}
    for key in report.curves:
        curves[f"{key[0]}@{key[1]}"] = {
            "algorithm": key[0], "topology": key[1],
            "J_final": float(report.J(key)[-1]), "J_final_stderr": float(report.stderr("J", key)[-1]),
            "P_final": float(report.P(key)[-1]), "P_final_stderr": float(report.stderr("P", key)[-1]),
        }
    return {
        "config": report.config.to_dict(),
        "T": T, "trials": report.trials, "seed": report.config.seed,
        "curves": curves,
        "skipped": {f"{a}@{t}": msg for (a, t), msg in sorted(report.annotations.items())},
        "meta": report.meta,
        "significance_rule": f"{SIGNIFICANCE:g} paired standard errors",
    }


def write_report(report: CostReport, out_dir) -> dict:
    """Write ``costs.csv``, ``mse.csv`` and ``summary.json``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"costs": out / "costs.csv", "mse": out / "mse.csv", "summary": out / "summary.json"}
    write_report_csv(report, paths["costs"])
    write_mse_csv(report, paths["mse"])
    paths["summary"].write_text(json.dumps(report_summary(report), indent=1, sort_keys=True) + "\n")
    return paths
