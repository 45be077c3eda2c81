"""Named experiment configurations for the reproduction figures.

All presets use 20 agents, ``p = 10``, ``q = 1``, folded-normal noise
(scale 1) and 100 trials.
"""
from __future__ import annotations

from .errors import ConfigError
from .harness import ExperimentConfig, parse_config

_BASE = {"model": {"p": 10, "q": 1, "noise_scale": 1.0}, "trials": 100, "seed": 0}
_FOUR = [{"kind": k, "m": 20} for k in ("fully_connected", "random", "star", "line")]

PRESETS = {
    "fig6": {"name": "fig6", "topologies": _FOUR, "algorithms": ["odol"], "horizon": 20,
             "notes": ["oracle team cost J(T) for four network shapes"]},
    "fig7": {"name": "fig7", "topologies": _FOUR, "algorithms": ["odol"], "horizon": 200,
             "notes": ["terminal cost P(T) for four network shapes",
                       "convergence of fully connected and line is operationalized as a "
                       "relative gap below 5% at T = 200"]},
    "fig10": {"name": "fig10", "topologies": [{"kind": "random", "m": 20}],
              "algorithms": ["odol", {"name": "oedol", "graph": "spanning_tree"}, "drls"],
              "horizon": 50,
              "notes": ["team cost: ODOL and D-RLS on the random network, OEDOL on its "
                        "spanning tree"]},
    "fig11": {"name": "fig11", "topologies": [{"kind": "random", "m": 20}],
              "algorithms": ["odol", {"name": "oedol", "graph": "spanning_tree"}, "drls"],
              "horizon": 1000,
              "notes": ["terminal cost of the fig10 algorithms over a long horizon",
                        "horizon capped at 1000 to bound OEDOL schedule memory"]},
    "fig12": {"name": "fig12", "topologies": [{"kind": "random", "m": 20}],
              "algorithms": ["odol", {"name": "sdol", "window": 50},
                             {"name": "sdol", "window": 100}],
              "horizon": 200,
              "notes": ["terminal cost of SDOL-50 and SDOL-100 against ODOL"]},
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return parse_config({**_BASE, **PRESETS[name]})
