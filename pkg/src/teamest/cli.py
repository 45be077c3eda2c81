"""Command-line entry point: ``teamest {simulate,weights,verify,figures}``.

Exit codes: 0 success, 1 runtime or verification failure, 2 usage or
configuration error (including unreadable schedule files and OEDOL on a
graph with cycles).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, InvalidInputError, ScheduleFormatError, TeamEstError
from .harness import (ExperimentConfig, algorithm_graph, build_schedule, load_config, resolve,
                      run_experiment, write_report)
from .model import sample_traces
from .oedol import oedol_run_batch, write_message_log
from .presets import PRESETS, preset
from .verify import verify_config
from .weights_io import load_schedule, save_schedule, schedule_identity

logger = logging.getLogger("teamest")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
CACHEABLE = ("odol", "oedol", "sdol")


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="YAML experiment configuration")
    src.add_argument("--preset", choices=sorted(PRESETS), help="built-in configuration")
    p.add_argument("--out", type=Path, required=out_required, help="output directory")
    p.add_argument("--trials", type=int, help="override the trial count")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="teamest",
                                     description="Team-optimal distributed estimation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo J(T), P(T) and MSE reports")
    _add_common(p)
    p.add_argument("--weights", type=Path, nargs="*", default=[],
                   help="precomputed schedule files to use instead of synthesis")
    p.add_argument("--message-log", type=int, default=0, metavar="N",
                   help="write OEDOL broadcast messages of the first N trials")

    p = sub.add_parser("weights", help="precompute and save weight schedules")
    _add_common(p)

    p = sub.add_parser("verify", help="check oracle, span and equivalence invariants")
    _add_common(p, out_required=False)
    p.add_argument("--weights", type=Path, nargs="*", default=[],
                   help="schedule files to cross-check against fresh synthesis")
    p.add_argument("--horizon", type=int, help="horizon for oracle and span checks (default 5)")

    p = sub.add_parser("figures", help="run the reproduction presets")
    p.add_argument("--preset", choices=sorted(PRESETS), nargs="*",
                   help="presets to run (default: all)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def _positive(name, value):
    if value is not None and value < 1:
        raise UsageError(f"--{name} must be a positive integer, got {value}")


def _config(args) -> ExperimentConfig:
    if args.config is None and args.preset is None:
        raise UsageError("one of --config or --preset is required")
    cfg = load_config(args.config) if args.config is not None else preset(args.preset)
    return _override(cfg, args)


def _override(cfg: ExperimentConfig, args) -> ExperimentConfig:
    _positive("trials", args.trials)
    _positive("threads", args.threads)
    if args.seed is not None and args.seed < 0:
        raise UsageError("--seed must be non-negative")
    kw = {}
    if args.trials is not None:
        kw["trials"] = args.trials
    if args.seed is not None:
        kw["seed"] = args.seed
    return cfg.replace(**kw) if kw else cfg


def _weight_file_name(alg_tag: str, topo_label: str) -> str:
    return f"{topo_label}.{alg_tag}.weights.zip"


def _match_schedules(cfg: ExperimentConfig, paths) -> dict:
    """Assign loaded schedule files to the (algorithm, topology) curves they fit."""
    if not paths:
        return {}
    setup = resolve(cfg)
    fp = setup.model.fingerprint()
    loaded = [(p, load_schedule(p)) for p in paths]
    out = {}
    for path, sched in loaded:
        kind, edges, sfp, size = schedule_identity(sched)
        hit = None
        for label, topo in setup.topologies.items():
            for alg in cfg.algorithms:
                if alg.name != kind or sfp != fp:
                    continue
                if tuple(algorithm_graph(alg, topo).sorted_edges()) != edges:
                    continue
                if kind == "sdol" and size != alg.param("window"):
                    continue
                if kind != "sdol" and size < cfg.horizon:
                    continue
                hit = (alg.tag, label)
        if hit is None:
            raise ConfigError(f"{path}: schedule does not match any configured curve")
        out[hit] = sched
    return out


def cmd_simulate(args) -> int:
    if args.message_log < 0:
        raise UsageError("--message-log must be non-negative")
    cfg = _config(args)
    schedules = _match_schedules(cfg, args.weights)
    report = run_experiment(cfg, threads=args.threads, schedules=schedules)
    paths = write_report(report, args.out)
    if args.message_log:
        paths.update(_write_message_logs(cfg, schedules, report, args.message_log, args.out))
    for key, note in sorted(report.annotations.items()):
        print(f"note: {key[0]} on {key[1]} {note}", file=sys.stderr)
    for p in paths.values():
        print(p)
    return EXIT_OK


def _write_message_logs(cfg: ExperimentConfig, schedules: dict, report, n: int, out) -> dict:
    """Replay the first ``n`` trials of every OEDOL curve and log its messages."""
    setup = resolve(cfg)
    trials = range(min(n, cfg.trials))
    _, y = sample_traces(setup.model, cfg.horizon, cfg.seeds()["traces"], trials)
    paths = {}
    for alg in cfg.algorithms:
        for label, topo in setup.topologies.items():
            key = (alg.tag, label)
            if alg.name != "oedol" or key not in report.curves:
                continue
            sched = schedules.get(key) or build_schedule(alg, topo, setup.model, cfg.horizon)
            _, msgs = oedol_run_batch(sched, y)
            path = Path(out) / f"{label}.{alg.tag}.messages.csv"
            write_message_log(msgs, path, trials)
            paths[f"messages:{alg.tag}@{label}"] = path
    if not paths:
        logger.warning("--message-log given but no OEDOL curve was run")
    return paths


def cmd_weights(args) -> int:
    cfg = _config(args)
    setup = resolve(cfg)
    built = []
    for label, topo in setup.topologies.items():
        for alg in cfg.algorithms:
            if alg.name not in CACHEABLE:
                logger.info("%s has no cached weights; skipped", alg.tag)
                continue
            built.append((_weight_file_name(alg.tag, label),
                          build_schedule(alg, topo, setup.model, cfg.horizon)))
    if not built:
        raise UsageError("no algorithm in the configuration has cacheable weights "
                         f"(expected one of {CACHEABLE})")
    # nothing is written unless every schedule could be built
    args.out.mkdir(parents=True, exist_ok=True)
    for name, sched in built:
        save_schedule(sched, args.out / name)
        print(args.out / name)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _config(args)
    _positive("horizon", args.horizon)
    schedules = {str(p): load_schedule(p) for p in args.weights}
    checks = verify_config(cfg, args.horizon, schedules)
    report = {"config": cfg.to_dict(), "checks": [c.to_dict() for c in checks],
              "passed": not any(c.failed for c in checks)}
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "verify.json").write_text(text)
        print(args.out / "verify.json")
    else:
        sys.stdout.write(text)
    for c in checks:
        print(f"{c.status:>28}  {c.name} [{c.topology}] residual={c.residual:.3e}",
              file=sys.stderr)
    failed = [c for c in checks if c.failed]
    if failed:
        names = ", ".join(f"{c.name} [{c.topology}]" for c in failed)
        print(f"verification failed: {names}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_figures(args) -> int:
    names = args.preset or sorted(PRESETS)
    for name in names:
        cfg = _override(preset(name), args)
        report = run_experiment(cfg, threads=args.threads)
        for p in write_report(report, args.out / name).values():
            print(p)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "weights": cmd_weights, "verify": cmd_verify,
            "figures": cmd_figures}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InvalidInputError, ScheduleFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TeamEstError, FloatingPointError, OSError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
