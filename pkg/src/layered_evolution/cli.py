"""Command line entry point: ``layered-evo <verb> [options]``.

Exit codes: 0 success, 2 usage error, 3 stage-order error, 4 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .evolution import EvolutionConfig, EvaluationError
from .experiments import (
    REGISTRY, AggregationError, StageOrderError, aggregate_runs, cross_test, load_config,
    replay_trace, run_dir, run_experiment,
)
from .network import GenomeError
from .tasks import TASK_KINDS, task_from_name
from .world import WorldConfigError

EXIT_OK, EXIT_USAGE, EXIT_STAGE, EXIT_RUNTIME = 0, 2, 3, 4


def _on_off(text: str) -> bool:
    v = text.lower()
    if v in ("1", "on", "true", "yes"):
        return True
    if v in ("0", "off", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


def _task_name(text: str) -> str:
    base = text[: -len("-biased")] if text.endswith("-biased") else text
    if base not in TASK_KINDS:
        raise argparse.ArgumentTypeError(
            f"unknown task {text!r}; choose from {', '.join(TASK_KINDS)} (optionally -biased)")
    return text


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="layered-evo",
                                description="Layered evolution of subsumption controllers.")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, experiment_required=True):
        sp.add_argument("--experiment", required=experiment_required, choices=sorted(REGISTRY))
        sp.add_argument("--out", default="out", help="output root (default: out)")

    r = sub.add_parser("run", help="run every independent run of one experiment")
    common(r)
    r.add_argument("--config", help="JSON file mirroring the evolution config")
    r.add_argument("--seed", type=int)
    r.add_argument("--runs", type=int)
    r.add_argument("--generations", type=int, help="generations per schedule segment")
    r.add_argument("--mutation-rate", type=float)
    r.add_argument("--threads", type=int)
    r.add_argument("--common-trials", type=_on_off, metavar="on|off")
    r.add_argument("--quiet", action="store_true")

    a = sub.add_parser("aggregate", help="rebuild aggregate.csv from per-run histories")
    common(a)

    c = sub.add_parser("cross-test", help="score a saved genome on fresh trials")
    c.add_argument("--genome", required=True)
    c.add_argument("--task", required=True, type=_task_name)
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--scripted-flip", action="store_true",
                   help="drive layers 1-2 with the scripted flip strategy instead of layer 3")
    c.add_argument("--config", help="JSON config whose world section is used")

    t = sub.add_parser("replay", help="write a per-step trace of one trial")
    t.add_argument("--genome", required=True)
    t.add_argument("--task", required=True, type=_task_name)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--trace-out", default="trace.csv")
    t.add_argument("--config", help="JSON config whose world section is used")

    sub.add_parser("list", help="list registered experiments")
    return p


def _config(args) -> EvolutionConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else EvolutionConfig()
    overrides = {k: v for k, v in (("seed", args.seed), ("runs", args.runs),
                                    ("generations", args.generations),
                                    ("mutation_rate", args.mutation_rate),
                                    ("threads", args.threads),
                                    ("common_trials", args.common_trials)) if v is not None}
    return replace(cfg, **overrides)


def _world(args):
    return load_config(args.config).world if args.config else None


def _cmd_run(args) -> int:
    cfg = _config(args)

    def progress(run, stats):
        if stats.generation % 10 == 0 or stats.generation == cfg.generations - 1:
            print(f"run {run:02d} gen {stats.generation:3d} {stats.task:22s} "
                  f"best {stats.best_fitness:10.3f} mean {stats.mean_fitness:10.3f}",
                  file=sys.stderr)

    report = run_experiment(args.experiment, cfg, args.out,
                            None if args.quiet else progress)
    print(json.dumps(report.summary, indent=1))
    return EXIT_OK


def _cmd_aggregate(args) -> int:
    root = Path(args.out) / args.experiment
    paths = sorted(root.glob("[0-9][0-9]/history.csv"))
    if not paths:
        raise AggregationError(f"no run histories under {root}")
    agg = aggregate_runs(paths, root / "aggregate.csv")
    print(f"{root / 'aggregate.csv'}: {len(paths)} runs, {agg.shape[0]} generations")
    return EXIT_OK


def _cmd_cross_test(args) -> int:
    res = cross_test(args.genome, task_from_name(args.task), args.trials, args.seed,
                     _world(args), args.scripted_flip)
    print(json.dumps({k: v for k, v in res.items() if k != "scores"}))
    return EXIT_OK


def _cmd_replay(args) -> int:
    res = replay_trace(args.genome, task_from_name(args.task), args.seed, args.trace_out,
                       _world(args))
    print(f"{args.trace_out}: score {res.score:.4f} over {res.steps_run} steps")
    return EXIT_OK


def _cmd_list(args) -> int:
    for name, exp in REGISTRY.items():
        after = f" (after {exp.seed_from})" if exp.seed_from else ""
        print(f"{name:24s} {exp.regime:18s} {exp.description}{after}")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "aggregate": _cmd_aggregate, "cross-test": _cmd_cross_test,
            "replay": _cmd_replay, "list": _cmd_list}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.verb](args)
    except StageOrderError as exc:
        print(f"stage order: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ValueError, TypeError) as exc:
        # bad values that argparse could not catch (config file contents, genome files)
        if isinstance(exc, (GenomeError, AggregationError, WorldConfigError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EvaluationError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
