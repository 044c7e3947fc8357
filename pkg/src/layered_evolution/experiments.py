"""Experiment registry, multi-run orchestration and report files.

Layout under the output root::

    <out>/<experiment>/<run>/history.csv
    <out>/<experiment>/<run>/best_genome.json
    <out>/<experiment>/aggregate.csv
    <out>/<experiment>/summary.json
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .evolution import (
    PURPOSE_EXTEND, PURPOSE_INIT, EvolutionConfig, EvolutionResult, GenerationStats,
    Individual, evaluate, extend_and_freeze, name_key, run_evolution, stream,
)
from .network import (
    TOPOLOGIES, ConnectionLayer, LayeredGenome, genome_from_dict, genome_to_dict, load_genome,
    random_genome, save_genome,
)
from .tasks import (
    TRACE_COLUMNS, TaskSpec, make_trial_world, run_flip_oracle_trial, simulate, task_from_name,
)
from .world import WorldConfig

PURPOSE_CROSS = 7
# populations written to disk besides the final one (generation indices)
SNAPSHOT_GENERATIONS = (0, 10)
HISTORY_HEADER = ("generation", "best_fitness", "mean_fitness")


class StageOrderError(RuntimeError):
    """A staged experiment was started before its prerequisite stage."""


class AggregationError(ValueError):
    """Histories handed to the aggregator disagree in length."""


@dataclass(frozen=True)
class ExperimentDef:
    name: str
    regime: str
    roles: tuple[str, ...]
    schedule: tuple[str, ...]
    seed_from: Optional[str] = None
    frozen_prefix: int = 0
    connection_layers: bool = False
    description: str = ""


REGISTRY: dict[str, ExperimentDef] = {e.name: e for e in (
    ExperimentDef("monolithic-full", "monolithic", ("monolithic",), ("learning-obstacles",),
                  description="one hybrid network on the full learning task"),
    ExperimentDef("monolithic-full-biased", "monolithic", ("monolithic",),
                  ("learning-obstacles-biased",),
                  description="full task, light 0 is the target two times in three"),
    ExperimentDef("monolithic-photo", "monolithic", ("monolithic",), ("phototaxis",),
                  description="conditional phototaxis without obstacles"),
    ExperimentDef("monolithic-photo-obst", "monolithic", ("monolithic",),
                  ("phototaxis-obstacles",),
                  description="conditional phototaxis among obstacles"),
    ExperimentDef("incremental", "incremental", ("monolithic",),
                  ("phototaxis", "phototaxis-obstacles"),
                  description="phototaxis, then obstacles added with the population carried over"),
    ExperimentDef("modular-2", "modularised", ("phototaxis", "avoidance"),
                  ("phototaxis-obstacles",),
                  description="phototaxis and avoidance layers evolved together"),
    ExperimentDef("modular-3", "modularised", ("phototaxis", "avoidance", "learning"),
                  ("learning-obstacles",),
                  description="all three layers evolved together on the full task"),
    ExperimentDef("layered-1", "layered-stage", ("phototaxis",), ("phototaxis",),
                  description="stage 1: conditional phototaxis layer"),
    ExperimentDef("layered-2", "layered-stage", ("phototaxis", "avoidance"),
                  ("phototaxis-obstacles",), seed_from="layered-1", frozen_prefix=1,
                  description="stage 2: avoidance layer over frozen layer 1"),
    ExperimentDef("layered-3", "layered-stage", ("phototaxis", "avoidance", "learning"),
                  ("learning-obstacles",), seed_from="layered-2", frozen_prefix=2,
                  description="stage 3: learning layer over frozen layers 1-2"),
    ExperimentDef("merge-unfrozen", "merge-unfrozen", ("phototaxis", "avoidance", "learning"),
                  ("learning-obstacles",), seed_from="layered-3",
                  description="layered-3 champions evolved further with all layers mutable"),
    ExperimentDef("merge-connections", "merge-connections",
                  ("phototaxis", "avoidance", "learning"), ("learning-obstacles",),
                  seed_from="layered-3", connection_layers=True,
                  description="as merge-unfrozen, plus evolvable top-down connection layers"),
)}


@dataclass
class RunReport:
    experiment: str
    history_paths: list[Path]
    aggregate_path: Path
    genome_paths: list[Path]
    summary: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

def config_from_dict(data: dict, base: Optional[EvolutionConfig] = None) -> EvolutionConfig:
    base = base or EvolutionConfig()
    data = dict(data)
    world = data.pop("world", None)
    unknown = set(data) - set(EvolutionConfig.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    cfg = replace(base, **data)
    if world is not None:
        cfg = replace(cfg, world=replace(cfg.world, **world))
    return cfg


def load_config(path) -> EvolutionConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def report_value(fitness: float, task: TaskSpec) -> float:
    """CSV orientation: distance tasks are written as positive mean distance."""
    return -fitness if task.distance_based else fitness


def write_history(history: Sequence[GenerationStats], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_HEADER)
        for s in history:
            task = task_from_name(s.task)
            w.writerow([s.generation, repr(report_value(s.best_fitness, task)),
                        repr(report_value(s.mean_fitness, task))])


def read_history(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != HISTORY_HEADER:
        raise AggregationError(f"{path}: not a history file")
    return np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, 3)


def aggregate_runs(history_paths: Sequence, out_path=None) -> np.ndarray:
    """Per-generation mean of best and mean fitness across runs."""
    tables = [read_history(p) for p in history_paths]
    if not tables:
        raise AggregationError("no histories to aggregate")
    if len({t.shape for t in tables}) != 1:
        raise AggregationError("histories have different generation counts")
    stacked = np.stack(tables)
    agg = np.column_stack([stacked[0, :, 0], stacked[:, :, 1].mean(axis=0),
                           stacked[:, :, 2].mean(axis=0)])
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HISTORY_HEADER)
            for g, b, m in agg:
                w.writerow([int(g), repr(float(b)), repr(float(m))])
    return agg


def save_population(genomes: Sequence[LayeredGenome], path) -> None:
    Path(path).write_text(json.dumps([genome_to_dict(g) for g in genomes]) + "\n")


def load_population(path) -> list[LayeredGenome]:
    return [genome_from_dict(d) for d in json.loads(Path(path).read_text())]


def write_trace(trace: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in trace:
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:6]] + [int(row[6])])


def t_statistic(values: Sequence[float]) -> float:
    """One-sample t against zero; 0 when every value is exactly zero."""
    x = np.asarray(values, dtype=np.float64)
    sd = x.std(ddof=1) if len(x) > 1 else 0.0
    if sd == 0.0:
        return 0.0 if np.all(x == 0) else math.copysign(math.inf, x.mean())
    return float(x.mean() / (sd / math.sqrt(len(x))))


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

def run_dir(out_dir, experiment: str, run: int) -> Path:
    return Path(out_dir) / experiment / f"{run:02d}"


def _seed_genome(exp: ExperimentDef, out_dir, run: int) -> LayeredGenome:
    path = run_dir(out_dir, exp.seed_from, run) / "best_genome.json"
    if not path.exists():
        raise StageOrderError(f"{exp.name} needs {exp.seed_from} champions; missing {path}")
    return load_genome(path)


def initial_population(exp: ExperimentDef, config: EvolutionConfig, run: int,
                       out_dir=None, seed_genome: Optional[LayeredGenome] = None
                       ) -> list[LayeredGenome]:
    key = (name_key(exp.name), run)
    size = config.population
    if exp.seed_from is None:
        return [random_genome(exp.roles, np.random.default_rng(
                    stream(config.seed, *key, PURPOSE_INIT, i)), exp.connection_layers)
                for i in range(size)]
    seed = seed_genome if seed_genome is not None else _seed_genome(exp, out_dir, run)
    if exp.regime == "layered-stage":
        if seed.roles != exp.roles[:-1]:
            raise StageOrderError(f"{exp.name} expects a {exp.roles[:-1]} seed, got {seed.roles}")
        base = LayeredGenome(seed.layers, None, len(seed.layers))
        rngs = [np.random.default_rng(stream(config.seed, *key, PURPOSE_EXTEND, i))
                for i in range(size)]
        return extend_and_freeze([base] * size, TOPOLOGIES[exp.roles[-1]], rngs)
    if seed.roles != exp.roles:
        raise StageOrderError(f"{exp.name} expects a {exp.roles} seed, got {seed.roles}")
    conns = None
    if exp.connection_layers:
        conns = tuple(ConnectionLayer(k) for k in range(len(seed.layers) - 1))
    return [LayeredGenome(seed.layers, conns, 0)] * size


def experiment_schedule(exp: ExperimentDef, config: EvolutionConfig
                        ) -> list[tuple[TaskSpec, int]]:
    return [(task_from_name(t), config.generations) for t in exp.schedule]


def run_single(exp: ExperimentDef, config: EvolutionConfig, run: int, out_dir=None,
               seed_genome: Optional[LayeredGenome] = None,
               progress: Optional[Callable] = None,
               observer: Optional[Callable] = None) -> EvolutionResult:
    pop = initial_population(exp, config, run, out_dir, seed_genome)
    return run_evolution(pop, experiment_schedule(exp, config), config,
                         (name_key(exp.name), run), progress, observer)


def _final_trials(result: EvolutionResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "fitness"] + [f"trial_{k}" for k in
                                          range(len(result.population[0].trial_scores))])
        for i, ind in enumerate(result.population):
            w.writerow([i, repr(ind.fitness)] + [repr(s) for s in ind.trial_scores])


def run_experiment(name: str, config: Optional[EvolutionConfig] = None, out_dir="out",
                   progress: Optional[Callable[[int, GenerationStats], None]] = None
                   ) -> RunReport:
    if name not in REGISTRY:
        raise KeyError(f"unknown experiment {name!r}; see `list`")
    exp = REGISTRY[name]
    cfg = config or EvolutionConfig()
    root = Path(out_dir) / name
    # fail fast on stage order before any run starts
    if exp.seed_from is not None:
        for run in range(cfg.runs):
            _seed_genome(exp, out_dir, run)

    histories, genomes, finals, conns = [], [], [], []
    for run in range(cfg.runs):
        rdir = run_dir(out_dir, name, run)
        rdir.mkdir(parents=True, exist_ok=True)
        cb = (lambda s, r=run: progress(r, s)) if progress else None
        last_gen = cfg.generations * len(exp.schedule) - 1
        keep = set(SNAPSHOT_GENERATIONS) | {last_gen}

        def snap(gen, pop, d=rdir):
            if gen in keep:
                save_population([ind.genome for ind in pop], d / f"population_gen{gen:03d}.json")

        result = run_single(exp, cfg, run, out_dir, progress=cb, observer=snap)
        write_history(result.history, rdir / "history.csv")
        best = result.segment_champions[max(result.segment_champions)] \
            if result.segment_champions else result.population[0].genome
        save_genome(best, rdir / "best_genome.json")
        for gen, genome in sorted(result.segment_champions.items())[:-1]:
            save_genome(genome, rdir / f"champion_gen{gen:03d}.json")
        if result.history:
            _final_trials(result, rdir / "final_trials.csv")
            last = result.history[-1]
            task = task_from_name(last.task)
            finals.append((report_value(last.best_fitness, task),
                           report_value(last.mean_fitness, task)))
            conns.append(last.mean_connections)
        histories.append(rdir / "history.csv")
        genomes.append(rdir / "best_genome.json")

    agg_path = root / "aggregate.csv"
    aggregate_runs(histories, agg_path)
    summary = {"experiment": name, "regime": exp.regime, "runs": cfg.runs,
               "generations_per_segment": cfg.generations, "seed": cfg.seed,
               "schedule": list(exp.schedule)}
    if finals:
        best, mean = np.array(finals).T
        summary.update(final_best_mean=float(best.mean()), final_mean_mean=float(mean.mean()),
                       final_best_per_run=best.tolist(), final_mean_per_run=mean.tolist(),
                       final_mean_t_statistic=t_statistic(mean))
    if exp.connection_layers and conns:
        summary["mean_connections_final"] = float(np.mean(conns))
        summary["mean_connections_per_run"] = [float(c) for c in conns]
    if exp.regime == "merge-connections":
        other = Path(out_dir) / "merge-unfrozen" / "summary.json"
        if other.exists():
            a = json.loads(other.read_text())
            summary["condition_a_final_mean"] = a.get("final_mean_mean")
            summary["condition_b_final_mean"] = summary.get("final_mean_mean")
            summary["condition_a_final_best"] = a.get("final_best_mean")
            summary["condition_b_final_best"] = summary.get("final_best_mean")
    (root / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    return RunReport(name, histories, agg_path, genomes, summary)


# ---------------------------------------------------------------------------
# post-hoc evaluation
# ---------------------------------------------------------------------------

def cross_test(genome, task: TaskSpec, n_trials: int, seed: int = 0,
               config: Optional[WorldConfig] = None, scripted_flip: bool = False) -> dict:
    """Score a fixed genome on fresh trials; no evolution."""
    if not isinstance(genome, LayeredGenome):
        genome = load_genome(genome)
    scores = []
    for i in range(n_trials):
        s = stream(seed, PURPOSE_CROSS, i)
        if scripted_flip:
            scores.append(run_flip_oracle_trial(genome, task, s, config).score)
        else:
            scores.append(simulate(genome, task, s, config).score)
    if not scores:
        return {"n": 0, "mean": None, "min": None, "max": None, "scores": []}
    return {"n": n_trials, "mean": float(np.mean(scores)), "min": float(np.min(scores)),
            "max": float(np.max(scores)), "scores": scores}


def benchmark_population(genomes: Sequence[LayeredGenome], task: TaskSpec, n_sets: int = 8,
                         trials: int = 5, seed: int = 0,
                         config: Optional[EvolutionConfig] = None) -> float:
    """Mean population fitness on fixed trial sets instead of a generation's draw.

    Every genome is scored as the minimum over each of ``n_sets`` shared sets
    of ``trials`` trials; the result is the mean over sets and genomes. Using
    the same sets for every snapshot removes world-difficulty luck from
    comparisons between generations.
    """
    cfg = config or EvolutionConfig()
    seeds = [stream(seed, PURPOSE_CROSS, 1, k) for k in range(n_sets * trials)]
    worlds = [make_trial_world(task, s, cfg.world) for s in seeds]
    values = []
    for g in genomes:
        scores = np.array(evaluate(Individual(g), task, seeds, cfg, worlds).trial_scores)
        values.append(scores.reshape(n_sets, trials).min(axis=1).mean())
    return float(np.mean(values))


def replay_trace(genome, task: TaskSpec, seed: int, out_file,
                 config: Optional[WorldConfig] = None):
    if not isinstance(genome, LayeredGenome):
        genome = load_genome(genome)
    result, trace = simulate(genome, task, stream(seed, PURPOSE_CROSS, 0), config, trace=True)
    write_trace(trace, out_file)
    return result
