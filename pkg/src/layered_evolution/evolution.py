"""Clone-and-mutate genetic algorithm with frozen-layer support.

Each generation every individual is scored as the worst of ``trials``
trials. The better half is kept, the worse half is overwritten with clones
of the better half, and everything outside the elite is mutated. All
randomness is drawn from seed sequences keyed by
(master seed, experiment, run, generation, purpose, index), so any
generation can be replayed on its own and thread count has no effect.
"""
from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .network import (
    DEFAULT_RATES, RULES, WEIGHT_LIMIT, ConnectionLayer, LayeredGenome, LayerTopology,
    NetworkGenome, compile_genome,
)
from .tasks import TaskSpec, make_trial_world, simulate
from .world import WorldConfig, WorldConfigError

PURPOSE_INIT, PURPOSE_TRIAL, PURPOSE_MUTATE, PURPOSE_EXTEND = range(4)


class EvaluationError(RuntimeError):
    """A trial could not be run (typically world generation failed)."""


@dataclass(frozen=True)
class EvolutionConfig:
    generations: int = 100
    runs: int = 10
    population: int = 30
    elites: int = 5
    trials: int = 5
    mutation_rate: float = 0.15
    sigma: float = 0.3
    connection_add_factor: float = 5.0
    common_trials: bool = True
    seed: int = 0
    threads: int = 1
    world: WorldConfig = field(default_factory=WorldConfig)

    def __post_init__(self):
        if self.population < 2 or not 0 <= self.elites < self.population / 2:
            raise ValueError("need elites < population / 2")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation rate must lie in [0, 1]")
        if self.connection_add_factor < 0:
            raise ValueError("connection add factor must be non-negative")
        if self.trials < 1 or self.generations < 0 or self.runs < 1 or self.threads < 1:
            raise ValueError("trials, runs and threads must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


@dataclass(frozen=True)
class Individual:
    genome: LayeredGenome
    fitness: Optional[float] = None
    trial_scores: tuple[float, ...] = ()


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    task: str = ""
    mean_connections: float = float("nan")


@dataclass
class EvolutionResult:
    history: list[GenerationStats]
    population: list[Individual]
    # champion genome at the end of each schedule segment, keyed by generation index
    segment_champions: dict[int, LayeredGenome] = field(default_factory=dict)


def stream(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))


def name_key(name: str) -> int:
    return zlib.crc32(name.encode())


# ---------------------------------------------------------------------------
# variation
# ---------------------------------------------------------------------------

def _mutate_layer(layer: NetworkGenome, mu: float, sigma: float,
                  rng: np.random.Generator) -> NetworkGenome:
    n = layer.topology.n_synapses
    hit = rng.random((5, n)) < mu
    noise = rng.normal(0.0, sigma, n)
    weight = np.where(hit[0], np.clip(layer.weight + noise, -WEIGHT_LIMIT, WEIGHT_LIMIT),
                      layer.weight)
    kind = layer.kind
    if layer.topology.policy == "hybrid":
        kind = np.where(hit[1], rng.integers(0, 2, n), kind)
    sign = np.where(hit[2], np.where(rng.integers(0, 2, n) == 1, 1, -1), layer.sign)
    rule = np.where(hit[3], rng.integers(0, len(RULES), n), layer.rule)
    rate = np.where(hit[4], rng.integers(0, len(DEFAULT_RATES), n), layer.rate)
    return NetworkGenome(layer.topology, kind, weight, sign, rule, rate)


def mutate_connection_layers(genome: LayeredGenome, mu: float, rng: np.random.Generator,
                             sigma: float = 0.3, add_factor: float = 5.0) -> LayeredGenome:
    """Structural mutation of the merge connections.

    Every connection is deleted with probability ``mu``; surviving strengths
    get the same Gaussian perturbation as fixed weights; then each layer
    gains one random connection with probability ``min(1, add_factor * mu)``.
    Deletion precedes addition, so with no selection the expected size
    settles at ``add_factor`` connections per layer.
    """
    if genome.connection_layers is None:
        raise ValueError("genome has no connection layers")
    new_layers = []
    for cl in genome.connection_layers:
        n = len(cl)
        # one draw per layer: deletion, perturbation, addition and the new link
        u = rng.random(2 * n + 4)
        keep = u[:n] >= mu
        src, dst, w = cl.source[keep], cl.target[keep], cl.strength[keep]
        bump = u[n:2 * n][keep] < mu
        k = int(bump.sum())
        if k:
            w[bump] = np.clip(w[bump] + rng.normal(0.0, sigma, k), -WEIGHT_LIMIT, WEIGHT_LIMIT)
        if u[2 * n] < add_factor * mu:
            upper = genome.layers[cl.lower + 1].topology
            lower = genome.layers[cl.lower].topology
            a, b, c = u[2 * n + 1:]
            src = np.concatenate((src, [int(a * upper.n_active)]))
            dst = np.concatenate((dst, [int(b * lower.n_active)]))
            w = np.concatenate((w, [WEIGHT_LIMIT * (2.0 * c - 1.0)]))
        new_layers.append(ConnectionLayer(cl.lower, src, dst, w))
    return replace(genome, connection_layers=tuple(new_layers))


def mutate(genome: LayeredGenome, config: EvolutionConfig,
           rng: np.random.Generator) -> LayeredGenome:
    """Per-gene mutation of every non-frozen layer (plus merge connections)."""
    mu = config.mutation_rate
    layers = tuple(
        layer if i < genome.frozen_prefix else _mutate_layer(layer, mu, config.sigma, rng)
        for i, layer in enumerate(genome.layers))
    out = replace(genome, layers=layers)
    if out.connection_layers is not None:
        out = mutate_connection_layers(out, mu, rng, config.sigma,
                                       config.connection_add_factor)
    return out


def extend_and_freeze(genomes: Sequence[LayeredGenome], topology: LayerTopology,
                      rngs: Sequence[np.random.Generator]) -> list[LayeredGenome]:
    """Freeze the current (shared) stack and give every member a fresh top layer."""
    first = genomes[0]
    for g in genomes[1:]:
        if len(g.layers) != len(first.layers) or any(
                g.layer_bytes(i) != first.layer_bytes(i) for i in range(len(g.layers))):
            raise ValueError("extend_and_freeze needs identical lower layers across the population")
    k = len(first.layers)
    out = []
    for g, rng in zip(genomes, rngs):
        conns = None
        if g.connection_layers is not None:
            conns = g.connection_layers + (ConnectionLayer(k - 1),)
        out.append(LayeredGenome(g.layers + (NetworkGenome.random(topology, rng),), conns, k))
    return out


# ---------------------------------------------------------------------------
# evaluation and selection
# ---------------------------------------------------------------------------

def evaluate(individual: Individual, task: TaskSpec, trial_seeds: Sequence,
             config: Optional[EvolutionConfig] = None, worlds: Optional[Sequence] = None
             ) -> Individual:
    """Score an individual as the lowest of its trial scores (maximised)."""
    cfg = config or EvolutionConfig()
    bp = compile_genome(individual.genome)
    scores = []
    try:
        for t, seed in enumerate(trial_seeds):
            world = worlds[t] if worlds is not None else None
            scores.append(simulate(bp, task, seed, cfg.world, world=world).score)
    except WorldConfigError as exc:
        raise EvaluationError(str(exc)) from exc
    return replace(individual, fitness=min(scores), trial_scores=tuple(scores))


def rank(population: Sequence[Individual]) -> list[Individual]:
    """Best first; ties keep their prior order."""
    if any(ind.fitness is None for ind in population):
        raise ValueError("population must be evaluated before ranking")
    order = sorted(range(len(population)), key=lambda i: -population[i].fitness)
    return [population[i] for i in order]


def select(ranked: Sequence[Individual]) -> list[Individual]:
    """Overwrite the worse half with clones of the better half, in rank order."""
    keep = len(ranked) - len(ranked) // 2
    survivors = list(ranked[:keep])
    return survivors + survivors[: len(ranked) - keep]


def next_generation(population: Sequence[Individual], config: EvolutionConfig,
                    rng_for: Callable[[int], np.random.Generator]) -> list[Individual]:
    """Rank, truncate, clone and mutate; ``rng_for(rank)`` supplies mutation streams."""
    cloned = select(rank(population))
    out = []
    for i, ind in enumerate(cloned):
        genome = ind.genome if i < config.elites else mutate(ind.genome, config, rng_for(i))
        out.append(Individual(genome))
    return out


def _mean_connections(population: Sequence[Individual]) -> float:
    sizes = [len(cl) for ind in population for cl in (ind.genome.connection_layers or ())]
    return float(np.mean(sizes)) if sizes else float("nan")


def run_evolution(population: Sequence, schedule: Sequence[tuple[TaskSpec, int]],
                  config: EvolutionConfig, run_key: Sequence[int] = (0,),
                  progress: Optional[Callable[[GenerationStats], None]] = None,
                  observer: Optional[Callable[[int, list[Individual]], None]] = None
                  ) -> EvolutionResult:
    """Evolve ``population`` through the task schedule.

    The task switches at segment boundaries with the population carried
    over. The final generation is evaluated but not replaced, so the
    returned population holds that generation's scores. ``observer`` sees
    every evaluated generation before selection.
    """
    pop = [p if isinstance(p, Individual) else Individual(p) for p in population]
    if len(pop) != config.population:
        raise ValueError(f"population must hold {config.population} individuals")
    tasks = [task for task, n in schedule for _ in range(n)]
    boundaries = set(np.cumsum([n for _, n in schedule]) - 1)
    history: list[GenerationStats] = []
    champions: dict[int, LayeredGenome] = {}
    key = tuple(run_key)

    executor = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        for gen, task in enumerate(tasks):
            if config.common_trials:
                seeds = [stream(config.seed, *key, gen, PURPOSE_TRIAL, t)
                         for t in range(config.trials)]
                try:
                    worlds = [make_trial_world(task, s, config.world) for s in seeds]
                except WorldConfigError as exc:
                    raise EvaluationError(str(exc)) from exc
                jobs = [(ind, seeds, worlds) for ind in pop]
            else:
                jobs = [(ind, [stream(config.seed, *key, gen, PURPOSE_TRIAL, t, i)
                               for t in range(config.trials)], None)
                        for i, ind in enumerate(pop)]

            def job(args):
                ind, seeds, worlds = args
                return evaluate(ind, task, seeds, config, worlds)

            pop = list(executor.map(job, jobs)) if executor else [job(j) for j in jobs]
            fits = np.array([ind.fitness for ind in pop])
            stats = GenerationStats(gen, float(fits.max()), float(fits.mean()), task.label,
                                    _mean_connections(pop))
            history.append(stats)
            if progress:
                progress(stats)
            if observer:
                observer(gen, pop)
            if gen in boundaries:
                champions[gen] = rank(pop)[0].genome
            if gen + 1 < len(tasks):
                pop = next_generation(
                    pop, config,
                    lambda i, g=gen: np.random.default_rng(
                        stream(config.seed, *key, g, PURPOSE_MUTATE, i)))
    finally:
        if executor:
            executor.shutdown()
    return EvolutionResult(history, pop, champions)


def champion(population: Sequence[Individual]) -> Individual:
    return rank(population)[0]
