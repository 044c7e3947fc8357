"""Layered evolution of subsumption-style neural controllers for a simulated robot."""
from .evolution import EvolutionConfig, Individual, run_evolution
from .experiments import REGISTRY, cross_test, run_experiment
from .network import LayeredGenome, compile_genome, load_genome, random_genome, save_genome
from .tasks import TaskSpec, simulate
from .world import WorldConfig, generate_world

__all__ = ["EvolutionConfig", "Individual", "run_evolution", "REGISTRY", "cross_test",
           "run_experiment", "LayeredGenome", "compile_genome", "load_genome", "random_genome",
           "save_genome", "TaskSpec", "simulate", "WorldConfig", "generate_world"]
__version__ = "0.1.0"
