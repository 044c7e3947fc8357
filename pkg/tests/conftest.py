import numpy as np
import pytest

from layered_evolution.network import LayeredGenome, NetworkGenome, TOPOLOGIES, random_genome
from layered_evolution.world import WorldConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def world_config():
    return WorldConfig()


def zero_layer(role: str) -> NetworkGenome:
    t = TOPOLOGIES[role]
    n = t.n_synapses
    kind = np.ones(n) if t.policy == "plastic" else np.zeros(n)
    return NetworkGenome(t, kind, np.zeros(n), np.ones(n), np.zeros(n), np.zeros(n))


def zero_genome(*roles: str) -> LayeredGenome:
    return LayeredGenome(tuple(zero_layer(r) for r in roles))


def stack(rng, *roles, connections=False):
    return random_genome(roles, rng, connection_layers=connections)


def pytest_terminal_summary(terminalreporter):
    lines = sorted({value for reports in terminalreporter.stats.values() for r in reports
                   for key, value in getattr(r, "user_properties", ()) if key == "criterion"})
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
