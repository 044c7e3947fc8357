"""Direct-encoded tanh feedforward layers and their subsumption composition.

A :class:`LayeredGenome` is an immutable stack of per-layer genomes, bottom
layer first. Decoding flattens the whole stack (plus any merge connections)
into one neuron array with CSR-ordered synapses so that a controller step is
a single compiled call.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from numba import njit

FIXED, PLASTIC = 0, 1
KINDS = ("fixed", "plastic")
RULES = ("hebb", "postsynaptic", "presynaptic", "covariance")
DEFAULT_RATES = (0.0, 0.3, 0.6, 0.9)
POLICIES = ("fixed", "plastic", "hybrid")
WEIGHT_LIMIT = 2.0

# Sensor slots shared by every layer's input wiring.
(S_LIGHT0, S_LIGHT1, S_OBS_LEFT, S_OBS_CENTER, S_OBS_RIGHT,
 S_CONTACT0, S_CONTACT1, S_FEEDBACK, S_CONDITIONAL, S_ONE) = range(10)
N_SLOTS = 10

ROLE_MONOLITHIC, ROLE_PHOTOTAXIS, ROLE_AVOIDANCE, ROLE_LEARNING = range(4)
ROLES = ("monolithic", "phototaxis", "avoidance", "learning")

INPUT_WIRING = {
    "monolithic": (S_LIGHT0, S_LIGHT1, S_OBS_LEFT, S_OBS_CENTER, S_OBS_RIGHT,
                   S_CONTACT0, S_CONTACT1, S_CONDITIONAL, S_ONE),
    "phototaxis": (S_LIGHT0, S_LIGHT1, S_CONDITIONAL, S_ONE),
    "avoidance": (S_OBS_LEFT, S_OBS_CENTER, S_OBS_RIGHT, S_ONE),
    "learning": (S_FEEDBACK, S_CONTACT0, S_CONTACT1, S_ONE),
}

# tanh(18) is still below 1.0 in double precision
PRE_ACTIVATION_LIMIT = 18.0


class GenomeError(ValueError):
    """A genome that does not decode against the registered architectures."""


@dataclass(frozen=True)
class SynapseGene:
    kind: str
    fixed_weight: float
    sign: int
    rule: str
    rate: int

    def __post_init__(self):
        if self.kind not in KINDS or self.rule not in RULES:
            raise GenomeError(f"bad synapse gene {self}")
        if self.sign not in (-1, 1) or not 0 <= self.rate < len(DEFAULT_RATES):
            raise GenomeError(f"bad synapse gene {self}")
        object.__setattr__(self, "fixed_weight",
                           float(min(max(self.fixed_weight, -WEIGHT_LIMIT), WEIGHT_LIMIT)))


@dataclass(frozen=True)
class LayerTopology:
    role: str
    n_inputs: int
    n_hidden: int
    n_outputs: int
    policy: str = "fixed"

    def __post_init__(self):
        if self.role not in ROLES:
            raise GenomeError(f"unknown layer role {self.role!r}")
        if self.policy not in POLICIES:
            raise GenomeError(f"unknown synapse policy {self.policy!r}")
        if self.n_inputs != len(INPUT_WIRING[self.role]):
            raise GenomeError(f"{self.role} layer takes {len(INPUT_WIRING[self.role])} inputs")
        if self.n_hidden < 0 or self.n_outputs < 1:
            raise GenomeError("layer needs at least one output")

    @property
    def n_synapses(self) -> int:
        if self.n_hidden == 0:
            return self.n_inputs * self.n_outputs
        return self.n_inputs * self.n_hidden + self.n_hidden * self.n_outputs

    @property
    def n_active(self) -> int:
        """Hidden plus output neurons, i.e. everything that integrates input."""
        return self.n_hidden + self.n_outputs

    @property
    def n_neurons(self) -> int:
        return self.n_inputs + self.n_active

    def endpoints(self) -> np.ndarray:
        """(pre, post) neuron indices per synapse, in genome order."""
        n_in, n_hid, n_out = self.n_inputs, self.n_hidden, self.n_outputs
        if n_hid == 0:
            pairs = [(i, n_in + k) for i in range(n_in) for k in range(n_out)]
        else:
            pairs = [(i, n_in + j) for i in range(n_in) for j in range(n_hid)]
            pairs += [(n_in + j, n_in + n_hid + k) for j in range(n_hid) for k in range(n_out)]
        return np.array(pairs, dtype=np.int64).reshape(-1, 2)


MONOLITHIC = LayerTopology("monolithic", 9, 6, 2, "hybrid")
PHOTOTAXIS = LayerTopology("phototaxis", 4, 3, 2, "fixed")
AVOIDANCE = LayerTopology("avoidance", 4, 0, 3, "fixed")
LEARNING = LayerTopology("learning", 4, 2, 1, "plastic")
TOPOLOGIES = {t.role: t for t in (MONOLITHIC, PHOTOTAXIS, AVOIDANCE, LEARNING)}


def _frozen_array(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class NetworkGenome:
    """One layer's genome, stored column-wise (one array per gene field)."""
    topology: LayerTopology
    kind: np.ndarray
    weight: np.ndarray
    sign: np.ndarray
    rule: np.ndarray
    rate: np.ndarray

    def __post_init__(self):
        n = self.topology.n_synapses
        for name, dtype in (("kind", np.int8), ("weight", np.float64), ("sign", np.int8),
                            ("rule", np.int8), ("rate", np.int8)):
            arr = _frozen_array(getattr(self, name), dtype)
            if arr.shape != (n,):
                raise GenomeError(f"{name}: expected {n} genes, got shape {arr.shape}")
            object.__setattr__(self, name, arr)
        if np.any(np.abs(self.weight) > WEIGHT_LIMIT) or not np.all(np.isfinite(self.weight)):
            raise GenomeError("fixed weights must lie in [-2, 2]")
        if (np.any((self.kind != FIXED) & (self.kind != PLASTIC))
                or np.any((self.sign != 1) & (self.sign != -1))
                or np.any((self.rule < 0) | (self.rule >= len(RULES)))
                or np.any((self.rate < 0) | (self.rate >= len(DEFAULT_RATES)))):
            raise GenomeError("discrete gene out of range")
        policy = self.topology.policy
        if policy == "fixed" and np.any(self.kind != FIXED):
            raise GenomeError("all-fixed layer carries plastic synapses")
        if policy == "plastic" and np.any(self.kind != PLASTIC):
            raise GenomeError("all-plastic layer carries fixed synapses")

    @classmethod
    def random(cls, topology: LayerTopology, rng: np.random.Generator) -> "NetworkGenome":
        n = topology.n_synapses
        weight = rng.uniform(-WEIGHT_LIMIT, WEIGHT_LIMIT, n)
        if topology.policy == "hybrid":
            kind = rng.integers(0, 2, n)
        else:
            kind = np.full(n, PLASTIC if topology.policy == "plastic" else FIXED)
        sign = np.where(rng.integers(0, 2, n) == 1, 1, -1)
        rule = rng.integers(0, len(RULES), n)
        rate = rng.integers(0, len(DEFAULT_RATES), n)
        return cls(topology, kind, weight, sign, rule, rate)

    @classmethod
    def from_genes(cls, topology: LayerTopology, genes: Sequence[SynapseGene]) -> "NetworkGenome":
        return cls(topology,
                   [KINDS.index(g.kind) for g in genes],
                   [g.fixed_weight for g in genes],
                   [g.sign for g in genes],
                   [RULES.index(g.rule) for g in genes],
                   [g.rate for g in genes])

    @property
    def genes(self) -> list[SynapseGene]:
        return [SynapseGene(KINDS[k], float(w), int(s), RULES[r], int(q))
                for k, w, s, r, q in zip(self.kind, self.weight, self.sign, self.rule, self.rate)]

    def to_bytes(self) -> bytes:
        t = self.topology
        head = f"{t.role}:{t.n_inputs}:{t.n_hidden}:{t.n_outputs}:{t.policy}|".encode()
        return head + b"".join(a.tobytes() for a in
                               (self.kind, self.weight, self.sign, self.rule, self.rate))

    def __eq__(self, other):
        return isinstance(other, NetworkGenome) and self.to_bytes() == other.to_bytes()

    def __hash__(self):
        return hash(self.to_bytes())


@dataclass(frozen=True)
class MergeConnection:
    """Upward-to-downward link; neuron indices count hidden then output neurons."""
    source_layer: int
    source_neuron: int
    target_layer: int
    target_neuron: int
    strength: float

    def __post_init__(self):
        if self.source_layer <= self.target_layer:
            raise GenomeError("merge connections must run from a higher to a lower layer")


@dataclass(frozen=True, eq=False)
class ConnectionLayer:
    """Merge connections from layer ``lower + 1`` down into layer ``lower``."""
    lower: int
    source: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    target: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    strength: np.ndarray = field(default_factory=lambda: np.zeros(0, np.float64))

    def __post_init__(self):
        for name, dtype in (("source", np.int64), ("target", np.int64), ("strength", np.float64)):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), dtype).reshape(-1))
        if not (self.source.shape == self.target.shape == self.strength.shape):
            raise GenomeError("ragged connection layer")
        if self.strength.size and np.abs(self.strength).max() > WEIGHT_LIMIT:
            raise GenomeError("merge strengths must lie in [-2, 2]")

    def __len__(self) -> int:
        return int(self.source.shape[0])

    @property
    def connections(self) -> list[MergeConnection]:
        return [MergeConnection(self.lower + 1, int(s), self.lower, int(t), float(w))
                for s, t, w in zip(self.source, self.target, self.strength)]

    def to_bytes(self) -> bytes:
        return (str(self.lower).encode() + b"|" + self.source.tobytes()
                + self.target.tobytes() + self.strength.tobytes())

    def __eq__(self, other):
        return isinstance(other, ConnectionLayer) and self.to_bytes() == other.to_bytes()


@dataclass(frozen=True)
class LayeredGenome:
    layers: tuple[NetworkGenome, ...]
    connection_layers: Optional[tuple[ConnectionLayer, ...]] = None
    frozen_prefix: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.connection_layers is not None:
            object.__setattr__(self, "connection_layers", tuple(self.connection_layers))
        roles = tuple(l.topology.role for l in self.layers)
        if not roles:
            raise GenomeError("genome has no layers")
        if "monolithic" in roles:
            if roles != ("monolithic",):
                raise GenomeError("a monolithic network cannot be stacked")
        elif roles != ("phototaxis", "avoidance", "learning")[:len(roles)]:
            raise GenomeError(f"layers must stack phototaxis/avoidance/learning, got {roles}")
        if not 0 <= self.frozen_prefix <= len(self.layers):
            raise GenomeError("frozen_prefix exceeds layer count")
        if self.connection_layers is not None:
            if len(self.connection_layers) != len(self.layers) - 1:
                raise GenomeError("need one connection layer per adjacent layer pair")
            for k, cl in enumerate(self.connection_layers):
                if cl.lower != k:
                    raise GenomeError("connection layers out of order")
                if len(cl) and (cl.source.min() < 0
                                or cl.source.max() >= self.layers[k + 1].topology.n_active
                                or cl.target.min() < 0
                                or cl.target.max() >= self.layers[k].topology.n_active):
                    raise GenomeError("merge connection endpoint out of range")

    @property
    def roles(self) -> tuple[str, ...]:
        return tuple(l.topology.role for l in self.layers)

    @property
    def is_monolithic(self) -> bool:
        return self.roles == ("monolithic",)

    def layer_bytes(self, index: int) -> bytes:
        return self.layers[index].to_bytes()

    def to_bytes(self) -> bytes:
        parts = [l.to_bytes() for l in self.layers]
        if self.connection_layers is not None:
            parts += [c.to_bytes() for c in self.connection_layers]
        return f"{self.frozen_prefix}#".encode() + b"##".join(parts)

    def truncated(self, n_layers: int) -> "LayeredGenome":
        """The bottom ``n_layers`` layers on their own (merge connections dropped)."""
        return LayeredGenome(self.layers[:n_layers], None,
                             min(self.frozen_prefix, n_layers))


def random_genome(roles: Iterable[str], rng: np.random.Generator,
                  connection_layers: bool = False) -> LayeredGenome:
    layers = tuple(NetworkGenome.random(TOPOLOGIES[r], rng) for r in roles)
    conns = None
    if connection_layers:
        conns = tuple(ConnectionLayer(k) for k in range(len(layers) - 1))
    return LayeredGenome(layers, conns)


# ---------------------------------------------------------------------------
# phenotype
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Blueprint:
    """Static, genome-derived arrays; instantiate once per trial."""
    n_layers: int
    lay_off: np.ndarray
    lay_nin: np.ndarray
    lay_nact: np.ndarray
    lay_out: np.ndarray
    lay_role: np.ndarray
    in_src: np.ndarray
    ptr: np.ndarray
    pre: np.ndarray
    post: np.ndarray
    w_fixed: np.ndarray
    plastic_idx: np.ndarray
    sign: np.ndarray
    rule: np.ndarray
    eta: np.ndarray
    n_neurons: int

    @property
    def has_learning_layer(self) -> bool:
        return bool(np.any(self.lay_role == ROLE_LEARNING))

    @property
    def is_monolithic(self) -> bool:
        return int(self.lay_role[0]) == ROLE_MONOLITHIC

    def instantiate(self, rng: Optional[np.random.Generator] = None) -> "ControllerState":
        w = self.w_fixed.copy()
        m = np.zeros_like(w)
        n_plastic = self.plastic_idx.shape[0]
        if n_plastic:
            if rng is None:
                raise GenomeError("plastic synapses need an rng for their initial magnitudes")
            m[self.plastic_idx] = rng.uniform(0.0, 0.1, n_plastic)
            w[self.plastic_idx] = 2.0 * self.sign[self.plastic_idx] * m[self.plastic_idx]
        return ControllerState(self, w, m, np.zeros(self.n_neurons), np.zeros(N_SLOTS))


def compile_genome(genome: LayeredGenome, rates: Sequence[float] = DEFAULT_RATES) -> Blueprint:
    layers = genome.layers
    tops = [l.topology for l in layers]
    offsets = np.cumsum([0] + [t.n_neurons for t in tops])
    n_neurons = int(offsets[-1])
    in_src = np.full(n_neurons, -1, dtype=np.int64)
    for t, off in zip(tops, offsets):
        in_src[off:off + t.n_inputs] = INPUT_WIRING[t.role]

    pre, post, w_fixed, plastic, sign, rule, eta = [], [], [], [], [], [], []
    rate_values = np.asarray(rates, dtype=np.float64)
    for g, off in zip(layers, offsets):
        ends = g.topology.endpoints() + off
        pre.append(ends[:, 0])
        post.append(ends[:, 1])
        w_fixed.append(np.where(g.kind == FIXED, g.weight, 0.0))
        plastic.append(g.kind == PLASTIC)
        sign.append(g.sign.astype(np.float64))
        rule.append(g.rule.astype(np.int64))
        eta.append(rate_values[g.rate])
    for cl in genome.connection_layers or ():
        n = len(cl)
        lo, hi = tops[cl.lower], tops[cl.lower + 1]
        pre.append(cl.source + offsets[cl.lower + 1] + hi.n_inputs)
        post.append(cl.target + offsets[cl.lower] + lo.n_inputs)
        w_fixed.append(cl.strength.copy())
        plastic.append(np.zeros(n, dtype=bool))
        sign.append(np.ones(n))
        rule.append(np.zeros(n, dtype=np.int64))
        eta.append(np.zeros(n))

    cat = np.concatenate
    pre, post = cat(pre).astype(np.int64), cat(post).astype(np.int64)
    order = np.argsort(post, kind="stable")
    pre, post = pre[order], post[order]
    w_fixed = cat(w_fixed).astype(np.float64)[order]
    plastic = cat(plastic)[order]
    ptr = np.zeros(n_neurons + 1, dtype=np.int64)
    np.add.at(ptr, post + 1, 1)
    ptr = np.cumsum(ptr)
    return Blueprint(
        n_layers=len(layers),
        lay_off=offsets[:-1].astype(np.int64),
        lay_nin=np.array([t.n_inputs for t in tops], dtype=np.int64),
        lay_nact=np.array([t.n_active for t in tops], dtype=np.int64),
        lay_out=np.array([o + t.n_inputs + t.n_hidden for t, o in zip(tops, offsets)],
                         dtype=np.int64),
        lay_role=np.array([ROLES.index(t.role) for t in tops], dtype=np.int64),
        in_src=in_src, ptr=ptr, pre=pre, post=post, w_fixed=w_fixed,
        plastic_idx=np.flatnonzero(plastic).astype(np.int64),
        sign=cat(sign)[order], rule=cat(rule)[order], eta=cat(eta)[order],
        n_neurons=n_neurons,
    )


@dataclass
class ControllerState:
    blueprint: Blueprint
    weights: np.ndarray
    magnitudes: np.ndarray
    activations: np.ndarray
    sensors: np.ndarray

    def kernel_args(self) -> tuple:
        b = self.blueprint
        return (self.sensors, self.activations, b.n_layers, b.lay_off, b.lay_nin, b.lay_nact,
                b.lay_out, b.lay_role, b.in_src, b.ptr, b.pre, b.post, self.weights,
                b.plastic_idx, b.sign, b.rule, b.eta, self.magnitudes)

    def layer_activations(self, layer: int) -> np.ndarray:
        b = self.blueprint
        off = b.lay_off[layer]
        return self.activations[off:off + b.lay_nin[layer] + b.lay_nact[layer]]

    def layer_outputs(self, layer: int) -> np.ndarray:
        b = self.blueprint
        end = b.lay_off[layer] + b.lay_nin[layer] + b.lay_nact[layer]
        return self.activations[b.lay_out[layer]:end].copy()

    def plastic_magnitudes(self) -> np.ndarray:
        return self.magnitudes[self.blueprint.plastic_idx].copy()


def decode(genome: LayeredGenome, rng: Optional[np.random.Generator] = None,
           rates: Sequence[float] = DEFAULT_RATES) -> ControllerState:
    """Build a runnable controller; plastic magnitudes start uniform in [0, 0.1]."""
    if not isinstance(genome, LayeredGenome):
        raise GenomeError("decode expects a LayeredGenome")
    return compile_genome(genome, rates).instantiate(rng)


# ---------------------------------------------------------------------------
# compiled runtime
# ---------------------------------------------------------------------------

@njit(cache=True)
def _load_inputs(layer, act, sensors, lay_off, lay_nin, in_src):
    off = lay_off[layer]
    for i in range(off, off + lay_nin[layer]):
        act[i] = sensors[in_src[i]]


@njit(cache=True)
def _propagate(layer, act, lay_off, lay_nin, lay_nact, ptr, pre, w):
    start = lay_off[layer] + lay_nin[layer]
    for n in range(start, start + lay_nact[layer]):
        acc = 0.0
        for s in range(ptr[n], ptr[n + 1]):
            acc += w[s] * act[pre[s]]
        if acc > PRE_ACTIVATION_LIMIT:
            acc = PRE_ACTIVATION_LIMIT
        elif acc < -PRE_ACTIVATION_LIMIT:
            acc = -PRE_ACTIVATION_LIMIT
        act[n] = math.tanh(acc)


@njit(cache=True)
def _plasticity(act, pre, post, w, plastic_idx, sign, rule, eta, m):
    for k in range(plastic_idx.shape[0]):
        s = plastic_idx[k]
        rate = eta[s]
        if rate == 0.0:
            continue
        x = act[pre[s]]
        y = act[post[s]]
        mm = m[s]
        r = rule[s]
        if r == 0:
            dw = (1.0 - mm) * x * y
        elif r == 1:
            dw = mm * (-1.0 + x) * y + (1.0 - mm) * x * y
        elif r == 2:
            dw = mm * x * (-1.0 + y) + (1.0 - mm) * x * y
        else:
            f = math.tanh(4.0 * (1.0 - abs(x - y)) - 2.0)
            dw = (1.0 - mm) * f if f > 0.0 else mm * f
        mm += rate * dw
        if mm < 0.0:
            mm = 0.0
        elif mm > 1.0:
            mm = 1.0
        m[s] = mm
        w[s] = 2.0 * sign[s] * mm


@njit(cache=True)
def _arbitrate(l1_left, l1_right, l2_left, l2_right, gate):
    if gate > 0.5:
        return l2_left, l2_right
    return l1_left, l1_right


@njit(cache=True)
def _controller_step(sensors, act, n_layers, lay_off, lay_nin, lay_nact, lay_out, lay_role,
                     in_src, ptr, pre, post, w, plastic_idx, sign, rule, eta, m):
    for layer in range(n_layers - 1, -1, -1):
        _load_inputs(layer, act, sensors, lay_off, lay_nin, in_src)
        _propagate(layer, act, lay_off, lay_nin, lay_nact, ptr, pre, w)
        if lay_role[layer] == ROLE_LEARNING:
            sensors[S_CONDITIONAL] = act[lay_out[layer]]
    _plasticity(act, pre, post, w, plastic_idx, sign, rule, eta, m)
    o1 = lay_out[0]
    if n_layers >= 2:
        o2 = lay_out[1]
        return _arbitrate(act[o1], act[o1 + 1], act[o2], act[o2 + 1], act[o2 + 2])
    return act[o1], act[o1 + 1]


def activate(state: ControllerState, inputs: Sequence[float], layer: int = 0) -> np.ndarray:
    """Forward one layer on explicit inputs (the constant slot is forced to 1)."""
    b = state.blueprint
    x = np.asarray(inputs, dtype=np.float64)
    if x.shape != (int(b.lay_nin[layer]),):
        raise ValueError(f"layer {layer} expects {int(b.lay_nin[layer])} inputs, got {x.shape}")
    off = int(b.lay_off[layer])
    state.activations[off:off + x.shape[0]] = x
    state.activations[off + x.shape[0] - 1] = 1.0
    _propagate(layer, state.activations, b.lay_off, b.lay_nin, b.lay_nact, b.ptr, b.pre,
               state.weights)
    return state.layer_outputs(layer)


def apply_plasticity(state: ControllerState) -> ControllerState:
    b = state.blueprint
    _plasticity(state.activations, b.pre, b.post, state.weights, b.plastic_idx,
                b.sign, b.rule, b.eta, state.magnitudes)
    return state


def arbitrate(layer1_out: Sequence[float], layer2_out: Sequence[float]) -> tuple[float, float]:
    """Layer 2 takes the wheels only when its gate output exceeds 0.5."""
    return _arbitrate(float(layer1_out[0]), float(layer1_out[1]),
                      float(layer2_out[0]), float(layer2_out[1]), float(layer2_out[2]))


def load_sensors(sensors: np.ndarray, frame, conditional: float) -> None:
    sensors[S_LIGHT0], sensors[S_LIGHT1] = frame.light
    sensors[S_OBS_LEFT], sensors[S_OBS_CENTER], sensors[S_OBS_RIGHT] = frame.obstacle
    sensors[S_CONTACT0], sensors[S_CONTACT1] = frame.contact
    sensors[S_FEEDBACK] = frame.feedback
    sensors[S_CONDITIONAL] = conditional
    sensors[S_ONE] = 1.0


def controller_step(state: ControllerState, frame,
                    external_conditional: Optional[float] = None) -> tuple[float, float]:
    """One sense-to-wheels update, plasticity included.

    Layer 3, when present, drives layer 1's conditional input. A monolithic
    network reads the feedback signal on its overloaded channel unless an
    external conditional is supplied.
    """
    b = state.blueprint
    if b.has_learning_layer:
        cond = 0.0
    elif b.is_monolithic:
        cond = frame.feedback if external_conditional is None else external_conditional
    elif external_conditional is None:
        raise ValueError("controller without a learning layer needs an external conditional")
    else:
        cond = external_conditional
    load_sensors(state.sensors, frame, float(cond))
    left, right = _controller_step(*state.kernel_args())
    return float(left), float(right)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def genome_to_dict(genome: LayeredGenome) -> dict:
    layers = []
    for g in genome.layers:
        t = g.topology
        layers.append({
            "topology": {"role": t.role, "n_inputs": t.n_inputs, "n_hidden": t.n_hidden,
                         "n_outputs": t.n_outputs, "policy": t.policy},
            "genes": [{"kind": s.kind, "fixed_weight": s.fixed_weight, "sign": s.sign,
                       "rule": s.rule, "rate": s.rate} for s in g.genes],
        })
    conns = None
    if genome.connection_layers is not None:
        conns = [[{"source_layer": c.source_layer, "source_neuron": c.source_neuron,
                   "target_layer": c.target_layer, "target_neuron": c.target_neuron,
                   "strength": c.strength} for c in cl.connections]
                 for cl in genome.connection_layers]
    return {"frozen_prefix": genome.frozen_prefix, "layers": layers, "connection_layers": conns}


def genome_from_dict(data: dict) -> LayeredGenome:
    try:
        layers = tuple(
            NetworkGenome.from_genes(LayerTopology(**l["topology"]),
                                     [SynapseGene(**g) for g in l["genes"]])
            for l in data["layers"])
        conns = None
        if data.get("connection_layers") is not None:
            conns = []
            for k, cl in enumerate(data["connection_layers"]):
                for c in cl:
                    if c["source_layer"] != k + 1 or c["target_layer"] != k:
                        raise GenomeError("merge connection filed under the wrong layer pair")
                conns.append(ConnectionLayer(k, [c["source_neuron"] for c in cl],
                                             [c["target_neuron"] for c in cl],
                                             [c["strength"] for c in cl]))
        return LayeredGenome(layers, conns, int(data.get("frozen_prefix", 0)))
    except (KeyError, TypeError) as exc:
        raise GenomeError(f"malformed genome document: {exc}") from exc


def save_genome(genome: LayeredGenome, path) -> None:
    Path(path).write_text(json.dumps(genome_to_dict(genome), indent=1) + "\n")


def load_genome(path) -> LayeredGenome:
    return genome_from_dict(json.loads(Path(path).read_text()))
