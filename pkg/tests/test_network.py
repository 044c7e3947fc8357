import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from layered_evolution.network import (
    AVOIDANCE, FIXED, LEARNING, MONOLITHIC, PHOTOTAXIS, PLASTIC, RULES, S_CONDITIONAL,
    ConnectionLayer, GenomeError, LayeredGenome, LayerTopology, NetworkGenome, SynapseGene,
    activate, apply_plasticity, arbitrate, compile_genome, controller_step, decode,
    genome_from_dict, genome_to_dict, load_genome, random_genome, save_genome,
)
from layered_evolution.world import SensorFrame

from conftest import zero_genome, zero_layer


def frame_strategy():
    unit = st.floats(0.0, 1.0)
    return st.builds(
        lambda l0, l1, a, b, c, touch, good: SensorFrame(
            (l0, l1), (a, b, c),
            (0, 0) if touch is None else tuple(int(i == touch) for i in range(2)),
            0 if touch is None else (1 if good else -1)),
        unit, unit, unit, unit, unit, st.sampled_from([None, 0, 1]), st.booleans())


def random_frames(rng, n):
    out = []
    for _ in range(n):
        touch = rng.integers(-1, 2)
        contact = (0, 0) if touch < 0 else tuple(int(i == touch) for i in range(2))
        fb = 0 if touch < 0 else int(rng.choice([-1, 1]))
        out.append(SensorFrame(tuple(rng.random(2)), tuple(rng.random(3)), contact, fb))
    return out


# --- genes and topology ---------------------------------------------------------

def test_synapse_gene_clamps_weight():
    assert SynapseGene("fixed", 3.5, 1, "hebb", 0).fixed_weight == 2.0
    assert SynapseGene("fixed", -9.0, 1, "hebb", 0).fixed_weight == -2.0
    with pytest.raises(GenomeError):
        SynapseGene("fixed", 0.0, 0, "hebb", 0)
    with pytest.raises(GenomeError):
        SynapseGene("fixed", 0.0, 1, "hebb", 4)


@pytest.mark.parametrize("top, count", [(MONOLITHIC, 9 * 6 + 6 * 2), (PHOTOTAXIS, 4 * 3 + 3 * 2),
                                        (AVOIDANCE, 4 * 3), (LEARNING, 4 * 2 + 2 * 1)])
def test_synapse_counts(top, count):
    assert top.n_synapses == count
    assert len(top.endpoints()) == count


def test_genome_checks_gene_count_and_policy():
    with pytest.raises(GenomeError):
        NetworkGenome(PHOTOTAXIS, np.zeros(3), np.zeros(3), np.ones(3), np.zeros(3), np.zeros(3))
    n = PHOTOTAXIS.n_synapses
    with pytest.raises(GenomeError):
        NetworkGenome(PHOTOTAXIS, np.ones(n), np.zeros(n), np.ones(n), np.zeros(n), np.zeros(n))


def test_stack_order_is_enforced(rng):
    with pytest.raises(GenomeError):
        LayeredGenome((NetworkGenome.random(AVOIDANCE, rng),))
    with pytest.raises(GenomeError):
        LayeredGenome((NetworkGenome.random(MONOLITHIC, rng), NetworkGenome.random(AVOIDANCE, rng)))


# --- decode -----------------------------------------------------------------------

def test_all_fixed_decode_ignores_rng(rng):
    g = random_genome(("phototaxis", "avoidance"), rng)
    a = decode(g, np.random.default_rng(1))
    b = decode(g, np.random.default_rng(2))
    assert a.weights.tobytes() == b.weights.tobytes()
    assert a.plastic_magnitudes().size == 0


def test_plastic_decode_is_deterministic_and_small(rng):
    g = random_genome(("phototaxis", "avoidance", "learning"), rng)
    a = decode(g, np.random.default_rng(5))
    b = decode(g, np.random.default_rng(5))
    assert a.magnitudes.tobytes() == b.magnitudes.tobytes()
    m = a.plastic_magnitudes()
    assert m.size == LEARNING.n_synapses
    assert np.all((m >= 0) & (m <= 0.1))
    bp = a.blueprint
    w = a.weights[bp.plastic_idx]
    assert np.allclose(w, 2 * bp.sign[bp.plastic_idx] * m)
    assert np.all(a.activations == 0)


def test_hybrid_decode_marks_only_plastic_genes(rng):
    g = random_genome(("monolithic",), rng)
    state = decode(g, np.random.default_rng(0))
    assert state.plastic_magnitudes().size == int(np.sum(g.layers[0].kind == PLASTIC))
    assert 0 < state.plastic_magnitudes().size < MONOLITHIC.n_synapses


def test_decode_rejects_non_genome():
    with pytest.raises(GenomeError):
        decode({"layers": []})


# --- forward pass --------------------------------------------------------------------

def forward_oracle(topology: LayerTopology, weights_by_pair: dict, inputs):
    """Plain dense forward pass built from (pre, post) -> weight."""
    n_in, n_hid, n_out = topology.n_inputs, topology.n_hidden, topology.n_outputs
    x = np.array(inputs, dtype=float)
    x[-1] = 1.0
    if n_hid == 0:
        W = np.zeros((n_in, n_out))
        for (i, k), w in weights_by_pair.items():
            W[i, k - n_in] = w
        return np.tanh(x @ W)
    W1 = np.zeros((n_in, n_hid))
    W2 = np.zeros((n_hid, n_out))
    for (i, j), w in weights_by_pair.items():
        if j < n_in + n_hid:
            W1[i, j - n_in] = w
        else:
            W2[i - n_in, j - n_in - n_hid] = w
    return np.tanh(np.tanh(x @ W1) @ W2)


def test_zero_weights_give_zero_outputs():
    state = decode(zero_genome("phototaxis"))
    assert np.all(activate(state, [0.3, 0.9, 1.0, 1.0]) == 0.0)


def test_single_synapse_closed_form():
    n = AVOIDANCE.n_synapses
    w = np.zeros(n)
    # genome order for a hidden-free layer is (input, output) row-major; pick constant -> output 0
    w[3 * AVOIDANCE.n_outputs + 0] = 2.0
    g = LayeredGenome((zero_layer("phototaxis"),
                       NetworkGenome(AVOIDANCE, np.zeros(n), w, np.ones(n), np.zeros(n),
                                     np.zeros(n))))
    out = activate(decode(g), [0.0, 0.0, 0.0, 1.0], layer=1)
    assert out[0] == math.tanh(2.0)
    assert out[1] == 0.0 and out[2] == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_forward_pass_matches_oracle_fixed(seed):
    rng = np.random.default_rng(seed)
    layer = NetworkGenome.random(PHOTOTAXIS, rng)
    pairs = {tuple(p): w for p, w in zip(PHOTOTAXIS.endpoints(), layer.weight)}
    state = decode(LayeredGenome((layer,)))
    x = rng.uniform(-1, 1, 4)
    np.testing.assert_allclose(activate(state, x), forward_oracle(PHOTOTAXIS, pairs, x),
                               rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_forward_pass_matches_oracle_hybrid(seed):
    rng = np.random.default_rng(seed)
    g = random_genome(("monolithic",), rng)
    state = decode(g, np.random.default_rng(seed + 100))
    bp = state.blueprint
    pairs = {(int(p), int(q)): float(w) for p, q, w in zip(bp.pre, bp.post, state.weights)}
    x = rng.uniform(-1, 1, 9)
    np.testing.assert_allclose(activate(state, x), forward_oracle(MONOLITHIC, pairs, x),
                               rtol=0, atol=1e-12)


def test_activate_checks_input_length():
    with pytest.raises(ValueError):
        activate(decode(zero_genome("phototaxis")), [1.0, 2.0])


# --- plasticity ----------------------------------------------------------------------

def plastic_probe(rule: str, rate_index: int, m0: float, x: float, y: float):
    """Learning stack whose first synapse (feedback -> hidden 0) is probed."""
    n = LEARNING.n_synapses
    layer = NetworkGenome(LEARNING, np.ones(n), np.zeros(n), np.ones(n),
                          np.full(n, RULES.index(rule)), np.full(n, rate_index))
    g = LayeredGenome((zero_layer("phototaxis"), zero_layer("avoidance"), layer))
    state = decode(g, np.random.default_rng(0))
    bp = state.blueprint
    learn_off = bp.lay_off[2]
    s = int(np.flatnonzero((bp.pre == learn_off) & (bp.post == learn_off + 4))[0])
    state.magnitudes[s] = m0
    state.activations[bp.pre[s]] = x
    state.activations[bp.post[s]] = y
    apply_plasticity(state)
    return state.magnitudes[s], state.weights[s]


def covariance_oracle(m, x, y):
    f = math.tanh(4 * (1 - abs(x - y)) - 2)
    return (1 - m) * f if f > 0 else m * f


DELTA = {
    "hebb": lambda m, x, y: (1 - m) * x * y,
    "postsynaptic": lambda m, x, y: m * (-1 + x) * y + (1 - m) * x * y,
    "presynaptic": lambda m, x, y: m * x * (-1 + y) + (1 - m) * x * y,
    "covariance": covariance_oracle,
}


@pytest.mark.parametrize("rule", RULES)
@pytest.mark.parametrize("x, y, m0", [(0.7, 0.4, 0.3), (-0.5, 0.8, 0.6), (0.9, -0.9, 0.05),
                                      (0.2, 0.25, 0.9)])
def test_rule_closed_forms(rule, x, y, m0):
    eta = 0.6
    m, w = plastic_probe(rule, 2, m0, x, y)
    expected = min(max(m0 + eta * DELTA[rule](m0, x, y), 0.0), 1.0)
    assert m == pytest.approx(expected, abs=1e-15)
    assert w == pytest.approx(2 * m, abs=1e-15)


@pytest.mark.parametrize("rule", RULES)
def test_zero_rate_freezes_state(rule):
    m, _ = plastic_probe(rule, 0, 0.42, 0.9, 0.8)
    assert m == 0.42


def test_hebb_saturates_at_one():
    m, _ = plastic_probe("hebb", 3, 1.0, 0.9, 0.9)
    assert m == 1.0


def test_covariance_equal_activity():
    m0, eta = 0.3, 0.9
    m, _ = plastic_probe("covariance", 3, m0, 0.4, 0.4)
    assert m == pytest.approx(m0 + eta * (1 - m0) * math.tanh(2.0), abs=1e-15)


# --- arbitration and composition -------------------------------------------------------

@pytest.mark.parametrize("gate, expect_l2", [(0.6, True), (0.5, False), (-0.9, False),
                                             (0.5000001, True)])
def test_arbitrate(gate, expect_l2):
    l1, l2 = (0.1, -0.2), (0.7, 0.3, gate)
    assert arbitrate(l1, l2) == (l2[:2] if expect_l2 else l1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-0.999, 0.999), min_size=5, max_size=5))
def test_arbitrate_never_blends(v):
    out = arbitrate(v[:2], v[2:])
    assert out in (tuple(v[:2]), tuple(v[2:4]))


def test_one_layer_drives_wheels(rng):
    g = random_genome(("phototaxis",), rng)
    state = decode(g)
    f = SensorFrame((0.3, 0.6), (0.0, 0.0, 0.0))
    wheels = controller_step(state, f, external_conditional=1.0)
    other = decode(g)
    assert wheels == tuple(activate(other, [0.3, 0.6, 1.0, 1.0]))


def test_missing_conditional_is_rejected(rng):
    state = decode(random_genome(("phototaxis", "avoidance"), rng))
    with pytest.raises(ValueError):
        controller_step(state, SensorFrame((0.0, 0.0), (0.0, 0.0, 0.0)))


def test_zero_learning_layer_feeds_zero_conditional(rng):
    g = random_genome(("phototaxis", "avoidance"), rng)
    n = LEARNING.n_synapses
    # rate index 0 keeps magnitudes (and so weights) at zero for the whole run
    quiet = NetworkGenome(LEARNING, np.ones(n), np.zeros(n), np.ones(n), np.zeros(n), np.zeros(n))
    state = decode(LayeredGenome(g.layers + (quiet,)), np.random.default_rng(0))
    state.magnitudes[:] = 0.0
    state.weights[state.blueprint.plastic_idx] = 0.0
    for f in random_frames(rng, 50):
        controller_step(state, f)
        assert state.sensors[S_CONDITIONAL] == 0.0


def test_monolithic_reads_feedback_on_channel_eight(rng):
    g = random_genome(("monolithic",), rng)
    f = SensorFrame((0.2, 0.4), (0.1, 0.0, 0.3), (1, 0), -1)
    a = controller_step(decode(g, np.random.default_rng(1)), f)
    b = controller_step(decode(g, np.random.default_rng(1)), f, external_conditional=-1.0)
    assert a == b


def test_zero_strength_merge_connection_is_neutral(rng):
    g = random_genome(("phototaxis", "avoidance", "learning"), rng)
    linked = LayeredGenome(g.layers, (ConnectionLayer(0, [1], [2], [0.0]), ConnectionLayer(1)))
    plain = decode(g, np.random.default_rng(3))
    merged = decode(linked, np.random.default_rng(3))
    for f in random_frames(rng, 100):
        assert controller_step(plain, f) == controller_step(merged, f)


def test_empty_connection_layers_match_plain_controller(rng):
    g = random_genome(("phototaxis", "avoidance", "learning"), rng)
    empty = LayeredGenome(g.layers, (ConnectionLayer(0), ConnectionLayer(1)))
    a = decode(g, np.random.default_rng(9))
    b = decode(empty, np.random.default_rng(9))
    for f in random_frames(rng, 100):
        assert controller_step(a, f) == controller_step(b, f)
    assert a.activations.tobytes() == b.activations.tobytes()


def test_merge_connection_changes_target_preactivation(rng):
    g = random_genome(("phototaxis", "avoidance"), rng)
    linked = LayeredGenome(g.layers, (ConnectionLayer(0, [0], [0], [1.5]),))
    a, b = decode(g), decode(linked)
    f = SensorFrame((0.5, 0.5), (0.8, 0.8, 0.8))
    controller_step(a, f, 0.0)
    controller_step(b, f, 0.0)
    src = b.layer_outputs(1)[0]   # avoidance has no hidden layer: neuron 0 is output 0
    hid_a = a.layer_activations(0)[4]
    hid_b = b.layer_activations(0)[4]
    assert math.atanh(hid_b) - math.atanh(hid_a) == pytest.approx(1.5 * src, abs=1e-9)


def test_closed_gate_equals_missing_layer(rng):
    base = random_genome(("phototaxis",), rng)
    n = AVOIDANCE.n_synapses
    w = rng.uniform(-2, 2, n)
    gate_cols = np.arange(n) % AVOIDANCE.n_outputs == 2
    w[gate_cols] = 0.0
    w[3 * AVOIDANCE.n_outputs + 2] = -2.0      # constant input drives the gate to tanh(-2)
    closed = NetworkGenome(AVOIDANCE, np.zeros(n), w, np.ones(n), np.zeros(n), np.zeros(n))
    two = decode(LayeredGenome(base.layers + (closed,)))
    one = decode(base)
    for f in random_frames(rng, 200):
        cond = float(rng.integers(2))
        assert controller_step(two, f, cond) == controller_step(one, f, cond)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([("monolithic",), ("phototaxis",),
                                                   ("phototaxis", "avoidance"),
                                                   ("phototaxis", "avoidance", "learning")]),
       st.lists(frame_strategy(), min_size=1, max_size=60))
def test_activations_and_magnitudes_stay_in_range(seed, roles, frames):
    rng = np.random.default_rng(seed)
    g = random_genome(roles, rng, connection_layers=len(roles) > 1)
    if g.connection_layers is not None:
        conns = []
        for cl in g.connection_layers:
            up, lo = g.layers[cl.lower + 1].topology, g.layers[cl.lower].topology
            k = int(rng.integers(0, 6))
            conns.append(ConnectionLayer(cl.lower, rng.integers(0, up.n_active, k),
                                         rng.integers(0, lo.n_active, k), rng.uniform(-2, 2, k)))
        g = LayeredGenome(g.layers, conns)
    state = decode(g, rng)
    needs_cond = not (g.is_monolithic or "learning" in roles)
    for f in frames:
        controller_step(state, f, 1.0 if needs_cond else None)
        bp = state.blueprint
        for k in range(bp.n_layers):
            neurons = state.layer_activations(k)[bp.lay_nin[k]:]
            assert np.all(np.abs(neurons) < 1.0)
        m = state.plastic_magnitudes()
        assert np.all((m >= 0.0) & (m <= 1.0))


def test_saturated_preactivation_stays_inside_open_interval():
    n = PHOTOTAXIS.n_synapses
    g = LayeredGenome((NetworkGenome(PHOTOTAXIS, np.zeros(n), np.full(n, 2.0), np.ones(n),
                                     np.zeros(n), np.zeros(n)),))
    out = activate(decode(g), [1.0, 1.0, 1.0, 1.0])
    assert np.all(out < 1.0)


def test_step_is_pure_function_of_genome_seed_and_inputs(rng):
    g = random_genome(("phototaxis", "avoidance", "learning"), rng)
    frames = random_frames(rng, 80)

    def roll():
        s = decode(g, np.random.default_rng(77))
        return [controller_step(s, f) for f in frames]

    assert roll() == roll()


# --- serialization -------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.booleans())
def test_json_round_trip_is_lossless(seed, depth, with_conns):
    rng = np.random.default_rng(seed)
    roles = ("phototaxis", "avoidance", "learning")[:depth]
    g = random_genome(roles, rng, connection_layers=with_conns and depth > 1)
    if g.connection_layers is not None:
        g = LayeredGenome(g.layers, [ConnectionLayer(cl.lower, [0, 1], [1, 0],
                                                     rng.uniform(-2, 2, 2))
                                     for cl in g.connection_layers], frozen_prefix=depth - 1)
    back = genome_from_dict(json.loads(json.dumps(genome_to_dict(g))))
    assert back.to_bytes() == g.to_bytes()


def test_monolithic_file_round_trip(tmp_path, rng):
    g = random_genome(("monolithic",), rng)
    save_genome(g, tmp_path / "g.json")
    assert load_genome(tmp_path / "g.json") == g


def test_malformed_document_raises():
    with pytest.raises(GenomeError):
        genome_from_dict({"layers": [{"topology": {"role": "phototaxis"}}]})
    with pytest.raises(GenomeError):
        genome_from_dict({"layers": []})
