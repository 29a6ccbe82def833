import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense
from oracles import plain_forward, relu_net
from reinverify.network import (DimensionError, FormatError, IntervalBox, Layer, Network,
                                interval_propagate, load_network, parse_json_network,
                                parse_nnet, to_nnet, unroll)

NNET_2_3_1 = """\
// small test network
2,2,1,3,
2,3,1,
0,
-1,-1,
1,1,
0,0,0,
1,1,1,
1,0,
0,1,
1,1,
0,
0,
-1,
1,1,1,
0.5,
"""


def test_nnet_structure(tmp_path):
    p = tmp_path / "small.nnet"
    p.write_text(NNET_2_3_1)
    net = load_network(p)
    assert net.dims == [2, 3, 1]
    assert [l.activation for l in net.layers] == ["relu", "identity"]
    # relu(x0) + relu(x1) + relu(x0 + x1 - 1) + 0.5
    assert net.forward([0.75, 0.5]) == pytest.approx([0.75 + 0.5 + 0.25 + 0.5])


def test_nnet_normalisation_is_folded():
    text = NNET_2_3_1.replace("0,0,0,\n1,1,1,", "1,1,0,\n2,2,1,")
    net = parse_nnet(text)
    raw = parse_nnet(NNET_2_3_1)
    x = np.array([0.3, -0.2])
    assert net.forward(x) == pytest.approx(raw.forward((x - 1) / 2))


def test_nnet_wrong_column_count():
    bad = NNET_2_3_1.replace("0,1,\n1,1,\n0,", "0,1,\n1,1,1,\n0,", 1)
    with pytest.raises(DimensionError):
        parse_nnet(bad)


def test_nnet_garbage_reports_offset():
    bad = NNET_2_3_1.replace("0.5,", "zero,")
    with pytest.raises(FormatError) as info:
        parse_nnet(bad)
    assert info.value.offset == NNET_2_3_1.index("0.5,")


def test_nnet_round_trip(rng):
    net = relu_net(rng, [3, 4, 2])
    again = parse_nnet(to_nnet(net))
    x = rng.normal(size=3)
    assert again.forward(x) == pytest.approx(net.forward(x), abs=1e-12)


def test_json_tanh_flagged():
    net = parse_json_network(json.dumps({"layers": [
        {"weights": [[1.0, 2.0]], "bias": [0.0], "activation": "tanh"},
        {"weights": [[1.0]], "bias": [0.0], "activation": "identity"}]}))
    assert not net.piecewise_linear


def test_json_bad_layer():
    with pytest.raises(FormatError):
        parse_json_network('{"layers": [{"bias": [0]}]}')


def test_chain_mismatch():
    with pytest.raises(DimensionError):
        Network([Layer(np.ones((3, 2)), np.zeros(3), "relu"),
                 Layer(np.ones((1, 2)), np.zeros(1), "identity")])


def test_forward_identity():
    net = dense(([[1, 0], [0, 1]], [0, 0], "identity"))
    assert net.forward([0.3, -0.7]).tolist() == [0.3, -0.7]


def test_forward_hand_example():
    net = dense(([[1, -1]], [0.5], "relu"), ([[2]], [0], "identity"))
    assert net.forward([1, 0]).tolist() == [3.0]


def test_forward_zero_weights_gives_bias():
    net = dense((np.zeros((4, 3)), np.ones(4), "relu"), (np.zeros((2, 4)), [0.25, -1], "identity"))
    assert net.forward([5, -5, 9]).tolist() == [0.25, -1.0]


def test_forward_dimension_error():
    net = dense(([[1, 0]], [0], "identity"))
    with pytest.raises(DimensionError):
        net.forward([1, 2, 3])


def test_interval_identity_and_sum():
    ident = dense(([[1, 0], [0, 1]], [0, 0], "identity"))
    out = interval_propagate(ident, IntervalBox([-1, -1], [1, 1]))
    assert out.lower.tolist() == [-1, -1] and out.upper.tolist() == [1, 1]
    total = dense(([[1, 1]], [0], "identity"))
    out = interval_propagate(total, IntervalBox([0, 0], [1, 1]))
    assert out.lower.tolist() == [0] and out.upper.tolist() == [2]


def test_interval_soundness_monte_carlo(rng):
    net = relu_net(rng, [2, 3, 1])
    box = IntervalBox([-1, -1], [1, 1])
    out = interval_propagate(net, box)
    xs = rng.uniform(-1, 1, (1000, 2))
    ys = np.array([net.forward(x) for x in xs])
    assert np.all(ys >= out.lower - 1e-12) and np.all(ys <= out.upper + 1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["relu", "tanh"]))
def test_interval_soundness_random(seed, act):
    r = np.random.default_rng(seed)
    dims = [int(r.integers(1, 4)), int(r.integers(1, 5)), int(r.integers(1, 3))]
    net = Network([Layer(r.normal(size=(dims[1], dims[0])), r.normal(size=dims[1]), act),
                   Layer(r.normal(size=(dims[2], dims[1])), r.normal(size=dims[2]), "identity")])
    lo = r.uniform(-2, 1, dims[0])
    hi = lo + r.uniform(0, 2, dims[0])
    out = interval_propagate(net, IntervalBox(lo, hi))
    x = r.uniform(lo, hi)
    y = net.forward(x)
    assert np.all(y >= out.lower - 1e-9) and np.all(y <= out.upper + 1e-9)


def test_forward_matches_plain_evaluation(rng):
    net = relu_net(rng, [3, 5, 4, 2])
    layers = [(l.weights, l.bias, l.activation) for l in net.layers]
    for x in rng.normal(size=(50, 3)):
        assert net.forward(x) == pytest.approx(plain_forward(layers, x), abs=1e-12)


def test_identity_layers_compose(rng):
    A, B = rng.normal(size=(4, 3)), rng.normal(size=(2, 4))
    a, b = rng.normal(size=4), rng.normal(size=2)
    net = dense((A, a, "identity"), (B, b, "identity"))
    x = rng.normal(size=3)
    assert net.forward(x) == pytest.approx(B @ A @ x + B @ a + b, abs=1e-12)


def test_unroll_layout():
    net = dense(([[1, 1]], [0], "identity"))
    u = unroll(net, 3)
    assert u.num_vars == 9
    assert u.var_id(2, "input", 1) == 7
    ids = sorted(u.index_map().values())
    assert ids == list(range(9))
    assert unroll(net, 3).index_map() == u.index_map()


def test_unroll_base_case():
    net = dense(([[1, 1], [1, 0]], [0, 0], "identity"))
    assert sorted(unroll(net, 1).index_map().values()) == [0, 1, 2, 3]


def test_unroll_split_blocks_match_forward(rng):
    net = relu_net(rng, [2, 3, 1])
    u = unroll(net, 4)
    flat = np.zeros(u.num_vars)
    xs = rng.normal(size=(4, 2))
    for s in range(4):
        flat[u.x_ids(s)] = xs[s]
        flat[u.y_ids(s)] = net.forward(xs[s])
    got_x, got_y = u.split(flat)
    for s in range(4):
        assert got_y[s] == pytest.approx(net.forward(got_x[s]))
