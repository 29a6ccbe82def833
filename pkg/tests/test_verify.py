import os

import numpy as np
import pytest

from conftest import CORPUS, dense
from instances import CLAMP, DRIFT, clamp_net, drift_net
from oracles import plain_forward
from reinverify import drlp
from reinverify.verify import (ArityError, NonPiecewiseLinear, NotInductible, ResourceExhausted,
                               UnboundedInput, VerifyResult, bmc, build_induction_query,
                               build_query, k_induction, solve, solve_interval, verify)
from reinverify.verify.bab import ReluBranchNode, Solver

ONE_SHOT = "@Pre\nx_size=1\ny_size=1\n[0] <= x[0] <= [1]\n@Exp\n{post}\n"

# x_{i+1} = -x_i: x <= 1 is 2-inductive but not 1-inductive (x = -2 maps to 2)
FLIP = """@Pre
x_size=1
y_size=1
for i in range(0, k):
    [-10] <= x[i] <= [10]
[0] <= x[0] <= [0.5]
for i in range(0, k-1):
    x[i+1] == y[i]
@Exp
for i in range(0, k):
    x[i] <= [1]
"""


def negate_net():
    return dense(([[1.0], [-1.0]], [0.0, 0.0], "relu"), ([[-1.0, 1.0]], [0.0], "identity"))


def _layers(net):
    return [(l.weights, l.bias, l.activation) for l in net.layers]


# -- queries ------------------------------------------------------------------

def test_safety_figure_query_at_depth_two():
    s = drlp.expand_iterables(drlp.load(os.path.join(CORPUS, "figures", "safety.drlp")))[0]
    net = dense(([[1.0, 1.0]], [0.0], "identity"))
    q = build_query(s, net, 2)
    bounds = [a for a in q.linear if a.sense == "le"]
    equalities = [a for a in q.linear if a.sense == "eq"]
    assert len(bounds) == 8  # 2 steps x 2 features x lower/upper
    assert len(equalities) == 2
    assert [len(g) for g in q.groups] == [2, 2]
    y_ids = [q.unrolled.var_id(s_, "output", 0) for s_ in range(2)]
    assert len(q.negated_post) == 2
    for case, y in zip(q.negated_post, y_ids):
        (atom,) = case
        assert atom.sense == "lt" and atom.vars().tolist() == [y]
        # -y - 2 < 0 ... negated: y < -2  <=>  y + 2 < 0
        assert atom.coef[y] == 1.0 and atom.const == 2.0


def test_one_shot_query_size(identity_net):
    q = build_query(drlp.parse(ONE_SHOT.format(post="y[0] >= [0]")), identity_net, 1)
    assert q.num_vars == 2


def test_exist_post_negates_to_conjunction(identity_net):
    s = drlp.parse("@Pre\nx_size=1\ny_size=1\nfor i in range(0, k):\n    [0] <= x[i] <= [1]\n"
                   "@Exp\nfor i in orange(0, k):\n    y[i] >= [0.5]\n")
    q = build_query(s, identity_net, 2)
    assert len(q.negated_post) == 1 and len(q.negated_post[0]) == 2
    with pytest.raises(NotInductible):
        build_induction_query(s, identity_net, 1)


def test_arity_mismatch():
    s = drlp.parse(ONE_SHOT.format(post="y[0] >= [0]"))
    with pytest.raises(ArityError):
        build_query(s, dense(([[1.0, 1.0]], [0.0], "identity")), 1)


# -- complete solver ----------------------------------------------------------

def test_identity_proven(identity_net):
    r = solve(build_query(drlp.parse(ONE_SHOT.format(post="y[0] >= [0]")), identity_net, 1))
    assert r.status == "Proven" and r.witness is None


def test_identity_falsified(identity_net):
    r = solve(build_query(drlp.parse(ONE_SHOT.format(post="y[0] >= [0.5]")), identity_net, 1))
    assert r.status == "Falsified"
    xs, ys = r.witness_xy()
    assert 0 <= xs[0][0] < 0.5 and ys[0][0] == xs[0][0]


def test_strict_post_boundary(identity_net):
    # y > 0 fails only at x = 0 exactly
    r = solve(build_query(drlp.parse(ONE_SHOT.format(post="y[0] > [0]")), identity_net, 1))
    assert r.status == "Falsified"
    assert r.witness_xy()[0][0][0] == pytest.approx(0.0, abs=1e-9)


def test_witness_is_resimulated(rng):
    net = dense((rng.normal(size=(4, 2)), rng.normal(size=4), "relu"),
                (rng.normal(size=(1, 4)), [0.0], "identity"))
    s = drlp.parse("@Pre\nx_size=2\ny_size=1\n[-1, -1] <= x[0] <= [1, 1]\n@Exp\ny[0] <= [-50]\n")
    r = solve(build_query(s, net, 1))
    assert r.status == "Falsified"
    xs, ys = r.witness_xy()
    assert ys[0] == pytest.approx(plain_forward(_layers(net), xs[0]), abs=1e-12)


def test_tanh_refused_by_complete_solver():
    net = dense(([[1.0]], [0.0], "tanh"), ([[1.0]], [0.0], "identity"))
    q = build_query(drlp.parse(ONE_SHOT.format(post="y[0] <= [1]")), net, 1)
    with pytest.raises(NonPiecewiseLinear):
        solve(q)


def test_node_budget_gives_unknown(rng):
    net = dense((rng.normal(size=(12, 2)), rng.normal(size=12), "relu"),
                (rng.normal(size=(1, 12)), [0.0], "identity"))
    s = drlp.parse("@Pre\nx_size=2\ny_size=1\n[-1, -1] <= x[0] <= [1, 1]\n@Exp\ny[0] <= [1000]\n")
    r = solve(build_query(s, net, 1), budget=1)
    assert r.status in ("Unknown", "Proven")
    if r.status == "Unknown":
        assert r.witness is None


def test_node_budget_env_override(monkeypatch, rng):
    from reinverify.verify.bab import node_budget
    monkeypatch.setenv("REINVERIFY_NODE_BUDGET", "17")
    assert node_budget() == 17


def test_propagated_preactivation_bounds():
    net = dense(([[1.0], [3.0]], [0.0, 0.0], "relu"), ([[1.0, 1.0]], [0.0], "identity"))
    s = drlp.parse("@Pre\nx_size=1\ny_size=1\n[-1] <= x[0] <= [1]\n@Exp\ny[0] >= [-1]\n")
    solver = Solver(build_query(s, net, 1), 100)
    node = ReluBranchNode()
    xlo, xhi = solver.root_box()
    bounds = solver.propagate(node, xlo, xhi)
    zlo, zhi = bounds[(0, 0)]
    assert zlo.tolist() == [-1.0, -3.0] and zhi.tolist() == [1.0, 3.0]
    assert isinstance(ResourceExhausted("x"), Exception)


def test_result_invariant():
    with pytest.raises(ValueError):
        VerifyResult("Falsified", 1, None)
    with pytest.raises(ValueError):
        VerifyResult("Proven", 1, np.zeros(2))


# -- interval mode ------------------------------------------------------------

def test_interval_proves_loose_bound(identity_net):
    q = build_query(drlp.parse(ONE_SHOT.format(post="y[0] >= [-0.5]")), identity_net, 1)
    assert solve_interval(q).status == "Proven"


def test_interval_cannot_falsify(identity_net):
    q = build_query(drlp.parse(ONE_SHOT.format(post="y[0] >= [0.5]")), identity_net, 1)
    assert solve_interval(q).status == "Unknown"


def test_interval_tanh_range():
    net = dense(([[1.0]], [0.0], "tanh"), ([[1.0]], [0.0], "identity"))
    s = drlp.parse(ONE_SHOT.format(post="y[0] <= [1]"))
    assert solve_interval(build_query(s, net, 1)).status == "Proven"
    assert verify(s, net).status == "Proven"


def test_interval_needs_bounded_inputs(identity_net):
    s = drlp.parse("@Pre\nx_size=1\ny_size=1\nx[0] >= [0]\n@Exp\ny[0] >= [-1]\n")
    with pytest.raises(UnboundedInput):
        solve_interval(build_query(s, identity_net, 1))


# -- model checking -----------------------------------------------------------

def test_bmc_drift_first_violation_at_depth_three():
    net = drift_net()
    r = bmc(drlp.parse(DRIFT), net, 6)
    assert r.status == "Falsified" and r.depth == 3
    xs, ys = r.witness_xy()
    assert xs[:, 0].tolist() == pytest.approx([0.0, 1.0, 2.5])
    for s in range(3):
        assert ys[s] == pytest.approx(plain_forward(_layers(net), xs[s]))


def test_k_induction_falsifies_drift_like_bmc():
    net = drift_net()
    a = bmc(drlp.parse(DRIFT), net, 6)
    b = k_induction(drlp.parse(DRIFT), net, 6)
    assert b.status == "Falsified" and b.depth == 3
    assert np.allclose(a.witness, b.witness)


def test_clamp_is_one_inductive():
    r = k_induction(drlp.parse(CLAMP), clamp_net(), 5)
    assert (r.status, r.depth, r.guarantee) == ("Proven", 1, "unbounded")


def test_clamp_bmc_bounded_proof():
    r = bmc(drlp.parse(CLAMP), clamp_net(), 6)
    assert (r.status, r.depth, r.guarantee) == ("Proven", 6, "bounded")


def test_flip_needs_depth_two():
    s = drlp.parse(FLIP)
    r = k_induction(s, negate_net(), 5)
    assert (r.status, r.depth) == ("Proven", 2)
    assert bmc(s, negate_net(), 2 * r.depth).status == "Proven"


def test_k_induction_exhaustion_is_unknown():
    r = k_induction(drlp.parse(FLIP), negate_net(), 1)
    assert r.status == "Unknown"


def test_bmc_depth_one_matches_single_solve(identity_net):
    s = drlp.parse("@Pre\nx_size=1\ny_size=1\nfor i in range(0, k):\n    [0] <= x[i] <= [1]\n"
                   "@Exp\nfor i in range(0, k):\n    y[i] >= [0.25]\n")
    a = bmc(s, identity_net, 1)
    b = solve(build_query(s, identity_net, 1))
    assert a.status == b.status == "Falsified"


def test_fixed_depth_script_is_checked_once(identity_net):
    r = bmc(drlp.parse(ONE_SHOT.format(post="y[0] >= [0]")), identity_net, 5)
    assert (r.status, r.depth, r.guarantee) == ("Proven", 1, "unbounded")


def test_verify_routes_existential_posts_to_bmc(identity_net):
    s = drlp.parse("@Pre\nx_size=1\ny_size=1\nfor i in range(0, k):\n    [0] <= x[i] <= [1]\n"
                   "@Exp\nfor i in orange(0, k):\n    y[i] >= [-1]\n")
    r = verify(s, identity_net, k_max=2)
    assert r.status == "Proven" and r.guarantee == "bounded"
    with pytest.raises(NotInductible):
        k_induction(s, identity_net, 2)


def test_verify_rejects_templates(identity_net):
    t = drlp.parse("@Pre\nx_size=1\ny_size=1\n[0] <= x[0] <= [1]\n@Exp\ny[0] >= z")
    with pytest.raises(TypeError):
        verify(t, identity_net)


def test_determinism(rng):
    net = dense((rng.normal(size=(6, 2)), rng.normal(size=6), "relu"),
                (rng.normal(size=(1, 6)), [0.0], "identity"))
    s = drlp.parse("@Pre\nx_size=2\ny_size=1\n[-1, -1] <= x[0] <= [1, 1]\n@Exp\ny[0] <= [0.1]\n")
    a, b = verify(s, net), verify(s, net)
    assert (a.status, a.depth) == (b.status, b.depth)
    if a.witness is not None:
        assert np.array_equal(a.witness, b.witness)
    assert a.to_json(timing=False) == b.to_json(timing=False)
