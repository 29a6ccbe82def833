import glob
import os

import pytest

from conftest import CORPUS
from reinverify import drlp
from reinverify.drlp import ast
from reinverify.drlp.classify import post_kind
from reinverify.verify.compile import FAnd, FOr, compiler_for

ALL_FILES = sorted(glob.glob(os.path.join(CORPUS, "*", "*.drlp")))
FIGURES = {os.path.basename(p)[:-5]: p for p in glob.glob(os.path.join(CORPUS, "figures", "*"))}


def concrete_scripts(parsed):
    if isinstance(parsed, drlp.DrlpScript):
        return [parsed]
    if parsed.script.iterables:
        return [s for s in drlp.expand_iterables(parsed) if isinstance(s, drlp.DrlpScript)]
    return []


def canon(f):
    """Hashable structural form of a compiled formula."""
    if isinstance(f, (FAnd, FOr)):
        return (type(f).__name__, tuple(canon(i) for i in f.items))
    return (tuple(f.coef.tolist()), f.const, f.sense)


def test_corpus_has_enough_grammar_scripts():
    assert len(glob.glob(os.path.join(CORPUS, "grammar", "*.drlp"))) >= 10
    assert len(FIGURES) == 4


@pytest.mark.parametrize("path", ALL_FILES, ids=os.path.basename)
def test_corpus_round_trip(path):
    parsed = drlp.load(path)
    again = drlp.parse(drlp.to_source(parsed))
    assert again == parsed
    # printing is a fixed point after one round
    assert drlp.to_source(again) == drlp.to_source(parsed)


@pytest.mark.parametrize("path", ALL_FILES, ids=os.path.basename)
def test_corpus_classification_is_a_partition(path):
    for script in concrete_scripts(drlp.load(path)):
        parts = drlp.classify_parts(script)
        placed = [id(n) for r in "SITC" for n in getattr(parts, r)]
        assert sorted(placed) == sorted(id(n) for n in script.precondition.children)


def test_degenerate_interval_script():
    s = drlp.parse("@Pre\nx_size=1\ny_size=1\n[0] <= x[0] <= [0]\n@Exp\ny[0] >= [0]")
    assert isinstance(s, drlp.DrlpScript)
    assert len(s.precondition.children) == 1
    cmp = s.precondition.children[0]
    assert isinstance(cmp, ast.Comparison) and cmp.ops == ("<=", "<=")
    assert s.x_size == 1 and s.y_size == 1


def test_safety_figure_template():
    t = drlp.load(FIGURES["safety"])
    assert isinstance(t, drlp.DrlpTemplate)
    assert t.free_parameters == ("a",)
    assert t.script.iterables == ("a",)
    loop = t.script.precondition.children[0]
    assert isinstance(loop, ast.ForLoop) and loop.kind == "range"
    assert loop.hi == ast.Name("k")
    box = loop.body[0]
    rep = ast.BinOp("*", ast.ListLit((ast.Num(-1),)), ast.Num(2))
    assert box.operands[0] == rep and box.ops == ("<=", "<=")


def test_safety_figure_classification():
    for script in drlp.expand_iterables(drlp.load(FIGURES["safety"])):
        parts = drlp.classify_parts(script)
        assert len(parts.S) == 1 and len(parts.I) == 1 and len(parts.T) == 1
        assert parts.C == ()
        # the transition conjunct carries both implication pairs
        (loop,) = parts.T
        assert [type(n) for n in loop.body] == [ast.Implies, ast.Implies]
        assert parts.post_kind == "Forall"


def test_liveness_figure_classification():
    for script in drlp.expand_iterables(drlp.load(FIGURES["liveness"])):
        parts = drlp.classify_parts(script)
        assert len(parts.C) == 1
        diseqs = [n for n in ast.walk(parts.C[0])
                  if isinstance(n, ast.Comparison) and "!=" in n.ops]
        assert diseqs
        assert parts.post_kind == "Exist"


def test_one_shot_property_has_only_initial_part():
    s = drlp.load(os.path.join(CORPUS, "benchmarks", "mc_phi1.drlp"))
    parts = drlp.classify_parts(s)
    assert (len(parts.S), len(parts.I), len(parts.T), len(parts.C)) == (0, 1, 0, 0)


def test_orange_loop_matches_hand_expansion():
    looped = drlp.parse(
        "@Pre\nx_size=1\ny_size=1\n[0] <= x[0] <= [1]\n"
        "for i in orange(0,3):\n    x[0] >= [i]\n    y[0] >= [i]\n    y[0] <= [i] + [5]\n"
        "@Exp\ny[0] >= [-9]\n")
    hand = drlp.parse(
        "@Pre\nx_size=1\ny_size=1\n[0] <= x[0] <= [1]\n"
        "Or(And(x[0] >= [0], y[0] >= [0], y[0] <= [0] + [5]), "
        "And(x[0] >= [1], y[0] >= [1], y[0] <= [1] + [5]), "
        "And(x[0] >= [2], y[0] >= [2], y[0] <= [2] + [5]))\n"
        "@Exp\ny[0] >= [-9]\n")
    a = compiler_for(looped, 1).node(looped.precondition.children[1])
    b = compiler_for(hand, 1).node(hand.precondition.children[1])
    assert isinstance(a, FOr) and len(a.items) == 3
    assert all(isinstance(i, FAnd) and len(i.items) == 3 for i in a.items)
    assert canon(a) == canon(b)


def test_expand_iterables_cartesian_example():
    t = drlp.load(os.path.join(CORPUS, "grammar", "09_iterables.drlp"))
    scripts = drlp.expand_iterables(t)
    got = [(s.env["a"], s.env["b"], s.env["c"]) for s in scripts]
    assert got == [(1, 2, 4), (1, 2, 5), (1, 3, 4), (1, 3, 5)]


def test_expand_without_iterables_is_identity():
    s = drlp.load(os.path.join(CORPUS, "benchmarks", "mc_phi1.drlp"))
    assert drlp.expand_iterables(s) == [s]


def test_expand_singleton_iterable():
    t = drlp.parse("_b = [7]\n@Pre\nx_size=1\ny_size=1\n[0] <= x[0] <= [b]\n@Exp\ny[0] >= [0]")
    (s,) = drlp.expand_iterables(t)
    assert s.env["b"] == 7


def test_expand_empty_iterable_rejected():
    t = drlp.parse("_b = []\n@Pre\nx_size=1\ny_size=1\n[0] <= x[0] <= [1]\n@Exp\ny[0] >= [b]")
    with pytest.raises(drlp.ExpansionError):
        drlp.expand_iterables(t)


def test_concretize_reduces_arity():
    t = drlp.load(os.path.join(CORPUS, "grammar", "11_free_params.drlp"))
    assert set(t.free_parameters) == {"a", "b", "z"}
    smaller = drlp.concretize(t, "a", 1)
    assert isinstance(smaller, drlp.DrlpTemplate)
    assert set(smaller.free_parameters) == {"b", "z"}


def test_concretize_threshold_to_script():
    t = drlp.parse("@Pre\nx_size=1\ny_size=1\n[0] <= x[0] <= [1]\n@Exp\ny[0] >= z")
    s = drlp.concretize(t, "z", -5)
    assert isinstance(s, drlp.DrlpScript)
    expected = drlp.parse("@Pre\nx_size=1\ny_size=1\n[0] <= x[0] <= [1]\n@Exp\ny[0] >= -5")
    assert s.postcondition == expected.postcondition


def test_concretize_unknown_parameter():
    t = drlp.parse("@Pre\nx_size=1\ny_size=1\n[0] <= x[0] <= [1]\n@Exp\ny[0] >= z")
    with pytest.raises(drlp.UnknownParameter):
        drlp.concretize(t, "w", 0)


@pytest.mark.parametrize("source, line", [
    ("@Pre\nx_size=1\ny_size=1\n[0] <= x[0] <=\n@Exp\ny[0] >= [0]", 4),
    ("@Pre\nx_size=1\ny_size=1\nfor i in range(0, 2)\n    x[i] >= [0]\n@Exp\ny[0] >= [0]", 4),
    ("@Pre\nx_size=1\ny_size=1\nAnd(x[0] >= [0]\n@Exp\ny[0] >= [0]", 4),
])
def test_syntax_errors_report_position(source, line):
    with pytest.raises(drlp.DrlpSyntaxError) as info:
        drlp.parse(source)
    assert info.value.line == line
    assert info.value.column >= 1


@pytest.mark.parametrize("source", [
    # product of two model variables
    "@Pre\nx_size=2\ny_size=1\nx[0][0] * x[0][1] >= [0]\n@Exp\ny[0] >= [0]",
    # slice past the declared size
    "@Pre\nx_size=2\ny_size=1\nx[0][0:3] >= [0]*3\n@Exp\ny[0] >= [0]",
    # approximate equality with no tolerance variable
    "@Pre\nx_size=1\ny_size=1\n[0] <= x[0] <= [1]\n@Exp\ny[0] ≈ [0]",
])
def test_semantic_errors(source):
    with pytest.raises(drlp.SemanticError):
        drlp.parse(source)


def test_unbound_dimension_is_rejected():
    with pytest.raises(drlp.SemanticError):
        drlp.parse("@Pre\nx_size=1\ny_size=1\nfor i in range(0, n):\n    x[i] >= [0]\n"
                   "@Exp\ny[0] >= [0]")


def test_approx_desugars_with_declared_tolerance():
    s = drlp.parse("y_eps = 0.2\n@Pre\nx_size=1\ny_size=1\n[0] <= x[0] <= [1]\n"
                   "@Exp\ny[0] ≈ [0]")
    f = compiler_for(s, 1).node(s.postcondition.children[0])
    consts = sorted(a.const for a in (f.items if isinstance(f, FAnd) else [f]))
    assert consts == pytest.approx([-0.2, -0.2])


def test_sizes_inferred_from_subscripts():
    s = drlp.load(os.path.join(CORPUS, "grammar", "10_comments_blank.drlp"))
    assert (s.x_size, s.y_size) == (2, 2)


def test_post_kind_tags():
    live = drlp.expand_iterables(drlp.load(FIGURES["liveness"]))[0]
    safe = drlp.expand_iterables(drlp.load(FIGURES["safety"]))[0]
    assert post_kind(live) == "Exist" and post_kind(safe) == "Forall"


def test_ambiguous_conjunct_reported_or_raised():
    s = drlp.parse("@Pre\nx_size=1\ny_size=1\nfor i in range(0, 3):\n    [0] <= x[i] <= [1]\n"
                   "And(x[0] == [0], x[0] + x[2] <= [1])\n@Exp\ny[0] >= [0]")
    parts = drlp.classify_parts(s)
    assert len(parts.ambiguous) == 1 and parts.ambiguous[0] in parts.C
    with pytest.raises(drlp.ClassificationError):
        drlp.classify_parts(s, strict=True)
