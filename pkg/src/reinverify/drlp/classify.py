"""Split a concrete precondition into state, initial, transition and other parts."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

from . import ast
from .errors import ClassificationError

PROBE_DEPTH = 3


@dataclass(frozen=True)
class PartitionedProperty:
    S: Tuple[ast.Node, ...]
    I: Tuple[ast.Node, ...]
    T: Tuple[ast.Node, ...]
    C: Tuple[ast.Node, ...]
    post: ast.And
    post_kind: str  # "Forall" or "Exist"
    ambiguous: Tuple[ast.Node, ...] = ()

    def role_of(self, node):
        for role in ("S", "I", "T", "C"):
            if any(n is node for n in getattr(self, role)):
                return role
        raise KeyError(node)


def _role(formula, n, m, depth):
    from ..verify.compile import atoms

    items = list(atoms(formula))
    if not items:
        return "C"
    if any(a.tag == "diseq" for a in items):
        return "C"
    width = n + m
    x_only = True
    single = True
    steps = set()
    span_ok = True
    for a in items:
        vs = a.vars()
        st = {int(v) // width for v in vs}
        if any(int(v) % width >= n for v in vs):
            x_only = False
        if len(vs) != 1:
            single = False
        if st and max(st) - min(st) > 1:
            span_ok = False
        steps |= st
    if x_only and steps <= {0}:
        return "I"
    if x_only and single:
        return "S" if steps == set(range(depth)) else "C"
    if span_ok:
        return "T"
    return "C"


def post_kind(script):
    for node in ast.walk(script.postcondition):
        if isinstance(node, ast.ForLoop) and node.kind == "orange":
            # reach-style posts constrain future states as well as actions
            if any(isinstance(n, ast.IoRef) for n in ast.walk(node)):
                return "Exist"
    return "Forall"


def classify_parts(script, strict=False):
    """Partition the top-level precondition conjuncts into S, I, T and C.

    A conjunct whose own sub-conjuncts fall into different roles is placed in
    C and listed under ``ambiguous``; with ``strict=True`` it raises instead.
    """
    from ..verify.compile import compiler_for

    fixed = script.fixed_depth()
    depth = max(PROBE_DEPTH, fixed or 0)
    comp = compiler_for(script, depth)
    parts = {"S": [], "I": [], "T": [], "C": []}
    ambiguous = []
    for node in script.precondition.children:
        role = _role(comp.node(node), script.x_size, script.y_size, depth)
        if isinstance(node, ast.And) and len(node.children) > 1:
            roles = {_role(comp.node(c), script.x_size, script.y_size, depth)
                     for c in node.children}
            if len(roles) > 1:
                if strict:
                    raise ClassificationError(
                        f"conjunct mixes roles {sorted(roles)}; place its parts separately")
                ambiguous.append(node)
                role = "C"
        parts[role].append(node)
    return PartitionedProperty(tuple(parts["S"]), tuple(parts["I"]), tuple(parts["T"]),
                               tuple(parts["C"]), script.postcondition, post_kind(script),
                               tuple(ambiguous))
