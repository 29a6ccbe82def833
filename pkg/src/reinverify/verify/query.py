"""Constraint queries: precondition and negated postcondition over an unrolled network."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..drlp import ast
from ..drlp.classify import classify_parts
from ..drlp.errors import SemanticError
from ..network import UnrolledNetwork, unroll
from .compile import Atom, FAnd, FOr, compiler_for, conj, negate

DNF_CAP = 1 << 16


class ArityError(ValueError):
    pass


class NotInductible(ValueError):
    pass


Case = List[Atom]


@dataclass
class ConstraintQuery:
    """Search for a point with ``linear ∧ (one case per group) ∧ one case of negated_post``."""

    unrolled: UnrolledNetwork
    linear: List[Atom]
    groups: List[List[Case]] = field(default_factory=list)
    negated_post: List[Case] = field(default_factory=list)

    @property
    def depth(self):
        return self.unrolled.depth

    @property
    def num_vars(self):
        return self.unrolled.num_vars

    def all_groups(self):
        return self.groups + [self.negated_post]

    def case_count(self):
        total = 1
        for g in self.all_groups():
            total *= len(g)
        return total

    def holds_pre(self, v, tol):
        return all(a.holds(v, tol) for a in self.linear) and \
            all(any(all(a.holds(v, tol) for a in case) for case in g) for g in self.groups)

    def violates_post(self, v, tol):
        return any(all(_holds_strict(a, v, tol) for a in case) for case in self.negated_post)


def _holds_strict(a, v, tol):
    # strict atoms must hold exactly at a witness; the rest within tolerance
    if a.sense == "lt":
        return a.value(v) < 0.0
    return a.holds(v, tol)


def dnf(f, cap=DNF_CAP):
    """Disjunctive normal form as a list of atom lists."""
    if isinstance(f, Atom):
        return [[f]]
    if isinstance(f, FOr):
        out = []
        for i in f.items:
            out.extend(dnf(i, cap))
            if len(out) > cap:
                raise SemanticError(f"disjunction expands to more than {cap} cases")
        return out
    out = [[]]
    for i in f.items:
        sub = dnf(i, cap)
        if len(out) * len(sub) > cap:
            raise SemanticError(f"disjunction expands to more than {cap} cases")
        out = [a + b for a, b in itertools.product(out, sub)]
    return out


def _check_arity(script, net):
    if script.x_size != net.input_dim or script.y_size != net.output_dim:
        raise ArityError(f"script expects {script.x_size}->{script.y_size} but the network is "
                         f"{net.input_dim}->{net.output_dim}")


def _add(query, formula):
    if isinstance(formula, FAnd):
        # independent conjuncts become separate groups rather than one product
        for item in formula.items:
            _add(query, item)
        return
    cases = dnf(formula)
    if len(cases) == 1:
        query.linear.extend(cases[0])
    else:
        query.groups.append(cases)


def build_query(script, net, k):
    """BMC query at depth ``k``: the full precondition and the negated postcondition."""
    _check_arity(script, net)
    if k < 1:
        raise ValueError("depth must be >= 1")
    comp = compiler_for(script, k)
    q = ConstraintQuery(unroll(net, k), [])
    for node in script.precondition.children:
        _add(q, comp.node(node))
    post = conj([comp.node(n) for n in script.postcondition.children])
    q.negated_post = dnf(negate(post))
    return q


def step_properties(script, comp):
    """Per-step post formulas ``{step: Q_step}`` from top-level ``range`` loops."""
    per_step = {}
    for node in script.postcondition.children:
        if not (isinstance(node, ast.ForLoop) and node.kind == "range"):
            raise NotInductible("k-induction needs every postcondition statement to be a "
                                "range loop over steps")
        lo = comp.index_value(node.lo, {})
        hi = comp.index_value(node.hi, {})
        step = comp.index_value(node.step, {})
        for i in range(lo, hi, step):
            body = conj([comp.node(c, {node.var: i}) for c in node.body])
            per_step.setdefault(i, []).append(body)
    return {i: conj(fs) for i, fs in per_step.items()}


def build_induction_query(script, net, k):
    """Inductive step over k+1 steps: S, T, C everywhere, Q on the first k steps, ¬Q on the last."""
    _check_arity(script, net)
    parts = classify_parts(script)
    if parts.post_kind == "Exist":
        raise NotInductible("existential postconditions cannot be proven by induction")
    depth = k + 1
    comp = compiler_for(script, depth)
    q = ConstraintQuery(unroll(net, depth), [])
    initial = {id(n) for n in parts.I}
    for node in script.precondition.children:
        if id(node) not in initial:
            _add(q, comp.node(node))
    per_step = step_properties(script, comp)
    for i in range(k):
        if i in per_step:
            _add(q, per_step[i])
    last = per_step.get(k)
    q.negated_post = [] if last is None else dnf(negate(last))
    return q


def input_box_atoms(query):
    """Single-variable bounds implied directly by the conjunctive constraints."""
    n = query.num_vars
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    for a in query.linear:
        vs = a.vars()
        if len(vs) != 1:
            continue
        j = vs[0]
        c = a.coef[j]
        bound = -a.const / c
        if a.sense == "eq":
            lo[j] = max(lo[j], bound)
            hi[j] = min(hi[j], bound)
        elif c > 0:
            hi[j] = min(hi[j], bound)
        else:
            lo[j] = max(lo[j], bound)
    return lo, hi
