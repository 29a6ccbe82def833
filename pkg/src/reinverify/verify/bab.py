"""Complete ReLU branch-and-bound over LP relaxations of an unrolled network."""
from __future__ import annotations

import itertools
import os
import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .. import lp
from ..network import affine_interval
from .result import NonPiecewiseLinear, VerifyResult

TOL_NET = 1e-6
STRICT_MARGIN = 1e-9
EAGER_CASE_LIMIT = 4096
DEFAULT_NODE_BUDGET = 10 ** 6
LP_TOL = 1e-7


def node_budget():
    env = os.environ.get("REINVERIFY_NODE_BUDGET")
    return int(env) if env else DEFAULT_NODE_BUDGET


class ResourceExhausted(Exception):
    pass


@dataclass
class ReluBranchNode:
    """Search state: fixed ReLU phases, chosen disjunct per Or-group, and pre-activation bounds."""

    fixed_phases: Dict[Tuple[int, int, int], int] = field(default_factory=dict)
    chosen: Dict[int, int] = field(default_factory=dict)
    bounds: Optional[Dict[Tuple[int, int], Tuple[np.ndarray, np.ndarray]]] = None

    def child(self, phases=None, chosen=None):
        p = dict(self.fixed_phases)
        p.update(phases or {})
        c = dict(self.chosen)
        c.update(chosen or {})
        return ReluBranchNode(p, c)


class _Layout:
    """Column layout: flat model variables, then hidden post-activations, then a slack."""

    def __init__(self, query):
        self.net = query.unrolled.base
        self.depth = query.depth
        self.n = query.unrolled.n
        self.m = query.unrolled.m
        self.N = query.num_vars
        self.hidden = list(range(len(self.net.layers) - 1))
        self.a_start = {}
        col = self.N
        for s in range(self.depth):
            for l in self.hidden:
                self.a_start[(s, l)] = col
                col += self.net.layers[l].out_dim
        self.slack = col
        self.width = col + 1

    def inputs(self, s, l):
        if l == 0:
            return [s * (self.n + self.m) + j for j in range(self.n)]
        start = self.a_start[(s, l - 1)]
        return list(range(start, start + self.net.layers[l - 1].out_dim))


class Solver:
    def __init__(self, query, budget=None):
        if not query.unrolled.base.piecewise_linear:
            raise NonPiecewiseLinear("network has tanh activations; use interval mode")
        self.q = query
        self.L = _Layout(query)
        self.budget = node_budget() if budget is None else budget
        self.nodes = 0
        self.lp_calls = 0
        self.inconclusive = False
        self.groups = query.all_groups()

    # -- bounds ---------------------------------------------------------------

    def propagate(self, node, xlo, xhi):
        """Interval bounds on every hidden pre-activation under the node's phases.

        Returns None when a fixed phase contradicts the bounds.
        """
        L = self.L
        out = {}
        for s in range(L.depth):
            lo = xlo[s * (L.n + L.m): s * (L.n + L.m) + L.n]
            hi = xhi[s * (L.n + L.m): s * (L.n + L.m) + L.n]
            for l, layer in enumerate(L.net.layers):
                zlo, zhi = affine_interval(layer.weights, layer.bias, lo, hi)
                if l == len(L.net.layers) - 1:
                    out[("y", s)] = (zlo, zhi)
                    break
                if layer.activation == "relu":
                    for j in range(layer.out_dim):
                        ph = node.fixed_phases.get((s, l, j))
                        if ph == 1:
                            zlo[j] = max(zlo[j], 0.0)
                        elif ph == -1:
                            zhi[j] = min(zhi[j], 0.0)
                    if np.any(zlo > zhi + LP_TOL):
                        return None
                    out[(s, l)] = (zlo, zhi)
                    lo, hi = np.maximum(zlo, 0.0), np.maximum(zhi, 0.0)
                else:
                    out[(s, l)] = (zlo, zhi)
                    lo, hi = zlo, zhi
        return out

    def phase(self, node, s, l, j):
        ph = node.fixed_phases.get((s, l, j))
        if ph is not None:
            return ph
        zlo, zhi = node.bounds[(s, l)]
        if zlo[j] >= 0:
            return 1
        if zhi[j] <= 0:
            return -1
        return 0

    # -- LP -------------------------------------------------------------------

    def build_lp(self, node, atoms, xlo, xhi, relax_steps=None):
        L = self.L
        rows_ub, rhs_ub, rows_eq, rhs_eq = [], [], [], []
        strict = False
        for a in atoms:
            row = np.zeros(L.width)
            row[:L.N] = a.coef[:L.N]
            if a.sense == "eq":
                rows_eq.append(row)
                rhs_eq.append(-a.const)
            else:
                if a.sense == "lt":
                    row[L.slack] = 1.0
                    strict = True
                rows_ub.append(row)
                rhs_ub.append(-a.const)
        bounds = [(None, None)] * L.width
        for v in range(L.N):
            bounds[v] = (_fin(xlo[v]), _fin(xhi[v]))
        steps = range(L.depth) if relax_steps is None else relax_steps
        for s in steps:
            for l, layer in enumerate(L.net.layers):
                ins = L.inputs(s, l)
                last = l == len(L.net.layers) - 1
                for j in range(layer.out_dim):
                    w = layer.weights[j]
                    b = layer.bias[j]
                    zrow = np.zeros(L.width)
                    zrow[ins] = w
                    if last:
                        col = s * (L.n + L.m) + L.n + j
                        r = -zrow
                        r[col] += 1.0
                        rows_eq.append(r)
                        rhs_eq.append(b)
                        continue
                    col = L.a_start[(s, l)] + j
                    if layer.activation != "relu":
                        r = -zrow
                        r[col] += 1.0
                        rows_eq.append(r)
                        rhs_eq.append(b)
                        continue
                    ph = self.phase(node, s, l, j)
                    zlo, zhi = node.bounds[(s, l)][0][j], node.bounds[(s, l)][1][j]
                    if ph == 1:
                        r = -zrow
                        r[col] += 1.0
                        rows_eq.append(r)
                        rhs_eq.append(b)
                        rows_ub.append(-zrow)
                        rhs_ub.append(b)
                        bounds[col] = (0.0, _fin(max(zhi, 0.0)))
                    elif ph == -1:
                        rows_ub.append(zrow)
                        rhs_ub.append(-b)
                        bounds[col] = (0.0, 0.0)
                    else:
                        r = zrow.copy()
                        r[col] -= 1.0
                        rows_ub.append(r)
                        rhs_ub.append(-b)
                        bounds[col] = (0.0, _fin(zhi))
                        if np.isfinite(zlo) and np.isfinite(zhi):
                            g = zhi / (zhi - zlo)
                            r = -g * zrow
                            r[col] += 1.0
                            rows_ub.append(r)
                            rhs_ub.append(g * (b - zlo))
        c = np.zeros(L.width)
        if strict:
            c[L.slack] = -1.0
            bounds[L.slack] = (None, 1.0)
        else:
            bounds[L.slack] = (0.0, 0.0)
        return c, rows_ub, rhs_ub, rows_eq, rhs_eq, bounds, strict

    def solve_lp(self, node, atoms, xlo, xhi, objective=None, relax_steps=None):
        c, A, b, E, e, bounds, strict = self.build_lp(node, atoms, xlo, xhi, relax_steps)
        if objective is not None:
            c = np.zeros(self.L.width)
            c[:len(objective)] = objective
            if strict:
                bounds[self.L.slack] = (STRICT_MARGIN, 1.0)
        self.lp_calls += 1
        res = lp.linprog(c, np.array(A).reshape(-1, self.L.width), b,
                         np.array(E).reshape(-1, self.L.width), e, bounds)
        if res.status == "infeasible":
            return None
        if res.status == "unbounded":
            return res
        if strict and objective is None and -res.fun <= STRICT_MARGIN:
            return None
        return res

    # -- search ---------------------------------------------------------------

    def root_box(self):
        """Tighten each input variable's range step by step with LPs."""
        from .query import input_box_atoms

        L = self.L
        xlo, xhi = input_box_atoms(self.q)
        # outputs are unconstrained until propagation
        base = [a for a in self.q.linear if a.sense != "lt"]
        if not base:
            return xlo, xhi
        for s in range(L.depth):
            node = ReluBranchNode()
            node.bounds = self.propagate(node, xlo, xhi)
            if node.bounds is None:
                return None
            self._tighten_y(node, xlo, xhi)
            for v in range(s * (L.n + L.m), s * (L.n + L.m) + L.n):
                for sign in (1.0, -1.0):
                    obj = np.zeros(L.N)
                    obj[v] = sign
                    res = self.solve_lp(node, base, xlo, xhi, objective=obj,
                                        relax_steps=range(s))
                    if res is None:
                        return None
                    if res.status == "optimal":
                        if sign > 0:
                            xlo[v] = max(xlo[v], res.fun)
                        else:
                            xhi[v] = min(xhi[v], -res.fun)
            if np.any(xlo > xhi + LP_TOL):
                return None
            xhi = np.maximum(xhi, xlo)
        return xlo, xhi

    def _tighten_y(self, node, xlo, xhi):
        L = self.L
        for s in range(L.depth):
            ylo, yhi = node.bounds[("y", s)]
            sl = slice(s * (L.n + L.m) + L.n, (s + 1) * (L.n + L.m))
            xlo[sl] = np.maximum(xlo[sl], ylo)
            xhi[sl] = np.minimum(xhi[sl], yhi)

    def witness(self, point):
        """Re-simulate a candidate; return the corrected flat vector if it is a counterexample."""
        L = self.L
        v = point[:L.N].copy()
        for s in range(L.depth):
            base = s * (L.n + L.m)
            v[base + L.n: base + L.n + L.m] = L.net.forward(v[base: base + L.n])
        if self.q.holds_pre(v, TOL_NET) and self.q.violates_post(v, TOL_NET):
            return v
        return None

    def run(self):
        box = self.root_box()
        if box is None:
            return None
        self.xlo, self.xhi = box
        total = self.q.case_count()
        if total == 0:
            return None
        if total <= EAGER_CASE_LIMIT:
            for combo in itertools.product(*(range(len(g)) for g in self.groups)):
                found = self.search(ReluBranchNode(chosen=dict(enumerate(combo))))
                if found is not None:
                    return found
            return None
        return self.search(ReluBranchNode())

    def search(self, root):
        stack = [root]
        while stack:
            node = stack.pop()
            self.nodes += 1
            if self.nodes > self.budget:
                raise ResourceExhausted(self.budget)
            xlo, xhi = self.xlo.copy(), self.xhi.copy()
            atoms = list(self.q.linear)
            for g, c in node.chosen.items():
                atoms.extend(self.groups[g][c])
            node.bounds = self.propagate(node, xlo, xhi)
            if node.bounds is None:
                continue
            self._tighten_y(node, xlo, xhi)
            if np.any(xlo > xhi + LP_TOL):
                continue
            res = self.solve_lp(node, atoms, xlo, xhi)
            if res is None:
                continue
            point = res.x
            w = self.witness(point)
            if w is not None:
                return w
            children = self.branch(node, point)
            if not children:
                self.inconclusive = True
                continue
            stack.extend(reversed(children))
        return None

    def branch(self, node, point):
        # lazily split the first Or-group the relaxed point does not satisfy
        v = point[:self.L.N]
        for g, cases in enumerate(self.groups):
            if g in node.chosen:
                continue
            if not any(all(a.holds(v, LP_TOL) for a in case) for case in cases):
                return [node.child(chosen={g: c}) for c in range(len(cases))]
        best, key = None, None
        for (s, l), (zlo, zhi) in node.bounds.items():
            if s == "y" or self.L.net.layers[l].activation != "relu":
                continue
            for j in range(len(zlo)):
                if (s, l, j) in node.fixed_phases or not (zlo[j] < 0 < zhi[j]):
                    continue
                width = zhi[j] - zlo[j]
                k = (-width, s, l, j)
                if key is None or k < key:
                    key, best = k, (s, l, j)
        if best is not None:
            return [node.child({best: 1}), node.child({best: -1})]
        # every neuron is settled: remaining freedom is in unsatisfied groups only
        for g, cases in enumerate(self.groups):
            if g not in node.chosen:
                return [node.child(chosen={g: c}) for c in range(len(cases))]
        return []


def _fin(v):
    return float(v) if np.isfinite(v) else None


def solve(query, budget=None):
    """Decide the query completely; Unknown only when the node budget runs out."""
    t0 = time.perf_counter()
    solver = Solver(query, budget)
    try:
        found = solver.run()
    except ResourceExhausted:
        return VerifyResult("Unknown", query.depth, None, _stats(solver, t0),
                            query.unrolled, note="node budget exhausted")
    if found is not None:
        return VerifyResult("Falsified", query.depth, found, _stats(solver, t0), query.unrolled)
    if solver.inconclusive:
        return VerifyResult("Unknown", query.depth, None, _stats(solver, t0), query.unrolled,
                            note="numerically inconclusive leaf")
    return VerifyResult("Proven", query.depth, None, _stats(solver, t0), query.unrolled)


def _stats(solver, t0):
    return {"nodes": solver.nodes, "lp_calls": solver.lp_calls,
            "wall_ms": (time.perf_counter() - t0) * 1000.0}
