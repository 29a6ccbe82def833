"""Lower DRLP constraint trees to And/Or formulas of affine atoms.

Variables are the flat ids of an unrolled network, laid out
``[x_0, y_0, x_1, y_1, ...]``.  An atom is ``coef . v + const  (<=|<|==)  0``.
"""
from __future__ import annotations

import numpy as np

from ..drlp import ast
from ..drlp.errors import SemanticError
from ..drlp.script import as_int

DISEQ_GAP = 1e-6


class Atom:
    __slots__ = ("coef", "const", "sense", "tag")

    def __init__(self, coef, const, sense, tag=""):
        self.coef = coef
        self.const = float(const)
        self.sense = sense  # "le", "lt" or "eq"
        self.tag = tag

    def value(self, v):
        return float(self.coef @ v + self.const)

    def holds(self, v, tol=0.0):
        e = self.value(v)
        if self.sense == "eq":
            return abs(e) <= tol
        if self.sense == "lt":
            return e < tol
        return e <= tol

    def vars(self):
        return np.flatnonzero(self.coef)

    def __repr__(self):
        terms = " + ".join(f"{c:g}*v{i}" for i, c in zip(self.vars(), self.coef[self.vars()]))
        op = {"le": "<=", "lt": "<", "eq": "=="}[self.sense]
        return f"Atom({terms or '0'} + {self.const:g} {op} 0)"


class FAnd:
    __slots__ = ("items",)

    def __init__(self, items):
        self.items = list(items)

    def __repr__(self):
        return f"FAnd({self.items})"


class FOr:
    __slots__ = ("items",)

    def __init__(self, items):
        self.items = list(items)

    def __repr__(self):
        return f"FOr({self.items})"


def conj(items):
    flat = []
    for it in items:
        if isinstance(it, FAnd):
            flat.extend(it.items)
        else:
            flat.append(it)
    return flat[0] if len(flat) == 1 else FAnd(flat)


def disj(items):
    flat = []
    for it in items:
        if isinstance(it, FOr):
            flat.extend(it.items)
        else:
            flat.append(it)
    return flat[0] if len(flat) == 1 else FOr(flat)


def negate(f):
    if isinstance(f, Atom):
        if f.sense == "le":
            return Atom(-f.coef, -f.const, "lt", f.tag)
        if f.sense == "lt":
            return Atom(-f.coef, -f.const, "le", f.tag)
        return FOr([Atom(f.coef, f.const, "lt", f.tag), Atom(-f.coef, -f.const, "lt", f.tag)])
    if isinstance(f, FAnd):
        return disj([negate(i) for i in f.items])
    return conj([negate(i) for i in f.items])


def evaluate(f, v, tol=0.0):
    """Truth value of a formula at a concrete assignment."""
    if isinstance(f, Atom):
        return f.holds(v, tol)
    if isinstance(f, FAnd):
        return all(evaluate(i, v, tol) for i in f.items)
    return any(evaluate(i, v, tol) for i in f.items)


def atoms(f):
    if isinstance(f, Atom):
        yield f
    else:
        for i in f.items:
            yield from atoms(i)


def shift_constant(f, column, value):
    """Fix a symbolic column to ``value`` by folding it into the constants."""
    if isinstance(f, Atom):
        c = f.coef.copy()
        k = c[column]
        c[column] = 0.0
        return Atom(c, f.const + k * value, f.sense, f.tag)
    items = [shift_constant(i, column, value) for i in f.items]
    return FAnd(items) if isinstance(f, FAnd) else FOr(items)


class Vec:
    """A vector (or scalar) of affine forms."""

    __slots__ = ("coef", "const", "scalar")

    def __init__(self, coef, const, scalar=False):
        self.coef = coef
        self.const = const
        self.scalar = scalar

    def __len__(self):
        return self.const.shape[0]

    @property
    def is_const(self):
        return not np.any(self.coef)


class Compiler:
    def __init__(self, n, m, depth, env, symbolic=None, extra=0):
        self.n, self.m, self.depth = n, m, depth
        self.env = env
        self.symbolic = dict(symbolic or {})
        self.num_vars = depth * (n + m)
        self.width = self.num_vars + extra
        self.max_step = -1

    # -- helpers --------------------------------------------------------------

    def const(self, values, scalar=False):
        values = np.atleast_1d(np.asarray(values, dtype=float))
        return Vec(np.zeros((len(values), self.width)), values, scalar)

    def var_id(self, step, io, feature):
        base = step * (self.n + self.m)
        return base + feature if io == "x" else base + self.n + feature

    def index_value(self, expr, scope):
        v = self.eval(expr, scope)
        if not v.is_const or not v.scalar:
            raise SemanticError("index expressions must be constant scalars")
        return as_int(float(v.const[0]), "index")

    def _positions(self, sub, size, scope, what):
        if sub is None:
            return list(range(size))
        if isinstance(sub, ast.Index):
            i = self.index_value(sub.value, scope)
            if not 0 <= i < size:
                raise SemanticError(f"{what} index {i} out of bounds (size {size})")
            return [i]
        start = 0 if sub.start is None else self.index_value(sub.start, scope)
        stop = size if sub.stop is None else self.index_value(sub.stop, scope)
        step = 1 if sub.step is None else self.index_value(sub.step, scope)
        if not 0 <= start <= stop <= size or step <= 0:
            raise SemanticError(f"{what} slice [{start}:{stop}] out of bounds (size {size})")
        return list(range(start, stop, step))

    # -- expressions ----------------------------------------------------------

    def eval(self, expr, scope):
        if isinstance(expr, ast.Num):
            return self.const([expr.value], scalar=True)
        if isinstance(expr, ast.Name):
            name = expr.id
            if name in scope:
                return self.const([scope[name]], scalar=True)
            if name == "k":
                return self.const([self.depth], scalar=True)
            if name in self.symbolic:
                v = self.const([0.0], scalar=True)
                v.coef[0, self.symbolic[name]] = 1.0
                return v
            if name not in self.env:
                raise SemanticError(f"unbound identifier {name!r}")
            value = self.env[name]
            if isinstance(value, list):
                return self.const(_flatten(value))
            return self.const([value], scalar=True)
        if isinstance(expr, ast.Item):
            if expr.name not in self.env or not isinstance(self.env[expr.name], list):
                raise SemanticError(f"{expr.name!r} is not a bound list")
            seq = self.env[expr.name]
            i = self.index_value(expr.index, scope)
            if not 0 <= i < len(seq):
                raise SemanticError(f"index {i} out of bounds for {expr.name!r}")
            item = seq[i]
            if isinstance(item, list):
                return self.const(_flatten(item))
            return self.const([item], scalar=True)
        if isinstance(expr, ast.ListLit):
            parts = [self.eval(i, scope) for i in expr.items]
            if not parts:
                raise SemanticError("empty list literal")
            coef = np.vstack([p.coef for p in parts])
            const = np.concatenate([p.const for p in parts])
            return Vec(coef, const)
        if isinstance(expr, ast.IoRef):
            return self.io(expr, scope)
        if isinstance(expr, ast.Unary):
            v = self.eval(expr.operand, scope)
            return Vec(-v.coef, -v.const, v.scalar)
        if isinstance(expr, ast.BinOp):
            return self.binop(expr, scope)
        raise SemanticError(f"unsupported expression {type(expr).__name__}")

    def io(self, ref, scope):
        size = self.n if ref.io == "x" else self.m
        subs = list(ref.subs)
        if not subs:
            steps = list(range(self.depth))
        else:
            steps = self._positions(subs[0], self.depth, scope, "step")
            self.max_step = max(self.max_step, max(steps, default=-1))
        feats = self._positions(subs[1] if len(subs) > 1 else None, size, scope, "feature")
        ids = [self.var_id(s, ref.io, f) for s in steps for f in feats]
        coef = np.zeros((len(ids), self.width))
        coef[np.arange(len(ids)), ids] = 1.0
        scalar = len(subs) == 2 and isinstance(subs[1], ast.Index) and \
            isinstance(subs[0], ast.Index)
        return Vec(coef, np.zeros(len(ids)), scalar)

    def binop(self, expr, scope):
        op = expr.op
        if op == "*":
            for lst, cnt in ((expr.left, expr.right), (expr.right, expr.left)):
                if isinstance(lst, ast.ListLit):
                    c = self.eval(cnt, scope)
                    if c.is_const and c.scalar:
                        v = self.eval(lst, scope)
                        reps = as_int(float(c.const[0]), "list repetition count")
                        return Vec(np.tile(v.coef, (reps, 1)), np.tile(v.const, reps))
        a = self.eval(expr.left, scope)
        b = self.eval(expr.right, scope)
        a, b = _broadcast(a, b)
        scalar = a.scalar and b.scalar
        if op == "+":
            return Vec(a.coef + b.coef, a.const + b.const, scalar)
        if op == "-":
            return Vec(a.coef - b.coef, a.const - b.const, scalar)
        if op == "*":
            if a.is_const:
                return Vec(a.const[:, None] * b.coef, a.const * b.const, scalar)
            if b.is_const:
                return Vec(b.const[:, None] * a.coef, a.const * b.const, scalar)
            raise SemanticError("non-affine expression: product of two model variables")
        if not b.is_const:
            raise SemanticError("non-affine expression: division by a model variable")
        if np.any(b.const == 0):
            raise SemanticError("division by zero")
        return Vec(a.coef / b.const[:, None], a.const / b.const, scalar)

    # -- constraints ----------------------------------------------------------

    def comparison(self, node, scope):
        vals = [self.eval(e, scope) for e in node.operands]
        out = []
        for op, lhs, rhs in zip(node.ops, vals, vals[1:]):
            lhs, rhs = _broadcast(lhs, rhs)
            diff_c = lhs.coef - rhs.coef
            diff_k = lhs.const - rhs.const
            if op == "!=":
                parts = []
                for i in range(len(diff_k)):
                    parts.append(Atom(diff_c[i], diff_k[i] + DISEQ_GAP, "le", "diseq"))
                    parts.append(Atom(-diff_c[i], -diff_k[i] + DISEQ_GAP, "le", "diseq"))
                out.append(disj(parts))
                continue
            for i in range(len(diff_k)):
                c, k = diff_c[i], diff_k[i]
                if op == "<=":
                    out.append(Atom(c, k, "le"))
                elif op == "<":
                    out.append(Atom(c, k, "lt"))
                elif op == ">=":
                    out.append(Atom(-c, -k, "le"))
                elif op == ">":
                    out.append(Atom(-c, -k, "lt"))
                elif op == "==":
                    out.append(Atom(c, k, "eq"))
                else:
                    raise SemanticError(f"unknown comparator {op!r}")
        return conj(out)

    def node(self, node, scope=None):
        scope = scope or {}
        if isinstance(node, ast.Comparison):
            return self.comparison(node, scope)
        if isinstance(node, ast.And):
            return conj([self.node(c, scope) for c in node.children])
        if isinstance(node, ast.Or):
            return disj([self.node(c, scope) for c in node.children])
        if isinstance(node, ast.Implies):
            return disj([negate(self.node(node.premise, scope)),
                         self.node(node.conclusion, scope)])
        if isinstance(node, ast.ForLoop):
            lo = self.index_value(node.lo, scope)
            hi = self.index_value(node.hi, scope)
            step = self.index_value(node.step, scope)
            if step <= 0:
                raise SemanticError("loop step must be positive")
            iters = []
            for i in range(lo, hi, step):
                inner = dict(scope)
                inner[node.var] = i
                iters.append(conj([self.node(c, inner) for c in node.body]))
            return conj(iters) if node.kind == "range" else disj(iters)
        raise SemanticError(f"unsupported node {type(node).__name__}")


def _flatten(value):
    out = []
    for v in value:
        if isinstance(v, list):
            out.extend(_flatten(v))
        else:
            out.append(float(v))
    return out


def _broadcast(a, b):
    if len(a) == len(b):
        return a, b
    if len(a) == 1 and a.scalar:
        return Vec(np.repeat(a.coef, len(b), 0), np.repeat(a.const, len(b)), True), b
    if len(b) == 1 and b.scalar:
        return a, Vec(np.repeat(b.coef, len(a), 0), np.repeat(b.const, len(a)), True)
    raise SemanticError(f"length mismatch in expression: {len(a)} vs {len(b)}")


def compiler_for(script, depth, symbolic=None):
    extra = len(symbolic or {})
    return Compiler(script.x_size, script.y_size, depth, script.env, symbolic, extra)


def max_step_referenced(script):
    """Largest step index a k-free script refers to (0 for one-shot scripts)."""
    probe = 64
    c = compiler_for(script, probe)
    for node in script.precondition.children + script.postcondition.children:
        c.node(node)
    return max(c.max_step, 0)


def steps_of(f, n, m):
    """Set of (io, step) pairs touched by a formula."""
    out = set()
    width = n + m
    for a in atoms(f):
        for v in a.vars():
            step, off = divmod(int(v), width)
            out.add(("x" if off < n else "y", step))
    return out
