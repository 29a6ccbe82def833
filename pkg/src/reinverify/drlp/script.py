"""DRLP scripts, templates, and the operations that concretize them."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Any, Tuple

from . import ast
from .errors import ExpansionError, SemanticError, UnknownParameter
from .parser import RESERVED, TOLERANCE_NAMES, parse_raw, patch_tolerance


def freeze(value):
    if isinstance(value, (list, tuple)):
        return tuple(freeze(v) for v in value)
    return value


def thaw(value):
    if isinstance(value, tuple):
        return [thaw(v) for v in value]
    return value


@dataclass(frozen=True)
class DrlpScript:
    """A parsed property.

    ``variables`` holds the evaluated variables segment in declaration order;
    iterable names keep their leading underscore until expanded.
    """

    variables: Tuple[Tuple[str, Any], ...]
    precondition: ast.And
    postcondition: ast.And
    x_size: int
    y_size: int
    declared: Tuple[str, ...] = ()

    @property
    def env(self):
        return {name: thaw(v) for name, v in self.variables if not name.startswith("_")}

    @property
    def iterables(self):
        return tuple(name[1:] for name, _ in self.variables if name.startswith("_"))

    def references_k(self):
        for root in (self.precondition, self.postcondition):
            for node in ast.walk(root):
                if isinstance(node, ast.Name) and node.id == "k":
                    return True
        return False

    def fixed_depth(self):
        """Unroll depth implied by a script that never mentions ``k``.

        Returns ``None`` when the script is written against ``k``.
        """
        if self.references_k():
            return None
        from ..verify.compile import max_step_referenced
        return max_step_referenced(self) + 1


@dataclass(frozen=True)
class DrlpTemplate:
    """A script with parameters still to be supplied."""

    script: DrlpScript
    free_parameters: Tuple[str, ...]

    @property
    def unassigned(self):
        its = set(self.script.iterables)
        return tuple(p for p in self.free_parameters if p not in its)


# -- constant evaluation -----------------------------------------------------

class Unbound(SemanticError):
    pass


def const_eval(expr, env):
    """Evaluate a model-variable-free expression with Python list semantics."""
    if isinstance(expr, ast.Num):
        return expr.value
    if isinstance(expr, ast.Name):
        if expr.id not in env:
            raise Unbound(f"unbound identifier {expr.id!r}")
        return env[expr.id]
    if isinstance(expr, ast.ListLit):
        return [const_eval(i, env) for i in expr.items]
    if isinstance(expr, ast.Item):
        if expr.name not in env:
            raise Unbound(f"unbound identifier {expr.name!r}")
        seq = env[expr.name]
        idx = const_eval(expr.index, env)
        if not isinstance(seq, list):
            raise SemanticError(f"{expr.name!r} is not a list")
        return seq[as_int(idx, "list index")]
    if isinstance(expr, ast.Unary):
        v = const_eval(expr.operand, env)
        if isinstance(v, list):
            return [-_scalar(i) for i in v]
        return -v
    if isinstance(expr, ast.BinOp):
        a = const_eval(expr.left, env)
        b = const_eval(expr.right, env)
        if expr.op == "*" and isinstance(a, list) and not isinstance(b, list):
            return a * as_int(b, "list repetition count")
        if expr.op == "*" and isinstance(b, list) and not isinstance(a, list):
            return b * as_int(a, "list repetition count")
        if isinstance(a, list) or isinstance(b, list):
            if expr.op == "+" and isinstance(a, list) and isinstance(b, list):
                return a + b
            raise SemanticError(f"unsupported list operation {expr.op!r}")
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        if b == 0:
            raise SemanticError("division by zero")
        return a / b
    if isinstance(expr, ast.IoRef):
        raise SemanticError("model variables are not allowed here")
    raise SemanticError(f"cannot evaluate {type(expr).__name__}")


def _scalar(v):
    if isinstance(v, list):
        raise SemanticError("nested lists are not allowed here")
    return v


def as_int(v, what):
    if isinstance(v, bool) or isinstance(v, list):
        raise SemanticError(f"{what} must be an integer")
    if isinstance(v, float):
        if not v.is_integer():
            raise SemanticError(f"{what} must be an integer, got {v}")
        return int(v)
    return int(v)


# -- static analysis ---------------------------------------------------------

def has_io(expr):
    return any(isinstance(n, ast.IoRef) for n in ast.walk(expr))


def _check_affine(expr):
    for n in ast.walk(expr):
        if isinstance(n, ast.BinOp):
            if n.op == "*" and has_io(n.left) and has_io(n.right):
                raise SemanticError("non-affine expression: product of two model variables")
            if n.op == "/" and has_io(n.right):
                raise SemanticError("non-affine expression: division by a model variable")


def _names(expr):
    return {n.id for n in ast.walk(expr) if isinstance(n, ast.Name)} | \
        {n.name for n in ast.walk(expr) if isinstance(n, ast.Item)}


class _Scanner:
    """Collect free names and check dimension positions, respecting loop scope."""

    def __init__(self, bound):
        self.bound = set(bound)
        self.free = []

    def _use(self, names, scope):
        for n in sorted(names):
            if n in RESERVED or n in scope or n in self.bound:
                continue
            if n not in self.free:
                self.free.append(n)

    def _dimension(self, expr, scope):
        for n in _names(expr):
            if n not in RESERVED and n not in scope and n not in self.bound:
                raise SemanticError(f"unbound identifier {n!r} used in a dimension position")

    def _expr(self, expr, scope):
        _check_affine(expr)
        for n in ast.walk(expr):
            if isinstance(n, ast.IoRef):
                for s in n.subs:
                    parts = (s.value,) if isinstance(s, ast.Index) else (s.start, s.stop, s.step)
                    for p in parts:
                        if p is not None:
                            self._dimension(p, scope)
            elif isinstance(n, ast.Item):
                self._dimension(n.index, scope)
        # names outside subscripts
        self._use(self._value_names(expr), scope)

    def _value_names(self, expr):
        out = set()
        if isinstance(expr, ast.Name):
            out.add(expr.id)
        elif isinstance(expr, ast.Item):
            out.add(expr.name)
        elif isinstance(expr, ast.ListLit):
            for i in expr.items:
                out |= self._value_names(i)
        elif isinstance(expr, ast.Unary):
            out |= self._value_names(expr.operand)
        elif isinstance(expr, ast.BinOp):
            out |= self._value_names(expr.left) | self._value_names(expr.right)
        return out

    def node(self, node, scope=frozenset()):
        if isinstance(node, ast.Comparison):
            for e in node.operands:
                self._expr(e, scope)
        elif isinstance(node, (ast.And, ast.Or, ast.Implies)):
            for c in node.children:
                self.node(c, scope)
        elif isinstance(node, ast.ForLoop):
            for e in (node.lo, node.hi, node.step):
                self._dimension(e, scope)
            inner = scope | {node.var}
            for c in node.body:
                self.node(c, inner)


def _static_len(expr, env):
    """Length of a constant vector expression, or None if unknown/scalar."""
    if isinstance(expr, ast.ListLit):
        return len(expr.items)
    if isinstance(expr, ast.Name):
        v = env.get(expr.id)
        return len(v) if isinstance(v, list) else None
    if isinstance(expr, ast.Unary):
        return _static_len(expr.operand, env)
    if isinstance(expr, ast.BinOp):
        if expr.op == "*":
            for lst, cnt in ((expr.left, expr.right), (expr.right, expr.left)):
                if isinstance(lst, ast.ListLit) and not has_io(cnt):
                    try:
                        c = const_eval(cnt, env)
                    except SemanticError:
                        return None
                    if not isinstance(c, list):
                        return len(lst.items) * as_int(c, "list repetition count")
        a, b = _static_len(expr.left, env), _static_len(expr.right, env)
        return a if a is not None else b
    return None


def _try_const(expr, env):
    try:
        return const_eval(expr, env)
    except SemanticError:
        return None


def infer_sizes(nodes, env, declared):
    found = {"x": set(), "y": set()}
    for root in nodes:
        for n in ast.walk(root):
            if isinstance(n, ast.IoRef) and len(n.subs) == 2:
                s = n.subs[1]
                if isinstance(s, ast.Index):
                    v = _try_const(s.value, env)
                    if isinstance(v, (int, float)):
                        found[n.io].add(int(v) + 1)
                elif s.stop is not None:
                    v = _try_const(s.stop, env)
                    if isinstance(v, (int, float)):
                        found[n.io].add(int(v))
            if isinstance(n, ast.Comparison):
                rows = [e for e in n.operands if isinstance(e, ast.IoRef) and len(e.subs) == 1
                        and isinstance(e.subs[0], ast.Index)]
                lengths = [_static_len(e, env) for e in n.operands]
                lengths = [L for L in lengths if L is not None]
                for r in rows:
                    for L in lengths:
                        found[r.io].add(L)
                for e in n.operands:
                    if isinstance(e, ast.BinOp) and not isinstance(e, ast.IoRef):
                        for sub in ast.walk(e):
                            if isinstance(sub, ast.IoRef) and len(sub.subs) == 1 and \
                                    isinstance(sub.subs[0], ast.Index):
                                L = _static_len(e, env)
                                if L is not None:
                                    found[sub.io].add(L)
    sizes = {}
    for io in ("x", "y"):
        key = f"{io}_size"
        if key in declared:
            sizes[io] = declared[key]
        elif found[io]:
            sizes[io] = max(found[io])
        else:
            raise SemanticError(f"{key} cannot be inferred; declare it explicitly")
    return sizes["x"], sizes["y"]


def _check_feature_bounds(nodes, env, x_size, y_size):
    size = {"x": x_size, "y": y_size}
    for root in nodes:
        for n in ast.walk(root):
            if not isinstance(n, ast.IoRef) or len(n.subs) < 2:
                continue
            s = n.subs[1]
            lim = size[n.io]
            if isinstance(s, ast.Index):
                v = _try_const(s.value, env)
                if isinstance(v, (int, float)) and not 0 <= v < lim:
                    raise SemanticError(f"feature index {v} out of bounds for {n.io} "
                                        f"of size {lim}")
            else:
                a = 0 if s.start is None else _try_const(s.start, env)
                b = lim if s.stop is None else _try_const(s.stop, env)
                if isinstance(a, (int, float)) and isinstance(b, (int, float)):
                    if not 0 <= a <= b <= lim:
                        raise SemanticError(f"slice [{a}:{b}] out of bounds for {n.io} "
                                            f"of size {lim}")


# -- public API --------------------------------------------------------------

def parse(source):
    """Parse DRLP text into a DrlpScript, or a DrlpTemplate if parameters remain."""
    assigns, sizes, pre, post = parse_raw(source)
    variables = []
    env = {}
    infer_env = {}
    for name, expr in assigns:
        value = const_eval(expr, env)
        if name.startswith("_"):
            if not isinstance(value, list):
                raise SemanticError(f"iterable variable {name!r} must be a list")
            infer_env[name[1:]] = value[0] if value else 0
        else:
            env[name] = value
            infer_env[name] = value
        variables.append((name, freeze(value)))
    tol = next((t for t in TOLERANCE_NAMES if t in infer_env), None)
    pre = patch_tolerance(pre, tol)
    post = patch_tolerance(post, tol)

    bound = set(infer_env)
    scanner = _Scanner(bound)
    for node in pre + post:
        scanner.node(node)
    x_size, y_size = infer_sizes(pre + post, infer_env, sizes)
    _check_feature_bounds(pre + post, infer_env, x_size, y_size)

    script = DrlpScript(tuple(variables), ast.And(pre), ast.And(post), x_size, y_size,
                        tuple(sorted(sizes)))
    free = tuple(n for n, _ in variables if n.startswith("_"))
    free = tuple(n[1:] for n in free) + tuple(scanner.free)
    if free:
        return DrlpTemplate(script, free)
    return script


def load(path):
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def _without_var(variables, name):
    return tuple((n, v) for n, v in variables if n != name)


def _finish(script, free):
    return DrlpTemplate(script, free) if free else script


def concretize(template, var, value):
    """Substitute ``value`` for the free parameter ``var``."""
    if isinstance(template, DrlpScript) or var not in template.free_parameters:
        raise UnknownParameter(f"{var!r} is not a free parameter")
    s = template.script
    mapping = {var: thaw(value) if isinstance(value, tuple) else value}
    pre = ast.substitute(s.precondition, mapping)
    post = ast.substitute(s.postcondition, mapping)
    variables = _without_var(s.variables, "_" + var)
    script = replace(s, variables=variables, precondition=pre, postcondition=post)
    free = tuple(p for p in template.free_parameters if p != var)
    return _finish(script, free)


def concretize_many(template, values):
    out = template
    for var, value in values.items():
        out = concretize(out, var, value)
    return out


def expand_iterables(template):
    """One script per element of the Cartesian product of iterable values."""
    if isinstance(template, DrlpScript):
        return [template]
    s = template.script
    its = [(n, v) for n, v in s.variables if n.startswith("_")]
    if not its:
        return [template]
    for name, values in its:
        if not isinstance(values, tuple):
            raise ExpansionError(f"iterable {name!r} is not a list")
        if len(values) == 0:
            raise ExpansionError(f"iterable {name!r} is empty")
    remaining = tuple(p for p in template.free_parameters
                      if p not in {n[1:] for n, _ in its})
    out = []
    for combo in itertools.product(*(values for _, values in its)):
        chosen = dict(zip((n for n, _ in its), combo))
        variables = []
        for n, v in s.variables:
            if n in chosen:
                variables.append((n[1:], chosen[n]))
            else:
                variables.append((n, v))
        out.append(_finish(replace(s, variables=tuple(variables)), remaining))
    return out
