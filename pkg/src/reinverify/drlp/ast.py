"""Immutable syntax tree for DRLP expressions and constraint trees.

Every node is a frozen dataclass, so ``==`` is structural equality and nodes
can be shared freely between threads.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, is_dataclass
from typing import Optional, Tuple, Union

# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: Union[int, float]


@dataclass(frozen=True)
class Name:
    id: str


@dataclass(frozen=True)
class ListLit:
    items: Tuple["Expr", ...]


@dataclass(frozen=True)
class Index:
    value: "Expr"


@dataclass(frozen=True)
class Slice:
    start: Optional["Expr"]
    stop: Optional["Expr"]
    step: Optional["Expr"] = None


Subscript = Union[Index, Slice]


@dataclass(frozen=True)
class IoRef:
    """Reference to the unrolled input ``x`` or output ``y`` matrix."""

    io: str
    subs: Tuple[Subscript, ...] = ()


@dataclass(frozen=True)
class Item:
    """``name[i]`` on a bound (non-model) list variable."""

    name: str
    index: "Expr"


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Name, ListLit, IoRef, Item, Unary, BinOp]

# -- constraint tree ---------------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    """A comparison chain ``e0 op0 e1 op1 e2 ...``."""

    operands: Tuple[Expr, ...]
    ops: Tuple[str, ...]


@dataclass(frozen=True)
class And:
    children: Tuple["Node", ...]


@dataclass(frozen=True)
class Or:
    children: Tuple["Node", ...]


@dataclass(frozen=True)
class Implies:
    premise: "Node"
    conclusion: "Node"

    @property
    def children(self):
        return (self.premise, self.conclusion)


@dataclass(frozen=True)
class ForLoop:
    kind: str  # "range" or "orange"
    var: str
    lo: Expr
    hi: Expr
    step: Expr
    body: Tuple["Node", ...]


Node = Union[Comparison, And, Or, Implies, ForLoop]

COMPARATORS = ("<=", "<", ">=", ">", "==", "!=")


def walk(node):
    """Yield ``node`` and every dataclass node beneath it, depth first."""
    yield node
    if not is_dataclass(node):
        return
    for f in fields(node):
        value = getattr(node, f.name)
        if isinstance(value, tuple):
            for v in value:
                if is_dataclass(v):
                    yield from walk(v)
        elif is_dataclass(value):
            yield from walk(value)


def to_json(node):
    """Plain-data dump of a node, used by ``--emit-ast``."""
    if isinstance(node, tuple):
        return [to_json(n) for n in node]
    if not is_dataclass(node):
        return node
    out = {"node": type(node).__name__}
    for f in fields(node):
        out[f.name] = to_json(getattr(node, f.name))
    return out


def substitute(node, mapping):
    """Return ``node`` with every ``Name`` in ``mapping`` replaced by a literal.

    Loop variables shadow outer names inside their body.
    """
    if isinstance(node, Name):
        if node.id in mapping:
            return literal(mapping[node.id])
        return node
    if isinstance(node, ForLoop):
        inner = {k: v for k, v in mapping.items() if k != node.var}
        return ForLoop(node.kind, node.var,
                       substitute(node.lo, mapping), substitute(node.hi, mapping),
                       substitute(node.step, mapping),
                       tuple(substitute(b, inner) for b in node.body))
    if isinstance(node, Item):
        if node.name in mapping and isinstance(mapping[node.name], (list, tuple)):
            return _index_literal(mapping[node.name], node, mapping)
        return Item(node.name, substitute(node.index, mapping))
    if not is_dataclass(node):
        return node
    kwargs = {}
    for f in fields(node):
        value = getattr(node, f.name)
        if isinstance(value, tuple):
            kwargs[f.name] = tuple(substitute(v, mapping) if is_dataclass(v) else v
                                   for v in value)
        elif is_dataclass(value):
            kwargs[f.name] = substitute(value, mapping)
        else:
            kwargs[f.name] = value
    out = type(node)(**kwargs)
    if isinstance(out, Unary) and isinstance(out.operand, Num):
        return Num(-out.operand.value)
    return out


def _index_literal(value, node, mapping):
    idx = substitute(node.index, mapping)
    if isinstance(idx, Num):
        return literal(value[int(idx.value)])
    return Item(node.name, idx)


def literal(value):
    """Build the literal node for a Python scalar or (nested) list."""
    if isinstance(value, (list, tuple)):
        return ListLit(tuple(literal(v) for v in value))
    if isinstance(value, bool):
        raise TypeError("booleans are not DRLP values")
    if isinstance(value, int):
        return Num(value)
    value = float(value)
    if value.is_integer() and abs(value) < 2**53:
        return Num(int(value))
    return Num(value)
