"""Render scripts back to DRLP source text."""
from __future__ import annotations

from . import ast
from .script import DrlpScript, DrlpTemplate, thaw

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
INDENT = "    "


def fmt_number(v):
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def fmt_value(v):
    v = thaw(v) if isinstance(v, tuple) else v
    if isinstance(v, list):
        return "[" + ", ".join(fmt_value(i) for i in v) + "]"
    return fmt_number(v)


def expr(e, parent=0, right=False):
    if isinstance(e, ast.Num):
        s = fmt_number(e.value)
        # a negative literal under a binary operator needs parentheses to survive reparsing
        return f"({s})" if e.value < 0 and parent else s
    if isinstance(e, ast.Name):
        return e.id
    if isinstance(e, ast.ListLit):
        return "[" + ", ".join(expr(i) for i in e.items) + "]"
    if isinstance(e, ast.Item):
        return f"{e.name}[{expr(e.index)}]"
    if isinstance(e, ast.IoRef):
        return e.io + "".join(_sub(s) for s in e.subs)
    if isinstance(e, ast.Unary):
        inner = expr(e.operand, 3)
        s = f"-{inner}"
        return f"({s})" if parent else s
    if isinstance(e, ast.BinOp):
        p = _PREC[e.op]
        s = f"{expr(e.left, p)} {e.op} {expr(e.right, p, right=True)}"
        if p < parent or (right and p == parent):
            return f"({s})"
        return s
    raise TypeError(type(e).__name__)


def _sub(s):
    if isinstance(s, ast.Index):
        return f"[{expr(s.value)}]"
    parts = ["" if p is None else expr(p) for p in (s.start, s.stop)]
    if s.step is not None:
        parts.append(expr(s.step))
    return "[" + ":".join(parts) + "]"


def call_form(node):
    if isinstance(node, ast.Comparison):
        out = [expr(node.operands[0])]
        for op, e in zip(node.ops, node.operands[1:]):
            out.append(f"{op} {expr(e)}")
        return " ".join(out)
    if isinstance(node, ast.And):
        return "And(" + ", ".join(call_form(c) for c in node.children) + ")"
    if isinstance(node, ast.Or):
        return "Or(" + ", ".join(call_form(c) for c in node.children) + ")"
    if isinstance(node, ast.Implies):
        return f"Implies({call_form(node.premise)}, {call_form(node.conclusion)})"
    raise TypeError("loops cannot appear inside a call")


def statement(node, depth=0):
    pad = INDENT * depth
    if isinstance(node, ast.ForLoop):
        args = [expr(node.lo), expr(node.hi)]
        if node.step != ast.Num(1):
            args.append(expr(node.step))
        lines = [f"{pad}for {node.var} in {node.kind}({', '.join(args)}):"]
        for c in node.body:
            lines.extend(statement(c, depth + 1))
        return lines
    if isinstance(node, (ast.And, ast.Or)):
        kind = "range" if isinstance(node, ast.And) else "orange"
        lines = [f"{pad}with {kind}:"]
        for c in node.children:
            lines.extend(statement(c, depth + 1))
        return lines
    return [pad + call_form(node)]


def to_source(script):
    """Pretty-print a script or template; reparsing yields an equal AST."""
    if isinstance(script, DrlpTemplate):
        script = script.script
    assert isinstance(script, DrlpScript)
    lines = [f"{name} = {fmt_value(v)}" for name, v in script.variables]
    lines.append("@Pre")
    for name in script.declared:
        lines.append(f"{name} = {script.x_size if name == 'x_size' else script.y_size}")
    for c in script.precondition.children:
        lines.extend(statement(c))
    lines.append("@Exp")
    for c in script.postcondition.children:
        lines.extend(statement(c))
    return "\n".join(lines) + "\n"
