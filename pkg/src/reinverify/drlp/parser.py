"""Recursive-descent parser for DRLP scripts.

A script has three segments: free-form variable assignments, the
precondition after an ``@Pre`` line and the postcondition after an ``@Exp``
line.  Statements inside a segment are joined by And; ``with orange:`` blocks
and ``orange`` loops switch to Or.
"""
from __future__ import annotations

from . import ast
from .errors import DrlpSyntaxError, SemanticError
from .lexer import KEYWORDS, tokenize

CALLS = {"And", "Or", "Implies", "Impiles"}
CMP_OPS = {"<=", "<", ">=", ">", "==", "!=", "~="}
RESERVED = {"x", "y", "k"}
SIZE_NAMES = ("x_size", "y_size")
TOLERANCE_NAMES = ("y_eps", "eps")


def split_segments(source):
    """Split source text into (variables, pre, exp) line lists with offsets."""
    lines = source.splitlines()
    pre_at = exp_at = None
    for i, line in enumerate(lines):
        s = line.strip()
        if s == "@Pre":
            if pre_at is not None:
                raise DrlpSyntaxError(i + 1, 1, "a single @Pre delimiter")
            pre_at = i
        elif s == "@Exp":
            if exp_at is not None:
                raise DrlpSyntaxError(i + 1, 1, "a single @Exp delimiter")
            exp_at = i
    if pre_at is None:
        raise DrlpSyntaxError(1, 1, "@Pre")
    if exp_at is None or exp_at < pre_at:
        raise DrlpSyntaxError(len(lines) or 1, 1, "@Exp after @Pre")
    return ((lines[:pre_at], 1),
            (lines[pre_at + 1:exp_at], pre_at + 2),
            (lines[exp_at + 1:], exp_at + 2))


class Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    # -- token helpers -------------------------------------------------------

    @property
    def tok(self):
        return self.tokens[self.pos]

    def peek(self, n=1):
        i = min(self.pos + n, len(self.tokens) - 1)
        return self.tokens[i]

    def error(self, expected):
        t = self.tok
        raise DrlpSyntaxError(t.line, t.column, expected, t.value or t.kind)

    def at(self, kind, value=None):
        t = self.tok
        return t.kind == kind and (value is None or t.value == value)

    def at_op(self, value):
        return self.at("OP", value)

    def expect(self, kind, value=None, what=None):
        if not self.at(kind, value):
            self.error(what or repr(value) if value else what or kind)
        t = self.tok
        self.pos += 1
        return t

    def expect_op(self, value):
        return self.expect("OP", value, repr(value))

    # -- statements ----------------------------------------------------------

    def parse_assignments(self):
        """Variables segment: ``name = value`` lines."""
        out = []
        while not self.at("EOF"):
            name = self.expect("NAME", what="assignment target").value
            self.expect_op("=")
            value = self.parse_arith()
            self.expect("NEWLINE", what="end of line")
            out.append((name, value))
        return out

    def parse_segment(self, allow_sizes):
        sizes = {}
        stmts = []
        while not self.at("EOF"):
            if (allow_sizes and self.at("NAME") and self.tok.value in SIZE_NAMES
                    and self.peek().kind == "OP" and self.peek().value == "="):
                name = self.tok.value
                self.pos += 2
                tok = self.tok
                value = self.parse_arith()
                if not isinstance(value, ast.Num) or not isinstance(value.value, int) \
                        or value.value <= 0:
                    raise DrlpSyntaxError(tok.line, tok.column, f"positive integer for {name}")
                sizes[name] = value.value
                self.expect("NEWLINE", what="end of line")
                continue
            stmts.append(self.parse_statement())
        return sizes, stmts

    def parse_statement(self):
        if self.at("NAME", "for"):
            return self.parse_for()
        if self.at("NAME", "with"):
            return self.parse_with()
        node = self.parse_simple()
        self.expect("NEWLINE", what="end of statement")
        return node

    def parse_block(self):
        if self.at("NEWLINE"):
            self.pos += 1
            self.expect("INDENT", what="indented block")
            body = []
            while not self.at("DEDENT") and not self.at("EOF"):
                body.append(self.parse_statement())
            self.expect("DEDENT", what="end of block")
            if not body:
                self.error("statement")
            return tuple(body)
        node = self.parse_simple()
        self.expect("NEWLINE", what="end of statement")
        return (node,)

    def parse_range_type(self):
        if not (self.at("NAME", "range") or self.at("NAME", "orange")):
            self.error("'range' or 'orange'")
        kind = self.tok.value
        self.pos += 1
        return kind

    def parse_for(self):
        self.expect("NAME", "for")
        var = self.expect("NAME", what="loop variable")
        if var.value in KEYWORDS or var.value in RESERVED:
            raise DrlpSyntaxError(var.line, var.column, "loop variable name", var.value)
        self.expect("NAME", "in", "'in'")
        kind = self.parse_range_type()
        self.expect_op("(")
        args = [self.parse_arith()]
        while self.at_op(","):
            self.pos += 1
            args.append(self.parse_arith())
        self.expect_op(")")
        if len(args) > 3:
            self.error("at most three range arguments")
        self.expect_op(":")
        body = self.parse_block()
        if len(args) == 1:
            lo, hi, step = ast.Num(0), args[0], ast.Num(1)
        elif len(args) == 2:
            lo, hi, step = args[0], args[1], ast.Num(1)
        else:
            lo, hi, step = args
        return ast.ForLoop(kind, var.value, lo, hi, step, body)

    def parse_with(self):
        self.expect("NAME", "with")
        kind = self.parse_range_type()
        self.expect_op(":")
        body = self.parse_block()
        return ast.And(body) if kind == "range" else ast.Or(body)

    def parse_simple(self):
        if self.at("NAME") and self.tok.value in CALLS and self.peek().value == "(":
            return self.parse_call()
        return self.parse_comparison()

    def parse_call(self):
        name = self.tok
        self.pos += 1
        self.expect_op("(")
        args = [self.parse_simple()]
        while self.at_op(","):
            self.pos += 1
            args.append(self.parse_simple())
        self.expect_op(")")
        if name.value in ("Implies", "Impiles"):
            if len(args) != 2:
                raise DrlpSyntaxError(name.line, name.column, "Implies with two arguments")
            return ast.Implies(args[0], args[1])
        return ast.And(tuple(args)) if name.value == "And" else ast.Or(tuple(args))

    def parse_comparison(self):
        start = self.tok
        operands = [self.parse_arith()]
        ops = []
        while self.at("OP") and self.tok.value in CMP_OPS:
            ops.append(self.tok.value)
            self.pos += 1
            operands.append(self.parse_arith())
        if not ops:
            raise DrlpSyntaxError(start.line, start.column, "comparison operator",
                                  self.tok.value or self.tok.kind)
        return desugar_approx(operands, ops, start)

    # -- expressions ---------------------------------------------------------

    def parse_arith(self):
        left = self.parse_term()
        while self.at_op("+") or self.at_op("-"):
            op = self.tok.value
            self.pos += 1
            left = ast.BinOp(op, left, self.parse_term())
        return left

    def parse_term(self):
        left = self.parse_unary()
        while self.at_op("*") or self.at_op("/"):
            op = self.tok.value
            self.pos += 1
            left = ast.BinOp(op, left, self.parse_unary())
        return left

    def parse_unary(self):
        if self.at_op("-") or self.at_op("+"):
            op = self.tok.value
            self.pos += 1
            operand = self.parse_unary()
            if op == "+":
                return operand
            if isinstance(operand, ast.Num):
                return ast.Num(-operand.value)
            return ast.Unary("-", operand)
        return self.parse_atom()

    def parse_atom(self):
        t = self.tok
        if t.kind == "NUMBER":
            self.pos += 1
            text = t.value
            if any(c in text for c in ".eE"):
                return ast.Num(float(text))
            return ast.Num(int(text))
        if t.kind == "NAME":
            if t.value in KEYWORDS or t.value in CALLS:
                self.error("expression")
            self.pos += 1
            if t.value in ("x", "y"):
                subs = []
                while self.at_op("["):
                    subs.append(self.parse_subscript())
                if len(subs) > 2:
                    raise DrlpSyntaxError(t.line, t.column, "at most two subscripts")
                return ast.IoRef(t.value, tuple(subs))
            if self.at_op("["):
                self.pos += 1
                index = self.parse_arith()
                self.expect_op("]")
                return ast.Item(t.value, index)
            return ast.Name(t.value)
        if t.kind == "OP" and t.value == "[":
            self.pos += 1
            items = []
            if not self.at_op("]"):
                items.append(self.parse_arith())
                while self.at_op(","):
                    self.pos += 1
                    if self.at_op("]"):
                        break
                    items.append(self.parse_arith())
            self.expect_op("]")
            return ast.ListLit(tuple(items))
        if t.kind == "OP" and t.value == "(":
            self.pos += 1
            inner = self.parse_arith()
            self.expect_op(")")
            return inner
        self.error("expression")

    def parse_subscript(self):
        self.expect_op("[")
        parts = [None]
        colons = 0
        while not self.at_op("]"):
            if self.at_op(":"):
                colons += 1
                if colons > 2:
                    self.error("']'")
                parts.append(None)
                self.pos += 1
                continue
            if parts[-1] is not None:
                self.error("':' or ']'")
            parts[-1] = self.parse_arith()
        self.pos += 1
        if colons == 0:
            if parts[0] is None:
                self.error("index")
            return ast.Index(parts[0])
        while len(parts) < 3:
            parts.append(None)
        return ast.Slice(parts[0], parts[1], parts[2])


def desugar_approx(operands, ops, tok):
    """Rewrite ``a ~= b`` into ``-tol <= a - b <= tol``."""
    if "~=" not in ops:
        return ast.Comparison(tuple(operands), tuple(ops))
    pieces = []
    plain_ops = [operands[0]]
    plain = []
    for i, op in enumerate(ops):
        lhs, rhs = operands[i], operands[i + 1]
        if op == "~=":
            if plain:
                pieces.append(ast.Comparison(tuple(plain_ops), tuple(plain)))
            tol = ast.Name("\0tol")  # patched once the tolerance name is known
            pieces.append(ast.Comparison(
                (ast.Unary("-", tol), ast.BinOp("-", lhs, rhs), tol), ("<=", "<=")))
            plain_ops, plain = [rhs], []
        else:
            plain_ops.append(rhs)
            plain.append(op)
    if plain:
        pieces.append(ast.Comparison(tuple(plain_ops), tuple(plain)))
    return pieces[0] if len(pieces) == 1 else ast.And(tuple(pieces))


def _parse_tokens(lines, first_line, mode):
    p = Parser(tokenize(lines, first_line))
    if mode == "vars":
        return p.parse_assignments()
    return p.parse_segment(allow_sizes=True)


def parse_raw(source):
    """Parse into raw pieces: assignments, declared sizes, pre and post lists."""
    (vlines, v0), (plines, p0), (qlines, q0) = split_segments(source)
    assigns = _parse_tokens(vlines, v0, "vars")
    pre_sizes, pre = _parse_tokens(plines, p0, "seg")
    exp_sizes, post = _parse_tokens(qlines, q0, "seg")
    sizes = {}
    for name, node in assigns:
        if name in SIZE_NAMES:
            if not isinstance(node, ast.Num) or not isinstance(node.value, int):
                raise SemanticError(f"{name} must be a positive integer")
            sizes[name] = node.value
    sizes.update(pre_sizes)
    sizes.update(exp_sizes)
    assigns = [(n, v) for n, v in assigns if n not in SIZE_NAMES]
    if not pre:
        raise SemanticError("precondition segment is empty")
    if not post:
        raise SemanticError("postcondition segment is empty")
    return assigns, sizes, pre, post


def patch_tolerance(nodes, tol_name):
    """Replace the placeholder tolerance name introduced by ``~=``."""
    if tol_name is None:
        for n in nodes:
            for sub in ast.walk(n):
                if isinstance(sub, ast.Name) and sub.id == "\0tol":
                    raise SemanticError(
                        "'≈' used without a declared tolerance variable "
                        f"(declare one of {', '.join(TOLERANCE_NAMES)})")
        return tuple(nodes)
    return tuple(_rename(n, "\0tol", tol_name) for n in nodes)


def _rename(node, old, new):
    if isinstance(node, ast.Name):
        return ast.Name(new) if node.id == old else node
    from dataclasses import fields, is_dataclass
    if not is_dataclass(node):
        return node
    kwargs = {}
    for f in fields(node):
        v = getattr(node, f.name)
        if isinstance(v, tuple):
            kwargs[f.name] = tuple(_rename(c, old, new) if is_dataclass(c) else c for c in v)
        elif is_dataclass(v):
            kwargs[f.name] = _rename(v, old, new)
        else:
            kwargs[f.name] = v
    return type(node)(**kwargs)
