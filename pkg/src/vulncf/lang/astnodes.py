"""Typed AST for the mini-C subset.

One function definition per unit. Statements: declaration, assignment,
call, if/else, while, for, return; expressions: binary/unary ops, calls,
array indexing, identifiers, literals. Types are int/char/void plus
one-level pointers and arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Node:
    line: int = field(default=1, kw_only=True)
    start: int = field(default=0, kw_only=True)  # char span into the source
    end: int = field(default=0, kw_only=True)
    # for Function/If/While/For: end of the "header" (closing paren of the
    # signature or condition); 0 when not applicable
    head_end: int = field(default=0, kw_only=True)


# --- expressions ---


@dataclass
class Ident(Node):
    name: str


@dataclass
class IntLit(Node):
    text: str


@dataclass
class StrLit(Node):
    text: str  # raw lexeme including quotes


@dataclass
class CharLit(Node):
    text: str


@dataclass
class BinOp(Node):
    op: str
    lhs: Expr
    rhs: Expr


@dataclass
class UnaryOp(Node):
    op: str
    operand: Expr


@dataclass
class CallExpr(Node):
    callee: str
    args: list[Expr]


@dataclass
class IndexExpr(Node):
    base: Expr
    index: Expr


Expr = Ident | IntLit | StrLit | CharLit | BinOp | UnaryOp | CallExpr | IndexExpr


# --- statements ---


@dataclass
class Decl(Node):
    base_type: str
    pointer: bool
    name: str
    array_size: str | None = None
    init: Expr | None = None


@dataclass
class Assign(Node):
    target: Expr  # Ident, IndexExpr, or UnaryOp('*', ...)
    value: Expr


@dataclass
class CallStmt(Node):
    call: CallExpr


@dataclass
class Block(Node):
    stmts: list[Stmt] = field(default_factory=list)


@dataclass
class If(Node):
    cond: Expr
    then: Block
    orelse: Block | None = None


@dataclass
class While(Node):
    cond: Expr
    body: Block = field(default_factory=Block)


@dataclass
class For(Node):
    init: Decl | Assign | None
    cond: Expr | None
    step: Assign | None
    body: Block = field(default_factory=Block)


@dataclass
class Return(Node):
    value: Expr | None = None


Stmt = Decl | Assign | CallStmt | Block | If | While | For | Return


# --- top level ---


@dataclass
class Param(Node):
    base_type: str
    pointer: bool
    name: str
    array: bool = False

    def type_tokens(self) -> list[str]:
        toks = [self.base_type]
        if self.pointer:
            toks.append("*")
        return toks


@dataclass
class Function(Node):
    ret_type: str
    ret_pointer: bool
    name: str
    params: list[Param]
    body: Block


def expr_identifiers(expr: Expr | None) -> list[str]:
    """All identifier names used in an expression, in source order."""
    out: list[str] = []

    def walk(e: Expr | None) -> None:
        if e is None:
            return
        if isinstance(e, Ident):
            out.append(e.name)
        elif isinstance(e, BinOp):
            walk(e.lhs)
            walk(e.rhs)
        elif isinstance(e, UnaryOp):
            walk(e.operand)
        elif isinstance(e, CallExpr):
            for a in e.args:
                walk(a)
        elif isinstance(e, IndexExpr):
            walk(e.base)
            walk(e.index)

    walk(expr)
    return out


def unparse_expr(e: Expr) -> str:
    if isinstance(e, Ident):
        return e.name
    if isinstance(e, (IntLit, StrLit, CharLit)):
        return e.text
    if isinstance(e, BinOp):
        return f"({unparse_expr(e.lhs)} {e.op} {unparse_expr(e.rhs)})"
    if isinstance(e, UnaryOp):
        return f"{e.op}{unparse_expr(e.operand)}"
    if isinstance(e, CallExpr):
        return f"{e.callee}({', '.join(unparse_expr(a) for a in e.args)})"
    if isinstance(e, IndexExpr):
        return f"{unparse_expr(e.base)}[{unparse_expr(e.index)}]"
    raise TypeError(f"not an expression: {e!r}")


def _top(e: Expr) -> str:
    """Expression text without a redundant outermost paren pair."""
    s = unparse_expr(e)
    return s[1:-1] if isinstance(e, BinOp) else s


def _unparse_decl(s: Decl) -> str:
    star = "*" if s.pointer else ""
    arr = f"[{s.array_size}]" if s.array_size is not None else ""
    init = f" = {_top(s.init)}" if s.init is not None else ""
    return f"{s.base_type} {star}{s.name}{arr}{init};"


def _unparse_stmt(s: Stmt, indent: int) -> list[str]:
    pad = "    " * indent
    if isinstance(s, Decl):
        return [pad + _unparse_decl(s)]
    if isinstance(s, Assign):
        return [pad + f"{unparse_expr(s.target)} = {_top(s.value)};"]
    if isinstance(s, CallStmt):
        return [pad + unparse_expr(s.call) + ";"]
    if isinstance(s, Return):
        val = f" {_top(s.value)}" if s.value is not None else ""
        return [pad + f"return{val};"]
    if isinstance(s, Block):
        lines = [pad + "{"]
        for inner in s.stmts:
            lines.extend(_unparse_stmt(inner, indent + 1))
        lines.append(pad + "}")
        return lines
    if isinstance(s, If):
        lines = [pad + f"if ({_top(s.cond)}) {{"]
        for inner in s.then.stmts:
            lines.extend(_unparse_stmt(inner, indent + 1))
        if s.orelse is not None:
            lines.append(pad + "} else {")
            for inner in s.orelse.stmts:
                lines.extend(_unparse_stmt(inner, indent + 1))
        lines.append(pad + "}")
        return lines
    if isinstance(s, While):
        lines = [pad + f"while ({_top(s.cond)}) {{"]
        for inner in s.body.stmts:
            lines.extend(_unparse_stmt(inner, indent + 1))
        lines.append(pad + "}")
        return lines
    if isinstance(s, For):
        init = _unparse_decl(s.init)[:-1] if isinstance(s.init, Decl) else (
            f"{unparse_expr(s.init.target)} = {_top(s.init.value)}" if isinstance(s.init, Assign) else ""
        )
        cond = _top(s.cond) if s.cond is not None else ""
        step = f"{unparse_expr(s.step.target)} = {_top(s.step.value)}" if s.step is not None else ""
        lines = [pad + f"for ({init}; {cond}; {step}) {{"]
        for inner in s.body.stmts:
            lines.extend(_unparse_stmt(inner, indent + 1))
        lines.append(pad + "}")
        return lines
    raise TypeError(f"not a statement: {s!r}")


def unparse(fn: Function) -> str:
    """Render a Function back to source text (canonical formatting)."""
    star = "*" if fn.ret_pointer else ""
    params = ", ".join(
        f"{p.base_type} {'*' if p.pointer else ''}{p.name}{'[]' if p.array else ''}" for p in fn.params
    )
    lines = [f"{fn.ret_type} {star}{fn.name}({params}) {{"]
    for s in fn.body.stmts:
        lines.extend(_unparse_stmt(s, 1))
    lines.append("}")
    return "\n".join(lines) + "\n"
