"""Recursive-descent parser for the mini-C subset: one function per unit."""

from __future__ import annotations

from . import astnodes as ast
from .lexer import Token, tokenize

_TYPE_KEYWORDS = {"int", "char", "void"}

# binary operator precedence, loosest first
_BINARY_LEVELS = [
    ["||"],
    ["&&"],
    ["|"],
    ["^"],
    ["&"],
    ["==", "!="],
    ["<", "<=", ">", ">="],
    ["<<", ">>"],
    ["+", "-"],
    ["*", "/", "%"],
]

_UNARY_OPS = {"!", "-", "*", "&", "~"}


class ParseError(ValueError):
    def __init__(self, line: int, expected: str, found: str):
        self.line = line
        self.expected = expected
        self.found = found
        super().__init__(f"line {line}: expected {expected}, found {found}")


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # --- token helpers ---

    def _peek(self, ahead: int = 0) -> Token | None:
        idx = self.pos + ahead
        return self.tokens[idx] if idx < len(self.tokens) else None

    def _line(self) -> int:
        tok = self._peek()
        if tok is not None:
            return tok.line
        return self.tokens[-1].line if self.tokens else 1

    def _found(self) -> str:
        tok = self._peek()
        return repr(tok.lexeme) if tok is not None else "end of input"

    def _advance(self) -> Token:
        tok = self._peek()
        if tok is None:
            raise ParseError(self._line(), "more input", "end of input")
        self.pos += 1
        return tok

    def _check(self, lexeme: str) -> bool:
        tok = self._peek()
        return tok is not None and tok.lexeme == lexeme

    def _accept(self, lexeme: str) -> Token | None:
        if self._check(lexeme):
            return self._advance()
        return None

    def _expect(self, lexeme: str) -> Token:
        tok = self._accept(lexeme)
        if tok is None:
            raise ParseError(self._line(), repr(lexeme), self._found())
        return tok

    def _expect_ident(self) -> Token:
        tok = self._peek()
        if tok is None or tok.kind != "ident":
            raise ParseError(self._line(), "identifier", self._found())
        return self._advance()

    def _at_type(self) -> bool:
        tok = self._peek()
        return tok is not None and tok.lexeme in _TYPE_KEYWORDS

    # --- grammar ---

    def parse_function(self) -> ast.Function:
        if not self._at_type():
            raise ParseError(self._line(), "type keyword", self._found())
        first = self._advance()
        ret_pointer = self._accept("*") is not None
        name = self._expect_ident()
        self._expect("(")
        params: list[ast.Param] = []
        if not self._check(")"):
            params.append(self._param())
            while self._accept(","):
                params.append(self._param())
        close = self._expect(")")
        body = self._block()
        tok = self._peek()
        if tok is not None:
            raise ParseError(tok.line, "end of input", repr(tok.lexeme))
        return ast.Function(
            ret_type=first.lexeme,
            ret_pointer=ret_pointer,
            name=name.lexeme,
            params=params,
            body=body,
            line=first.line,
            start=first.start,
            end=body.end,
            head_end=close.end,
        )

    def _param(self) -> ast.Param:
        if not self._at_type():
            raise ParseError(self._line(), "parameter type", self._found())
        ty = self._advance()
        pointer = self._accept("*") is not None
        name = self._expect_ident()
        array = False
        if self._accept("["):
            self._expect("]")
            array = True
        return ast.Param(
            base_type=ty.lexeme, pointer=pointer, name=name.lexeme, array=array,
            line=ty.line, start=ty.start, end=name.end,
        )

    def _block(self) -> ast.Block:
        open_tok = self._expect("{")
        stmts: list[ast.Stmt] = []
        while not self._check("}"):
            if self._peek() is None:
                raise ParseError(self._line(), "'}'", "end of input")
            stmts.append(self._statement())
        close_tok = self._expect("}")
        return ast.Block(stmts=stmts, line=open_tok.line, start=open_tok.start, end=close_tok.end)

    def _statement(self) -> ast.Stmt:
        tok = self._peek()
        assert tok is not None
        if tok.lexeme == "{":
            return self._block()
        if tok.lexeme == "if":
            return self._if()
        if tok.lexeme == "while":
            return self._while()
        if tok.lexeme == "for":
            return self._for()
        if tok.lexeme == "return":
            return self._return()
        if self._at_type():
            decl = self._decl(require_semi=True)
            return decl
        return self._expr_statement()

    def _decl(self, require_semi: bool) -> ast.Decl:
        ty = self._advance()
        pointer = self._accept("*") is not None
        name = self._expect_ident()
        array_size: str | None = None
        if self._accept("["):
            size = self._peek()
            if size is None or size.kind != "int":
                raise ParseError(self._line(), "array size literal", self._found())
            self._advance()
            self._expect("]")
            array_size = size.lexeme
        init: ast.Expr | None = None
        if self._accept("="):
            init = self._expression()
        end = self.tokens[self.pos - 1].end
        if require_semi:
            end = self._expect(";").end
        return ast.Decl(
            base_type=ty.lexeme, pointer=pointer, name=name.lexeme,
            array_size=array_size, init=init,
            line=ty.line, start=ty.start, end=end,
        )

    def _if(self) -> ast.If:
        kw = self._expect("if")
        self._expect("(")
        cond = self._expression()
        close = self._expect(")")
        then = self._as_block(self._statement())
        orelse: ast.Block | None = None
        if self._accept("else"):
            orelse = self._as_block(self._statement())
        end = orelse.end if orelse is not None else then.end
        return ast.If(cond=cond, then=then, orelse=orelse, line=kw.line, start=kw.start, end=end, head_end=close.end)

    def _while(self) -> ast.While:
        kw = self._expect("while")
        self._expect("(")
        cond = self._expression()
        close = self._expect(")")
        body = self._as_block(self._statement())
        return ast.While(cond=cond, body=body, line=kw.line, start=kw.start, end=body.end, head_end=close.end)

    def _for(self) -> ast.For:
        kw = self._expect("for")
        self._expect("(")
        init: ast.Decl | ast.Assign | None = None
        if not self._check(";"):
            if self._at_type():
                init = self._decl(require_semi=False)
            else:
                init = self._assign_clause()
        self._expect(";")
        cond: ast.Expr | None = None
        if not self._check(";"):
            cond = self._expression()
        self._expect(";")
        step: ast.Assign | None = None
        if not self._check(")"):
            step = self._assign_clause()
        close = self._expect(")")
        body = self._as_block(self._statement())
        return ast.For(init=init, cond=cond, step=step, body=body, line=kw.line, start=kw.start, end=body.end, head_end=close.end)

    def _return(self) -> ast.Return:
        kw = self._expect("return")
        value: ast.Expr | None = None
        if not self._check(";"):
            value = self._expression()
        semi = self._expect(";")
        return ast.Return(value=value, line=kw.line, start=kw.start, end=semi.end)

    def _assign_clause(self) -> ast.Assign:
        """An assignment without the trailing semicolon (for-clauses)."""
        target = self._unary()
        if not isinstance(target, (ast.Ident, ast.IndexExpr, ast.UnaryOp)):
            raise ParseError(target.line, "assignable expression", ast.unparse_expr(target))
        self._expect("=")
        value = self._expression()
        return ast.Assign(target=target, value=value, line=target.line, start=target.start, end=value.end)

    def _expr_statement(self) -> ast.Stmt:
        start = self._peek()
        assert start is not None
        expr = self._expression()
        if self._accept("="):
            if not isinstance(expr, (ast.Ident, ast.IndexExpr, ast.UnaryOp)):
                raise ParseError(expr.line, "assignable expression", ast.unparse_expr(expr))
            value = self._expression()
            semi = self._expect(";")
            return ast.Assign(target=expr, value=value, line=start.line, start=start.start, end=semi.end)
        if isinstance(expr, ast.CallExpr):
            semi = self._expect(";")
            expr.end = semi.end
            return ast.CallStmt(call=expr, line=start.line, start=start.start, end=semi.end)
        raise ParseError(start.line, "statement", repr(start.lexeme))

    @staticmethod
    def _as_block(stmt: ast.Stmt) -> ast.Block:
        if isinstance(stmt, ast.Block):
            return stmt
        return ast.Block(stmts=[stmt], line=stmt.line, start=stmt.start, end=stmt.end)

    # --- expressions (precedence climbing) ---

    def _expression(self, level: int = 0) -> ast.Expr:
        if level >= len(_BINARY_LEVELS):
            return self._unary()
        expr = self._expression(level + 1)
        while True:
            tok = self._peek()
            if tok is None or tok.lexeme not in _BINARY_LEVELS[level]:
                return expr
            # '=' never reaches here; only listed binary ops are consumed
            op = self._advance()
            rhs = self._expression(level + 1)
            expr = ast.BinOp(op=op.lexeme, lhs=expr, rhs=rhs, line=expr.line, start=expr.start, end=rhs.end)

    def _unary(self) -> ast.Expr:
        tok = self._peek()
        if tok is not None and tok.lexeme in _UNARY_OPS and tok.kind == "op":
            self._advance()
            operand = self._unary()
            return ast.UnaryOp(op=tok.lexeme, operand=operand, line=tok.line, start=tok.start, end=operand.end)
        return self._postfix()

    def _postfix(self) -> ast.Expr:
        expr = self._primary()
        while True:
            if self._check("["):
                self._advance()
                index = self._expression()
                close = self._expect("]")
                expr = ast.IndexExpr(base=expr, index=index, line=expr.line, start=expr.start, end=close.end)
            else:
                return expr

    def _primary(self) -> ast.Expr:
        tok = self._peek()
        if tok is None:
            raise ParseError(self._line(), "expression", "end of input")
        if tok.kind == "int":
            self._advance()
            return ast.IntLit(text=tok.lexeme, line=tok.line, start=tok.start, end=tok.end)
        if tok.kind == "string":
            self._advance()
            return ast.StrLit(text=tok.lexeme, line=tok.line, start=tok.start, end=tok.end)
        if tok.kind == "char":
            self._advance()
            return ast.CharLit(text=tok.lexeme, line=tok.line, start=tok.start, end=tok.end)
        if tok.kind == "ident":
            self._advance()
            if self._check("("):
                self._advance()
                args: list[ast.Expr] = []
                if not self._check(")"):
                    args.append(self._expression())
                    while self._accept(","):
                        args.append(self._expression())
                close = self._expect(")")
                return ast.CallExpr(callee=tok.lexeme, args=args, line=tok.line, start=tok.start, end=close.end)
            return ast.Ident(name=tok.lexeme, line=tok.line, start=tok.start, end=tok.end)
        if tok.lexeme == "(":
            self._advance()
            inner = self._expression()
            self._expect(")")
            return inner
        raise ParseError(tok.line, "expression", repr(tok.lexeme))


def parse_tokens(tokens: list[Token]) -> ast.Function:
    return _Parser(tokens).parse_function()


def parse(source: str) -> ast.Function:
    """Tokenize and parse one mini-C function definition."""
    return parse_tokens(tokenize(source))
