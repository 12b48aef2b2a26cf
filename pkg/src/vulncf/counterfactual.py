"""Rule-based generation and validation of label-flipped function variants.

The rule engine targets improper-input-validation patterns: unvalidated
parameters reaching dangerous sinks (size arguments, copy sources, command
arguments, array indices). A structural label oracle decides benign vs
vulnerable; on the synthetic corpus it is also the ground-truth labeling
rule, so rule-generated candidates validate deterministically.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from enum import Enum

from .dataset import Label, SourceFunction
from .lang import astnodes as ast
from .lang.lexer import LexError, tokenize
from .lang.parser import ParseError, parse

# sink families and which argument slots are dangerous
SIZE_SINKS = {"memcpy", "strncpy", "snprintf", "read_bytes"}   # last argument
COPY_SINKS = {"strcpy", "strcat", "sprintf"}                   # arguments after the first
CMD_SINKS = {"net_cmd", "exec_cmd", "send_packet"}             # arguments after the first


class NoApplicableRule(ValueError):
    pass


@dataclass(frozen=True)
class CounterfactualCandidate:
    paired_id: str
    source: str
    target_label: Label
    generator: str       # "rule:<name>" or "llm:<model_tag>"
    edit_distance: int


@dataclass(frozen=True)
class ValidationResult:
    accepted: bool
    reason: str = ""


@dataclass
class ValidationPolicy:
    max_edit_tokens: int = 25


# --- structural analysis ----------------------------------------------------


def _critical_exprs_of_call(call: ast.CallExpr) -> list[ast.Expr]:
    if call.callee in SIZE_SINKS and call.args:
        return [call.args[-1]]
    if call.callee in COPY_SINKS or call.callee in CMD_SINKS:
        return list(call.args[1:])
    return []


def _walk_exprs(e: ast.Expr | None):
    if e is None:
        return
    yield e
    if isinstance(e, ast.BinOp):
        yield from _walk_exprs(e.lhs)
        yield from _walk_exprs(e.rhs)
    elif isinstance(e, ast.UnaryOp):
        yield from _walk_exprs(e.operand)
    elif isinstance(e, ast.CallExpr):
        for a in e.args:
            yield from _walk_exprs(a)
    elif isinstance(e, ast.IndexExpr):
        yield from _walk_exprs(e.base)
        yield from _walk_exprs(e.index)


def _stmt_exprs(s: ast.Stmt) -> list[ast.Expr]:
    if isinstance(s, ast.Decl):
        return [s.init] if s.init is not None else []
    if isinstance(s, ast.Assign):
        return [s.target, s.value]
    if isinstance(s, ast.CallStmt):
        return [s.call]
    if isinstance(s, ast.If):
        return [s.cond]
    if isinstance(s, ast.While):
        return [s.cond]
    if isinstance(s, ast.For):
        return [s.cond] if s.cond is not None else []
    if isinstance(s, ast.Return):
        return [s.value] if s.value is not None else []
    return []


def _critical_identifiers(s: ast.Stmt) -> set[str]:
    """Identifiers appearing in dangerous positions of one statement."""
    names: set[str] = set()
    for root in _stmt_exprs(s):
        for e in _walk_exprs(root):
            if isinstance(e, ast.CallExpr):
                for arg in _critical_exprs_of_call(e):
                    names.update(ast.expr_identifiers(arg))
            elif isinstance(e, ast.IndexExpr):
                names.update(ast.expr_identifiers(e.index))
    return names


def _statements_preorder(fn: ast.Function) -> list[ast.Stmt]:
    out: list[ast.Stmt] = []

    def walk_block(b: ast.Block) -> None:
        for s in b.stmts:
            walk(s)

    def walk(s: ast.Stmt) -> None:
        if isinstance(s, ast.Block):
            walk_block(s)
            return
        out.append(s)
        if isinstance(s, ast.If):
            walk_block(s.then)
            if s.orelse is not None:
                walk_block(s.orelse)
        elif isinstance(s, ast.While):
            walk_block(s.body)
        elif isinstance(s, ast.For):
            walk_block(s.body)

    walk_block(fn.body)
    return out


def _contains_return(b: ast.Block) -> bool:
    return any(isinstance(s, ast.Return) for s in _statements_preorder(
        ast.Function(ret_type="int", ret_pointer=False, name="_", params=[], body=b)
    ))


def _is_lower_guard(s: ast.Stmt, var: str | None = None) -> str | None:
    """If `s` guards some variable v with a `v < 0` check and bails out,
    return v (or None); when `var` is given, only that variable matches."""
    if not isinstance(s, ast.If) or s.orelse is not None:
        return None
    if not _contains_return(s.then):
        return None
    for e in _walk_exprs(s.cond):
        if (
            isinstance(e, ast.BinOp)
            and e.op == "<"
            and isinstance(e.lhs, ast.Ident)
            and isinstance(e.rhs, ast.IntLit)
            and e.rhs.text == "0"
        ):
            if var is None or e.lhs.name == var:
                return e.lhs.name
    return None


def find_unguarded_taint(fn: ast.Function) -> tuple[ast.Stmt, str] | None:
    """First statement (pre-order) using a parameter in a dangerous slot
    with no earlier lower-bound guard on that parameter."""
    params = {p.name for p in fn.params}
    guarded: set[str] = set()
    for s in _statements_preorder(fn):
        g = _is_lower_guard(s)
        if g is not None:
            guarded.add(g)
            continue
        for v in sorted(_critical_identifiers(s)):
            if v in params and v not in guarded:
                return s, v
    return None


def oracle_label(fn_ast: ast.Function) -> Label:
    """Structural label: vulnerable iff some parameter reaches a dangerous
    slot without a preceding lower-bound guard."""
    return Label.VULNERABLE if find_unguarded_taint(fn_ast) is not None else Label.BENIGN


def oracle_label_source(source: str) -> Label:
    return oracle_label(parse(source))


# --- rewrite rules ----------------------------------------------------------


@dataclass(frozen=True)
class RewriteRule:
    name: str
    benign_to_vulnerable: bool

    def apply(self, fn: ast.Function) -> ast.Function | None:
        raise NotImplementedError


def _fresh_name(fn: ast.Function, base: str) -> str:
    taken = set()
    for s in _statements_preorder(fn):
        for root in _stmt_exprs(s):
            taken.update(ast.expr_identifiers(root))
        if isinstance(s, ast.Decl):
            taken.add(s.name)
    taken.update(p.name for p in fn.params)
    if base not in taken:
        return base
    i = 2
    while f"{base}{i}" in taken:
        i += 1
    return f"{base}{i}"


def _blocks_of(fn: ast.Function) -> list[ast.Block]:
    blocks = [fn.body]
    for s in _statements_preorder(fn):
        if isinstance(s, ast.If):
            blocks.append(s.then)
            if s.orelse is not None:
                blocks.append(s.orelse)
        elif isinstance(s, ast.While):
            blocks.append(s.body)
        elif isinstance(s, ast.For):
            blocks.append(s.body)
    return blocks


class AddLowerGuard(RewriteRule):
    """Vulnerable -> benign: insert `if (v < 0) return ...;` before the
    first dangerous use of an unguarded parameter."""

    def __init__(self):
        super().__init__(name="add_lower_guard", benign_to_vulnerable=False)

    def apply(self, fn: ast.Function) -> ast.Function | None:
        found = find_unguarded_taint(fn)
        if found is None:
            return None
        out = copy.deepcopy(fn)
        target, var = find_unguarded_taint(out)  # same position in the copy
        bail: ast.Return
        if out.ret_type == "void" and not out.ret_pointer:
            bail = ast.Return(value=None)
        else:
            bail = ast.Return(value=ast.UnaryOp(op="-", operand=ast.IntLit(text="1")))
        guard = ast.If(
            cond=ast.BinOp(op="<", lhs=ast.Ident(name=var), rhs=ast.IntLit(text="0")),
            then=ast.Block(stmts=[bail]),
        )
        for block in _blocks_of(out):
            if target in block.stmts:
                block.stmts.insert(block.stmts.index(target), guard)
                return out
        return None


class ConstifyCritical(RewriteRule):
    """Vulnerable -> benign: replace an unvalidated parameter in dangerous
    slots with a fixed constant."""

    def __init__(self):
        super().__init__(name="constify_critical", benign_to_vulnerable=False)

    def apply(self, fn: ast.Function) -> ast.Function | None:
        found = find_unguarded_taint(fn)
        if found is None:
            return None
        _, var = found
        out = copy.deepcopy(fn)

        def replace_in(e: ast.Expr) -> ast.Expr:
            if isinstance(e, ast.Ident) and e.name == var:
                return ast.IntLit(text="8")
            return e

        for s in _statements_preorder(out):
            for root in _stmt_exprs(s):
                for e in _walk_exprs(root):
                    if isinstance(e, ast.CallExpr):
                        crit = _critical_exprs_of_call(e)
                        e.args = [
                            replace_in(a) if a in crit else a for a in e.args
                        ]
                    elif isinstance(e, ast.IndexExpr):
                        e.index = replace_in(e.index)
        if oracle_label(out) is not Label.BENIGN:
            return None
        return out


class DropLowerGuard(RewriteRule):
    """Benign -> vulnerable: delete a bounds-check guard whose removal
    leaves a parameter unvalidated at a dangerous slot."""

    def __init__(self):
        super().__init__(name="drop_lower_guard", benign_to_vulnerable=True)

    def apply(self, fn: ast.Function) -> ast.Function | None:
        guards = [s for s in _statements_preorder(fn) if _is_lower_guard(s) is not None]
        for idx in range(len(guards)):
            out = copy.deepcopy(fn)
            out_guards = [s for s in _statements_preorder(out) if _is_lower_guard(s) is not None]
            target = out_guards[idx]
            for block in _blocks_of(out):
                if target in block.stmts:
                    block.stmts.remove(target)
                    break
            if oracle_label(out) is Label.VULNERABLE:
                return out
        return None


class TaintConstantArg(RewriteRule):
    """Benign -> vulnerable: replace a fixed argument of a sink call with a
    fresh, unvalidated parameter."""

    def __init__(self):
        super().__init__(name="taint_constant_arg", benign_to_vulnerable=True)

    @staticmethod
    def _is_constant(e: ast.Expr) -> bool:
        return isinstance(e, (ast.IntLit, ast.StrLit, ast.CharLit)) or (
            isinstance(e, ast.Ident) and e.name == "NULL"
        )

    def apply(self, fn: ast.Function) -> ast.Function | None:
        out = copy.deepcopy(fn)
        name = _fresh_name(out, "user_input")
        for s in _statements_preorder(out):
            for root in _stmt_exprs(s):
                for e in _walk_exprs(root):
                    if not isinstance(e, ast.CallExpr):
                        continue
                    crit = _critical_exprs_of_call(e)
                    for slot, arg in enumerate(e.args):
                        if arg in crit and self._is_constant(arg):
                            is_size = e.callee in SIZE_SINKS
                            e.args[slot] = ast.Ident(name=name)
                            out.params.append(
                                ast.Param(base_type="int" if is_size else "char",
                                          pointer=not is_size, name=name)
                            )
                            if oracle_label(out) is Label.VULNERABLE:
                                return out
                            return None
        return None


RULES: list[RewriteRule] = [
    AddLowerGuard(),
    ConstifyCritical(),
    DropLowerGuard(),
    TaintConstantArg(),
]


def token_edit_distance(a: str, b: str, cap: int | None = None) -> int:
    """Levenshtein distance over token lexemes; trims common affixes first."""
    ta = [t.lexeme for t in tokenize(a)]
    tb = [t.lexeme for t in tokenize(b)]
    lo = 0
    while lo < len(ta) and lo < len(tb) and ta[lo] == tb[lo]:
        lo += 1
    hi = 0
    while hi < len(ta) - lo and hi < len(tb) - lo and ta[len(ta) - 1 - hi] == tb[len(tb) - 1 - hi]:
        hi += 1
    ta = ta[lo : len(ta) - hi]
    tb = tb[lo : len(tb) - hi]
    if cap is not None and abs(len(ta) - len(tb)) > cap:
        return abs(len(ta) - len(tb))
    prev = list(range(len(tb) + 1))
    for i, x in enumerate(ta, start=1):
        cur = [i] + [0] * len(tb)
        for j, y in enumerate(tb, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def generate_rule_based(fn: SourceFunction, rng_seed: int = 0) -> CounterfactualCandidate:
    """Apply the first matching rewrite rule in fixed order; the candidate's
    oracle label is verified to flip before it is returned."""
    del rng_seed  # rules are currently choice-free; kept for interface stability
    try:
        tree = parse(fn.source)
    except (LexError, ParseError) as exc:
        raise NoApplicableRule(f"{fn.id}: source does not parse: {exc}") from exc
    want_b2v = fn.label is Label.BENIGN
    for rule in RULES:
        if rule.benign_to_vulnerable != want_b2v:
            continue
        result = rule.apply(tree)
        if result is None:
            continue
        target = fn.label.flipped()
        if oracle_label(result) is not target:
            continue
        source = ast.unparse(result)
        return CounterfactualCandidate(
            paired_id=fn.id,
            source=source,
            target_label=target,
            generator=f"rule:{rule.name}",
            edit_distance=token_edit_distance(fn.source, source),
        )
    raise NoApplicableRule(f"{fn.id}: no rewrite rule matches")


def validate_counterfactual(
    orig: SourceFunction,
    cand: CounterfactualCandidate,
    policy: ValidationPolicy | None = None,
) -> ValidationResult:
    """Accept iff the candidate parses into a valid graph, the edit is small
    and nonempty, and the label oracle confirms the flip. Rejected pairs are
    dropped together downstream."""
    policy = policy or ValidationPolicy()
    from .lang.cpg import GraphInvariantError, assemble_cpg

    if cand.target_label is orig.label:
        return ValidationResult(False, "NoFlip: target label equals the original label")
    try:
        cand_fn = SourceFunction(
            id=orig.id, source=cand.source, label=cand.target_label,
            provenance=orig.provenance, cwe=orig.cwe,
        )
        assemble_cpg(cand_fn)
    except (LexError, ParseError) as exc:
        return ValidationResult(False, f"ParseError: {exc}")
    except GraphInvariantError as exc:
        return ValidationResult(False, f"InvalidGraph: {exc}")
    dist = token_edit_distance(orig.source, cand.source, cap=policy.max_edit_tokens)
    if dist == 0:
        return ValidationResult(False, "NoEdit: candidate is token-identical to the original")
    if dist > policy.max_edit_tokens:
        return ValidationResult(False, f"EditTooLarge: {dist} > {policy.max_edit_tokens}")
    if oracle_label_source(cand.source) is not cand.target_label:
        return ValidationResult(False, "OracleMismatch: label oracle does not confirm the flip")
    return ValidationResult(True)
