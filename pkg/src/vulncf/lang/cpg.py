"""Code property graphs: one shared node set carrying AST, CFG and DFG edges.

Node granularity is one node per statement and per expression subterm.
The AST view is a tree rooted at the Function node (id 0); CFG edges
connect statement nodes; DFG edges are reaching-definition def-use pairs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..dataset import Label, Provenance, SourceFunction
from . import astnodes as ast
from .lexer import tokenize
from .parser import parse

NODE_KINDS = [
    "Function", "Param", "Decl", "Assign", "Call", "If", "While", "For",
    "Return", "BinOp", "UnaryOp", "Index", "Literal", "Identifier", "Block",
]
KIND_INDEX = {k: i for i, k in enumerate(NODE_KINDS)}

STATEMENT_KINDS = {"Decl", "Assign", "Call", "If", "While", "For", "Return"}

EDGE_KINDS = ["AST", "CFG", "DFG"]


@dataclass(frozen=True)
class CpgNode:
    node_id: int
    kind: str
    code: str
    line: int
    tokens: tuple[str, ...]
    span: tuple[int, int] = field(default=(0, 0), compare=False)  # char offsets, not serialized


@dataclass(frozen=True, order=True)
class CpgEdge:
    src: int
    dst: int
    kind: str


@dataclass(frozen=True)
class CodePropertyGraph:
    function_id: str
    label: Label
    provenance: Provenance
    nodes: tuple[CpgNode, ...]
    edges: tuple[CpgEdge, ...]

    @property
    def n(self) -> int:
        return len(self.nodes)

    def edges_of_kind(self, kind: str) -> list[CpgEdge]:
        return [e for e in self.edges if e.kind == kind]

    def validate(self) -> None:
        n = len(self.nodes)
        for i, node in enumerate(self.nodes):
            if node.node_id != i:
                raise GraphInvariantError(f"node ids not contiguous at {i}")
            if node.kind not in KIND_INDEX:
                raise GraphInvariantError(f"unknown node kind {node.kind!r}")
            if node.kind != "Block" and not node.tokens:
                raise GraphInvariantError(f"node {i} ({node.kind}) has no tokens")
        if n == 0 or self.nodes[0].kind != "Function":
            raise GraphInvariantError("node 0 must be the Function node")
        if sum(1 for node in self.nodes if node.kind == "Function") != 1:
            raise GraphInvariantError("exactly one Function node required")
        seen: set[CpgEdge] = set()
        parents: dict[int, int] = {}
        for e in self.edges:
            if not (0 <= e.src < n and 0 <= e.dst < n):
                raise GraphInvariantError(f"edge {e} references missing node")
            if e.kind not in EDGE_KINDS:
                raise GraphInvariantError(f"unknown edge kind {e.kind!r}")
            if e in seen:
                raise GraphInvariantError(f"duplicate edge {e}")
            seen.add(e)
            if e.kind == "AST":
                if e.dst in parents:
                    raise GraphInvariantError(f"node {e.dst} has two AST parents")
                parents[e.dst] = e.src
            elif e.kind == "CFG":
                for endpoint in (e.src, e.dst):
                    if self.nodes[endpoint].kind not in STATEMENT_KINDS:
                        raise GraphInvariantError(f"CFG edge touches non-statement node {endpoint}")
        # AST view must be a tree rooted at 0: everyone except the root has
        # a parent and is reachable from the root without cycles.
        if 0 in parents:
            raise GraphInvariantError("Function node has an AST parent")
        for i in range(1, n):
            if i not in parents:
                raise GraphInvariantError(f"node {i} unreachable in AST view")
        for i in range(1, n):
            hops = 0
            cur = i
            while cur != 0:
                cur = parents[cur]
                hops += 1
                if hops > n:
                    raise GraphInvariantError("cycle in AST view")


class GraphInvariantError(ValueError):
    pass


class FormatError(ValueError):
    """Malformed serialized CPG."""


# --- node assignment -------------------------------------------------------


class _NodeBuilder:
    def __init__(self, source: str):
        self.source = source
        self.nodes: list[CpgNode] = []
        self.ast_edges: list[CpgEdge] = []
        self.id_of: dict[int, int] = {}  # id(ast node) -> CPG node id

    def _span_tokens(self, start: int, end: int) -> tuple[str, ...]:
        return tuple(t.lexeme for t in tokenize(self.source[start:end]))

    def add(self, kind: str, node: ast.Node, parent: int | None,
            tokens: tuple[str, ...] | None = None, use_head: bool = False) -> int:
        nid = len(self.nodes)
        end = node.head_end if use_head and node.head_end else node.end
        toks = self._span_tokens(node.start, end) if tokens is None else tokens
        self.nodes.append(
            CpgNode(
                node_id=nid,
                kind=kind,
                code=self.source[node.start : end],
                line=node.line,
                tokens=toks,
                span=(node.start, end),
            )
        )
        self.id_of[id(node)] = nid
        if parent is not None:
            self.ast_edges.append(CpgEdge(parent, nid, "AST"))
        return nid

    def visit_function(self, fn: ast.Function) -> None:
        fid = self.add("Function", fn, None, use_head=True)
        for p in fn.params:
            ptoks = p.type_tokens() + [p.name] + (["[", "]"] if p.array else [])
            self.add("Param", p, fid, tuple(ptoks))
        self.visit_block(fn.body, fid)

    def visit_block(self, block: ast.Block, parent: int) -> int:
        bid = self.add("Block", block, parent, ())
        for s in block.stmts:
            self.visit_stmt(s, bid)
        return bid

    def visit_stmt(self, s: ast.Stmt, parent: int) -> None:
        if isinstance(s, ast.Decl):
            did = self.add("Decl", s, parent)
            if s.init is not None:
                self.visit_expr(s.init, did)
        elif isinstance(s, ast.Assign):
            aid = self.add("Assign", s, parent)
            self.visit_expr(s.target, aid)
            self.visit_expr(s.value, aid)
        elif isinstance(s, ast.CallStmt):
            # the call expression itself is the statement node
            cid = self.add("Call", s, parent, self._span_tokens(s.start, s.end))
            self.id_of[id(s.call)] = cid
            for a in s.call.args:
                self.visit_expr(a, cid)
        elif isinstance(s, ast.If):
            iid = self.add("If", s, parent, use_head=True)
            self.visit_expr(s.cond, iid)
            self.visit_block(s.then, iid)
            if s.orelse is not None:
                self.visit_block(s.orelse, iid)
        elif isinstance(s, ast.While):
            wid = self.add("While", s, parent, use_head=True)
            self.visit_expr(s.cond, wid)
            self.visit_block(s.body, wid)
        elif isinstance(s, ast.For):
            fid = self.add("For", s, parent, use_head=True)
            if s.init is not None:
                self.visit_stmt(s.init, fid)
            if s.cond is not None:
                self.visit_expr(s.cond, fid)
            if s.step is not None:
                self.visit_stmt(s.step, fid)
            self.visit_block(s.body, fid)
        elif isinstance(s, ast.Return):
            rid = self.add("Return", s, parent)
            if s.value is not None:
                self.visit_expr(s.value, rid)
        elif isinstance(s, ast.Block):
            self.visit_block(s, parent)
        else:
            raise TypeError(f"unhandled statement {s!r}")

    def visit_expr(self, e: ast.Expr, parent: int) -> None:
        if isinstance(e, ast.Ident):
            self.add("Identifier", e, parent, (e.name,))
        elif isinstance(e, (ast.IntLit, ast.StrLit, ast.CharLit)):
            self.add("Literal", e, parent, (e.text,))
        elif isinstance(e, ast.BinOp):
            bid = self.add("BinOp", e, parent)
            self.visit_expr(e.lhs, bid)
            self.visit_expr(e.rhs, bid)
        elif isinstance(e, ast.UnaryOp):
            uid = self.add("UnaryOp", e, parent)
            self.visit_expr(e.operand, uid)
        elif isinstance(e, ast.CallExpr):
            cid = self.add("Call", e, parent)
            for a in e.args:
                self.visit_expr(a, cid)
        elif isinstance(e, ast.IndexExpr):
            xid = self.add("Index", e, parent)
            self.visit_expr(e.base, xid)
            self.visit_expr(e.index, xid)
        else:
            raise TypeError(f"unhandled expression {e!r}")


def _assign_nodes(fn: ast.Function, source: str) -> _NodeBuilder:
    nb = _NodeBuilder(source)
    nb.visit_function(fn)
    return nb


# --- control flow ----------------------------------------------------------


class _CfgBuilder:
    """Intraprocedural statement-level CFG.

    If forks to both branches and joins after them; While/For have a
    back-edge from the body end to the header and an exit edge; Return has
    no successors. For-loop init and step clauses are real statement nodes
    sequenced around the For header.
    """

    def __init__(self, id_of: dict[int, int]):
        self.id_of = id_of
        self.edges: set[tuple[int, int]] = set()

    def edge(self, src: int, dst: int) -> None:
        self.edges.add((src, dst))

    def visit_stmt(self, s: ast.Stmt) -> tuple[int | None, list[int]]:
        """Returns (entry node id or None if transparent, exit node ids)."""
        if isinstance(s, (ast.Decl, ast.Assign, ast.CallStmt)):
            nid = self.id_of[id(s)]
            return nid, [nid]
        if isinstance(s, ast.Return):
            return self.id_of[id(s)], []
        if isinstance(s, ast.Block):
            return self.visit_block(s)
        if isinstance(s, ast.If):
            iid = self.id_of[id(s)]
            te, tx = self.visit_block(s.then)
            if te is not None:
                self.edge(iid, te)
                then_exits = tx
            else:
                then_exits = [iid]
            if s.orelse is not None:
                ee, ex = self.visit_block(s.orelse)
                if ee is not None:
                    self.edge(iid, ee)
                    else_exits = ex
                else:
                    else_exits = [iid]
            else:
                else_exits = [iid]
            exits = list(dict.fromkeys(then_exits + else_exits))
            return iid, exits
        if isinstance(s, ast.While):
            wid = self.id_of[id(s)]
            be, bx = self.visit_block(s.body)
            if be is not None:
                self.edge(wid, be)
                for x in bx:
                    self.edge(x, wid)
            else:
                self.edge(wid, wid)
            return wid, [wid]
        if isinstance(s, ast.For):
            fid = self.id_of[id(s)]
            entry = fid
            if s.init is not None:
                init_id = self.id_of[id(s.init)]
                self.edge(init_id, fid)
                entry = init_id
            back_target = fid
            if s.step is not None:
                step_id = self.id_of[id(s.step)]
                self.edge(step_id, fid)
                back_target = step_id
            be, bx = self.visit_block(s.body)
            if be is not None:
                self.edge(fid, be)
                for x in bx:
                    self.edge(x, back_target)
            else:
                self.edge(fid, back_target)
            return entry, [fid]
        raise TypeError(f"unhandled statement {s!r}")

    def visit_block(self, b: ast.Block) -> tuple[int | None, list[int]]:
        entry: int | None = None
        pending: list[int] | None = None
        for s in b.stmts:
            e, x = self.visit_stmt(s)
            if e is None:
                continue
            if entry is None:
                entry = e
            if pending is not None:
                for p in pending:
                    self.edge(p, e)
            pending = x
        return entry, (pending if pending is not None else [])


def _build_cfg(fn: ast.Function, id_of: dict[int, int]) -> tuple[int | None, list[CpgEdge]]:
    builder = _CfgBuilder(id_of)
    entry, _ = builder.visit_block(fn.body)
    edges = sorted(CpgEdge(s, d, "CFG") for s, d in builder.edges)
    return entry, edges


def build_cfg(fn: ast.Function, source: str | None = None) -> list[CpgEdge]:
    """CFG edges of a parsed function, using assemble_cpg's node numbering."""
    nb = _assign_nodes(fn, source if source is not None else ast.unparse(fn))
    return _build_cfg(fn, nb.id_of)[1]


# --- data flow -------------------------------------------------------------


def _stmt_defs(s: ast.Stmt) -> list[tuple[str, bool]]:
    """(variable, strong) definitions made by a statement node itself."""
    if isinstance(s, ast.Decl):
        return [(s.name, True)]
    if isinstance(s, ast.Assign):
        if isinstance(s.target, ast.Ident):
            return [(s.target.name, True)]
        if isinstance(s.target, ast.IndexExpr) and isinstance(s.target.base, ast.Ident):
            return [(s.target.base.name, False)]  # element write: weak update
        return []
    return []


def _stmt_uses(s: ast.Stmt) -> list[str]:
    if isinstance(s, ast.Decl):
        return ast.expr_identifiers(s.init)
    if isinstance(s, ast.Assign):
        uses = ast.expr_identifiers(s.value)
        if isinstance(s.target, ast.Ident):
            return uses
        return ast.expr_identifiers(s.target) + uses
    if isinstance(s, ast.CallStmt):
        return ast.expr_identifiers(s.call)
    if isinstance(s, ast.If):
        return ast.expr_identifiers(s.cond)
    if isinstance(s, ast.While):
        return ast.expr_identifiers(s.cond)
    if isinstance(s, ast.For):
        return ast.expr_identifiers(s.cond) if s.cond is not None else []
    if isinstance(s, ast.Return):
        return ast.expr_identifiers(s.value)
    return []


def _collect_statements(fn: ast.Function) -> list[ast.Stmt]:
    out: list[ast.Stmt] = []

    def walk_block(b: ast.Block) -> None:
        for s in b.stmts:
            walk_stmt(s)

    def walk_stmt(s: ast.Stmt) -> None:
        if isinstance(s, ast.Block):
            walk_block(s)
            return
        if isinstance(s, ast.For):
            if s.init is not None:
                out.append(s.init)
            out.append(s)
            if s.step is not None:
                out.append(s.step)
            walk_block(s.body)
            return
        out.append(s)
        if isinstance(s, ast.If):
            walk_block(s.then)
            if s.orelse is not None:
                walk_block(s.orelse)
        elif isinstance(s, ast.While):
            walk_block(s.body)

    walk_block(fn.body)
    return out


def _build_dfg(fn: ast.Function, id_of: dict[int, int], entry: int | None,
               cfg_edges: list[CpgEdge]) -> list[CpgEdge]:
    """Reaching definitions to a fixpoint, then def-to-use edges.

    Parameters count as definitions at their Param node, flowing into the
    entry statement.
    """
    stmts = _collect_statements(fn)
    if not stmts:
        return []
    sid = {id(s): id_of[id(s)] for s in stmts}
    by_id = {sid[id(s)]: s for s in stmts}
    preds: dict[int, list[int]] = {nid: [] for nid in by_id}
    succs: dict[int, list[int]] = {nid: [] for nid in by_id}
    for e in cfg_edges:
        preds[e.dst].append(e.src)
        succs[e.src].append(e.dst)

    param_defs = frozenset(
        (p.name, id_of[id(p)]) for p in fn.params
    )
    gen: dict[int, frozenset[tuple[str, int]]] = {}
    strong_kills: dict[int, set[str]] = {}
    for nid, s in by_id.items():
        defs = _stmt_defs(s)
        gen[nid] = frozenset((v, nid) for v, _ in defs)
        strong_kills[nid] = {v for v, strong in defs if strong}

    in_sets: dict[int, frozenset[tuple[str, int]]] = {nid: frozenset() for nid in by_id}
    out_sets: dict[int, frozenset[tuple[str, int]]] = {nid: frozenset() for nid in by_id}
    worklist = sorted(by_id)
    while worklist:
        nid = worklist.pop(0)
        incoming: set[tuple[str, int]] = set()
        if nid == entry:
            incoming |= param_defs
        for p in preds[nid]:
            incoming |= out_sets[p]
        in_sets[nid] = frozenset(incoming)
        kills = strong_kills[nid]
        new_out = gen[nid] | frozenset((v, d) for v, d in incoming if v not in kills)
        if new_out != out_sets[nid]:
            out_sets[nid] = new_out
            for d in succs[nid]:
                if d not in worklist:
                    worklist.append(d)

    edges: set[tuple[int, int]] = set()
    for nid, s in by_id.items():
        for v in _stmt_uses(s):
            for var, d in in_sets[nid]:
                if var == v:
                    edges.add((d, nid))
    return sorted(CpgEdge(s, d, "DFG") for s, d in edges)


def build_dfg(fn: ast.Function, source: str | None = None) -> list[CpgEdge]:
    """DFG edges of a parsed function, using assemble_cpg's node numbering."""
    nb = _assign_nodes(fn, source if source is not None else ast.unparse(fn))
    entry, cfg = _build_cfg(fn, nb.id_of)
    return _build_dfg(fn, nb.id_of, entry, cfg)


# --- assembly and serialization --------------------------------------------


def assemble_cpg(fn: SourceFunction) -> CodePropertyGraph:
    """Parse a function and unite its AST, CFG and DFG views.

    Propagates LexError/ParseError; callers record such functions and
    exclude them downstream.
    """
    tree = parse(fn.source)
    nb = _assign_nodes(tree, fn.source)
    entry, cfg_edges = _build_cfg(tree, nb.id_of)
    dfg_edges = _build_dfg(tree, nb.id_of, entry, cfg_edges)
    kind_order = {k: i for i, k in enumerate(EDGE_KINDS)}
    edges = sorted(
        nb.ast_edges + cfg_edges + dfg_edges,
        key=lambda e: (kind_order[e.kind], e.src, e.dst),
    )
    g = CodePropertyGraph(
        function_id=fn.id,
        label=fn.label,
        provenance=fn.provenance,
        nodes=tuple(nb.nodes),
        edges=tuple(edges),
    )
    g.validate()
    return g


def serialize_cpg(g: CodePropertyGraph) -> str:
    """Deterministic text form: fixed field order, nodes by id, edges by (kind, src, dst)."""
    kind_order = {k: i for i, k in enumerate(EDGE_KINDS)}
    doc = {
        "function_id": g.function_id,
        "label": g.label.value,
        "provenance": g.provenance.value,
        "nodes": [
            {
                "id": n.node_id,
                "kind": n.kind,
                "code": n.code,
                "line": n.line,
                "tokens": list(n.tokens),
            }
            for n in g.nodes
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "kind": e.kind}
            for e in sorted(g.edges, key=lambda e: (kind_order[e.kind], e.src, e.dst))
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def deserialize_cpg(text: str) -> CodePropertyGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise FormatError("document must be an object")
    for key in ("function_id", "label", "provenance", "nodes", "edges"):
        if key not in doc:
            raise FormatError(f"missing field {key!r}")
    try:
        label = Label(doc["label"])
        provenance = Provenance(doc["provenance"])
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    nodes = []
    for rec in doc["nodes"]:
        try:
            nodes.append(
                CpgNode(
                    node_id=rec["id"],
                    kind=rec["kind"],
                    code=rec["code"],
                    line=rec["line"],
                    tokens=tuple(rec["tokens"]),
                )
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bad node record: {exc}") from None
    edges = []
    for rec in doc["edges"]:
        try:
            edges.append(CpgEdge(src=rec["src"], dst=rec["dst"], kind=rec["kind"]))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bad edge record: {exc}") from None
    g = CodePropertyGraph(
        function_id=doc["function_id"],
        label=label,
        provenance=provenance,
        nodes=tuple(nodes),
        edges=tuple(edges),
    )
    try:
        g.validate()
    except GraphInvariantError as exc:
        raise FormatError(str(exc)) from None
    return g
