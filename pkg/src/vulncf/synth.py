"""Template-based mini-C corpus with a planted labeling rule.

Ground truth is the structural oracle from the rewrite engine: a function
is vulnerable iff a parameter reaches a dangerous slot without a preceding
lower-bound guard. Benign originals optionally carry a decoy token (an
errno-style constant) with a configurable association strength, creating a
learnable shortcut that counterfactual pairing later breaks: counterfactual
edits flip the guard structure but keep the decoy.

Original labels are imbalanced (mostly benign) to mirror real CWE corpora,
so benchmarks built purely from originals must upsample a handful of
vulnerable functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .counterfactual import generate_rule_based, oracle_label_source, validate_counterfactual
from .dataset import Label, Provenance, SourceFunction
from .lang.cpg import CodePropertyGraph

DECOY_TOKEN = "EPERM"

_FN_VERBS = ["parse", "read", "handle", "copy", "update", "send", "load", "check"]
_FN_NOUNS = ["frame", "packet", "header", "record", "block", "entry", "msg", "field"]
_IDX_NAMES = ["idx", "pos", "offset", "screen", "slot", "chan"]
_LEN_NAMES = ["len", "size", "count", "nbytes"]
_SEL_NAMES = ["mode", "sel", "kind", "level"]


@dataclass
class SynthConfig:
    n_pairs: int = 1000
    spurious_strength: float = 0.95
    seed: int = 0
    benign_fraction: float = 0.95  # label imbalance among originals

    def validate(self) -> None:
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be >= 1")
        if not 0.0 <= self.spurious_strength <= 1.0:
            raise ValueError("spurious_strength must be in [0, 1]")
        if not 0.0 < self.benign_fraction < 1.0:
            raise ValueError("benign_fraction must be in (0, 1)")


class _FunctionWriter:
    def __init__(self, rng: np.random.Generator, index: int):
        self.rng = rng
        self.name = f"{rng.choice(_FN_VERBS)}_{rng.choice(_FN_NOUNS)}_{index}"
        self.counter = 0

    def local(self, base: str) -> str:
        self.counter += 1
        return f"{base}{self.counter}"

    def filler(self) -> list[str]:
        lines = []
        for _ in range(int(self.rng.integers(0, 3))):
            style = int(self.rng.integers(0, 3))
            if style == 0:
                lines.append(f"    int {self.local('tmp')} = {int(self.rng.integers(1, 9))};")
            elif style == 1:
                v = self.local("acc")
                lines.append(f"    int {v} = 0;")
                lines.append(f"    {v} = {v} + {int(self.rng.integers(1, 5))};")
            else:
                lines.append(f'    log_event("{self.rng.choice(["enter", "start", "begin", "trace"])}");')
        return lines

    def decoy(self) -> list[str]:
        if self.rng.random() < 0.5:
            return [f"    int {self.local('err')} = {DECOY_TOKEN};"]
        return [f"    log_event({DECOY_TOKEN});"]

    def guard(self, var: str, bound: int, ret: str) -> list[str]:
        style = int(self.rng.integers(0, 3))
        if style == 0:
            return [f"    if ({var} < 0) {{ return {ret}; }}".replace("return ;", "return;")]
        if style == 1:
            return [f"    if ({var} < 0 || {var} > {bound}) {{ return {ret}; }}".replace("return ;", "return;")]
        return [
            f"    if ({var} < 0) {{ return {ret}; }}".replace("return ;", "return;"),
            f"    if ({var} > {bound}) {{ return {ret}; }}".replace("return ;", "return;"),
        ]

    def upper_only_guard(self, var: str, bound: int, ret: str) -> list[str]:
        return [f"    if ({var} > {bound}) {{ return {ret}; }}".replace("return ;", "return;")]


def _template_index_write(w: _FunctionWriter, benign: bool, decoy: bool) -> str:
    var = str(w.rng.choice(_IDX_NAMES))
    bound = int(w.rng.choice([16, 32, 64, 128]))
    fill = w.rng.integers(1, 99)
    body: list[str] = []
    if decoy:
        body += w.decoy()
    body += w.filler()
    if benign:
        body += w.guard(var, bound, "-1")
    elif w.rng.random() < 0.4:
        body += w.upper_only_guard(var, bound, "-1")
    body.append(f"    buf[{var}] = {fill};")
    body.append(f"    return {var};")
    return f"int {w.name}(int {var}, char *buf) {{\n" + "\n".join(body) + "\n}\n"


def _template_size_call(w: _FunctionWriter, benign: bool, decoy: bool) -> str:
    var = str(w.rng.choice(_LEN_NAMES))
    bound = int(w.rng.choice([32, 64, 256]))
    callee = str(w.rng.choice(["memcpy", "strncpy", "read_bytes"]))
    body: list[str] = []
    if decoy:
        body += w.decoy()
    body += w.filler()
    if benign:
        body += w.guard(var, bound, "")
    elif w.rng.random() < 0.4:
        body += w.upper_only_guard(var, bound, "")
    body.append(f"    {callee}(dst, src, {var});")
    return f"void {w.name}(char *dst, char *src, int {var}) {{\n" + "\n".join(body) + "\n}\n"


def _template_format_call(w: _FunctionWriter, benign: bool, decoy: bool) -> str:
    var = str(w.rng.choice(_SEL_NAMES))
    bound = int(w.rng.choice([8, 16, 32]))
    body: list[str] = []
    if decoy:
        body += w.decoy()
    body += w.filler()
    if benign:
        body += w.guard(var, bound, "-1")
    body.append(f'    sprintf(buf, "%d", {var});')
    body.append("    return 0;")
    return f"int {w.name}(char *buf, int {var}) {{\n" + "\n".join(body) + "\n}\n"


def _template_loop_read(w: _FunctionWriter, benign: bool, decoy: bool) -> str:
    var = str(w.rng.choice(_IDX_NAMES))
    bound = int(w.rng.choice([8, 16, 24]))
    reps = int(w.rng.integers(2, 6))
    acc = w.local("sum")
    i = w.local("i")
    body: list[str] = [f"    int {acc} = 0;"]
    if decoy:
        body += w.decoy()
    body += w.filler()
    if benign:
        body += w.guard(var, bound, "0")
    elif w.rng.random() < 0.4:
        body += w.upper_only_guard(var, bound, "0")
    body.append(f"    for (int {i} = 0; {i} < {reps}; {i} = {i} + 1) {{")
    body.append(f"        {acc} = {acc} + tbl[{var}];")
    body.append("    }")
    body.append(f"    return {acc};")
    return f"int {w.name}(int *tbl, int {var}) {{\n" + "\n".join(body) + "\n}\n"


def _template_constant_sink(w: _FunctionWriter, benign: bool, decoy: bool) -> str:
    # benign because the dangerous slot is a constant; taintable by rule
    assert benign
    choice = int(w.rng.integers(0, 3))
    body: list[str] = []
    if decoy:
        body += w.decoy()
    body += w.filler()
    if choice == 0:
        body.append(f"    memcpy(dst, src, {int(w.rng.choice([8, 16, 32]))});")
        sig = f"void {w.name}(char *dst, char *src)"
    elif choice == 1:
        body.append('    strcpy(dst, "preset");')
        sig = f"void {w.name}(char *dst, char *src)"
    else:
        body.append("    net_cmd(dev, NULL);")
        sig = f"void {w.name}(char *dev)"
    return f"{sig} {{\n" + "\n".join(body) + "\n}\n"


_VULN_TEMPLATES = [_template_index_write, _template_size_call, _template_format_call, _template_loop_read]
_BENIGN_TEMPLATES = _VULN_TEMPLATES + [_template_constant_sink]


def gen_synthetic_corpus(cfg: SynthConfig | None = None) -> list[SourceFunction]:
    """Original/counterfactual pairs; 2*n_pairs functions, all of which parse
    and whose labels agree with the planted structural oracle."""
    cfg = cfg or SynthConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    out: list[SourceFunction] = []
    for i in range(cfg.n_pairs):
        benign = bool(rng.random() < cfg.benign_fraction)
        s = cfg.spurious_strength
        p_decoy = s + (1.0 - s) * 0.5 if benign else (1.0 - s) * 0.5
        decoy = bool(rng.random() < p_decoy)
        w = _FunctionWriter(rng, i)
        template = rng.choice(_BENIGN_TEMPLATES if benign else _VULN_TEMPLATES)
        source = template(w, benign, decoy)
        label = Label.BENIGN if benign else Label.VULNERABLE
        if oracle_label_source(source) is not label:
            raise AssertionError(f"template emitted a mislabeled function:\n{source}")
        orig = SourceFunction(
            id=f"synth-{i:05d}", source=source, label=label, provenance=Provenance.ORIGINAL
        )
        cand = generate_rule_based(orig, rng_seed=cfg.seed)
        verdict = validate_counterfactual(orig, cand)
        if not verdict.accepted:
            raise AssertionError(f"co-designed rule failed validation: {verdict.reason}")
        cf = SourceFunction(
            id=orig.id, source=cand.source, label=cand.target_label,
            provenance=Provenance.COUNTERFACTUAL,
        )
        out.extend([orig, cf])
    return out


def planted_node_ids(g: CodePropertyGraph) -> set[int]:
    """Node ids of the planted signal.

    Benign guarded graphs: the lower-bound-guard subtree. Vulnerable (and
    guardless benign) graphs: the dangerous-sink statement subtrees. Either
    way the parameter nodes feeding the region are included, since they are
    the taint/guard sources the classifier's data-flow view connects."""
    from .counterfactual import CMD_SINKS, COPY_SINKS, SIZE_SINKS
    from .lang.cpg import STATEMENT_KINDS

    children: dict[int, list[int]] = {}
    parent: dict[int, int] = {}
    for e in g.edges:
        if e.kind == "AST":
            children.setdefault(e.src, []).append(e.dst)
            parent[e.dst] = e.src

    def subtree(root: int) -> set[int]:
        seen = {root}
        stack = [root]
        while stack:
            for c in children.get(stack.pop(), []):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen

    def statement_ancestor(nid: int) -> int:
        cur = nid
        while cur in parent and g.nodes[cur].kind not in STATEMENT_KINDS:
            cur = parent[cur]
        return cur

    sinks = SIZE_SINKS | COPY_SINKS | CMD_SINKS
    guard_roots = []
    sink_roots = []
    for n in g.nodes:
        if n.kind == "If" and "<" in n.tokens and "0" in n.tokens:
            guard_roots.append(n.node_id)
        if n.kind == "Call" and n.tokens and n.tokens[0] in sinks:
            sink_roots.append(statement_ancestor(n.node_id))
        elif n.kind == "Index":
            sink_roots.append(statement_ancestor(n.node_id))

    out: set[int] = set()
    if g.label is Label.BENIGN and guard_roots:
        for r in guard_roots:
            out |= subtree(r)
    else:
        for r in sink_roots:
            out |= subtree(r)
    if not out:
        return set(range(len(g.nodes)))
    region_tokens: set[str] = set()
    for i in out:
        region_tokens.update(g.nodes[i].tokens)
    for n in g.nodes:
        if n.kind == "Param" and n.tokens[-1] in region_tokens:
            out.add(n.node_id)
    return out
