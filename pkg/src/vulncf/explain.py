"""Post-hoc attribution: per-node importance by learned soft masks, the
three subgraph walks, and the node-score dependency matrix.

The mask is optimized to keep the model's original prediction likely while
paying a sparsity price per kept node, so only prediction-critical nodes
retain high scores. Node removal means deleting the node and its incident
edges (induced subgraph); a feature-zeroing policy is available for
comparison.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import Label
from .lang.cpg import CodePropertyGraph, CpgEdge
from .model import CLASS_INDEX, CLASS_LABELS, Classifier
from .nn import backward, forward, graph_tensors, softmax
from .embedding import node_features


class DegenerateGraph(ValueError):
    pass


@dataclass
class ExplainerConfig:
    iterations: int = 300
    lam: float = 0.05      # sparsity pressure on kept mass
    beta: float = 0.01     # entropy pressure toward binary masks
    lr: float = 0.1
    seed: int = 0
    masking_policy: str = "remove"  # or "zero"
    # "log_odds" ascends the logit margin of the original prediction, which
    # is its log-odds: the same maximizer as the log-probability but with
    # gradients that survive model confidence; "log_prob" is the saturating
    # variant
    objective: str = "log_odds"

    def meta(self) -> dict:
        return {
            "iterations": self.iterations, "lam": self.lam, "beta": self.beta,
            "lr": self.lr, "seed": self.seed, "masking_policy": self.masking_policy,
            "objective": self.objective,
        }

    def logits_gradient(self, probs: np.ndarray, pred_idx: int) -> np.ndarray:
        if self.objective == "log_prob":
            d = -probs.copy()
            d[pred_idx] += 1.0
            return d
        d = np.full(2, -1.0)
        d[pred_idx] = 1.0
        return d


@dataclass
class AttributionResult:
    function_id: str
    prediction: Label
    confidence: float
    scores: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "function_id": self.function_id,
            "prediction": self.prediction.value,
            "confidence": self.confidence,
            "scores": [float(s) for s in self.scores],
            "meta": self.meta,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")


def attribute(clf: Classifier, g: CodePropertyGraph, cfg: ExplainerConfig | None = None) -> AttributionResult:
    """Per-node importance in [0,1] via gradient ascent on a soft feature mask."""
    cfg = cfg or ExplainerConfig()
    gt = clf.tensors_for(g)
    base = forward(gt, clf.params)
    probs = softmax(base.logits)
    pred_idx = int(np.argmax(probs))
    n = gt.n
    if n == 1:
        return AttributionResult(
            function_id=g.function_id, prediction=CLASS_LABELS[pred_idx],
            confidence=float(probs[pred_idx]), scores=np.ones(1), meta=cfg.meta(),
        )

    theta = np.zeros(n)  # mask starts at 0.5
    for _ in range(cfg.iterations):
        m = 1.0 / (1.0 + np.exp(-theta))
        cache = forward(gt, clf.params, mask=m, mask_messages=True)
        p = softmax(cache.logits)
        dlogits = cfg.logits_gradient(p, pred_idx)  # ascent on the original prediction
        _, dx, dmask = backward(cache, clf.params, dlogits)
        dj_dm = (dx * gt.x).sum(axis=1) + dmask - cfg.lam + cfg.beta * theta
        theta = theta + cfg.lr * dj_dm * m * (1.0 - m)
    scores = 1.0 / (1.0 + np.exp(-theta))
    return AttributionResult(
        function_id=g.function_id, prediction=CLASS_LABELS[pred_idx],
        confidence=float(probs[pred_idx]), scores=scores, meta=cfg.meta(),
    )


# --- induced subgraphs ------------------------------------------------------


def induced_subgraph(g: CodePropertyGraph, keep: list[int]) -> tuple[CodePropertyGraph, dict[int, int]]:
    """Subgraph on `keep` with re-densified node ids; returns (graph,
    old-id -> new-id map). The result is for model evaluation and is not
    required to satisfy full-graph invariants."""
    keep_sorted = sorted(set(keep))
    if not keep_sorted:
        raise DegenerateGraph("cannot induce an empty subgraph")
    remap = {old: new for new, old in enumerate(keep_sorted)}
    nodes = tuple(replace(g.nodes[old], node_id=remap[old]) for old in keep_sorted)
    edges = tuple(
        CpgEdge(remap[e.src], remap[e.dst], e.kind)
        for e in g.edges
        if e.src in remap and e.dst in remap
    )
    sub = CodePropertyGraph(
        function_id=g.function_id, label=g.label, provenance=g.provenance,
        nodes=nodes, edges=edges,
    )
    return sub, remap


def evaluate_subset(clf: Classifier, g: CodePropertyGraph, keep: list[int],
                    policy: str = "remove") -> tuple[Label, float, np.ndarray]:
    """Prediction, confidence and class probabilities on a node subset."""
    if policy == "zero":
        gt = clf.tensors_for(g)
        mask = np.zeros(gt.n)
        mask[sorted(set(keep))] = 1.0
        probs = softmax(forward(gt, clf.params, mask=mask).logits)
    else:
        sub, _ = induced_subgraph(g, keep)
        probs = softmax(forward(clf.tensors_for(sub), clf.params).logits)
    idx = int(np.argmax(probs))
    return CLASS_LABELS[idx], float(probs[idx]), probs


@dataclass
class SubgraphResult:
    mode: str
    node_ids: list[int]              # ordered as added/removed
    trace: list[dict]                # per step: node, prediction, confidence
    satisfied: bool                  # recovery reached / flip reached
    flag: str = ""                   # "never_recovered" / "never_flipped" when not satisfied

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode, "node_ids": self.node_ids, "trace": self.trace,
            "satisfied": self.satisfied, "flag": self.flag,
        }


def _score_order(scores: np.ndarray) -> list[int]:
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def positive_subgraph(clf: Classifier, g: CodePropertyGraph, scores: np.ndarray,
                      true_label: Label, policy: str = "remove") -> SubgraphResult:
    """Add nodes by descending score until the model first predicts the
    ground-truth label on the induced subgraph."""
    order = _score_order(scores)
    kept: list[int] = []
    trace: list[dict] = []
    for nid in order:
        kept.append(nid)
        pred, conf, _ = evaluate_subset(clf, g, kept, policy)
        trace.append({"node": nid, "prediction": pred.value, "confidence": conf})
        if pred is true_label:
            return SubgraphResult("positive", list(kept), trace, satisfied=True)
    return SubgraphResult("positive", list(kept), trace, satisfied=False, flag="never_recovered")


def negative_subgraph(clf: Classifier, g: CodePropertyGraph, scores: np.ndarray,
                      policy: str = "remove") -> SubgraphResult:
    """Remove nodes by descending score until the prediction first flips
    away from the full-graph prediction; at least one node always remains."""
    base_pred, _, _ = evaluate_subset(clf, g, list(range(len(g.nodes))), policy)
    order = _score_order(scores)
    removed: list[int] = []
    trace: list[dict] = []
    remaining = set(range(len(g.nodes)))
    for nid in order[: max(0, len(g.nodes) - 1)]:
        removed.append(nid)
        remaining.discard(nid)
        pred, conf, _ = evaluate_subset(clf, g, sorted(remaining), policy)
        trace.append({"node": nid, "prediction": pred.value, "confidence": conf})
        if pred is not base_pred:
            return SubgraphResult("negative", list(removed), trace, satisfied=True)
    return SubgraphResult("negative", list(removed), trace, satisfied=False, flag="never_flipped")


def optimal_subgraph(clf: Classifier, g: CodePropertyGraph, scores: np.ndarray,
                     policy: str = "remove") -> SubgraphResult:
    """The score-descending prefix whose induced subgraph maximizes
    confidence in the originally predicted class; ties pick the shorter
    prefix."""
    base_pred, _, _ = evaluate_subset(clf, g, list(range(len(g.nodes))), policy)
    target = CLASS_INDEX[base_pred]
    order = _score_order(scores)
    trace: list[dict] = []
    best_len, best_conf = 1, -1.0
    for size in range(1, len(order) + 1):
        pred, conf, probs = evaluate_subset(clf, g, order[:size], policy)
        target_conf = float(probs[target])
        trace.append({"node": order[size - 1], "prediction": pred.value, "confidence": target_conf})
        if target_conf > best_conf:
            best_conf = target_conf
            best_len = size
    return SubgraphResult("optimal", order[:best_len], trace, satisfied=True)


# --- node score dependency ---------------------------------------------------


@dataclass
class DependencyMatrix:
    function_id: str
    matrix: np.ndarray
    masking_policy: str

    def to_json_dict(self) -> dict:
        return {
            "function_id": self.function_id,
            "n": int(self.matrix.shape[0]),
            "masking_policy": self.masking_policy,
            "matrix": [[float(v) for v in row] for row in self.matrix],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DependencyMatrix":
        doc = json.loads(Path(path).read_text())
        m = np.asarray(doc["matrix"], dtype=np.float64)
        if m.shape != (doc["n"], doc["n"]):
            raise ValueError("dependency matrix shape does not match header")
        return cls(function_id=doc["function_id"], matrix=m, masking_policy=doc["masking_policy"])


def scores_with_node_removed(clf: Classifier, g: CodePropertyGraph, node_id: int,
                             cfg: ExplainerConfig) -> np.ndarray:
    """Attribution scores of the graph with one node masked out, mapped back
    to original node ids (the removed node gets 0)."""
    keep = [i for i in range(len(g.nodes)) if i != node_id]
    mapped = np.zeros(len(g.nodes))
    if cfg.masking_policy == "zero":
        sub = g
        sub_scores = _attribute_zeroed(clf, g, node_id, cfg)
        mapped[:] = sub_scores
        mapped[node_id] = 0.0
        return mapped
    sub, remap = induced_subgraph(g, keep)
    res = attribute(clf, sub, cfg)
    for old, new in remap.items():
        mapped[old] = res.scores[new]
    return mapped


def _attribute_zeroed(clf: Classifier, g: CodePropertyGraph, node_id: int,
                      cfg: ExplainerConfig) -> np.ndarray:
    gt = clf.tensors_for(g)
    gt.x[node_id, :] = 0.0
    base = forward(gt, clf.params)
    pred_idx = int(np.argmax(base.logits))
    theta = np.zeros(gt.n)
    for _ in range(cfg.iterations):
        m = 1.0 / (1.0 + np.exp(-theta))
        cache = forward(gt, clf.params, mask=m, mask_messages=True)
        p = softmax(cache.logits)
        dlogits = cfg.logits_gradient(p, pred_idx)
        _, dx, dmask = backward(cache, clf.params, dlogits)
        dj_dm = (dx * gt.x).sum(axis=1) + dmask - cfg.lam + cfg.beta * theta
        theta = theta + cfg.lr * dj_dm * m * (1.0 - m)
    return 1.0 / (1.0 + np.exp(-theta))


def dependency_matrix(clf: Classifier, g: CodePropertyGraph,
                      cfg: ExplainerConfig | None = None,
                      base_scores: np.ndarray | None = None) -> DependencyMatrix:
    """M[i][j] = |score_j with the graph intact - score_j with node i
    removed| for j != i; the diagonal carries each node's own base score."""
    cfg = cfg or ExplainerConfig()
    n = len(g.nodes)
    if n < 2:
        raise DegenerateGraph("dependency analysis needs at least two nodes")
    if base_scores is None:
        base_scores = attribute(clf, g, cfg).scores
    m = np.zeros((n, n))
    for i in range(n):
        removed_scores = scores_with_node_removed(clf, g, i, cfg)
        row = np.abs(base_scores - removed_scores)
        row[i] = base_scores[i]
        m[i] = row
    return DependencyMatrix(function_id=g.function_id, matrix=m, masking_policy=cfg.masking_policy)
